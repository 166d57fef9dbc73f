//! Single-agent RRT* in the inflated workspace with space-time separation
//! constraints against other agents' committed plans.
//!
//! Time is discretized in outer iterations (one waypoint each) and inner
//! ticks of length `dt`. Between two waypoints an agent drives straight at
//! `v_max`, arrives early if the hop is short, and waits. Tree nodes carry
//! their iteration index, so every edge spans exactly one iteration and can
//! be checked tick by tick against the constraint plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{inf_norm_dist, point_in_free_space, Point2, Workspace};
use crate::sim::{at_goal, track_position};
use crate::visibility::AgentId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("no path found within {iterations} RRT iterations")]
    NoPathFound { iterations: usize },
    #[error("invalid start for agent {agent}: {reason}")]
    InvalidStart { agent: AgentId, reason: String },
    #[error("invalid planner parameters: {0}")]
    Params(String),
}

/// Clock shared by the planner, validator and executive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub dt: f64,
    pub ticks_per_iteration: u64,
    pub v_max: f64,
}

impl Timing {
    pub fn t_outer(&self) -> f64 {
        self.dt * self.ticks_per_iteration as f64
    }

    /// Longest hop between consecutive waypoints.
    pub fn max_hop(&self) -> f64 {
        self.v_max * self.t_outer()
    }

    pub fn tick_of_index(&self, index: u64) -> u64 {
        index * self.ticks_per_iteration
    }

    /// Outer iteration a tick belongs to (tick `n` of iteration `k` lies in
    /// `((k-1) T, k T]`).
    pub fn iteration_of_tick(&self, tick: u64) -> u64 {
        tick.div_ceil(self.ticks_per_iteration)
    }

    pub fn time_of_tick(&self, tick: u64) -> f64 {
        tick as f64 * self.dt
    }

    /// Position `n` ticks into the hop `from` -> `to` (`1 <= n <= ticks`).
    pub fn hop_position(&self, from: Point2, to: Point2, n: u64) -> Point2 {
        if n >= self.ticks_per_iteration {
            to
        } else {
            track_position(from, to, self.v_max, n as f64 * self.dt)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub max_rrt_iterations: usize,
    pub steer_step: f64,
    pub goal_bias: f64,
    pub rewire_radius: f64,
    pub v_max: f64,
    pub t_outer: f64,
    pub dt: f64,
    /// Side of the goal inf-norm ball.
    pub goal_tolerance: f64,
    pub min_separation: f64,
    /// Last iteration index a plan may reach.
    pub horizon: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            max_rrt_iterations: 150,
            steer_step: 1.0,
            goal_bias: 0.1,
            rewire_radius: 2.0,
            v_max: 1.0,
            t_outer: 1.0,
            dt: 0.1,
            goal_tolerance: 1.0,
            min_separation: 0.8,
            horizon: 200,
        }
    }
}

impl PlannerParams {
    pub fn timing(&self) -> Result<Timing, PlannerError> {
        if !(self.dt > 0.0) || !(self.t_outer > 0.0) || !(self.v_max > 0.0) {
            return Err(PlannerError::Params("dt, T_outer and v_max must be positive".into()));
        }
        let ratio = self.t_outer / self.dt;
        let ticks = ratio.round();
        if ticks < 1.0 || (ratio - ticks).abs() > 1e-9 * ratio.max(1.0) {
            return Err(PlannerError::Params(format!(
                "dt = {} does not divide T_outer = {}",
                self.dt, self.t_outer
            )));
        }
        Ok(Timing {
            dt: self.dt,
            ticks_per_iteration: ticks as u64,
            v_max: self.v_max,
        })
    }

    pub fn validate(&self) -> Result<Timing, PlannerError> {
        if self.max_rrt_iterations < 1 {
            return Err(PlannerError::Params("max_rrt_iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(PlannerError::Params(format!("goal_bias {} not in [0, 1)", self.goal_bias)));
        }
        if !(self.steer_step > 0.0) || !(self.rewire_radius > 0.0) || !(self.goal_tolerance > 0.0) {
            return Err(PlannerError::Params(
                "steer_step, rewire_radius and goal_tolerance must be positive".into(),
            ));
        }
        if !(self.min_separation >= 0.0) {
            return Err(PlannerError::Params("min_separation must be non-negative".into()));
        }
        self.timing()
    }
}

/// Timed waypoints: `waypoints[i]` is the position at iteration
/// `start_index + i`. Past the last waypoint the agent is parked there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub agent: AgentId,
    pub start_index: u64,
    pub waypoints: Vec<Point2>,
}

impl WaypointPlan {
    pub fn stopped(agent: AgentId, index: u64, position: Point2) -> Self {
        Self {
            agent,
            start_index: index,
            waypoints: vec![position],
        }
    }

    pub fn first(&self) -> Point2 {
        self.waypoints[0]
    }

    pub fn last(&self) -> Point2 {
        *self.waypoints.last().expect("plans are never empty")
    }

    /// Iteration index of the final waypoint.
    pub fn end_index(&self) -> u64 {
        self.start_index + self.waypoints.len().saturating_sub(1) as u64
    }

    pub fn position_at_tick(&self, tick: u64, timing: &Timing) -> Point2 {
        let start_tick = timing.tick_of_index(self.start_index);
        if tick <= start_tick {
            return self.first();
        }
        let rel = tick - start_tick;
        let hop = (rel - 1) / timing.ticks_per_iteration;
        let n = rel - hop * timing.ticks_per_iteration;
        let hop = hop as usize;
        if hop + 1 >= self.waypoints.len() {
            return self.last();
        }
        timing.hop_position(self.waypoints[hop], self.waypoints[hop + 1], n)
    }

    /// Waypoints from iteration `index` on.
    pub fn remaining_from(&self, index: u64) -> &[Point2] {
        let skip = index.saturating_sub(self.start_index) as usize;
        &self.waypoints[skip.min(self.waypoints.len() - 1)..]
    }
}

/// Sum of Euclidean hop lengths.
pub fn path_cost(plan: &WaypointPlan) -> f64 {
    polyline_length(&plan.waypoints)
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].euclidean(&w[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Empty,
    HopTooLong,
    OutOfBounds,
    ObstacleContact,
    Separation,
    InvalidTiming,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanCheck {
    Valid,
    Violation {
        kind: ViolationKind,
        iteration: u64,
        detail: String,
    },
}

impl PlanCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, PlanCheck::Valid)
    }
}

/// Exhaustive re-check of a plan: hop lengths, free space at every waypoint
/// and every tick, and inf-norm separation from every constraint plan of a
/// different agent at every tick until all plans have ended.
pub fn validate_plan(plan: &WaypointPlan, world: &Workspace, constraints: &[WaypointPlan], params: &PlannerParams) -> PlanCheck {
    let timing = match params.timing() {
        Ok(t) => t,
        Err(e) => {
            return PlanCheck::Violation {
                kind: ViolationKind::InvalidTiming,
                iteration: plan.start_index,
                detail: e.to_string(),
            }
        }
    };
    if plan.waypoints.is_empty() {
        return PlanCheck::Violation {
            kind: ViolationKind::Empty,
            iteration: plan.start_index,
            detail: "plan has no waypoints".into(),
        };
    }
    let max_hop = params.v_max * params.t_outer;
    for (i, w) in plan.waypoints.windows(2).enumerate() {
        let hop = w[0].euclidean(&w[1]);
        if hop > max_hop {
            return PlanCheck::Violation {
                kind: ViolationKind::HopTooLong,
                iteration: plan.start_index + i as u64 + 1,
                detail: format!("hop of {hop} m exceeds {max_hop} m"),
            };
        }
    }
    for (i, w) in plan.waypoints.iter().enumerate() {
        if let Some(v) = free_space_violation(*w, world, plan.start_index + i as u64) {
            return v;
        }
    }
    let start_tick = timing.tick_of_index(plan.start_index);
    let end_tick = timing.tick_of_index(plan.end_index());
    for tick in start_tick..=end_tick {
        let p = plan.position_at_tick(tick, &timing);
        if let Some(v) = free_space_violation(p, world, timing.iteration_of_tick(tick)) {
            return v;
        }
    }
    let others: Vec<&WaypointPlan> = constraints.iter().filter(|c| c.agent != plan.agent).collect();
    let last_tick = others
        .iter()
        .map(|c| timing.tick_of_index(c.end_index()))
        .fold(end_tick, u64::max);
    for tick in start_tick..=last_tick {
        let p = plan.position_at_tick(tick, &timing);
        for c in &others {
            let q = c.position_at_tick(tick, &timing);
            let d = inf_norm_dist(p, q);
            if d < params.min_separation {
                return PlanCheck::Violation {
                    kind: ViolationKind::Separation,
                    iteration: timing.iteration_of_tick(tick),
                    detail: format!(
                        "agent {} and agent {} are {d} m apart at tick {tick} (minimum {})",
                        plan.agent, c.agent, params.min_separation
                    ),
                };
            }
        }
    }
    PlanCheck::Valid
}

fn free_space_violation(p: Point2, world: &Workspace, iteration: u64) -> Option<PlanCheck> {
    if !world.bounds().contains_closed(p) {
        return Some(PlanCheck::Violation {
            kind: ViolationKind::OutOfBounds,
            iteration,
            detail: format!("({}, {}) outside the workspace", p.x, p.y),
        });
    }
    if !point_in_free_space(p, world) {
        return Some(PlanCheck::Violation {
            kind: ViolationKind::ObstacleContact,
            iteration,
            detail: format!("({}, {}) touches a planning obstacle", p.x, p.y),
        });
    }
    None
}

/// Deterministic per-(agent, iteration) random stream.
pub fn planning_rng(master_seed: u64, agent: AgentId, iteration: u64) -> ChaCha8Rng {
    let mut z = master_seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [agent.0 as u64, iteration] {
        z = splitmix(z ^ splitmix(v));
    }
    ChaCha8Rng::seed_from_u64(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeCheck {
    Free,
    Obstacle,
    Conflict,
}

struct ConstraintView<'a> {
    plans: Vec<&'a WaypointPlan>,
    timing: Timing,
    min_sep: f64,
    /// After this tick every constraint is parked.
    settled_tick: u64,
}

impl<'a> ConstraintView<'a> {
    fn new(agent: AgentId, constraints: &'a [WaypointPlan], timing: Timing, min_sep: f64) -> Self {
        let plans: Vec<&WaypointPlan> = constraints.iter().filter(|c| c.agent != agent).collect();
        let settled_tick = plans.iter().map(|c| timing.tick_of_index(c.end_index())).max().unwrap_or(0);
        Self {
            plans,
            timing,
            min_sep,
            settled_tick,
        }
    }

    fn clear_at(&self, p: Point2, tick: u64) -> bool {
        self.plans
            .iter()
            .all(|c| inf_norm_dist(p, c.position_at_tick(tick, &self.timing)) >= self.min_sep)
    }

    /// Hop from `from` (at iteration `index - 1`) to `to` (at `index`).
    fn hop_clear(&self, from: Point2, to: Point2, index: u64) -> bool {
        let base = self.timing.tick_of_index(index - 1);
        (1..=self.timing.ticks_per_iteration).all(|n| self.clear_at(self.timing.hop_position(from, to, n), base + n))
    }

    /// Parked at `p` from iteration `index` on.
    fn parking_clear(&self, p: Point2, index: u64) -> bool {
        let from = self.timing.tick_of_index(index);
        (from..=self.settled_tick.max(from)).all(|tick| self.clear_at(p, tick))
    }
}

#[derive(Debug, Clone)]
struct Node {
    pos: Point2,
    index: u64,
    parent: Option<usize>,
    cost: f64,
}

struct Tree {
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn push(&mut self, node: Node) -> usize {
        let id = self.nodes.len();
        if let Some(p) = node.parent {
            self.children[p].push(id);
        }
        self.nodes.push(node);
        self.children.push(Vec::new());
        id
    }

    fn reparent(&mut self, node: usize, new_parent: usize, new_cost: f64) {
        if let Some(old) = self.nodes[node].parent {
            self.children[old].retain(|c| *c != node);
        }
        self.children[new_parent].push(node);
        self.nodes[node].parent = Some(new_parent);
        let delta = new_cost - self.nodes[node].cost;
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            self.nodes[n].cost += delta;
            stack.extend(self.children[n].iter().copied());
        }
    }

    fn path_to(&self, mut id: usize) -> Vec<Point2> {
        let mut out = vec![self.nodes[id].pos];
        while let Some(p) = self.nodes[id].parent {
            out.push(self.nodes[p].pos);
            id = p;
        }
        out.reverse();
        out
    }
}

/// Plans a timed path from `start` (at iteration `start_index`) into the
/// goal ball, avoiding planning obstacles and keeping `min_separation` from
/// every constraint plan at every tick, including after arrival.
///
/// Every extension advances one iteration. When a hop is rejected only
/// because of another agent, the planner tries a wait-in-place node at the
/// nearest vertex instead. The best goal vertex found within
/// `max_rrt_iterations` samples is returned.
#[allow(clippy::too_many_arguments)]
pub fn rrt_plan<R: Rng>(
    agent: AgentId,
    start: Point2,
    goal: Point2,
    world: &Workspace,
    constraints: &[WaypointPlan],
    start_index: u64,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<WaypointPlan, PlannerError> {
    let timing = params.validate()?;
    if !point_in_free_space(start, world) {
        return Err(PlannerError::InvalidStart {
            agent,
            reason: format!("({}, {}) is not in free space", start.x, start.y),
        });
    }
    let view = ConstraintView::new(agent, constraints, timing, params.min_separation);
    if !view.clear_at(start, timing.tick_of_index(start_index)) {
        return Err(PlannerError::InvalidStart {
            agent,
            reason: "start violates separation from a committed plan".into(),
        });
    }
    let in_goal = |p: Point2| at_goal(p, goal, params.goal_tolerance);
    if in_goal(start) && view.parking_clear(start, start_index) {
        return Ok(WaypointPlan::stopped(agent, start_index, start));
    }

    // Shrink a hair so a steered hop never exceeds the limit by rounding.
    let step = params.steer_step.min(timing.max_hop()) * (1.0 - 1e-12);
    let max_hop = params.v_max * params.t_outer;
    let bounds = *world.bounds();
    let edge = |from: Point2, to: Point2, index: u64| -> EdgeCheck {
        if index > params.horizon || from.euclidean(&to) > max_hop {
            return EdgeCheck::Obstacle;
        }
        if !point_in_free_space(to, world) || !world.segment_free(from, to) {
            return EdgeCheck::Obstacle;
        }
        if view.hop_clear(from, to, index) {
            EdgeCheck::Free
        } else {
            EdgeCheck::Conflict
        }
    };

    let mut tree = Tree {
        nodes: Vec::new(),
        children: Vec::new(),
    };
    tree.push(Node {
        pos: start,
        index: start_index,
        parent: None,
        cost: 0.0,
    });
    let mut goal_nodes: Vec<usize> = Vec::new();

    for _ in 0..params.max_rrt_iterations {
        let sample = if rng.random::<f64>() < params.goal_bias {
            goal
        } else {
            Point2::new(
                rng.random_range(bounds.xmin()..=bounds.xmax()),
                rng.random_range(bounds.ymin()..=bounds.ymax()),
            )
        };
        let Some(nearest) = nearest_extendable(&tree, sample, params.horizon) else {
            break;
        };
        let from = tree.nodes[nearest].pos;
        let d = from.euclidean(&sample);
        let new_pos = if d <= step { sample } else { from.lerp(&sample, step / d) };

        // Choose the cheapest valid parent among nearby vertices.
        let mut near: Vec<(f64, usize)> = tree
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.index < params.horizon)
            .filter_map(|(i, n)| {
                let hop = n.pos.euclidean(&new_pos);
                (hop <= params.rewire_radius.max(step) && hop <= max_hop).then_some((n.cost + hop, i))
            })
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen = None;
        let mut nearest_result = None;
        for &(cost, i) in &near {
            let n = &tree.nodes[i];
            let check = edge(n.pos, new_pos, n.index + 1);
            if i == nearest {
                nearest_result = Some(check);
            }
            if check == EdgeCheck::Free {
                chosen = Some((i, cost));
                break;
            }
        }
        let Some((parent, cost)) = chosen else {
            let blocked_by_agent = nearest_result.unwrap_or_else(|| edge(from, new_pos, tree.nodes[nearest].index + 1)) == EdgeCheck::Conflict;
            if blocked_by_agent {
                let idx = tree.nodes[nearest].index + 1;
                if edge(from, from, idx) == EdgeCheck::Free {
                    let cost = tree.nodes[nearest].cost;
                    let id = tree.push(Node {
                        pos: from,
                        index: idx,
                        parent: Some(nearest),
                        cost,
                    });
                    consider_goal(&tree, id, &in_goal, &view, &mut goal_nodes);
                }
            }
            continue;
        };
        let index = tree.nodes[parent].index + 1;
        let id = tree.push(Node {
            pos: new_pos,
            index,
            parent: Some(parent),
            cost,
        });
        consider_goal(&tree, id, &in_goal, &view, &mut goal_nodes);

        // Rewire vertices one iteration later through the new vertex; their
        // own timing is unchanged so their subtrees stay valid.
        for &(_, i) in &near {
            if i == parent || tree.nodes[i].index != index + 1 {
                continue;
            }
            let hop = new_pos.euclidean(&tree.nodes[i].pos);
            let via = cost + hop;
            if via < tree.nodes[i].cost && edge(new_pos, tree.nodes[i].pos, index + 1) == EdgeCheck::Free {
                tree.reparent(i, id, via);
            }
        }
    }

    // Rewiring may have lowered costs after a vertex was accepted.
    let goal_node = goal_nodes
        .iter()
        .copied()
        .min_by(|a, b| tree.nodes[*a].cost.total_cmp(&tree.nodes[*b].cost).then(a.cmp(b)))
        .ok_or(PlannerError::NoPathFound {
        iterations: params.max_rrt_iterations,
    })?;
    Ok(WaypointPlan {
        agent,
        start_index,
        waypoints: tree.path_to(goal_node),
    })
}

fn consider_goal(
    tree: &Tree,
    id: usize,
    in_goal: &impl Fn(Point2) -> bool,
    view: &ConstraintView<'_>,
    goals: &mut Vec<usize>,
) {
    let n = &tree.nodes[id];
    if in_goal(n.pos) && view.parking_clear(n.pos, n.index) {
        goals.push(id);
    }
}

fn nearest_extendable(tree: &Tree, p: Point2, horizon: u64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.index >= horizon {
            continue;
        }
        let d = n.pos.euclidean(&p);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}
