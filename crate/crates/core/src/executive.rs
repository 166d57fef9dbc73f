//! The outer planning loop: per-subgraph coordination rounds, inner motion
//! ticks, subgraph monitoring and emergency braking.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::{dma_init, dma_step, CoordinationError, CoordinationState, RoundContext, StepOutcome};
use crate::geometry::{inf_norm_dist, point_in_free_space, AARect, InflationMode, InflationSpec, Point2, Workspace};
use crate::planner::{path_cost, PlannerParams, Timing, WaypointPlan};
use crate::sim::{
    at_goal, Event, EventRecord, PlanningMode, SimTrace, TickRecord, TokenMode, TraceHeader, TraceRecord,
    TRACE_SCHEMA_VERSION,
};
use crate::visibility::{compute_subgraphs, AgentId, Positions, SubgraphPartition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub start: Point2,
    pub goal: Point2,
}

/// Static description of a run: the world and who goes where.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub bounds: AARect,
    pub physical_obstacles: Vec<AARect>,
    pub agents: Vec<AgentSpec>,
}

/// Tree-search knobs handed to every planner call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrtSettings {
    #[serde(default = "default_rrt_iterations")]
    pub max_rrt_iterations: usize,
    #[serde(default = "default_steer", rename = "steer_step_m")]
    pub steer_step: f64,
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    #[serde(default = "default_rewire", rename = "rewire_radius_m")]
    pub rewire_radius: f64,
}

fn default_rrt_iterations() -> usize {
    150
}
fn default_steer() -> f64 {
    1.0
}
fn default_goal_bias() -> f64 {
    0.1
}
fn default_rewire() -> f64 {
    2.0
}

impl Default for RrtSettings {
    fn default() -> Self {
        Self {
            max_rrt_iterations: default_rrt_iterations(),
            steer_step: default_steer(),
            goal_bias: default_goal_bias(),
            rewire_radius: default_rewire(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Required inf-norm separation between agents.
    pub delta_min: f64,
    /// Clearance every planning obstacle adds on each side of a physical one.
    pub delta: f64,
    /// Side of the goal ball.
    pub goal_tolerance: f64,
    pub dt: f64,
    pub t_outer: f64,
    /// Outer iteration budget.
    pub max_iterations: u64,
    pub v_max: f64,
    pub mode: PlanningMode,
    pub token_mode: TokenMode,
    pub inflation: InflationMode,
    pub master_seed: u64,
    pub rrt: RrtSettings,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl SimParams {
    pub fn planner_params(&self) -> PlannerParams {
        PlannerParams {
            max_rrt_iterations: self.rrt.max_rrt_iterations,
            steer_step: self.rrt.steer_step,
            goal_bias: self.rrt.goal_bias,
            rewire_radius: self.rrt.rewire_radius,
            v_max: self.v_max,
            t_outer: self.t_outer,
            dt: self.dt,
            goal_tolerance: self.goal_tolerance,
            min_separation: self.delta_min,
            horizon: self.max_iterations,
        }
    }

    pub fn inflation_spec(&self) -> Result<InflationSpec, ConfigError> {
        InflationSpec::new(2.0 * self.delta, self.inflation).map_err(|e| ConfigError::Invalid(format!("inflation: {e}")))
    }

    pub fn validate(&self) -> Result<Timing, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.delta_min > 0.0) || !self.delta_min.is_finite() {
            return bad(format!("delta_min_m = {} must be positive", self.delta_min));
        }
        if !(self.goal_tolerance > 0.0) {
            return bad(format!("goal_tolerance_m = {} must be positive", self.goal_tolerance));
        }
        let margin = 0.5 * self.delta_min + self.v_max * self.dt;
        if !(self.delta >= margin) {
            return bad(format!(
                "separation margin: delta_m = {} is below delta_min_m / 2 + v_max_mps * dt_s = {margin}",
                self.delta
            ));
        }
        self.inflation_spec()?;
        self.planner_params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Builds the inflated workspace and checks that every start and goal is
/// safe: inside free space and pairwise at least `delta_min` apart.
pub fn check_setup(scenario: &Scenario, params: &SimParams) -> Result<Workspace, ConfigError> {
    params.validate()?;
    let spec = params.inflation_spec()?;
    let world = Workspace::new(scenario.bounds, scenario.physical_obstacles.clone(), &spec)
        .map_err(|e| ConfigError::Invalid(format!("workspace: {e}")))?;
    if scenario.agents.is_empty() {
        return Err(ConfigError::Invalid("scenario has no agents".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for a in &scenario.agents {
        if !seen.insert(a.id) {
            return Err(ConfigError::Invalid(format!("agents: duplicate id {}", a.id)));
        }
        for (what, p) in [("start", a.start), ("goal", a.goal)] {
            if !p.is_finite() || !world.bounds().contains_closed(p) {
                return Err(ConfigError::Invalid(format!(
                    "safe initialization: agent {} {what} ({}, {}) outside the workspace",
                    a.id, p.x, p.y
                )));
            }
            if let Some(o) = world.blocking_obstacle(p) {
                return Err(ConfigError::Invalid(format!(
                    "safe initialization: agent {} {what} inside δ-obstacle {}",
                    a.id,
                    o + 1
                )));
            }
        }
    }
    for (i, a) in scenario.agents.iter().enumerate() {
        for b in &scenario.agents[i + 1..] {
            for (what, p, q) in [("starts", a.start, b.start), ("goals", a.goal, b.goal)] {
                let d = inf_norm_dist(p, q);
                if d < params.delta_min {
                    return Err(ConfigError::Invalid(format!(
                        "safe initialization: agents {} and {} {what} are {d} m apart (delta_min_m = {})",
                        a.id, b.id, params.delta_min
                    )));
                }
            }
        }
    }
    Ok(world)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Tracking,
    EmergencyStopped,
    AtGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRuntime {
    pub spec: AgentSpec,
    pub position: Point2,
    pub plan: WaypointPlan,
    pub status: AgentStatus,
    pub reached_goal: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invariant breach at tick {tick}: {detail}")]
    InvariantBreach {
        tick: u64,
        detail: String,
        /// Everything recorded up to and including the offending tick.
        trace: Box<SimTrace>,
    },
}

/// Coordination states keyed by their (sorted) member set.
pub type CoordinationStates = BTreeMap<Vec<AgentId>, CoordinationState>;

/// Brakes and re-initializes every subgraph of `new` that is not a subgraph
/// of `old`. A pure split also counts: both fragments are new sets.
#[allow(clippy::too_many_arguments)]
pub fn apply_subgraph_change(
    old: &SubgraphPartition,
    new: &SubgraphPartition,
    runtimes: &mut BTreeMap<AgentId, AgentRuntime>,
    index: u64,
    world: &Workspace,
    params: &PlannerParams,
    token_mode: TokenMode,
) -> Result<(Vec<Event>, Vec<CoordinationState>), CoordinationError> {
    let mut events = Vec::new();
    let mut states = Vec::new();
    for set in &new.subgraphs {
        if old.contains_set(set) {
            continue;
        }
        let mut positions = Positions::new();
        for a in set {
            let rt = runtimes.get_mut(a).ok_or(CoordinationError::MissingAgent(*a))?;
            rt.plan = WaypointPlan::stopped(*a, index, rt.position);
            if rt.status != AgentStatus::AtGoal {
                rt.status = AgentStatus::EmergencyStopped;
            }
            positions.insert(*a, rt.position);
            events.push(Event::Brake { agent: *a });
        }
        states.push(dma_init(set, &positions, index, world, params, token_mode)?);
    }
    Ok((events, states))
}

struct Recorder {
    trace: SimTrace,
    agents: Vec<AgentId>,
    dt: f64,
}

impl Recorder {
    fn tick(&mut self, tick: u64, k: u64, runtimes: &BTreeMap<AgentId, AgentRuntime>, partition: &SubgraphPartition) {
        self.trace.records.push(TraceRecord::Tick(TickRecord {
            tick,
            t: tick as f64 * self.dt,
            k,
            positions: self.agents.iter().map(|a| runtimes[a].position).collect(),
            partition: partition.subgraphs.clone(),
        }));
    }

    fn event(&mut self, tick: u64, k: u64, event: Event) {
        self.trace.records.push(TraceRecord::Event(EventRecord {
            tick,
            t: tick as f64 * self.dt,
            k,
            event,
        }));
    }
}

fn partition_for(mode: PlanningMode, positions: &Positions, world: &Workspace, epoch: u64) -> SubgraphPartition {
    match mode {
        PlanningMode::DecLos => compute_subgraphs(positions, world.physical_obstacles(), epoch),
        PlanningMode::Clairvoyant => SubgraphPartition::single(positions.keys().copied(), epoch),
    }
}

fn check_tick(
    runtimes: &BTreeMap<AgentId, AgentRuntime>,
    partition: &SubgraphPartition,
    world: &Workspace,
    delta_min: f64,
) -> Result<(), String> {
    let all: Vec<(&AgentId, &AgentRuntime)> = runtimes.iter().collect();
    for (i, (a, ra)) in all.iter().enumerate() {
        let p = ra.position;
        if let Some(o) = world.physical_obstacles().iter().position(|o| o.contains_closed(p)) {
            return Err(format!("agent {a} at ({}, {}) touches physical obstacle {}", p.x, p.y, o + 1));
        }
        if !point_in_free_space(p, world) {
            return Err(format!("agent {a} at ({}, {}) left free space", p.x, p.y));
        }
        for (b, rb) in &all[i + 1..] {
            let d = inf_norm_dist(p, rb.position);
            if d < delta_min {
                return Err(format!("agents {a} and {b} are {d} m apart (minimum {delta_min})"));
            }
            if partition.subgraph_of(**a) != partition.subgraph_of(**b) && !(d > delta_min) {
                return Err(format!("agents {a} and {b} in different subgraphs are only {d} m apart"));
            }
        }
    }
    Ok(())
}

/// Runs the scenario to completion (every agent in its goal ball) or until
/// the outer iteration budget is spent.
pub fn run(scenario: &Scenario, params: &SimParams) -> Result<SimTrace, RunError> {
    let world = check_setup(scenario, params)?;
    let pp = params.planner_params();
    let timing = pp.timing().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let tpi = timing.ticks_per_iteration;

    let mut specs = scenario.agents.clone();
    specs.sort_by_key(|a| a.id);
    let agents: Vec<AgentId> = specs.iter().map(|a| a.id).collect();
    let goals: BTreeMap<AgentId, Point2> = specs.iter().map(|a| (a.id, a.goal)).collect();
    let mut runtimes: BTreeMap<AgentId, AgentRuntime> = specs
        .iter()
        .map(|s| {
            (
                s.id,
                AgentRuntime {
                    spec: *s,
                    position: s.start,
                    plan: WaypointPlan::stopped(s.id, 0, s.start),
                    status: AgentStatus::Tracking,
                    reached_goal: false,
                },
            )
        })
        .collect();

    let header = TraceHeader {
        schema_version: TRACE_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        mode: params.mode,
        master_seed: params.master_seed,
        delta_min_m: params.delta_min,
        delta_m: params.delta,
        goal_tolerance_m: params.goal_tolerance,
        dt_s: params.dt,
        t_outer_s: params.t_outer,
        max_iterations: params.max_iterations,
        v_max_mps: params.v_max,
        bounds: *world.bounds(),
        physical_obstacles: world.physical_obstacles().to_vec(),
        planning_obstacles: world.planning_obstacles().to_vec(),
        agents: agents.clone(),
        starts: specs.iter().map(|s| s.start).collect(),
        goals: specs.iter().map(|s| s.goal).collect(),
    };
    let mut rec = Recorder {
        trace: SimTrace { header, records: Vec::new() },
        agents,
        dt: params.dt,
    };

    let positions_of = |rts: &BTreeMap<AgentId, AgentRuntime>| -> Positions {
        rts.iter().map(|(a, r)| (*a, r.position)).collect()
    };

    let mut k: u64 = 0;
    let mut partition = partition_for(params.mode, &positions_of(&runtimes), &world, 0);
    let mut states = CoordinationStates::new();
    {
        let positions = positions_of(&runtimes);
        for set in &partition.subgraphs {
            match dma_init(set, &positions, 0, &world, &pp, params.token_mode) {
                Ok(s) => {
                    states.insert(set.clone(), s);
                }
                Err(e) => {
                    return Err(RunError::InvariantBreach {
                        tick: 0,
                        detail: e.to_string(),
                        trace: Box::new(rec.trace),
                    })
                }
            }
        }
    }
    rec.tick(0, 0, &runtimes, &partition);
    if let Err(detail) = check_tick(&runtimes, &partition, &world, params.delta_min) {
        return Err(RunError::InvariantBreach { tick: 0, detail, trace: Box::new(rec.trace) });
    }
    mark_goals(&mut runtimes, &mut rec, 0, 0, params.goal_tolerance);

    let all_home = |rts: &BTreeMap<AgentId, AgentRuntime>| {
        rts.values().all(|r| at_goal(r.position, r.spec.goal, params.goal_tolerance))
    };

    while !all_home(&runtimes) && k < params.max_iterations {
        k += 1;
        let index = k - 1;
        let round_tick = timing.tick_of_index(index);
        let positions = positions_of(&runtimes);
        let ctx = RoundContext {
            world: &world,
            goals: &goals,
            positions: &positions,
            index,
            params: &pp,
            master_seed: params.master_seed,
        };
        let outcomes: Vec<Result<StepOutcome, CoordinationError>> =
            states.par_iter_mut().map(|(_, s)| dma_step(s, &ctx)).collect();
        for outcome in outcomes {
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) => {
                    return Err(RunError::InvariantBreach {
                        tick: round_tick,
                        detail: e.to_string(),
                        trace: Box::new(rec.trace),
                    })
                }
            };
            if let Some(plan) = outcome.committed {
                let rt = runtimes.get_mut(&outcome.winner).expect("winner is an agent");
                let cost = path_cost(&plan);
                rec.event(
                    round_tick,
                    k,
                    Event::Commit { agent: outcome.winner, waypoints: plan.waypoints.len(), cost_m: cost },
                );
                rt.plan = plan;
                if rt.status == AgentStatus::EmergencyStopped {
                    rt.status = AgentStatus::Tracking;
                }
            }
        }

        for n in 1..=tpi {
            let tick = round_tick + n;
            for rt in runtimes.values_mut() {
                rt.position = rt.plan.position_at_tick(tick, &timing);
            }
            let new_partition = partition_for(params.mode, &positions_of(&runtimes), &world, k);
            let mut brakes = Vec::new();
            if !new_partition.same_sets(&partition) {
                match apply_subgraph_change(&partition, &new_partition, &mut runtimes, index, &world, &pp, params.token_mode)
                {
                    Ok((events, fresh)) => {
                        states.retain(|set, _| new_partition.contains_set(set));
                        for s in fresh {
                            states.insert(s.members().to_vec(), s);
                        }
                        brakes = events;
                    }
                    Err(e) => {
                        rec.tick(tick, k, &runtimes, &new_partition);
                        return Err(RunError::InvariantBreach {
                            tick,
                            detail: e.to_string(),
                            trace: Box::new(rec.trace),
                        });
                    }
                }
            }
            partition = new_partition;
            rec.tick(tick, k, &runtimes, &partition);
            for e in brakes {
                rec.event(tick, k, e);
            }
            if let Err(detail) = check_tick(&runtimes, &partition, &world, params.delta_min) {
                return Err(RunError::InvariantBreach { tick, detail, trace: Box::new(rec.trace) });
            }
            mark_goals(&mut runtimes, &mut rec, tick, k, params.goal_tolerance);
        }
    }
    Ok(rec.trace)
}

fn mark_goals(runtimes: &mut BTreeMap<AgentId, AgentRuntime>, rec: &mut Recorder, tick: u64, k: u64, eps: f64) {
    for (a, rt) in runtimes.iter_mut() {
        if at_goal(rt.position, rt.spec.goal, eps) {
            rt.status = AgentStatus::AtGoal;
            if !rt.reached_goal {
                rt.reached_goal = true;
                rec.event(tick, k, Event::GoalReached { agent: *a });
            }
        } else if rt.status == AgentStatus::AtGoal {
            rt.status = AgentStatus::Tracking;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{certify_trace, compute_metrics};

    fn rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> AARect {
        AARect::new(xmin, xmax, ymin, ymax).unwrap()
    }

    pub(crate) fn params(mode: PlanningMode) -> SimParams {
        SimParams {
            delta_min: 0.8,
            delta: 0.501,
            goal_tolerance: 1.0,
            dt: 0.1,
            t_outer: 1.0,
            max_iterations: 200,
            v_max: 1.0,
            mode,
            token_mode: TokenMode::RoundRobin,
            inflation: InflationMode::Full,
            master_seed: 7,
            rrt: RrtSettings::default(),
        }
    }

    fn agent(id: u32, s: (f64, f64), g: (f64, f64)) -> AgentSpec {
        AgentSpec { id: AgentId(id), start: Point2::new(s.0, s.1), goal: Point2::new(g.0, g.1) }
    }

    #[test]
    fn start_at_goal_finishes_immediately() {
        let sc = Scenario {
            name: "one".into(),
            bounds: rect(0.0, 10.0, 0.0, 10.0),
            physical_obstacles: vec![],
            agents: vec![agent(1, (5.0, 5.0), (5.0, 5.0))],
        };
        let trace = run(&sc, &params(PlanningMode::DecLos)).unwrap();
        assert_eq!(trace.final_iteration(), 0);
        assert_eq!(trace.ticks().count(), 1);
        let m = compute_metrics(&trace).unwrap();
        assert_eq!(m.time_to_goal_s, vec![Some(0.0)]);
        assert_eq!(m.path_length_m, vec![0.0]);
        assert_eq!(m.brake_event_count, 0);
    }

    #[test]
    fn rejects_unsafe_setups() {
        let mut sc = Scenario {
            name: "bad".into(),
            bounds: rect(0.0, 20.0, 0.0, 20.0),
            physical_obstacles: vec![rect(8.0, 10.0, 8.0, 10.0)],
            agents: vec![agent(1, (2.0, 2.0), (15.0, 15.0)), agent(3, (10.3, 9.0), (2.0, 15.0))],
        };
        let err = check_setup(&sc, &params(PlanningMode::DecLos)).unwrap_err().to_string();
        assert!(err.contains("agent 3 start inside δ-obstacle 1"), "{err}");
        sc.agents[1].start = Point2::new(2.5, 2.0);
        let err = check_setup(&sc, &params(PlanningMode::DecLos)).unwrap_err().to_string();
        assert!(err.contains("starts are 0.5 m apart"), "{err}");
        let mut p = params(PlanningMode::DecLos);
        p.delta_min = 0.6;
        p.delta = 0.2;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("delta_min_m / 2"), "{err}");
    }

    #[test]
    fn unchanged_partition_emits_nothing() {
        let w = Workspace::uninflated(rect(0.0, 20.0, 0.0, 20.0), vec![]).unwrap();
        let p = SubgraphPartition::from_sets([vec![AgentId(1)], vec![AgentId(2)]], 0);
        let mut rts = BTreeMap::new();
        let (ev, st) =
            apply_subgraph_change(&p, &p, &mut rts, 0, &w, &PlannerParams::default(), TokenMode::RoundRobin).unwrap();
        assert!(ev.is_empty() && st.is_empty());
    }

    fn runtimes(v: &[(u32, f64, f64)]) -> BTreeMap<AgentId, AgentRuntime> {
        v.iter()
            .map(|&(i, x, y)| {
                let p = Point2::new(x, y);
                let plan = WaypointPlan { agent: AgentId(i), start_index: 0, waypoints: vec![p, Point2::new(x + 1.0, y)] };
                (
                    AgentId(i),
                    AgentRuntime {
                        spec: AgentSpec { id: AgentId(i), start: p, goal: Point2::new(19.0, 19.0) },
                        position: p,
                        plan,
                        status: AgentStatus::Tracking,
                        reached_goal: false,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn merge_brakes_both() {
        let w = Workspace::uninflated(rect(0.0, 20.0, 0.0, 20.0), vec![]).unwrap();
        let old = SubgraphPartition::from_sets([vec![AgentId(1)], vec![AgentId(2)]], 0);
        let new = SubgraphPartition::single([AgentId(1), AgentId(2)], 1);
        let mut rts = runtimes(&[(1, 2.0, 2.0), (2, 6.0, 2.0)]);
        let (ev, st) =
            apply_subgraph_change(&old, &new, &mut rts, 3, &w, &PlannerParams::default(), TokenMode::RoundRobin).unwrap();
        assert_eq!(ev, vec![Event::Brake { agent: AgentId(1) }, Event::Brake { agent: AgentId(2) }]);
        assert_eq!(st.len(), 1);
        for rt in rts.values() {
            assert_eq!(rt.status, AgentStatus::EmergencyStopped);
            assert_eq!(rt.plan.waypoints, vec![rt.position]);
        }
    }

    #[test]
    fn split_brakes_every_fragment() {
        let w = Workspace::uninflated(rect(0.0, 20.0, 0.0, 20.0), vec![]).unwrap();
        let old = SubgraphPartition::single([AgentId(1), AgentId(2), AgentId(3)], 0);
        let new = SubgraphPartition::from_sets([vec![AgentId(1), AgentId(2)], vec![AgentId(3)]], 1);
        let mut rts = runtimes(&[(1, 2.0, 2.0), (2, 6.0, 2.0), (3, 10.0, 2.0)]);
        let (ev, st) =
            apply_subgraph_change(&old, &new, &mut rts, 3, &w, &PlannerParams::default(), TokenMode::RoundRobin).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(st.len(), 2);
    }

    #[test]
    fn corner_merge_is_safe_and_brakes() {
        // An L-shaped wall hides the agents from each other until one rounds
        // the corner.
        let sc = Scenario {
            name: "corner".into(),
            bounds: rect(0.0, 20.0, 0.0, 20.0),
            physical_obstacles: vec![rect(5.0, 15.0, 5.0, 15.0)],
            agents: vec![agent(1, (2.0, 10.0), (17.0, 12.0)), agent(2, (10.0, 2.0), (12.0, 17.0))],
        };
        let mut brakes_seen = 0;
        for seed in 0..4 {
            let mut p = params(PlanningMode::DecLos);
            p.master_seed = seed;
            let trace = run(&sc, &p).unwrap();
            assert!(certify_trace(&trace).is_empty());
            let m = compute_metrics(&trace).unwrap();
            assert!(m.min_interagent_distance_m >= 0.8);
            brakes_seen += m.brake_event_count;
            // At each brake tick both agents are already in sight of each other.
            for e in trace.events() {
                if matches!(e.event, Event::Brake { .. }) {
                    let t = trace.ticks().find(|t| t.tick == e.tick).unwrap();
                    assert!(inf_norm_dist(t.positions[0], t.positions[1]) >= 0.8);
                }
            }
        }
        assert!(brakes_seen > 0);
    }

    #[test]
    fn clairvoyant_never_brakes() {
        let sc = Scenario {
            name: "corner".into(),
            bounds: rect(0.0, 20.0, 0.0, 20.0),
            physical_obstacles: vec![rect(5.0, 15.0, 5.0, 15.0)],
            agents: vec![agent(1, (2.0, 10.0), (10.0, 18.0)), agent(2, (10.0, 2.0), (18.0, 10.0))],
        };
        let trace = run(&sc, &params(PlanningMode::Clairvoyant)).unwrap();
        let m = compute_metrics(&trace).unwrap();
        assert_eq!(m.brake_event_count, 0);
        assert!(m.all_finished());
    }

    #[test]
    fn runs_are_reproducible() {
        let sc = Scenario {
            name: "swap".into(),
            bounds: rect(0.0, 20.0, 0.0, 20.0),
            physical_obstacles: vec![rect(9.0, 11.0, 4.0, 16.0)],
            agents: vec![agent(1, (3.0, 10.0), (17.0, 10.0)), agent(2, (17.0, 10.0), (3.0, 10.0))],
        };
        let p = params(PlanningMode::DecLos);
        let a = run(&sc, &p).unwrap().to_jsonl_string();
        let b = run(&sc, &p).unwrap().to_jsonl_string();
        assert_eq!(a, b);
    }
}
