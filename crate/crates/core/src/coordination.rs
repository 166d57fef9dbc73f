//! Token-passing plan coordination inside one communication subgraph.
//!
//! Only the token winner replaces its committed plan in a round, and the
//! replacement must validate against every other member's committed plan,
//! so the committed set stays mutually conflict-free.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{inf_norm_dist, point_in_free_space, Point2, Workspace};
use crate::planner::{
    path_cost, planning_rng, polyline_length, rrt_plan, validate_plan, PlanCheck, PlannerError, PlannerParams,
    WaypointPlan,
};
use crate::sim::{at_goal, TokenMode};
use crate::visibility::{AgentId, Positions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordinationError {
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
    #[error("agent {0} has no position or goal")]
    MissingAgent(AgentId),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationState {
    members: Vec<AgentId>,
    token_holder: AgentId,
    committed: BTreeMap<AgentId, WaypointPlan>,
    /// Potential path improvement of the latest candidates, in meters.
    bids: BTreeMap<AgentId, f64>,
    mode: TokenMode,
    rounds: u64,
}

impl CoordinationState {
    pub fn members(&self) -> &[AgentId] {
        &self.members
    }
    pub fn token_holder(&self) -> AgentId {
        self.token_holder
    }
    pub fn committed(&self) -> &BTreeMap<AgentId, WaypointPlan> {
        &self.committed
    }
    pub fn committed_plan(&self, agent: AgentId) -> Option<&WaypointPlan> {
        self.committed.get(&agent)
    }
    pub fn bids(&self) -> &BTreeMap<AgentId, f64> {
        &self.bids
    }
    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    /// Every committed plan against all the others.
    pub fn check_mutual_validity(&self, world: &Workspace, params: &PlannerParams) -> Result<(), String> {
        let plans: Vec<WaypointPlan> = self.committed.values().cloned().collect();
        for p in &plans {
            if let PlanCheck::Violation { kind, iteration, detail } = validate_plan(p, world, &plans, params) {
                return Err(format!("agent {}: {kind:?} at iteration {iteration}: {detail}", p.agent));
            }
        }
        Ok(())
    }
}

/// Fresh state: everyone stopped where they stand, token with the smallest
/// id, no bids.
pub fn dma_init(
    members: &[AgentId],
    positions: &Positions,
    index: u64,
    world: &Workspace,
    params: &PlannerParams,
    mode: TokenMode,
) -> Result<CoordinationState, CoordinationError> {
    let mut members = members.to_vec();
    members.sort_unstable();
    members.dedup();
    let Some(&first) = members.first() else {
        return Err(CoordinationError::InvariantBreach("empty subgraph".into()));
    };
    let mut points = Vec::with_capacity(members.len());
    for m in &members {
        let p = *positions.get(m).ok_or(CoordinationError::MissingAgent(*m))?;
        if !point_in_free_space(p, world) {
            return Err(CoordinationError::InvariantBreach(format!(
                "agent {m} at ({}, {}) is not in free space",
                p.x, p.y
            )));
        }
        points.push((*m, p));
    }
    for (i, (a, p)) in points.iter().enumerate() {
        for (b, q) in &points[i + 1..] {
            let d = inf_norm_dist(*p, *q);
            if d < params.min_separation {
                return Err(CoordinationError::InvariantBreach(format!(
                    "agents {a} and {b} are {d} m apart (minimum {})",
                    params.min_separation
                )));
            }
        }
    }
    Ok(CoordinationState {
        token_holder: first,
        committed: points.iter().map(|(m, p)| (*m, WaypointPlan::stopped(*m, index, *p))).collect(),
        bids: members.iter().map(|m| (*m, 0.0)).collect(),
        members,
        mode,
        rounds: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub winner: AgentId,
    /// The winner's new committed plan, if it replaced the old one.
    pub committed: Option<WaypointPlan>,
}

/// Planning inputs shared by every member of a subgraph in one round.
pub struct RoundContext<'a> {
    pub world: &'a Workspace,
    pub goals: &'a BTreeMap<AgentId, Point2>,
    pub positions: &'a Positions,
    /// Current iteration index; new plans start here.
    pub index: u64,
    pub params: &'a PlannerParams,
    pub master_seed: u64,
}

/// One coordination round. Round robin hands the token to the next member
/// in id order (the first round goes to the initial holder) and only that
/// member plans. Bid-based has every member plan and picks the largest
/// improvement, ties to the lowest id.
pub fn dma_step(state: &mut CoordinationState, ctx: &RoundContext<'_>) -> Result<StepOutcome, CoordinationError> {
    let (winner, candidate) = match state.mode {
        TokenMode::RoundRobin => {
            let winner = if state.rounds == 0 {
                state.token_holder
            } else {
                let pos = state.members.iter().position(|m| *m == state.token_holder).unwrap_or(0);
                state.members[(pos + 1) % state.members.len()]
            };
            let candidate = plan_for(state, winner, ctx)?;
            (winner, candidate)
        }
        TokenMode::BidBased => {
            let mut candidates = BTreeMap::new();
            for m in state.members.clone() {
                let bid = match plan_for(state, m, ctx)? {
                    Some(plan) => {
                        let goal = ctx.goals[&m];
                        let improvement =
                            remaining_cost(&state.committed[&m], ctx.index, goal, ctx.params.goal_tolerance)
                                - path_cost(&plan);
                        candidates.insert(m, plan);
                        improvement
                    }
                    None => f64::NEG_INFINITY,
                };
                state.bids.insert(m, bid);
            }
            let winner = state
                .bids
                .iter()
                .filter(|(m, _)| candidates.contains_key(m))
                .fold(None::<(AgentId, f64)>, |best, (m, b)| match best {
                    Some((_, bb)) if bb >= *b => best,
                    _ => Some((*m, *b)),
                })
                .map(|(m, _)| m)
                .unwrap_or(state.token_holder);
            let candidate = candidates.remove(&winner);
            (winner, candidate)
        }
    };
    state.token_holder = winner;
    state.rounds += 1;

    let mut committed = None;
    if let Some(plan) = candidate {
        let others: Vec<WaypointPlan> = state
            .committed
            .iter()
            .filter(|(m, _)| **m != winner)
            .map(|(_, p)| p.clone())
            .collect();
        // Re-check before adoption; a rejected candidate is simply dropped.
        if validate_plan(&plan, ctx.world, &others, ctx.params).is_valid() {
            state.committed.insert(winner, plan.clone());
            committed = Some(plan);
        }
    }
    Ok(StepOutcome { winner, committed })
}

fn plan_for(
    state: &CoordinationState,
    agent: AgentId,
    ctx: &RoundContext<'_>,
) -> Result<Option<WaypointPlan>, CoordinationError> {
    let start = *ctx.positions.get(&agent).ok_or(CoordinationError::MissingAgent(agent))?;
    let goal = *ctx.goals.get(&agent).ok_or(CoordinationError::MissingAgent(agent))?;
    let constraints: Vec<WaypointPlan> = state
        .committed
        .iter()
        .filter(|(m, _)| **m != agent)
        .map(|(_, p)| p.clone())
        .collect();
    let mut rng = planning_rng(ctx.master_seed, agent, ctx.index);
    match rrt_plan(agent, start, goal, ctx.world, &constraints, ctx.index, ctx.params, &mut rng) {
        Ok(plan) => Ok(Some(plan)),
        Err(PlannerError::NoPathFound { .. }) => Ok(None),
        Err(e @ PlannerError::InvalidStart { .. }) => Err(CoordinationError::InvariantBreach(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

/// Length still to drive on a committed plan. A plan that never reaches the
/// goal costs infinity, so any goal-reaching candidate outbids it.
fn remaining_cost(plan: &WaypointPlan, index: u64, goal: Point2, eps: f64) -> f64 {
    if !at_goal(plan.last(), goal, eps) {
        return f64::INFINITY;
    }
    polyline_length(plan.remaining_from(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AARect;

    fn world() -> Workspace {
        Workspace::uninflated(AARect::new(0.0, 20.0, 0.0, 20.0).unwrap(), vec![]).unwrap()
    }

    fn params() -> PlannerParams {
        PlannerParams {
            max_rrt_iterations: 300,
            min_separation: 0.6,
            ..PlannerParams::default()
        }
    }

    fn pos(v: &[(u32, f64, f64)]) -> Positions {
        v.iter().map(|&(i, x, y)| (AgentId(i), Point2::new(x, y))).collect()
    }

    /// Advances all members along their committed plans to the next index.
    fn advance(state: &CoordinationState, index: u64, params: &PlannerParams) -> Positions {
        let t = params.timing().unwrap();
        state
            .committed()
            .iter()
            .map(|(a, p)| (*a, p.position_at_tick(t.tick_of_index(index), &t)))
            .collect()
    }

    #[test]
    fn singleton_always_wins() {
        let w = world();
        let p = params();
        let positions = pos(&[(4, 2.0, 2.0)]);
        let goals: BTreeMap<_, _> = [(AgentId(4), Point2::new(6.0, 2.0))].into_iter().collect();
        let mut s = dma_init(&[AgentId(4)], &positions, 0, &w, &p, TokenMode::RoundRobin).unwrap();
        assert_eq!(s.token_holder(), AgentId(4));
        let mut positions = positions;
        for k in 0..4 {
            let ctx = RoundContext { world: &w, goals: &goals, positions: &positions, index: k, params: &p, master_seed: 5 };
            let out = dma_step(&mut s, &ctx).unwrap();
            assert_eq!(out.winner, AgentId(4));
            positions = advance(&s, k + 1, &p);
        }
    }

    #[test]
    fn init_stops_everyone_and_gives_token_to_smallest() {
        let w = world();
        let positions = pos(&[(3, 5.0, 5.0), (1, 1.0, 1.0), (2, 9.0, 1.0)]);
        let ids = [AgentId(3), AgentId(1), AgentId(2)];
        let s = dma_init(&ids, &positions, 7, &w, &params(), TokenMode::RoundRobin).unwrap();
        assert_eq!(s.token_holder(), AgentId(1));
        assert_eq!(s.members(), &[AgentId(1), AgentId(2), AgentId(3)]);
        for (a, plan) in s.committed() {
            assert_eq!(plan.waypoints, vec![positions[a]]);
            assert_eq!(plan.start_index, 7);
        }
        assert!(s.bids().values().all(|b| *b == 0.0));
        s.check_mutual_validity(&w, &params()).unwrap();
    }

    #[test]
    fn init_rejects_close_members() {
        let positions = pos(&[(1, 1.0, 1.0), (2, 1.5, 1.0)]);
        let r = dma_init(&[AgentId(1), AgentId(2)], &positions, 0, &world(), &params(), TokenMode::RoundRobin);
        assert!(matches!(r, Err(CoordinationError::InvariantBreach(_))));
    }

    #[test]
    fn round_robin_alternates_and_keeps_plans_valid() {
        let w = world();
        let p = params();
        let mut positions = pos(&[(1, 2.0, 10.0), (2, 12.0, 10.0)]);
        let goals: BTreeMap<_, _> =
            [(AgentId(1), Point2::new(12.0, 10.0)), (AgentId(2), Point2::new(2.0, 10.0))].into_iter().collect();
        let mut s = dma_init(&[AgentId(1), AgentId(2)], &positions, 0, &w, &p, TokenMode::RoundRobin).unwrap();
        let mut winners = Vec::new();
        for k in 0..8 {
            let ctx = RoundContext { world: &w, goals: &goals, positions: &positions, index: k, params: &p, master_seed: 2 };
            let before = s.committed().clone();
            let out = dma_step(&mut s, &ctx).unwrap();
            winners.push(out.winner.0);
            let changed = s.committed().iter().filter(|(a, pl)| before[*a] != **pl).count();
            assert!(changed <= 1);
            s.check_mutual_validity(&w, &p).unwrap();
            positions = advance(&s, k + 1, &p);
        }
        assert_eq!(winners, vec![1, 2, 1, 2, 1, 2, 1, 2]);
    }

    #[test]
    fn equal_bids_go_to_lowest_id() {
        let w = world();
        let p = params();
        // Everyone already at their goal: every candidate is the stopped plan.
        let positions = pos(&[(5, 2.0, 2.0), (3, 8.0, 2.0), (9, 14.0, 2.0)]);
        let goals: BTreeMap<_, _> = positions.iter().map(|(a, p)| (*a, *p)).collect();
        let ids: Vec<AgentId> = positions.keys().copied().collect();
        let mut s = dma_init(&ids, &positions, 0, &w, &p, TokenMode::BidBased).unwrap();
        let ctx = RoundContext { world: &w, goals: &goals, positions: &positions, index: 0, params: &p, master_seed: 1 };
        let out = dma_step(&mut s, &ctx).unwrap();
        assert_eq!(out.winner, AgentId(3));
        assert!(s.bids().values().all(|b| *b == 0.0));
    }

    #[test]
    fn bid_based_prefers_goal_reaching_candidates() {
        let w = world();
        let p = params();
        let positions = pos(&[(1, 2.0, 2.0), (2, 8.0, 8.0)]);
        let goals: BTreeMap<_, _> =
            [(AgentId(1), Point2::new(2.0, 2.0)), (AgentId(2), Point2::new(12.0, 8.0))].into_iter().collect();
        let mut s = dma_init(&[AgentId(1), AgentId(2)], &positions, 0, &w, &p, TokenMode::BidBased).unwrap();
        let ctx = RoundContext { world: &w, goals: &goals, positions: &positions, index: 0, params: &p, master_seed: 1 };
        let out = dma_step(&mut s, &ctx).unwrap();
        assert_eq!(out.winner, AgentId(2));
        assert!(out.committed.is_some());
        s.check_mutual_validity(&w, &p).unwrap();
    }
}
