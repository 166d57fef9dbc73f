//! Single-integrator kinematics, goal tests, the run trace and the metrics
//! extracted from it.
//!
//! Safety distances are inf-norm; path lengths are Euclidean.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{inf_norm_dist, AARect, Point2};
use crate::visibility::AgentId;

/// Position after travelling `elapsed` seconds at `v_max` from `from`
/// straight toward `to`, stopping exactly on `to`.
pub fn track_position(from: Point2, to: Point2, v_max: f64, elapsed: f64) -> Point2 {
    let dist = from.euclidean(&to);
    let travel = v_max * elapsed;
    if travel >= dist {
        to
    } else {
        from.lerp(&to, travel / dist)
    }
}

/// One integration step of `dx/dt = u` with `|u| <= v_max`.
pub fn step_agent(position: Point2, target: Point2, v_max: f64, dt: f64) -> Point2 {
    track_position(position, target, v_max, dt)
}

/// Inside the closed inf-norm ball of side `eps` around the goal.
pub fn at_goal(position: Point2, goal: Point2, eps: f64) -> bool {
    inf_norm_dist(position, goal) <= 0.5 * eps
}

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanningMode {
    DecLos,
    Clairvoyant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    RoundRobin,
    BidBased,
}

/// Everything needed to interpret a trace without the originating config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: PlanningMode,
    pub master_seed: u64,
    pub delta_min_m: f64,
    pub delta_m: f64,
    pub goal_tolerance_m: f64,
    pub dt_s: f64,
    pub t_outer_s: f64,
    pub max_iterations: u64,
    pub v_max_mps: f64,
    pub bounds: AARect,
    pub physical_obstacles: Vec<AARect>,
    pub planning_obstacles: Vec<AARect>,
    pub agents: Vec<AgentId>,
    pub starts: Vec<Point2>,
    pub goals: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Commit { agent: AgentId, waypoints: usize, cost_m: f64 },
    Brake { agent: AgentId },
    GoalReached { agent: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub k: u64,
    /// In header agent order.
    pub positions: Vec<Point2>,
    pub partition: Vec<Vec<AgentId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub t: f64,
    pub k: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Tick(TickRecord),
    Event(EventRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Tick(TickRecord),
    Event(EventRecord),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

impl SimTrace {
    pub fn ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Tick(t) => Some(t),
            TraceRecord::Event(_) => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            TraceRecord::Tick(_) => None,
        })
    }

    /// Final outer iteration reached.
    pub fn final_iteration(&self) -> u64 {
        self.ticks().last().map(|t| t.k).unwrap_or(0)
    }

    /// Line-delimited JSON: one header line, then one line per record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let header = TraceLine::Header(self.header.clone());
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for r in &self.records {
            let line = match r {
                TraceRecord::Tick(t) => serde_json::to_string(&TraceLineRef::Tick(t)),
                TraceRecord::Event(e) => serde_json::to_string(&TraceLineRef::Event(e)),
            }
            .expect("record serializes");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|source| TraceError::Json { line: i + 1, source })?;
            match parsed {
                TraceLine::Header(h) => {
                    if header.is_some() {
                        return Err(TraceError::Malformed(format!("line {}: second header", i + 1)));
                    }
                    if h.schema_version != TRACE_SCHEMA_VERSION {
                        return Err(TraceError::Malformed(format!(
                            "unsupported schema version {}",
                            h.schema_version
                        )));
                    }
                    header = Some(h);
                }
                TraceLine::Tick(t) if header.is_some() => records.push(TraceRecord::Tick(t)),
                TraceLine::Event(e) if header.is_some() => records.push(TraceRecord::Event(e)),
                _ => return Err(TraceError::Malformed(format!("line {}: record before header", i + 1))),
            }
        }
        let header = header.ok_or_else(|| TraceError::Malformed("missing header".into()))?;
        Ok(SimTrace { header, records })
    }
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLineRef<'a> {
    Tick(&'a TickRecord),
    Event(&'a EventRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub agents: Vec<AgentId>,
    /// `None` for agents that never reached their goal.
    pub time_to_goal_s: Vec<Option<f64>>,
    pub path_length_m: Vec<f64>,
    pub min_interagent_distance_m: f64,
    pub brake_event_count: usize,
    pub finished: Vec<bool>,
    pub final_iteration: u64,
}

impl MetricsSummary {
    pub fn all_finished(&self) -> bool {
        self.finished.iter().all(|f| *f)
    }

    pub fn mean_time_to_goal(&self) -> Option<f64> {
        mean(self.time_to_goal_s.iter().flatten().copied())
    }

    pub fn mean_path_length(&self) -> Option<f64> {
        let finished = self
            .path_length_m
            .iter()
            .zip(&self.finished)
            .filter(|(_, f)| **f)
            .map(|(l, _)| *l);
        mean(finished)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Post-hoc metrics; reads nothing but the trace.
pub fn compute_metrics(trace: &SimTrace) -> Result<MetricsSummary, TraceError> {
    let h = &trace.header;
    let n = h.agents.len();
    if h.starts.len() != n || h.goals.len() != n {
        return Err(TraceError::Malformed("header agent lists differ in length".into()));
    }
    let index: BTreeMap<AgentId, usize> = h.agents.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut time_to_goal = vec![None; n];
    let mut path_length = vec![0.0; n];
    let mut min_dist = f64::INFINITY;
    let mut brakes = 0;
    let mut prev: Option<&[Point2]> = None;
    for r in &trace.records {
        match r {
            TraceRecord::Tick(t) => {
                if t.positions.len() != n {
                    return Err(TraceError::Malformed(format!("tick {}: wrong position count", t.tick)));
                }
                if let Some(p) = prev {
                    for i in 0..n {
                        path_length[i] += p[i].euclidean(&t.positions[i]);
                    }
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        min_dist = min_dist.min(inf_norm_dist(t.positions[i], t.positions[j]));
                    }
                }
                prev = Some(&t.positions);
            }
            TraceRecord::Event(e) => match &e.event {
                Event::Brake { agent } => {
                    lookup(&index, agent)?;
                    brakes += 1;
                }
                Event::GoalReached { agent } => {
                    let i = lookup(&index, agent)?;
                    if time_to_goal[i].is_none() {
                        time_to_goal[i] = Some(e.t);
                    }
                }
                Event::Commit { agent, .. } => {
                    lookup(&index, agent)?;
                }
            },
        }
    }
    if prev.is_none() {
        return Err(TraceError::Malformed("trace has no tick records".into()));
    }
    Ok(MetricsSummary {
        agents: h.agents.clone(),
        finished: time_to_goal.iter().map(Option::is_some).collect(),
        time_to_goal_s: time_to_goal,
        path_length_m: path_length,
        min_interagent_distance_m: min_dist,
        brake_event_count: brakes,
        final_iteration: trace.final_iteration(),
    })
}

fn lookup(index: &BTreeMap<AgentId, usize>, agent: &AgentId) -> Result<usize, TraceError> {
    index
        .get(agent)
        .copied()
        .ok_or_else(|| TraceError::Malformed(format!("event for unknown agent {agent}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceViolation {
    Separation { tick: u64, a: AgentId, b: AgentId, distance_m: f64 },
    CrossSubgraph { tick: u64, a: AgentId, b: AgentId, distance_m: f64 },
    PhysicalObstacle { tick: u64, agent: AgentId, obstacle: usize },
    PlanningObstacle { tick: u64, agent: AgentId },
    PartitionInvalid { tick: u64 },
    TickSpacing { tick: u64 },
}

/// Re-checks the safety invariants of a stored trace from its header alone:
/// pairwise separation, obstacle avoidance, cross-subgraph separation, a
/// well-formed partition on every tick and evenly spaced ticks.
pub fn certify_trace(trace: &SimTrace) -> Vec<TraceViolation> {
    let h = &trace.header;
    let mut out = Vec::new();
    let mut last_tick: Option<&TickRecord> = None;
    for t in trace.ticks() {
        if let Some(prev) = last_tick {
            let expected = (prev.tick + 1) as f64 * h.dt_s;
            if t.tick != prev.tick + 1 || (t.t - expected).abs() > 1e-9 || !(t.t > prev.t) {
                out.push(TraceViolation::TickSpacing { tick: t.tick });
            }
        }
        last_tick = Some(t);
        let partition = crate::visibility::SubgraphPartition::from_sets(t.partition.iter().cloned(), t.k);
        if partition.subgraphs != t.partition || !partition.is_valid_for(&h.agents) {
            out.push(TraceViolation::PartitionInvalid { tick: t.tick });
        }
        let group: Vec<Option<usize>> = h.agents.iter().map(|a| partition.subgraph_of(*a)).collect();
        for (i, p) in t.positions.iter().enumerate() {
            if let Some(o) = h.physical_obstacles.iter().position(|o| o.contains_closed(*p)) {
                out.push(TraceViolation::PhysicalObstacle { tick: t.tick, agent: h.agents[i], obstacle: o });
            }
            let outside_planning =
                h.bounds.contains_closed(*p) && !h.planning_obstacles.iter().any(|o| o.contains_closed(*p));
            if !outside_planning {
                out.push(TraceViolation::PlanningObstacle { tick: t.tick, agent: h.agents[i] });
            }
            for j in (i + 1)..t.positions.len() {
                let d = inf_norm_dist(*p, t.positions[j]);
                if d < h.delta_min_m {
                    out.push(TraceViolation::Separation { tick: t.tick, a: h.agents[i], b: h.agents[j], distance_m: d });
                }
                if group[i] != group[j] && !(d > h.delta_min_m) {
                    out.push(TraceViolation::CrossSubgraph { tick: t.tick, a: h.agents[i], b: h.agents[j], distance_m: d });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let p = step_agent(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), 1.0, 0.1);
        assert!((p.x - 0.1).abs() < 1e-15 && p.y == 0.0);
        assert_eq!(step_agent(Point2::new(4.95, 0.0), Point2::new(5.0, 0.0), 1.0, 0.1), Point2::new(5.0, 0.0));
        let here = Point2::new(3.0, 4.0);
        assert_eq!(step_agent(here, here, 1.0, 0.1), here);
    }

    #[test]
    fn at_goal_examples() {
        assert!(at_goal(Point2::new(16.5, 10.0), Point2::new(16.2, 10.4), 1.0));
        assert!(at_goal(Point2::new(2.0, 2.0), Point2::new(2.0, 2.0), 1.0));
        assert!(at_goal(Point2::new(2.5, 2.0), Point2::new(2.0, 2.0), 1.0));
        assert!(!at_goal(Point2::new(2.5000001, 2.0), Point2::new(2.0, 2.0), 1.0));
    }

    fn header(n: u32) -> TraceHeader {
        TraceHeader {
            schema_version: TRACE_SCHEMA_VERSION,
            scenario: "unit".into(),
            mode: PlanningMode::DecLos,
            master_seed: 0,
            delta_min_m: 0.8,
            delta_m: 0.501,
            goal_tolerance_m: 1.0,
            dt_s: 0.1,
            t_outer_s: 1.0,
            max_iterations: 10,
            v_max_mps: 1.0,
            bounds: AARect::new(0.0, 10.0, 0.0, 10.0).unwrap(),
            physical_obstacles: vec![],
            planning_obstacles: vec![],
            agents: (1..=n).map(AgentId).collect(),
            starts: (0..n).map(|i| Point2::new(i as f64 * 2.0, 1.0)).collect(),
            goals: (0..n).map(|i| Point2::new(i as f64 * 2.0, 1.0)).collect(),
        }
    }

    #[test]
    fn trivial_trace_metrics() {
        let trace = SimTrace {
            header: header(1),
            records: vec![
                TraceRecord::Tick(TickRecord {
                    tick: 0,
                    t: 0.0,
                    k: 0,
                    positions: vec![Point2::new(0.0, 1.0)],
                    partition: vec![vec![AgentId(1)]],
                }),
                TraceRecord::Event(EventRecord { tick: 0, t: 0.0, k: 0, event: Event::GoalReached { agent: AgentId(1) } }),
            ],
        };
        let m = compute_metrics(&trace).unwrap();
        assert_eq!(m.time_to_goal_s, vec![Some(0.0)]);
        assert_eq!(m.path_length_m, vec![0.0]);
        assert_eq!(m.brake_event_count, 0);
        assert!(m.all_finished());
        assert!(certify_trace(&trace).is_empty());
    }

    #[test]
    fn metrics_reject_malformed() {
        let trace = SimTrace { header: header(2), records: vec![] };
        assert!(matches!(compute_metrics(&trace), Err(TraceError::Malformed(_))));
        let trace = SimTrace {
            header: header(2),
            records: vec![TraceRecord::Tick(TickRecord {
                tick: 0,
                t: 0.0,
                k: 0,
                positions: vec![Point2::new(0.0, 1.0)],
                partition: vec![],
            })],
        };
        assert!(compute_metrics(&trace).is_err());
    }

    #[test]
    fn certify_flags_close_pairs() {
        let trace = SimTrace {
            header: header(2),
            records: vec![TraceRecord::Tick(TickRecord {
                tick: 0,
                t: 0.0,
                k: 0,
                positions: vec![Point2::new(1.0, 1.0), Point2::new(1.5, 1.0)],
                partition: vec![vec![AgentId(1)], vec![AgentId(2)]],
            })],
        };
        let v = certify_trace(&trace);
        assert!(v.iter().any(|v| matches!(v, TraceViolation::Separation { .. })));
        assert!(v.iter().any(|v| matches!(v, TraceViolation::CrossSubgraph { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let trace = SimTrace {
            header: header(2),
            records: vec![
                TraceRecord::Tick(TickRecord {
                    tick: 0,
                    t: 0.0,
                    k: 0,
                    positions: vec![Point2::new(0.1 + 0.2, 1.0), Point2::new(2.0, 1.0 / 3.0)],
                    partition: vec![vec![AgentId(1), AgentId(2)]],
                }),
                TraceRecord::Event(EventRecord { tick: 0, t: 0.0, k: 0, event: Event::Brake { agent: AgentId(2) } }),
            ],
        };
        let text = trace.to_jsonl_string();
        let back = SimTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, trace);
        assert!(text.lines().next().unwrap().contains("\"schema_version\":1"));
    }
}
