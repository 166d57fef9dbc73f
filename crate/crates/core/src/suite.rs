//! Seed sweeps over planning modes with paired aggregates.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::executive::run;
use crate::scenario::ScenarioConfig;
use crate::sim::{compute_metrics, MetricsSummary, PlanningMode, SimTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub metrics: MetricsSummary,
    pub trace: SimTrace,
}

#[derive(Debug, Clone)]
pub struct SuiteCell {
    pub seed: u64,
    pub mode: PlanningMode,
    pub agents: usize,
    pub outcome: Result<CellResult, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeAggregate {
    pub mode: PlanningMode,
    pub runs: usize,
    pub failed_runs: usize,
    pub all_finished_runs: usize,
    /// Per-run mean over agents, then over the seeds on which every mode
    /// finished all agents.
    pub time_to_goal_s: Option<MeanStd>,
    pub path_length_m: Option<MeanStd>,
    pub brake_events: Option<MeanStd>,
    pub min_interagent_distance_m: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub cells: Vec<SuiteCell>,
    pub aggregates: Vec<ModeAggregate>,
}

/// Agent layout of one suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentSource {
    /// The agents listed in the scenario.
    Scenario,
    /// `count` agents drawn per seed, shared by every mode of that seed.
    Random { count: usize, min_trip_m: f64 },
}

pub fn run_suite(config: &ScenarioConfig, seeds: &[u64], modes: &[PlanningMode], agents: AgentSource) -> SuiteReport {
    let jobs: Vec<(u64, PlanningMode)> = seeds.iter().flat_map(|s| modes.iter().map(move |m| (*s, *m))).collect();
    let cells: Vec<SuiteCell> = jobs
        .par_iter()
        .map(|&(seed, mode)| {
            let cfg = match agents {
                AgentSource::Scenario => Ok(config.clone()),
                AgentSource::Random { count, min_trip_m } => config.with_random_agents(count, seed, min_trip_m),
            };
            let outcome = cfg.map_err(|e| e.to_string()).and_then(|mut cfg| {
                cfg.master_seed = seed;
                cfg.mode = mode;
                let (scenario, params, _) = cfg.build().map_err(|e| e.to_string())?;
                let trace = run(&scenario, &params).map_err(|e| e.to_string())?;
                let metrics = compute_metrics(&trace).map_err(|e| e.to_string())?;
                Ok(CellResult { metrics, trace })
            });
            let n = outcome.as_ref().map(|c| c.metrics.agents.len()).unwrap_or(match agents {
                AgentSource::Scenario => config.agents.len(),
                AgentSource::Random { count, .. } => count,
            });
            SuiteCell { seed, mode, agents: n, outcome }
        })
        .collect();
    let aggregates = aggregate(&cells, modes);
    SuiteReport { cells, aggregates }
}

/// Seeds on which every listed mode ran and finished all agents.
pub fn paired_seeds(cells: &[SuiteCell], modes: &[PlanningMode]) -> BTreeSet<u64> {
    let seeds: BTreeSet<u64> = cells.iter().map(|c| c.seed).collect();
    seeds
        .into_iter()
        .filter(|s| {
            modes.iter().all(|m| {
                cells.iter().any(|c| {
                    c.seed == *s && c.mode == *m && c.outcome.as_ref().map(|r| r.metrics.all_finished()).unwrap_or(false)
                })
            })
        })
        .collect()
}

pub fn aggregate(cells: &[SuiteCell], modes: &[PlanningMode]) -> Vec<ModeAggregate> {
    let paired = paired_seeds(cells, modes);
    modes
        .iter()
        .map(|&mode| {
            let mine: Vec<&SuiteCell> = cells.iter().filter(|c| c.mode == mode).collect();
            let ok: Vec<&MetricsSummary> = mine.iter().filter_map(|c| c.outcome.as_ref().ok()).map(|r| &r.metrics).collect();
            let paired_ok: Vec<&MetricsSummary> = mine
                .iter()
                .filter(|c| paired.contains(&c.seed))
                .filter_map(|c| c.outcome.as_ref().ok())
                .map(|r| &r.metrics)
                .collect();
            let times: Vec<f64> = paired_ok.iter().filter_map(|m| m.mean_time_to_goal()).collect();
            let lengths: Vec<f64> = paired_ok.iter().filter_map(|m| m.mean_path_length()).collect();
            let brakes: Vec<f64> = ok.iter().map(|m| m.brake_event_count as f64).collect();
            ModeAggregate {
                mode,
                runs: mine.len(),
                failed_runs: mine.len() - ok.len(),
                all_finished_runs: ok.iter().filter(|m| m.all_finished()).count(),
                time_to_goal_s: MeanStd::of(&times),
                path_length_m: MeanStd::of(&lengths),
                brake_events: MeanStd::of(&brakes),
                min_interagent_distance_m: ok
                    .iter()
                    .map(|m| m.min_interagent_distance_m)
                    .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d)))),
            }
        })
        .collect()
}
