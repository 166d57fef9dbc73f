//! Scenario files: TOML with explicit units in the field names.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::executive::{check_setup, AgentSpec, ConfigError, RrtSettings, Scenario, SimParams};
use crate::geometry::{inf_norm_dist, point_in_free_space, AARect, InflationMode, Point2, Workspace};
use crate::sim::{PlanningMode, TokenMode};
use crate::visibility::AgentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    /// `[xmin, xmax, ymin, ymax]`.
    pub bounds_m: [f64; 4],
    #[serde(default)]
    pub obstacles_m: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: u32,
    pub start_m: [f64; 2],
    pub goal_m: [f64; 2],
}

fn default_epsilon_c() -> f64 {
    0.001
}
fn default_goal_tolerance() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.1
}
fn default_t_outer() -> f64 {
    1.0
}
fn default_max_iterations() -> u64 {
    200
}
fn default_v_max() -> f64 {
    1.0
}
fn default_mode() -> PlanningMode {
    PlanningMode::DecLos
}
fn default_token_mode() -> TokenMode {
    TokenMode::RoundRobin
}
fn default_inflation() -> InflationMode {
    InflationMode::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_mode")]
    pub mode: PlanningMode,
    #[serde(default = "default_token_mode")]
    pub token_mode: TokenMode,
    pub delta_min_m: f64,
    /// Defaults to `delta_min_m / 2 + v_max_mps * dt_s + epsilon_c_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_m: Option<f64>,
    #[serde(default = "default_epsilon_c")]
    pub epsilon_c_m: f64,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance_m: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_t_outer")]
    pub t_outer_s: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default = "default_v_max")]
    pub v_max_mps: f64,
    #[serde(default = "default_inflation")]
    pub inflation: InflationMode,
    #[serde(default)]
    pub planner: RrtSettings,
    pub workspace: WorkspaceConfig,
    pub agents: Vec<AgentConfig>,
}

fn rect(field: &str, r: [f64; 4]) -> Result<AARect, ConfigError> {
    AARect::new(r[0], r[1], r[2], r[3]).map_err(|e| ConfigError::Invalid(format!("{field}: {e}")))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn delta(&self) -> f64 {
        self.delta_m
            .unwrap_or(0.5 * self.delta_min_m + self.v_max_mps * self.dt_s + self.epsilon_c_m)
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            delta_min: self.delta_min_m,
            delta: self.delta(),
            goal_tolerance: self.goal_tolerance_m,
            dt: self.dt_s,
            t_outer: self.t_outer_s,
            max_iterations: self.max_iterations,
            v_max: self.v_max_mps,
            mode: self.mode,
            token_mode: self.token_mode,
            inflation: self.inflation,
            master_seed: self.master_seed,
            rrt: self.planner,
        }
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let bounds = rect("workspace.bounds_m", self.workspace.bounds_m)?;
        let physical_obstacles = self
            .workspace
            .obstacles_m
            .iter()
            .enumerate()
            .map(|(i, r)| rect(&format!("workspace.obstacles_m[{i}]"), *r))
            .collect::<Result<Vec<_>, _>>()?;
        let agents = self
            .agents
            .iter()
            .map(|a| AgentSpec {
                id: AgentId(a.id),
                start: Point2::new(a.start_m[0], a.start_m[1]),
                goal: Point2::new(a.goal_m[0], a.goal_m[1]),
            })
            .collect();
        Ok(Scenario { name: self.name.clone(), bounds, physical_obstacles, agents })
    }

    /// Resolves and validates everything a run needs.
    pub fn build(&self) -> Result<(Scenario, SimParams, Workspace), ConfigError> {
        if !(self.epsilon_c_m >= 0.0) {
            return Err(ConfigError::Invalid(format!("epsilon_c_m = {} must be non-negative", self.epsilon_c_m)));
        }
        let scenario = self.scenario()?;
        let params = self.sim_params();
        let world = check_setup(&scenario, &params)?;
        Ok((scenario, params, world))
    }

    /// Same workspace and parameters with `n` freshly drawn agents. Starts
    /// and goals sit in free space at least `2·delta_min` from every other
    /// agent's start and goal, and each trip spans at least `min_trip_m`.
    pub fn with_random_agents(&self, n: usize, seed: u64, min_trip_m: f64) -> Result<ScenarioConfig, ConfigError> {
        let mut base = self.clone();
        base.agents.clear();
        let scenario = base.scenario()?;
        let params = base.sim_params();
        let spec = params.inflation_spec()?;
        let world = Workspace::new(scenario.bounds, scenario.physical_obstacles, &spec)
            .map_err(|e| ConfigError::Invalid(format!("workspace: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let b = *world.bounds();
        let gap = 2.0 * self.delta_min_m;
        let mut placed: Vec<Point2> = Vec::new();
        let draw = |rng: &mut ChaCha8Rng, placed: &[Point2]| -> Option<Point2> {
            for _ in 0..100_000 {
                let p = Point2::new(rng.random_range(b.xmin()..=b.xmax()), rng.random_range(b.ymin()..=b.ymax()));
                if point_in_free_space(p, &world) && placed.iter().all(|q| inf_norm_dist(p, *q) >= gap) {
                    return Some(p);
                }
            }
            None
        };
        for id in 1..=n as u32 {
            let start = draw(&mut rng, &placed)
                .ok_or_else(|| ConfigError::Invalid(format!("could not place a start for agent {id}")))?;
            placed.push(start);
            let mut goal = None;
            for _ in 0..1000 {
                let g = draw(&mut rng, &placed)
                    .ok_or_else(|| ConfigError::Invalid(format!("could not place a goal for agent {id}")))?;
                if g.euclidean(&start) >= min_trip_m {
                    goal = Some(g);
                    break;
                }
            }
            let goal = goal.ok_or_else(|| ConfigError::Invalid(format!("no goal far enough for agent {id}")))?;
            placed.push(goal);
            base.agents.push(AgentConfig { id, start_m: [start.x, start.y], goal_m: [goal.x, goal.y] });
        }
        base.build()?;
        Ok(base)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    ScenarioConfig::from_toml_str(&text)
}
