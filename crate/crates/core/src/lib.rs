//! Decentralized multi-agent RRT* planning under line-of-sight
//! communication, with inflated obstacles that keep agents who cannot see
//! each other safely apart.

pub mod coordination;
pub mod executive;
pub mod geometry;
pub mod oracle;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod suite;
pub mod visibility;

pub use executive::{run, AgentSpec, ConfigError, RunError, Scenario, SimParams};
pub use geometry::{AARect, InflationMode, InflationSpec, Point2, Workspace};
pub use scenario::{load_scenario, ScenarioConfig};
pub use sim::{certify_trace, compute_metrics, MetricsSummary, PlanningMode, SimTrace, TokenMode};
pub use visibility::{AgentId, SubgraphPartition};
