//! Campaign orchestration, result persistence and regret metrics.

pub mod campaign;
pub mod config;
pub mod metrics;
pub mod report;
pub mod store;

pub use campaign::{run_campaign, run_keys, CampaignSummary};
pub use config::{BudgetOverrides, CampaignConfig};
pub use metrics::{average_rank, simple_regret, Abscissa};
pub use report::{analyze, load_runs, write_report, Report};
pub use store::{Manifest, RunKey, RunStatus};
