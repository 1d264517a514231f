//! Early-stopping Bayesian optimization for tuning controllers on episodic,
//! time-integrated costs.
//!
//! Episodes whose cumulative stage cost reaches the incumbent's total are
//! aborted, and the partial observations are folded back into the surrogate
//! through virtual data points. The crate bundles the GP surrogate, a
//! max-value entropy search acquisition, five closed-loop benchmark tasks and
//! a campaign/metrics harness.

pub mod acquisition;
pub mod domain;
pub mod episode;
pub mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod tasks;

pub use domain::{BoxDomain, ParamVector};
pub use episode::{run_episode, stopping_rule, EpisodeOutcome, EpisodeStatus};
pub use error::{Error, Result};
pub use gp::{KernelParams, NoiseMode, Posterior, TrainedGp};
pub use optimizer::{run_optimization, OptimizerConfig, Variant};
pub use tasks::{make_task, ClosedLoopTask, TaskId};
