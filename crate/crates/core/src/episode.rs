//! One closed-loop episode with early stopping against the incumbent.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::ParamVector;
use crate::tasks::ClosedLoopTask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Complete,
    StoppedEarly,
    Crashed,
}

impl EpisodeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpisodeStatus::Complete => "complete",
            EpisodeStatus::StoppedEarly => "stopped",
            EpisodeStatus::Crashed => "crashed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complete" => Some(EpisodeStatus::Complete),
            "stopped" => Some(EpisodeStatus::StoppedEarly),
            "crashed" => Some(EpisodeStatus::Crashed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub params: ParamVector,
    pub stage_costs: Vec<f64>,
    pub status: EpisodeStatus,
}

impl EpisodeOutcome {
    /// Number of executed steps `T_k`.
    pub fn stop_time(&self) -> usize {
        self.stage_costs.len()
    }

    /// Sum of the observed stage costs (the full objective when complete).
    pub fn observed_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }

    pub fn is_complete(&self) -> bool {
        self.status == EpisodeStatus::Complete
    }

    /// First 1-based step at which the running cost reaches `threshold`.
    pub fn crossing_time(&self, threshold: f64) -> Option<usize> {
        let mut cum = 0.0;
        for (i, c) in self.stage_costs.iter().enumerate() {
            cum += c;
            if stopping_rule(cum, threshold) {
                return Some(i + 1);
            }
        }
        None
    }
}

/// `true` once the cumulative cost has reached the incumbent's total; an
/// infinite incumbent (none yet) never stops an episode.
pub fn stopping_rule(cumulative_cost: f64, incumbent: f64) -> bool {
    cumulative_cost >= incumbent
}

/// Runs `theta` on `task` for at most `T_max` steps.
///
/// With `early_stop`, the episode ends as soon as [`stopping_rule`] fires.
/// A crash predicate or a non-finite cost ends it as [`EpisodeStatus::Crashed`];
/// non-finite costs are recorded as zero. `rng` is only drawn from when the
/// task has measurement noise.
pub fn run_episode<R: Rng + ?Sized>(
    task: &ClosedLoopTask,
    theta: &ParamVector,
    incumbent: f64,
    early_stop: bool,
    rng: &mut R,
) -> EpisodeOutcome {
    let t_max = task.t_max();
    let noise = (task.measurement_noise() > 0.0)
        .then(|| Normal::new(0.0, task.measurement_noise()).expect("finite noise std"));
    let mut sim = task.start(theta);
    let mut costs = Vec::with_capacity(t_max);
    let mut cumulative = 0.0;
    let mut status = EpisodeStatus::Complete;
    for t in 1..=t_max {
        let disturbance = noise.as_ref().map_or(0.0, |n| n.sample(rng));
        let out = sim.step(t, disturbance);
        let finite = out.cost.is_finite() && out.u.is_finite() && out.y.is_finite();
        let cost = if out.cost.is_finite() {
            out.cost.max(0.0)
        } else {
            0.0
        };
        costs.push(cost);
        cumulative += cost;
        if out.crashed || !finite {
            status = EpisodeStatus::Crashed;
            break;
        }
        if early_stop && stopping_rule(cumulative, incumbent) {
            status = EpisodeStatus::StoppedEarly;
            break;
        }
    }
    EpisodeOutcome {
        params: theta.clone(),
        stage_costs: costs,
        status,
    }
}
