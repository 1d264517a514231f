//! The outer optimization loop: initial design, surrogate proposals,
//! early-stopped episodes and budget accounting, for every variant.

mod dataset;

pub use dataset::{
    build_virtual_dataset_c, build_virtual_dataset_crash_only, build_virtual_dataset_gp,
    build_virtual_dataset_tr, pessimistic_value, Dataset, PessimisticModel, Provenance,
    SectionModel, VirtualDataset, VirtualPoint,
};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition, AcquisitionConfig, AcquisitionState};
use crate::domain::ParamVector;
use crate::episode::{run_episode, EpisodeStatus};
use crate::error::{Error, Result};
use crate::gp::{self, FitOptions, KernelParams, NoiseMode};
use crate::tasks::ClosedLoopTask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BO")]
    Bo,
    #[serde(rename = "ESBO_C")]
    EsboC,
    #[serde(rename = "ESBO_TR")]
    EsboTr,
    #[serde(rename = "ESBO_GP")]
    EsboGp,
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "ESRS")]
    Esrs,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Rs,
        Variant::Esrs,
        Variant::Bo,
        Variant::EsboC,
        Variant::EsboTr,
        Variant::EsboGp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Bo => "BO",
            Variant::EsboC => "ESBO_C",
            Variant::EsboTr => "ESBO_TR",
            Variant::EsboGp => "ESBO_GP",
            Variant::Rs => "RS",
            Variant::Esrs => "ESRS",
        }
    }

    /// Whether episodes after the initial design are stopped early.
    pub fn early_stops(&self) -> bool {
        !matches!(self, Variant::Bo | Variant::Rs)
    }

    /// Whether proposals come from a surrogate rather than uniform sampling.
    pub fn uses_surrogate(&self) -> bool {
        !matches!(self, Variant::Rs | Variant::Esrs)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub variant: Variant,
    pub k_init: usize,
    /// Maximum number of episodes `K`.
    pub max_evals: usize,
    /// Maximum number of simulated steps `T_budget`.
    pub step_budget: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub acquisition: AcquisitionConfig,
    /// Multi-start count of every hyperparameter fit.
    pub fit_restarts: usize,
    pub fit_max_iters: usize,
}

impl OptimizerConfig {
    /// Default budgets for `task`: `k_init = max(d, 2)`, `K = 45 d`,
    /// `T_budget = 15 d T_max`.
    pub fn for_task(task: &ClosedLoopTask, variant: Variant, seed: u64) -> Self {
        let d = task.dim();
        Self {
            variant,
            k_init: d.max(2),
            max_evals: 45 * d,
            step_budget: 15 * d * task.t_max(),
            seed,
            noise_mode: NoiseMode::FixedZero,
            acquisition: AcquisitionConfig::default(),
            fit_restarts: 8,
            fit_max_iters: 40,
        }
    }

    pub fn validate(&self, task: &ClosedLoopTask) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k_init < 2 {
            return bad(format!("k_init = {} must be at least 2", self.k_init));
        }
        if self.max_evals < self.k_init {
            return bad(format!(
                "K = {} is below k_init = {}",
                self.max_evals, self.k_init
            ));
        }
        if self.step_budget < self.k_init * task.t_max() {
            return bad(format!(
                "T_budget = {} cannot cover {} initial episodes of {} steps",
                self.step_budget,
                self.k_init,
                task.t_max()
            ));
        }
        if self.fit_restarts == 0 {
            return bad("fit_restarts must be positive".into());
        }
        Ok(())
    }
}

/// One evaluated episode as it is persisted.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// 1-based evaluation index.
    pub index: usize,
    pub theta: ParamVector,
    pub status: EpisodeStatus,
    pub stop_time: usize,
    /// Total cost for complete episodes, partial cost otherwise.
    pub cost: f64,
    /// `J*` after this evaluation (`+∞` before the first complete episode).
    pub incumbent: f64,
    pub cumulative_steps: usize,
}

/// Counts of in-run invariant checks on the virtual datasets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantTally {
    pub checked: u64,
    pub violations: u64,
}

impl InvariantTally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            log::error!("invariant violated: {}", what());
        }
    }

    pub fn merge(&mut self, other: &InvariantTally) {
        self.checked += other.checked;
        self.violations += other.violations;
    }
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub records: Vec<RunRecord>,
    /// Wall-clock milliseconds spent on each evaluation, proposal included.
    pub wall_ms: Vec<f64>,
    pub invariants: InvariantTally,
    /// Proposals that fell back to uniform sampling after a fit failure.
    pub fallbacks: usize,
}

/// Independent random streams of one run.
#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Uniform = 1,
    Fit = 2,
    Acquisition = 3,
    Virtual = 4,
    Noise = 5,
}

fn substream(seed: u64, stream: Stream, index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A surrogate proposal and what it was trained on.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub theta: ParamVector,
    pub virtual_data: Option<VirtualDataset>,
    pub kernel: Option<KernelParams>,
}

/// Builds the variant's virtual dataset.
pub fn build_virtual_dataset(
    config: &OptimizerConfig,
    task: &ClosedLoopTask,
    data: &Dataset,
    opts: &FitOptions,
    iteration: usize,
) -> Result<VirtualDataset> {
    let domain = task.domain();
    match config.variant {
        Variant::Bo | Variant::Rs | Variant::Esrs => {
            build_virtual_dataset_crash_only(domain, data, opts)
        }
        Variant::EsboC => build_virtual_dataset_c(domain, data, opts),
        Variant::EsboTr => build_virtual_dataset_tr(data, task.t_max()),
        Variant::EsboGp => {
            let mut rng = substream(config.seed, Stream::Virtual, iteration);
            build_virtual_dataset_gp(domain, data, opts, &mut rng)
        }
    }
}

/// Next parameter vector for evaluation `iteration` (0-based). A pure
/// function of the data, the seed and the warm start.
pub fn propose_next(
    config: &OptimizerConfig,
    task: &ClosedLoopTask,
    data: &Dataset,
    iteration: usize,
    warm_start: Option<&KernelParams>,
) -> Result<Proposal> {
    if !config.variant.uses_surrogate() || !data.has_complete() {
        return Ok(uniform_proposal(config, task, iteration));
    }
    let opts = FitOptions {
        noise_mode: config.noise_mode,
        restarts: config.fit_restarts,
        max_iters: config.fit_max_iters,
        seed: substream(config.seed, Stream::Fit, iteration).next_u64(),
        warm_start: warm_start.cloned(),
        ..FitOptions::default()
    };
    let vds = build_virtual_dataset(
        config,
        task,
        data,
        &FitOptions {
            warm_start: None,
            ..opts.clone()
        },
        iteration,
    )?;
    let gp = gp::fit(task.domain(), &vds.training_points(), &opts)?;
    let mut rng = substream(config.seed, Stream::Acquisition, iteration);
    let state = AcquisitionState::new(&gp, &config.acquisition, &mut rng);
    let (theta, _) = maximize_acquisition(&state, &mut rng);
    Ok(Proposal {
        theta,
        virtual_data: Some(vds),
        kernel: Some(gp.kernel().clone()),
    })
}

fn uniform_proposal(config: &OptimizerConfig, task: &ClosedLoopTask, iteration: usize) -> Proposal {
    let mut rng = substream(config.seed, Stream::Uniform, iteration);
    Proposal {
        theta: task.domain().sample_uniform(&mut rng),
        virtual_data: None,
        kernel: None,
    }
}

/// Checks the structural guarantees of the variant's virtual dataset.
fn check_invariants(
    variant: Variant,
    data: &Dataset,
    vds: &VirtualDataset,
    tally: &mut InvariantTally,
) {
    let Some((inc, j_star)) = data.incumbent() else {
        return;
    };
    let j_max = data.worst_complete().unwrap_or(j_star);
    match variant {
        Variant::EsboC => {
            for p in vds
                .points
                .iter()
                .filter(|p| p.provenance != Provenance::Observed)
            {
                tally.check(p.value >= j_star && p.value <= j_max, || {
                    format!("ESBO-C point {} outside [{j_star}, {j_max}]", p.value)
                });
            }
        }
        Variant::EsboGp => {
            for (i, p) in vds.points.iter().enumerate() {
                if p.provenance == Provenance::VirtualGp {
                    let partial = data.cost(i);
                    tally.check(p.value >= partial, || {
                        format!("ESBO-GP point {} below partial cost {partial}", p.value)
                    });
                }
            }
        }
        Variant::EsboTr => {
            let min = vds
                .points
                .iter()
                .map(|p| p.value)
                .fold(f64::INFINITY, f64::min);
            let v = vds.points[inc].value;
            tally.check(v <= min, || {
                format!("ESBO-TR incumbent value {v} above minimum {min}")
            });
        }
        _ => {}
    }
}

/// Runs one optimization of `task` under `config`.
pub fn run_optimization(config: &OptimizerConfig, task: &ClosedLoopTask) -> Result<RunTrace> {
    config.validate(task)?;
    let variant = config.variant;
    let max_initial = 3 * config.k_init;
    let mut data = Dataset::new();
    let mut trace = RunTrace {
        records: Vec::new(),
        wall_ms: Vec::new(),
        invariants: InvariantTally::default(),
        fallbacks: 0,
    };
    let mut warm: Option<KernelParams> = None;
    let mut steps = 0usize;

    loop {
        let k = data.len();
        let started = Instant::now();
        let initial = k < config.k_init || !data.has_complete();
        let theta = if initial {
            if k >= max_initial {
                return Err(Error::NoCompleteInitialEpisode { attempts: k });
            }
            if k >= config.k_init {
                log::warn!(
                    "{} {variant} seed {}: no complete episode yet, sampling initial point {}",
                    task.id(),
                    config.seed,
                    k + 1
                );
            }
            uniform_proposal(config, task, k).theta
        } else {
            match propose_next(config, task, &data, k, warm.as_ref()) {
                Ok(p) => {
                    if let Some(vds) = &p.virtual_data {
                        check_invariants(variant, &data, vds, &mut trace.invariants);
                    }
                    if p.kernel.is_some() {
                        warm = p.kernel;
                    }
                    p.theta
                }
                Err(e) => {
                    log::warn!(
                        "{} {variant} seed {}: surrogate failed ({e}); proposing uniformly",
                        task.id(),
                        config.seed
                    );
                    trace.fallbacks += 1;
                    uniform_proposal(config, task, k).theta
                }
            }
        };

        let early_stop = variant.early_stops() && !initial;
        let mut noise_rng = substream(config.seed, Stream::Noise, k);
        let outcome = run_episode(
            task,
            &theta,
            data.incumbent_value(),
            early_stop,
            &mut noise_rng,
        );
        steps += outcome.stop_time();
        let record = RunRecord {
            index: k + 1,
            theta,
            status: outcome.status,
            stop_time: outcome.stop_time(),
            cost: outcome.observed_cost(),
            incumbent: f64::NAN,
            cumulative_steps: steps,
        };
        data.push(outcome);
        trace.records.push(RunRecord {
            incumbent: data.incumbent_value(),
            ..record
        });
        trace.wall_ms.push(started.elapsed().as_secs_f64() * 1e3);

        if data.len() >= config.max_evals || steps >= config.step_budget {
            break;
        }
    }
    Ok(trace)
}
