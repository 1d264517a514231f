//! Observed episodes and the virtual datasets the surrogate is trained on.
//!
//! Partially observed (early-stopped) and crashed episodes never enter the
//! surrogate with their partial cost. Each heuristic substitutes a virtual
//! target instead, recomputed from scratch every iteration.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{BoxDomain, ParamVector};
use crate::episode::{EpisodeOutcome, EpisodeStatus};
use crate::error::{Error, Result};
use crate::gp::{
    self, factorize, kernel_eval, FitOptions, KernelParams, OutputTransform, TrainingSet,
};
use crate::linalg::dot;

/// Everything observed so far in one run.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    outcomes: Vec<EpisodeOutcome>,
    costs: Vec<f64>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, outcome: EpisodeOutcome) {
        self.costs.push(outcome.observed_cost());
        self.outcomes.push(outcome);
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[EpisodeOutcome] {
        &self.outcomes
    }

    /// Observed (partial, for incomplete episodes) cost of record `i`.
    pub fn cost(&self, i: usize) -> f64 {
        self.costs[i]
    }

    pub fn total_steps(&self) -> usize {
        self.outcomes.iter().map(EpisodeOutcome::stop_time).sum()
    }

    fn complete(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.outcomes[i].is_complete())
    }

    pub fn has_complete(&self) -> bool {
        self.complete().next().is_some()
    }

    /// Index and cost of the best complete episode; the earliest wins ties.
    pub fn incumbent(&self) -> Option<(usize, f64)> {
        self.complete().fold(None, |best, i| match best {
            Some((_, c)) if c <= self.costs[i] => best,
            _ => Some((i, self.costs[i])),
        })
    }

    /// `J*_k`, or `+∞` before the first complete episode.
    pub fn incumbent_value(&self) -> f64 {
        self.incumbent().map_or(f64::INFINITY, |(_, c)| c)
    }

    /// `J_max,k`: the worst complete episode's cost.
    pub fn worst_complete(&self) -> Option<f64> {
        self.complete().map(|i| self.costs[i]).reduce(f64::max)
    }

    fn complete_points(&self) -> Vec<(ParamVector, f64)> {
        self.complete()
            .map(|i| (self.outcomes[i].params.clone(), self.costs[i]))
            .collect()
    }
}

/// Where a surrogate target came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    VirtualC,
    VirtualTr,
    VirtualGp,
    VirtualCrash,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualPoint {
    pub theta: ParamVector,
    pub value: f64,
    pub provenance: Provenance,
}

/// One surrogate target per record, in record order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VirtualDataset {
    pub points: Vec<VirtualPoint>,
}

impl VirtualDataset {
    pub fn training_points(&self) -> Vec<(ParamVector, f64)> {
        self.points
            .iter()
            .map(|p| (p.theta.clone(), p.value))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The pessimistic completion `min(max(μ̄, J*) + 3σ̄, J_max)` from a GP of
/// complete episodes.
pub struct PessimisticModel {
    gp: gp::TrainedGp,
    incumbent: f64,
    worst: f64,
}

impl PessimisticModel {
    pub fn fit(domain: &BoxDomain, data: &Dataset, opts: &FitOptions) -> Result<Self> {
        let (_, incumbent) = data.incumbent().ok_or(Error::EmptyData)?;
        let worst = data.worst_complete().ok_or(Error::EmptyData)?;
        let gp = gp::fit(domain, &data.complete_points(), opts)?;
        Ok(Self {
            gp,
            incumbent,
            worst,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        self.gp.kernel()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let post = self.gp.posterior(theta);
        pessimistic_value(post.mean, post.std(), self.incumbent, self.worst)
    }
}

/// `min(max(μ, J*) + 3σ, J_max)`.
pub fn pessimistic_value(mean: f64, std: f64, incumbent: f64, worst: f64) -> f64 {
    (mean.max(incumbent) + 3.0 * std).min(worst)
}

fn observed(data: &Dataset, i: usize) -> VirtualPoint {
    VirtualPoint {
        theta: data.outcomes[i].params.clone(),
        value: data.costs[i],
        provenance: Provenance::Observed,
    }
}

/// Complete records pass through; the records selected by `replace` get the
/// pessimistic value, fitted lazily (only if any record needs it).
fn with_pessimistic(
    domain: &BoxDomain,
    data: &Dataset,
    opts: &FitOptions,
    replace: impl Fn(EpisodeStatus) -> Option<Provenance>,
) -> Result<VirtualDataset> {
    let needs = data.outcomes.iter().any(|o| replace(o.status).is_some());
    let model = if needs {
        Some(PessimisticModel::fit(domain, data, opts)?)
    } else {
        None
    };
    let points = (0..data.len())
        .map(|i| {
            let o = &data.outcomes[i];
            match (replace(o.status), &model) {
                (Some(provenance), Some(m)) => VirtualPoint {
                    theta: o.params.clone(),
                    value: m.value(&o.params),
                    provenance,
                },
                _ => observed(data, i),
            }
        })
        .collect();
    Ok(VirtualDataset { points })
}

/// ESBO-C: every stopped or crashed record gets the pessimistic completion.
pub fn build_virtual_dataset_c(
    domain: &BoxDomain,
    data: &Dataset,
    opts: &FitOptions,
) -> Result<VirtualDataset> {
    with_pessimistic(domain, data, opts, |s| match s {
        EpisodeStatus::Complete => None,
        EpisodeStatus::StoppedEarly => Some(Provenance::VirtualC),
        EpisodeStatus::Crashed => Some(Provenance::VirtualCrash),
    })
}

/// Plain BO: only crashed records are replaced.
pub fn build_virtual_dataset_crash_only(
    domain: &BoxDomain,
    data: &Dataset,
    opts: &FitOptions,
) -> Result<VirtualDataset> {
    with_pessimistic(domain, data, opts, |s| {
        (s == EpisodeStatus::Crashed).then_some(Provenance::VirtualCrash)
    })
}

/// ESBO-TR: every record is scored by `-T*`, the time its running cost needs
/// to reach the current incumbent. The incumbent itself scores `-T_max`.
pub fn build_virtual_dataset_tr(data: &Dataset, t_max: usize) -> Result<VirtualDataset> {
    let (inc, j_star) = data.incumbent().ok_or(Error::EmptyData)?;
    let points = data
        .outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let t_star = if i == inc {
                t_max
            } else {
                let crossing = o.crossing_time(j_star);
                match (o.status, crossing) {
                    (EpisodeStatus::Crashed, Some(t)) => t.min(o.stop_time()),
                    (EpisodeStatus::Crashed, None) => o.stop_time(),
                    (_, Some(t)) => t,
                    // The prefix never reached J*: pessimistic one step beyond
                    // what was observed, but never as good as the incumbent.
                    (_, None) => (o.stop_time() + 1).min(t_max),
                }
            };
            VirtualPoint {
                theta: o.params.clone(),
                value: -(t_star as f64),
                provenance: Provenance::VirtualTr,
            }
        })
        .collect();
    Ok(VirtualDataset { points })
}

/// The sectioned cost model: one GP per section `(B_q, B_{q+1}]` between
/// consecutive unique episode lengths of the non-crashed records.
///
/// Records are ordered by decreasing length, so each section's training set
/// (records that cover it) is a leading block of that order. All sections
/// share one kernel and therefore one Cholesky factor; only the targets and
/// their standardization differ.
pub struct SectionModel {
    /// `B_1 < … < B_{N+1}`.
    boundaries: Vec<usize>,
    order: Vec<usize>,
    d: usize,
    x: Vec<f64>,
    kernel: KernelParams,
    factor: crate::linalg::Cholesky,
    sections: Vec<Section>,
}

struct Section {
    /// Leading-block size: records with length ≥ the section's right edge.
    m: usize,
    transform: OutputTransform,
    alpha: Vec<f64>,
}

impl SectionModel {
    /// Returns `None` when there is nothing to section (a single unique length).
    pub fn fit(domain: &BoxDomain, data: &Dataset, opts: &FitOptions) -> Result<Option<Self>> {
        let mut order: Vec<usize> = (0..data.len())
            .filter(|&i| data.outcomes[i].status != EpisodeStatus::Crashed)
            .collect();
        // Longest first; ties keep record order.
        order.sort_by_key(|&i| std::cmp::Reverse(data.outcomes[i].stop_time()));
        let mut boundaries: Vec<usize> = order
            .iter()
            .map(|&i| data.outcomes[i].stop_time())
            .collect();
        boundaries.sort_unstable();
        boundaries.dedup();
        if boundaries.len() < 2 {
            return Ok(None);
        }

        let section_cost = |i: usize, q: usize| -> f64 {
            data.outcomes[i].stage_costs[boundaries[q]..boundaries[q + 1]]
                .iter()
                .sum()
        };
        let block = |q: usize| -> usize {
            order.partition_point(|&i| data.outcomes[i].stop_time() >= boundaries[q + 1])
        };

        // Shared kernel: fitted on the first (largest) section.
        let m0 = block(0);
        let first: Vec<(ParamVector, f64)> = order[..m0]
            .iter()
            .map(|&i| (data.outcomes[i].params.clone(), section_cost(i, 0)))
            .collect();
        let kernel = gp::fit(domain, &first, opts)?.kernel().clone();

        let all: Vec<(ParamVector, f64)> = order
            .iter()
            .map(|&i| (data.outcomes[i].params.clone(), 0.0))
            .collect();
        let set = TrainingSet::new(domain, &all)?;
        let (factor, _) = factorize(&set.kernel_matrix(&kernel), set.n, &kernel)?;

        let sections = (0..boundaries.len() - 1)
            .map(|q| {
                let m = block(q);
                let raw: Vec<f64> = order[..m].iter().map(|&i| section_cost(i, q)).collect();
                let transform = OutputTransform::from_targets(&raw);
                let mut alpha: Vec<f64> = raw.iter().map(|v| transform.forward(*v)).collect();
                factor.solve_in_place(&mut alpha);
                Section {
                    m,
                    transform,
                    alpha,
                }
            })
            .collect();
        Ok(Some(Self {
            boundaries,
            order,
            d: set.d,
            x: set.x,
            kernel,
            factor,
            sections,
        }))
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Training-set size of each section.
    pub fn section_sizes(&self) -> Vec<usize> {
        self.sections.iter().map(|s| s.m).collect()
    }

    /// Record indices in model order (longest episode first).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Mean and variance of the cost after step `t_stop`, summed over the
    /// remaining sections. Section means are floored at zero.
    pub fn remaining_cost(&self, domain: &BoxDomain, theta: &[f64], t_stop: usize) -> (f64, f64) {
        let p = self.boundaries.partition_point(|&b| b < t_stop);
        let u = domain.to_unit(theta);
        let n = self.order.len();
        let k: Vec<f64> = (0..n)
            .map(|i| kernel_eval(&u, &self.x[i * self.d..(i + 1) * self.d], &self.kernel))
            .collect();
        let mut v = k.clone();
        self.factor.solve_lower_in_place(&mut v);
        // Prefix sums of v² give every leading block's explained variance.
        let mut explained = Vec::with_capacity(n + 1);
        explained.push(0.0);
        for vi in &v {
            let last = *explained.last().unwrap();
            explained.push(last + vi * vi);
        }
        let mut mean = 0.0;
        let mut var = 0.0;
        for s in &self.sections[p.min(self.sections.len())..] {
            let ms = dot(&k[..s.m], &s.alpha);
            let vs = (self.kernel.signal_variance - explained[s.m]).max(0.0);
            mean += s.transform.inverse(ms).max(0.0);
            var += vs * s.transform.std * s.transform.std;
        }
        (mean, var)
    }
}

/// ESBO-GP: stopped records get a draw from the sectioned completion,
/// clamped below at their partial cost; crashed records get the pessimistic
/// completion.
pub fn build_virtual_dataset_gp<R: Rng + ?Sized>(
    domain: &BoxDomain,
    data: &Dataset,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<VirtualDataset> {
    if !data.has_complete() {
        return Err(Error::EmptyData);
    }
    let any_stopped = data
        .outcomes
        .iter()
        .any(|o| o.status == EpisodeStatus::StoppedEarly);
    let sections = if any_stopped {
        SectionModel::fit(domain, data, opts)?
    } else {
        None
    };
    let mut vds = build_virtual_dataset_crash_only(domain, data, opts)?;
    for (i, point) in vds.points.iter_mut().enumerate() {
        let o = &data.outcomes[i];
        if o.status != EpisodeStatus::StoppedEarly {
            continue;
        }
        let partial = data.costs[i];
        let (mean, var) = sections.as_ref().map_or((0.0, 0.0), |s| {
            s.remaining_cost(domain, &o.params, o.stop_time())
        });
        let draw = match Normal::new(partial + mean, var.sqrt()) {
            Ok(n) => n.sample(rng),
            Err(_) => partial + mean,
        };
        point.value = draw.max(partial);
        point.provenance = Provenance::VirtualGp;
    }
    Ok(vds)
}
