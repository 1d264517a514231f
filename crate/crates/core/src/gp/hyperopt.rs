//! Log marginal likelihood, its gradient in log-hyperparameter space, and
//! the bounded multi-start search that fits kernel hyperparameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    factorize, length_scale_bounds, KernelParams, TrainedGp, TrainingSet, NOISE_VARIANCE_BOUNDS,
    SIGNAL_VARIANCE_BOUNDS,
};
use crate::domain::{BoxDomain, ParamVector};
use crate::error::{Error, Result};
use crate::linalg::dot;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Whether the observation noise is a free hyperparameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Deterministic observations; only the jitter floor sits on the diagonal.
    #[default]
    FixedZero,
    /// Noise variance fitted within [`NOISE_VARIANCE_BOUNDS`].
    Optimized,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub noise_mode: NoiseMode,
    /// Number of local searches (the warm start, if any, counts as one).
    pub restarts: usize,
    /// Iteration cap per local search.
    pub max_iters: usize,
    /// Every start first runs this many iterations; only the best
    /// `survivors` continue to `max_iters`.
    pub screen_iters: usize,
    pub survivors: usize,
    /// Seed for the random starting points.
    pub seed: u64,
    /// Previous optimum, used as the first start.
    pub warm_start: Option<KernelParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            noise_mode: NoiseMode::FixedZero,
            restarts: 8,
            max_iters: 40,
            screen_iters: 5,
            survivors: 2,
            seed: 0,
            warm_start: None,
        }
    }
}

/// Log marginal likelihood as a function of the log-hyperparameters
/// `[ln σ_f², ln ℓ_1, …, ln ℓ_d, (ln σ_n²)]`.
pub struct LmlObjective {
    set: TrainingSet,
    noise_mode: NoiseMode,
}

impl LmlObjective {
    pub fn new(
        domain: &BoxDomain,
        points: &[(ParamVector, f64)],
        noise_mode: NoiseMode,
    ) -> Result<Self> {
        Ok(Self {
            set: TrainingSet::new(domain, points)?,
            noise_mode,
        })
    }

    pub fn n_params(&self) -> usize {
        self.set.d + 1 + usize::from(self.noise_mode == NoiseMode::Optimized)
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (llo, lhi) = length_scale_bounds();
        let mut lo = vec![SIGNAL_VARIANCE_BOUNDS.0.ln()];
        let mut hi = vec![SIGNAL_VARIANCE_BOUNDS.1.ln()];
        lo.extend(std::iter::repeat_n(llo.ln(), self.set.d));
        hi.extend(std::iter::repeat_n(lhi.ln(), self.set.d));
        if self.noise_mode == NoiseMode::Optimized {
            lo.push(NOISE_VARIANCE_BOUNDS.0.ln());
            hi.push(NOISE_VARIANCE_BOUNDS.1.ln());
        }
        (lo, hi)
    }

    pub fn to_log(&self, kp: &KernelParams) -> Vec<f64> {
        let mut v = vec![kp.signal_variance.ln()];
        v.extend(kp.length_scales.iter().map(|l| l.ln()));
        if self.noise_mode == NoiseMode::Optimized {
            v.push(kp.noise_variance.max(NOISE_VARIANCE_BOUNDS.0).ln());
        }
        v
    }

    pub fn from_log(&self, v: &[f64]) -> KernelParams {
        let d = self.set.d;
        KernelParams {
            signal_variance: v[0].exp(),
            length_scales: v[1..=d].iter().map(|x| x.exp()).collect(),
            noise_variance: if self.noise_mode == NoiseMode::Optimized {
                v[d + 1].exp()
            } else {
                0.0
            },
        }
    }

    /// Log marginal likelihood on the standardized targets.
    pub fn value(&self, kp: &KernelParams) -> Result<f64> {
        let n = self.set.n;
        let kmat = self.set.kernel_matrix(kp);
        let (factor, _) = factorize(&kmat, n, kp)?;
        let mut alpha = self.set.y.clone();
        factor.solve_in_place(&mut alpha);
        Ok(-0.5 * dot(&self.set.y, &alpha) - 0.5 * factor.log_det(n) - 0.5 * n as f64 * LN_2PI)
    }

    /// Value and gradient with respect to the log-hyperparameters.
    pub fn value_and_gradient(&self, logp: &[f64]) -> Result<(f64, Vec<f64>)> {
        let kp = self.from_log(logp);
        let n = self.set.n;
        let d = self.set.d;
        let kmat = self.set.kernel_matrix(&kp);
        let (factor, jitter) = factorize(&kmat, n, &kp)?;
        let mut alpha = self.set.y.clone();
        factor.solve_in_place(&mut alpha);
        let value =
            -0.5 * dot(&self.set.y, &alpha) - 0.5 * factor.log_det(n) - 0.5 * n as f64 * LN_2PI;

        // W = α αᵀ - K⁻¹, dL/dp = ½ tr(W ∂K/∂p).
        let mut w = factor.inverse();
        for a in 0..n {
            for b in 0..n {
                w[a * n + b] = alpha[a] * alpha[b] - w[a * n + b];
            }
        }
        let mut grad = vec![0.0; self.n_params()];
        let mut trace_w = 0.0;
        for a in 0..n {
            trace_w += w[a * n + a];
        }
        let inv_l2: Vec<f64> = kp.length_scales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut g_signal = 0.5 * trace_w * (kp.signal_variance + jitter);
        for a in 0..n {
            let xa = self.set.row(a);
            for b in 0..a {
                let wk = w[a * n + b] * kmat[a * n + b];
                if wk == 0.0 {
                    continue;
                }
                // Off-diagonal pairs appear twice in the trace.
                g_signal += wk;
                let xb = self.set.row(b);
                for i in 0..d {
                    let diff = xa[i] - xb[i];
                    grad[1 + i] += wk * diff * diff * inv_l2[i];
                }
            }
        }
        grad[0] = g_signal;
        if self.noise_mode == NoiseMode::Optimized {
            grad[d + 1] = 0.5 * trace_w * kp.noise_variance;
        }
        Ok((value, grad))
    }
}

/// Bounded log marginal likelihood of `points` (original units) under `kp`.
pub fn log_marginal_likelihood(
    domain: &BoxDomain,
    points: &[(ParamVector, f64)],
    kp: &KernelParams,
) -> Result<f64> {
    let mode = if kp.noise_variance > 0.0 {
        NoiseMode::Optimized
    } else {
        NoiseMode::FixedZero
    };
    LmlObjective::new(domain, points, mode)?.value(kp)
}

/// Fits hyperparameters by multi-start bounded ascent of the log marginal
/// likelihood and conditions the GP on `points`.
pub fn fit(
    domain: &BoxDomain,
    points: &[(ParamVector, f64)],
    opts: &FitOptions,
) -> Result<TrainedGp> {
    let objective = LmlObjective::new(domain, points, opts.noise_mode)?;
    let (lo, hi) = objective.bounds();
    let d = domain.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    let first = match &opts.warm_start {
        Some(kp) if kp.dim() == d => {
            let mut kp = kp.clone();
            if opts.noise_mode == NoiseMode::Optimized && kp.noise_variance <= 0.0 {
                kp.noise_variance = 1e-4;
            }
            objective.to_log(&kp)
        }
        _ => {
            let mut kp = KernelParams::default_for_dim(d);
            if opts.noise_mode == NoiseMode::Optimized {
                kp.noise_variance = 1e-4;
            }
            objective.to_log(&kp)
        }
    };
    starts.push(project(first, &lo, &hi));
    while starts.len() < opts.restarts.max(1) {
        starts.push(
            lo.iter()
                .zip(&hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
        );
    }

    let screen = opts.screen_iters.min(opts.max_iters);
    let mut runs: Vec<(usize, Ascent)> = starts
        .into_iter()
        .enumerate()
        .filter_map(|(i, x0)| {
            let mut a = Ascent::new(&objective, x0)?;
            a.advance(&objective, &lo, &hi, screen);
            Some((i, a))
        })
        .collect();
    // Best value first, the lower start index among equals.
    runs.sort_by(|(i, a), (j, b)| b.f.total_cmp(&a.f).then(i.cmp(j)));
    runs.truncate(opts.survivors.max(1));
    for (_, a) in runs.iter_mut() {
        a.advance(&objective, &lo, &hi, opts.max_iters - screen);
    }
    let mut best: Option<(usize, Ascent)> = None;
    for (i, a) in runs {
        let better = match &best {
            None => true,
            Some((j, b)) => a.f > b.f || (a.f == b.f && i < *j),
        };
        if better {
            best = Some((i, a));
        }
    }
    let x = best.ok_or(Error::Factorization { jitter: f64::NAN })?.1.x;
    let kp = objective.from_log(&x);
    TrainedGp::from_set(domain.clone(), points, objective.set, kp)
}

fn project(mut x: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    for ((v, a), b) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*a, *b);
    }
    x
}

/// Projected gradient ascent with Barzilai-Borwein steps and Armijo
/// backtracking, resumable so that several starts can be advanced in stages.
struct Ascent {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    step: f64,
    converged: bool,
}

impl Ascent {
    /// `None` only if the start itself cannot be evaluated.
    fn new(objective: &LmlObjective, x0: Vec<f64>) -> Option<Self> {
        let (f, g) = objective.value_and_gradient(&x0).ok()?;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step = if gmax > 0.0 {
            (0.5 / gmax).min(1.0)
        } else {
            1.0
        };
        Some(Self {
            x: x0,
            f,
            g,
            step,
            converged: false,
        })
    }

    fn advance(&mut self, objective: &LmlObjective, lo: &[f64], hi: &[f64], iters: usize) {
        for _ in 0..iters {
            if self.converged {
                return;
            }
            self.iterate(objective, lo, hi);
        }
    }

    fn iterate(&mut self, objective: &LmlObjective, lo: &[f64], hi: &[f64]) {
        let (x, g) = (&self.x, &self.g);
        let probe = project(x.iter().zip(g).map(|(a, b)| a + b).collect(), lo, hi);
        let pg_norm = probe
            .iter()
            .zip(x)
            .fold(0.0f64, |m, (p, a)| m.max((p - a).abs()));
        if pg_norm < 1e-6 {
            self.converged = true;
            return;
        }

        let mut accepted = None;
        let mut t = self.step;
        for _ in 0..30 {
            let cand = project(x.iter().zip(g).map(|(a, b)| a + t * b).collect(), lo, hi);
            let dir: f64 = cand
                .iter()
                .zip(x)
                .zip(g)
                .map(|((c, a), gi)| (c - a) * gi)
                .sum();
            if let Ok((fc, gc)) = objective.value_and_gradient(&cand) {
                if fc >= self.f + 1e-4 * dir {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.25;
        }
        let Some((xn, fn_, gn)) = accepted else {
            self.converged = true;
            return;
        };

        let s: Vec<f64> = xn.iter().zip(x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(g).map(|(a, b)| b - a).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        self.step = if sy > 1e-300 {
            (ss / sy).clamp(1e-6, 1e3)
        } else {
            (t * 2.0).min(1e3)
        };

        let improvement = fn_ - self.f;
        self.x = xn;
        self.f = fn_;
        self.g = gn;
        if improvement.abs() <= 1e-10 * (1.0 + self.f.abs()) {
            self.converged = true;
        }
    }
}
