//! Max-value entropy search over a fitted GP, and its maximization by
//! uniform screening plus local refinement.
//!
//! The GP models a cost to be minimized. Everything here works on the
//! negated, standardized posterior so that MES is stated for maximization;
//! γ is invariant to the affine output transform.

use libm::erfc;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ParamVector;
use crate::gp::TrainedGp;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SIGMA_FLOOR: f64 = 1e-12;
/// Below this γ, Φ(γ) is replaced by its asymptotic series.
const ASYMPTOTIC_GAMMA: f64 = -30.0;

/// Tunables of the MES acquisition and its optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Number of sampled maxima y*.
    pub n_samples: usize,
    /// Gumbel-fit grid size per input dimension.
    pub grid_per_dim: usize,
    /// Screening candidates per input dimension.
    pub candidates_per_dim: usize,
    /// Local ascent steps per refined candidate.
    pub refine_steps: usize,
    /// How many of the best screened candidates get refined.
    pub refine_top: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            n_samples: 10,
            grid_per_dim: 1000,
            candidates_per_dim: 2000,
            refine_steps: 50,
            refine_top: 5,
        }
    }
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, finite far into the lower tail.
fn ln_norm_cdf(x: f64) -> f64 {
    if x < ASYMPTOTIC_GAMMA {
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + mills_series(x).ln()
    } else {
        norm_cdf(x).ln()
    }
}

/// `-x Φ(x) / φ(x)` for large negative `x`, from the asymptotic series
/// `Σ (-1)ⁿ (2n-1)!! x⁻²ⁿ`.
fn mills_series(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..6 {
        term *= -((2 * n - 1) as f64) * r;
        sum += term;
    }
    sum
}

/// The per-sample MES term `γφ(γ)/(2Φ(γ)) − ln Φ(γ)`, clamped at 0.
pub fn mes_term(gamma: f64) -> f64 {
    if gamma == f64::INFINITY {
        return 0.0;
    }
    let ratio = if gamma < ASYMPTOTIC_GAMMA {
        -gamma / mills_series(gamma)
    } else {
        norm_pdf(gamma) / norm_cdf(gamma)
    };
    (0.5 * gamma * ratio - ln_norm_cdf(gamma)).max(0.0)
}

/// Posterior of the negated objective in standardized units at a unit-cube point.
fn negated_posterior(gp: &TrainedGp, u: &[f64]) -> (f64, f64) {
    let (m, v) = gp.posterior_standardized(u);
    (-m, v.max(0.0).sqrt())
}

/// Largest negated standardized target, i.e. the best observation so far.
fn best_observed(gp: &TrainedGp) -> f64 {
    gp.targets()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &y| a.max(-y))
}

/// Samples `n_samples` maxima of the negated objective from a Gumbel
/// distribution matched to the quartiles of `P(max ≤ z) = Π Φ((z − m_i)/s_i)`
/// over `grid_size` uniform points. Values are in negated standardized units.
pub fn sample_max_values<R: Rng + ?Sized>(
    gp: &TrainedGp,
    n_samples: usize,
    grid_size: usize,
    rng: &mut R,
) -> Vec<f64> {
    let d = gp.domain().dim();
    let mut grid: Vec<(f64, f64)> = Vec::with_capacity(grid_size + gp.len());
    let mut u = vec![0.0; d];
    for _ in 0..grid_size {
        for v in u.iter_mut() {
            *v = rng.random::<f64>();
        }
        grid.push(negated_posterior(gp, &u));
    }
    let floor = best_observed(gp);
    let (a, b) = gumbel_fit(&grid, floor);
    (0..n_samples)
        .map(|_| {
            // 1 - U lies in (0, 1], keeping ln(-ln p) finite except at p = 1.
            let p = 1.0 - rng.random::<f64>();
            let z = if p >= 1.0 { a } else { a - b * (-p.ln()).ln() };
            z.max(floor)
        })
        .collect()
}

/// Location and scale of the Gumbel fit. `floor` joins the grid as a
/// noiseless point so the fitted maximum cannot fall below the best
/// observation.
fn gumbel_fit(grid: &[(f64, f64)], floor: f64) -> (f64, f64) {
    // P(max ≤ z) ≤ Φ((z − m_i)/s_i) for every i, so no quantile from the
    // lower quartile up lies below any single point's lower quartile.
    const Z25: f64 = 0.674_489_750_196_081_7;
    let mut lo = floor;
    let mut hi = floor;
    for &(m, sd) in grid {
        lo = lo.max(m - Z25 * sd);
        hi = hi.max(m + 8.0 * sd);
    }
    // Points whose factor is 1 to machine precision over the whole bracket
    // cannot move a quantile.
    let relevant: Vec<(f64, f64)> = grid
        .iter()
        .copied()
        .filter(|&(m, sd)| !(sd > 0.0 && (lo - m) / sd > 8.5) && !(sd <= 0.0 && m <= lo))
        .collect();
    let grid = &relevant[..];
    let ln_cdf = |z: f64| -> f64 {
        if z < floor {
            return f64::NEG_INFINITY;
        }
        let mut s = 0.0;
        for &(m, sd) in grid {
            if sd <= 0.0 {
                if z < m {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            s += ln_norm_cdf((z - m) / sd);
        }
        s
    };
    // Regula falsi (Illinois variant) on the monotone ln CDF.
    let quantile = |p: f64| -> f64 {
        let target = p.ln();
        let (mut a, mut b) = (lo, hi);
        let (mut fa, mut fb) = (ln_cdf(a) - target, ln_cdf(b) - target);
        if fa >= 0.0 {
            return a;
        }
        if fb <= 0.0 || !fa.is_finite() {
            // Degenerate bracket; fall back to plain bisection.
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if ln_cdf(mid) < target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        let mut side = 0;
        for _ in 0..100 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = ln_cdf(c) - target;
            if fc == 0.0 || (b - a).abs() <= 1e-12 * (1.0 + c.abs()) || fc.abs() < 1e-13 {
                return c;
            }
            if fc < 0.0 {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        0.5 * (a + b)
    };
    let q25 = quantile(0.25);
    let q50 = quantile(0.5);
    let q75 = quantile(0.75);
    let denom = 4f64.ln().ln() - (4f64 / 3.0).ln().ln();
    let b = ((q75 - q25) / denom).max(0.0);
    let a = q50 + b * 2f64.ln().ln();
    (a, b)
}

/// A fitted surrogate together with its sampled maxima.
#[derive(Clone, Debug)]
pub struct AcquisitionState<'a> {
    pub gp: &'a TrainedGp,
    /// Sampled maxima of the negated objective, standardized units.
    pub max_value_samples: Vec<f64>,
    pub candidate_count: usize,
    pub refine_count: usize,
    pub refine_top: usize,
}

impl<'a> AcquisitionState<'a> {
    pub fn new<R: Rng + ?Sized>(gp: &'a TrainedGp, cfg: &AcquisitionConfig, rng: &mut R) -> Self {
        let d = gp.domain().dim();
        let samples = sample_max_values(gp, cfg.n_samples.max(1), cfg.grid_per_dim * d, rng);
        Self {
            gp,
            max_value_samples: samples,
            candidate_count: (cfg.candidates_per_dim * d).max(1),
            refine_count: cfg.refine_steps,
            refine_top: cfg.refine_top,
        }
    }

    /// MES at a unit-cube point.
    pub fn value_unit(&self, u: &[f64]) -> f64 {
        let (m, s) = negated_posterior(self.gp, u);
        mes_from_moments(m, s, &self.max_value_samples)
    }
}

/// MES given the negated posterior mean and std and the sampled maxima.
pub fn mes_from_moments(mean: f64, std: f64, samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let min_star = samples.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if std <= 0.0 && mean < min_star {
        return 0.0;
    }
    let s = std.max(SIGMA_FLOOR);
    let total: f64 = samples.iter().map(|&y| mes_term((y - mean) / s)).sum();
    total / samples.len() as f64
}

/// MES at `theta` (optimizer units).
pub fn mes_value(theta: &[f64], state: &AcquisitionState<'_>) -> f64 {
    state.value_unit(&state.gp.domain().to_unit(theta))
}

/// Screens uniform candidates, refines the best few by projected
/// finite-difference ascent and returns the best point found with its value.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    state: &AcquisitionState<'_>,
    rng: &mut R,
) -> (ParamVector, f64) {
    let domain = state.gp.domain();
    let d = domain.dim();
    let mut cands: Vec<(Vec<f64>, f64)> = (0..state.candidate_count)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let v = state.value_unit(&u);
            (u, v)
        })
        .collect();
    // Stable sort keeps the lowest index first among equal values.
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| cands[j].1.total_cmp(&cands[i].1));

    let mut best = cands[order[0]].clone();
    for &i in order.iter().take(state.refine_top.max(1)) {
        let start = std::mem::take(&mut cands[i]);
        let refined = refine(state, start, state.refine_count);
        if refined.1 > best.1 {
            best = refined;
        }
    }
    (domain.from_unit(&best.0), best.1)
}

const FD_STEP: f64 = 1e-4;

/// Projected ascent on the unit cube with central-difference gradients and
/// backtracking. Never returns a point worse than `start`.
fn refine(state: &AcquisitionState<'_>, start: (Vec<f64>, f64), steps: usize) -> (Vec<f64>, f64) {
    let (mut x, mut f) = start;
    let d = x.len();
    let mut t = 0.05;
    let mut probe = x.clone();
    for _ in 0..steps {
        let mut g = vec![0.0; d];
        for i in 0..d {
            let lo = (x[i] - FD_STEP).max(0.0);
            let hi = (x[i] + FD_STEP).min(1.0);
            if hi <= lo {
                continue;
            }
            probe.copy_from_slice(&x);
            probe[i] = hi;
            let fp = state.value_unit(&probe);
            probe[i] = lo;
            let fm = state.value_unit(&probe);
            g[i] = (fp - fm) / (hi - lo);
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !gnorm.is_finite() || gnorm <= 0.0 {
            break;
        }
        let mut moved = false;
        for _ in 0..12 {
            for i in 0..d {
                probe[i] = (x[i] + t * g[i] / gnorm).clamp(0.0, 1.0);
            }
            let fc = state.value_unit(&probe);
            if fc > f {
                x.copy_from_slice(&probe);
                f = fc;
                moved = true;
                t = (t * 2.0).min(0.5);
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use crate::gp::KernelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_gp() -> TrainedGp {
        let pts: Vec<(ParamVector, f64)> = [0.1, 0.3, 0.55, 0.8, 0.95]
            .iter()
            .map(|&x: &f64| (ParamVector::new(vec![x]), (6.0 * x).sin()))
            .collect();
        let kp = KernelParams {
            signal_variance: 1.0,
            length_scales: vec![0.15],
            noise_variance: 0.0,
        };
        TrainedGp::with_params(&BoxDomain::unit(1), &pts, kp).unwrap()
    }

    #[test]
    fn term_at_zero_is_ln2() {
        assert!((mes_term(0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn term_vanishes_for_large_gamma() {
        assert!(mes_term(40.0) < 1e-12);
        assert_eq!(mes_term(f64::INFINITY), 0.0);
    }

    #[test]
    fn asymptotic_branch_is_continuous() {
        let a = mes_term(ASYMPTOTIC_GAMMA - 1e-9);
        let b = mes_term(ASYMPTOTIC_GAMMA + 1e-9);
        assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
    }

    #[test]
    fn zero_std_below_all_maxima_is_zero() {
        assert_eq!(mes_from_moments(-1.0, 0.0, &[0.0, 0.5]), 0.0);
        assert!(mes_from_moments(1.0, 0.0, &[0.0, 0.5]).is_finite());
    }

    #[test]
    fn samples_are_reproducible_and_above_best() {
        let gp = toy_gp();
        let a = sample_max_values(&gp, 5, 200, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_max_values(&gp, 5, 200, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let best = best_observed(&gp);
        assert!(a.iter().all(|&v| v >= best));
    }

    #[test]
    fn gumbel_quartiles_match_target_distribution() {
        // A single grid point: the maximum is exactly N(m, s²). The fit must
        // reproduce its median and interquartile range.
        let (a, b) = gumbel_fit(&[(2.0, 0.5)], f64::NEG_INFINITY);
        let q = |p: f64| a - b * (-p.ln()).ln();
        let z75 = 0.674_489_750_196_081_7;
        assert!((q(0.5) - 2.0).abs() < 1e-9);
        assert!((q(0.75) - q(0.25) - 2.0 * 0.5 * z75).abs() < 1e-9);
    }

    #[test]
    fn maximizer_stays_inside_and_beats_screening() {
        let gp = toy_gp();
        let cfg = AcquisitionConfig {
            candidates_per_dim: 50,
            ..AcquisitionConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let state = AcquisitionState::new(&gp, &cfg, &mut rng);
        let (theta, v) = maximize_acquisition(&state, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(gp.domain().contains(&theta));
        assert!((mes_value(&theta, &state) - v).abs() < 1e-12);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let screened = (0..50)
            .map(|_| state.value_unit(&[r.random::<f64>()]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(v >= screened);
        let again = maximize_acquisition(&state, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(again.0, theta);
    }
}
