//! Gaussian-process regression with an anisotropic squared-exponential
//! kernel.
//!
//! Inputs are mapped affinely from the search box onto the unit cube and
//! targets are standardized to zero mean and unit standard deviation before
//! fitting; posterior queries are reported back in original units. The prior
//! mean is zero in standardized units.

mod hyperopt;

pub use hyperopt::{fit, log_marginal_likelihood, FitOptions, LmlObjective, NoiseMode};

use crate::domain::{BoxDomain, ParamVector};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky};

/// Relative jitter added to the gram diagonal, scaled by the signal variance.
pub const JITTER_REL: f64 = 1e-10;
/// How many times the jitter is doubled before a factorization is given up.
pub const MAX_JITTER_DOUBLINGS: u32 = 4;
/// Floor for the output standard deviation of degenerate target sets.
pub const STD_FLOOR: f64 = 1e-12;
/// Signal-variance bounds in standardized units.
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-4, 1e4);
/// Observation-noise variance bounds in standardized units (optimized noise only).
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-8, 1.0);

/// Length scale at which the squared-exponential correlation falls to
/// `correlation` over `distance` (unit-cube units).
pub fn length_scale_for_correlation(distance: f64, correlation: f64) -> f64 {
    distance / (-2.0 * correlation.ln()).sqrt()
}

/// Length-scale bounds: a correlation of 0.1 must be reachable over at least
/// 1% and at most half of the normalized domain.
pub fn length_scale_bounds() -> (f64, f64) {
    (
        length_scale_for_correlation(0.01, 0.1),
        length_scale_for_correlation(0.5, 0.1),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    /// Unit signal variance, geometric-mean length scales, no noise.
    pub fn default_for_dim(d: usize) -> Self {
        let (lo, hi) = length_scale_bounds();
        Self {
            signal_variance: 1.0,
            length_scales: vec![(lo * hi).sqrt(); d],
            noise_variance: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn is_valid(&self) -> bool {
        let (lo, hi) = length_scale_bounds();
        self.signal_variance > 0.0
            && self.noise_variance >= 0.0
            && self
                .length_scales
                .iter()
                .all(|l| *l >= lo * (1.0 - 1e-12) && *l <= hi * (1.0 + 1e-12))
    }

    /// Diagonal jitter for the `doublings`-th attempt.
    pub fn jitter(&self, doublings: u32) -> f64 {
        JITTER_REL * self.signal_variance * f64::from(1u32 << doublings)
    }
}

/// `σ_f² exp(-½ Σ ((a_i - b_i) / ℓ_i)²)`.
#[inline]
pub fn kernel_eval(a: &[f64], b: &[f64], kp: &KernelParams) -> f64 {
    let mut r2 = 0.0;
    for ((x, y), l) in a.iter().zip(b).zip(&kp.length_scales) {
        let z = (x - y) / l;
        r2 += z * z;
    }
    kp.signal_variance * (-0.5 * r2).exp()
}

/// Mean/std standardization of the targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputTransform {
    pub mean: f64,
    pub std: f64,
}

impl OutputTransform {
    pub fn from_targets(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}

/// Posterior marginal at one point, in original output units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Unit-cube inputs and standardized targets, flattened row-major.
#[derive(Clone, Debug)]
pub(crate) struct TrainingSet {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub transform: OutputTransform,
}

impl TrainingSet {
    pub fn new(domain: &BoxDomain, points: &[(ParamVector, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyData);
        }
        let d = domain.dim();
        let mut x = Vec::with_capacity(points.len() * d);
        for (theta, _) in points {
            if theta.len() != d {
                return Err(Error::InvalidDomain(format!(
                    "point of dimension {} in a {d}-dimensional domain",
                    theta.len()
                )));
            }
            x.extend(domain.to_unit(theta));
        }
        let raw: Vec<f64> = points.iter().map(|(_, y)| *y).collect();
        let transform = OutputTransform::from_targets(&raw);
        let y = raw.iter().map(|v| transform.forward(*v)).collect();
        Ok(Self {
            n: points.len(),
            d,
            x,
            y,
            transform,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Noise-free kernel matrix.
    pub fn kernel_matrix(&self, kp: &KernelParams) -> Vec<f64> {
        let n = self.n;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = kp.signal_variance;
            for j in 0..i {
                let v = kernel_eval(self.row(i), self.row(j), kp);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

/// Factorizes `K + (σ_n² + jitter) I`, doubling the jitter on failure.
/// Returns the factor and the jitter that succeeded.
pub(crate) fn factorize(kmat: &[f64], n: usize, kp: &KernelParams) -> Result<(Cholesky, f64)> {
    let mut last = 0.0;
    for doublings in 0..=MAX_JITTER_DOUBLINGS {
        let jitter = kp.jitter(doublings);
        last = jitter;
        let mut a = kmat.to_vec();
        for i in 0..n {
            a[i * n + i] += kp.noise_variance + jitter;
        }
        if let Some(c) = Cholesky::factor(a, n) {
            return Ok((c, jitter));
        }
    }
    Err(Error::Factorization { jitter: last })
}

/// A fitted GP; immutable and safe to query from several threads.
#[derive(Clone, Debug)]
pub struct TrainedGp {
    domain: BoxDomain,
    raw_inputs: Vec<ParamVector>,
    set: TrainingSet,
    kernel: KernelParams,
    jitter: f64,
    factor: Cholesky,
    alpha: Vec<f64>,
    lml: f64,
}

impl TrainedGp {
    /// Conditions a GP on `points` with fixed hyperparameters.
    pub fn with_params(
        domain: &BoxDomain,
        points: &[(ParamVector, f64)],
        kernel: KernelParams,
    ) -> Result<Self> {
        let set = TrainingSet::new(domain, points)?;
        Self::from_set(domain.clone(), points, set, kernel)
    }

    pub(crate) fn from_set(
        domain: BoxDomain,
        points: &[(ParamVector, f64)],
        set: TrainingSet,
        kernel: KernelParams,
    ) -> Result<Self> {
        if kernel.dim() != set.d {
            return Err(Error::InvalidDomain(format!(
                "{} length scales for a {}-dimensional domain",
                kernel.dim(),
                set.d
            )));
        }
        let kmat = set.kernel_matrix(&kernel);
        let (factor, jitter) = factorize(&kmat, set.n, &kernel)?;
        let mut alpha = set.y.clone();
        factor.solve_in_place(&mut alpha);
        let lml = -0.5 * dot(&set.y, &alpha)
            - 0.5 * factor.log_det(set.n)
            - 0.5 * set.n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            domain,
            raw_inputs: points.iter().map(|(t, _)| t.clone()).collect(),
            set,
            kernel,
            jitter,
            factor,
            alpha,
            lml,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.set.n
    }

    pub fn is_empty(&self) -> bool {
        self.set.n == 0
    }

    pub fn raw_inputs(&self) -> &[ParamVector] {
        &self.raw_inputs
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.set.transform
    }

    /// Standardized training targets.
    pub fn targets(&self) -> &[f64] {
        &self.set.y
    }

    /// Training inputs mapped onto the unit cube.
    pub fn unit_input(&self, i: usize) -> &[f64] {
        self.set.row(i)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and variance in standardized units at a unit-cube point.
    pub fn posterior_standardized(&self, u: &[f64]) -> (f64, f64) {
        let mut k: Vec<f64> = (0..self.set.n)
            .map(|i| kernel_eval(u, self.set.row(i), &self.kernel))
            .collect();
        let mean = dot(&k, &self.alpha);
        self.factor.solve_lower_in_place(&mut k);
        let var = (self.kernel.signal_variance - dot(&k, &k)).max(0.0);
        (mean, var)
    }

    /// Posterior at a unit-cube point, original units.
    pub fn posterior_unit(&self, u: &[f64]) -> Posterior {
        let (m, v) = self.posterior_standardized(u);
        let t = self.set.transform;
        Posterior {
            mean: t.inverse(m),
            variance: v * t.std * t.std,
        }
    }

    /// Posterior at `theta` (optimizer units), original output units.
    pub fn posterior(&self, theta: &[f64]) -> Posterior {
        self.posterior_unit(&self.domain.to_unit(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit1() -> BoxDomain {
        BoxDomain::unit(1)
    }

    #[test]
    fn kernel_zero_distance_is_signal_variance() {
        let kp = KernelParams {
            signal_variance: 2.5,
            length_scales: vec![0.1, 0.2],
            noise_variance: 0.0,
        };
        assert_eq!(kernel_eval(&[0.3, 0.7], &[0.3, 0.7], &kp), 2.5);
    }

    #[test]
    fn kernel_infinite_length_scale_limit() {
        let kp = KernelParams {
            signal_variance: 1.7,
            length_scales: vec![1e300, 1e300],
            noise_variance: 0.0,
        };
        assert_eq!(kernel_eval(&[0.0, 1.0], &[1.0, 0.0], &kp), 1.7);
    }

    #[test]
    fn kernel_unit_distance() {
        let kp = KernelParams {
            signal_variance: 1.0,
            length_scales: vec![1.0],
            noise_variance: 0.0,
        };
        let v = kernel_eval(&[0.0], &[1.0], &kp);
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kp = KernelParams {
            signal_variance: 0.8,
            length_scales: vec![0.05, 0.2, 0.1],
            noise_variance: 0.0,
        };
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            assert_eq!(kernel_eval(&a, &b, &kp), kernel_eval(&b, &a, &kp));
        }
    }

    #[test]
    fn length_scale_bounds_reach_correlation_point_one() {
        let (lo, hi) = length_scale_bounds();
        assert!((lo - 0.004_66).abs() < 1e-5, "{lo}");
        assert!((hi - 0.2330).abs() < 1e-4, "{hi}");
        for (delta, l) in [(0.01, lo), (0.5, hi)] {
            let corr = (-delta * delta / (2.0 * l * l)).exp();
            assert!((corr - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn output_transform_standardizes() {
        let y = [1.0, 4.0, -2.0, 7.5, 3.3];
        let t = OutputTransform::from_targets(&y);
        let z: Vec<f64> = y.iter().map(|v| t.forward(*v)).collect();
        let m = z.iter().sum::<f64>() / 5.0;
        let s = (z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 5.0).sqrt();
        assert!(m.abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_targets_floor_std() {
        let t = OutputTransform::from_targets(&[3.0, 3.0, 3.0]);
        assert_eq!(t.std, STD_FLOOR);
        assert_eq!(t.mean, 3.0);
    }

    #[test]
    fn single_point_interpolates() {
        let pts = vec![(ParamVector::new(vec![0.4]), 5.0)];
        let gp = TrainedGp::with_params(&unit1(), &pts, KernelParams::default_for_dim(1)).unwrap();
        let p = gp.posterior(&[0.4]);
        assert!((p.mean - 5.0).abs() < 1e-12);
        assert!(p.variance < 1e-20);
    }

    #[test]
    fn symmetric_pair_has_zero_midpoint_mean() {
        let pts = vec![
            (ParamVector::new(vec![0.3]), -1.0),
            (ParamVector::new(vec![0.7]), 1.0),
        ];
        let gp = TrainedGp::with_params(&unit1(), &pts, KernelParams::default_for_dim(1)).unwrap();
        assert!(gp.posterior(&[0.5]).mean.abs() < 1e-12);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let dom = BoxDomain::new(vec![0.0], vec![100.0]).unwrap();
        let pts = vec![
            (ParamVector::new(vec![1.0]), 2.0),
            (ParamVector::new(vec![2.0]), 6.0),
        ];
        let kp = KernelParams {
            signal_variance: 1.3,
            length_scales: vec![0.005],
            noise_variance: 0.0,
        };
        let gp = TrainedGp::with_params(&dom, &pts, kp).unwrap();
        let p = gp.posterior(&[90.0]);
        let t = gp.output_transform();
        assert!((p.mean - t.mean).abs() < 1e-12);
        assert!((p.variance - 1.3 * t.std * t.std).abs() < 1e-9);
    }

    #[test]
    fn duplicate_inputs_with_conflicting_targets_factorize() {
        let pts = vec![
            (ParamVector::new(vec![0.5, 0.5]), 1.0),
            (ParamVector::new(vec![0.5, 0.5]), 2.0),
            (ParamVector::new(vec![0.1, 0.9]), 0.0),
        ];
        let gp =
            TrainedGp::with_params(&BoxDomain::unit(2), &pts, KernelParams::default_for_dim(2));
        assert!(gp.is_ok());
        let opts = FitOptions::default();
        assert!(fit(&BoxDomain::unit(2), &pts, &opts).is_ok());
    }
}
