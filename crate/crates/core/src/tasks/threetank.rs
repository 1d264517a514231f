//! Triple-tank level process with Torricelli inter-tank flows.
//!
//! A pump feeds tank 1, water passes 1 → 2 → 3 through orifices and leaves
//! tank 3 through an outlet. The level of tank 3 is controlled, either by a
//! PI loop or by a linear MPC built on the model linearized at the target.

use nalgebra::{DMatrix, DVector, Matrix4};

use super::{Simulation, StepOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeTankParams {
    /// Tank cross-section (m²).
    pub area: f64,
    /// Orifice cross-section (m²).
    pub orifice: f64,
    /// Discharge coefficient between tanks.
    pub c_inter: f64,
    /// Discharge coefficient of the tank-3 outlet.
    pub c_out: f64,
    pub gravity: f64,
    /// Pump flow at full actuation (m³/s).
    pub q_max: f64,
    /// Tank height (m); levels are clamped here (overflow).
    pub h_max: f64,
    /// Initial equilibrium level of tank 3 (m).
    pub h3_initial: f64,
    /// Level reference of tank 3 after the step (m).
    pub h3_reference: f64,
    pub dt: f64,
    pub substeps: usize,
    /// Plant steps per MPC sample.
    pub mpc_sample_steps: usize,
}

impl Default for ThreeTankParams {
    fn default() -> Self {
        Self {
            area: 0.0154,
            orifice: 5e-5,
            c_inter: 1.0,
            c_out: 0.5,
            gravity: 9.81,
            q_max: 1e-4,
            h_max: 0.6,
            h3_initial: 0.1,
            h3_reference: 0.3,
            dt: 1.0,
            substeps: 4,
            mpc_sample_steps: 10,
        }
    }
}

fn torricelli(c: f64, area: f64, g: f64, dh: f64) -> f64 {
    c * area * dh.signum() * (2.0 * g * dh.abs()).sqrt()
}

impl ThreeTankParams {
    /// Steady-state levels and pump actuation that hold tank 3 at `h3`.
    pub fn equilibrium(&self, h3: f64) -> ([f64; 3], f64) {
        let q = self.c_out * self.orifice * (2.0 * self.gravity * h3).sqrt();
        let ratio = q / (self.c_inter * self.orifice);
        let dh = ratio * ratio / (2.0 * self.gravity);
        ([h3 + 2.0 * dh, h3 + dh, h3], q / self.q_max)
    }

    fn derivative(&self, h: &[f64; 3], u: f64) -> [f64; 3] {
        let g = self.gravity;
        let q12 = torricelli(self.c_inter, self.orifice, g, h[0] - h[1]);
        let q23 = torricelli(self.c_inter, self.orifice, g, h[1] - h[2]);
        let q3 = torricelli(self.c_out, self.orifice, g, h[2].max(0.0));
        [
            (self.q_max * u - q12) / self.area,
            (q12 - q23) / self.area,
            (q23 - q3) / self.area,
        ]
    }

    /// Continuous-time linearization `(A, B)` at the equilibrium for `h3`.
    pub fn linearize(&self, h3: f64) -> ([[f64; 3]; 3], [f64; 3]) {
        let (h, _) = self.equilibrium(h3);
        let g = self.gravity;
        let slope = |c: f64, dh: f64| c * self.orifice * g / (2.0 * g * dh).sqrt();
        let k12 = slope(self.c_inter, h[0] - h[1]);
        let k23 = slope(self.c_inter, h[1] - h[2]);
        let k3 = slope(self.c_out, h[2]);
        let a = self.area;
        (
            [
                [-k12 / a, k12 / a, 0.0],
                [k12 / a, -(k12 + k23) / a, k23 / a],
                [0.0, k23 / a, -(k23 + k3) / a],
            ],
            [self.q_max / a, 0.0, 0.0],
        )
    }
}

#[derive(Clone, Debug)]
pub struct ThreeTankPlant {
    p: ThreeTankParams,
    h: [f64; 3],
}

impl ThreeTankPlant {
    pub fn new(p: ThreeTankParams, h: [f64; 3]) -> Self {
        Self { p, h }
    }

    pub fn levels(&self) -> [f64; 3] {
        self.h
    }

    /// Integrates one step with pump actuation `u ∈ [0, 1]`. Returns whether
    /// any tank overflowed; levels are clamped to `[0, h_max]`.
    pub fn advance(&mut self, u: f64) -> bool {
        let h = self.p.dt / self.p.substeps as f64;
        let mut overflow = false;
        for _ in 0..self.p.substeps {
            let next = super::rk4(&self.h, h, |x| self.p.derivative(x, u));
            for (dst, v) in self.h.iter_mut().zip(next) {
                if v > self.p.h_max || !v.is_finite() {
                    overflow = true;
                }
                *dst = if v.is_finite() {
                    v.clamp(0.0, self.p.h_max)
                } else {
                    self.p.h_max
                };
            }
        }
        overflow
    }
}

pub(super) struct PiLoop {
    plant: ThreeTankPlant,
    reference: f64,
    u_bias: f64,
    kp: f64,
    ki: f64,
    integral: f64,
    dt: f64,
    t_max: f64,
}

impl PiLoop {
    pub fn new(p: ThreeTankParams, kp: f64, ki: f64, t_max: usize) -> Self {
        let (h0, u0) = p.equilibrium(p.h3_initial);
        Self {
            reference: p.h3_reference,
            dt: p.dt,
            plant: ThreeTankPlant::new(p, h0),
            u_bias: u0,
            kp,
            ki,
            integral: 0.0,
            t_max: t_max as f64,
        }
    }
}

impl Simulation for PiLoop {
    fn step(&mut self, _t: usize, noise: f64) -> StepOutput {
        let y = self.plant.levels()[2] + noise;
        let e = self.reference - y;
        // Conditional integration: freeze the integrator while the valve is
        // saturated and the error would push it further into saturation.
        let integral = self.integral + e * self.dt;
        let raw = self.u_bias + self.kp * e + self.ki * integral;
        if (raw < 1.0 || e < 0.0) && (raw > 0.0 || e > 0.0) {
            self.integral = integral;
        }
        let u = raw.clamp(0.0, 1.0);
        // Overflow clamps the level; this loop has no crash predicate.
        self.plant.advance(u);
        StepOutput {
            u,
            y,
            cost: e * e / self.t_max,
            crashed: false,
        }
    }
}

/// Physical MPC tuning knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcWeights {
    pub q_tank1: f64,
    pub q_tank3: f64,
    pub r_input: f64,
    pub horizon: usize,
    pub s_input_rate: f64,
}

impl MpcWeights {
    pub fn from_physical(v: &[f64]) -> Self {
        Self {
            q_tank1: v[0],
            q_tank3: v[1],
            r_input: v[2],
            horizon: v[3].round().max(1.0) as usize,
            s_input_rate: v[4],
        }
    }
}

/// First-move feedback of the unconstrained finite-horizon problem:
/// `ũ₀ = -k_x·x̃ + k_u·ũ_prev` in deviation coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcLaw {
    pub k_x: [f64; 3],
    pub k_u: f64,
}

impl MpcLaw {
    #[allow(clippy::needless_range_loop)] // block-structured matrix assembly
    pub fn design(p: &ThreeTankParams, w: &MpcWeights) -> Self {
        let (a, b) = p.linearize(p.h3_reference);
        let ts = p.dt * p.mpc_sample_steps as f64;
        let mut m = Matrix4::<f64>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = a[i][j] * ts;
            }
            m[(i, 3)] = b[i] * ts;
        }
        let e = m.exp();
        let ad = e.fixed_view::<3, 3>(0, 0).into_owned();
        let bd = e.fixed_view::<3, 1>(0, 3).into_owned();

        let n = w.horizon;
        // Stacked predictions x_i = Φ_i x0 + Σ_j Γ_ij u_j, i = 1..n.
        let mut phi = Vec::with_capacity(n);
        let mut apow = ad;
        for _ in 0..n {
            phi.push(apow);
            apow = ad * apow;
        }
        let mut gamma = DMatrix::<f64>::zeros(3 * n, n);
        for i in 0..n {
            let mut col = bd;
            for j in (0..=i).rev() {
                for r in 0..3 {
                    gamma[(3 * i + r, j)] = col[r];
                }
                col = ad * col;
            }
        }
        let qdiag = [w.q_tank1, 0.0, w.q_tank3];
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut fx = DMatrix::<f64>::zeros(n, 3);
        for i in 0..n {
            for r in 0..3 {
                if qdiag[r] == 0.0 {
                    continue;
                }
                let row = 3 * i + r;
                for j in 0..n {
                    let gj = gamma[(row, j)];
                    for k in 0..n {
                        h[(j, k)] += qdiag[r] * gj * gamma[(row, k)];
                    }
                    for c in 0..3 {
                        fx[(j, c)] += qdiag[r] * gj * phi[i][(r, c)];
                    }
                }
            }
        }
        for j in 0..n {
            h[(j, j)] += w.r_input + w.s_input_rate * if j + 1 < n { 2.0 } else { 1.0 };
            if j + 1 < n {
                h[(j, j + 1)] -= w.s_input_rate;
                h[(j + 1, j)] -= w.s_input_rate;
            }
        }
        // H U = -Fx x0 + s e₀ ũ_prev; only the first move is applied.
        let chol = h.cholesky().expect("MPC Hessian is positive definite");
        let mut e0 = DVector::<f64>::zeros(n);
        e0[0] = 1.0;
        let row0 = chol.solve(&e0);
        let mut k_x = [0.0; 3];
        for (c, k) in k_x.iter_mut().enumerate() {
            *k = (0..n).map(|j| row0[j] * fx[(j, c)]).sum();
        }
        Self {
            k_x,
            k_u: row0[0] * w.s_input_rate,
        }
    }
}

pub(super) struct MpcLoop {
    plant: ThreeTankPlant,
    law: MpcLaw,
    h_target: [f64; 3],
    u_target: f64,
    u_prev: f64,
    reference: f64,
    sample_steps: usize,
    t_max: f64,
}

impl MpcLoop {
    pub fn new(p: ThreeTankParams, w: MpcWeights, t_max: usize) -> Self {
        let (h0, u0) = p.equilibrium(p.h3_initial);
        let (h_target, u_target) = p.equilibrium(p.h3_reference);
        Self {
            law: MpcLaw::design(&p, &w),
            reference: p.h3_reference,
            sample_steps: p.mpc_sample_steps.max(1),
            plant: ThreeTankPlant::new(p, h0),
            h_target,
            u_target,
            u_prev: u0,
            t_max: t_max as f64,
        }
    }
}

impl Simulation for MpcLoop {
    fn step(&mut self, t: usize, noise: f64) -> StepOutput {
        let mut h = self.plant.levels();
        h[2] += noise;
        if (t - 1).is_multiple_of(self.sample_steps) {
            let dev: f64 = (0..3)
                .map(|i| self.law.k_x[i] * (h[i] - self.h_target[i]))
                .sum();
            let du = -dev + self.law.k_u * (self.u_prev - self.u_target);
            self.u_prev = (self.u_target + du).clamp(0.0, 1.0);
        }
        let u = self.u_prev;
        let e = self.reference - h[2];
        let overflow = self.plant.advance(u);
        StepOutput {
            u,
            y: h[2],
            cost: e.abs() / self.t_max,
            crashed: overflow,
        }
    }
}
