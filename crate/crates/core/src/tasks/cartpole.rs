//! Cart-pole balancing under linear state feedback `u = -K x`.

use super::{Simulation, StepOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length (m).
    pub half_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_limit: f64,
    pub initial_angle: f64,
    pub angle_limit: f64,
    pub position_limit: f64,
    /// State weights on (position, velocity, angle, angular velocity).
    pub q: [f64; 4],
    pub r: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.8,
            dt: 0.02,
            force_limit: 30.0,
            initial_angle: 0.1,
            angle_limit: 0.8,
            position_limit: 2.4,
            q: [1.0, 0.1, 10.0, 0.1],
            r: 0.01,
        }
    }
}

/// `(position, velocity, angle, angular velocity)`.
pub type CartPoleState = [f64; 4];

impl CartPoleParams {
    pub fn derivative(&self, s: &CartPoleState, force: f64) -> CartPoleState {
        let [_, v, th, om] = *s;
        let total = self.cart_mass + self.pole_mass;
        let (sin, cos) = th.sin_cos();
        let temp = (force + self.pole_mass * self.half_length * om * om * sin) / total;
        let alpha = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let acc = temp - self.pole_mass * self.half_length * alpha * cos / total;
        [v, acc, om, alpha]
    }

    /// Jacobian of [`derivative`](Self::derivative) at the upright rest state.
    pub fn linearize(&self) -> ([[f64; 4]; 4], [f64; 4]) {
        let total = self.cart_mass + self.pole_mass;
        let denom = self.half_length * (4.0 / 3.0 - self.pole_mass / total);
        let a_th = self.gravity / denom;
        let b_th = -1.0 / (total * denom);
        let ml = self.pole_mass * self.half_length / total;
        (
            [
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, -ml * a_th, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 0.0, a_th, 0.0],
            ],
            [0.0, 1.0 / total - ml * b_th, 0.0, b_th],
        )
    }

    pub fn stage_cost(&self, s: &CartPoleState, u: f64) -> f64 {
        s.iter().zip(&self.q).map(|(x, q)| q * x * x).sum::<f64>() + self.r * u * u
    }

    pub fn initial_state(&self) -> CartPoleState {
        [0.0, 0.0, self.initial_angle, 0.0]
    }
}

pub(super) struct StateFeedbackLoop {
    p: CartPoleParams,
    gains: [f64; 4],
    state: CartPoleState,
}

impl StateFeedbackLoop {
    pub fn new(p: CartPoleParams, gains: [f64; 4]) -> Self {
        Self {
            state: p.initial_state(),
            p,
            gains,
        }
    }
}

impl Simulation for StateFeedbackLoop {
    fn step(&mut self, _t: usize, noise: f64) -> StepOutput {
        let mut measured = self.state;
        measured[2] += noise;
        let u = -self
            .gains
            .iter()
            .zip(&measured)
            .map(|(k, x)| k * x)
            .sum::<f64>();
        let u = u.clamp(-self.p.force_limit, self.p.force_limit);
        let cost = self.p.stage_cost(&self.state, u);
        let y = self.state[2];
        self.state = super::rk4(&self.state, self.p.dt, |s| self.p.derivative(s, u));
        let [x, _, th, _] = self.state;
        let crashed = self.state.iter().any(|v| !v.is_finite())
            || th.abs() > self.p.angle_limit
            || x.abs() > self.p.position_limit;
        StepOutput {
            u,
            y,
            cost,
            crashed,
        }
    }
}
