//! Second-order lag with dead time under PID control, ITAE objective.

use std::collections::VecDeque;

use super::{Simulation, StepOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct Pt2Params {
    pub gain: f64,
    pub t1: f64,
    pub t2: f64,
    pub dead_time: f64,
    pub dt: f64,
    pub reference: f64,
    pub u_limit: f64,
    pub crash_limit: f64,
}

impl Default for Pt2Params {
    fn default() -> Self {
        Self {
            gain: 1.0,
            t1: 5.0,
            t2: 2.0,
            dead_time: 1.0,
            dt: 0.1,
            reference: 1.0,
            u_limit: 20.0,
            crash_limit: 10.0,
        }
    }
}

/// `K / ((T1 s + 1)(T2 s + 1))` discretized exactly under zero-order hold,
/// with the dead time realized as an input delay line.
#[derive(Clone, Debug)]
pub struct Pt2Plant {
    x1: f64,
    x2: f64,
    a1: f64,
    a2: f64,
    cross: f64,
    gain: f64,
    delay: VecDeque<f64>,
}

impl Pt2Plant {
    pub fn new(p: &Pt2Params) -> Self {
        let a1 = (-p.dt / p.t1).exp();
        let a2 = (-p.dt / p.t2).exp();
        let delay_steps = (p.dead_time / p.dt).round() as usize;
        Self {
            x1: 0.0,
            x2: 0.0,
            a1,
            a2,
            cross: p.t1 / (p.t1 - p.t2) * (a1 - a2),
            gain: p.gain,
            delay: std::iter::repeat_n(0.0, delay_steps).collect(),
        }
    }

    pub fn with_state(mut self, x1: f64, x2: f64) -> Self {
        self.x1 = x1;
        self.x2 = x2;
        self
    }

    pub fn output(&self) -> f64 {
        self.x2
    }

    /// Applies `u` at the delay-line input and advances one sample.
    pub fn advance(&mut self, u: f64) {
        self.delay.push_back(u);
        let applied = self.delay.pop_front().unwrap_or(u);
        let v = self.gain * applied;
        let x1 = v + (self.x1 - v) * self.a1;
        let x2 = self.a2 * self.x2 + v * (1.0 - self.a2) + (self.x1 - v) * self.cross;
        self.x1 = x1;
        self.x2 = x2;
    }
}

pub(super) struct PidLoop {
    p: Pt2Params,
    plant: Pt2Plant,
    gains: [f64; 3],
    integral: f64,
    prev_y: Option<f64>,
}

impl PidLoop {
    pub fn new(p: Pt2Params, gains: [f64; 3]) -> Self {
        Self {
            plant: Pt2Plant::new(&p),
            p,
            gains,
            integral: 0.0,
            prev_y: None,
        }
    }
}

impl Simulation for PidLoop {
    fn step(&mut self, t: usize, noise: f64) -> StepOutput {
        let dt = self.p.dt;
        let y = self.plant.output() + noise;
        let e = self.p.reference - y;
        self.integral += e * dt;
        // Derivative on measurement avoids the set-point kick.
        let deriv = self.prev_y.map_or(0.0, |py| -(y - py) / dt);
        self.prev_y = Some(y);
        let [kp, ki, kd] = self.gains;
        let u = (kp * e + ki * self.integral + kd * deriv).clamp(-self.p.u_limit, self.p.u_limit);
        let cost = t as f64 * e.abs() * dt * dt;
        self.plant.advance(u);
        let next = self.plant.output();
        StepOutput {
            u,
            y,
            cost,
            crashed: !next.is_finite() || next.abs() > self.p.crash_limit,
        }
    }
}
