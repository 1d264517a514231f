//! First-order thermal plant with a hysteresis (bang-bang) heater.

use super::{Simulation, StepOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct BoilerParams {
    /// Thermal time constant `R·C` (s).
    pub time_constant: f64,
    /// Heating rate at full power, `P / C` (K/s).
    pub heating_rate: f64,
    pub ambient: f64,
    pub setpoint: f64,
    pub initial_temperature: f64,
    pub dt: f64,
    /// Energy weight per step with the heater on.
    pub w_energy: f64,
    /// Comfort weight per kelvin outside the ±1 K band.
    pub w_comfort: f64,
    /// Wear weight per heater switching event.
    pub w_switch: f64,
    pub comfort_band: f64,
}

impl Default for BoilerParams {
    fn default() -> Self {
        Self {
            time_constant: 600.0,
            heating_rate: 0.1,
            ambient: 20.0,
            setpoint: 60.0,
            initial_temperature: 50.0,
            dt: 1.0,
            w_energy: 0.01,
            w_comfort: 1.0,
            w_switch: 2.0,
            comfort_band: 1.0,
        }
    }
}

pub(super) struct BangBangLoop {
    p: BoilerParams,
    half_width: f64,
    temperature: f64,
    heater_on: bool,
    decay: f64,
}

impl BangBangLoop {
    pub fn new(p: BoilerParams, half_width: f64) -> Self {
        Self {
            temperature: p.initial_temperature,
            heater_on: true,
            decay: (-p.dt / p.time_constant).exp(),
            half_width,
            p,
        }
    }
}

impl Simulation for BangBangLoop {
    fn step(&mut self, _t: usize, noise: f64) -> StepOutput {
        let y = self.temperature + noise;
        let e = self.p.setpoint - y;
        let was_on = self.heater_on;
        if e > self.half_width {
            self.heater_on = true;
        } else if e < -self.half_width {
            self.heater_on = false;
        }
        let u = if self.heater_on { 1.0 } else { 0.0 };
        let switched = if was_on != self.heater_on { 1.0 } else { 0.0 };
        let cost = self.p.w_energy * u
            + self.p.w_comfort * (e.abs() - self.p.comfort_band).max(0.0)
            + self.p.w_switch * switched;
        // Exact zero-order-hold solution of the linear first-order plant.
        let steady = self.p.ambient + self.p.heating_rate * self.p.time_constant * u;
        self.temperature = steady + (self.temperature - steady) * self.decay;
        StepOutput {
            u,
            y,
            cost,
            crashed: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heater_off_decays_to_ambient() {
        let p = BoilerParams {
            setpoint: 0.0,
            ..Default::default()
        };
        let mut l = BangBangLoop::new(p, 1.0);
        for t in 1..=20_000 {
            l.step(t, 0.0);
        }
        assert!((l.temperature - 20.0).abs() < 1e-6);
    }

    #[test]
    fn setpoint_is_reachable() {
        let p = BoilerParams::default();
        assert!(p.ambient + p.heating_rate * p.time_constant > p.setpoint);
    }

    #[test]
    fn hysteresis_bounds_the_oscillation() {
        let mut l = BangBangLoop::new(BoilerParams::default(), 2.0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 1..=1800 {
            let out = l.step(t, 0.0);
            if t > 600 {
                lo = lo.min(out.y);
                hi = hi.max(out.y);
            }
        }
        assert!(lo > 57.5 && hi < 62.5, "{lo} {hi}");
    }
}
