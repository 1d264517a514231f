//! The five simulated closed-loop tuning tasks.
//!
//! Each task couples a plant model with a parameterized controller and a
//! non-negative stage cost whose sum over an episode is the tuning
//! objective. Parameters are exposed to the optimizer in optimizer units:
//! gains flagged as log-scaled are given as base-10 exponents.

mod boiler;
mod cartpole;
mod pt2;
mod threetank;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

pub use boiler::BoilerParams;
pub use cartpole::{CartPoleParams, CartPoleState};
pub use pt2::{Pt2Params, Pt2Plant};
pub use threetank::{ThreeTankParams, ThreeTankPlant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    BoilerBangbang,
    ThreetankPi,
    Pt2Pid,
    CartpoleSf,
    ThreetankMpc,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::BoilerBangbang,
        TaskId::ThreetankPi,
        TaskId::Pt2Pid,
        TaskId::CartpoleSf,
        TaskId::ThreetankMpc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::BoilerBangbang => "boiler_bangbang",
            TaskId::ThreetankPi => "threetank_pi",
            TaskId::Pt2Pid => "pt2_pid",
            TaskId::CartpoleSf => "cartpole_sf",
            TaskId::ThreetankMpc => "threetank_mpc",
        }
    }

    /// Parameter dimension of the registered task.
    pub fn dim(&self) -> usize {
        make_task(*self).dim()
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    EnergyComfort,
    Mse,
    Itae,
    LqrCost,
    Mae,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::EnergyComfort => "energy_comfort",
            Objective::Mse => "mse",
            Objective::Itae => "itae",
            Objective::LqrCost => "lqr",
            Objective::Mae => "mae",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    /// Optimizer sees `log10` of the physical value.
    pub log10: bool,
}

impl ParamSpec {
    const fn linear(name: &'static str, lower: f64, upper: f64) -> Self {
        Self {
            name,
            lower,
            upper,
            log10: false,
        }
    }

    const fn log(name: &'static str, lower_exp: f64, upper_exp: f64) -> Self {
        Self {
            name,
            lower: lower_exp,
            upper: upper_exp,
            log10: true,
        }
    }

    pub fn to_physical(&self, v: f64) -> f64 {
        if self.log10 {
            10f64.powf(v)
        } else {
            v
        }
    }
}

/// One simulation step's observables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub u: f64,
    pub y: f64,
    pub cost: f64,
    /// The plant left its admissible region (or went non-finite) during this step.
    pub crashed: bool,
}

/// A running closed loop at its current time step.
pub trait Simulation {
    /// Advances the loop by one step. `t` is the 1-based step index and
    /// `noise` is an additive measurement disturbance on the controlled output.
    fn step(&mut self, t: usize, noise: f64) -> StepOutput;
}

#[derive(Clone, Debug, PartialEq)]
enum Plant {
    Boiler(BoilerParams),
    ThreeTankPi(ThreeTankParams),
    Pt2(Pt2Params),
    CartPole(CartPoleParams),
    ThreeTankMpc(ThreeTankParams),
}

/// A fully parameterized tuning task.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopTask {
    id: TaskId,
    params: Vec<ParamSpec>,
    domain: BoxDomain,
    t_max: usize,
    dt: f64,
    objective: Objective,
    crashes: bool,
    measurement_noise: f64,
    plant: Plant,
}

impl ClosedLoopTask {
    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Whether the task has a crash predicate at all.
    pub fn can_crash(&self) -> bool {
        self.crashes
    }

    pub fn measurement_noise(&self) -> f64 {
        self.measurement_noise
    }

    /// Same task with additive Gaussian measurement noise of the given std.
    pub fn with_measurement_noise(mut self, std: f64) -> Self {
        self.measurement_noise = std.max(0.0);
        self
    }

    /// Physical controller parameters for `theta` (optimizer units).
    pub fn physical(&self, theta: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(theta)
            .map(|(p, v)| p.to_physical(*v))
            .collect()
    }

    /// Starts a closed loop at the nominal initial state.
    pub fn start(&self, theta: &[f64]) -> Box<dyn Simulation> {
        assert_eq!(theta.len(), self.dim(), "parameter dimension mismatch");
        let phys = self.physical(theta);
        match &self.plant {
            Plant::Boiler(p) => Box::new(boiler::BangBangLoop::new(p.clone(), phys[0])),
            Plant::ThreeTankPi(p) => Box::new(threetank::PiLoop::new(
                p.clone(),
                phys[0],
                phys[1],
                self.t_max,
            )),
            Plant::Pt2(p) => Box::new(pt2::PidLoop::new(p.clone(), [phys[0], phys[1], phys[2]])),
            Plant::CartPole(p) => Box::new(cartpole::StateFeedbackLoop::new(
                p.clone(),
                [phys[0], phys[1], phys[2], phys[3]],
            )),
            Plant::ThreeTankMpc(p) => Box::new(threetank::MpcLoop::new(
                p.clone(),
                threetank::MpcWeights::from_physical(&phys),
                self.t_max,
            )),
        }
    }
}

/// Builds the registry entry for `id`.
pub fn make_task(id: TaskId) -> ClosedLoopTask {
    let (params, t_max, dt, objective, crashes, plant) = match id {
        TaskId::BoilerBangbang => (
            vec![ParamSpec::linear("hysteresis_half_width", 0.1, 10.0)],
            1800,
            1.0,
            Objective::EnergyComfort,
            false,
            Plant::Boiler(BoilerParams::default()),
        ),
        TaskId::ThreetankPi => (
            vec![
                ParamSpec::log("kp", -2.0, 2.0),
                ParamSpec::log("ki", -2.0, 2.0),
            ],
            900,
            1.0,
            Objective::Mse,
            false,
            Plant::ThreeTankPi(ThreeTankParams::default()),
        ),
        TaskId::Pt2Pid => (
            vec![
                ParamSpec::log("kp", -2.0, 2.0),
                ParamSpec::log("ki", -2.0, 2.0),
                ParamSpec::log("kd", -2.0, 2.0),
            ],
            600,
            0.1,
            Objective::Itae,
            true,
            Plant::Pt2(Pt2Params::default()),
        ),
        TaskId::CartpoleSf => (
            vec![
                ParamSpec::linear("k_position", -10.0, 0.0),
                ParamSpec::linear("k_velocity", -20.0, 0.0),
                ParamSpec::linear("k_angle", -80.0, 0.0),
                ParamSpec::linear("k_angular_velocity", -20.0, 0.0),
            ],
            500,
            0.02,
            Objective::LqrCost,
            true,
            Plant::CartPole(CartPoleParams::default()),
        ),
        TaskId::ThreetankMpc => (
            vec![
                ParamSpec::log("q_tank1", -3.0, 3.0),
                ParamSpec::log("q_tank3", -3.0, 3.0),
                ParamSpec::log("r_input", -3.0, 3.0),
                ParamSpec::linear("horizon", 5.0, 40.0),
                ParamSpec::log("s_input_rate", -3.0, 3.0),
            ],
            900,
            1.0,
            Objective::Mae,
            true,
            Plant::ThreeTankMpc(ThreeTankParams::default()),
        ),
    };
    let domain = BoxDomain::new(
        params.iter().map(|p| p.lower).collect(),
        params.iter().map(|p| p.upper).collect(),
    )
    .expect("registry bounds are valid");
    ClosedLoopTask {
        id,
        params,
        domain,
        t_max,
        dt,
        objective,
        crashes,
        measurement_noise: 0.0,
        plant,
    }
}

/// Looks a task up by its registry name.
pub fn task_by_name(name: &str) -> Result<ClosedLoopTask> {
    Ok(make_task(name.parse()?))
}

/// Classic fixed-step fourth-order Runge-Kutta.
pub(crate) fn rk4<const N: usize>(
    x: &[f64; N],
    h: f64,
    f: impl Fn(&[f64; N]) -> [f64; N],
) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, h / 2.0));
    let k3 = f(&add(x, &k2, h / 2.0));
    let k4 = f(&add(x, &k3, h));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}
