//! Room CO2 model: a transport PDE for the ceiling-level concentration driven
//! by a first-order source state.
//!
//! ```text
//! X'(t)    = -a X(t) + V(t)
//! V'(t)    = 0                       (piecewise constant)
//! u_t(x,t) = b u_x(x,t) + b_X X(t)   on 0 < x <= 1
//! u(0,t)   = 2 U_e - U(t)
//! ```
//!
//! `x = 0` is the air supply and `x = 1` the air return. Internally all rates
//! are in 1/s and concentrations in ppm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Grid};

/// Physical constants of the model, stored in SI seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Inverse time constant of the human source, 1/s.
    pub a: f64,
    /// Convection coefficient, 1/s. Negative: air moves from supply to return.
    pub b: f64,
    /// Source coefficient, 1/s.
    pub b_x: f64,
    /// Equilibrium supply concentration, ppm.
    pub u_e: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, b_x: f64, u_e: f64) -> Result<Self> {
        let p = Self { a, b, b_x, u_e };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the scaled units used to tabulate room constants:
    /// `-b` in 1/(100 s), `b_X` in 1/(10^4 s), `1/a` in 100 s.
    pub fn from_scaled_units(neg_b: f64, b_x: f64, inv_a: f64, u_e: f64) -> Result<Self> {
        Self::new(1.0 / (inv_a * 100.0), -neg_b / 100.0, b_x / 1e4, u_e)
    }

    /// Experiment I room (pump release).
    pub fn room_i() -> Self {
        Self::from_scaled_units(0.8, 0.2, 10.0, 450.0).expect("valid constants")
    }

    /// Experiment II room (occupants).
    pub fn room_ii() -> Self {
        Self::from_scaled_units(0.8, 0.16, 10.0, 370.0).expect("valid constants")
    }

    /// `-b` in 1/(100 s).
    pub fn scaled_neg_b(&self) -> f64 {
        -self.b * 100.0
    }

    /// `b_X` in 1/(10^4 s).
    pub fn scaled_b_x(&self) -> f64 {
        self.b_x * 1e4
    }

    /// `1/a` in 100 s.
    pub fn scaled_inv_a(&self) -> f64 {
        1.0 / (self.a * 100.0)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name, value: f64, ok: bool, reason| {
            if !value.is_finite() {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                })
            } else if !ok {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason,
                })
            } else {
                Ok(())
            }
        };
        check("a", self.a, self.a > 0.0, "must be positive")?;
        check("b", self.b, self.b < 0.0, "must be negative")?;
        check("b_x", self.b_x, self.b_x >= 0.0, "must be non-negative")?;
        check("u_e", self.u_e, self.u_e > 0.0, "must be positive")
    }

    /// Supply boundary value `u(0,t) = U_e - (U - U_e)`.
    pub fn inflow(&self, u_supply: f64) -> f64 {
        2.0 * self.u_e - u_supply
    }

    /// Time for air to cross the room, `1/|b|`.
    pub fn transit_time(&self) -> f64 {
        1.0 / self.b.abs()
    }

    /// Equilibrium field for constant `V` and `U`:
    /// `u(x) = (2 U_e - U) + (b_X / -b) (V / a) x`.
    pub fn steady_state_profile(&self, grid: &Grid, v_const: f64, u_const: f64) -> Vec<f64> {
        let base = self.inflow(u_const);
        let slope = -self.b_x / self.b * v_const / self.a;
        grid.sample(|x| base + slope * x)
    }
}

/// Physical unit carried by a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalUnit {
    Ppm,
    PpmPerSecond,
}

/// Zero-order-hold signal. `values[k]` holds on `[breakpoints[k-1], breakpoints[k])`,
/// with `values[0]` before the first breakpoint and the last value after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    unit: SignalUnit,
}

impl PiecewiseConstantSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, unit: SignalUnit) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidSignal(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite entry".into()));
        }
        if let Some(k) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSignal(format!(
                "breakpoints not strictly increasing at index {}",
                k + 1
            )));
        }
        Ok(Self {
            breakpoints,
            values,
            unit,
        })
    }

    pub fn constant(value: f64, unit: SignalUnit) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
            unit,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> SignalUnit {
        self.unit
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        self.values[k]
    }

    /// Continuous version with every jump replaced by a linear ramp of length
    /// `ramp` starting at the breakpoint. `ramp <= 0` gives [`eval`](Self::eval).
    pub fn eval_ramped(&self, t: f64, ramp: f64) -> f64 {
        if ramp <= 0.0 {
            return self.eval(t);
        }
        self.breakpoints
            .iter()
            .zip(self.values.windows(2))
            .take_while(|(&b, _)| b < t)
            .fold(self.values[0], |acc, (&b, w)| {
                acc + (w[1] - w[0]) * ((t - b) / ramp).min(1.0)
            })
    }
}

/// Which of the two room experiments to synthesise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// Pump released periodically: on for `duty * period`, then off.
    ExperimentI {
        amplitude: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default = "default_duty")]
        duty: f64,
    },
    /// Occupancy staircase: two people, one, none, one; each for `segment` seconds.
    ExperimentII {
        per_person: f64,
        #[serde(default = "default_period")]
        segment: f64,
    },
}

fn default_period() -> f64 {
    3600.0
}

fn default_duty() -> f64 {
    0.5
}

impl Experiment {
    /// Default pump level. Gives a return-vent swing of roughly 100 ppm with the
    /// Experiment I room.
    pub const DEFAULT_PUMP_RATE: f64 = 50.0;
    /// Default per-occupant source level, ppm/s.
    pub const DEFAULT_PER_PERSON_RATE: f64 = 20.0;

    pub fn experiment_i() -> Self {
        Experiment::ExperimentI {
            amplitude: Self::DEFAULT_PUMP_RATE,
            period: default_period(),
            duty: default_duty(),
        }
    }

    pub fn experiment_ii() -> Self {
        Experiment::ExperimentII {
            per_person: Self::DEFAULT_PER_PERSON_RATE,
            segment: default_period(),
        }
    }

    /// Human-source signal `V` covering `[0, duration]`.
    pub fn source_signal(&self, duration: f64) -> Result<PiecewiseConstantSignal> {
        match *self {
            Experiment::ExperimentI {
                amplitude,
                period,
                duty,
            } => {
                positive("amplitude", amplitude)?;
                positive("period", period)?;
                if !(duty > 0.0 && duty < 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "duty",
                        value: duty,
                        reason: "duty cycle must lie in (0, 1)",
                    });
                }
                let mut breakpoints = Vec::new();
                let mut values = vec![amplitude];
                let mut start = 0.0;
                while start < duration {
                    breakpoints.push(start + duty * period);
                    values.push(0.0);
                    breakpoints.push(start + period);
                    values.push(amplitude);
                    start += period;
                }
                PiecewiseConstantSignal::new(breakpoints, values, SignalUnit::PpmPerSecond)
            }
            Experiment::ExperimentII {
                per_person,
                segment,
            } => {
                positive("per_person", per_person)?;
                positive("segment", segment)?;
                PiecewiseConstantSignal::new(
                    vec![segment, 2.0 * segment, 3.0 * segment],
                    vec![2.0 * per_person, per_person, 0.0, per_person],
                    SignalUnit::PpmPerSecond,
                )
            }
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive",
        })
    }
}

/// `(V, U)` for an experiment; `U` is held at `U_e`.
pub fn experiment_signals(
    experiment: &Experiment,
    duration: f64,
    params: &ModelParams,
) -> Result<(PiecewiseConstantSignal, PiecewiseConstantSignal)> {
    Ok((
        experiment.source_signal(duration)?,
        PiecewiseConstantSignal::constant(params.u_e, SignalUnit::Ppm),
    ))
}

/// Sampled plant state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Concentration field, ppm.
    pub u: Vec<f64>,
    /// Human source state, ppm.
    pub x: f64,
    /// Human source rate, ppm/s.
    pub v: f64,
    pub t: f64,
}

/// Time derivative of the plant. `du[0]` is zero: the supply node is pinned to
/// `boundary` rather than evolved.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantRhs {
    pub du: Vec<f64>,
    pub dx: f64,
    pub dv: f64,
    pub boundary: f64,
}

impl PlantState {
    pub fn uniform(grid: &Grid, u0: f64, x: f64, v: f64) -> Self {
        Self {
            u: grid.constant(u0),
            x,
            v,
            t: 0.0,
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        grid.check(&self.u)?;
        if !(self.x.is_finite() && self.v.is_finite() && self.t.is_finite())
            || self.u.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("plant state"));
        }
        Ok(())
    }

    pub fn supply(&self) -> f64 {
        self.u[0]
    }

    /// Concentration at the air return, `u(1,t)`.
    pub fn output(&self) -> f64 {
        self.u[self.u.len() - 1]
    }

    /// Advances the plant by one explicit step. `v_next` and `u_next` are the
    /// input values at `t + dt`; the step itself uses the values held at `t`.
    pub fn step(
        &mut self,
        params: &ModelParams,
        grid: &Grid,
        dt: f64,
        v_next: f64,
        u_next: f64,
    ) -> Result<()> {
        let source = params.b_x * self.x;
        numerics::advect_step(
            &mut self.u,
            grid,
            params.b,
            |_| source,
            params.inflow(u_next),
            dt,
        )?;
        self.x = numerics::ode_step(self.x, -params.a * self.x + self.v, dt);
        self.v = v_next;
        self.t += dt;
        Ok(())
    }
}

/// Right-hand side of the model with `u_x` from the upwind stencil.
pub fn plant_rhs(
    state: &PlantState,
    params: &ModelParams,
    grid: &Grid,
    u_now: f64,
) -> Result<PlantRhs> {
    state.check(grid)?;
    if !u_now.is_finite() {
        return Err(Error::NonFinite("supply concentration"));
    }
    let source = params.b_x * state.x;
    let mut du: Vec<f64> = numerics::upwind_gradient(&state.u, grid)
        .into_iter()
        .map(|ux| params.b * ux + source)
        .collect();
    du[0] = 0.0;
    Ok(PlantRhs {
        du,
        dx: -params.a * state.x + state.v,
        dv: 0.0,
        boundary: params.inflow(u_now),
    })
}
