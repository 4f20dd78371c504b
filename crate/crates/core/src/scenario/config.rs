//! Versioned JSON scenario configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "params": { "units": "scaled", "neg_b": 0.8, "b_x": 0.2, "inv_a": 10, "u_e": 450 },
//!   "duration": 14400,
//!   "source": { "kind": "experiment_i", "amplitude": 50 }
//! }
//! ```
//!
//! Every other field has a default; see [`ScenarioConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trace::{import_trace, TraceColumns};
use crate::error::{Error, Result};
use crate::identifiers::AdaptationGains;
use crate::model::{Experiment, ModelParams, PiecewiseConstantSignal, SignalUnit};
use crate::numerics::Grid;
use crate::observer::Poles;

pub const SCHEMA_VERSION: u32 = 1;

/// Model constants, either in SI seconds or in scaled room units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "units", rename_all = "snake_case")]
pub enum ParamSpec {
    /// `-b` in 1/(100 s), `b_x` in 1/(10^4 s), `inv_a` in 100 s.
    Scaled {
        neg_b: f64,
        b_x: f64,
        inv_a: f64,
        u_e: f64,
    },
    Si {
        a: f64,
        b: f64,
        b_x: f64,
        u_e: f64,
    },
    /// Experiment I room.
    RoomI,
    /// Experiment II room.
    RoomIi,
}

impl ParamSpec {
    pub fn resolve(&self) -> Result<ModelParams> {
        match *self {
            ParamSpec::Scaled {
                neg_b,
                b_x,
                inv_a,
                u_e,
            } => ModelParams::from_scaled_units(neg_b, b_x, inv_a, u_e),
            ParamSpec::Si { a, b, b_x, u_e } => ModelParams::new(a, b, b_x, u_e),
            ParamSpec::RoomI => Ok(ModelParams::room_i()),
            ParamSpec::RoomIi => Ok(ModelParams::room_ii()),
        }
    }
}

/// Source of an exogenous signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant {
        value: f64,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    ExperimentI {
        #[serde(default = "default_pump")]
        amplitude: f64,
        #[serde(default = "default_hour")]
        period: f64,
        #[serde(default = "default_duty")]
        duty: f64,
    },
    ExperimentIi {
        #[serde(default = "default_person")]
        per_person: f64,
        #[serde(default = "default_hour")]
        segment: f64,
    },
    /// CSV trace, path relative to the config file.
    Trace {
        path: PathBuf,
        #[serde(default = "default_time_column")]
        time_column: String,
        #[serde(default = "default_value_column")]
        value_column: String,
    },
}

fn default_pump() -> f64 {
    Experiment::DEFAULT_PUMP_RATE
}
fn default_person() -> f64 {
    Experiment::DEFAULT_PER_PERSON_RATE
}
fn default_hour() -> f64 {
    3600.0
}
fn default_duty() -> f64 {
    0.5
}
fn default_time_column() -> String {
    "t_seconds".into()
}
fn default_value_column() -> String {
    "value".into()
}

impl SignalSpec {
    pub fn resolve(
        &self,
        unit: SignalUnit,
        duration: f64,
        base_dir: &Path,
    ) -> Result<PiecewiseConstantSignal> {
        match self {
            SignalSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidSignal("non-finite constant".into()));
                }
                Ok(PiecewiseConstantSignal::constant(*value, unit))
            }
            SignalSpec::Piecewise {
                breakpoints,
                values,
            } => PiecewiseConstantSignal::new(breakpoints.clone(), values.clone(), unit),
            SignalSpec::ExperimentI {
                amplitude,
                period,
                duty,
            } => Experiment::ExperimentI {
                amplitude: *amplitude,
                period: *period,
                duty: *duty,
            }
            .source_signal(duration),
            SignalSpec::ExperimentIi {
                per_person,
                segment,
            } => Experiment::ExperimentII {
                per_person: *per_person,
                segment: *segment,
            }
            .source_signal(duration),
            SignalSpec::Trace {
                path,
                time_column,
                value_column,
            } => import_trace(
                &base_dir.join(path),
                &TraceColumns {
                    time: time_column.clone(),
                    value: value_column.clone(),
                },
                unit,
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Closed-loop eigenvalues of `A - L C`; default `{-2a, -3a}`.
    #[serde(default)]
    pub poles: Option<Poles>,
    /// Initial `û`, constant over x; default is the supply boundary datum at t = 0.
    #[serde(default)]
    pub initial_u: Option<f64>,
    #[serde(default)]
    pub initial_x: f64,
    #[serde(default)]
    pub initial_v: f64,
    /// Standard deviation of additive Gaussian noise on `u(1,t)`, ppm.
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifierConfig {
    /// Known upper bound on `b`, 1/s.
    #[serde(default = "default_b_bar")]
    pub b_bar: f64,
    /// Pole of the `Ω0`, `Ω` filters, 1/s.
    #[serde(default = "default_a_bar")]
    pub a_bar: f64,
    #[serde(default)]
    pub gains: AdaptationGains,
    /// Initial `b̂`, 1/s; default `min(1.5 b, b̄)`.
    #[serde(default)]
    pub initial_b: Option<f64>,
    /// Initial `b̂_X`, 1/s; default `b_X / 2`.
    #[serde(default)]
    pub initial_b_x: Option<f64>,
    /// Initial `â`, 1/s; default `a / 2`.
    #[serde(default)]
    pub initial_a: Option<f64>,
    #[serde(default)]
    pub initial_omega0: f64,
    #[serde(default)]
    pub initial_omega: f64,
}

fn default_b_bar() -> f64 {
    -1e-3
}
fn default_a_bar() -> f64 {
    -1e-2
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        Self {
            b_bar: default_b_bar(),
            a_bar: default_a_bar(),
            gains: AdaptationGains::default(),
            initial_b: None,
            initial_b_x: None,
            initial_a: None,
            initial_omega0: 0.0,
            initial_omega: 0.0,
        }
    }
}

/// Scenario as written in the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub params: ParamSpec,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Simulated time, s.
    pub duration: f64,
    /// Output sampling period, s.
    #[serde(default = "default_sample_period")]
    pub sample_period: f64,
    /// Initial concentration field, ppm (constant over x).
    #[serde(default = "default_initial_u")]
    pub initial_u: f64,
    #[serde(default)]
    pub initial_x: f64,
    /// Human source rate `V`, ppm/s.
    pub source: SignalSpec,
    /// Supply concentration `U`, ppm; default constant `U_e`.
    #[serde(default)]
    pub supply: Option<SignalSpec>,
    /// Ramp length replacing jumps of `U` in the identifier modes, s.
    #[serde(default = "default_ramp")]
    pub supply_ramp: f64,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub identifier: IdentifierConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_n() -> usize {
    201
}
fn default_safety() -> f64 {
    0.5
}
fn default_sample_period() -> f64 {
    10.0
}
fn default_initial_u() -> f64 {
    400.0
}
fn default_ramp() -> f64 {
    10.0
}

impl ScenarioConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(params: ParamSpec, duration: f64, source: SignalSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params,
            grid_n: default_grid_n(),
            safety: default_safety(),
            duration,
            sample_period: default_sample_period(),
            initial_u: default_initial_u(),
            initial_x: 0.0,
            source,
            supply: None,
            supply_ramp: default_ramp(),
            observer: ObserverConfig::default(),
            identifier: IdentifierConfig::default(),
            seed: 0,
        }
    }

    /// Experiment I room driven by the default pump square wave.
    pub fn experiment_i(duration: f64) -> Self {
        Self::new(
            ParamSpec::RoomI,
            duration,
            SignalSpec::ExperimentI {
                amplitude: default_pump(),
                period: default_hour(),
                duty: default_duty(),
            },
        )
    }

    /// Experiment II room driven by the default occupancy staircase.
    pub fn experiment_ii(duration: f64) -> Self {
        let mut cfg = Self::new(
            ParamSpec::RoomIi,
            duration,
            SignalSpec::ExperimentIi {
                per_person: default_person(),
                segment: default_hour(),
            },
        );
        cfg.initial_u = 400.0;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::Config(format!(
                "sample_period must be positive, got {}",
                self.sample_period
            )));
        }
        if self.supply_ramp.is_nan() || self.supply_ramp < 0.0 {
            return Err(Error::Config("supply_ramp must be non-negative".into()));
        }
        if !(self.initial_u.is_finite() && self.initial_x.is_finite()) {
            return Err(Error::Config("initial state must be finite".into()));
        }
        if !(self.observer.noise_std >= 0.0 && self.observer.noise_std.is_finite()) {
            return Err(Error::Config(
                "observer.noise_std must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Resolves signals and parameters. Trace paths are taken relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        self.validate()?;
        let params = self.params.resolve()?;
        let grid = Grid::new(self.grid_n)?;
        let step_dt = self.safety * grid.dx() / params.b.abs();
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "safety",
                value: self.safety,
                reason: "safety factor must lie in (0, 1]",
            });
        }
        if self.sample_period < step_dt {
            return Err(Error::Config(format!(
                "sample_period {} is shorter than the solver step {step_dt}",
                self.sample_period
            )));
        }
        let source = self
            .source
            .resolve(SignalUnit::PpmPerSecond, self.duration, base_dir)?;
        let supply = match &self.supply {
            Some(spec) => spec.resolve(SignalUnit::Ppm, self.duration, base_dir)?,
            None => PiecewiseConstantSignal::constant(params.u_e, SignalUnit::Ppm),
        };
        Ok(Scenario {
            params,
            grid,
            safety: self.safety,
            duration: self.duration,
            sample_period: self.sample_period,
            initial_u: self.initial_u,
            initial_x: self.initial_x,
            source,
            supply,
            supply_ramp: self.supply_ramp,
            observer: self.observer.clone(),
            identifier: self.identifier.clone(),
            seed: self.seed,
        })
    }
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ModelParams,
    pub grid: Grid,
    pub safety: f64,
    pub duration: f64,
    pub sample_period: f64,
    pub initial_u: f64,
    pub initial_x: f64,
    pub source: PiecewiseConstantSignal,
    pub supply: PiecewiseConstantSignal,
    pub supply_ramp: f64,
    pub observer: ObserverConfig,
    pub identifier: IdentifierConfig,
    pub seed: u64,
}
