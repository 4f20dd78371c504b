//! Simulation, observation and identification pipelines.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::Scenario;
use crate::error::{Error, Result};
use crate::identifiers::{
    lyapunov_diagnostics, Identifier, LyapunovDiagnostics, Measurement, ParameterEstimates,
    Regressors, SwappingFilters,
};
use crate::model::PlantState;
use crate::numerics::{self, StepController};
use crate::observer::{self, ObserverKernels, ObserverState, Poles};

/// Any tracked magnitude beyond this marks the run as diverged.
pub const DIVERGENCE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Simulate,
    Observe,
    Identify,
    IdentifyKnownB,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Observe => "observe",
            Mode::Identify => "identify",
            Mode::IdentifyKnownB => "identify-known-b",
        }
    }

    fn identifies(self) -> bool {
        matches!(self, Mode::Identify | Mode::IdentifyKnownB)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "observe" => Ok(Mode::Observe),
            "identify" => Ok(Mode::Identify),
            "identify-known-b" => Ok(Mode::IdentifyKnownB),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverSample {
    pub u_hat_return: f64,
    pub x_hat: f64,
    pub v_hat: f64,
    /// Composite squared estimation error.
    pub error_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifierSample {
    pub b_hat: f64,
    pub b_x_hat: f64,
    pub a_hat: f64,
    pub lyapunov: f64,
    pub normalized_field_error: f64,
    pub normalized_eps: f64,
}

/// One output sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub t: f64,
    pub u_supply: f64,
    pub u_return: f64,
    pub x: f64,
    pub v: f64,
    /// Supply reading `U(t)`.
    pub supply: f64,
    pub observer: Option<ObserverSample>,
    pub identifier: Option<IdentifierSample>,
}

/// Peak magnitudes of the quantities the identifier is required to keep bounded:
/// `‖u‖`, the three regressor norms (`‖v‖, ‖p‖, ‖η‖` or `‖μ‖, ‖ξ‖, 0`), `|X|`,
/// `|Ω0|`, `|Ω|`, `|b̃|`, `|b̃_X|`, `|ã|`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackedPeaks(pub [f64; 10]);

impl TrackedPeaks {
    pub const NAMES: [&'static str; 10] = [
        "u", "reg1", "reg2", "reg3", "x", "omega0", "omega", "b_err", "b_x_err", "a_err",
    ];

    fn absorb(&mut self, values: &[f64; 10]) {
        for (p, v) in self.0.iter_mut().zip(values) {
            *p = p.max(v.abs());
        }
    }
}

/// Per-step statistics gathered alongside the sampled records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Steps after which `b̂ > b̄`.
    pub projection_violations: usize,
    pub lyapunov_initial: Option<f64>,
    /// Largest single-step increase of the Lyapunov function.
    pub max_lyapunov_increase: Option<f64>,
    /// `Σ dt ‖ê‖²/(1 + ‖v‖² + ‖p‖²)` over the whole run.
    pub normalized_sq_sum: f64,
    /// Same sum restricted to the second half of the run.
    pub normalized_sq_sum_tail: f64,
    /// `Σ dt ε̂²/(1 + Ω²)` over the whole run and over its second half.
    pub normalized_eps_sq_sum: f64,
    pub normalized_eps_sq_sum_tail: f64,
    pub peaks_first_half: TrackedPeaks,
    pub peaks_second_half: TrackedPeaks,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub mode: Mode,
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        super::trace::write_records(self.mode, &self.records, writer)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

struct ObserverRun {
    kernels: ObserverKernels,
    state: ObserverState,
    noise: Option<Normal<f64>>,
}

/// Step-by-step driver of one pipeline. Owns all of its state.
pub struct Simulation<'s> {
    scenario: &'s Scenario,
    mode: Mode,
    plant: PlantState,
    observer: Option<ObserverRun>,
    identifier: Option<Identifier>,
    controller: StepController,
    rng: ChaCha8Rng,
    diag: Option<LyapunovDiagnostics>,
    summary: RunSummary,
}

impl<'s> Simulation<'s> {
    pub fn new(scenario: &'s Scenario, mode: Mode) -> Result<Self> {
        let p = &scenario.params;
        let grid = &scenario.grid;
        let mut plant = PlantState::uniform(
            grid,
            scenario.initial_u,
            scenario.initial_x,
            scenario.source.eval(0.0),
        );
        let inflow0 = p.inflow(supply_at(scenario, mode, 0.0));
        plant.u[0] = inflow0;

        let observer = if mode == Mode::Observe {
            let kernels = observer::compute_kernels(p, grid)?;
            let poles = scenario
                .observer
                .poles
                .unwrap_or_else(|| Poles::default_for(p));
            if !poles.is_hurwitz() {
                return Err(Error::Config(format!(
                    "observer poles {poles:?} do not give a Hurwitz closed loop"
                )));
            }
            let gains = observer::place_gains(&kernels, poles)?;
            let mut u_hat = grid.constant(scenario.observer.initial_u.unwrap_or(inflow0));
            u_hat[0] = inflow0;
            let state = ObserverState::new(
                &kernels,
                gains,
                u_hat,
                scenario.observer.initial_x,
                scenario.observer.initial_v,
            )?;
            let noise = (scenario.observer.noise_std > 0.0)
                .then(|| Normal::new(0.0, scenario.observer.noise_std))
                .transpose()
                .map_err(|e| Error::Config(format!("observer noise: {e}")))?;
            Some(ObserverRun {
                kernels,
                state,
                noise,
            })
        } else {
            None
        };

        let identifier = if mode.identifies() {
            let ic = &scenario.identifier;
            if p.b >= ic.b_bar {
                return Err(Error::Config(format!(
                    "identifier bound b_bar = {} must exceed the true b = {}",
                    ic.b_bar, p.b
                )));
            }
            let mut filters = if mode == Mode::Identify {
                SwappingFilters::new_full(grid, inflow0, ic.a_bar)?
            } else {
                SwappingFilters::new_known_b(grid, p.b, inflow0, ic.a_bar)?
            };
            filters.omega0 = ic.initial_omega0;
            filters.omega = ic.initial_omega;
            let b_hat = if mode == Mode::Identify {
                ic.initial_b.unwrap_or((1.5 * p.b).min(ic.b_bar))
            } else {
                p.b.min(ic.b_bar)
            };
            let estimates = ParameterEstimates::new(
                b_hat,
                ic.initial_b_x.unwrap_or(0.5 * p.b_x),
                ic.initial_a.unwrap_or(0.5 * p.a),
                ic.b_bar,
                ic.gains,
            )?;
            Some(Identifier::new(filters, estimates, p.u_e))
        } else {
            None
        };

        let mut sim = Self {
            scenario,
            mode,
            plant,
            observer,
            identifier,
            controller: StepController::new(scenario.safety)?,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            diag: None,
            summary: RunSummary {
                min_dt: f64::INFINITY,
                ..RunSummary::default()
            },
        };
        sim.refresh_diagnostics()?;
        sim.summary.lyapunov_initial = sim.diag.map(|d| d.lyapunov);
        Ok(sim)
    }

    /// Replaces the initial plant field. The supply node is re-pinned to the
    /// boundary datum. Only valid before the first step.
    pub fn with_initial_field(mut self, u: Vec<f64>) -> Result<Self> {
        if self.summary.steps > 0 {
            return Err(Error::Config("initial field set after stepping".into()));
        }
        self.scenario.grid.check(&u)?;
        let inflow = self.plant.u[0];
        self.plant.u = u;
        self.plant.u[0] = inflow;
        self.summary.peaks_first_half = TrackedPeaks::default();
        self.summary.diverged = false;
        self.refresh_diagnostics()?;
        self.summary.lyapunov_initial = self.diag.map(|d| d.lyapunov);
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn t(&self) -> f64 {
        self.plant.t
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn observer(&self) -> Option<&ObserverState> {
        self.observer.as_ref().map(|o| &o.state)
    }

    pub fn identifier(&self) -> Option<&Identifier> {
        self.identifier.as_ref()
    }

    pub fn diagnostics(&self) -> Option<LyapunovDiagnostics> {
        self.diag
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    /// Supply reading `U(t)` as seen by this pipeline.
    pub fn supply(&self, t: f64) -> f64 {
        supply_at(self.scenario, self.mode, t)
    }

    /// Step size allowed by the CFL bound over every field advanced next step.
    pub fn cfl_dt(&mut self) -> Result<f64> {
        let mut speeds = vec![self.scenario.params.b];
        if let Some(id) = &self.identifier {
            speeds.push(id.transport_speed());
        }
        self.controller.update(&self.scenario.grid, &speeds)
    }

    /// Takes one step toward `target`, landing on it exactly when it is within reach.
    pub fn advance_toward(&mut self, target: f64) -> Result<f64> {
        let dt_cfl = self.cfl_dt()?;
        let remaining = target - self.plant.t;
        if remaining <= dt_cfl * (1.0 + 1e-9) {
            self.step(remaining)?;
            self.plant.t = target;
            Ok(remaining)
        } else {
            self.step(dt_cfl)?;
            Ok(dt_cfl)
        }
    }

    /// Advances every component by `dt`. All components read the state at `t`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                reason: "step must be positive",
            });
        }
        let s = self.scenario;
        let p = &s.params;
        let grid = &s.grid;
        let t = self.plant.t;
        let t_next = t + dt;
        let v_next = s.source.eval(t_next);
        let u_next = self.supply(t_next);
        let tail = t >= 0.5 * s.duration;

        if let Some(d) = self.diag {
            let fe = dt * d.normalized_field_error.powi(2);
            let ee = dt * d.normalized_eps.powi(2);
            self.summary.normalized_sq_sum += fe;
            self.summary.normalized_eps_sq_sum += ee;
            if tail {
                self.summary.normalized_sq_sum_tail += fe;
                self.summary.normalized_eps_sq_sum_tail += ee;
            }
        }

        if let Some(id) = &mut self.identifier {
            let u_x = numerics::upwind_gradient(&self.plant.u, grid);
            let meas = Measurement {
                u: &self.plant.u,
                u_x: &u_x,
                x: self.plant.x,
                v: self.plant.v,
                u_next,
            };
            id.step(grid, &meas, dt)?;
            if id.estimates.b_hat > id.estimates.b_bar {
                self.summary.projection_violations += 1;
            }
        }

        if let Some(obs) = &mut self.observer {
            let mut y = self.plant.output();
            if let Some(noise) = &obs.noise {
                y += noise.sample(&mut self.rng);
            }
            obs.state.step(p, grid, y, u_next, dt)?;
        }

        self.plant.step(p, grid, dt, v_next, u_next)?;

        self.summary.steps += 1;
        self.summary.min_dt = self.summary.min_dt.min(dt);
        self.summary.max_dt = self.summary.max_dt.max(dt);

        let before = self.diag.map(|d| d.lyapunov);
        self.refresh_diagnostics()?;
        if let (Some(v0), Some(d)) = (before, self.diag) {
            let inc = d.lyapunov - v0;
            let m = self
                .summary
                .max_lyapunov_increase
                .get_or_insert(f64::NEG_INFINITY);
            *m = m.max(inc);
        }
        Ok(())
    }

    fn refresh_diagnostics(&mut self) -> Result<()> {
        let Some(id) = &self.identifier else {
            return Ok(());
        };
        let s = self.scenario;
        let grid = &s.grid;
        let truth = &s.params;
        let pred = id.prediction_errors(&self.plant.u, self.plant.x);
        let d = lyapunov_diagnostics(
            grid,
            truth,
            &id.filters,
            &id.estimates,
            &self.plant.u,
            self.plant.x,
            &pred,
        )?;
        self.diag = Some(d);

        let f = &id.filters;
        let norm = |v: &[f64]| numerics::norm_sq(grid, v).map(f64::sqrt);
        let (r1, r2, r3) = match &f.regressors {
            Regressors::Full { v, p, eta } => (norm(v)?, norm(p)?, norm(eta)?),
            Regressors::KnownB { mu, xi, .. } => (norm(mu)?, norm(xi)?, 0.0),
        };
        let e = &id.estimates;
        let b_err = match f.regressors {
            Regressors::Full { .. } => truth.b - e.b_hat,
            Regressors::KnownB { .. } => 0.0,
        };
        let tracked = [
            norm(&self.plant.u)?,
            r1,
            r2,
            r3,
            self.plant.x,
            f.omega0,
            f.omega,
            b_err,
            truth.b_x - e.b_x_hat,
            truth.a - e.a_hat,
        ];
        if tracked
            .iter()
            .chain([d.lyapunov].iter())
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_CAP)
        {
            self.summary.diverged = true;
        }
        if self.plant.t >= 0.5 * s.duration {
            self.summary.peaks_second_half.absorb(&tracked);
        } else {
            self.summary.peaks_first_half.absorb(&tracked);
        }
        Ok(())
    }

    /// Output sample at the current time.
    pub fn record(&self) -> Result<RunRecord> {
        let s = self.scenario;
        let t = self.plant.t;
        let observer = match &self.observer {
            Some(o) => Some(ObserverSample {
                u_hat_return: o.state.output(),
                x_hat: o.state.x_hat,
                v_hat: o.state.v_hat,
                error_norm: observer::error_norm(&s.grid, &self.plant, &o.state)?,
            }),
            None => None,
        };
        let identifier = match (&self.identifier, self.diag) {
            (Some(id), Some(d)) => Some(IdentifierSample {
                b_hat: id.estimates.b_hat,
                b_x_hat: id.estimates.b_x_hat,
                a_hat: id.estimates.a_hat,
                lyapunov: d.lyapunov,
                normalized_field_error: d.normalized_field_error,
                normalized_eps: d.normalized_eps,
            }),
            _ => None,
        };
        Ok(RunRecord {
            t,
            u_supply: self.plant.supply(),
            u_return: self.plant.output(),
            x: self.plant.x,
            v: self.plant.v,
            supply: self.supply(t),
            observer,
            identifier,
        })
    }

    pub fn into_summary(self) -> RunSummary {
        self.summary
    }

    pub fn observer_kernels(&self) -> Option<&ObserverKernels> {
        self.observer.as_ref().map(|o| &o.kernels)
    }
}

fn supply_at(s: &Scenario, mode: Mode, t: f64) -> f64 {
    if mode.identifies() {
        s.supply.eval_ramped(t, s.supply_ramp)
    } else {
        s.supply.eval(t)
    }
}

/// Sample times `0, T, 2T, ...` capped at the duration.
pub fn sample_times(duration: f64, period: f64) -> Vec<f64> {
    let n = (duration / period).ceil() as usize;
    (0..=n).map(|k| (k as f64 * period).min(duration)).collect()
}

/// Runs a pipeline to completion, sampling one record per sample period.
pub fn run(scenario: &Scenario, mode: Mode) -> Result<RunLog> {
    let mut sim = Simulation::new(scenario, mode)?;
    let times = sample_times(scenario.duration, scenario.sample_period);
    let mut records = Vec::with_capacity(times.len());
    records.push(sim.record()?);
    for &target in &times[1..] {
        while sim.t() < target {
            sim.advance_toward(target)?;
        }
        records.push(sim.record()?);
    }
    Ok(RunLog {
        mode,
        records,
        summary: sim.into_summary(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::{ParamSpec, ScenarioConfig, SignalSpec};
    use std::path::Path;

    fn quiet(duration: f64) -> Scenario {
        let mut cfg = ScenarioConfig::new(
            ParamSpec::RoomI,
            duration,
            SignalSpec::Constant { value: 0.0 },
        );
        cfg.initial_u = 450.0;
        cfg.resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn equilibrium_run_is_constant() {
        let s = quiet(600.0);
        let log = run(&s, Mode::Simulate).unwrap();
        assert_eq!(log.records.len(), 61);
        for r in &log.records {
            assert_eq!((r.u_supply, r.u_return, r.x, r.v), (450.0, 450.0, 0.0, 0.0));
        }
    }

    #[test]
    fn records_strictly_increase_in_time() {
        let mut s = quiet(95.0);
        s.sample_period = 7.0;
        let log = run(&s, Mode::Simulate).unwrap();
        let t: Vec<f64> = log.records.iter().map(|r| r.t).collect();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*t.last().unwrap(), 95.0);
        assert_eq!(t[1], 7.0);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            Mode::Simulate,
            Mode::Observe,
            Mode::Identify,
            Mode::IdentifyKnownB,
        ] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("estimate".parse::<Mode>().is_err());
    }

    #[test]
    fn identify_requires_b_bar_above_b() {
        let mut s = quiet(10.0);
        s.identifier.b_bar = -1e-2;
        assert!(matches!(run(&s, Mode::Identify), Err(Error::Config(_))));
    }

    #[test]
    fn non_hurwitz_poles_rejected() {
        let mut s = quiet(10.0);
        s.observer.poles = Some(Poles::Real {
            first: -1e-3,
            second: 0.0,
        });
        assert!(run(&s, Mode::Observe).is_err());
    }

    #[test]
    fn unobservable_parameters_rejected_in_observe_mode() {
        let mut s = quiet(10.0);
        s.params.b_x = 0.0;
        assert!(matches!(
            run(&s, Mode::Observe),
            Err(Error::Unobservable(_))
        ));
    }

    #[test]
    fn observe_leaves_plant_untouched() {
        let cfg = ScenarioConfig::experiment_i(3000.0);
        let s = cfg.resolve(Path::new(".")).unwrap();
        let sim = run(&s, Mode::Simulate).unwrap();
        let obs = run(&s, Mode::Observe).unwrap();
        for (a, b) in sim.records.iter().zip(&obs.records) {
            assert_eq!(
                (a.t, a.u_supply, a.u_return, a.x, a.v, a.supply),
                (b.t, b.u_supply, b.u_return, b.x, b.v, b.supply)
            );
        }
    }

    #[test]
    fn noisy_observer_is_seeded() {
        let mut cfg = ScenarioConfig::experiment_i(500.0);
        cfg.observer.noise_std = 2.0;
        cfg.seed = 7;
        let s = cfg.resolve(Path::new(".")).unwrap();
        let a = run(&s, Mode::Observe).unwrap().to_csv_bytes().unwrap();
        let b = run(&s, Mode::Observe).unwrap().to_csv_bytes().unwrap();
        assert_eq!(a, b);
        cfg.seed = 8;
        let s = cfg.resolve(Path::new(".")).unwrap();
        let c = run(&s, Mode::Observe).unwrap().to_csv_bytes().unwrap();
        assert_ne!(a, c);
    }
}
