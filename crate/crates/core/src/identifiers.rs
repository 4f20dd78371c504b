//! Swapping identifiers for `b`, `b_X` and `a` under full-state measurement.
//!
//! The regressor filters turn the dynamic plant into static relations that are
//! linear in the unknowns:
//!
//! ```text
//! v_t = b̂ v_x + u_x,        v(0) = 0
//! p_t = b̂ p_x + X,          p(0) = 0
//! η_t = b̂ η_x - b̂ u_x,      η(0) = 2 U_e - U
//! e   = u - b v - b_X p - η          (e_t = b̂ e_x, e(0) = 0)
//!
//! Ω0' = Ā (Ω0 - X) + V
//! Ω'  = Ā Ω - X
//! ε   = X - Ω0 - a Ω                 (ε' = Ā ε)
//! ```
//!
//! The discrete filters use the same upwind stencil as the plant solver, so the
//! two error identities above hold exactly step by step (up to rounding), not
//! just in the continuum limit.
//!
//! When `b` is known the filters reduce to `μ_t = b μ_x + X`, `μ(0) = 0` and
//! `ξ_t = b ξ_x`, `ξ(0) = 2 U_e - U`, with error `ζ = u - b_X μ - ξ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{self, Grid};

/// Adaptation gains. `gamma_b`, `gamma_b_x`, `gamma_a` drive the full identifier;
/// `gamma_known_b` drives the `b_X` law when `b` is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationGains {
    #[serde(default = "one")]
    pub gamma_b: f64,
    #[serde(default = "one")]
    pub gamma_b_x: f64,
    #[serde(default = "one")]
    pub gamma_a: f64,
    #[serde(default = "one")]
    pub gamma_known_b: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AdaptationGains {
    fn default() -> Self {
        Self {
            gamma_b: 1.0,
            gamma_b_x: 1.0,
            gamma_a: 1.0,
            gamma_known_b: 1.0,
        }
    }
}

impl AdaptationGains {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("gamma_b", self.gamma_b),
            ("gamma_b_x", self.gamma_b_x),
            ("gamma_a", self.gamma_a),
            ("gamma_known_b", self.gamma_known_b),
        ] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: g,
                    reason: "adaptation gains must be positive",
                });
            }
        }
        Ok(())
    }
}

/// Current parameter estimates. `b_hat <= b_bar < 0` always holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterEstimates {
    pub b_hat: f64,
    pub b_x_hat: f64,
    pub a_hat: f64,
    pub b_bar: f64,
    pub gains: AdaptationGains,
}

impl ParameterEstimates {
    pub fn new(
        b_hat: f64,
        b_x_hat: f64,
        a_hat: f64,
        b_bar: f64,
        gains: AdaptationGains,
    ) -> Result<Self> {
        gains.validate()?;
        if b_bar.is_nan() || b_bar >= 0.0 {
            return Err(Error::InvalidParameter {
                name: "b_bar",
                value: b_bar,
                reason: "projection bound must be negative",
            });
        }
        if b_hat.is_nan() || b_hat > b_bar {
            return Err(Error::InvalidParameter {
                name: "b_hat",
                value: b_hat,
                reason: "initial estimate must satisfy b_hat <= b_bar",
            });
        }
        if !(b_x_hat.is_finite() && a_hat.is_finite()) {
            return Err(Error::NonFinite("initial estimates"));
        }
        Ok(Self {
            b_hat,
            b_x_hat,
            a_hat,
            b_bar,
            gains,
        })
    }
}

/// Regressor filters of either identifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressors {
    /// Unknown `b`: filters `v`, `p`, `η` transported at `b̂`.
    Full {
        v: Vec<f64>,
        p: Vec<f64>,
        eta: Vec<f64>,
    },
    /// Known `b`: filters `μ`, `ξ` transported at `b`.
    KnownB { b: f64, mu: Vec<f64>, xi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwappingFilters {
    pub regressors: Regressors,
    pub omega0: f64,
    pub omega: f64,
    /// Filter pole, `Ā < 0`.
    pub a_bar: f64,
}

/// Measured plant signals at the start of a step.
#[derive(Debug, Clone, Copy)]
pub struct Measurement<'a> {
    pub u: &'a [f64],
    /// Upwind `u_x` of `u`.
    pub u_x: &'a [f64],
    pub x: f64,
    pub v: f64,
    /// Supply reading at the end of the step.
    pub u_next: f64,
}

impl SwappingFilters {
    /// Zero regressors and the input filter held at the current boundary datum.
    pub fn new_full(grid: &Grid, inflow: f64, a_bar: f64) -> Result<Self> {
        check_a_bar(a_bar)?;
        Ok(Self {
            regressors: Regressors::Full {
                v: grid.constant(0.0),
                p: grid.constant(0.0),
                eta: grid.constant(inflow),
            },
            omega0: 0.0,
            omega: 0.0,
            a_bar,
        })
    }

    pub fn new_known_b(grid: &Grid, b: f64, inflow: f64, a_bar: f64) -> Result<Self> {
        check_a_bar(a_bar)?;
        if b.is_nan() || b >= 0.0 {
            return Err(Error::InvalidParameter {
                name: "b",
                value: b,
                reason: "must be negative",
            });
        }
        Ok(Self {
            regressors: Regressors::KnownB {
                b,
                mu: grid.constant(0.0),
                xi: grid.constant(inflow),
            },
            omega0: 0.0,
            omega: 0.0,
            a_bar,
        })
    }

    /// Advection speed of the regressor filters for the given estimates.
    pub fn transport_speed(&self, estimates: &ParameterEstimates) -> f64 {
        match self.regressors {
            Regressors::Full { .. } => estimates.b_hat,
            Regressors::KnownB { b, .. } => b,
        }
    }

    /// One explicit step of every filter. `speed` is `b̂` (ignored for the
    /// known-`b` filters, which always use `b`); `u_e` sets the input-filter boundary.
    pub fn step(
        &mut self,
        grid: &Grid,
        meas: &Measurement<'_>,
        speed: f64,
        u_e: f64,
        dt: f64,
    ) -> Result<()> {
        let inflow = 2.0 * u_e - meas.u_next;
        let x = meas.x;
        let u_x = meas.u_x;
        grid.check(u_x)?;
        match &mut self.regressors {
            Regressors::Full { v, p, eta } => {
                numerics::advect_step(v, grid, speed, |i| u_x[i], 0.0, dt)?;
                numerics::advect_step(p, grid, speed, |_| x, 0.0, dt)?;
                numerics::advect_step(eta, grid, speed, |i| -speed * u_x[i], inflow, dt)?;
            }
            Regressors::KnownB { b, mu, xi } => {
                numerics::advect_step(mu, grid, *b, |_| x, 0.0, dt)?;
                numerics::advect_step(xi, grid, *b, |_| 0.0, inflow, dt)?;
            }
        }
        let a_bar = self.a_bar;
        self.omega0 = numerics::ode_step(self.omega0, a_bar * (self.omega0 - x) + meas.v, dt);
        self.omega = numerics::ode_step(self.omega, a_bar * self.omega - x, dt);
        Ok(())
    }

    /// `1 + ‖v‖² + ‖p‖²`, or `1 + ‖μ‖²` for the known-`b` filters.
    pub fn normalization(&self, grid: &Grid) -> Result<f64> {
        Ok(match &self.regressors {
            Regressors::Full { v, p, .. } => {
                1.0 + numerics::norm_sq(grid, v)? + numerics::norm_sq(grid, p)?
            }
            Regressors::KnownB { mu, .. } => 1.0 + numerics::norm_sq(grid, mu)?,
        })
    }
}

fn check_a_bar(a_bar: f64) -> Result<()> {
    if a_bar < 0.0 && a_bar.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "a_bar",
            value: a_bar,
            reason: "filter pole must be negative",
        })
    }
}

/// Free-function form of [`SwappingFilters::step`].
pub fn filter_step(
    filters: &mut SwappingFilters,
    grid: &Grid,
    meas: &Measurement<'_>,
    speed: f64,
    u_e: f64,
    dt: f64,
) -> Result<()> {
    filters.step(grid, meas, speed, u_e, dt)
}

/// Static prediction errors: `ê` (or `ζ̂`) over the grid and the scalar `ε̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrors {
    pub field: Vec<f64>,
    pub eps: f64,
}

pub fn prediction_errors(
    filters: &SwappingFilters,
    u: &[f64],
    x: f64,
    estimates: &ParameterEstimates,
) -> PredictionErrors {
    let field = match &filters.regressors {
        Regressors::Full { v, p, eta } => u
            .iter()
            .zip(v)
            .zip(p)
            .zip(eta)
            .map(|(((u, v), p), eta)| u - estimates.b_hat * v - estimates.b_x_hat * p - eta)
            .collect(),
        Regressors::KnownB { mu, xi, .. } => u
            .iter()
            .zip(mu)
            .zip(xi)
            .map(|((u, mu), xi)| u - estimates.b_x_hat * mu - xi)
            .collect(),
    };
    PredictionErrors {
        field,
        eps: x - filters.omega0 - filters.omega * estimates.a_hat,
    }
}

/// Projection onto `{b̂ <= b̄}`: blocks updates that would push `b̂` past the bound.
fn project(b_hat: f64, b_bar: f64, tau: f64) -> f64 {
    if b_hat >= b_bar && tau > 0.0 {
        0.0
    } else {
        tau
    }
}

/// Euler step of the normalized gradient laws followed by the clamp
/// `b̂ <- min(b̂, b̄)`.
pub fn update_step(
    estimates: &ParameterEstimates,
    filters: &SwappingFilters,
    errors: &PredictionErrors,
    grid: &Grid,
    dt: f64,
) -> Result<ParameterEstimates> {
    let mut next = *estimates;
    let g = estimates.gains;
    let den = filters.normalization(grid)?;
    match &filters.regressors {
        Regressors::Full { v, p, .. } => {
            let tau = numerics::inner(grid, &errors.field, v)? / den;
            let tau_x = numerics::inner(grid, &errors.field, p)? / den;
            let b_rate =
                -g.gamma_b * estimates.b_hat * project(estimates.b_hat, estimates.b_bar, tau);
            let bx_rate = -g.gamma_b_x * estimates.b_hat * tau_x;
            next.b_hat = numerics::ode_step(estimates.b_hat, b_rate, dt).min(estimates.b_bar);
            next.b_x_hat = numerics::ode_step(estimates.b_x_hat, bx_rate, dt);
        }
        Regressors::KnownB { mu, .. } => {
            let rate = g.gamma_known_b * numerics::inner(grid, &errors.field, mu)? / den;
            next.b_x_hat = numerics::ode_step(estimates.b_x_hat, rate, dt);
        }
    }
    let a_rate = g.gamma_a * errors.eps * filters.omega / (1.0 + filters.omega * filters.omega);
    next.a_hat = numerics::ode_step(estimates.a_hat, a_rate, dt);
    if !(next.b_hat.is_finite() && next.b_x_hat.is_finite() && next.a_hat.is_finite()) {
        return Err(Error::NonFinite("parameter estimates"));
    }
    Ok(next)
}

/// Certificate quantities evaluated against the true parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovDiagnostics {
    /// Lyapunov function of the active identifier.
    pub lyapunov: f64,
    /// `‖ê‖ / sqrt(1 + ‖v‖² + ‖p‖²)` (or `‖ζ̂‖ / sqrt(1 + ‖μ‖²)`).
    pub normalized_field_error: f64,
    /// `|ε̂| / sqrt(1 + Ω²)`.
    pub normalized_eps: f64,
    /// `‖e‖` (or `‖ζ‖`), the parametric error with true coefficients.
    pub field_error: f64,
    /// `ε = X - Ω0 - a Ω`.
    pub eps: f64,
}

/// True parametric errors `e` (or `ζ`) and `ε`.
pub fn true_errors(
    truth: &ModelParams,
    filters: &SwappingFilters,
    u: &[f64],
    x: f64,
) -> PredictionErrors {
    let field = match &filters.regressors {
        Regressors::Full { v, p, eta } => u
            .iter()
            .zip(v)
            .zip(p)
            .zip(eta)
            .map(|(((u, v), p), eta)| u - truth.b * v - truth.b_x * p - eta)
            .collect(),
        Regressors::KnownB { mu, xi, .. } => u
            .iter()
            .zip(mu)
            .zip(xi)
            .map(|((u, mu), xi)| u - truth.b_x * mu - xi)
            .collect(),
    };
    PredictionErrors {
        field,
        eps: x - filters.omega0 - filters.omega * truth.a,
    }
}

/// Evaluates the identifier's Lyapunov function
///
/// ```text
/// full:     ∫(2-x) e² + ε²/2 + b̃²/(2γ1) + b̃_X²/(2γ2) - Ā ã²/(2γ3)
/// known b:  -(1/b) ∫(2-x) ζ² + ε²/2 + b̃_X²/(2γ) - Ā ã²/(2γ3)
/// ```
///
/// and the normalized prediction-error magnitudes.
pub fn lyapunov_diagnostics(
    grid: &Grid,
    truth: &ModelParams,
    filters: &SwappingFilters,
    estimates: &ParameterEstimates,
    u: &[f64],
    x: f64,
    predicted: &PredictionErrors,
) -> Result<LyapunovDiagnostics> {
    let g = estimates.gains;
    let actual = true_errors(truth, filters, u, x);
    let energy = numerics::weighted_energy(grid, &actual.field)?;
    let b_x_err = truth.b_x - estimates.b_x_hat;
    let a_err = truth.a - estimates.a_hat;
    let common = 0.5 * actual.eps * actual.eps - filters.a_bar * a_err * a_err / (2.0 * g.gamma_a);
    let lyapunov = match filters.regressors {
        Regressors::Full { .. } => {
            let b_err = truth.b - estimates.b_hat;
            energy
                + b_err * b_err / (2.0 * g.gamma_b)
                + b_x_err * b_x_err / (2.0 * g.gamma_b_x)
                + common
        }
        Regressors::KnownB { b, .. } => {
            -energy / b + b_x_err * b_x_err / (2.0 * g.gamma_known_b) + common
        }
    };
    let den = filters.normalization(grid)?;
    Ok(LyapunovDiagnostics {
        lyapunov,
        normalized_field_error: (numerics::norm_sq(grid, &predicted.field)? / den).sqrt(),
        normalized_eps: predicted.eps.abs() / (1.0 + filters.omega * filters.omega).sqrt(),
        field_error: numerics::norm_sq(grid, &actual.field)?.sqrt(),
        eps: actual.eps,
    })
}

/// Weighted energy functional used for the state-boundedness argument:
/// `∫(2-x)u² + ∫(2-x)u_x² + (b b̄ / 16)∫(2-x)v² + ∫(2-x)p²`.
pub fn boundedness_functional(
    grid: &Grid,
    truth: &ModelParams,
    filters: &SwappingFilters,
    b_bar: f64,
    u: &[f64],
    u_x: &[f64],
) -> Result<Option<f64>> {
    match &filters.regressors {
        Regressors::Full { v, p, .. } => Ok(Some(
            numerics::weighted_energy(grid, u)?
                + numerics::weighted_energy(grid, u_x)?
                + truth.b * b_bar / 16.0 * numerics::weighted_energy(grid, v)?
                + numerics::weighted_energy(grid, p)?,
        )),
        Regressors::KnownB { .. } => Ok(None),
    }
}

/// A running identifier: filters plus estimates, advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct Identifier {
    pub filters: SwappingFilters,
    pub estimates: ParameterEstimates,
    u_e: f64,
}

impl Identifier {
    pub fn new(filters: SwappingFilters, estimates: ParameterEstimates, u_e: f64) -> Self {
        Self {
            filters,
            estimates,
            u_e,
        }
    }

    /// Largest transport speed the next step will use.
    pub fn transport_speed(&self) -> f64 {
        self.filters.transport_speed(&self.estimates)
    }

    pub fn prediction_errors(&self, u: &[f64], x: f64) -> PredictionErrors {
        prediction_errors(&self.filters, u, x, &self.estimates)
    }

    /// Updates the estimates from the current errors, then advances the filters
    /// at the transport speed held at the start of the step.
    pub fn step(
        &mut self,
        grid: &Grid,
        meas: &Measurement<'_>,
        dt: f64,
    ) -> Result<PredictionErrors> {
        let errors = self.prediction_errors(meas.u, meas.x);
        let speed = self.transport_speed();
        let next = update_step(&self.estimates, &self.filters, &errors, grid, dt)?;
        self.filters.step(grid, meas, speed, self.u_e, dt)?;
        self.estimates = next;
        Ok(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PlantState;

    fn estimates(b_hat: f64, b_x_hat: f64, a_hat: f64) -> ParameterEstimates {
        ParameterEstimates::new(b_hat, b_x_hat, a_hat, -1e-3, AdaptationGains::default()).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let g = AdaptationGains::default();
        assert!(ParameterEstimates::new(-1e-3, 0.0, 0.0, 1e-3, g).is_err());
        assert!(ParameterEstimates::new(0.0, 0.0, 0.0, -1e-3, g).is_err());
        let bad = AdaptationGains { gamma_a: 0.0, ..g };
        assert!(ParameterEstimates::new(-2e-3, 0.0, 0.0, -1e-3, bad).is_err());
        let grid = Grid::new(11).unwrap();
        assert!(SwappingFilters::new_full(&grid, 450.0, 0.0).is_err());
        assert!(SwappingFilters::new_known_b(&grid, 1e-3, 450.0, -1e-2).is_err());
    }

    #[test]
    fn constant_field_keeps_regressors_at_zero() {
        let grid = Grid::new(41).unwrap();
        let u_e = 450.0;
        let mut f = SwappingFilters::new_full(&grid, 300.0, -1e-2).unwrap();
        let u = grid.constant(u_e);
        let u_x = numerics::upwind_gradient(&u, &grid);
        let b_hat = -8e-3;
        let dt = 0.5 * grid.dx() / 8e-3;
        let meas = Measurement {
            u: &u,
            u_x: &u_x,
            x: 0.0,
            v: 0.0,
            u_next: u_e,
        };
        for _ in 0..2000 {
            f.step(&grid, &meas, b_hat, u_e, dt).unwrap();
        }
        let Regressors::Full { v, p, eta } = &f.regressors else {
            unreachable!()
        };
        assert!(v.iter().chain(p).all(|x| *x == 0.0));
        assert_eq!(eta[0], u_e);
        for e in eta {
            assert!((e - u_e).abs() < 1e-9, "{e}");
        }
    }

    #[test]
    fn source_filter_reaches_linear_profile() {
        // b̂ p' + c = 0, p(0) = 0  =>  p(x) = -c x / b̂
        let grid = Grid::new(101).unwrap();
        let c = 7.0;
        let b_hat = -8e-3;
        let a_bar = -1e-2;
        let mut f = SwappingFilters::new_full(&grid, 450.0, a_bar).unwrap();
        let u = grid.constant(450.0);
        let u_x = numerics::upwind_gradient(&u, &grid);
        let meas = Measurement {
            u: &u,
            u_x: &u_x,
            x: c,
            v: 0.0,
            u_next: 450.0,
        };
        let dt = 0.5 * grid.dx() / 8e-3;
        let mut t = 0.0;
        while t < 3000.0 {
            f.step(&grid, &meas, b_hat, 450.0, dt).unwrap();
            t += dt;
        }
        let Regressors::Full { p, .. } = &f.regressors else {
            unreachable!()
        };
        for (i, x) in grid.coords().enumerate() {
            let want = -c * x / b_hat;
            assert!(
                (p[i] - want).abs() < 1e-6 * want.abs().max(1.0),
                "{} vs {want}",
                p[i]
            );
        }
        // Ā Ω - c = 0  =>  Ω = c / Ā
        assert!((f.omega - c / a_bar).abs() < 1e-9 * (c / a_bar).abs());
    }

    #[test]
    fn zero_errors_leave_estimates_unchanged() {
        let grid = Grid::new(21).unwrap();
        let mut f = SwappingFilters::new_full(&grid, 450.0, -1e-2).unwrap();
        if let Regressors::Full { v, p, .. } = &mut f.regressors {
            v.iter_mut().for_each(|x| *x = 3.0);
            p.iter_mut().for_each(|x| *x = -2.0);
        }
        f.omega = 5.0;
        let est = estimates(-8e-3, 2e-5, 1e-3);
        let errs = PredictionErrors {
            field: grid.constant(0.0),
            eps: 0.0,
        };
        let next = update_step(&est, &f, &errs, &grid, 0.3).unwrap();
        assert_eq!(next, est);
    }

    #[test]
    fn projector_freezes_b_hat_at_bound() {
        let grid = Grid::new(21).unwrap();
        let mut f = SwappingFilters::new_full(&grid, 450.0, -1e-2).unwrap();
        if let Regressors::Full { v, .. } = &mut f.regressors {
            v.iter_mut().for_each(|x| *x = 1.0);
        }
        let est = estimates(-1e-3, 2e-5, 1e-3);
        // positive <ê, v> pushes b̂ up, which the projector blocks at b̄
        let errs = PredictionErrors {
            field: grid.constant(10.0),
            eps: 0.0,
        };
        let next = update_step(&est, &f, &errs, &grid, 0.3).unwrap();
        assert_eq!(next.b_hat, est.b_bar);
        // negative <ê, v> moves b̂ away from the bound
        let errs = PredictionErrors {
            field: grid.constant(-10.0),
            eps: 0.0,
        };
        let next = update_step(&est, &f, &errs, &grid, 0.3).unwrap();
        assert!(next.b_hat < est.b_bar);
    }

    #[test]
    fn error_shift_identities() {
        let grid = Grid::new(11).unwrap();
        let truth = ModelParams::room_i();
        let mut f = SwappingFilters::new_full(&grid, 450.0, -1e-2).unwrap();
        if let Regressors::Full { v, p, eta } = &mut f.regressors {
            for i in 0..11 {
                v[i] = (i as f64).sin() * 40.0;
                p[i] = i as f64 * 300.0;
                eta[i] = 450.0 - i as f64;
            }
        }
        f.omega0 = 12.0;
        f.omega = -300.0;
        let u = grid.sample(|x| 430.0 + 20.0 * x * x);
        let x = 600.0;
        let est = estimates(-5e-3, 3e-5, 2e-3);
        let hat = prediction_errors(&f, &u, x, &est);
        let real = true_errors(&truth, &f, &u, x);
        let Regressors::Full { v, p, .. } = &f.regressors else {
            unreachable!()
        };
        let (bt, bxt, at) = (
            truth.b - est.b_hat,
            truth.b_x - est.b_x_hat,
            truth.a - est.a_hat,
        );
        for i in 0..11 {
            let shift = bt * v[i] + bxt * p[i];
            assert!((hat.field[i] - real.field[i] - shift).abs() < 1e-9);
        }
        assert!((hat.eps - real.eps - at * f.omega).abs() < 1e-12);
    }

    #[test]
    fn exact_estimates_give_zero_prediction_error() {
        // converged filters with e ≡ 0: choose u consistent with the filters
        let grid = Grid::new(11).unwrap();
        let truth = ModelParams::room_i();
        let mut f = SwappingFilters::new_full(&grid, 450.0, -1e-2).unwrap();
        let Regressors::Full { v, p, eta } = &mut f.regressors else {
            unreachable!()
        };
        for i in 0..11 {
            v[i] = i as f64;
            p[i] = 2.0 * i as f64;
            eta[i] = 440.0;
        }
        let u: Vec<f64> = (0..11)
            .map(|i| truth.b * v[i] + truth.b_x * p[i] + eta[i])
            .collect();
        f.omega = -20.0;
        f.omega0 = 5.0;
        let x = f.omega0 + f.omega * truth.a;
        let est = ParameterEstimates::new(
            truth.b,
            truth.b_x,
            truth.a,
            -1e-3,
            AdaptationGains::default(),
        )
        .unwrap();
        let e = prediction_errors(&f, &u, x, &est);
        assert!(e.field.iter().all(|v| v.abs() < 1e-12));
        assert!(e.eps.abs() < 1e-15);
    }

    #[test]
    fn lyapunov_with_zero_state_errors_is_parameter_terms() {
        let grid = Grid::new(11).unwrap();
        let truth = ModelParams::room_i();
        let f = SwappingFilters::new_full(&grid, 450.0, -1e-2).unwrap();
        let u = grid.constant(450.0);
        let gains = AdaptationGains {
            gamma_b: 2.0,
            gamma_b_x: 3.0,
            gamma_a: 0.5,
            gamma_known_b: 1.0,
        };
        let est = ParameterEstimates::new(-4e-3, 1e-5, 3e-3, -1e-3, gains).unwrap();
        let pred = prediction_errors(&f, &u, 0.0, &est);
        let d = lyapunov_diagnostics(&grid, &truth, &f, &est, &u, 0.0, &pred).unwrap();
        let (bt, bxt, at) = (-4e-3, 1e-5, -2e-3);
        let want = bt * bt / 4.0 + bxt * bxt / 6.0 - (-1e-2) * at * at / 1.0;
        assert!(
            (d.lyapunov - want).abs() < 1e-18,
            "{} vs {want}",
            d.lyapunov
        );
        assert_eq!(d.field_error, 0.0);
    }

    #[test]
    fn known_b_lyapunov_three_node_weighting() {
        let grid = Grid::new(3).unwrap();
        let truth = ModelParams::room_i();
        let mut f = SwappingFilters::new_known_b(&grid, truth.b, 0.0, -1e-2).unwrap();
        if let Regressors::KnownB { xi, .. } = &mut f.regressors {
            xi.copy_from_slice(&[0.0, 0.0, 0.0]);
        }
        let u = [0.0, 1.0, 2.0];
        let est =
            ParameterEstimates::new(-2e-3, truth.b_x, truth.a, -1e-3, AdaptationGains::default())
                .unwrap();
        let pred = prediction_errors(&f, &u, 0.0, &est);
        let d = lyapunov_diagnostics(&grid, &truth, &f, &est, &u, 0.0, &pred).unwrap();
        // ζ = u; weights 1/4, 1/2, 1/4 times (2 - x) = 2, 1.5, 1
        let energy = 0.5 * 1.5 * 1.0 + 0.25 * 1.0 * 4.0;
        assert!((d.lyapunov - (-energy / truth.b)).abs() < 1e-9);
    }

    #[test]
    fn parametric_error_obeys_transport_identity() {
        // propagate plant and filters with frozen b̂, compare e against an
        // independently advected copy e_t = b̂ e_x, e(0) = 0
        let grid = Grid::new(51).unwrap();
        let truth = ModelParams::room_i();
        let b_hat = -1e-2;
        let mut plant = PlantState::uniform(&grid, 400.0, 300.0, 2.0);
        let mut f = SwappingFilters::new_full(&grid, truth.inflow(truth.u_e), -1e-2).unwrap();
        let est =
            ParameterEstimates::new(b_hat, 0.0, 0.0, -1e-3, AdaptationGains::default()).unwrap();
        let mut e_ref = true_errors(&truth, &f, &plant.u, plant.x).field;
        let dt = 0.7 * grid.dx() / 1e-2;
        for k in 0..300 {
            let u_next = truth.u_e + if k > 100 { 30.0 } else { 0.0 };
            let u_x = numerics::upwind_gradient(&plant.u, &grid);
            let meas = Measurement {
                u: &plant.u,
                u_x: &u_x,
                x: plant.x,
                v: plant.v,
                u_next,
            };
            f.step(&grid, &meas, est.b_hat, truth.u_e, dt).unwrap();
            plant.step(&truth, &grid, dt, 2.0, u_next).unwrap();
            numerics::advect_step(&mut e_ref, &grid, b_hat, |_| 0.0, 0.0, dt).unwrap();
            let e = true_errors(&truth, &f, &plant.u, plant.x).field;
            for (a, b) in e.iter().zip(&e_ref) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }
}
