//! Boundary observer for the room model.
//!
//! Uses only the return-vent reading `y = u(1,t)` and the supply reading `U(t)`:
//!
//! ```text
//! û_t = b û_x + b_X X̂ + p(x) (y - û(1,t)),   û(0,t) = 2 U_e - U(t)
//! X̂'  = -a X̂ + V̂ + L1 (y - û(1,t))
//! V̂'  = L2 (y - û(1,t))
//! ```
//!
//! with injection profile `p = L1 γ1 + L2 γ2`. The kernels map the PDE error onto
//! the 2-state system `(A, C)`; the observer converges exponentially whenever
//! `A - L C` is Hurwitz, which is possible iff `(A, C)` is observable, i.e. iff
//! `b_X != 0`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, PlantState};
use crate::numerics::{self, Grid};

/// Closed-form injection kernels and the reduced pair `(A, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverKernels {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// `[[-a, 1], [0, 0]]`
    pub a_matrix: [[f64; 2]; 2],
    /// `[γ1(1), γ2(1)]`
    pub c_row: [f64; 2],
}

impl ObserverKernels {
    /// Evaluates the kernels without any observability check, so that
    /// degenerate coefficient sets (`b_X = 0`) can be inspected.
    pub fn from_coefficients(a: f64, b: f64, b_x: f64, grid: &Grid) -> Self {
        let r = -a / b;
        let gamma1 = grid.sample(|x| b_x / a * (r * x).exp_m1());
        let gamma2 = grid.sample(|x| -b_x / (b * a) * x - b_x / (a * a) * (r * x).exp_m1());
        let c_row = [gamma1[grid.n() - 1], gamma2[grid.n() - 1]];
        Self {
            gamma1,
            gamma2,
            a_matrix: [[-a, 1.0], [0.0, 0.0]],
            c_row,
        }
    }

    /// Determinant of the observability matrix, `γ1(1) (γ1(1) + a γ2(1))`.
    pub fn observability_det(&self) -> f64 {
        let [c1, c2] = self.c_row;
        let a = -self.a_matrix[0][0];
        c1 * (c1 + a * c2)
    }

    /// Injection profile `L1 γ1 + L2 γ2`.
    pub fn injection(&self, gains: ObserverGains) -> Vec<f64> {
        self.gamma1
            .iter()
            .zip(&self.gamma2)
            .map(|(g1, g2)| gains.l1 * g1 + gains.l2 * g2)
            .collect()
    }
}

/// Kernels for a validated parameter set. Fails when the pair `(A, C)` is unobservable.
pub fn compute_kernels(params: &ModelParams, grid: &Grid) -> Result<ObserverKernels> {
    if params.b_x == 0.0 {
        return Err(Error::Unobservable(
            "b_X = 0 decouples the source from the room",
        ));
    }
    if !(params.a > 0.0 && params.b < 0.0) {
        return Err(Error::InvalidParameter {
            name: "a, b",
            value: params.a,
            reason: "kernels need a > 0 and b < 0",
        });
    }
    Ok(ObserverKernels::from_coefficients(
        params.a, params.b, params.b_x, grid,
    ))
}

pub fn observability_det(kernels: &ObserverKernels) -> f64 {
    kernels.observability_det()
}

/// Desired closed-loop eigenvalues of `A - L C`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Poles {
    Real { first: f64, second: f64 },
    Complex { re: f64, im: f64 },
}

impl Poles {
    /// The default placement `{-2a, -3a}`.
    pub fn default_for(params: &ModelParams) -> Self {
        Poles::Real {
            first: -2.0 * params.a,
            second: -3.0 * params.a,
        }
    }

    /// `(λ1 + λ2, λ1 λ2)`
    pub fn sum_product(&self) -> (f64, f64) {
        match *self {
            Poles::Real { first, second } => (first + second, first * second),
            Poles::Complex { re, im } => (2.0 * re, re * re + im * im),
        }
    }

    pub fn slowest_rate(&self) -> f64 {
        match *self {
            Poles::Real { first, second } => first.abs().min(second.abs()),
            Poles::Complex { re, .. } => re.abs(),
        }
    }

    pub fn is_hurwitz(&self) -> bool {
        match *self {
            Poles::Real { first, second } => first < 0.0 && second < 0.0,
            Poles::Complex { re, .. } => re < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObserverGains {
    pub l1: f64,
    pub l2: f64,
}

/// Output-injection gains giving `A - L C` the characteristic polynomial
/// `(s - λ1)(s - λ2)`.
///
/// With `C = [c1, c2]` the closed loop has trace `-a - L1 c1 - L2 c2` and
/// determinant `L2 (c1 + a c2)`, so the gains follow from two scalar solves.
/// Any pole pair is accepted here; callers that need convergence check
/// [`Poles::is_hurwitz`].
pub fn place_gains(kernels: &ObserverKernels, poles: Poles) -> Result<ObserverGains> {
    let [c1, c2] = kernels.c_row;
    let a = -kernels.a_matrix[0][0];
    let (sum, product) = poles.sum_product();
    if !(sum.is_finite() && product.is_finite()) {
        return Err(Error::NonFinite("requested poles"));
    }
    let det_term = c1 + a * c2;
    if c1 == 0.0 || det_term == 0.0 {
        return Err(Error::Unobservable("singular pole placement system"));
    }
    let l2 = product / det_term;
    let l1 = (-sum - a - l2 * c2) / c1;
    Ok(ObserverGains { l1, l2 })
}

/// `A - L C`.
pub fn closed_loop_matrix(kernels: &ObserverKernels, gains: ObserverGains) -> [[f64; 2]; 2] {
    let [c1, c2] = kernels.c_row;
    let m = kernels.a_matrix;
    [
        [m[0][0] - gains.l1 * c1, m[0][1] - gains.l1 * c2],
        [m[1][0] - gains.l2 * c1, m[1][1] - gains.l2 * c2],
    ]
}

/// Observer estimates together with the injection profile they use.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub u_hat: Vec<f64>,
    pub x_hat: f64,
    pub v_hat: f64,
    gains: ObserverGains,
    injection: Vec<f64>,
}

impl ObserverState {
    pub fn new(
        kernels: &ObserverKernels,
        gains: ObserverGains,
        u_hat: Vec<f64>,
        x_hat: f64,
        v_hat: f64,
    ) -> Result<Self> {
        if u_hat.len() != kernels.gamma1.len() {
            return Err(Error::GridMismatch {
                expected: kernels.gamma1.len(),
                actual: u_hat.len(),
            });
        }
        Ok(Self {
            u_hat,
            x_hat,
            v_hat,
            gains,
            injection: kernels.injection(gains),
        })
    }

    pub fn gains(&self) -> ObserverGains {
        self.gains
    }

    pub fn injection(&self) -> &[f64] {
        &self.injection
    }

    pub fn set_gains(&mut self, kernels: &ObserverKernels, gains: ObserverGains) {
        self.gains = gains;
        self.injection = kernels.injection(gains);
    }

    /// Estimated return-vent concentration `û(1,t)`.
    pub fn output(&self) -> f64 {
        self.u_hat[self.u_hat.len() - 1]
    }

    /// One explicit step driven by the measurement `y = u(1,t)`. `u_next` is the
    /// supply reading at `t + dt`, used for the pinned boundary after the step.
    pub fn step(
        &mut self,
        params: &ModelParams,
        grid: &Grid,
        y: f64,
        u_next: f64,
        dt: f64,
    ) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::NonFinite("observer measurement"));
        }
        let innovation = y - self.output();
        let base = params.b_x * self.x_hat;
        let injection = &self.injection;
        numerics::advect_step(
            &mut self.u_hat,
            grid,
            params.b,
            |i| base + injection[i] * innovation,
            params.inflow(u_next),
            dt,
        )?;
        let x_rate = -params.a * self.x_hat + self.v_hat + self.gains.l1 * innovation;
        self.x_hat = numerics::ode_step(self.x_hat, x_rate, dt);
        self.v_hat = numerics::ode_step(self.v_hat, self.gains.l2 * innovation, dt);
        Ok(())
    }
}

/// Free-function form of [`ObserverState::step`].
pub fn observer_step(
    obs: &mut ObserverState,
    y: f64,
    u_next: f64,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<()> {
    obs.step(params, grid, y, u_next, dt)
}

/// Composite squared error `‖u - û‖² + (X - X̂)² + (V - V̂)²`.
pub fn error_norm(grid: &Grid, plant: &PlantState, obs: &ObserverState) -> Result<f64> {
    grid.check(&plant.u)?;
    grid.check(&obs.u_hat)?;
    let du: Vec<f64> = plant.u.iter().zip(&obs.u_hat).map(|(u, h)| u - h).collect();
    Ok(numerics::norm_sq(grid, &du)?
        + (plant.x - obs.x_hat).powi(2)
        + (plant.v - obs.v_hat).powi(2))
}

/// Least-squares slope of `ln(values)` against `times`. Non-positive samples are skipped.
pub fn log_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
