//! Spatial grid, explicit upwind transport, explicit Euler and trapezoid quadrature.
//!
//! Every transport equation in the crate has the form
//!
//! ```text
//! w_t = c w_x + s(x, t),   w(0, t) = g(t),   c <= 0
//! ```
//!
//! so information enters at `x = 0` and leaves at `x = 1`. The upwind stencil
//! therefore looks at the left neighbour, and the update is written as the
//! convex combination `(1 - C) w_i + C w_{i-1}` with Courant number
//! `C = |c| dt / dx`, which makes `C = 1` an exact one-cell shift.

use crate::error::{Error, Result};

/// Courant numbers up to `1 + COURANT_SLACK` are accepted so that `dt = dx / |c|`
/// survives floating point rounding.
const COURANT_SLACK: f64 = 1e-12;

/// Uniform node-centred grid on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter {
                name: "grid_n",
                value: n as f64,
                reason: "at least 3 nodes are required",
            });
        }
        Ok(Self {
            n,
            dx: 1.0 / (n - 1) as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of node `i`. The last node is exactly 1.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            1.0
        } else {
            i as f64 * self.dx
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// A field holding `f(x_i)` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.coords().map(f).collect()
    }

    pub fn constant(&self, value: f64) -> Vec<f64> {
        vec![value; self.n]
    }

    pub fn check(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n {
            return Err(Error::GridMismatch {
                expected: self.n,
                actual: field.len(),
            });
        }
        Ok(())
    }
}

/// Chooses `dt` so that every field advanced in a step satisfies the CFL bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    safety: f64,
    dt: f64,
}

impl StepController {
    pub fn new(safety: f64) -> Result<Self> {
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "safety",
                value: safety,
                reason: "safety factor must lie in (0, 1]",
            });
        }
        Ok(Self { safety, dt: 0.0 })
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    /// Step size chosen by the last call to [`StepController::update`].
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Recomputes `dt = safety * dx / c_max` over the given advection speeds.
    pub fn update(&mut self, grid: &Grid, speeds: &[f64]) -> Result<f64> {
        let c_max = speeds.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if !c_max.is_finite() {
            return Err(Error::NonFinite("advection speed"));
        }
        if c_max == 0.0 {
            return Err(Error::InvalidParameter {
                name: "speed",
                value: 0.0,
                reason: "no transport speed to bound the step",
            });
        }
        self.dt = self.safety * grid.dx() / c_max;
        Ok(self.dt)
    }
}

/// Courant number of a transport step, rejecting CFL violations and
/// right-to-left transport.
pub fn courant(grid: &Grid, speed: f64, dt: f64) -> Result<f64> {
    if !(speed.is_finite() && dt.is_finite()) {
        return Err(Error::NonFinite("transport step"));
    }
    if speed > 0.0 {
        return Err(Error::WrongDirection(speed));
    }
    let c = speed.abs() * dt / grid.dx();
    if c > 1.0 + COURANT_SLACK {
        return Err(Error::Cfl {
            courant: c,
            speed,
            dt,
            dx: grid.dx(),
        });
    }
    Ok(c.min(1.0))
}

/// One explicit upwind step of `w_t = speed * w_x + source(i)` with inflow
/// `w(0) = inflow` imposed after the step. `speed` follows the model's sign
/// convention (non-positive, transport toward `x = 1`).
pub fn advect_step<S>(
    field: &mut [f64],
    grid: &Grid,
    speed: f64,
    source: S,
    inflow: f64,
    dt: f64,
) -> Result<()>
where
    S: Fn(usize) -> f64,
{
    grid.check(field)?;
    let c = courant(grid, speed, dt)?;
    // Reverse sweep keeps w_{i-1} at its old value when w_i is updated.
    for i in (1..field.len()).rev() {
        field[i] = (1.0 - c) * field[i] + c * field[i - 1] + dt * source(i);
    }
    field[0] = inflow;
    Ok(())
}

/// Upwind (backward) difference `w_x`. Node 0 uses the forward difference.
pub fn upwind_gradient(field: &[f64], grid: &Grid) -> Vec<f64> {
    let n = field.len();
    let inv_dx = 1.0 / grid.dx();
    let mut out = Vec::with_capacity(n);
    out.push((field[1] - field[0]) * inv_dx);
    out.extend(field.windows(2).map(|w| (w[1] - w[0]) * inv_dx));
    out
}

/// Explicit Euler step.
pub fn ode_step(x: f64, rhs: f64, dt: f64) -> f64 {
    x + dt * rhs
}

/// Trapezoid quadrature of a field over `[0, 1]`.
pub fn integrate(grid: &Grid, field: &[f64]) -> Result<f64> {
    grid.check(field)?;
    Ok(field
        .iter()
        .enumerate()
        .map(|(i, f)| grid.weight(i) * f)
        .sum())
}

/// Trapezoid quadrature of `f * g` over `[0, 1]`.
pub fn inner(grid: &Grid, f: &[f64], g: &[f64]) -> Result<f64> {
    grid.check(f)?;
    grid.check(g)?;
    Ok(f.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (a, b))| grid.weight(i) * a * b)
        .sum())
}

/// Squared L2 norm.
pub fn norm_sq(grid: &Grid, f: &[f64]) -> Result<f64> {
    inner(grid, f, f)
}

/// `∫ (2 - x) f(x)^2 dx`, the weighted energy used by the Lyapunov certificates.
pub fn weighted_energy(grid: &Grid, f: &[f64]) -> Result<f64> {
    grid.check(f)?;
    Ok(f.iter()
        .enumerate()
        .map(|(i, v)| grid.weight(i) * (2.0 - grid.x(i)) * v * v)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_endpoints() {
        let g = Grid::new(201).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(200), 1.0);
        assert!(Grid::new(2).is_err());
    }

    #[test]
    fn quadrature_basics() {
        let g = Grid::new(101).unwrap();
        let one = g.constant(1.0);
        assert!((inner(&g, &one, &one).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(integrate(&g, &g.constant(0.0)).unwrap(), 0.0);
        let x = g.sample(|x| x);
        // trapezoid error for x^2 is dx^2 / 6
        let err = (inner(&g, &x, &x).unwrap() - 1.0 / 3.0).abs();
        assert!(err <= g.dx() * g.dx() / 6.0 + 1e-15, "{err}");
        assert!(inner(&g, &x, &x[1..]).is_err());
    }

    #[test]
    fn weighted_energy_three_nodes() {
        // nodes 0, 0.5, 1 with weights 1/4, 1/2, 1/4 and (2-x) = 2, 1.5, 1
        let g = Grid::new(3).unwrap();
        let e = [1.0, 2.0, 3.0];
        let hand = 0.25 * 2.0 * 1.0 + 0.5 * 1.5 * 4.0 + 0.25 * 1.0 * 9.0;
        assert!((weighted_energy(&g, &e).unwrap() - hand).abs() < 1e-15);
    }

    #[test]
    fn pure_source_step() {
        let g = Grid::new(11).unwrap();
        let mut f = g.constant(3.0);
        advect_step(&mut f, &g, 0.0, |_| 2.0, 3.0, 0.25).unwrap();
        assert_eq!(f[0], 3.0);
        for v in &f[1..] {
            assert!((v - 3.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let g = Grid::new(11).unwrap();
        let mut f = g.constant(0.0);
        let err = advect_step(&mut f, &g, -1.0, |_| 0.0, 0.0, 0.2).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
        assert!(advect_step(&mut f, &g, 1.0, |_| 0.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn unit_courant_shifts_one_cell() {
        let g = Grid::new(51).unwrap();
        let speed: f64 = -8e-3;
        let dt = g.dx() / speed.abs();
        let mut f = g.sample(|x| (7.0 * x).sin() + x * x);
        let before = f.clone();
        advect_step(&mut f, &g, speed, |_| 0.0, -1.0, dt).unwrap();
        assert_eq!(f[0], -1.0);
        for i in 1..f.len() {
            assert!((f[i] - before[i - 1]).abs() <= 1e-15 * before[i - 1].abs().max(1.0));
        }
    }

    #[test]
    fn flushes_to_inflow_value() {
        let g = Grid::new(101).unwrap();
        let speed = -8e-3;
        let mut ctl = StepController::new(0.5).unwrap();
        let dt = ctl.update(&g, &[speed]).unwrap();
        let mut f = g.sample(|x| 400.0 + 50.0 * (3.0 * x).cos());
        let mut t = 0.0;
        // numerical diffusion spreads the front, so run several transit times
        while t < 6.0 / speed.abs() {
            advect_step(&mut f, &g, speed, |_| 0.0, 450.0, dt).unwrap();
            t += dt;
        }
        for v in &f {
            assert!((v - 450.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn euler_local_error_is_second_order() {
        let a: f64 = 1e-3;
        for dt in [10.0, 5.0, 2.5] {
            let exact = (-a * dt).exp();
            let euler = ode_step(1.0, -a, dt);
            let err = (exact - euler).abs();
            let lead = 0.5 * (a * dt).powi(2);
            assert!((err - lead).abs() < 0.01 * lead, "{err} vs {lead}");
        }
        assert_eq!(ode_step(1.0, 0.0, 0.3), 1.0);
    }

    proptest! {
        #[test]
        fn maximum_principle(
            init in proptest::collection::vec(-100.0..100.0f64, 21),
            inflows in proptest::collection::vec(-100.0..100.0f64, 1..60),
            sigma in 0.05..1.0f64,
        ) {
            let g = Grid::new(21).unwrap();
            let speed = -0.01;
            let dt = sigma * g.dx() / 0.01;
            let mut f = init.clone();
            let mut lo = init.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut hi = init.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for k in inflows {
                lo = lo.min(k);
                hi = hi.max(k);
                advect_step(&mut f, &g, speed, |_| 0.0, k, dt).unwrap();
                for v in &f {
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
                }
            }
        }
    }
}
