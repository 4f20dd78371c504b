//! Invariant suite run by `co2room check`, plus the measurement helpers it
//! shares with the acceptance tests.

use super::config::{IdentifierConfig, ObserverConfig, Scenario};
use super::run::{run, Mode, Simulation};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PiecewiseConstantSignal, SignalUnit};
use crate::numerics::{self, Grid};
use crate::observer;

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

fn bare_scenario(params: ModelParams, grid: Grid, safety: f64, duration: f64) -> Scenario {
    Scenario {
        params,
        grid,
        safety,
        duration,
        sample_period: duration,
        initial_u: params.u_e,
        initial_x: 0.0,
        source: PiecewiseConstantSignal::constant(0.0, SignalUnit::PpmPerSecond),
        supply: PiecewiseConstantSignal::constant(params.u_e, SignalUnit::Ppm),
        supply_ramp: 0.0,
        observer: ObserverConfig::default(),
        identifier: IdentifierConfig::default(),
        seed: 0,
    }
}

/// Time for a supply step of size `step` to reach the return vent, measured
/// at the half-height crossing of `u(1,t)` and interpolated between steps.
/// The room starts at equilibrium with `V ≡ 0`.
pub fn transport_delay(params: &ModelParams, grid: Grid, safety: f64, step: f64) -> Result<f64> {
    if step == 0.0 || !step.is_finite() {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            reason: "step size must be finite and nonzero",
        });
    }
    let horizon = 3.0 * params.transit_time();
    let mut s = bare_scenario(*params, grid, safety, horizon);
    s.supply = PiecewiseConstantSignal::new(
        vec![0.0],
        vec![params.u_e, params.u_e + step],
        SignalUnit::Ppm,
    )?;
    let mut sim = Simulation::new(&s, Mode::Simulate)?;
    // The inflow datum is 2U_e - U, so the return moves by -step.
    let start = params.u_e;
    let half = params.u_e - 0.5 * step;
    let progress = |y: f64| (y - start) / (half - start);
    let (mut t_prev, mut f_prev) = (sim.t(), progress(sim.plant().output()));
    while sim.t() < horizon {
        sim.advance_toward(horizon)?;
        let f = progress(sim.plant().output());
        if f >= 1.0 {
            let t = sim.t();
            return Ok(t_prev + (1.0 - f_prev) / (f - f_prev) * (t - t_prev));
        }
        t_prev = sim.t();
        f_prev = f;
    }
    Err(Error::Config(format!(
        "supply step did not reach the return within {horizon} s"
    )))
}

/// Relative L2 distance between the simulated field at `t = 10/a` and the
/// steady profile, for constant `V = v` and `U = u_supply`. Starts from
/// `u ≡ U_e`, `X = 0`.
pub fn steady_state_error(
    params: &ModelParams,
    grid: Grid,
    safety: f64,
    v: f64,
    u_supply: f64,
) -> Result<f64> {
    let horizon = 10.0 / params.a;
    let mut s = bare_scenario(*params, grid, safety, horizon);
    s.source = PiecewiseConstantSignal::constant(v, SignalUnit::PpmPerSecond);
    s.supply = PiecewiseConstantSignal::constant(u_supply, SignalUnit::Ppm);
    let mut sim = Simulation::new(&s, Mode::Simulate)?;
    while sim.t() < horizon {
        sim.advance_toward(horizon)?;
    }
    let target = params.steady_state_profile(&s.grid, v, u_supply);
    let diff: Vec<f64> = sim
        .plant()
        .u
        .iter()
        .zip(&target)
        .map(|(u, w)| u - w)
        .collect();
    Ok((numerics::norm_sq(&s.grid, &diff)? / numerics::norm_sq(&s.grid, &target)?).sqrt())
}

/// Largest deviation from an exact one-cell shift over `steps` steps at unit
/// Courant number, for a non-smooth initial profile.
pub fn unit_courant_shift_error(grid: &Grid, speed: f64, steps: usize) -> Result<f64> {
    let n = grid.n();
    let dt = grid.dx() / speed.abs();
    let init: Vec<f64> = (0..n)
        .map(|i| ((i * 7919) % 101) as f64 - 50.0 + 0.25 * i as f64)
        .collect();
    let mut w = init.clone();
    let inflow = |k: usize| (k as f64).sin();
    for k in 1..=steps {
        numerics::advect_step(&mut w, grid, speed, |_| 0.0, inflow(k), dt)?;
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        let expected = if i >= steps {
            init[i - steps]
        } else {
            inflow(steps - i)
        };
        worst = worst.max((w[i] - expected).abs());
    }
    Ok(worst)
}

/// Runs the invariant suite against a scenario.
pub fn run_checks(s: &Scenario) -> Result<Vec<CheckOutcome>> {
    let p = &s.params;
    let dx = s.grid.dx();
    let mut out = Vec::new();

    let delay = transport_delay(p, s.grid, s.safety, 10.0)?;
    let tol = 2.0 * dx / p.b.abs();
    out.push(CheckOutcome::new(
        "transport-delay",
        (delay - p.transit_time()).abs() <= tol,
        format!(
            "measured {delay:.4} s, expected {:.4} s ± {tol:.4} s",
            p.transit_time()
        ),
    ));

    let v = s
        .source
        .values()
        .iter()
        .copied()
        .find(|v| *v != 0.0)
        .unwrap_or(1.0);
    let err = steady_state_error(p, s.grid, s.safety, v, p.u_e)?;
    out.push(CheckOutcome::new(
        "steady-state",
        err <= 1e-4,
        format!("relative L2 error {err:.3e} at t = 10/a (V = {v})"),
    ));

    let shift = unit_courant_shift_error(&s.grid, p.b, s.grid.n() / 2)?;
    out.push(CheckOutcome::new(
        "unit-courant-shift",
        shift <= 1e-12,
        format!("max deviation {shift:.3e}"),
    ));

    let kernels = observer::compute_kernels(p, &s.grid);
    out.push(match kernels {
        Ok(k) => {
            let det = k.observability_det();
            CheckOutcome::new(
                "observability",
                det.is_finite() && det != 0.0,
                format!("det(O) = {det:e}"),
            )
        }
        Err(e) => CheckOutcome::new("observability", false, e.to_string()),
    });

    let first = run(s, Mode::Simulate)?;
    let second = run(s, Mode::Simulate)?;
    let bytes = first.to_csv_bytes()?;
    out.push(CheckOutcome::new(
        "determinism",
        bytes == second.to_csv_bytes()?,
        format!("{} bytes of CSV", bytes.len()),
    ));
    let increasing = first.records.windows(2).all(|w| w[1].t > w[0].t);
    out.push(CheckOutcome::new(
        "monotone-time",
        increasing,
        format!("{} records", first.records.len()),
    ));

    if p.b_x != 0.0 {
        let obs = run(s, Mode::Observe)?;
        let same = first.records.iter().zip(&obs.records).all(|(a, b)| {
            (a.t, a.u_supply, a.u_return, a.x, a.v) == (b.t, b.u_supply, b.u_return, b.x, b.v)
        });
        out.push(CheckOutcome::new(
            "observer-passive",
            same && first.records.len() == obs.records.len(),
            "plant trajectory under observe matches simulate".into(),
        ));
    }

    if p.b < s.identifier.b_bar {
        let id = run(s, Mode::Identify)?;
        let sm = &id.summary;
        out.push(CheckOutcome::new(
            "projection",
            sm.projection_violations == 0,
            format!("{} steps with b_hat > b_bar", sm.projection_violations),
        ));
        out.push(CheckOutcome::new(
            "identifier-bounded",
            !sm.diverged,
            format!(
                "peak |a - a_hat| {:.3e}",
                sm.peaks_first_half.0[9].max(sm.peaks_second_half.0[9])
            ),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_matches_transit_time() {
        let p = ModelParams::room_i();
        let grid = Grid::new(201).unwrap();
        let d = transport_delay(&p, grid, 0.5, 10.0).unwrap();
        assert!((d - 125.0).abs() <= 2.0 * grid.dx() / p.b.abs(), "{d}");
    }

    #[test]
    fn zero_step_rejected() {
        let p = ModelParams::room_i();
        assert!(transport_delay(&p, Grid::new(11).unwrap(), 0.5, 0.0).is_err());
    }

    #[test]
    fn shift_is_exact() {
        let grid = Grid::new(41).unwrap();
        assert_eq!(unit_courant_shift_error(&grid, -0.008, 60).unwrap(), 0.0);
    }
}
