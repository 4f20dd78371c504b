use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use co2room::observer::{self, Poles};
use co2room::scenario::{self, Mode, ScenarioConfig};

/// Default scenario length when no config is given: four pump cycles.
const DEFAULT_DURATION: f64 = 4.0 * 3600.0;

#[derive(Parser, Debug)]
#[command(
    name = "co2room",
    version,
    about = "Room CO2 transport model, observer and identifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the plant.
    Simulate(Shared),
    /// Simulate the plant alongside the boundary observer.
    Observe(Shared),
    /// Identify b, b_X and a from full-state measurements.
    Identify(Shared),
    /// Identify b_X and a with b known.
    IdentifyKnownB(Shared),
    /// Print observer kernels, observability determinant and placed gains.
    Kernels(Shared),
    /// Run the invariant suite on the configured scenario.
    Check(Shared),
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// JSON scenario file. Defaults to the Experiment I room.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// CFL safety factor in (0, 1].
    #[arg(long)]
    safety: Option<f64>,
    /// Simulated time, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Output sample period, s.
    #[arg(long)]
    sample_period: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Shared {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(path) => {
                let cfg = ScenarioConfig::load(path)?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, base)
            }
            None => (
                ScenarioConfig::experiment_i(DEFAULT_DURATION),
                PathBuf::from("."),
            ),
        };
        if let Some(n) = self.grid_n {
            cfg.grid_n = n;
        }
        if let Some(s) = self.safety {
            cfg.safety = s;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        if let Some(p) = self.sample_period {
            cfg.sample_period = p;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((cfg, base))
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(path).map_err(|source| co2room::Error::Io {
                    path: path.clone(),
                    source,
                })?,
            )),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn pipeline(shared: &Shared, mode: Mode) -> Result<()> {
    let (cfg, base) = shared.load()?;
    let scenario = cfg.resolve(&base)?;
    let log = scenario::run(&scenario, mode)?;
    let mut out = shared.output()?;
    log.write_csv(&mut out)?;
    out.flush().context("flushing output")?;
    if log.summary.diverged {
        eprintln!("warning: tracked norms exceeded the divergence cap");
    }
    Ok(())
}

fn kernels(shared: &Shared) -> Result<()> {
    let (cfg, base) = shared.load()?;
    let s = cfg.resolve(&base)?;
    let k = observer::compute_kernels(&s.params, &s.grid)?;
    let poles = s
        .observer
        .poles
        .unwrap_or_else(|| Poles::default_for(&s.params));
    let gains = observer::place_gains(&k, poles)?;
    let mut out = shared.output()?;
    writeln!(out, "gamma1(1) = {:e}", k.c_row[0])?;
    writeln!(out, "gamma2(1) = {:e}", k.c_row[1])?;
    writeln!(out, "det(O) = {:e}", k.observability_det())?;
    writeln!(out, "poles = {poles:?}")?;
    writeln!(out, "L1 = {:e}", gains.l1)?;
    writeln!(out, "L2 = {:e}", gains.l2)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug)]
struct ChecksFailed(usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} invariant check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

fn check(shared: &Shared) -> Result<()> {
    let (cfg, base) = shared.load()?;
    let s = cfg.resolve(&base)?;
    let outcomes = scenario::run_checks(&s)?;
    let mut out = shared.output()?;
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {}: {}", o.name, o.detail)?;
    }
    out.flush()?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        bail!(ChecksFailed(failed));
    }
    Ok(())
}

/// Maps a failure to its printed category and exit code.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if err.downcast_ref::<ChecksFailed>().is_some() {
        return ("check", 10);
    }
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<co2room::Error>()) {
        let cat = e.category();
        let code = match cat {
            "config" => 2,
            "signal" => 3,
            "numeric" => 4,
            "cfl" => 5,
            "grid" => 6,
            "unobservable" => 7,
            "trace" => 8,
            "io" => 9,
            _ => 1,
        };
        return (cat, code);
    }
    if err
        .chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some())
    {
        return ("io", 9);
    }
    ("internal", 1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(s) => pipeline(s, Mode::Simulate),
        Command::Observe(s) => pipeline(s, Mode::Observe),
        Command::Identify(s) => pipeline(s, Mode::Identify),
        Command::IdentifyKnownB(s) => pipeline(s, Mode::IdentifyKnownB),
        Command::Kernels(s) => kernels(s),
        Command::Check(s) => check(s),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (category, code) = classify(&err);
            eprintln!("error[{category}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
