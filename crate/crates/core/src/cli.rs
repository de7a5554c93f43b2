//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on configuration or I/O errors, 2 when a
//! trial hits the step cap or a bound calculation fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bandit::ArmMargin;
use crate::harness::{
    bounds_for_config, means_csv, noise_for_config, prepare, run_scenario, write_bounds,
    write_reports, HarnessError, ScenarioConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "beam-bai",
    version,
    about = "Fixed-confidence beam alignment experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo experiment and write reports.
    Run(RunArgs),
    /// Print lower and upper characteristic-time bounds per SNR.
    Bounds(CommonArgs),
    /// Evaluate the large-noise condition per SNR.
    Check(CommonArgs),
    /// Write base and super arm means to means.csv.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario config file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads; defaults to the available cores.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Per-phase cap on sampling steps.
    #[arg(long, value_name = "N")]
    pub step_cap: Option<u64>,
    /// Recompute tracked weights every N steps.
    #[arg(long, value_name = "N")]
    pub weight_refresh: Option<u64>,
    /// Use the overlapping Phase II window for 2PHT&S.
    #[arg(long)]
    pub overlapping: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// SNR at which to evaluate the means; defaults to the first grid entry.
    #[arg(long, value_name = "DB")]
    pub snr: Option<f64>,
}

/// Parses `args` (program name first) and runs the command, writing
/// human-readable output to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}

fn load(common: &CommonArgs, extra: &[String]) -> Result<ScenarioConfig, HarnessError> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    ScenarioConfig::load(&common.config, &overrides)
}

fn out_dir(common: &CommonArgs) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> HarnessError {
    HarnessError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, HarnessError> {
    match cmd {
        Command::Run(a) => cmd_run(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut extra = Vec::new();
    if let Some(n) = a.step_cap {
        extra.push(format!("step_cap={n}"));
    }
    if let Some(n) = a.weight_refresh {
        extra.push(format!("weight_refresh={n}"));
    }
    if a.overlapping {
        extra.push("overlapping=true".into());
    }
    let cfg = load(&a.common, &extra)?;
    let dir = out_dir(&a.common);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.jobs {
        if n == 0 {
            return Err(HarnessError::Config("--jobs must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_scenario(&cfg))?;
    write_reports(&cfg, &report, &dir)?;

    let w = |e| io_err(&dir, e);
    writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>10} {:>10} {:>7} {:>8}",
        "algorithm", "snr_db", "trials", "mean_tau", "std_tau", "error", "ear"
    )
    .map_err(w)?;
    for r in &report.summary {
        writeln!(
            out,
            "{:<20} {:>7.1} {:>7} {:>10.1} {:>10.1} {:>7.3} {:>8.3}",
            r.algorithm, r.snr_db, r.trials, r.mean_tau, r.std_tau, r.error_rate, r.mean_ear
        )
        .map_err(w)?;
    }
    let failures = report.failures();
    if failures > 0 {
        writeln!(out, "{failures} trial(s) hit the step cap").map_err(w)?;
        return Ok(EXIT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn cmd_bounds(a: CommonArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let cfg = load(&a, &[])?;
    let rows = bounds_for_config(&cfg)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_bounds(&rows, &dir.join("bounds.csv"))?;
    }
    let w = |e| io_err(&a.config, e);
    let show = |v: &Result<f64, String>| match v {
        Ok(x) => format!("{x:.6}"),
        Err(m) => m.clone(),
    };
    writeln!(
        out,
        "{:>8} {:>16} {:>16} {:>16}",
        "snr_db", "lower_bound", "c_star_u_total", "t_star_u"
    )
    .map_err(w)?;
    let mut failed = false;
    for r in &rows {
        failed |= r.lower_bound.is_err() || r.t_star_u.is_err();
        if let Err(m) = &r.c_star_u_total {
            failed |= m != "vacuous";
        }
        writeln!(
            out,
            "{:>8.1} {:>16} {:>16} {:>16}",
            r.snr_db,
            show(&r.lower_bound),
            show(&r.c_star_u_total),
            show(&r.t_star_u)
        )
        .map_err(w)?;
    }
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}

fn cmd_check(a: CommonArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let cfg = load(&a, &[])?;
    let w = |e| io_err(&a.config, e);
    for (snr, rep) in noise_for_config(&cfg)? {
        writeln!(
            out,
            "snr {snr} dB: {} (sigma2 = {:e}, required > {:e})",
            if rep.holds { "holds" } else { "violated" },
            rep.sigma2,
            rep.required
        )
        .map_err(w)?;
        for m in &rep.margins {
            match m {
                ArmMargin::Threshold { arm, threshold } => {
                    writeln!(out, "  arm {:>4}: threshold {threshold:e}", arm + 1).map_err(w)?
                }
                ArmMargin::Vacuous { arm, denominator } => writeln!(
                    out,
                    "  arm {:>4}: no constraint (denominator {denominator:e})",
                    arm + 1
                )
                .map_err(w)?,
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_inspect(a: InspectArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut cfg = load(&a.common, &[])?;
    if let Some(snr) = a.snr {
        cfg.snr_db_grid = vec![snr];
    }
    cfg.snr_db_grid.truncate(1);
    let prepared = prepare(&cfg)?;
    let point = &prepared.points[0];
    let dir = out_dir(&a.common);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let path = dir.join("means.csv");
    fs::write(&path, means_csv(point)).map_err(|e| io_err(&path, e))?;
    writeln!(
        out,
        "snr {} dB: best base arm {}, best super arm {}; wrote {}",
        point.snr_db,
        point.best_base,
        point.best_super,
        path.display()
    )
    .map_err(|e| io_err(&path, e))?;
    Ok(EXIT_OK)
}
