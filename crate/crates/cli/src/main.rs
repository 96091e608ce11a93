//! `acs`: run verification suites and obstruction scans, and write JSON
//! reports. Exits with status 0 when every check passes, 1 when some check
//! fails, and 2 on configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use acs_core::fields::FIELD_NAMES;
use acs_core::obstruction::config::{parse_tolerance, ScanConfig, QUANTITIES, SUITES};
use acs_core::obstruction::report::{emit_report, ScanReport, Value};
use acs_core::obstruction::{scan, suites};
use acs_core::poly::read_fg_table;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acs", version, about = "Identity checks and obstruction scans for almost complex structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named verification suite.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
    },
    /// Scan a pointwise functional for extrema and witnesses.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(QUANTITIES))]
        quantity: String,
        /// Refine the best sample by coordinate ascent.
        #[arg(long)]
        optimize: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(FIELD_NAMES))]
    field: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step; defaults to the backend's step.
    #[arg(long)]
    step: Option<f64>,
    /// Override a check tolerance, e.g. `--tol fd_vs_closed=1e-6`.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    tol: Vec<String>,
    /// Write the JSON report here (`-` for standard output).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Coefficient table for `stereo-fg`: lines `x_deg y_deg coefficient`,
    /// optionally grouped under `[f]` and `[g]` headers.
    #[arg(long, value_name = "PATH")]
    fg_coeffs: Option<PathBuf>,
    /// Conjugation strength for `conjugated-s6`, in [0, 1).
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self, base: ScanConfig) -> Result<ScanConfig> {
        let mut cfg = base;
        cfg.step = self.step;
        cfg.output = self.report.clone();
        cfg.params.eps = self.eps;
        for t in &self.tol {
            let (k, v) = parse_tolerance(t)?;
            cfg.tolerances.insert(k, v);
        }
        if let Some(path) = &self.fg_coeffs {
            cfg.params.fg = Some(read_fg_table(path)?);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (common, cfg) = match &cli.command {
        Command::Verify { common, suite } => {
            let base = ScanConfig::suite(&common.field, suite, common.samples, common.seed);
            (common, common.config(base)?)
        }
        Command::Scan {
            common,
            quantity,
            optimize,
        } => {
            let mut base = ScanConfig::scan(&common.field, quantity, common.samples, common.seed);
            base.optimize = *optimize;
            (common, common.config(base)?)
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    let report = pool.install(|| match &cli.command {
        Command::Verify { .. } => suites::run_suite(&cfg),
        Command::Scan { .. } => scan::scan(&cfg),
    })?;
    match cfg.output.as_deref() {
        Some(p) if p.as_os_str() == "-" => println!("{}", report.to_json()?),
        Some(p) => {
            emit_report(&report, p)?;
            print_summary(&report);
        }
        None => print_summary(&report),
    }
    Ok(report.passed())
}

fn print_summary(r: &ScanReport) {
    println!(
        "{} on {}: {} samples, seed {}, step {:e}, {:.2}s",
        r.suite, r.field, r.environment.samples, r.environment.seed, r.environment.step, r.environment.wall_time_s
    );
    for c in &r.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("  {status} {:<32} {:>12.4e} <= {:.1e}", c.name, c.max_residual, c.tolerance);
    }
    for e in &r.extrema {
        println!("  {:<36} max {:>12.6e}  min {:>12.6e}", e.quantity, e.max, e.min);
    }
    for v in &r.values {
        match v.value {
            Value::Number(x) => println!("  {:<36} {x:.16e}", v.name),
            Value::Flag(b) => println!("  {:<36} {b}", v.name),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
