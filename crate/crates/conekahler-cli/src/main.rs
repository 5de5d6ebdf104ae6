//! `conekahler`: command line front end.
//!
//! Exit status 0 on success (including a flow that does not converge),
//! 2 on a numerical failure and 3 on an invalid configuration.

mod commands;
mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use commands::{Inputs, Run};
use config::{parse_ladder, InvariantCmd, RuledCmd, RunConfig, SolveOp};
use conekahler::error::Error;
use report::{Envelope, Output};
use serde_json::Value;
use std::path::PathBuf;
use std::process::ExitCode;

/// Default worker count when neither `--threads` nor the configuration sets one.
const THREADS_ENV: &str = "CONEKAHLER_THREADS";

#[derive(Parser, Debug)]
#[command(name = "conekahler", version, about = "Cone Kähler geometry on the marked Riemann sphere")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON report path; CSV sidecars are written next to it. Prints the report if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the configuration and CONEKAHLER_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct MetricArg {
    /// Metric file (TOML).
    #[arg(long)]
    metric: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct BundleArg {
    /// Parabolic bundle file (TOML).
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Metric summary, angle conditions and a weighted Hölder norm.
    Geometry {
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        order: Option<u8>,
        /// Grid function (CSV) to measure instead of the scalar curvature.
        #[arg(long)]
        function: Option<PathBuf>,
    },
    /// Laplace, K-bi-Laplace, continuity path or Fredholm (Lichnerowicz) solve.
    Solve {
        #[arg(long, value_enum)]
        op: Option<SolveOp>,
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long)]
        rhs: Option<PathBuf>,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Parabolic stability verdict in exact arithmetic.
    Stability {
        #[command(flatten)]
        bundle: BundleArg,
    },
    /// Hermitian-Einstein heat flow.
    Flow {
        #[command(flatten)]
        bundle: BundleArg,
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Scalar curvature expansion of the adiabatic metrics, or the first corrective step.
    Ruled {
        #[arg(long, value_enum)]
        cmd: Option<RuledCmd>,
        #[command(flatten)]
        bundle: BundleArg,
        #[command(flatten)]
        metric: MetricArg,
        /// Comma separated values of k.
        #[arg(long)]
        k_ladder: Option<String>,
    },
    /// Average scalar curvature or (log-)Futaki invariants.
    Invariants {
        #[arg(long, value_enum)]
        cmd: Option<InvariantCmd>,
        #[command(flatten)]
        metric: MetricArg,
        /// `z_dz`, `c*z_dz` or `0`.
        #[arg(long)]
        field: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Geometry { .. } => "geometry",
            Command::Solve { .. } => "solve",
            Command::Stability { .. } => "stability",
            Command::Flow { .. } => "flow",
            Command::Ruled { .. } => "ruled",
            Command::Invariants { .. } => "invariants",
        }
    }

    /// Applies the subcommand flags on top of the configuration.
    fn apply(&self, c: &mut RunConfig) -> Result<(), Error> {
        let set_metric = |c: &mut RunConfig, m: &MetricArg| {
            if let Some(p) = &m.metric {
                c.metric_file = Some(p.clone());
            }
        };
        let set_bundle = |c: &mut RunConfig, b: &BundleArg| {
            if let Some(p) = &b.bundle {
                c.bundle_file = Some(p.clone());
            }
        };
        match self {
            Command::Geometry { metric, alpha, order, function } => {
                set_metric(c, metric);
                c.geometry.alpha = alpha.unwrap_or(c.geometry.alpha);
                c.geometry.order = order.unwrap_or(c.geometry.order);
                if function.is_some() {
                    c.geometry.function = function.clone();
                }
            }
            Command::Solve { op, metric, rhs, k } => {
                set_metric(c, metric);
                c.solve.op = op.or(c.solve.op);
                if rhs.is_some() {
                    c.solve.rhs = rhs.clone();
                }
                c.solve.k = k.or(c.solve.k);
            }
            Command::Stability { bundle } => set_bundle(c, bundle),
            Command::Flow { bundle, metric, tol } => {
                set_bundle(c, bundle);
                set_metric(c, metric);
                c.flow.tol = tol.unwrap_or(c.flow.tol);
            }
            Command::Ruled { cmd, bundle, metric, k_ladder } => {
                set_bundle(c, bundle);
                set_metric(c, metric);
                c.ruled.cmd = cmd.or(c.ruled.cmd);
                if let Some(s) = k_ladder {
                    c.ruled.k_ladder = parse_ladder(s)?;
                }
            }
            Command::Invariants { cmd, metric, field } => {
                set_metric(c, metric);
                c.invariants.cmd = cmd.or(c.invariants.cmd);
                if field.is_some() {
                    c.invariants.field = field.clone();
                }
            }
        }
        Ok(())
    }
}

fn thread_count(cli: Option<usize>, cfg: Option<usize>) -> Result<usize, Error> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={s:?} is not a count")))?),
        Err(_) => None,
    };
    let n = cli.or(cfg).or(env).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(Error::InvalidConfig("thread count must be positive".into()));
    }
    Ok(n)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = cli.command.name();
    let mut inputs = Inputs::new();
    let mut out = Output::new(cli.out.clone());
    let mut seed = cli.seed.unwrap_or(0);
    let mut threads = 1;

    let outcome = (|| -> Result<Value, Error> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cli.command.apply(&mut cfg)?;
        if out.path.is_none() {
            out.path = cfg.out.clone();
        }
        seed = cli.seed.or(cfg.seed).unwrap_or(0);
        threads = thread_count(cli.threads, cfg.threads)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
        let mut run = Run { cfg: &cfg, seed, out: &mut out, inputs: &mut inputs };
        match cli.command {
            Command::Geometry { .. } => commands::geometry(&mut run),
            Command::Solve { .. } => commands::solve(&mut run),
            Command::Stability { .. } => commands::stability(&mut run),
            Command::Flow { .. } => commands::flow(&mut run),
            Command::Ruled { .. } => commands::ruled(&mut run),
            Command::Invariants { .. } => commands::invariants(&mut run),
        }
    })();

    let envelope = Envelope { command, seed, threads, inputs: Value::Object(inputs) };
    let text = envelope.render(&outcome, &out.sidecars);
    let code = outcome.as_ref().err().map_or(0, |e| e.exit_code());
    match &out.path {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &text) {
                eprintln!("conekahler: cannot write {}: {e}", p.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    if let Err(e) = &outcome {
        eprintln!("conekahler {command}: {e}");
    }
    ExitCode::from(code as u8)
}
