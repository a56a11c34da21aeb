//! Command-line driver for the feedback-correction protocol model.

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qffcr_core::validation::run_validation;

use commands::{CliError, CliResult, Layer, Outcome};
use config::read_config_file;
use output::write_table;

#[derive(Parser)]
#[command(name = "qffcr", version, about = "Weak-measurement feedback correction under amplitude damping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probability, fidelity and QFI at one parameter point.
    Metrics(MetricsArgs),
    /// Best (theta, eta) at one decay rate.
    Optimize(OptimizeArgs),
    /// Optimize over a grid of decay rates.
    Sweep(SweepArgs),
    /// Fidelity and probability over the whole control grid.
    Pareto(ParetoArgs),
    /// Data table for one plot.
    Figure(FigureArgs),
    /// Cross-engine consistency checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// dense | structured | closedform-appendix | closedform-verbatim
    #[arg(long)]
    engine: Option<String>,
    /// physical | paper
    #[arg(long)]
    convention: Option<String>,
    /// Complex-to-real mapping: real | modulus
    #[arg(long)]
    mapping: Option<String>,
    /// aggregate | branch-zero
    #[arg(long)]
    fidelity_norm: Option<String>,
    /// Number of qubits.
    #[arg(short, long)]
    n: Option<String>,
    /// Input state mixing angle (accepts multiples of pi, e.g. pi/3).
    #[arg(long)]
    gamma: Option<String>,
    /// Input state relative phase.
    #[arg(long)]
    phi0: Option<String>,
    #[arg(long)]
    max_qubits: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Write to a file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// key=value file, or a CSV previously written by this tool.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Worker threads or `auto` (also QFFCR_THREADS).
    #[arg(long)]
    threads: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    theta_lo: Option<String>,
    #[arg(long)]
    theta_hi: Option<String>,
    #[arg(long)]
    theta_steps: Option<String>,
    #[arg(long)]
    eta_lo: Option<String>,
    #[arg(long)]
    eta_hi: Option<String>,
    #[arg(long)]
    eta_steps: Option<String>,
    #[arg(long)]
    refine_iters: Option<String>,
    #[arg(long)]
    refine_shrink: Option<String>,
}

#[derive(Args)]
struct RangeArgs {
    #[arg(long)]
    r_from: Option<String>,
    #[arg(long)]
    r_to: Option<String>,
    #[arg(long)]
    r_step: Option<String>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(short, long)]
    r: Option<String>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    /// qfi | fidelity | probability
    #[arg(long)]
    objective: Option<String>,
    /// none | unit-probability
    #[arg(long)]
    constraint: Option<String>,
    #[arg(short, long)]
    r: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    range: RangeArgs,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    constraint: Option<String>,
}

#[derive(Args)]
struct ParetoArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(short, long)]
    r: Option<String>,
}

#[derive(Args)]
struct FigureArgs {
    /// 2a 2b 2c 3a 3b 4a 4b 5 6a 6b
    #[arg(value_name = "ID")]
    id_pos: Option<String>,
    #[arg(long, conflicts_with = "id_pos")]
    id: Option<String>,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    range: RangeArgs,
    /// Comma-separated input angles for the generalized-state plots.
    #[arg(long)]
    gammas: Option<String>,
    /// Decay rate of the scatter plot.
    #[arg(short, long)]
    r: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    seed: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threads: Option<String>,
}

fn put(m: &mut Layer, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.clone());
    }
}

impl Common {
    fn flags(&self, m: &mut Layer) {
        put(m, "engine", &self.engine);
        put(m, "convention", &self.convention);
        put(m, "mapping", &self.mapping);
        put(m, "fidelity-norm", &self.fidelity_norm);
        put(m, "n", &self.n);
        put(m, "gamma", &self.gamma);
        put(m, "phi0", &self.phi0);
        put(m, "max-qubits", &self.max_qubits);
        put(m, "format", &self.format);
    }
}

impl GridArgs {
    fn flags(&self, m: &mut Layer) {
        put(m, "theta-lo", &self.theta_lo);
        put(m, "theta-hi", &self.theta_hi);
        put(m, "theta-steps", &self.theta_steps);
        put(m, "eta-lo", &self.eta_lo);
        put(m, "eta-hi", &self.eta_hi);
        put(m, "eta-steps", &self.eta_steps);
        put(m, "refine-iters", &self.refine_iters);
        put(m, "refine-shrink", &self.refine_shrink);
    }
}

impl RangeArgs {
    fn flags(&self, m: &mut Layer) {
        put(m, "r-from", &self.r_from);
        put(m, "r-to", &self.r_to);
        put(m, "r-step", &self.r_step);
    }
}

/// `n` or `auto`; unset falls back to QFFCR_THREADS, then to rayon's default.
fn init_threads(setting: Option<String>) -> CliResult<()> {
    let setting = setting.or_else(|| std::env::var("QFFCR_THREADS").ok());
    let threads = match setting.as_deref() {
        None | Some("auto") => return Ok(()),
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| config::ConfigError(format!("threads=`{s}` is neither a count nor `auto`")))?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| config::ConfigError(format!("thread pool: {e}")).into())
}

/// Loads the config file and pulls out the keys that never reach the header.
fn load_file(path: &Option<PathBuf>) -> CliResult<(Layer, Option<String>, Option<PathBuf>)> {
    let mut file = match path {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let threads = file.remove("threads");
    let output = file.remove("output").map(PathBuf::from);
    Ok((file, threads, output))
}

fn sink(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

type Runner = fn(&Layer, &Layer) -> CliResult<Outcome>;

fn run_table(name: &str, common: &Common, flags: Layer, runner: Runner) -> CliResult<()> {
    let (file, threads, output) = load_file(&common.config)?;
    init_threads(common.threads.clone().or(threads))?;
    let outcome = runner(&file, &flags)?;
    let format = commands::output_format(&outcome.config)?;
    let mut out = sink(&common.output.clone().or(output))?;
    write_table(&mut out, format, name, &outcome.config, &outcome.table)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut flags = Layer::new();
    match cli.command {
        Command::Metrics(a) => {
            a.common.flags(&mut flags);
            put(&mut flags, "theta", &a.theta);
            put(&mut flags, "eta", &a.eta);
            put(&mut flags, "r", &a.r);
            run_table("metrics", &a.common, flags, commands::metrics)
        }
        Command::Optimize(a) => {
            a.common.flags(&mut flags);
            a.grid.flags(&mut flags);
            put(&mut flags, "objective", &a.objective);
            put(&mut flags, "constraint", &a.constraint);
            put(&mut flags, "r", &a.r);
            run_table("optimize", &a.common, flags, commands::optimize)
        }
        Command::Sweep(a) => {
            a.common.flags(&mut flags);
            a.grid.flags(&mut flags);
            a.range.flags(&mut flags);
            put(&mut flags, "objective", &a.objective);
            put(&mut flags, "constraint", &a.constraint);
            run_table("sweep", &a.common, flags, commands::sweep)
        }
        Command::Pareto(a) => {
            a.common.flags(&mut flags);
            a.grid.flags(&mut flags);
            put(&mut flags, "r", &a.r);
            run_table("pareto", &a.common, flags, commands::pareto)
        }
        Command::Figure(a) => {
            a.common.flags(&mut flags);
            a.grid.flags(&mut flags);
            a.range.flags(&mut flags);
            put(&mut flags, "id", &a.id.clone().or(a.id_pos.clone()));
            put(&mut flags, "gammas", &a.gammas);
            put(&mut flags, "r", &a.r);
            run_table("figure", &a.common, flags, commands::figure)
        }
        Command::Validate(a) => {
            let (mut file, threads, output) = load_file(&a.config)?;
            init_threads(a.threads.or(threads))?;
            let seed = a.seed.or_else(|| file.remove("seed")).unwrap_or_else(|| "0".into());
            if let Some(k) = file.keys().next() {
                return Err(config::ConfigError(format!("unknown config key `{k}`")).into());
            }
            let seed: u64 = seed
                .parse()
                .map_err(|_| config::ConfigError(format!("invalid seed `{seed}`")))?;
            let report = run_validation(seed);
            let mut out = sink(&a.output.or(output))?;
            out.write_all(report.render().as_bytes())?;
            out.flush()?;
            match report.failures() {
                0 => Ok(()),
                n => Err(CliError::ValidationFailed(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qffcr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
