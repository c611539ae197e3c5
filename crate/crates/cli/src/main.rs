mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "ionqec", version, about = "Global-pulse QEC on a six-ion planar crystal")]
struct Cli {
    /// JSON file of parameters (or a run manifest); flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `sweep`. Standard output if omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "IONQEC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium layout and transverse normal modes.
    Modes(ModesArgs),
    /// Class phase table of a pulse solution or target.
    Phases(PhasesArgs),
    /// Search for pulse sequences realizing a target.
    Search(SearchArgs),
    /// Check a solution file against its target.
    Verify(VerifyArgs),
    /// Noiseless error-injection demo.
    Inject(InjectArgs),
    /// Mean protocol fidelity at one time, or a curve up to `--tmax`.
    Simulate(SimulateArgs),
    /// Curves for several σ, high-fidelity times and the scaling fit.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ModesArgs {
    #[arg(long)]
    n_ions: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct TargetArgs {
    /// Built-in target: spokes or ring.
    #[arg(long)]
    target: Option<String>,
    /// JSON with 64 phases, either a bare array or {"name", "phases"}.
    #[arg(long, conflicts_with = "target")]
    target_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PhasesArgs {
    /// Solution JSON; without it the target's own phases are listed.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Apply only the first k pulses.
    #[arg(long)]
    pulses: Option<usize>,
    #[command(flatten)]
    target: TargetArgs,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    bound: Option<i32>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    budget_secs: Option<f64>,
    /// tree (pruned integer search) or evolution.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    solution: Option<PathBuf>,
    #[command(flatten)]
    target: TargetArgs,
    /// Maximum deviation in radians.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct InjectArgs {
    #[arg(long)]
    code: Option<String>,
    /// Pauli and qubit, e.g. Z@3; qubit 0 is the hub.
    #[arg(long = "error")]
    errors: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    code: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    gate_time: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    code: Option<String>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    gate_time: Option<f64>,
}

impl Cli {
    fn flags(&self) -> (&'static str, Settings) {
        let base = Settings {
            seed: self.seed,
            threads: self.threads,
            ..Default::default()
        };
        let (name, s) = match &self.command {
            Command::Modes(a) => (
                "modes",
                Settings {
                    n_ions: a.n_ions,
                    beta: a.beta,
                    ..Default::default()
                },
            ),
            Command::Phases(a) => (
                "phases",
                Settings {
                    solution: a.solution.clone(),
                    pulses: a.pulses,
                    target: a.target.target.clone(),
                    target_file: a.target.target_file.clone(),
                    ..Default::default()
                },
            ),
            Command::Search(a) => (
                "search",
                Settings {
                    target: a.target.target.clone(),
                    target_file: a.target.target_file.clone(),
                    bound: a.bound,
                    tol: a.tol,
                    budget_secs: a.budget_secs,
                    method: a.method.clone(),
                    ..Default::default()
                },
            ),
            Command::Verify(a) => (
                "verify",
                Settings {
                    solution: a.solution.clone(),
                    target: a.target.target.clone(),
                    target_file: a.target.target_file.clone(),
                    tol: a.tol,
                    ..Default::default()
                },
            ),
            Command::Inject(a) => (
                "inject",
                Settings {
                    code: a.code.clone(),
                    errors: (!a.errors.is_empty()).then(|| a.errors.clone()),
                    ..Default::default()
                },
            ),
            Command::Simulate(a) => (
                "simulate",
                Settings {
                    code: a.code.clone(),
                    sigma: a.sigma,
                    samples: a.samples,
                    t: a.t,
                    tmax: a.tmax,
                    gate_time: a.gate_time,
                    ..Default::default()
                },
            ),
            Command::Sweep(a) => (
                "sweep",
                Settings {
                    code: a.code.clone(),
                    sigmas: a.sigmas.clone(),
                    samples: a.samples,
                    tmax: a.tmax,
                    gate_time: a.gate_time,
                    ..Default::default()
                },
            ),
        };
        (name, s.over(base))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = cli.flags();
    let settings = match &cli.config {
        Some(path) => match Settings::load(path) {
            Ok(file) => flags.over(file),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => flags,
    };
    if let Some(n) = settings.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(name, &settings, cli.out.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
