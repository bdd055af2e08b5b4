mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, Run};
use manifest::RunManifest;

/// Bayesian crash-frequency modeling and site screening.
#[derive(Parser, Debug)]
#[command(name = "crashfreq", version, about)]
struct Cli {
    /// Worker threads for chain-level parallelism (defaults to all cores).
    #[arg(long, global = true, env = "CRASHFREQ_THREADS")]
    threads: Option<usize>,

    /// Manifest file to append to (defaults to `manifest.jsonl` beside the outputs).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic site dataset and its truth record.
    Simulate(SimulateArgs),
    /// Run the MCMC sampler and save the chains.
    Fit(FitArgs),
    /// Posterior summaries on both scales, plus DIC when data is given.
    Report(ReportArgs),
    /// Marginal effects of the design columns.
    Effects(EffectsArgs),
    /// Ranked potential for safety improvement with zones.
    Psi(PsiArgs),
    /// Mantel-Haenszel pooled odds and risk ratios.
    Mh(MhArgs),
    /// Cumulative residual curve over one covariate.
    Cure(CureArgs),
    /// Out-of-sample MAE and RMSE.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Generator TOML; the published RPNB-L truth when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV; the truth goes to `<stem>.truth.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sites: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Model TOML with `[model]`, optional `[priors]` and `[mcmc]`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `chain_<k>.draws` and `convergence.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Exit 0 even when a monitored parameter fails the BGR or MC-error rule.
    #[arg(long)]
    pub no_gate: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Fitted data; enables the DIC table.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truth record from `simulate`; adds truth and coverage columns.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EffectsArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Design columns (all non-intercept columns when omitted).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PsiArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// CSV with `site_id,corridor` columns; adds `<stem>_corridors.csv`.
    #[arg(long)]
    pub corridors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MhArgs {
    /// CSV with `a,b,c,d` (and optionally `stratum`) columns.
    #[arg(long)]
    pub strata: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CureArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Numeric covariate ordering the residuals, e.g. `aadt`.
    #[arg(long, default_value = "aadt")]
    pub covariate: String,
    /// Directory for `cure_<covariate>.csv` and `.svg`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub draws: PathBuf,
    /// Held-out sites.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_GATE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let started = Instant::now();
    let started_unix = manifest::unix_now();
    let mut run = Run::default();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut run),
        Command::Fit(a) => commands::fit(a, &mut run),
        Command::Report(a) => commands::report(a, &mut run),
        Command::Effects(a) => commands::effects(a, &mut run),
        Command::Psi(a) => commands::psi(a, &mut run),
        Command::Mh(a) => commands::mh(a, &mut run),
        Command::Cure(a) => commands::cure(a, &mut run),
        Command::Evaluate(a) => commands::evaluate(a, &mut run),
    };
    let (code, error) = match &result {
        Ok(Outcome::Done) => (0, None),
        Ok(Outcome::GateFailed) => (EXIT_GATE, None),
        Err(e) => {
            eprintln!("error: {e:#}");
            (EXIT_VALIDATION, Some(format!("{e:#}")))
        }
    };
    let path = cli.manifest.clone().unwrap_or_else(|| run.manifest_dir().join("manifest.jsonl"));
    let m = RunManifest {
        command: command_name(&cli.command).to_string(),
        config: run.config.clone(),
        inputs: run.inputs.clone(),
        outputs: run.outputs.clone(),
        seed: run.seed,
        version: env!("CARGO_PKG_VERSION"),
        draws_format: crashfreq::sampler::DRAWS_MAGIC,
        started_unix,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        exit_code: i32::from(code),
        converged: run.converged,
        gate_failures: run.gate_failures.clone(),
        error,
    };
    if let Err(e) = manifest::append(&path, &m) {
        eprintln!("warning: cannot append manifest {}: {e}", path.display());
    }
    ExitCode::from(code)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Report(_) => "report",
        Command::Effects(_) => "effects",
        Command::Psi(_) => "psi",
        Command::Mh(_) => "mh",
        Command::Cure(_) => "cure",
        Command::Evaluate(_) => "evaluate",
    }
}
