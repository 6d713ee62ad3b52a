//! `mclab`: exact oracles, sampling, estimation, bounds and experiments for
//! γ-discounted means of finite Markov chains.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mclab_core::bounds::estimator_bound;
use mclab_core::chain::{
    chi_square_divergence, discounted_distribution, discounted_mean, discounted_variance,
    spectral_gap, stationary_distribution, stationary_variance, ChainFile, ChainInstance,
    StateFunction,
};
use mclab_core::estimators::{EstimatorKind, EstimatorSpec};
use mclab_core::harness::{
    coverage_check, figure2_config, run_experiment, sweep_horizon, table1, write_coverage_csv,
    write_json, write_summary_csv, write_sweep_csv, ChainSource, CoverageStatus, ExperimentConfig,
    OutputFormat, Table1Config,
};
use mclab_core::instances::{
    alpha_cycle_chain, no_mixing_instance, random_chain, two_state_hard_instance,
};
use mclab_core::sampling::{
    load_history, sample_history, sample_history_parallel, save_history, segment_trajectories,
    trajectory_stats, ResetPolicy,
};

#[derive(Parser)]
#[command(
    name = "mclab",
    version,
    about = "Discounted mean estimation in finite Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact stationary and discounted quantities of a chain file.
    Oracle {
        chain: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Named function from the chain file; the first one by default.
        #[arg(long)]
        function: Option<String>,
    },
    /// Builds chain files.
    Instance {
        #[command(subcommand)]
        command: InstanceCommand,
    },
    /// Samples a history under a reset policy (`.csv` or `.jsonl` output).
    Sample {
        chain: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        /// Trajectory length for `fhr`.
        #[arg(long)]
        horizon: Option<usize>,
        /// Discount factor for `ahr`.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(short = 'n', long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate trajectories on all cores; the history is unchanged.
        #[arg(long)]
        parallel: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Applies an estimator to a sampled history.
    Estimate {
        chain: PathBuf,
        history: PathBuf,
        #[arg(long)]
        estimator: EstimatorKind,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        function: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluates the guarantee of an estimator on a chain as a JSON report.
    Bounds {
        chain: PathBuf,
        #[arg(long)]
        estimator: EstimatorKind,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(short = 'n', long)]
        budget: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        function: Option<String>,
    },
    /// Replication experiments.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
    /// Empirical exceedance rates of the concentration bounds.
    Coverage {
        config: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum InstanceCommand {
    Make {
        #[command(subcommand)]
        kind: InstanceKind,
    },
}

#[derive(Subcommand)]
enum InstanceKind {
    /// Two-state hard instance with `f_plus` and `f_minus`.
    Hard {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Symmetric two-state chain with the given `β`.
    Nomix {
        #[arg(long)]
        beta: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Lazy cycle `αI + (1−α)C`.
    Alpha {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Random dense chain.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        min_entry: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Runs a JSON experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// The four estimators on the lazy 3-cycle over budgets 10³..10⁵.
    Figure2 {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start every trajectory in this state instead of uniformly.
        #[arg(long)]
        start_state: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Error of the fixed-horizon estimators across horizons.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Costs and fitted rates of every estimator.
    Table1 {
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Per-replication table; overrides the config.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Per-(estimator, N) table; overrides the config.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fhr,
    Ahr,
    Never,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e
        .chain()
        .find_map(|c| c.downcast_ref::<mclab_core::Error>())
    {
        Some(err) if err.is_validation() => 1,
        Some(_) => 2,
        None if e.chain().any(|c| c.is::<io::Error>()) => 2,
        None => 1,
    }
}

/// File when given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_chain(
    path: &Path,
    function: Option<&str>,
) -> Result<(ChainInstance, Option<StateFunction>)> {
    let file =
        ChainFile::load(path).with_context(|| format!("cannot read chain {}", path.display()))?;
    let chain = file.to_instance()?;
    let f = if function.is_some() || !file.functions.is_empty() {
        Some(file.function(function)?)
    } else {
        None
    };
    Ok((chain, f))
}

fn require_function(f: Option<StateFunction>) -> Result<StateFunction> {
    match f {
        Some(f) => Ok(f),
        None => bail!("the chain file defines no function"),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Oracle {
            chain,
            gamma,
            function,
        } => oracle(&chain, gamma, function.as_deref()),
        Command::Instance {
            command: InstanceCommand::Make { kind },
        } => make_instance(kind),
        Command::Sample {
            chain,
            policy,
            horizon,
            gamma,
            steps,
            seed,
            parallel,
            output,
        } => {
            let (chain, _) = load_chain(&chain, None)?;
            let policy = match policy {
                PolicyArg::Fhr => {
                    ResetPolicy::fixed(horizon.context("--horizon is required for fhr")?)
                }
                PolicyArg::Ahr => {
                    ResetPolicy::adaptive(gamma.context("--gamma is required for ahr")?)
                }
                PolicyArg::Never => ResetPolicy::Never,
            };
            let h = if parallel {
                sample_history_parallel(&chain, &policy, steps, seed)?
            } else {
                sample_history(&chain, &policy, steps, seed)?
            };
            save_history(&h, &output)?;
            let stats = trajectory_stats(&segment_trajectories(&h));
            eprintln!(
                "{} steps, {} trajectories, longest {}",
                h.len(),
                stats.count,
                stats.max_horizon
            );
            Ok(())
        }
        Command::Estimate {
            chain,
            history,
            estimator,
            gamma,
            horizon,
            function,
            output,
        } => {
            let (chain, f) = load_chain(&chain, function.as_deref())?;
            let f = require_function(f)?;
            let h = load_history(&history)
                .with_context(|| format!("cannot read history {}", history.display()))?;
            h.check_against(&chain)?;
            let spec = EstimatorSpec::new(estimator, gamma, horizon)?;
            let estimate = spec.estimate(&h, &f)?;
            let true_mean = discounted_mean(&chain, gamma, &f)?;
            let report = json!({
                "estimator": spec.label(),
                "estimate": estimate,
                "true_mean": true_mean,
                "abs_error": (estimate - true_mean).abs(),
            });
            write_json(&report, sink(output.as_deref())?)?;
            Ok(())
        }
        Command::Bounds {
            chain,
            estimator,
            gamma,
            horizon,
            budget,
            delta,
            function,
        } => {
            let (chain, f) = load_chain(&chain, function.as_deref())?;
            let f = require_function(f)?;
            let spec = EstimatorSpec::new(estimator, gamma, horizon)?;
            let report = estimator_bound(&chain, &f, &spec, budget, delta)?;
            write_json(&report, sink(None)?)?;
            Ok(())
        }
        Command::Experiment { command } => experiment(command),
        Command::Coverage {
            config,
            delta,
            workers,
            output,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.workers = workers.or(cfg.workers);
            let rows = coverage_check(&cfg, delta)?;
            let failed = rows
                .iter()
                .filter(|r| r.status == CoverageStatus::Fail)
                .count();
            write_coverage_csv(&rows, sink(output.as_deref())?)?;
            eprintln!(
                "{} cells, {failed} above the allowed exceedance rate",
                rows.len()
            );
            Ok(())
        }
    }
}

fn oracle(path: &Path, gamma: f64, function: Option<&str>) -> Result<()> {
    let (chain, f) = load_chain(path, function)?;
    let pi = stationary_distribution(&chain.kernel)?;
    let pi_gamma = discounted_distribution(&chain, gamma)?;
    let gap = spectral_gap(&chain.kernel)?;
    let mut report = json!({
        "name": chain.name,
        "n": chain.n(),
        "gamma": gamma,
        "stationary": pi.probs(),
        "discounted": pi_gamma.probs(),
        "beta": gap.beta,
        "spectral_gap": gap.gap,
        "chi2_init_stationary": chi_square_divergence(&chain.init, &pi)?,
        "chi2_init_discounted": chi_square_divergence(&chain.init, &pi_gamma).ok(),
    });
    if let Some(f) = f {
        report["function"] = json!({
            "values": f.values(),
            "discounted_mean": discounted_mean(&chain, gamma, &f)?,
            "discounted_variance": discounted_variance(&chain, gamma, &f)?,
            "stationary_mean": pi.expect(f.values()),
            "stationary_variance": stationary_variance(&chain.kernel, &f)?,
        });
    }
    write_json(&report, sink(None)?)?;
    Ok(())
}

fn make_instance(kind: InstanceKind) -> Result<()> {
    let (file, output) = match kind {
        InstanceKind::Hard {
            beta,
            gamma,
            epsilon,
            output,
        } => {
            let h = two_state_hard_instance(beta, gamma, epsilon)?;
            let file = ChainFile::from_instance(
                &h.chain,
                [("f_plus", &h.f_plus), ("f_minus", &h.f_minus)],
            );
            (file, output)
        }
        InstanceKind::Nomix { beta, output } => {
            let chain = no_mixing_instance(beta)?;
            let f = StateFunction::new(vec![1.0, 0.0]);
            (ChainFile::from_instance(&chain, [("f", &f)]), output)
        }
        InstanceKind::Alpha { alpha, n, output } => {
            let (chain, f) = alpha_cycle_chain(alpha, n)?;
            (ChainFile::from_instance(&chain, [("f", &f)]), output)
        }
        InstanceKind::Random {
            n,
            seed,
            min_entry,
            output,
        } => {
            let chain = random_chain(n, seed, min_entry)?;
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            let f = StateFunction::new(v);
            (ChainFile::from_instance(&chain, [("f", &f)]), output)
        }
    };
    file.save(&output)?;
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    Ok(cfg)
}

fn apply_output_args(cfg: &mut ExperimentConfig, out: OutputArgs) {
    if out.results.is_some() {
        cfg.output.results = out.results;
    }
    if out.summary.is_some() {
        cfg.output.summary = out.summary;
    }
    if let Some(f) = out.format {
        cfg.output.format = f.into();
    }
    cfg.workers = out.workers.or(cfg.workers);
}

/// Runs `cfg`; the summary goes to stdout when no output file is configured.
fn run_and_save(cfg: &ExperimentConfig) -> Result<()> {
    let output = run_experiment(cfg)?;
    let paths = &cfg.output;
    output.save(paths)?;
    if paths.results.is_none() && paths.summary.is_none() {
        match paths.format {
            OutputFormat::Csv => write_summary_csv(&output.summary, sink(None)?)?,
            OutputFormat::Json => write_json(&output, sink(None)?)?,
        }
    }
    let failures = output
        .results
        .iter()
        .filter(|r| r.estimate.is_none())
        .count();
    if failures > 0 {
        eprintln!("{failures} replications produced no estimate");
    }
    Ok(())
}

fn experiment(command: ExperimentCommand) -> Result<()> {
    match command {
        ExperimentCommand::Run { config, out } => {
            let mut cfg = load_config(&config)?;
            apply_output_args(&mut cfg, out);
            run_and_save(&cfg)
        }
        ExperimentCommand::Figure2 {
            alpha,
            gamma,
            replications,
            seed,
            start_state,
            out,
        } => {
            let mut cfg = figure2_config(alpha, gamma, replications, seed);
            cfg.chain = ChainSource::Alpha {
                alpha,
                n: 3,
                start: start_state,
            };
            apply_output_args(&mut cfg, out);
            run_and_save(&cfg)
        }
        ExperimentCommand::Sweep {
            config,
            horizons,
            workers,
            format,
            output,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.workers = workers.or(cfg.workers);
            let sweep = sweep_horizon(&cfg, &horizons)?;
            let out = sink(output.as_deref())?;
            match format {
                FormatArg::Csv => write_sweep_csv(&sweep.summary, out)?,
                FormatArg::Json => write_json(&sweep, out)?,
            }
            Ok(())
        }
        ExperimentCommand::Table1 {
            gamma,
            delta,
            replications,
            seed,
            output,
        } => {
            let cfg = Table1Config {
                gamma,
                delta,
                replications,
                master_seed: seed,
                ..Default::default()
            };
            let rows = table1(&cfg)?;
            write_json(&rows, sink(output.as_deref())?)?;
            Ok(())
        }
    }
}
