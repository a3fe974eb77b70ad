use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use pnp_ula::experiment::validate::ValidationOptions;
use pnp_ula::experiment::{
    run_chain_experiment, run_sweep, run_validation_suite, write_chain_run, write_results, ExperimentKind,
    ExperimentSpec, Overrides, RowStatus,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "pnp-ula", version, about = "PnP-ULA sampling and sensitivity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the threshold of the mismatched denoiser.
    DenoiserSweep(RunArgs),
    /// Sweep the scale of the forward operator around a reference.
    ForwardSweep(RunArgs),
    /// Run one chain and compare it with the closed-form posterior.
    ChainRun(RunArgs),
    /// Run the oracle checks.
    Validate {
        /// Perturb the MMSE denoiser output to confirm the checks catch it.
        #[arg(long)]
        fault_inject: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report to `<out>/validation.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML, or JSON such as a previous run's summary spec).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long)]
    n_repeats: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
            n_steps: self.n_steps,
            n_sub: self.n_sub,
            n_repeats: self.n_repeats,
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn load_spec(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentSpec, Failure> {
    let mut spec = ExperimentSpec::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))
        .map_err(Failure::Config)?;
    spec.apply(&args.overrides())
        .context("applying command-line overrides")
        .map_err(Failure::Config)?;
    if spec.kind != kind {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} describes a {} experiment, not {}",
            args.config.display(),
            spec.kind.as_str(),
            kind.as_str()
        )));
    }
    spec.validate()
        .context("invalid experiment spec")
        .map_err(Failure::Config)?;
    Ok(spec)
}

fn out_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(spec.kind.as_str()))
}

fn fmt_corr(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"))
}

fn sweep(args: &RunArgs, kind: ExperimentKind) -> Result<(), Failure> {
    let spec = load_spec(args, kind)?;
    let dir = out_dir(&spec);
    info!("running {} into {}", kind.as_str(), dir.display());
    let result = run_sweep(&spec).context("running the sweep").map_err(Failure::Run)?;
    write_results(&result, &dir)
        .context("writing results")
        .map_err(Failure::Run)?;

    let s = &result.summary;
    println!("rows: {} ({} failed)", result.rows.len(), s.failures);
    for row in result.rows.iter().filter(|r| !r.is_ok()) {
        if let RowStatus::Failed(msg) = &row.status {
            println!("  failed at {}: {msg}", row.axis);
        }
    }
    println!("bias floor: {:.5} +- {:.5}", s.bias_floor.value, s.bias_floor.std_error);
    println!(
        "pearson(posterior-L2, W1): {}",
        fmt_corr(s.correlations.pearson_posterior_w1)
    );
    println!(
        "pearson(prior-L2, W1):     {}",
        fmt_corr(s.correlations.pearson_prior_w1)
    );
    if kind == ExperimentKind::ForwardSweep {
        println!(
            "spearman(op_dist, W1):     {}",
            fmt_corr(s.correlations.spearman_op_dist_w1)
        );
    }
    println!("results: {}", dir.display());
    Ok(())
}

fn chain_run(args: &RunArgs) -> Result<(), Failure> {
    let spec = load_spec(args, ExperimentKind::ChainRun)?;
    let dir = out_dir(&spec);
    let result = run_chain_experiment(&spec)
        .context("running the chain")
        .map_err(Failure::Run)?;
    write_chain_run(&result, &dir)
        .context("writing results")
        .map_err(Failure::Run)?;
    let s = &result.summary;
    println!("retained states: {}", s.chain.retained);
    println!("projection active on {} steps", s.chain.projection_active_steps);
    println!(
        "sample mean: {:?}   exact posterior mean: {:?}",
        s.mmse, s.posterior_mean
    );
    println!(
        "total variance: {:.5}   exact posterior: {:.5}",
        s.variance, s.posterior_variance
    );
    println!(
        "denoiser Lipschitz estimate: {:.4}   step bound: {:.4e}",
        s.denoiser_lipschitz_estimate, s.delta_bound
    );
    println!("results: {}", dir.display());
    Ok(())
}

fn validate(fault_inject: bool, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut options = ValidationOptions {
        fault_inject,
        ..Default::default()
    };
    if let Some(seed) = seed {
        options.seed = seed;
    }
    let report = run_validation_suite(&options)
        .context("running the validation suite")
        .map_err(Failure::Run)?;
    for c in &report.checks {
        println!(
            "{} {:<32} measured {:.3e} (tolerance {:.1e})  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)
            .and_then(|_| {
                std::fs::write(
                    dir.join("validation.json"),
                    serde_json::to_string_pretty(&report).expect("report serialises"),
                )
            })
            .with_context(|| format!("writing {}", dir.display()))
            .map_err(Failure::Run)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Run(anyhow::anyhow!("validation failed")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::DenoiserSweep(args) => sweep(args, ExperimentKind::DenoiserSweep),
        Command::ForwardSweep(args) => sweep(args, ExperimentKind::ForwardSweep),
        Command::ChainRun(args) => chain_run(args),
        Command::Validate {
            fault_inject,
            seed,
            out,
        } => validate(*fault_inject, *seed, out.clone()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
