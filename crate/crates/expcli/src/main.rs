use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expcli::manifest::{ExperimentKind, Manifest};
use expcli::runner::{resume_experiment, run_experiment};
use expcli::{CliError, ResultRecord};

/// Peaked-circuit experiment driver.
///
/// Exit codes: 0 success, 1 validation error (or failed oracle check),
/// 2 integrity error, 3 partial results (resumable).
#[derive(Parser)]
#[command(name = "expcli", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Manifest file (TOML).
    manifest: PathBuf,
    /// Override the manifest's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for instance-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Max-peak statistics of unpeaked random circuits.
    Rarity(RunArgs),
    /// Optimized peak weight vs number of peaking layers.
    PeakSweep(RunArgs),
    /// Half-chain entanglement entropy vs circuit depth.
    EntropyProfile(RunArgs),
    /// Optimized peak weight vs n with an exponential-decay fit.
    ScalingFit(RunArgs),
    /// Analytic two-layer peaking invariants.
    OracleCheck(RunArgs),
    /// Complete an interrupted run (same manifest).
    Resume(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, expected_kind, resume) = match &cli.command {
        Command::Rarity(a) => (a, Some(ExperimentKind::Rarity), false),
        Command::PeakSweep(a) => (a, Some(ExperimentKind::PeakSweep), false),
        Command::EntropyProfile(a) => (a, Some(ExperimentKind::EntropyProfile), false),
        Command::ScalingFit(a) => (a, Some(ExperimentKind::ScalingFit), false),
        Command::OracleCheck(a) => (a, Some(ExperimentKind::OracleCheck), false),
        Command::Resume(a) => (a, None, true),
    };

    match execute(args, expected_kind, resume) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(
    args: &RunArgs,
    expected_kind: Option<ExperimentKind>,
    resume: bool,
) -> Result<ExitCode, CliError> {
    let mut manifest = Manifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        manifest.master_seed = seed;
    }
    if let Some(out) = &args.out {
        manifest.out_dir = out.clone();
    }
    if let Some(kind) = expected_kind {
        if manifest.kind != kind {
            return Err(CliError::Validation(vec![format!(
                "kind: manifest says {:?} but the {} subcommand was invoked",
                manifest.kind.name(),
                kind.name()
            )]));
        }
    }

    let workers = if args.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        args.workers
    };

    let record = if resume {
        resume_experiment(&manifest, workers)?
    } else {
        run_experiment(&manifest, workers)?
    };
    print_summary(&manifest, &record);

    if manifest.kind == ExperimentKind::OracleCheck
        && !record.oracle_checks.iter().all(|c| c.all_pass())
    {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(manifest: &Manifest, record: &ResultRecord) {
    println!(
        "{} complete: {} rows, results in {}",
        manifest.kind.name(),
        record.rows.len(),
        manifest.out_dir.display()
    );
    for p in &record.points {
        println!(
            "  n={:<3} tau_r={:<3} tau_p={:<3} instances={:<4} mean delta={:.6e} (se {:.1e})  gamma_hat={:.3}",
            p.n, p.tau_r, p.tau_p, p.instances, p.mean_delta, p.stderr_delta, p.gamma_hat
        );
    }
    if let Some(fit) = &record.fit {
        println!("  fit: delta(n) = {:.6} * {:.6}^-n", fit.c, fit.a);
    }
    for e in &record.extrapolation {
        println!(
            "  {}: predicted delta at n={} is {:.3e} (fitted-curve evaluation, not a measurement)",
            e.label, e.n, e.predicted_delta
        );
    }
    for d in &record.alpha_diagnostics {
        println!(
            "  alpha diagnostic n={}: peaked {:.4e} vs unpeaked(depth tau_r - tau_p) {:.4e} -> alpha = {}",
            d.n,
            d.peaked_mean,
            d.unpeaked_mean,
            d.alpha.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
    }
    for c in &record.oracle_checks {
        let status = |b: bool| if b { "ok" } else { "FAIL" };
        println!(
            "  oracle n={}: single-layer {:.4} vs {:.4} [{}], peaked {:.4} vs {:.4} [{}], prediction {:.2e} [{}], reconstruction {:.2e} [{}], E[alpha^2] {:.4} [{}]",
            c.n,
            c.single_layer_mean,
            c.single_layer_target,
            status(c.single_layer_pass),
            c.peaked_mean,
            c.peaked_target,
            status(c.peaked_pass),
            c.worst_prediction_error,
            status(c.prediction_pass),
            c.worst_reconstruction_error,
            status(c.reconstruction_pass),
            c.mean_alpha_sq,
            status(c.alpha_sq_pass),
        );
    }
}
