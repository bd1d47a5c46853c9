//! Experiment execution: seeded sweeps with incremental, resumable
//! persistence and plot-data emission.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use peaked_circuits::circuits::{max_peak, PeakedCircuitInstance};
use peaked_circuits::gradopt::{optimize_peaking, OptimizerConfig};
use peaked_circuits::hexfloat;
use peaked_circuits::oracle::{analytic_peaking_layer, schmidt_two_qubit};
use peaked_circuits::seed::derive_seed;
use peaked_circuits::state::StateVector;
use peaked_circuits::stats::{
    collision_probability, entropy_profile, fit_exponential_decay, decay_exponent_ratio,
};
use peaked_circuits::{haar_random_unitary, Error as CoreError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::CliError;
use crate::manifest::{ExperimentKind, Manifest, PointSpec};
use crate::record::{
    completed_keys, load, persist, read_rows, write_plot_data, AlphaDiagnostic, Extrapolation,
    FitResult, OracleCheckResult, PointResult, ResultRecord, Row, RowWriter, AGGREGATE_FILE,
    MANIFEST_FILE, PARTIAL_MARKER,
};

/// Run (or resume) the experiment described by the manifest. Reruns on the
/// same output directory skip instances already present in the rows file,
/// so an interrupted run completes from where it stopped.
pub fn run_experiment(manifest: &Manifest, workers: usize) -> Result<ResultRecord, CliError> {
    let points = manifest.resolve_points()?;
    let dir = manifest.out_dir.clone();
    std::fs::create_dir_all(&dir)?;

    // The stored manifest pins the run; refuse silently mixing parameters.
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let stored = Manifest::load(&manifest_path)?;
        if &stored != manifest {
            return Err(CliError::Validation(vec![format!(
                "out_dir: {} already holds a different manifest; use a fresh directory",
                dir.display()
            )]));
        }
    } else {
        std::fs::write(&manifest_path, manifest.canonical_toml())?;
    }
    std::fs::write(dir.join(PARTIAL_MARKER), b"in progress\n")?;

    if manifest.kind == ExperimentKind::OracleCheck {
        let record = run_oracle_check(manifest)?;
        persist(&record, &dir)?;
        std::fs::remove_file(dir.join(PARTIAL_MARKER)).ok();
        return Ok(record);
    }

    let existing = read_rows(&dir)?;
    let done = completed_keys(&existing);
    let mut todo: Vec<(PointSpec, usize)> = Vec::new();
    for &point in &points {
        for instance in 0..manifest.instances {
            if !done.contains(&(point, instance)) {
                todo.push((point, instance));
            }
        }
    }

    let writer = Mutex::new(RowWriter::open(&dir)?);
    let run_one = |&(point, instance): &(PointSpec, usize)| -> Result<Row, CliError> {
        let row = run_instance(manifest, point, instance)?;
        writer
            .lock()
            .expect("row writer lock")
            .append(&row)?;
        Ok(row)
    };

    let computed: Result<Vec<Row>, CliError> = if workers == 1 {
        todo.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Validation(vec![format!("workers: {e}")]))?;
        pool.install(|| todo.par_iter().map(run_one).collect())
    };
    let mut rows = existing;
    match computed {
        Ok(mut new_rows) => rows.append(&mut new_rows),
        Err(e) => {
            // Whatever was appended before the failure stays on disk.
            eprintln!("worker failed: {e}");
            return Err(CliError::Partial(dir.display().to_string()));
        }
    }
    rows.sort_by_key(|r| (r.n, r.tau_r, r.tau_p, r.instance));

    let record = aggregate(manifest, &points, rows)?;
    persist(&record, &dir)?;
    emit_plot_data(manifest, &record, &dir)?;
    std::fs::remove_file(dir.join(PARTIAL_MARKER)).ok();
    Ok(record)
}

/// Resume requires an existing run directory (otherwise identical to run).
pub fn resume_experiment(manifest: &Manifest, workers: usize) -> Result<ResultRecord, CliError> {
    let dir = &manifest.out_dir;
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::Validation(vec![format!(
            "out_dir: nothing to resume in {}",
            dir.display()
        )]));
    }
    if dir.join(AGGREGATE_FILE).exists() && !dir.join(PARTIAL_MARKER).exists() {
        // Already complete; just reload.
        return Ok(load(dir)?.1);
    }
    run_experiment(manifest, workers)
}

fn run_instance(manifest: &Manifest, point: PointSpec, instance: usize) -> Result<Row, CliError> {
    let seed = derive_seed(manifest.master_seed, instance as u64);
    let t0 = Instant::now();
    let inst = PeakedCircuitInstance::sample_random(point.n, point.tau_r, seed)?;

    let (delta, pi, iterations, extra) = match manifest.kind {
        ExperimentKind::Rarity => {
            let state = inst.run(&[])?;
            (
                max_peak(&state).value,
                collision_probability(&state).value,
                0,
                String::new(),
            )
        }
        ExperimentKind::EntropyProfile => {
            let profile = entropy_profile(&inst)?;
            let state = inst.run(&[])?;
            let extra = profile
                .bits
                .iter()
                .map(|b| hexfloat::encode(*b))
                .collect::<Vec<_>>()
                .join(",");
            (
                max_peak(&state).value,
                collision_probability(&state).value,
                0,
                extra,
            )
        }
        ExperimentKind::PeakSweep | ExperimentKind::ScalingFit => {
            let cfg = OptimizerConfig::from(&manifest.optimizer);
            let res = optimize_peaking(&inst, point.tau_p, &cfg, seed)?;
            let peaked = inst.attach_peaking_layers(point.tau_p, &res.best_theta)?;
            let state = peaked.output_state()?;
            (
                res.best_delta,
                collision_probability(&state).value,
                res.total_iterations(),
                String::new(),
            )
        }
        ExperimentKind::OracleCheck => unreachable!("handled separately"),
    };

    Ok(Row {
        n: point.n,
        tau_r: point.tau_r,
        tau_p: point.tau_p,
        instance,
        seed,
        iterations,
        wall_s: t0.elapsed().as_secs_f64(),
        delta_hex: hexfloat::encode(delta),
        pi_hex: hexfloat::encode(pi),
        extra,
    })
}

fn aggregate(
    manifest: &Manifest,
    points: &[PointSpec],
    rows: Vec<Row>,
) -> Result<ResultRecord, CliError> {
    let mut point_results = Vec::with_capacity(points.len());
    for &point in points {
        let deltas: Vec<f64> = rows
            .iter()
            .filter(|r| r.point() == point)
            .map(|r| r.delta())
            .collect();
        let pis: Vec<f64> = rows
            .iter()
            .filter(|r| r.point() == point)
            .map(|r| r.pi())
            .collect();
        let count = deltas.len();
        let mean = deltas.iter().sum::<f64>() / count.max(1) as f64;
        let var = if count > 1 {
            deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        let mean_pi = pis.iter().sum::<f64>() / count.max(1) as f64;

        let mean_entropy_profile = if manifest.kind == ExperimentKind::EntropyProfile {
            Some(mean_profile(&rows, point)?)
        } else {
            None
        };

        point_results.push(PointResult {
            n: point.n,
            tau_r: point.tau_r,
            tau_p: point.tau_p,
            instances: count,
            mean_delta: mean,
            stderr_delta: if count > 1 {
                (var / count as f64).sqrt()
            } else {
                0.0
            },
            var_delta: var,
            max_delta: deltas.iter().fold(0.0_f64, |a, &b| a.max(b)),
            mean_pi,
            gamma_hat: mean_pi * (1u64 << point.n) as f64,
            mean_entropy_profile,
        });
    }

    let (fit, extrapolation, alpha_diagnostics) = if manifest.kind == ExperimentKind::ScalingFit {
        scaling_fit_extras(manifest, &point_results)?
    } else {
        (None, Vec::new(), Vec::new())
    };

    Ok(ResultRecord {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest_sha256: manifest.sha256(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        points: point_results,
        rows,
        fit,
        extrapolation,
        alpha_diagnostics,
        oracle_checks: Vec::new(),
    })
}

fn mean_profile(rows: &[Row], point: PointSpec) -> Result<Vec<f64>, CliError> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for row in rows.iter().filter(|r| r.point() == point) {
        if row.extra.is_empty() {
            continue;
        }
        let profile: Option<Vec<f64>> = row.extra.split(',').map(hexfloat::decode).collect();
        let profile = profile.ok_or_else(|| CliError::Integrity {
            file: "rows.tsv".to_string(),
            what: format!("field extra: bad entropy profile for instance {}", row.instance),
        })?;
        if acc.is_empty() {
            acc = vec![0.0; profile.len()];
        }
        if profile.len() != acc.len() {
            return Err(CliError::Integrity {
                file: "rows.tsv".to_string(),
                what: "field extra: inconsistent profile depth".to_string(),
            });
        }
        for (a, p) in acc.iter_mut().zip(&profile) {
            *a += p;
        }
        count += 1;
    }
    for a in acc.iter_mut() {
        *a /= count.max(1) as f64;
    }
    Ok(acc)
}

type ScalingExtras = (Option<FitResult>, Vec<Extrapolation>, Vec<AlphaDiagnostic>);

/// Fit δ(n) = c·a⁻ⁿ, evaluate requested extrapolations, and compute the
/// decay-exponent diagnostic against fresh unpeaked circuits of depth
/// τ_r − τ_p.
fn scaling_fit_extras(
    manifest: &Manifest,
    points: &[PointResult],
) -> Result<ScalingExtras, CliError> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.n as f64, p.mean_delta))
        .collect();
    let fit = match fit_exponential_decay(&data) {
        Ok(f) => Some(FitResult {
            c: f.c,
            a: f.a,
            residuals: f.residuals,
        }),
        Err(CoreError::TooFewPoints(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let mut extrapolation = Vec::new();
    if let Some(f) = &fit {
        for &n in &manifest.extrapolate_n {
            extrapolation.push(Extrapolation {
                n,
                predicted_delta: f.c * f.a.powi(-(n as i32)),
                label: "EXTRAPOLATION".to_string(),
            });
        }
    }

    // Unpeaked baseline at depth τ_r − τ_p, averaged over the same number
    // of fresh instances.
    let mut alpha_diagnostics = Vec::new();
    for p in points {
        if p.tau_p >= p.tau_r {
            continue;
        }
        let depth = p.tau_r - p.tau_p;
        let mut mean_unpeaked = 0.0;
        for i in 0..p.instances {
            let seed = derive_seed(manifest.master_seed ^ 0x5EED_BA5E, i as u64);
            let inst = PeakedCircuitInstance::sample_random(p.n, depth, seed)?;
            mean_unpeaked += max_peak(&inst.run(&[])?).value;
        }
        mean_unpeaked /= p.instances.max(1) as f64;
        alpha_diagnostics.push(AlphaDiagnostic {
            n: p.n,
            peaked_mean: p.mean_delta,
            unpeaked_mean: mean_unpeaked,
            alpha: decay_exponent_ratio(p.mean_delta, mean_unpeaked),
        });
    }

    Ok((fit, extrapolation, alpha_diagnostics))
}

fn emit_plot_data(
    manifest: &Manifest,
    record: &ResultRecord,
    dir: &Path,
) -> Result<(), CliError> {
    match manifest.kind {
        ExperimentKind::Rarity => {
            for &n in &manifest.n {
                let peaks: Vec<f64> = record
                    .rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.delta())
                    .collect();
                let grid = [0.01, 0.02, 0.04, 0.1];
                let data: Vec<(f64, f64, f64)> = grid
                    .iter()
                    .map(|&d| {
                        let est = peaked_circuits::stats::rarity_estimate(&peaks, d);
                        (d, est.p_hat, (est.upper - est.lower) / 2.0)
                    })
                    .collect();
                write_plot_data(
                    dir,
                    &format!("rarity_n{n}.dat"),
                    &format!("P(max peak >= delta) over {} instances, n={n}", peaks.len()),
                    &data,
                )?;
            }
        }
        ExperimentKind::PeakSweep => {
            for &n in &manifest.n {
                let data: Vec<(f64, f64, f64)> = record
                    .points
                    .iter()
                    .filter(|p| p.n == n)
                    .map(|p| (p.tau_p as f64, p.mean_delta, p.stderr_delta))
                    .collect();
                write_plot_data(
                    dir,
                    &format!("peak_sweep_n{n}.dat"),
                    &format!("mean best delta vs tau_p, n={n}"),
                    &data,
                )?;
            }
        }
        ExperimentKind::EntropyProfile => {
            for p in &record.points {
                if let Some(profile) = &p.mean_entropy_profile {
                    let stderr = 0.0; // per-depth spread is in aggregate.json rows
                    let data: Vec<(f64, f64, f64)> = profile
                        .iter()
                        .enumerate()
                        .map(|(d, e)| ((d + 1) as f64, *e, stderr))
                        .collect();
                    write_plot_data(
                        dir,
                        &format!("entropy_profile_n{}.dat", p.n),
                        &format!("mean half-chain entropy (bits) vs depth, n={}", p.n),
                        &data,
                    )?;
                }
            }
        }
        ExperimentKind::ScalingFit => {
            let data: Vec<(f64, f64, f64)> = record
                .points
                .iter()
                .map(|p| (p.n as f64, p.mean_delta, p.stderr_delta))
                .collect();
            write_plot_data(dir, "scaling_fit.dat", "mean best delta vs n", &data)?;
            if let Some(fit) = &record.fit {
                let line: Vec<(f64, f64, f64)> = record
                    .points
                    .iter()
                    .map(|p| (p.n as f64, fit.c * fit.a.powi(-(p.n as i32)), 0.0))
                    .collect();
                write_plot_data(
                    dir,
                    "scaling_fit_curve.dat",
                    &format!("fitted c*a^-n with c={:.6}, a={:.6}", fit.c, fit.a),
                    &line,
                )?;
            }
            if !record.extrapolation.is_empty() {
                let data: Vec<(f64, f64, f64)> = record
                    .extrapolation
                    .iter()
                    .map(|e| (e.n as f64, e.predicted_delta, 0.0))
                    .collect();
                write_plot_data(
                    dir,
                    "scaling_fit_extrapolation.dat",
                    "EXTRAPOLATION of the fitted curve - not a measurement",
                    &data,
                )?;
            }
        }
        ExperimentKind::OracleCheck => {}
    }
    Ok(())
}

/// Desk-scale replay of the analytic two-layer results: single-layer mean
/// peak (25/48)^(n/2), peaked mean (7/8)^(n/2), per-draw prediction and
/// Schmidt reconstruction, and E[α²] = 7/8.
fn run_oracle_check(manifest: &Manifest) -> Result<ResultRecord, CliError> {
    let draws = manifest.instances;
    let mut checks = Vec::new();
    for &n in &manifest.n {
        let mut rng = ChaCha8Rng::seed_from_u64(manifest.master_seed ^ n as u64);
        let mut single = Vec::with_capacity(draws);
        let mut peaked = Vec::with_capacity(draws);
        let mut alpha_sq = Vec::new();
        let mut worst_prediction: f64 = 0.0;
        let mut worst_reconstruction: f64 = 0.0;

        for _ in 0..draws {
            let r1: Vec<_> = (0..n / 2).map(|_| haar_random_unitary(&mut rng)).collect();
            let r2: Vec<_> = (0..n / 2 - 1).map(|_| haar_random_unitary(&mut rng)).collect();

            let mut state = StateVector::zero(n)?;
            for (i, g) in r1.iter().enumerate() {
                state.apply_two_qubit_gate(g, 2 * i, 2 * i + 1)?;
            }
            single.push(max_peak(&state).value);

            for (j, g) in r2.iter().enumerate() {
                state.apply_two_qubit_gate(g, 2 * j + 1, 2 * j + 2)?;
            }
            let layer = analytic_peaking_layer(&r1, &r2, n)?;
            layer.apply(&mut state)?;
            let measured = max_peak(&state).value;
            peaked.push(measured);
            worst_prediction =
                worst_prediction.max((measured - layer.predicted_peak_weight()).abs());

            for g in &r1 {
                let amps = [g.matrix[0][0], g.matrix[1][0], g.matrix[2][0], g.matrix[3][0]];
                let form = schmidt_two_qubit(&amps);
                alpha_sq.push(form.alpha * form.alpha);
                let back = form.reconstruct();
                for (a, b) in amps.iter().zip(&back) {
                    worst_reconstruction = worst_reconstruction.max((a - b).norm());
                }
            }
        }

        let (single_mean, single_se) = mean_se(&single);
        let (peaked_mean, peaked_se) = mean_se(&peaked);
        let (alpha_mean, alpha_se) = mean_se(&alpha_sq);
        let single_target = (25.0f64 / 48.0).powf(n as f64 / 2.0);
        let peaked_target = (7.0f64 / 8.0).powf(n as f64 / 2.0);

        checks.push(OracleCheckResult {
            n,
            draws,
            single_layer_mean: single_mean,
            single_layer_target: single_target,
            single_layer_pass: (single_mean - single_target).abs() <= 3.0 * single_se,
            peaked_mean,
            peaked_target,
            peaked_pass: (peaked_mean - peaked_target).abs() <= 3.0 * peaked_se,
            worst_prediction_error: worst_prediction,
            prediction_pass: worst_prediction <= 1e-9,
            worst_reconstruction_error: worst_reconstruction,
            reconstruction_pass: worst_reconstruction <= 1e-9,
            mean_alpha_sq: alpha_mean,
            alpha_sq_pass: (alpha_mean - 0.875).abs() <= 3.0 * alpha_se,
        });
    }

    Ok(ResultRecord {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest_sha256: manifest.sha256(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        points: Vec::new(),
        rows: Vec::new(),
        fit: None,
        extrapolation: Vec::new(),
        alpha_diagnostics: Vec::new(),
        oracle_checks: checks,
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let count = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / count;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
    (mean, (var / count).sqrt())
}
