//! End-to-end tests of the experiment driver: determinism, resumability,
//! persistence integrity, and process exit codes.

use std::path::Path;
use std::process::Command;

use expcli::manifest::Manifest;
use expcli::record::{load, persist, read_rows, AGGREGATE_FILE, PARTIAL_MARKER, ROWS_FILE};
use expcli::runner::{resume_experiment, run_experiment};
use expcli::CliError;

fn manifest_str(kind: &str, out_dir: &Path, extra: &str) -> String {
    format!(
        r#"
kind = "{kind}"
n = [6]
tau_r = 6
instances = 6
master_seed = 41
out_dir = "{}"
{extra}
"#,
        out_dir.display()
    )
}

fn tiny_sweep_manifest(out_dir: &Path) -> Manifest {
    let text = format!(
        r#"
kind = "peak-sweep"
n = [4]
tau_p = [1, 2]
tau_r = 3
instances = 3
master_seed = 17
out_dir = "{}"

[optimizer]
restarts = 2
max_iters = 60
"#,
        out_dir.display()
    );
    Manifest::from_toml_str(&text).unwrap()
}

#[test]
fn rerunning_a_manifest_reproduces_every_delta_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");

    let mut m = tiny_sweep_manifest(&dir_a);
    let rec_a = run_experiment(&m, 1).unwrap();
    m.out_dir = dir_b;
    let rec_b = run_experiment(&m, 1).unwrap();

    assert_eq!(rec_a.rows.len(), 6);
    for (a, b) in rec_a.rows.iter().zip(&rec_b.rows) {
        assert_eq!(a.delta_hex, b.delta_hex);
        assert_eq!(a.pi_hex, b.pi_hex);
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.iterations, b.iterations);
    }

    // more peaking layers → higher mean peak weight
    assert!(rec_a.points[1].mean_delta > rec_a.points[0].mean_delta);
}

#[test]
fn interrupted_run_resumes_to_the_identical_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_full = tmp.path().join("full");
    let dir_cut = tmp.path().join("cut");

    let mut m = tiny_sweep_manifest(&dir_full);
    let full = run_experiment(&m, 1).unwrap();

    m.out_dir = dir_cut.clone();
    run_experiment(&m, 1).unwrap();
    // Simulate a crash: drop the aggregate, truncate the rows file to its
    // header plus two complete rows and half of a third.
    std::fs::remove_file(dir_cut.join(AGGREGATE_FILE)).unwrap();
    std::fs::write(dir_cut.join(PARTIAL_MARKER), b"in progress\n").unwrap();
    let rows = std::fs::read_to_string(dir_cut.join(ROWS_FILE)).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    let torn = format!(
        "{}\n{}\n{}\n{}",
        lines[0],
        lines[1],
        lines[2],
        &lines[3][..lines[3].len() / 2]
    );
    std::fs::write(dir_cut.join(ROWS_FILE), torn).unwrap();

    let resumed = resume_experiment(&m, 1).unwrap();
    assert_eq!(resumed.rows.len(), full.rows.len());
    for (a, b) in resumed.rows.iter().zip(&full.rows) {
        assert_eq!(a.delta_hex, b.delta_hex, "instance {}", a.instance);
        assert_eq!(a.pi_hex, b.pi_hex);
    }
    assert_eq!(resumed.points, full.points);
}

#[test]
fn save_then_load_round_trips_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let m = tiny_sweep_manifest(&dir);
    let rec = run_experiment(&m, 1).unwrap();

    let (loaded_manifest, loaded) = load(&dir).unwrap();
    assert_eq!(loaded_manifest, m);
    assert_eq!(loaded, rec);
}

#[test]
fn corrupt_and_truncated_aggregates_are_integrity_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let m = tiny_sweep_manifest(&dir);
    let rec = run_experiment(&m, 1).unwrap();

    // Field-level corruption: break a hex float.
    let mut bad = rec.clone();
    bad.rows[0].delta_hex = "zz".into();
    persist(&bad, &dir).unwrap();
    match load(&dir) {
        Err(CliError::Integrity { file, what }) => {
            assert!(file.contains(AGGREGATE_FILE));
            assert!(what.contains("rows[0]"), "{what}");
        }
        other => panic!("expected integrity error, got {other:?}"),
    }

    // Truncation: no partial record may come back.
    let path = dir.join(AGGREGATE_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load(&dir), Err(CliError::Integrity { .. })));

    // Stored-hash mismatch against a tampered manifest.
    persist(&rec, &dir).unwrap();
    let manifest_path = dir.join("manifest.toml");
    let toml = std::fs::read_to_string(&manifest_path).unwrap();
    std::fs::write(&manifest_path, toml.replace("master_seed = 17", "master_seed = 18")).unwrap();
    match load(&dir) {
        Err(CliError::Integrity { what, .. }) => assert!(what.contains("manifest_sha256")),
        other => panic!("expected hash mismatch, got {other:?}"),
    }
}

#[test]
fn validation_error_lists_offending_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let text = manifest_str("rarity", &tmp.path().join("x"), "")
        .replace("n = [6]", "n = [7]")
        .replace("instances = 6", "instances = 0");
    let m = Manifest::from_toml_str(&text).unwrap();
    match run_experiment(&m, 1) {
        Err(CliError::Validation(fields)) => {
            let joined = fields.join("\n");
            assert!(joined.contains("n: 7"), "{joined}");
            assert!(joined.contains("instances"), "{joined}");
        }
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn mismatched_out_dir_manifest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let m = tiny_sweep_manifest(&dir);
    run_experiment(&m, 1).unwrap();

    let mut other = m.clone();
    other.master_seed = 999;
    assert!(matches!(
        run_experiment(&other, 1),
        Err(CliError::Validation(_))
    ));
}

#[test]
fn entropy_profile_rows_carry_resumable_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let text = manifest_str("entropy-profile", &dir, "");
    let m = Manifest::from_toml_str(&text).unwrap();
    let rec = run_experiment(&m, 1).unwrap();

    let rows = read_rows(&dir).unwrap();
    assert!(rows.iter().all(|r| r.extra.split(',').count() == 6));
    let profile = rec.points[0].mean_entropy_profile.as_ref().unwrap();
    assert_eq!(profile.len(), 6);
    // entanglement grows with depth at the start
    assert!(profile[2] > profile[0]);
}

// --- process-level tests of the installed binary -------------------------

fn expcli_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_expcli"))
}

#[test]
fn binary_exit_codes_match_the_contract() {
    let tmp = tempfile::tempdir().unwrap();

    // validation error → 1
    let bad = tmp.path().join("bad.toml");
    std::fs::write(
        &bad,
        manifest_str("rarity", &tmp.path().join("x"), "").replace("n = [6]", "n = [7]"),
    )
    .unwrap();
    let out = expcli_bin().args(["rarity"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // kind/subcommand mismatch → 1
    let rarity = tmp.path().join("rarity.toml");
    std::fs::write(&rarity, manifest_str("rarity", &tmp.path().join("r_out"), "")).unwrap();
    let out = expcli_bin().args(["peak-sweep"]).arg(&rarity).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // success → 0, and the summary lands on stdout
    let out = expcli_bin()
        .args(["rarity"])
        .arg(&rarity)
        .args(["--workers", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rarity complete"));

    // corrupt stored results then resume → 2
    let agg = tmp.path().join("r_out").join(AGGREGATE_FILE);
    let text = std::fs::read_to_string(&agg).unwrap();
    std::fs::write(&agg, &text[..text.len() / 3]).unwrap();
    let out = expcli_bin().args(["resume"]).arg(&rarity).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_check_passes_at_desk_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("oracle");
    let text = format!(
        r#"
kind = "oracle-check"
n = [4, 6]
tau_r = 2
instances = 2000
master_seed = 5
out_dir = "{}"
"#,
        dir.display()
    );
    let path = tmp.path().join("oracle.toml");
    std::fs::write(&path, &text).unwrap();
    let out = expcli_bin().args(["oracle-check"]).arg(&path).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rec) = load(&dir).unwrap();
    assert_eq!(rec.oracle_checks.len(), 2);
    assert!(rec.oracle_checks.iter().all(|c| c.all_pass()));
}
