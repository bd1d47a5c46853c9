//! Result persistence: incremental per-instance rows (TSV) and the final
//! aggregate record (JSON).
//!
//! Rows are appended and flushed one line at a time so an interrupted run
//! loses at most the line being written; δ and π are stored as hex bit
//! patterns and round-trip exactly.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use peaked_circuits::hexfloat;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{Manifest, PointSpec};

pub const ROWS_FILE: &str = "rows.tsv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PARTIAL_MARKER: &str = "state.partial";

const ROWS_HEADER: &str = "n\ttau_r\ttau_p\tinstance\tseed\titerations\twall_s\tdelta\tpi\tdelta_hex\tpi_hex\textra";

/// One per-instance result row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub n: usize,
    pub tau_r: usize,
    pub tau_p: usize,
    pub instance: usize,
    pub seed: u64,
    pub iterations: usize,
    pub wall_s: f64,
    pub delta_hex: String,
    pub pi_hex: String,
    /// Kind-specific payload (entropy profiles); "-" when unused.
    pub extra: String,
}

impl Row {
    pub fn delta(&self) -> f64 {
        hexfloat::decode(&self.delta_hex).unwrap_or(f64::NAN)
    }

    pub fn pi(&self) -> f64 {
        hexfloat::decode(&self.pi_hex).unwrap_or(f64::NAN)
    }

    pub fn point(&self) -> PointSpec {
        PointSpec {
            n: self.n,
            tau_r: self.tau_r,
            tau_p: self.tau_p,
        }
    }

    fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.6e}\t{:.6e}\t{}\t{}\t{}",
            self.n,
            self.tau_r,
            self.tau_p,
            self.instance,
            self.seed,
            self.iterations,
            self.wall_s,
            self.delta(),
            self.pi(),
            self.delta_hex,
            self.pi_hex,
            if self.extra.is_empty() { "-" } else { &self.extra },
        )
    }

    fn from_tsv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 12 {
            return None;
        }
        let row = Row {
            n: f[0].parse().ok()?,
            tau_r: f[1].parse().ok()?,
            tau_p: f[2].parse().ok()?,
            instance: f[3].parse().ok()?,
            seed: f[4].parse().ok()?,
            iterations: f[5].parse().ok()?,
            wall_s: f[6].parse().ok()?,
            delta_hex: f[9].to_string(),
            pi_hex: f[10].to_string(),
            extra: if f[11] == "-" { String::new() } else { f[11].to_string() },
        };
        hexfloat::decode(&row.delta_hex)?;
        hexfloat::decode(&row.pi_hex)?;
        Some(row)
    }
}

/// Append-only row writer with per-line flush.
pub struct RowWriter {
    file: File,
}

impl RowWriter {
    /// Open for appending, writing the header if the file is new/empty.
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(ROWS_FILE);
        let fresh = !path.exists() || std::fs::metadata(&path)?.len() == 0;
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if fresh {
            writeln!(file, "{ROWS_HEADER}")?;
            file.flush()?;
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, row: &Row) -> Result<(), CliError> {
        writeln!(self.file, "{}", row.to_tsv())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Read completed rows. A malformed final line (torn write from a crash) is
/// dropped; malformed interior lines are an integrity error.
pub fn read_rows(dir: &Path) -> Result<Vec<Row>, CliError> {
    let path = dir.join(ROWS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(&path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if i == 0 {
            if line != ROWS_HEADER {
                return Err(CliError::Integrity {
                    file: path.display().to_string(),
                    what: "unexpected rows header".to_string(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match Row::from_tsv(line) {
            Some(r) => rows.push(r),
            None if i == lines.len() - 1 => { /* torn trailing line */ }
            None => {
                return Err(CliError::Integrity {
                    file: path.display().to_string(),
                    what: format!("malformed row at line {}", i + 1),
                })
            }
        }
    }
    Ok(rows)
}

/// (point, instance) keys already completed, for resume.
pub fn completed_keys(rows: &[Row]) -> HashSet<(PointSpec, usize)> {
    rows.iter().map(|r| (r.point(), r.instance)).collect()
}

/// Aggregates for one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub n: usize,
    pub tau_r: usize,
    pub tau_p: usize,
    pub instances: usize,
    pub mean_delta: f64,
    pub stderr_delta: f64,
    pub var_delta: f64,
    pub max_delta: f64,
    pub mean_pi: f64,
    pub gamma_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_entropy_profile: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub a: f64,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub n: usize,
    pub predicted_delta: f64,
    /// Always "EXTRAPOLATION": a fitted-curve evaluation, not a measurement.
    pub label: String,
}

/// Decay-exponent diagnostic: optimized circuits vs unpeaked circuits of
/// depth τ_r − τ_p (the conjectured 0 < α < 1 relation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaDiagnostic {
    pub n: usize,
    pub peaked_mean: f64,
    pub unpeaked_mean: f64,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckResult {
    pub n: usize,
    pub draws: usize,
    pub single_layer_mean: f64,
    pub single_layer_target: f64,
    pub single_layer_pass: bool,
    pub peaked_mean: f64,
    pub peaked_target: f64,
    pub peaked_pass: bool,
    pub worst_prediction_error: f64,
    pub prediction_pass: bool,
    pub worst_reconstruction_error: f64,
    pub reconstruction_pass: bool,
    pub mean_alpha_sq: f64,
    pub alpha_sq_pass: bool,
}

impl OracleCheckResult {
    pub fn all_pass(&self) -> bool {
        self.single_layer_pass
            && self.peaked_pass
            && self.prediction_pass
            && self.reconstruction_pass
            && self.alpha_sq_pass
    }
}

/// The complete persisted record of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub software_version: String,
    pub manifest_sha256: String,
    pub timestamp_unix: u64,
    pub points: Vec<PointResult>,
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extrapolation: Vec<Extrapolation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_diagnostics: Vec<AlphaDiagnostic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle_checks: Vec<OracleCheckResult>,
}

/// Write atomically (temp file + rename).
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn persist(record: &ResultRecord, dir: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(record).expect("record serializes");
    atomic_write(&dir.join(AGGREGATE_FILE), json.as_bytes())
}

/// Load and verify a completed run: the aggregate record plus its manifest,
/// with the stored hash cross-checked against the stored manifest.
pub fn load(dir: &Path) -> Result<(Manifest, ResultRecord), CliError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = Manifest::load(&manifest_path).map_err(|e| CliError::Integrity {
        file: manifest_path.display().to_string(),
        what: e.to_string(),
    })?;

    let path = dir.join(AGGREGATE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Integrity {
        file: path.display().to_string(),
        what: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let record: ResultRecord =
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Integrity {
            file: path.display().to_string(),
            what: format!("field {}: {}", e.path(), e.inner()),
        })?;

    if record.manifest_sha256 != manifest.sha256() {
        return Err(CliError::Integrity {
            file: path.display().to_string(),
            what: format!(
                "field manifest_sha256: stored {} does not match manifest {}",
                record.manifest_sha256,
                manifest.sha256()
            ),
        });
    }
    for (i, row) in record.rows.iter().enumerate() {
        if hexfloat::decode(&row.delta_hex).is_none() || hexfloat::decode(&row.pi_hex).is_none() {
            return Err(CliError::Integrity {
                file: path.display().to_string(),
                what: format!("field rows[{i}]: bad hex float"),
            });
        }
    }
    Ok((manifest, record))
}

/// Write a plain-columns plot file: `x y err` per line.
pub fn write_plot_data(
    dir: &Path,
    name: &str,
    comment: &str,
    rows: &[(f64, f64, f64)],
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut out = String::new();
    out.push_str(&format!("# {comment}\n# x y err\n"));
    for (x, y, e) in rows {
        out.push_str(&format!("{x} {y:.12e} {e:.12e}\n"));
    }
    atomic_write(&path, out.as_bytes())?;
    Ok(path)
}
