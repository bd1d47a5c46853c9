//! Experiment manifests: TOML-backed descriptions of what to run.
//!
//! ```toml
//! kind = "peak-sweep"
//! n = [10]
//! tau_r = 50              # or "n" | "n/2"
//! tau_p = [4, 6, 8]       # or a single integer, "tau_r/2" | "tau_r/3" | "tau_r/4" | "none"
//! instances = 20
//! master_seed = 7
//! out_dir = "runs/sweep"
//!
//! [optimizer]             # optional; defaults otherwise
//! restarts = 10
//! max_iters = 2000
//! ```
//!
//! Fractional τ_p rules round down with a floor of 1. Instance seeds derive
//! from (master_seed, instance index), so the same instance index reuses the
//! same random circuit across sweep points.

use std::path::PathBuf;

use peaked_circuits::gradopt::OptimizerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rarity,
    PeakSweep,
    EntropyProfile,
    ScalingFit,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Rarity => "rarity",
            Self::PeakSweep => "peak-sweep",
            Self::EntropyProfile => "entropy-profile",
            Self::ScalingFit => "scaling-fit",
            Self::OracleCheck => "oracle-check",
        }
    }

    fn optimizes(&self) -> bool {
        matches!(self, Self::PeakSweep | Self::ScalingFit)
    }
}

/// τ_r rule: a fixed depth, or a function of n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauRRule {
    Fixed(usize),
    Named(String),
}

impl TauRRule {
    fn resolve(&self, n: usize) -> Result<usize, String> {
        match self {
            Self::Fixed(k) => Ok(*k),
            Self::Named(s) => match s.as_str() {
                "n" => Ok(n),
                "n/2" => Ok((n / 2).max(1)),
                other => Err(format!("tau_r: unknown rule {other:?} (use an integer, \"n\" or \"n/2\")")),
            },
        }
    }
}

/// τ_p rule: fixed, an explicit sweep list, a fraction of τ_r, or none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauPRule {
    Fixed(usize),
    List(Vec<usize>),
    Named(String),
}

impl Default for TauPRule {
    fn default() -> Self {
        Self::Named("none".into())
    }
}

impl TauPRule {
    fn resolve(&self, tau_r: usize) -> Result<Vec<usize>, String> {
        let frac = |d: usize| (tau_r / d).max(1);
        match self {
            Self::Fixed(k) => Ok(vec![*k]),
            Self::List(v) => {
                if v.is_empty() {
                    Err("tau_p: sweep list is empty".into())
                } else {
                    Ok(v.clone())
                }
            }
            Self::Named(s) => match s.as_str() {
                "none" => Ok(vec![0]),
                "tau_r/2" => Ok(vec![frac(2)]),
                "tau_r/3" => Ok(vec![frac(3)]),
                "tau_r/4" => Ok(vec![frac(4)]),
                other => Err(format!(
                    "tau_p: unknown rule {other:?} (use an integer, a list, \"tau_r/2\", \"tau_r/3\", \"tau_r/4\" or \"none\")"
                )),
            },
        }
    }
}

/// Serde mirror of [`OptimizerConfig`] with spec defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub init_scale: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            max_iters: c.max_iters,
            restarts: c.restarts,
            plateau_tol: c.plateau_tol,
            plateau_window: c.plateau_window,
            init_scale: c.init_scale,
        }
    }
}

impl From<&OptimizerSettings> for OptimizerConfig {
    fn from(s: &OptimizerSettings) -> Self {
        Self {
            learning_rate: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            max_iters: s.max_iters,
            restarts: s.restarts,
            plateau_tol: s.plateau_tol,
            plateau_window: s.plateau_window,
            init_scale: s.init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub n: Vec<usize>,
    pub tau_r: TauRRule,
    #[serde(default)]
    pub tau_p: TauPRule,
    pub instances: usize,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    /// scaling-fit only: evaluate the fitted curve at these n, reported as
    /// EXTRAPOLATION, never an acceptance value.
    #[serde(default)]
    pub extrapolate_n: Vec<usize>,
}

/// One resolved (n, τ_r, τ_p) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointSpec {
    pub n: usize,
    pub tau_r: usize,
    pub tau_p: usize,
}

impl Manifest {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(vec![format!("{}: {}", e.path(), e.inner())]))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(vec![format!("cannot read manifest {}: {e}", path.display())])
        })?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialized form; also the hash input.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validate and resolve every sweep point. Collects all offending
    /// fields rather than stopping at the first.
    pub fn resolve_points(&self) -> Result<Vec<PointSpec>, CliError> {
        let mut problems = Vec::new();
        if self.n.is_empty() {
            problems.push("n: list is empty".to_string());
        }
        for &n in &self.n {
            if !(2..=peaked_circuits::state::MAX_QUBITS).contains(&n) {
                problems.push(format!("n: {n} outside supported range"));
            } else if n % 2 != 0 {
                problems.push(format!("n: {n} must be even"));
            }
        }
        if self.instances == 0 {
            problems.push("instances: must be at least 1".to_string());
        }
        if let Err(e) = OptimizerConfig::from(&self.optimizer).validate() {
            problems.push(format!("optimizer: {e}"));
        }
        if !matches!(self.kind, ExperimentKind::ScalingFit) && !self.extrapolate_n.is_empty() {
            problems.push("extrapolate_n: only meaningful for scaling-fit".to_string());
        }
        // Rule syntax is checked even when no n in the list is usable.
        if let Err(e) = self.tau_r.resolve(2) {
            problems.push(e);
        }
        if let Err(e) = self.tau_p.resolve(2) {
            problems.push(e);
        }

        let mut points = Vec::new();
        for &n in &self.n {
            if n < 2 || n % 2 != 0 {
                continue;
            }
            match self.tau_r.resolve(n) {
                Err(e) => problems.push(e),
                Ok(tau_r) => {
                    if tau_r == 0 {
                        problems.push(format!("tau_r: resolves to 0 at n = {n}"));
                        continue;
                    }
                    match self.tau_p.resolve(tau_r) {
                        Err(e) => problems.push(e),
                        Ok(taus) => {
                            for tau_p in taus {
                                if self.kind.optimizes() && tau_p == 0 {
                                    problems.push(format!(
                                        "tau_p: {} requires at least 1 peaking layer (n = {n})",
                                        self.kind.name()
                                    ));
                                }
                                if !self.kind.optimizes() && tau_p != 0 {
                                    problems.push(format!(
                                        "tau_p: {} does not optimize; use \"none\" (n = {n})",
                                        self.kind.name()
                                    ));
                                }
                                points.push(PointSpec { n, tau_r, tau_p });
                            }
                        }
                    }
                }
            }
        }

        if problems.is_empty() {
            Ok(points)
        } else {
            problems.sort();
            problems.dedup();
            Err(CliError::Validation(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> &'static str {
        r#"
kind = "peak-sweep"
n = [10]
tau_r = 50
tau_p = [4, 6, 8]
instances = 5
master_seed = 7
out_dir = "runs/sweep"
"#
    }

    #[test]
    fn parses_and_resolves_a_sweep() {
        let m = Manifest::from_toml_str(base_toml()).unwrap();
        let points = m.resolve_points().unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[0], PointSpec { n: 10, tau_r: 50, tau_p: 4 });
    }

    #[test]
    fn named_rules_resolve_with_floor() {
        let toml = r#"
kind = "scaling-fit"
n = [6, 8]
tau_r = "n"
tau_p = "tau_r/4"
instances = 2
master_seed = 1
out_dir = "runs/fit"
"#;
        let m = Manifest::from_toml_str(toml).unwrap();
        let points = m.resolve_points().unwrap();
        assert_eq!(points[0], PointSpec { n: 6, tau_r: 6, tau_p: 1 });
        assert_eq!(points[1], PointSpec { n: 8, tau_r: 8, tau_p: 2 });
    }

    #[test]
    fn validation_collects_all_offending_fields() {
        let toml = r#"
kind = "rarity"
n = [7, 0]
tau_r = "bogus"
tau_p = 3
instances = 0
master_seed = 1
out_dir = "runs/x"

[optimizer]
restarts = 0
"#;
        let m = Manifest::from_toml_str(toml).unwrap();
        let err = m.resolve_points().unwrap_err();
        match err {
            CliError::Validation(fields) => {
                let joined = fields.join("\n");
                assert!(joined.contains("n: 7"), "{joined}");
                assert!(joined.contains("n: 0"), "{joined}");
                assert!(joined.contains("instances"), "{joined}");
                assert!(joined.contains("optimizer"), "{joined}");
                assert!(joined.contains("tau_r"), "{joined}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = Manifest::from_toml_str(base_toml()).unwrap();
        let b = Manifest::from_toml_str(base_toml()).unwrap();
        assert_eq!(a.sha256(), b.sha256());
        let mut c = a.clone();
        c.master_seed = 8;
        assert_ne!(a.sha256(), c.sha256());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let toml = format!("{}\nbogus_field = 3\n", base_toml());
        assert!(Manifest::from_toml_str(&toml).is_err());
    }
}
