//! Output-distribution diagnostics: peak weights, collision probability,
//! half-chain entanglement entropy, rarity estimates, ensemble aggregation
//! and exponential-decay fits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::circuits::PeakedCircuitInstance;
use crate::error::{Error, Result};
use crate::state::StateVector;

/// p_C[s] = |⟨s|ψ⟩|² over all 2ⁿ strings.
#[derive(Clone, Debug)]
pub struct OutputDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

pub fn output_distribution(state: &StateVector) -> OutputDistribution {
    OutputDistribution {
        n: state.num_qubits(),
        probs: state.amplitudes().iter().map(|a| a.norm_sqr()).collect(),
    }
}

/// Output probabilities sorted in descending order (the paper's sorted
/// output-weight plots).
pub fn sorted_distribution(state: &StateVector) -> Vec<f64> {
    let mut probs = output_distribution(state).probs;
    probs.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    probs
}

/// π_C = Σ_s p_C[s]², in [2⁻ⁿ, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionProbability {
    pub value: f64,
}

pub fn collision_probability(state: &StateVector) -> CollisionProbability {
    let mut sum = 0.0;
    let mut max_p = 0.0_f64;
    for a in state.amplitudes() {
        let p = a.norm_sqr();
        sum += p * p;
        max_p = max_p.max(p);
    }
    // π_C ≥ (max_s p_C[s])², the inequality behind the rarity bound.
    debug_assert!(sum + 1e-12 >= max_p * max_p);
    CollisionProbability { value: sum }
}

/// Half-chain von Neumann entropy in bits: the Schmidt spectrum of the
/// 2^(n/2) × 2^(n/2) amplitude matrix (left ⌊n/2⌋ qubits are the row index)
/// via singular value decomposition, with 0·log 0 = 0.
pub fn entanglement_entropy_halfchain(state: &StateVector) -> Result<f64> {
    let n = state.num_qubits();
    if n % 2 != 0 {
        return Err(Error::OddQubitCount(n));
    }
    let d = 1usize << (n / 2);
    // Qubit 0 is the most significant index bit, so the amplitude slice in
    // row-major order is exactly the (left, right) matrix.
    let m = DMatrix::<Complex64>::from_row_slice(d, d, state.amplitudes());
    let svals = m.singular_values();
    let mut entropy = 0.0;
    for s in svals.iter() {
        let p = s * s;
        if p > 0.0 {
            entropy -= p * p.log2();
        }
    }
    Ok(entropy)
}

/// Half-chain entropy after each random layer (1..=τ_r).
#[derive(Clone, Debug)]
pub struct EntropyProfile {
    pub bits: Vec<f64>,
}

pub fn entropy_profile(instance: &PeakedCircuitInstance) -> Result<EntropyProfile> {
    let n = instance.n();
    if n % 2 != 0 {
        return Err(Error::OddQubitCount(n));
    }
    let mut state = StateVector::zero(n)?;
    let mut bits = Vec::with_capacity(instance.tau_r());
    for (pairs, gates) in instance
        .layout_r()
        .layers()
        .iter()
        .zip(instance.fixed_gates())
    {
        for (&(a, b), gate) in pairs.iter().zip(gates) {
            state.apply_two_qubit_gate(gate, a, b)?;
        }
        bits.push(entanglement_entropy_halfchain(&state)?);
    }
    Ok(EntropyProfile { bits })
}

/// Expected half-chain entropy of a Haar-random pure state on n qubits
/// (equal bipartition), in bits: n/2 − 1/(2 ln 2).
pub fn page_entropy_bits(n: usize) -> f64 {
    n as f64 / 2.0 - 1.0 / (2.0 * std::f64::consts::LN_2)
}

/// Empirical P̂(max-peak ≥ δ) with a 95% Wilson interval. Wilson rather than
/// Wald because the interesting regime has counts at or near zero.
#[derive(Clone, Copy, Debug)]
pub struct RarityEstimate {
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub total: usize,
}

pub fn rarity_estimate(max_peaks: &[f64], delta: f64) -> RarityEstimate {
    let total = max_peaks.len();
    let count = max_peaks.iter().filter(|&&p| p >= delta).count();
    let (lower, upper) = wilson_interval(count, total, 1.959_963_984_540_054);
    RarityEstimate {
        p_hat: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        lower,
        upper,
        count,
        total,
    }
}

fn wilson_interval(count: usize, total: usize, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// The rarity bound γ/(δ²·2ⁿ) implied by a well-spread ensemble.
pub fn rarity_bound(gamma_hat: f64, n: usize, delta: f64) -> f64 {
    gamma_hat / (delta * delta * (1u64 << n) as f64)
}

/// True when the measured rarity is statistically consistent with the bound:
/// the 95% lower confidence limit does not exceed it.
pub fn rarity_consistent(estimate: &RarityEstimate, bound: f64) -> bool {
    estimate.lower <= bound
}

/// Least-squares fit of δ(n) = c·a⁻ⁿ on log δ. Residuals are in log space.
#[derive(Clone, Debug)]
pub struct ExpFit {
    pub c: f64,
    pub a: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_exponential_decay(points: &[(f64, f64)]) -> Result<ExpFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for &(_, delta) in points {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::NonPositiveValue(delta));
        }
    }
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1.ln()).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1.ln()).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    let residuals = points
        .iter()
        .map(|&(x, y)| y.ln() - (intercept + slope * x))
        .collect();
    Ok(ExpFit {
        c: intercept.exp(),
        a: (-slope).exp(),
        residuals,
    })
}

/// Exponent α relating optimized and unpeaked decay:
/// mean_peaked = mean_unpeaked^α. Diagnostic for the conjectured 0 < α < 1.
pub fn decay_exponent_ratio(peaked_mean: f64, unpeaked_mean: f64) -> Option<f64> {
    if peaked_mean <= 0.0 || unpeaked_mean <= 0.0 || unpeaked_mean >= 1.0 {
        return None;
    }
    Some(peaked_mean.ln() / unpeaked_mean.ln())
}

/// Per-instance diagnostics feeding ensemble aggregation.
#[derive(Clone, Debug)]
pub struct InstanceRecord {
    pub seed: u64,
    pub delta: f64,
    pub collision: f64,
    pub entropy: Option<EntropyProfile>,
}

/// Ensemble aggregates over instance records.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub n: usize,
    pub samples: Vec<InstanceRecord>,
    pub mean_delta: f64,
    pub var_delta: f64,
    pub max_delta: f64,
    pub mean_pi: f64,
    /// 2ⁿ·mean(π): the empirical well-spread constant; ≥ 1 for any ensemble.
    pub gamma_hat: f64,
    pub fit: Option<ExpFit>,
}

impl EnsembleStats {
    pub fn from_records(n: usize, samples: Vec<InstanceRecord>) -> Self {
        let count = samples.len().max(1) as f64;
        let mean_delta = samples.iter().map(|r| r.delta).sum::<f64>() / count;
        let var_delta = if samples.len() > 1 {
            samples
                .iter()
                .map(|r| (r.delta - mean_delta).powi(2))
                .sum::<f64>()
                / (samples.len() - 1) as f64
        } else {
            0.0
        };
        let max_delta = samples.iter().map(|r| r.delta).fold(0.0_f64, f64::max);
        let mean_pi = samples.iter().map(|r| r.collision).sum::<f64>() / count;
        let gamma_hat = mean_pi * (1u64 << n) as f64;
        debug_assert!(samples.is_empty() || gamma_hat >= 1.0 - 1e-9);
        Self {
            n,
            samples,
            mean_delta,
            var_delta,
            max_delta,
            mean_pi,
            gamma_hat,
            fit: None,
        }
    }

    /// Standard error of mean_delta.
    pub fn stderr_delta(&self) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        (self.var_delta / self.samples.len() as f64).sqrt()
    }

    pub fn max_peaks(&self) -> Vec<f64> {
        self.samples.iter().map(|r| r.delta).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::max_peak;
    use crate::linalg::{ONE, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_state(n: usize) -> StateVector {
        let dim = 1usize << n;
        let amp = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        StateVector::from_amplitudes(vec![amp; dim]).unwrap()
    }

    #[test]
    fn distribution_of_basis_and_uniform_states() {
        let basis = StateVector::zero(3).unwrap();
        let d = output_distribution(&basis);
        assert_eq!(d.probs[0], 1.0);
        assert!(d.probs[1..].iter().all(|&p| p == 0.0));

        let u = uniform_state(3);
        let sorted = sorted_distribution(&u);
        assert!(sorted.iter().all(|&p| (p - 0.125).abs() < 1e-12));
    }

    #[test]
    fn collision_probability_limits() {
        let basis = StateVector::zero(4).unwrap();
        assert!((collision_probability(&basis).value - 1.0).abs() < 1e-12);
        let u = uniform_state(4);
        assert!((collision_probability(&u).value - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_product_and_bell_states() {
        let product = StateVector::zero(4).unwrap();
        assert!(entanglement_entropy_halfchain(&product).unwrap() < 1e-10);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![
            Complex64::new(r, 0.0),
            ZERO,
            ZERO,
            Complex64::new(r, 0.0),
        ])
        .unwrap();
        let e = entanglement_entropy_halfchain(&bell).unwrap();
        assert!((e - 1.0).abs() < 1e-10);
    }

    #[test]
    fn entropy_rejects_odd_n() {
        // 2^5 amplitudes → n = 5
        let mut amps = vec![ZERO; 32];
        amps[0] = ONE;
        let s = StateVector::from_amplitudes(amps).unwrap();
        assert!(matches!(
            entanglement_entropy_halfchain(&s),
            Err(Error::OddQubitCount(5))
        ));
    }

    #[test]
    fn entropy_is_invariant_under_left_half_unitaries() {
        let inst = PeakedCircuitInstance::sample_random(6, 8, 3).unwrap();
        let mut state = inst.run(&[]).unwrap();
        let before = entanglement_entropy_halfchain(&state).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        // gates strictly inside the left half {0, 1, 2}
        for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
            let g = crate::gate::haar_random_unitary(&mut rng);
            state.apply_two_qubit_gate(&g, a, b).unwrap();
        }
        let after = entanglement_entropy_halfchain(&state).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn rarity_estimate_on_identity_ensemble() {
        // instances that are all perfectly peaked
        let peaks = vec![1.0; 40];
        let est = rarity_estimate(&peaks, 0.5);
        assert_eq!(est.p_hat, 1.0);
        assert!(est.lower > 0.9);
        assert!(rarity_consistent(&est, 1.0));

        let none = rarity_estimate(&vec![0.01; 40], 0.5);
        assert_eq!(none.count, 0);
        assert!(none.upper > 0.0); // Wilson keeps slack above zero counts
    }

    #[test]
    fn exponential_fit_recovers_exact_data() {
        let pts: Vec<(f64, f64)> = [6, 8, 10, 12]
            .iter()
            .map(|&n| (n as f64, 0.5 * 1.2_f64.powi(-n)))
            .collect();
        let fit = fit_exponential_decay(&pts).unwrap();
        assert!((fit.c - 0.5).abs() < 1e-10, "c = {}", fit.c);
        assert!((fit.a - 1.2).abs() < 1e-10, "a = {}", fit.a);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn exponential_fit_of_single_layer_law() {
        // δ(n) = (25/48)^(n/2) → a = √(48/25) ≈ 1.386
        let base: f64 = 25.0 / 48.0;
        let pts: Vec<(f64, f64)> = [4, 6, 8, 10]
            .iter()
            .map(|&n| (n as f64, base.powf(n as f64 / 2.0)))
            .collect();
        let fit = fit_exponential_decay(&pts).unwrap();
        assert!((fit.a - (48.0f64 / 25.0).sqrt()).abs() < 1e-10);
        assert!((fit.a - 1.386).abs() < 1e-3);
    }

    #[test]
    fn exponential_fit_rejects_bad_input() {
        assert!(matches!(
            fit_exponential_decay(&[(1.0, 0.5), (2.0, 0.4)]),
            Err(Error::TooFewPoints(2))
        ));
        assert!(matches!(
            fit_exponential_decay(&[(1.0, 0.5), (2.0, 0.0), (3.0, 0.1)]),
            Err(Error::NonPositiveValue(_))
        ));
    }

    #[test]
    fn ensemble_stats_aggregate() {
        let records = vec![
            InstanceRecord { seed: 0, delta: 0.2, collision: 0.07, entropy: None },
            InstanceRecord { seed: 1, delta: 0.4, collision: 0.11, entropy: None },
            InstanceRecord { seed: 2, delta: 0.3, collision: 0.09, entropy: None },
        ];
        let st = EnsembleStats::from_records(4, records);
        assert!((st.mean_delta - 0.3).abs() < 1e-12);
        assert!((st.max_delta - 0.4).abs() < 1e-12);
        assert!((st.gamma_hat - 16.0 * 0.09).abs() < 1e-12);
        assert!(st.var_delta > 0.0);
    }

    #[test]
    fn collision_dominates_squared_peak_on_circuit_outputs() {
        for seed in 0..20 {
            let inst = PeakedCircuitInstance::sample_random(6, 6, seed).unwrap();
            let state = inst.run(&[]).unwrap();
            let pi = collision_probability(&state).value;
            let peak = max_peak(&state).value;
            assert!(pi + 1e-12 >= peak * peak);
            assert!(pi >= 1.0 / 64.0 - 1e-12);
        }
    }

    #[test]
    fn page_value_matches_hand_arithmetic() {
        assert!((page_entropy_bits(12) - 5.2787).abs() < 1e-3);
    }

    /// A peaked circuit's sorted distribution has one enhanced entry far
    /// above the rest of the (Porter–Thomas-like) background.
    #[test]
    fn peaked_output_dominates_sorted_distribution() {
        use crate::gradopt::{optimize_peaking, OptimizerConfig};
        let inst = PeakedCircuitInstance::sample_random(8, 8, 404).unwrap();
        let cfg = OptimizerConfig {
            restarts: 2,
            max_iters: 300,
            ..OptimizerConfig::default()
        };
        let res = optimize_peaking(&inst, 4, &cfg, 404).unwrap();
        let peaked = inst.attach_peaking_layers(4, &res.best_theta).unwrap();
        let sorted = sorted_distribution(&peaked.output_state().unwrap());
        assert!(
            sorted[0] > 5.0 * sorted[1],
            "top {} vs second {}",
            sorted[0],
            sorted[1]
        );
    }
}
