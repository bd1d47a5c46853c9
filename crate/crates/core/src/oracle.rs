//! Independent oracles for validating the main engine: two-qubit Schmidt
//! decomposition, the analytic single-layer peaking construction for
//! two-layer random circuits, and brute-force optimization at tiny sizes.
//!
//! Nothing here shares a code path with the adjoint gradient or the Adam
//! optimizer; searches use finite differences and the plain simulator.

use nalgebra::Matrix2 as NaMatrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuits::{max_peak, PeakedCircuitInstance};
use crate::error::{Error, Result};
use crate::gate::TwoQubitGate;
use crate::gradopt::objective;
use crate::linalg::{kron22, mat2_dagger, mat2_identity, mat2_max_diff, mat4_dagger, mat4_mul, Matrix2};
use crate::state::StateVector;

/// Schmidt form of a two-qubit state: (u_a ⊗ u_b)(α|00⟩ + β|11⟩) with
/// α ≥ β ≥ 0. Columns of u_a and u_b are the local Schmidt bases.
#[derive(Clone, Debug)]
pub struct SchmidtForm {
    pub alpha: f64,
    pub beta: f64,
    pub u_a: Matrix2,
    pub u_b: Matrix2,
}

impl SchmidtForm {
    /// Rebuild the 4 amplitudes (index = 2·i + j with i on qubit a).
    pub fn reconstruct(&self) -> [Complex64; 4] {
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (k, w) in [(0usize, self.alpha), (1, self.beta)] {
            for i in 0..2 {
                for j in 0..2 {
                    out[2 * i + j] += Complex64::new(w, 0.0) * self.u_a[i][k] * self.u_b[j][k];
                }
            }
        }
        out
    }
}

/// Schmidt-decompose a normalized two-qubit state via SVD of its 2×2
/// amplitude matrix. Left singular vectors get their first nonzero entry
/// made real positive (with the compensating phase pushed into u_b), so the
/// output is deterministic.
pub fn schmidt_two_qubit(amps: &[Complex64; 4]) -> SchmidtForm {
    let m = NaMatrix2::new(amps[0], amps[1], amps[2], amps[3]);
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;

    let mut u_a = mat2_identity();
    let mut u_b = mat2_identity();
    for k in 0..2 {
        let pivot = if u[(0, k)].norm() > 1e-12 {
            u[(0, k)]
        } else {
            u[(1, k)]
        };
        let phase = if pivot.norm() > 0.0 {
            pivot / Complex64::new(pivot.norm(), 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..2 {
            u_a[i][k] = u[(i, k)] * phase.conj();
            // state = Σ_k σ_k u[:,k] ⊗ conj(v[:,k]); conj(V[j,k]) = vt[(k,j)],
            // re-phased to compensate the u_a fix.
            u_b[i][k] = vt[(k, i)] * phase;
        }
    }
    // A vanishing β leaves the second columns unconstrained by the state;
    // pin them to the canonical orthogonal completion of the first columns.
    if s[1] < 1e-12 {
        set_orthogonal_completion(&mut u_a);
        set_orthogonal_completion(&mut u_b);
    }
    SchmidtForm {
        alpha: s[0],
        beta: s[1],
        u_a,
        u_b,
    }
}

/// Replace column 1 with the unit vector orthogonal to column 0, phased so
/// its first nonzero entry is real positive.
fn set_orthogonal_completion(m: &mut Matrix2) {
    let comp = [-m[1][0].conj(), m[0][0].conj()];
    let pivot = if comp[0].norm() > 1e-12 { comp[0] } else { comp[1] };
    let phase = pivot / Complex64::new(pivot.norm(), 0.0);
    m[0][1] = comp[0] * phase.conj();
    m[1][1] = comp[1] * phase.conj();
}

/// The single peaking layer P = (∏ U†)·R₂⁻¹ built from the Schmidt frames
/// of the first random layer. Merging the single-qubit frames into the
/// odd-parity gates of R₂⁻¹ leaves bare frames on the boundary qubits 0 and
/// n−1, so the construction is one depth-1 layer of disjoint operations but
/// a pure odd brick-wall row only when those boundary frames are trivial;
/// `is_pure_brickwall_row` reports which case occurred.
#[derive(Clone, Debug)]
pub struct AnalyticPeakingLayer {
    n: usize,
    /// Merged two-qubit gates on the odd pairs (1,2),(3,4),…
    pair_gates: Vec<TwoQubitGate>,
    /// Residual single-qubit frames on qubits 0 and n−1.
    boundary_first: Matrix2,
    boundary_last: Matrix2,
    /// Schmidt forms of the first layer's pair states, in pair order.
    pub schmidt_forms: Vec<SchmidtForm>,
    pub is_pure_brickwall_row: bool,
}

impl AnalyticPeakingLayer {
    pub fn pair_gates(&self) -> &[TwoQubitGate] {
        &self.pair_gates
    }

    pub fn boundary(&self) -> (&Matrix2, &Matrix2) {
        (&self.boundary_first, &self.boundary_last)
    }

    /// ∏ α_i²: the peak weight this layer produces at 0ⁿ when applied after
    /// R₂R₁|0ⁿ⟩.
    pub fn predicted_peak_weight(&self) -> f64 {
        self.schmidt_forms
            .iter()
            .map(|s| s.alpha * s.alpha)
            .product()
    }

    /// Apply the layer (all supports are disjoint).
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        for (idx, gate) in self.pair_gates.iter().enumerate() {
            let q = 2 * idx + 1;
            state.apply_two_qubit_gate(gate, q, q + 1)?;
        }
        state.apply_single_qubit_gate(&self.boundary_first, 0)?;
        state.apply_single_qubit_gate(&self.boundary_last, self.n - 1)?;
        Ok(())
    }
}

/// Build the analytic peaking layer for a τ_r = 2 circuit: `r1` the even
/// layer (n/2 gates), `r2` the subsequent odd layer (n/2 − 1 gates).
///
/// The merge of the frames into R₂⁻¹ is verified at runtime against the
/// literal gate product on a fixed probe state; a mismatch is reported as a
/// structural failure rather than silently assumed away.
pub fn analytic_peaking_layer(
    r1: &[TwoQubitGate],
    r2: &[TwoQubitGate],
    n: usize,
) -> Result<AnalyticPeakingLayer> {
    if n % 2 != 0 {
        return Err(Error::OddQubitCount(n));
    }
    if !(2..=crate::state::MAX_QUBITS).contains(&n) {
        return Err(Error::QubitCount(n));
    }
    if r1.len() != n / 2 {
        return Err(Error::GateCount {
            layer: 0,
            expected: n / 2,
            got: r1.len(),
        });
    }
    if r2.len() != n / 2 - 1 {
        return Err(Error::GateCount {
            layer: 1,
            expected: n / 2 - 1,
            got: r2.len(),
        });
    }

    // Schmidt frames of R₁|0ⁿ⟩ = ⊗ (pair states): pair i lives on qubits
    // (2i, 2i+1) and its state is the first column of the gate matrix.
    let mut frames: Vec<Matrix2> = Vec::with_capacity(n);
    let mut schmidt_forms = Vec::with_capacity(n / 2);
    for gate in r1 {
        let col0 = [
            gate.matrix[0][0],
            gate.matrix[1][0],
            gate.matrix[2][0],
            gate.matrix[3][0],
        ];
        let form = schmidt_two_qubit(&col0);
        frames.push(form.u_a);
        frames.push(form.u_b);
        schmidt_forms.push(form);
    }

    // P = (∏_k U_k†) ∘ R₂⁻¹. Frames on qubits 1..n−2 merge into the odd-pair
    // gates; qubits 0 and n−1 keep bare single-qubit frames.
    let mut pair_gates = Vec::with_capacity(r2.len());
    for (j, gate) in r2.iter().enumerate() {
        let (qa, qb) = (2 * j + 1, 2 * j + 2);
        let frame = kron22(&mat2_dagger(&frames[qa]), &mat2_dagger(&frames[qb]));
        pair_gates.push(TwoQubitGate::fixed(mat4_mul(
            &frame,
            &mat4_dagger(&gate.matrix),
        )));
    }
    let boundary_first = mat2_dagger(&frames[0]);
    let boundary_last = mat2_dagger(&frames[n - 1]);
    let is_pure_brickwall_row = mat2_max_diff(&boundary_first, &mat2_identity()) < 1e-9
        && mat2_max_diff(&boundary_last, &mat2_identity()) < 1e-9;

    let layer = AnalyticPeakingLayer {
        n,
        pair_gates,
        boundary_first,
        boundary_last,
        schmidt_forms,
        is_pure_brickwall_row,
    };

    // Runtime merge verification on a probe state: merged layer vs the
    // literal product [R₂† on odd pairs, then U† on every qubit].
    let mut probe_rng = ChaCha8Rng::seed_from_u64(0x0B5E55ED);
    let mut raw: Vec<Complex64> = (0..(1usize << n))
        .map(|_| {
            Complex64::new(
                probe_rng.random_range(-1.0..1.0),
                probe_rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in raw.iter_mut() {
        *a /= Complex64::new(norm, 0.0);
    }
    let mut merged = StateVector::from_amplitudes(raw)?;
    let mut literal = merged.clone();

    layer.apply(&mut merged)?;
    for (j, gate) in r2.iter().enumerate() {
        literal.apply_two_qubit_gate(&gate.dagger(), 2 * j + 1, 2 * j + 2)?;
    }
    for (q, frame) in frames.iter().enumerate() {
        literal.apply_single_qubit_gate(&mat2_dagger(frame), q)?;
    }
    let worst = merged
        .amplitudes()
        .iter()
        .zip(literal.amplitudes())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0_f64, f64::max);
    if worst > 1e-9 {
        return Err(Error::StructuralFailure(format!(
            "merged layer deviates from the literal gate product by {worst:.3e}"
        )));
    }

    Ok(layer)
}

/// Multistart coarse-grid search with finite-difference polish; a lower
/// bound on the peak weight attainable from the instance's peaking layout.
/// The search is independent of the adjoint/Adam stack it certifies: plain
/// forward simulation, central differences, normalized ascent steps.
///
/// With no peaking parameters this is exactly the instance's max peak.
pub fn brute_force_max_peak(
    instance: &PeakedCircuitInstance,
    grid_starts: usize,
    seed: u64,
) -> Result<f64> {
    if instance.n() > 4 {
        return Err(Error::BruteForceTooLarge(instance.n()));
    }
    let p = instance.param_len();
    if p == 0 {
        return Ok(max_peak(&instance.output_state()?).value);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice = [
        -std::f64::consts::FRAC_PI_2,
        0.0,
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::PI,
    ];
    let mut best = f64::NEG_INFINITY;
    for start in 0..grid_starts.max(1) {
        let theta0: Vec<f64> = if start == 0 {
            vec![0.0; p]
        } else if start % 2 == 1 {
            (0..p).map(|_| lattice[rng.random_range(0..4)]).collect()
        } else {
            (0..p)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect()
        };
        let polished = fd_polish(instance, theta0)?;
        if polished > best {
            best = polished;
        }
    }
    Ok(best)
}

fn fd_polish(instance: &PeakedCircuitInstance, mut theta: Vec<f64>) -> Result<f64> {
    let p = theta.len();
    let h = 1e-5;
    let mut delta = objective(instance, &theta)?;
    let mut lr = 0.1;

    for _ in 0..300 {
        let mut grad = vec![0.0; p];
        let mut gnorm2 = 0.0;
        for k in 0..p {
            let saved = theta[k];
            theta[k] = saved + h;
            let up = objective(instance, &theta)?;
            theta[k] = saved - h;
            let down = objective(instance, &theta)?;
            theta[k] = saved;
            grad[k] = (up - down) / (2.0 * h);
            gnorm2 += grad[k] * grad[k];
        }
        let gnorm = gnorm2.sqrt();
        if gnorm < 1e-10 {
            break;
        }

        let mut improved = false;
        while lr > 1e-9 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t + lr * g / gnorm)
                .collect();
            let trial_delta = objective(instance, &trial)?;
            if trial_delta > delta {
                theta = trial;
                delta = trial_delta;
                lr *= 1.5;
                improved = true;
                break;
            }
            lr *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(delta)
}
