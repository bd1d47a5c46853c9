//! Dense statevector representation and two-qubit gate application.
//!
//! Bit ordering convention, fixed across the whole crate: **qubit 0 is the
//! most significant bit of the basis index**. The basis state |q0 q1 ... q(n-1)⟩
//! has index q0·2^(n-1) + q1·2^(n-2) + ... + q(n-1). In particular |0...0⟩ is
//! always index 0.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gate::TwoQubitGate;
use crate::linalg::{Matrix2, Matrix4};

pub const MIN_QUBITS: usize = 2;
/// 2^26 amplitudes = 1 GiB of f64 pairs; anything larger is out of scope for
/// a dense simulator on one node.
pub const MAX_QUBITS: usize = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0ⁿ⟩ on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        if !(MIN_QUBITS..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Wrap an explicit amplitude vector. The length must be 2^n for a
    /// supported n and the vector must be normalized within 1e-8.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::AmplitudeLength(len));
        }
        let n = len.trailing_zeros() as usize;
        if !(MIN_QUBITS..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized(norm_sqr));
        }
        Ok(Self { n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// |amps[index]|².
    pub fn probability(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_pair(&self, q_a: usize, q_b: usize) -> Result<()> {
        if q_a == q_b || q_a >= self.n || q_b >= self.n {
            return Err(Error::QubitIndex {
                a: q_a,
                b: q_b,
                n: self.n,
            });
        }
        Ok(())
    }

    /// Apply a two-qubit gate to qubits (q_a, q_b), with q_a the more
    /// significant of the gate's 2-bit index.
    pub fn apply_two_qubit_gate(
        &mut self,
        gate: &TwoQubitGate,
        q_a: usize,
        q_b: usize,
    ) -> Result<()> {
        self.check_pair(q_a, q_b)?;
        apply_matrix4(&mut self.amps, self.n, &gate.matrix, q_a, q_b);
        Ok(())
    }

    /// Apply a single-qubit gate to qubit `q`.
    pub fn apply_single_qubit_gate(&mut self, gate: &Matrix2, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(Error::QubitIndex {
                a: q,
                b: q,
                n: self.n,
            });
        }
        apply_matrix2(&mut self.amps, self.n, gate, q);
        Ok(())
    }
}

#[inline(always)]
fn insert_zero_bit(x: usize, pos: usize) -> usize {
    ((x >> pos) << (pos + 1)) | (x & ((1 << pos) - 1))
}

/// In-place two-qubit gate kernel. `q_a` is the more significant bit of the
/// gate's 2-bit basis index; qubit q sits at bit position n-1-q.
pub(crate) fn apply_matrix4(amps: &mut [Complex64], n: usize, m: &Matrix4, q_a: usize, q_b: usize) {
    let pa = n - 1 - q_a;
    let pb = n - 1 - q_b;
    let (p_lo, p_hi) = if pa < pb { (pa, pb) } else { (pb, pa) };
    let mask_a = 1usize << pa;
    let mask_b = 1usize << pb;

    let m00 = m[0][0];
    let m01 = m[0][1];
    let m02 = m[0][2];
    let m03 = m[0][3];
    let m10 = m[1][0];
    let m11 = m[1][1];
    let m12 = m[1][2];
    let m13 = m[1][3];
    let m20 = m[2][0];
    let m21 = m[2][1];
    let m22 = m[2][2];
    let m23 = m[2][3];
    let m30 = m[3][0];
    let m31 = m[3][1];
    let m32 = m[3][2];
    let m33 = m[3][3];

    let quarter = amps.len() >> 2;
    for k in 0..quarter {
        let base = insert_zero_bit(insert_zero_bit(k, p_lo), p_hi);
        let i0 = base;
        let i1 = base | mask_b;
        let i2 = base | mask_a;
        let i3 = base | mask_a | mask_b;

        let a0 = amps[i0];
        let a1 = amps[i1];
        let a2 = amps[i2];
        let a3 = amps[i3];

        amps[i0] = m00 * a0 + m01 * a1 + m02 * a2 + m03 * a3;
        amps[i1] = m10 * a0 + m11 * a1 + m12 * a2 + m13 * a3;
        amps[i2] = m20 * a0 + m21 * a1 + m22 * a2 + m23 * a3;
        amps[i3] = m30 * a0 + m31 * a1 + m32 * a2 + m33 * a3;
    }
}

pub(crate) fn apply_matrix2(amps: &mut [Complex64], n: usize, m: &Matrix2, q: usize) {
    let pos = n - 1 - q;
    let mask = 1usize << pos;
    let m00 = m[0][0];
    let m01 = m[0][1];
    let m10 = m[1][0];
    let m11 = m[1][1];

    let half = amps.len() >> 1;
    for k in 0..half {
        let i0 = insert_zero_bit(k, pos);
        let i1 = i0 | mask;
        let a0 = amps[i0];
        let a1 = amps[i1];
        amps[i0] = m00 * a0 + m01 * a1;
        amps[i1] = m10 * a0 + m11 * a1;
    }
}
