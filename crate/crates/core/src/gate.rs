//! Two-qubit gates: fixed Haar-random unitaries and the parameterized form.

use nalgebra::Matrix4 as NaMatrix4;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{mat4_dagger, mat4_identity, unitarity_error4, Matrix4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    /// Drawn once and frozen (the random layers).
    Fixed,
    /// Built from variational parameters (the peaking layers).
    Parameterized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitGate {
    pub matrix: Matrix4,
    pub kind: GateKind,
}

impl TwoQubitGate {
    pub fn fixed(matrix: Matrix4) -> Self {
        Self {
            matrix,
            kind: GateKind::Fixed,
        }
    }

    pub fn parameterized(matrix: Matrix4) -> Self {
        Self {
            matrix,
            kind: GateKind::Parameterized,
        }
    }

    pub fn identity() -> Self {
        Self::fixed(mat4_identity())
    }

    /// Conjugate transpose, preserving the kind tag.
    pub fn dagger(&self) -> Self {
        Self {
            matrix: mat4_dagger(&self.matrix),
            kind: self.kind,
        }
    }

    /// Largest elementwise deviation of U†U from I₄.
    pub fn unitarity_error(&self) -> f64 {
        unitarity_error4(&self.matrix)
    }
}

/// Sample a Haar-distributed U(4) gate.
///
/// QR decomposition of a complex Ginibre matrix, with the diagonal of R
/// pushed back into Q as phases. The phase correction makes the
/// factorization canonical (positive-real R diagonal), which is what makes
/// the resulting Q exactly Haar rather than merely unitary.
pub fn haar_random_unitary<R: Rng + ?Sized>(rng: &mut R) -> TwoQubitGate {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = NaMatrix4::<Complex64>::from_fn(|_, _| {
        Complex64::new(
            scale * rng.sample::<f64, _>(StandardNormal),
            scale * rng.sample::<f64, _>(StandardNormal),
        )
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();

    let mut m = mat4_identity();
    for j in 0..4 {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / Complex64::new(d.norm(), 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..4 {
            m[i][j] = q[(i, j)] * phase;
        }
    }
    TwoQubitGate::fixed(m)
}
