//! 15-parameter two-qubit gate in KAK form and its analytic derivatives.
//!
//! U(θ) = (A₁⊗A₂) · exp(−i(x·XX + y·YY + z·ZZ)) · (B₁⊗B₂)
//!
//! where each single-qubit factor is a Z-Y-Z Euler rotation. This covers all
//! of SU(4) up to global phase, so the parameterized layers are exactly as
//! expressive as the Haar-random gates they are tuned against. Angles are
//! unconstrained reals.
//!
//! Parameter layout (radians):
//!   0..3   A₁ Euler angles (z, y, z), applied after the interaction core
//!   3..6   A₂ Euler angles
//!   6..9   interaction coefficients x, y, z
//!   9..12  B₁ Euler angles, applied before the core
//!   12..15 B₂ Euler angles

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gate::TwoQubitGate;
use crate::linalg::{kron22, mat2_mul, mat4_mul, Matrix2, Matrix4, ZERO};

pub const KAK_PARAMS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KakParams {
    pub angles: [f64; KAK_PARAMS],
}

impl KakParams {
    pub fn zeros() -> Self {
        Self {
            angles: [0.0; KAK_PARAMS],
        }
    }

    pub fn from_slice(angles: &[f64]) -> Result<Self> {
        let arr: [f64; KAK_PARAMS] = angles.try_into().map_err(|_| Error::ParamLength {
            expected: KAK_PARAMS,
            got: angles.len(),
        })?;
        Ok(Self { angles: arr })
    }

    /// Parameters of U(θ)†: single-qubit frames swap sides with reversed,
    /// negated Euler angles; the interaction coefficients flip sign.
    pub fn daggered(&self) -> Self {
        let t = &self.angles;
        Self {
            angles: [
                -t[11], -t[10], -t[9], // A₁ ← B₁ reversed
                -t[14], -t[13], -t[12], // A₂ ← B₂ reversed
                -t[6], -t[7], -t[8], // -(x, y, z)
                -t[2], -t[1], -t[0], // B₁ ← A₁ reversed
                -t[5], -t[4], -t[3], // B₂ ← A₂ reversed
            ],
        }
    }
}

fn rz(t: f64) -> Matrix2 {
    let h = t / 2.0;
    [
        [Complex64::from_polar(1.0, -h), ZERO],
        [ZERO, Complex64::from_polar(1.0, h)],
    ]
}

fn ry(t: f64) -> Matrix2 {
    let h = t / 2.0;
    let (s, c) = h.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// Z-Y-Z Euler product and its three partial derivatives. Each factor is a
/// one-parameter exponential, so the derivatives are generator insertions.
fn euler_zyz_with_derivs(a: f64, b: f64, c: f64) -> (Matrix2, [Matrix2; 3]) {
    let za = rz(a);
    let yb = ry(b);
    let zc = rz(c);
    let u = mat2_mul(&za, &mat2_mul(&yb, &zc));

    let half_i = Complex64::new(0.0, 0.5);
    // d/da = (-i/2)Z · U: scale rows.
    let d_a = [
        [-half_i * u[0][0], -half_i * u[0][1]],
        [half_i * u[1][0], half_i * u[1][1]],
    ];
    // d/db: insert (-i/2)Y after Rz(a); (-i/2)Y·Ry(b) = dRy/db.
    let dyb = {
        let h = b / 2.0;
        let (s, cc) = h.sin_cos();
        [
            [Complex64::new(-s / 2.0, 0.0), Complex64::new(-cc / 2.0, 0.0)],
            [Complex64::new(cc / 2.0, 0.0), Complex64::new(-s / 2.0, 0.0)],
        ]
    };
    let d_b = mat2_mul(&za, &mat2_mul(&dyb, &zc));
    // d/dc = U · (-i/2)Z: scale columns.
    let d_c = [
        [-half_i * u[0][0], half_i * u[0][1]],
        [-half_i * u[1][0], half_i * u[1][1]],
    ];
    (u, [d_a, d_b, d_c])
}

/// exp(−i(x·XX + y·YY + z·ZZ)) in closed form. XX, YY and ZZ commute, and
/// the exponent is block-diagonal on span{|00⟩,|11⟩} and span{|01⟩,|10⟩}.
fn interaction_core(x: f64, y: f64, z: f64) -> Matrix4 {
    let mut m = [[ZERO; 4]; 4];
    let em = Complex64::from_polar(1.0, -z);
    let ep = Complex64::from_polar(1.0, z);
    let (s_m, c_m) = (x - y).sin_cos();
    let (s_p, c_p) = (x + y).sin_cos();
    let mi = Complex64::new(0.0, -1.0);

    m[0][0] = em * c_m;
    m[3][3] = m[0][0];
    m[0][3] = mi * em * s_m;
    m[3][0] = m[0][3];
    m[1][1] = ep * c_p;
    m[2][2] = m[1][1];
    m[1][2] = mi * ep * s_p;
    m[2][1] = m[1][2];
    m
}

/// Left-multiply by −i·XX, −i·YY, −i·ZZ without forming the Pauli matrices.
fn mul_neg_i_xx(n: &Matrix4) -> Matrix4 {
    let mi = Complex64::new(0.0, -1.0);
    let mut out = [[ZERO; 4]; 4];
    for j in 0..4 {
        out[0][j] = mi * n[3][j];
        out[1][j] = mi * n[2][j];
        out[2][j] = mi * n[1][j];
        out[3][j] = mi * n[0][j];
    }
    out
}

fn mul_neg_i_yy(n: &Matrix4) -> Matrix4 {
    let mi = Complex64::new(0.0, -1.0);
    let mut out = [[ZERO; 4]; 4];
    for j in 0..4 {
        out[0][j] = -mi * n[3][j];
        out[1][j] = mi * n[2][j];
        out[2][j] = mi * n[1][j];
        out[3][j] = -mi * n[0][j];
    }
    out
}

fn mul_neg_i_zz(n: &Matrix4) -> Matrix4 {
    let mi = Complex64::new(0.0, -1.0);
    let mut out = [[ZERO; 4]; 4];
    for j in 0..4 {
        out[0][j] = mi * n[0][j];
        out[1][j] = -mi * n[1][j];
        out[2][j] = -mi * n[2][j];
        out[3][j] = mi * n[3][j];
    }
    out
}

/// Build U(θ).
pub fn kak_gate(params: &KakParams) -> TwoQubitGate {
    let t = &params.angles;
    let (a1, _) = euler_zyz_with_derivs(t[0], t[1], t[2]);
    let (a2, _) = euler_zyz_with_derivs(t[3], t[4], t[5]);
    let (b1, _) = euler_zyz_with_derivs(t[9], t[10], t[11]);
    let (b2, _) = euler_zyz_with_derivs(t[12], t[13], t[14]);
    let ka = kron22(&a1, &a2);
    let kb = kron22(&b1, &b2);
    let n = interaction_core(t[6], t[7], t[8]);
    TwoQubitGate::parameterized(mat4_mul(&ka, &mat4_mul(&n, &kb)))
}

/// Build U(θ) together with all 15 partial derivatives ∂U/∂θ_k.
pub fn kak_gate_and_derivatives(params: &KakParams) -> (TwoQubitGate, Vec<Matrix4>) {
    let t = &params.angles;
    let (a1, da1) = euler_zyz_with_derivs(t[0], t[1], t[2]);
    let (a2, da2) = euler_zyz_with_derivs(t[3], t[4], t[5]);
    let (b1, db1) = euler_zyz_with_derivs(t[9], t[10], t[11]);
    let (b2, db2) = euler_zyz_with_derivs(t[12], t[13], t[14]);
    let ka = kron22(&a1, &a2);
    let kb = kron22(&b1, &b2);
    let n = interaction_core(t[6], t[7], t[8]);

    let nkb = mat4_mul(&n, &kb);
    let kan = mat4_mul(&ka, &n);
    let u = mat4_mul(&ka, &nkb);

    let mut derivs = Vec::with_capacity(KAK_PARAMS);
    for d in &da1 {
        derivs.push(mat4_mul(&kron22(d, &a2), &nkb));
    }
    for d in &da2 {
        derivs.push(mat4_mul(&kron22(&a1, d), &nkb));
    }
    derivs.push(mat4_mul(&ka, &mat4_mul(&mul_neg_i_xx(&n), &kb)));
    derivs.push(mat4_mul(&ka, &mat4_mul(&mul_neg_i_yy(&n), &kb)));
    derivs.push(mat4_mul(&ka, &mat4_mul(&mul_neg_i_zz(&n), &kb)));
    for d in &db1 {
        derivs.push(mat4_mul(&kan, &kron22(d, &b2)));
    }
    for d in &db2 {
        derivs.push(mat4_mul(&kan, &kron22(&b1, d)));
    }

    (TwoQubitGate::parameterized(u), derivs)
}

/// The 15 matrices ∂U/∂θ_k.
pub fn kak_gate_derivatives(params: &KakParams) -> Vec<Matrix4> {
    kak_gate_and_derivatives(params).1
}
