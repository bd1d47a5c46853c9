//! Brick-wall circuit layouts and the random+peaking circuit model.
//!
//! A circuit instance is τ_r layers of fixed Haar-random two-qubit gates
//! followed by τ_p layers of parameterized KAK gates. Layers alternate
//! between the even pairing (0,1),(2,3),… and the odd pairing (1,2),(3,4),…
//! with open boundaries; the peaking layers continue the alternation where
//! the random layers ended, so the combined circuit is a uniform brick wall.
//!
//! # Circuit files
//!
//! Instances serialize to a line-oriented text format that round-trips
//! doubles bit-exactly ([`crate::hexfloat`]):
//!
//! ```text
//! peaked-circuit v1
//! n 4
//! tau_r 2
//! tau_p 1
//! seed 42
//! gate <layer> <pair> <32 hex words: row-major re im bit patterns>
//! ...one line per fixed gate...
//! theta <15 hex words per peaking gate>
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gate::{haar_random_unitary, TwoQubitGate};
use crate::hexfloat;
use crate::kak::{kak_gate, KakParams, KAK_PARAMS};
use crate::state::{StateVector, MAX_QUBITS, MIN_QUBITS};

/// Qubit pairs touched by one brick-wall row with the given global layer
/// index: even rows pair (0,1),(2,3),…; odd rows pair (1,2),(3,4),….
pub fn brickwall_pairs(n: usize, layer_index: usize) -> Vec<(usize, usize)> {
    let start = layer_index % 2;
    (start..n.saturating_sub(1))
        .step_by(2)
        .map(|q| (q, q + 1))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitLayout {
    n: usize,
    first_layer: usize,
    layers: Vec<Vec<(usize, usize)>>,
}

impl CircuitLayout {
    fn check_n(n: usize) -> Result<()> {
        if !(MIN_QUBITS..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        if n % 2 != 0 {
            return Err(Error::OddQubitCount(n));
        }
        Ok(())
    }

    /// Brick wall of `depth` rows starting from the even pairing.
    pub fn brickwall(n: usize, depth: usize) -> Result<Self> {
        Self::brickwall_from(n, depth, 0)
    }

    /// Brick wall whose first row has the parity of global row index
    /// `first_layer`; used to continue the alternation across the
    /// random/peaking boundary.
    pub fn brickwall_from(n: usize, depth: usize, first_layer: usize) -> Result<Self> {
        Self::check_n(n)?;
        let layers = (0..depth)
            .map(|d| brickwall_pairs(n, first_layer + d))
            .collect();
        Ok(Self {
            n,
            first_layer,
            layers,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<(usize, usize)>] {
        &self.layers
    }

    /// Total number of gate slots across all rows.
    pub fn pair_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Global row index of the row after the last one in this layout.
    pub fn next_layer_index(&self) -> usize {
        self.first_layer + self.layers.len()
    }
}

/// An output bitstring; qubit 0 is the leftmost character and the most
/// significant bit of the basis index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitString {
    n: usize,
    index: usize,
}

impl BitString {
    pub fn new(n: usize, index: usize) -> Self {
        debug_assert!(index < (1usize << n));
        Self { n, index }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, index: 0 }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut index = 0usize;
        for ch in s.chars() {
            index <<= 1;
            match ch {
                '0' => {}
                '1' => index |= 1,
                other => return Err(Error::BitstringChar(other)),
            }
        }
        Ok(Self {
            n: s.len(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            let bit = (self.index >> (self.n - 1 - q)) & 1;
            write!(f, "{bit}")?;
        }
        Ok(())
    }
}

/// The probability of one output string.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakWeight {
    pub value: f64,
    pub target: BitString,
}

/// |⟨s|ψ⟩|² for a given bitstring.
pub fn peak_weight(state: &StateVector, s: &BitString) -> Result<PeakWeight> {
    if s.len() != state.num_qubits() {
        return Err(Error::BitstringLength {
            expected: state.num_qubits(),
            got: s.len(),
        });
    }
    Ok(PeakWeight {
        value: state.probability(s.index()),
        target: s.clone(),
    })
}

/// The largest output probability and its bitstring; ties break toward the
/// smallest basis index.
pub fn max_peak(state: &StateVector) -> PeakWeight {
    let mut best = 0usize;
    let mut best_p = state.probability(0);
    for (i, a) in state.amplitudes().iter().enumerate().skip(1) {
        let p = a.norm_sqr();
        if p > best_p {
            best_p = p;
            best = i;
        }
    }
    PeakWeight {
        value: best_p,
        target: BitString::new(state.num_qubits(), best),
    }
}

/// τ_r fixed Haar-random layers plus τ_p parameterized peaking layers.
/// The fixed gates are frozen at construction; only `params` varies during
/// optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakedCircuitInstance {
    n: usize,
    seed: u64,
    layout_r: CircuitLayout,
    fixed_gates: Vec<Vec<TwoQubitGate>>,
    layout_p: CircuitLayout,
    params: Vec<f64>,
}

impl PeakedCircuitInstance {
    /// Sample the τ_r random layers from a seeded stream; τ_p starts at 0.
    pub fn sample_random(n: usize, tau_r: usize, seed: u64) -> Result<Self> {
        let layout_r = CircuitLayout::brickwall(n, tau_r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fixed_gates = layout_r
            .layers()
            .iter()
            .map(|pairs| pairs.iter().map(|_| haar_random_unitary(&mut rng)).collect())
            .collect();
        let layout_p = CircuitLayout::brickwall_from(n, 0, layout_r.next_layer_index())?;
        Ok(Self {
            n,
            seed,
            layout_r,
            fixed_gates,
            layout_p,
            params: Vec::new(),
        })
    }

    /// Build an instance from explicit fixed gates (one inner vec per
    /// brick-wall row, starting from the even pairing). `seed` is recorded
    /// as provenance metadata only.
    pub fn from_fixed_gates(
        n: usize,
        fixed_gates: Vec<Vec<TwoQubitGate>>,
        seed: u64,
    ) -> Result<Self> {
        let layout_r = CircuitLayout::brickwall(n, fixed_gates.len())?;
        for (layer, (pairs, gates)) in layout_r.layers().iter().zip(&fixed_gates).enumerate() {
            if pairs.len() != gates.len() {
                return Err(Error::GateCount {
                    layer,
                    expected: pairs.len(),
                    got: gates.len(),
                });
            }
        }
        let layout_p = CircuitLayout::brickwall_from(n, 0, layout_r.next_layer_index())?;
        Ok(Self {
            n,
            seed,
            layout_r,
            fixed_gates,
            layout_p,
            params: Vec::new(),
        })
    }

    /// Attach τ_p peaking layers continuing the brick-wall parity, with an
    /// explicit initial parameter vector (15 angles per peaking gate).
    pub fn attach_peaking_layers(&self, tau_p: usize, theta_init: &[f64]) -> Result<Self> {
        if self.layout_p.depth() != 0 {
            return Err(Error::PeakingAlreadyAttached);
        }
        let layout_p = CircuitLayout::brickwall_from(self.n, tau_p, self.layout_r.next_layer_index())?;
        let expected = layout_p.pair_count() * KAK_PARAMS;
        if theta_init.len() != expected {
            return Err(Error::ParamLength {
                expected,
                got: theta_init.len(),
            });
        }
        Ok(Self {
            layout_p,
            params: theta_init.to_vec(),
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tau_r(&self) -> usize {
        self.layout_r.depth()
    }

    pub fn tau_p(&self) -> usize {
        self.layout_p.depth()
    }

    pub fn layout_r(&self) -> &CircuitLayout {
        &self.layout_r
    }

    pub fn layout_p(&self) -> &CircuitLayout {
        &self.layout_p
    }

    pub fn fixed_gates(&self) -> &[Vec<TwoQubitGate>] {
        &self.fixed_gates
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::ParamLength {
                expected: self.param_len(),
                got: theta.len(),
            });
        }
        self.params.clear();
        self.params.extend_from_slice(theta);
        Ok(())
    }

    /// Length of the parameter vector: 15 angles per peaking-layer pair.
    pub fn param_len(&self) -> usize {
        self.layout_p.pair_count() * KAK_PARAMS
    }

    /// Parameter vector length that attaching `tau_p` peaking layers would
    /// require.
    pub fn params_for_peaking(&self, tau_p: usize) -> usize {
        let first = self.layout_r.next_layer_index();
        (0..tau_p)
            .map(|d| brickwall_pairs(self.n, first + d).len())
            .sum::<usize>()
            * KAK_PARAMS
    }

    /// Peaking gate sites in application order: (q_a, q_b, parameter offset).
    pub(crate) fn peaking_sites(&self) -> Vec<(usize, usize, usize)> {
        let mut sites = Vec::with_capacity(self.layout_p.pair_count());
        let mut offset = 0;
        for pairs in self.layout_p.layers() {
            for &(a, b) in pairs {
                sites.push((a, b, offset));
                offset += KAK_PARAMS;
            }
        }
        sites
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::ParamLength {
                expected: self.param_len(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Apply only the fixed random layers to |0ⁿ⟩.
    pub fn run_random_part(&self) -> Result<StateVector> {
        let mut state = StateVector::zero(self.n)?;
        self.apply_random_part(&mut state)?;
        Ok(state)
    }

    pub(crate) fn apply_random_part(&self, state: &mut StateVector) -> Result<()> {
        for (pairs, gates) in self.layout_r.layers().iter().zip(&self.fixed_gates) {
            for (&(a, b), gate) in pairs.iter().zip(gates) {
                state.apply_two_qubit_gate(gate, a, b)?;
            }
        }
        Ok(())
    }

    /// C(θ)|0ⁿ⟩ by sequential layer application.
    pub fn run(&self, theta: &[f64]) -> Result<StateVector> {
        self.check_theta(theta)?;
        let mut state = StateVector::zero(self.n)?;
        self.apply_random_part(&mut state)?;
        for (a, b, offset) in self.peaking_sites() {
            let p = KakParams::from_slice(&theta[offset..offset + KAK_PARAMS])?;
            state.apply_two_qubit_gate(&kak_gate(&p), a, b)?;
        }
        Ok(state)
    }

    /// C(θ)|0ⁿ⟩ with the stored parameter vector.
    pub fn output_state(&self) -> Result<StateVector> {
        self.run(&self.params)
    }

    /// Serialize to the circuit file format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "peaked-circuit v1")?;
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "tau_r {}", self.tau_r())?;
        writeln!(w, "tau_p {}", self.tau_p())?;
        writeln!(w, "seed {}", self.seed)?;
        for (layer, gates) in self.fixed_gates.iter().enumerate() {
            for (pair, gate) in gates.iter().enumerate() {
                write!(w, "gate {layer} {pair}")?;
                for row in &gate.matrix {
                    for v in row {
                        write!(w, " {} {}", hexfloat::encode(v.re), hexfloat::encode(v.im))?;
                    }
                }
                writeln!(w)?;
            }
        }
        write!(w, "theta")?;
        for t in &self.params {
            write!(w, " {}", hexfloat::encode(*t))?;
        }
        writeln!(w)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    /// Parse the circuit file format.
    pub fn read_from<R: BufRead>(r: R, origin: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for line in r.lines() {
            lines.push(line?);
        }
        let mut cur = LineCursor {
            origin,
            lines,
            pos: 0,
        };

        let header = cur.next_tokens("header")?;
        if header != ["peaked-circuit", "v1"] {
            return Err(cur.fail("bad header, expected 'peaked-circuit v1'"));
        }
        let n = cur.u64_field("n")? as usize;
        let tau_r = cur.u64_field("tau_r")? as usize;
        let tau_p = cur.u64_field("tau_p")? as usize;
        let seed = cur.u64_field("seed")?;

        let layout_r = CircuitLayout::brickwall(n, tau_r)?;
        let mut fixed_gates: Vec<Vec<TwoQubitGate>> = Vec::with_capacity(tau_r);
        for (layer, pairs) in layout_r.layers().iter().enumerate() {
            let mut gates = Vec::with_capacity(pairs.len());
            for pair in 0..pairs.len() {
                let parts = cur.next_tokens("gate")?;
                if parts.len() != 3 + 32 || parts[0] != "gate" {
                    return Err(cur.fail("expected 'gate <layer> <pair> <32 hex words>'"));
                }
                if parts[1] != layer.to_string() || parts[2] != pair.to_string() {
                    return Err(
                        cur.fail(&format!("gate out of order, expected layer {layer} pair {pair}"))
                    );
                }
                let mut matrix = [[Complex64::new(0.0, 0.0); 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        let re = match hexfloat::decode(&parts[3 + 8 * i + 2 * j]) {
                            Some(v) => v,
                            None => return Err(cur.fail("bad hex float")),
                        };
                        let im = match hexfloat::decode(&parts[3 + 8 * i + 2 * j + 1]) {
                            Some(v) => v,
                            None => return Err(cur.fail("bad hex float")),
                        };
                        matrix[i][j] = Complex64::new(re, im);
                    }
                }
                let gate = TwoQubitGate::fixed(matrix);
                if gate.unitarity_error() > 1e-6 {
                    return Err(cur.fail("gate matrix is not unitary"));
                }
                gates.push(gate);
            }
            fixed_gates.push(gates);
        }

        let layout_p = CircuitLayout::brickwall_from(n, tau_p, layout_r.next_layer_index())?;
        let parts = cur.next_tokens("theta")?;
        if parts[0] != "theta" {
            return Err(cur.fail("expected 'theta ...'"));
        }
        let expected = layout_p.pair_count() * KAK_PARAMS;
        if parts.len() - 1 != expected {
            return Err(cur.fail(&format!(
                "theta has {} values, expected {expected}",
                parts.len() - 1
            )));
        }
        let mut params = Vec::with_capacity(expected);
        for word in &parts[1..] {
            match hexfloat::decode(word) {
                Some(v) => params.push(v),
                None => return Err(cur.fail("bad hex float")),
            }
        }

        Ok(Self {
            n,
            seed,
            layout_r,
            fixed_gates,
            layout_p,
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f, &path.display().to_string())
    }
}

struct LineCursor<'a> {
    origin: &'a str,
    lines: Vec<String>,
    pos: usize,
}

impl LineCursor<'_> {
    fn fail(&self, msg: &str) -> Error {
        Error::CircuitFile {
            path: self.origin.to_string(),
            line: self.pos,
            msg: msg.to_string(),
        }
    }

    /// Next non-empty, non-comment line split on whitespace.
    fn next_tokens(&mut self, expect: &str) -> Result<Vec<String>> {
        loop {
            if self.pos >= self.lines.len() {
                self.pos += 1;
                return Err(self.fail(&format!("unexpected end of file, expected {expect}")));
            }
            let raw = self.lines[self.pos].trim();
            self.pos += 1;
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            return Ok(raw.split_whitespace().map(str::to_string).collect());
        }
    }

    fn u64_field(&mut self, name: &str) -> Result<u64> {
        let parts = self.next_tokens(name)?;
        if parts.len() != 2 || parts[0] != name {
            return Err(self.fail(&format!("expected '{name} <value>'")));
        }
        parts[1]
            .parse::<u64>()
            .map_err(|e| self.fail(&format!("bad {name}: {e}")))
    }
}
