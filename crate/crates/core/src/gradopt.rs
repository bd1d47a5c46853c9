//! Exact adjoint-mode gradient of the peak weight δ₀ⁿ(θ) and multi-restart
//! Adam ascent.
//!
//! The objective is δ(θ) = |⟨0ⁿ|C(θ)|0ⁿ⟩|². One forward pass produces the
//! output state; the backward pass co-evolves the uncomputed ket and the
//! costate ⟨0ⁿ|·(trailing gates), accumulating for each peaking gate the
//! 4×4 environment tensor that contracts against the gate's 15 analytic
//! derivative matrices. Cost is O(P·2ⁿ) with two statevector workspaces,
//! independent of the number of fixed layers below the peaking block.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::circuits::PeakedCircuitInstance;
use crate::error::{Error, Result};
use crate::kak::{kak_gate_and_derivatives, KakParams, KAK_PARAMS};
use crate::linalg::{mat4_dagger, Matrix4};
use crate::seed::derive_seed;
use crate::state::StateVector;

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Relative best-so-far improvement below which a restart stops.
    pub plateau_tol: f64,
    /// Number of iterations over which the plateau improvement is measured.
    pub plateau_window: usize,
    /// Standard deviation (radians) of the Gaussian θ initialization. Small
    /// values start the peaking layers near the identity, which avoids the
    /// flat region of the global objective at large n.
    pub init_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 2000,
            restarts: 10,
            plateau_tol: 1e-6,
            plateau_window: 100,
            init_scale: 0.1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // NaN fails every check below.
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let in_unit = |x: f64| x.is_finite() && x > 0.0 && x < 1.0;
        let mut bad = Vec::new();
        if !positive(self.learning_rate) {
            bad.push("learning_rate must be positive");
        }
        if !in_unit(self.beta1) {
            bad.push("beta1 must be in (0, 1)");
        }
        if !in_unit(self.beta2) {
            bad.push("beta2 must be in (0, 1)");
        }
        if !positive(self.eps) {
            bad.push("eps must be positive");
        }
        if self.max_iters == 0 {
            bad.push("max_iters must be positive");
        }
        if self.restarts == 0 {
            bad.push("restarts must be at least 1");
        }
        if !positive(self.plateau_tol) {
            bad.push("plateau_tol must be positive");
        }
        if self.plateau_window == 0 {
            bad.push("plateau_window must be positive");
        }
        if !positive(self.init_scale) {
            bad.push("init_scale must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

/// δ(θ) alone.
pub fn objective(instance: &PeakedCircuitInstance, theta: &[f64]) -> Result<f64> {
    Ok(instance.run(theta)?.probability(0))
}

/// δ(θ) together with ∂δ/∂θ via the adjoint method.
pub fn objective_and_gradient(
    instance: &PeakedCircuitInstance,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut evaluator = PeakObjective::new(instance)?;
    let mut grad = vec![0.0; theta.len()];
    let delta = evaluator.eval_with_gradient(theta, &mut grad)?;
    Ok((delta, grad))
}

/// Reusable evaluator for one instance. The fixed random layers are applied
/// once at construction; every evaluation replays only the peaking block on
/// a cloned prefix, which is where all the θ-dependence lives.
pub struct PeakObjective {
    prefix: StateVector,
    sites: Vec<(usize, usize, usize)>,
    n: usize,
    param_len: usize,
    ket: StateVector,
    costate: StateVector,
}

impl PeakObjective {
    pub fn new(instance: &PeakedCircuitInstance) -> Result<Self> {
        let prefix = instance.run_random_part()?;
        let n = instance.n();
        Ok(Self {
            ket: prefix.clone(),
            costate: StateVector::zero(n)?,
            prefix,
            sites: instance.peaking_sites(),
            n,
            param_len: instance.param_len(),
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len {
            return Err(Error::ParamLength {
                expected: self.param_len,
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn forward(&mut self, theta: &[f64]) -> Result<f64> {
        self.ket.clone_from(&self.prefix);
        for &(q_a, q_b, offset) in &self.sites {
            let params = KakParams::from_slice(&theta[offset..offset + KAK_PARAMS])?;
            let gate = crate::kak::kak_gate(&params);
            self.ket.apply_two_qubit_gate(&gate, q_a, q_b)?;
        }
        Ok(self.ket.probability(0))
    }

    /// δ(θ).
    pub fn eval(&mut self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.forward(theta)
    }

    /// δ(θ) and its gradient written into `grad` (len = param_len).
    pub fn eval_with_gradient(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_theta(theta)?;
        debug_assert_eq!(grad.len(), self.param_len);
        let delta = self.forward(theta)?;
        if self.sites.is_empty() {
            return Ok(delta);
        }
        let amp0 = self.ket.amplitudes()[0];

        let cost = self.costate.amplitudes_mut();
        cost.fill(Complex64::new(0.0, 0.0));
        cost[0] = Complex64::new(1.0, 0.0);

        for &(q_a, q_b, offset) in self.sites.iter().rev() {
            let params = KakParams::from_slice(&theta[offset..offset + KAK_PARAMS])?;
            let (gate, derivs) = kak_gate_and_derivatives(&params);
            let env = backward_gate_pass(
                self.ket.amplitudes_mut(),
                self.costate.amplitudes_mut(),
                self.n,
                &mat4_dagger(&gate.matrix),
                q_a,
                q_b,
            );
            for (k, d) in derivs.iter().enumerate() {
                let mut d_amp = Complex64::new(0.0, 0.0);
                for i in 0..4 {
                    for j in 0..4 {
                        d_amp += d[i][j] * env[i][j];
                    }
                }
                grad[offset + k] = 2.0 * (amp0.conj() * d_amp).re;
            }
        }
        Ok(delta)
    }
}

/// One fused sweep per gate: uncompute the ket through U†, accumulate the
/// environment E[i][j] = Σ conj(costate_i)·ket_j (with the ket already
/// uncomputed past this gate), and advance the costate through U†.
fn backward_gate_pass(
    ket: &mut [Complex64],
    costate: &mut [Complex64],
    n: usize,
    u_dag: &Matrix4,
    q_a: usize,
    q_b: usize,
) -> Matrix4 {
    let pa = n - 1 - q_a;
    let pb = n - 1 - q_b;
    let (p_lo, p_hi) = if pa < pb { (pa, pb) } else { (pb, pa) };
    let mask_a = 1usize << pa;
    let mask_b = 1usize << pb;

    let mut env = [[Complex64::new(0.0, 0.0); 4]; 4];
    let quarter = ket.len() >> 2;
    for k in 0..quarter {
        let base = {
            let t = ((k >> p_lo) << (p_lo + 1)) | (k & ((1 << p_lo) - 1));
            ((t >> p_hi) << (p_hi + 1)) | (t & ((1 << p_hi) - 1))
        };
        let idx = [base, base | mask_b, base | mask_a, base | mask_a | mask_b];

        let kv = [ket[idx[0]], ket[idx[1]], ket[idx[2]], ket[idx[3]]];
        let cv = [
            costate[idx[0]],
            costate[idx[1]],
            costate[idx[2]],
            costate[idx[3]],
        ];

        let mut k_pre = [Complex64::new(0.0, 0.0); 4];
        let mut c_pre = [Complex64::new(0.0, 0.0); 4];
        for i in 0..4 {
            let row = &u_dag[i];
            k_pre[i] = row[0] * kv[0] + row[1] * kv[1] + row[2] * kv[2] + row[3] * kv[3];
            c_pre[i] = row[0] * cv[0] + row[1] * cv[1] + row[2] * cv[2] + row[3] * cv[3];
        }
        for i in 0..4 {
            let ci = cv[i].conj();
            for j in 0..4 {
                env[i][j] += ci * k_pre[j];
            }
        }
        for i in 0..4 {
            ket[idx[i]] = k_pre[i];
            costate[idx[i]] = c_pre[i];
        }
    }
    env
}

/// Adam first/second moment state.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One Adam ascent step on θ (bias-corrected; maximizes the objective).
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], cfg: &OptimizerConfig) {
    debug_assert_eq!(theta.len(), grad.len());
    debug_assert_eq!(theta.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// One Adam trajectory from an explicit starting point.
#[derive(Clone, Debug)]
pub struct RestartRun {
    pub theta: Vec<f64>,
    pub best_delta: f64,
    /// Running best δ after each evaluation (non-decreasing).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn optimize_restart(
    instance: &PeakedCircuitInstance,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<RestartRun> {
    cfg.validate()?;
    let mut evaluator = PeakObjective::new(instance)?;
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; theta.len()];
    let mut adam = AdamState::new(theta.len());
    let mut best_delta = f64::NEG_INFINITY;
    let mut best_theta = theta.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters.min(4096));
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        let delta = evaluator.eval_with_gradient(&theta, &mut grad)?;
        debug_assert!((-1e-9..=1.0 + 1e-9).contains(&delta));
        iterations = iter + 1;
        if delta > best_delta {
            best_delta = delta;
            best_theta.copy_from_slice(&theta);
        }
        trace.push(best_delta);

        if grad.is_empty() {
            converged = true;
            break;
        }
        if iter >= cfg.plateau_window {
            let then = trace[iter - cfg.plateau_window];
            let improvement = (best_delta - then) / then.max(f64::MIN_POSITIVE);
            if improvement < cfg.plateau_tol {
                converged = true;
                break;
            }
        }
        adam_step(&mut adam, &mut theta, &grad, cfg);
    }

    Ok(RestartRun {
        theta: best_theta,
        best_delta,
        trace,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug)]
pub struct RestartSummary {
    pub final_delta: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub best_theta: Vec<f64>,
    pub best_delta: f64,
    pub per_restart: Vec<RestartSummary>,
    pub instance_seed: u64,
    pub optimizer_seed: u64,
}

impl OptimizationResult {
    /// Total gradient evaluations across all restarts.
    pub fn total_iterations(&self) -> usize {
        self.per_restart.iter().map(|r| r.iterations).sum()
    }
}

/// Attach τ_p peaking layers to a random instance and maximize δ₀ⁿ over
/// `cfg.restarts` independent Adam trajectories with Gaussian-initialized θ.
/// Restart r draws its starting point from seed `derive_seed(optimizer_seed, r)`,
/// so the result is fully determined by (instance seed, optimizer_seed) and
/// any prefix of restarts reproduces a prefix of the same trajectories.
pub fn optimize_peaking(
    instance: &PeakedCircuitInstance,
    tau_p: usize,
    cfg: &OptimizerConfig,
    optimizer_seed: u64,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let param_len = instance.params_for_peaking(tau_p);
    let peaked = instance.attach_peaking_layers(tau_p, &vec![0.0; param_len])?;

    let runs: Vec<RestartRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(optimizer_seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, cfg.init_scale).expect("validated init_scale");
            let theta0: Vec<f64> = (0..param_len).map(|_| normal.sample(&mut rng)).collect();
            optimize_restart(&peaked, &theta0, cfg)
        })
        .collect::<Result<_>>()?;

    let mut best_idx = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.best_delta > runs[best_idx].best_delta {
            best_idx = i;
        }
    }
    let per_restart = runs
        .iter()
        .map(|r| RestartSummary {
            final_delta: r.best_delta,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();

    Ok(OptimizationResult {
        best_theta: runs[best_idx].theta.clone(),
        best_delta: runs[best_idx].best_delta,
        per_restart,
        instance_seed: instance.seed(),
        optimizer_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::max_peak;
    use crate::gate::TwoQubitGate;
    use crate::kak::kak_gate;
    use rand::Rng;

    fn random_instance_and_theta(
        n: usize,
        tau_r: usize,
        tau_p: usize,
        seed: u64,
    ) -> (PeakedCircuitInstance, Vec<f64>) {
        let inst = PeakedCircuitInstance::sample_random(n, tau_r, seed).unwrap();
        let len = inst.params_for_peaking(tau_p);
        let peaked = inst.attach_peaking_layers(tau_p, &vec![0.0; len]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD);
        let theta: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        (peaked, theta)
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        for (n, tau_r, tau_p, seed) in [(4, 2, 1, 1u64), (4, 3, 2, 2), (6, 2, 2, 3)] {
            let (inst, theta) = random_instance_and_theta(n, tau_r, tau_p, seed);
            let (_, grad) = objective_and_gradient(&inst, &theta).unwrap();
            let h = 1e-5;
            for k in 0..theta.len() {
                let mut lo = theta.clone();
                let mut hi = theta.clone();
                lo[k] -= h;
                hi[k] += h;
                let fd = (objective(&inst, &hi).unwrap() - objective(&inst, &lo).unwrap())
                    / (2.0 * h);
                let err = (grad[k] - fd).abs();
                let tol = 1e-5 * fd.abs().max(grad[k].abs()) + 1e-9;
                assert!(err < tol, "n={n} param {k}: adjoint {} vs fd {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn gradient_is_empty_without_peaking_layers() {
        let inst = PeakedCircuitInstance::sample_random(4, 2, 9).unwrap();
        let (delta, grad) = objective_and_gradient(&inst, &[]).unwrap();
        assert!(grad.is_empty());
        let direct = inst.run(&[]).unwrap().probability(0);
        assert_eq!(delta, direct);
    }

    /// Peaking layers that exactly invert the random part sit at an interior
    /// maximum (δ = 1), where the gradient vanishes. Because the peaking
    /// rows continue the brick-wall parity, the mirror alignment needs one
    /// identity row first: τ_p = τ_r + 1 with slot 0 at θ = 0.
    #[test]
    fn gradient_vanishes_at_exact_inverse_configuration() {
        let n = 4;
        let tau_r = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // Fixed gates built from known KAK parameters so the inverse θ is known.
        let mut layer_params: Vec<Vec<KakParams>> = Vec::new();
        let mut gates: Vec<Vec<TwoQubitGate>> = Vec::new();
        for layer in 0..tau_r {
            let pairs = crate::circuits::brickwall_pairs(n, layer);
            let ps: Vec<KakParams> = pairs
                .iter()
                .map(|_| {
                    let mut a = [0.0; KAK_PARAMS];
                    for v in a.iter_mut() {
                        *v = rng.random_range(-1.5..1.5);
                    }
                    KakParams { angles: a }
                })
                .collect();
            gates.push(ps.iter().map(kak_gate).collect());
            layer_params.push(ps);
        }
        let inst = PeakedCircuitInstance::from_fixed_gates(n, gates, 0).unwrap();

        // θ: identity row, then daggered random rows in reverse order.
        let mut theta = Vec::new();
        for &(a, b) in inst.layout_r().layers()[tau_r % 2].iter() {
            let _ = (a, b);
            theta.extend_from_slice(&[0.0; KAK_PARAMS]);
        }
        for layer in (0..tau_r).rev() {
            for p in &layer_params[layer] {
                theta.extend_from_slice(&p.daggered().angles);
            }
        }
        let peaked = inst.attach_peaking_layers(tau_r + 1, &theta).unwrap();

        let (delta, grad) = objective_and_gradient(&peaked, peaked.params()).unwrap();
        assert!((delta - 1.0).abs() < 1e-10, "delta = {delta}");
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(gnorm < 1e-6, "gradient norm {gnorm} at the maximum");
    }

    #[test]
    fn adam_zero_gradient_leaves_theta_unchanged() {
        let cfg = OptimizerConfig::default();
        let mut theta = vec![0.3, -0.7];
        let mut st = AdamState::new(2);
        adam_step(&mut st, &mut theta, &[0.0, 0.0], &cfg);
        assert_eq!(theta, vec![0.3, -0.7]);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let cfg = OptimizerConfig::default();
        let mut theta = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut st, &mut theta, &[0.42], &cfg);
        // m̂ = g, v̂ = g² → step = lr·g/(|g| + eps) ≈ lr·sign(g)
        assert!((theta[0] - cfg.learning_rate).abs() < 1e-6);
    }

    #[test]
    fn adam_constant_gradient_step_approaches_learning_rate() {
        let cfg = OptimizerConfig::default();
        let mut theta = vec![0.0];
        let mut st = AdamState::new(1);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..500 {
            adam_step(&mut st, &mut theta, &[-2.5], &cfg);
            last_step = theta[0] - prev;
            prev = theta[0];
        }
        assert!((last_step + cfg.learning_rate).abs() < 1e-4, "step {last_step}");
    }

    #[test]
    fn best_so_far_trace_is_monotone() {
        let inst = PeakedCircuitInstance::sample_random(4, 2, 17).unwrap();
        let cfg = OptimizerConfig {
            max_iters: 150,
            ..OptimizerConfig::default()
        };
        let peaked = inst.attach_peaking_layers(1, &vec![0.0; 2 * KAK_PARAMS]).unwrap();
        let run = optimize_restart(&peaked, &vec![0.05; 2 * KAK_PARAMS], &cfg).unwrap();
        for w in run.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((0.0..=1.0).contains(&run.best_delta));
    }

    #[test]
    fn optimize_is_deterministic_and_restart_dominant() {
        let inst = PeakedCircuitInstance::sample_random(4, 2, 23).unwrap();
        let cfg = OptimizerConfig {
            restarts: 4,
            max_iters: 120,
            ..OptimizerConfig::default()
        };
        let a = optimize_peaking(&inst, 1, &cfg, 7).unwrap();
        let b = optimize_peaking(&inst, 1, &cfg, 7).unwrap();
        assert_eq!(a.best_theta, b.best_theta);
        assert_eq!(a.best_delta, b.best_delta);

        // best over restarts = max of per-restart finals
        let max_final = a
            .per_restart
            .iter()
            .map(|r| r.final_delta)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_delta, max_final);

        // replay with fewer restarts: a subset never beats the full batch
        let smaller = OptimizerConfig { restarts: 2, ..cfg.clone() };
        let c = optimize_peaking(&inst, 1, &smaller, 7).unwrap();
        assert!(c.best_delta <= a.best_delta + 1e-15);
        for (x, y) in c.per_restart.iter().zip(&a.per_restart) {
            assert_eq!(x.final_delta, y.final_delta);
        }
    }

    #[test]
    fn optimizer_improves_peak_weight_on_a_small_instance() {
        let inst = PeakedCircuitInstance::sample_random(4, 2, 41).unwrap();
        let base = max_peak(&inst.run(&[]).unwrap()).value;
        let cfg = OptimizerConfig {
            restarts: 3,
            max_iters: 400,
            ..OptimizerConfig::default()
        };
        let res = optimize_peaking(&inst, 1, &cfg, 5).unwrap();
        assert!(
            res.best_delta > base,
            "optimized {} vs unpeaked max {base}",
            res.best_delta
        );
    }

    /// At τ_p = τ_r = 2 the optimizer should at least match the analytic
    /// two-layer construction's average of (7/8)^(n/2).
    #[test]
    fn two_peaking_layers_beat_the_analytic_average_at_n4() {
        let cfg = OptimizerConfig {
            restarts: 4,
            max_iters: 500,
            ..OptimizerConfig::default()
        };
        let instances = 12;
        let mut mean = 0.0;
        for i in 0..instances {
            let inst = PeakedCircuitInstance::sample_random(4, 2, 7000 + i).unwrap();
            mean += optimize_peaking(&inst, 2, &cfg, 7000 + i).unwrap().best_delta;
        }
        mean /= instances as f64;
        let floor = (7.0f64 / 8.0).powi(2) - 0.05;
        assert!(mean >= floor, "mean best delta {mean} below {floor}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = OptimizerConfig {
            restarts: 0,
            learning_rate: -1.0,
            ..OptimizerConfig::default()
        };
        let inst = PeakedCircuitInstance::sample_random(4, 1, 1).unwrap();
        assert!(matches!(
            optimize_peaking(&inst, 1, &cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
