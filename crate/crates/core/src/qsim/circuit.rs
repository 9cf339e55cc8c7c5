//! Brickwork circuit application and exact differentiation.
//!
//! The reverse pass is the adjoint method: after the forward sweep, the
//! state is un-evolved gate by gate (gates are unitary, so no intermediate
//! states are cached) while a cotangent "bra" vector is pulled back in
//! lockstep. Per gate, the 4×4 cross matrix between bra and ket gives all
//! 15 parameter gradients by contraction with the analytic gate partials.

use num_complex::Complex64;

use super::gate::{mat4_dagger, mat4_zero, su4_gate_with_grads, Mat4, Su4Params, SU4_PARAMS};
use super::{amplitude_encode, marginal_probs, QnnConfig, QsimError, StateVector, LOG_FLOOR};
use crate::model::{LogitLayout, Model, Prepared};
use crate::rng;

/// Qubit pairs hit by each gate, flattened over blocks (even layer then odd
/// layer per block). Gate `g` owns params `[15g, 15g+15)`.
#[derive(Clone, Debug)]
pub struct CircuitLayout {
    pub pairs: Vec<(usize, usize)>,
    pub num_qubits: usize,
}

impl CircuitLayout {
    pub fn new(cfg: &QnnConfig) -> Self {
        let l = cfg.num_qubits;
        let mut pairs = Vec::with_capacity(cfg.depth * cfg.gates_per_block());
        for _ in 0..cfg.depth {
            let mut q = 0;
            while q + 1 < l {
                pairs.push((q, q + 1));
                q += 2;
            }
            let mut q = 1;
            while q + 1 < l {
                pairs.push((q, q + 1));
                q += 2;
            }
        }
        CircuitLayout {
            pairs,
            num_qubits: l,
        }
    }

    pub fn param_count(&self) -> usize {
        self.pairs.len() * SU4_PARAMS
    }
}

struct Gate {
    q1: usize,
    q2: usize,
    offset: usize,
    u: Mat4,
    grads: Option<[Mat4; SU4_PARAMS]>,
}

/// Gate matrices materialized for one parameter vector.
pub struct BrickworkCircuit {
    gates: Vec<Gate>,
    num_qubits: usize,
}

impl BrickworkCircuit {
    pub fn build(
        cfg: &QnnConfig,
        params: &[f64],
        with_grads: bool,
    ) -> Result<Self, QsimError> {
        let layout = CircuitLayout::new(cfg);
        if params.len() != layout.param_count() {
            return Err(QsimError::ParamLengthMismatch {
                got: params.len(),
                want: layout.param_count(),
            });
        }
        let gates = layout
            .pairs
            .iter()
            .enumerate()
            .map(|(g, &(q1, q2))| {
                let offset = g * SU4_PARAMS;
                let p = Su4Params::from_slice(&params[offset..offset + SU4_PARAMS]);
                let (u, grads) = su4_gate_with_grads(&p, with_grads);
                Gate {
                    q1,
                    q2,
                    offset,
                    u,
                    grads,
                }
            })
            .collect();
        Ok(BrickworkCircuit {
            gates,
            num_qubits: cfg.num_qubits,
        })
    }

    pub fn apply(&self, state: &mut StateVector) {
        assert_eq!(state.num_qubits, self.num_qubits);
        for g in &self.gates {
            apply_gate(&mut state.amplitudes, self.num_qubits, g.q1, g.q2, &g.u);
        }
    }
}

fn insert_zero(x: usize, pos: usize) -> usize {
    ((x >> pos) << (pos + 1)) | (x & ((1 << pos) - 1))
}

#[inline]
fn pair_positions(l: usize, q1: usize, q2: usize) -> (usize, usize) {
    // Big-endian register: qubit 0 is the most significant index bit.
    (l - 1 - q1, l - 1 - q2)
}

/// Apply a 4×4 matrix to qubits (q1, q2); works for non-unitary matrices
/// too (needed for derivative gates).
pub(crate) fn apply_gate(amps: &mut [Complex64], l: usize, q1: usize, q2: usize, u: &Mat4) {
    let (p1, p2) = pair_positions(l, q1, q2);
    let (m1, m2) = (1usize << p1, 1usize << p2);
    for k in 0..amps.len() >> 2 {
        let base = insert_zero(insert_zero(k, p2), p1);
        let idx = [base, base | m2, base | m1, base | m1 | m2];
        let a = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (row, &i) in u.iter().zip(&idx) {
            amps[i] = row[0] * a[0] + row[1] * a[1] + row[2] * a[2] + row[3] * a[3];
        }
    }
}

/// Fused sweep for the forward-mode pass: `dpsi ← U·dpsi + D·psi` and
/// `psi ← U·psi` using the pre-update psi.
fn apply_gate_with_tangent(
    psi: &mut [Complex64],
    dpsi: &mut [Complex64],
    l: usize,
    q1: usize,
    q2: usize,
    u: &Mat4,
    d: &Mat4,
) {
    let (p1, p2) = pair_positions(l, q1, q2);
    let (m1, m2) = (1usize << p1, 1usize << p2);
    for k in 0..psi.len() >> 2 {
        let base = insert_zero(insert_zero(k, p2), p1);
        let idx = [base, base | m2, base | m1, base | m1 | m2];
        let a = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
        let t = [dpsi[idx[0]], dpsi[idx[1]], dpsi[idx[2]], dpsi[idx[3]]];
        for r in 0..4 {
            let (u_r, d_r, i) = (&u[r], &d[r], idx[r]);
            psi[i] = u_r[0] * a[0] + u_r[1] * a[1] + u_r[2] * a[2] + u_r[3] * a[3];
            dpsi[i] = u_r[0] * t[0]
                + u_r[1] * t[1]
                + u_r[2] * t[2]
                + u_r[3] * t[3]
                + d_r[0] * a[0]
                + d_r[1] * a[1]
                + d_r[2] * a[2]
                + d_r[3] * a[3];
        }
    }
}

/// 4×4 cross matrix `R[a][b] = Σ_rest conj(bra[a;rest]) · ket[b;rest]` over
/// the two gate qubits.
fn cross_matrix(
    bra: &[Complex64],
    ket: &[Complex64],
    l: usize,
    q1: usize,
    q2: usize,
) -> Mat4 {
    let (p1, p2) = pair_positions(l, q1, q2);
    let (m1, m2) = (1usize << p1, 1usize << p2);
    let mut r = mat4_zero();
    for k in 0..bra.len() >> 2 {
        let base = insert_zero(insert_zero(k, p2), p1);
        let idx = [base, base | m2, base | m1, base | m1 | m2];
        for (a, row) in r.iter_mut().enumerate() {
            let ba = bra[idx[a]].conj();
            for (b, v) in row.iter_mut().enumerate() {
                *v += ba * ket[idx[b]];
            }
        }
    }
    r
}

/// Apply D brickwork blocks to a state. Norm is preserved.
pub fn apply_brickwork(
    state: &StateVector,
    params: &[f64],
    cfg: &QnnConfig,
) -> Result<StateVector, QsimError> {
    let circuit = BrickworkCircuit::build(cfg, params, false)?;
    let mut out = state.clone();
    circuit.apply(&mut out);
    Ok(out)
}

fn forward_state(
    circuit: &BrickworkCircuit,
    cfg: &QnnConfig,
    input: &[f64],
) -> Result<StateVector, QsimError> {
    let mut state = amplitude_encode(input, cfg.num_qubits)?;
    circuit.apply(&mut state);
    Ok(state)
}

fn logits_of(probs: &[f64], logit_count: usize) -> Vec<f64> {
    probs[..logit_count]
        .iter()
        .map(|p| (p + LOG_FLOOR).ln())
        .collect()
}

/// Full pipeline: encode, evolve, read out `ln(p_b + ε)` for the first
/// `logit_count` marginals.
pub fn qnn_logits(input: &[f64], params: &[f64], cfg: &QnnConfig) -> Result<Vec<f64>, QsimError> {
    let circuit = BrickworkCircuit::build(cfg, params, false)?;
    let state = forward_state(&circuit, cfg, input)?;
    let probs = marginal_probs(&state, cfg.measured_qubits);
    Ok(logits_of(&probs, cfg.logit_count))
}

/// Cotangent on the final amplitudes for a cotangent on the logits:
/// `w_i = (∂L/∂p_b) · ψ_i` with `∂L/∂p_b = cot_b / (p_b + ε)`, such that
/// `dL = 2 Re ⟨w, dψ⟩`.
fn amplitude_cotangent(
    state: &StateVector,
    probs: &[f64],
    cot: &[f64],
    cfg: &QnnConfig,
) -> Vec<Complex64> {
    let shift = cfg.num_qubits - cfg.measured_qubits;
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let b = i >> shift;
            if b < cfg.logit_count {
                a * (cot[b] / (probs[b] + LOG_FLOOR))
            } else {
                Complex64::ZERO
            }
        })
        .collect()
}

/// Adjoint reverse pass from the final state: un-evolve ket and bra in
/// lockstep, contracting the per-gate cross matrix with the gate partials.
fn vjp_from_state(
    circuit: &BrickworkCircuit,
    cfg: &QnnConfig,
    state: StateVector,
    cotangent: &[f64],
) -> Vec<f64> {
    let l = cfg.num_qubits;
    let probs = marginal_probs(&state, cfg.measured_qubits);
    let mut bra = amplitude_cotangent(&state, &probs, cotangent, cfg);
    let mut ket = state.amplitudes;
    let mut grad = vec![0.0; circuit.gates.len() * SU4_PARAMS];
    for g in circuit.gates.iter().rev() {
        let ud = mat4_dagger(&g.u);
        apply_gate(&mut ket, l, g.q1, g.q2, &ud);
        let r = cross_matrix(&bra, &ket, l, g.q1, g.q2);
        let dus = g.grads.as_ref().expect("circuit built with grads");
        for (j, du) in dus.iter().enumerate() {
            let mut acc = Complex64::ZERO;
            for a in 0..4 {
                for b in 0..4 {
                    acc += du[a][b] * r[a][b];
                }
            }
            grad[g.offset + j] = 2.0 * acc.re;
        }
        apply_gate(&mut bra, l, g.q1, g.q2, &ud);
    }
    grad
}

/// Forward pass carrying a tangent: returns the final `(ψ, dψ)`.
fn tangent_state(
    circuit: &BrickworkCircuit,
    cfg: &QnnConfig,
    input: &[f64],
    tangent: &[f64],
) -> Result<(StateVector, Vec<Complex64>), QsimError> {
    let l = cfg.num_qubits;
    let mut state = amplitude_encode(input, l)?;
    let mut dpsi = vec![Complex64::ZERO; state.amplitudes.len()];
    for g in &circuit.gates {
        let t = &tangent[g.offset..g.offset + SU4_PARAMS];
        let mut d = mat4_zero();
        let dus = g.grads.as_ref().expect("circuit built with grads");
        for (tj, du) in t.iter().zip(dus) {
            if *tj == 0.0 {
                continue;
            }
            for (drow, urow) in d.iter_mut().zip(du) {
                for (dv, uv) in drow.iter_mut().zip(urow) {
                    *dv += tj * uv;
                }
            }
        }
        apply_gate_with_tangent(&mut state.amplitudes, &mut dpsi, l, g.q1, g.q2, &g.u, &d);
    }
    Ok((state, dpsi))
}

/// Logit tangents from a final `(ψ, dψ)` pair.
fn dlogits_of(state: &StateVector, dpsi: &[Complex64], cfg: &QnnConfig) -> Vec<f64> {
    let probs = marginal_probs(state, cfg.measured_qubits);
    let shift = cfg.num_qubits - cfg.measured_qubits;
    let mut dprobs = vec![0.0; 1 << cfg.measured_qubits];
    for (i, (a, da)) in state.amplitudes.iter().zip(dpsi).enumerate() {
        dprobs[i >> shift] += 2.0 * (a.conj() * da).re;
    }
    (0..cfg.logit_count)
        .map(|b| dprobs[b] / (probs[b] + LOG_FLOOR))
        .collect()
}

/// `Jᵀ·cotangent` by the adjoint reverse pass, `J = ∂logits/∂params`.
pub fn qnn_vjp(
    input: &[f64],
    params: &[f64],
    cotangent: &[f64],
    cfg: &QnnConfig,
) -> Result<Vec<f64>, QsimError> {
    if cotangent.len() != cfg.logit_count {
        return Err(QsimError::SeedLengthMismatch {
            got: cotangent.len(),
            want: cfg.logit_count,
        });
    }
    let circuit = BrickworkCircuit::build(cfg, params, true)?;
    let state = forward_state(&circuit, cfg, input)?;
    Ok(vjp_from_state(&circuit, cfg, state, cotangent))
}

/// `J·tangent` by a forward-mode pass propagating (ψ, dψ) together.
pub fn qnn_jvp(
    input: &[f64],
    params: &[f64],
    tangent: &[f64],
    cfg: &QnnConfig,
) -> Result<Vec<f64>, QsimError> {
    if tangent.len() != params.len() {
        return Err(QsimError::SeedLengthMismatch {
            got: tangent.len(),
            want: params.len(),
        });
    }
    let circuit = BrickworkCircuit::build(cfg, params, true)?;
    let (state, dpsi) = tangent_state(&circuit, cfg, input, tangent)?;
    Ok(dlogits_of(&state, &dpsi, cfg))
}

/// [`QnnModel`] frozen at one parameter point: gate matrices and their
/// partials are materialized once and shared across evaluations.
pub struct QnnPrepared {
    circuit: BrickworkCircuit,
    cfg: QnnConfig,
}

impl Prepared for QnnPrepared {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let state = forward_state(&self.circuit, &self.cfg, input).expect("qnn forward");
        let probs = marginal_probs(&state, self.cfg.measured_qubits);
        logits_of(&probs, self.cfg.logit_count)
    }

    fn vjp(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64> {
        assert_eq!(cotangent.len(), self.cfg.logit_count);
        let state = forward_state(&self.circuit, &self.cfg, input).expect("qnn vjp");
        vjp_from_state(&self.circuit, &self.cfg, state, cotangent)
    }

    fn jvp(&self, input: &[f64], tangent: &[f64]) -> Vec<f64> {
        assert_eq!(tangent.len(), self.cfg.param_count());
        let (state, dpsi) =
            tangent_state(&self.circuit, &self.cfg, input, tangent).expect("qnn jvp");
        dlogits_of(&state, &dpsi, &self.cfg)
    }

    fn loss_grad(
        &self,
        input: &[f64],
        loss: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    ) -> (f64, Vec<f64>) {
        let state = forward_state(&self.circuit, &self.cfg, input).expect("qnn loss grad");
        let probs = marginal_probs(&state, self.cfg.measured_qubits);
        let (value, cotangent) = loss(&logits_of(&probs, self.cfg.logit_count));
        (
            value,
            vjp_from_state(&self.circuit, &self.cfg, state, &cotangent),
        )
    }

    fn normal_term(
        &self,
        input: &[f64],
        v: &[f64],
        block: &std::ops::Range<usize>,
    ) -> Vec<f64> {
        let (state, dpsi) =
            tangent_state(&self.circuit, &self.cfg, input, v).expect("qnn normal term");
        let d = dlogits_of(&state, &dpsi, &self.cfg);
        let mut cotangent = vec![0.0; d.len()];
        for i in block.clone() {
            cotangent[i] = d[i];
        }
        vjp_from_state(&self.circuit, &self.cfg, state, &cotangent)
    }
}

/// The QNN under the shared [`Model`] contract.
pub struct QnnModel {
    cfg: QnnConfig,
    init_scale: f64,
}

impl QnnModel {
    /// Default half-width of the uniform angle initialization.
    pub const DEFAULT_INIT_SCALE: f64 = std::f64::consts::FRAC_PI_4;

    pub fn new(cfg: QnnConfig, init_scale: f64) -> Self {
        cfg.validate().expect("valid qnn config");
        QnnModel { cfg, init_scale }
    }

    pub fn config(&self) -> &QnnConfig {
        &self.cfg
    }
}

impl Model for QnnModel {
    fn param_count(&self) -> usize {
        self.cfg.param_count()
    }

    fn logit_count(&self) -> usize {
        self.cfg.logit_count
    }

    fn layout(&self) -> LogitLayout {
        match self.cfg.logit_count {
            16 => LogitLayout::auxiliary(),
            20 => LogitLayout::task(),
            n => LogitLayout::flat(n),
        }
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Vec<f64> {
        qnn_logits(input, params, &self.cfg).expect("qnn forward")
    }

    fn vjp(&self, input: &[f64], params: &[f64], cotangent: &[f64]) -> Vec<f64> {
        qnn_vjp(input, params, cotangent, &self.cfg).expect("qnn vjp")
    }

    fn jvp(&self, input: &[f64], params: &[f64], tangent: &[f64]) -> Vec<f64> {
        qnn_jvp(input, params, tangent, &self.cfg).expect("qnn jvp")
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = rng::stream(seed, "init", 0);
        (0..self.param_count())
            .map(|_| rng.random_range(-self.init_scale..self.init_scale))
            .collect()
    }

    fn prepare<'a>(&'a self, params: &'a [f64]) -> Box<dyn Prepared + 'a> {
        let circuit = BrickworkCircuit::build(&self.cfg, params, true).expect("qnn prepare");
        Box::new(QnnPrepared {
            circuit,
            cfg: self.cfg.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_params(cfg: &QnnConfig, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, "qsim-test", 0);
        (0..cfg.param_count())
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect()
    }

    fn random_state(l: usize, seed: u64) -> StateVector {
        let mut rng = rng::stream(seed, "qsim-test-state", 0);
        let raw: Vec<f64> = (0..1 << l).map(|_| rng.random_range(-1.0..1.0)).collect();
        amplitude_encode(&raw, l).unwrap()
    }

    #[test]
    fn layout_pairs_for_l10() {
        let layout = CircuitLayout::new(&QnnConfig::auxiliary(1));
        assert_eq!(
            layout.pairs,
            vec![
                (0, 1),
                (2, 3),
                (4, 5),
                (6, 7),
                (8, 9),
                (1, 2),
                (3, 4),
                (5, 6),
                (7, 8)
            ]
        );
    }

    #[test]
    fn zero_params_act_as_identity() {
        let cfg = QnnConfig::auxiliary(3);
        let state = random_state(10, 1);
        let out = apply_brickwork(&state, &vec![0.0; cfg.param_count()], &cfg).unwrap();
        for (a, b) in state.amplitudes.iter().zip(&out.amplitudes) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn brickwork_rejects_wrong_param_length() {
        let cfg = QnnConfig::auxiliary(2);
        let state = StateVector::zero_state(10);
        assert!(matches!(
            apply_brickwork(&state, &[0.0; 7], &cfg),
            Err(QsimError::ParamLengthMismatch { .. })
        ));
    }

    #[test]
    fn brickwork_preserves_norm() {
        let cfg = QnnConfig::task(4);
        let params = random_params(&cfg, 2);
        let out = apply_brickwork(&random_state(10, 3), &params, &cfg).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    /// Dense 2^L × 2^L embedding of a two-qubit gate, for the small-L oracle.
    fn embed_dense(u: &Mat4, l: usize, q1: usize, q2: usize) -> Vec<Vec<Complex64>> {
        let dim = 1 << l;
        let bit = |i: usize, q: usize| (i >> (l - 1 - q)) & 1;
        let mut m = vec![vec![Complex64::ZERO; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let rest_i = i & !((1 << (l - 1 - q1)) | (1 << (l - 1 - q2)));
                let rest_j = j & !((1 << (l - 1 - q1)) | (1 << (l - 1 - q2)));
                if rest_i == rest_j {
                    let a = 2 * bit(i, q1) + bit(i, q2);
                    let b = 2 * bit(j, q1) + bit(j, q2);
                    m[i][j] = u[a][b];
                }
            }
        }
        m
    }

    fn dense_apply(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
        m.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn single_gate_matches_dense_matrix_at_l4() {
        let cfg = QnnConfig {
            num_qubits: 4,
            depth: 1,
            measured_qubits: 2,
            logit_count: 4,
        };
        // One nonzero gate on pair (0,1); the rest identity.
        let mut params = vec![0.0; cfg.param_count()];
        let mut rng = rng::stream(9, "qsim-test", 1);
        for p in params.iter_mut().take(SU4_PARAMS) {
            *p = rng.random_range(-1.0..1.0);
        }
        let u = su4_gate_with_grads(&Su4Params::from_slice(&params[..SU4_PARAMS]), false).0;
        let state = random_state(4, 4);
        let fast = apply_brickwork(&state, &params, &cfg).unwrap();
        let dense = dense_apply(&embed_dense(&u, 4, 0, 1), &state.amplitudes);
        for (a, b) in fast.amplitudes.iter().zip(&dense) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn full_circuit_matches_dense_product_at_l4() {
        let cfg = QnnConfig {
            num_qubits: 4,
            depth: 2,
            measured_qubits: 2,
            logit_count: 4,
        };
        let params = random_params(&cfg, 5);
        let layout = CircuitLayout::new(&cfg);
        let state = random_state(4, 6);
        let mut dense = state.amplitudes.clone();
        for (g, &(q1, q2)) in layout.pairs.iter().enumerate() {
            let p = Su4Params::from_slice(&params[g * SU4_PARAMS..(g + 1) * SU4_PARAMS]);
            let u = su4_gate_with_grads(&p, false).0;
            dense = dense_apply(&embed_dense(&u, 4, q1, q2), &dense);
        }
        let fast = apply_brickwork(&state, &params, &cfg).unwrap();
        for (a, b) in fast.amplitudes.iter().zip(&dense) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn logits_shape_and_normalization() {
        let cfg = QnnConfig::auxiliary(2);
        let params = random_params(&cfg, 7);
        let mut rng = rng::stream(8, "qsim-test", 2);
        let input: Vec<f64> = (0..784).map(|_| rng.random_range(0.0..1.0)).collect();
        let logits = qnn_logits(&input, &params, &cfg).unwrap();
        assert_eq!(logits.len(), 16);
        // exp(logit) - ε over the full 2^K block sums to 1 (here all 16).
        let total: f64 = logits.iter().map(|l| l.exp() - LOG_FLOOR).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn logits_of_basis_state_with_identity_circuit() {
        let cfg = QnnConfig::auxiliary(2);
        let params = vec![0.0; cfg.param_count()];
        let mut input = vec![0.0; 784];
        input[0] = 1.0;
        let logits = qnn_logits(&input, &params, &cfg).unwrap();
        assert!((logits[0] - (1.0 + LOG_FLOOR).ln()).abs() < 1e-12);
        for &l in &logits[1..] {
            assert!((l - LOG_FLOOR.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn vjp_zero_cotangent_is_zero() {
        let cfg = QnnConfig::auxiliary(2);
        let params = random_params(&cfg, 11);
        let input: Vec<f64> = (0..784).map(|i| (i as f64 * 0.13).sin().abs() + 0.01).collect();
        let g = qnn_vjp(&input, &params, &vec![0.0; 16], &cfg).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jvp_zero_tangent_is_zero() {
        let cfg = QnnConfig::auxiliary(2);
        let params = random_params(&cfg, 12);
        let input: Vec<f64> = (0..784).map(|i| (i as f64 * 0.07).cos() + 1.5).collect();
        let t = qnn_jvp(&input, &params, &vec![0.0; cfg.param_count()], &cfg).unwrap();
        assert!(t.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatches_rejected() {
        let cfg = QnnConfig::auxiliary(2);
        let params = random_params(&cfg, 13);
        let input = vec![1.0; 16];
        assert!(matches!(
            qnn_vjp(&input, &params, &[1.0; 3], &cfg),
            Err(QsimError::SeedLengthMismatch { .. })
        ));
        assert!(matches!(
            qnn_jvp(&input, &params, &[1.0; 3], &cfg),
            Err(QsimError::SeedLengthMismatch { .. })
        ));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let cfg = QnnConfig {
            num_qubits: 6,
            depth: 2,
            measured_qubits: 3,
            logit_count: 8,
        };
        let params = random_params(&cfg, 14);
        let mut rng = rng::stream(15, "qsim-test", 3);
        let input: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = qnn_vjp(&input, &params, &cot, &cfg).unwrap();

        let scalar = |p: &[f64]| -> f64 {
            let logits = qnn_logits(&input, p, &cfg).unwrap();
            crate::linalg::dot(&logits, &cot)
        };
        let h = 1e-4;
        let mut fd = vec![0.0; params.len()];
        let mut shifted = params.clone();
        for k in 0..params.len() {
            shifted[k] = params[k] + h;
            let up = scalar(&shifted);
            shifted[k] = params[k] - h;
            let down = scalar(&shifted);
            shifted[k] = params[k];
            fd[k] = (up - down) / (2.0 * h);
        }
        let diff = crate::linalg::norm2(&crate::linalg::sub(&fd, &grad));
        let rel = diff / crate::linalg::norm2(&grad);
        assert!(rel < 1e-5, "relative FD error {rel}");
    }

    #[test]
    fn jvp_matches_directional_finite_difference() {
        let cfg = QnnConfig {
            num_qubits: 6,
            depth: 2,
            measured_qubits: 3,
            logit_count: 8,
        };
        let params = random_params(&cfg, 16);
        let mut rng = rng::stream(17, "qsim-test", 4);
        let input: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tangent: Vec<f64> = (0..params.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jv = qnn_jvp(&input, &params, &tangent, &cfg).unwrap();

        let h = 1e-5;
        let mut hi = params.clone();
        let mut lo = params.clone();
        for k in 0..params.len() {
            hi[k] += h * tangent[k];
            lo[k] -= h * tangent[k];
        }
        let up = qnn_logits(&input, &hi, &cfg).unwrap();
        let down = qnn_logits(&input, &lo, &cfg).unwrap();
        let fd: Vec<f64> = up
            .iter()
            .zip(&down)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let rel = crate::linalg::norm2(&crate::linalg::sub(&fd, &jv)) / crate::linalg::norm2(&jv);
        assert!(rel < 1e-5, "relative FD error {rel}");
    }

    #[test]
    fn adjoint_identity_holds() {
        let cfg = QnnConfig::auxiliary(2);
        let params = random_params(&cfg, 18);
        let mut rng = rng::stream(19, "qsim-test", 5);
        let input: Vec<f64> = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
        for trial in 0..5u64 {
            let mut r = rng::stream(trial, "qsim-test-adjoint", trial);
            let u: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..params.len()).map(|_| r.random_range(-1.0..1.0)).collect();
            let jv = qnn_jvp(&input, &params, &v, &cfg).unwrap();
            let jtu = qnn_vjp(&input, &params, &u, &cfg).unwrap();
            let lhs = crate::linalg::dot(&u, &jv);
            let rhs = crate::linalg::dot(&jtu, &v);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }
}
