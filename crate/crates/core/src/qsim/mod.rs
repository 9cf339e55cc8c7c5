//! Exact statevector simulation of the brickwork SU(4) circuit.
//!
//! Conventions, frozen for logit-block semantics:
//! - State index is big-endian over the register: qubit 0 is the most
//!   significant bit of the amplitude index.
//! - The measured (designated) qubits are the first `K` in register order,
//!   so the marginal bitstring index of amplitude `i` is `i >> (L - K)`.
//! - Logits are `ln(p_b + ε)` for the first `logit_count` marginals.

mod circuit;
mod gate;

pub use circuit::{
    apply_brickwork, qnn_jvp, qnn_logits, qnn_vjp, BrickworkCircuit, CircuitLayout, QnnModel,
};
pub use gate::{su4_gate, su4_gate_with_grads, unitarity_defect, Mat4, Su4Params, SU4_PARAMS};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsimError {
    #[error("cannot amplitude-encode a zero-norm input")]
    ZeroNormInput,
    #[error("input length {len} exceeds 2^{qubits} amplitudes")]
    InputTooLong { len: usize, qubits: usize },
    #[error("parameter vector has length {got}, circuit expects {want}")]
    ParamLengthMismatch { got: usize, want: usize },
    #[error("cotangent/tangent length {got} does not match logit count {want}")]
    SeedLengthMismatch { got: usize, want: usize },
    #[error("invalid circuit config: {0}")]
    InvalidConfig(String),
}

/// Circuit shape and readout configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QnnConfig {
    /// Register size L.
    pub num_qubits: usize,
    /// Number of brickwork blocks D (each block = one even + one odd layer).
    pub depth: usize,
    /// Number of designated output qubits K.
    pub measured_qubits: usize,
    /// How many leading marginals become logits (16 auxiliary / 20 task).
    pub logit_count: usize,
}

impl QnnConfig {
    /// Auxiliary-channel readout: K=4, 16 logits (10 public + 6 auxiliary).
    pub fn auxiliary(depth: usize) -> Self {
        QnnConfig {
            num_qubits: 10,
            depth,
            measured_qubits: 4,
            logit_count: 16,
        }
    }

    /// Task-channel readout: K=5, first 20 of 32 marginals as logits.
    pub fn task(depth: usize) -> Self {
        QnnConfig {
            num_qubits: 10,
            depth,
            measured_qubits: 5,
            logit_count: 20,
        }
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        let err = |msg: String| Err(QsimError::InvalidConfig(msg));
        if self.num_qubits < 2 || self.num_qubits > 16 {
            return err(format!("num_qubits {} outside 2..=16", self.num_qubits));
        }
        if self.depth == 0 {
            return err("depth must be at least 1".into());
        }
        if self.measured_qubits == 0 || self.measured_qubits > self.num_qubits {
            return err(format!(
                "measured_qubits {} outside 1..={}",
                self.measured_qubits, self.num_qubits
            ));
        }
        if self.logit_count == 0 || self.logit_count > 1 << self.measured_qubits {
            return err(format!(
                "logit_count {} exceeds 2^{} marginals",
                self.logit_count, self.measured_qubits
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    /// Gates per brickwork block: even pairs (0,1),(2,3),… then odd pairs
    /// (1,2),(3,4),…
    pub fn gates_per_block(&self) -> usize {
        self.num_qubits / 2 + (self.num_qubits - 1) / 2
    }

    /// Flat parameter length: D · gates_per_block · 15.
    pub fn param_count(&self) -> usize {
        self.depth * self.gates_per_block() * SU4_PARAMS
    }
}

/// Log floor added inside the logit log to avoid -inf on zero marginals.
pub const LOG_FLOOR: f64 = 1e-12;

/// 2^L complex amplitudes with unit norm.
#[derive(Clone, Debug)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub num_qubits: usize,
}

impl StateVector {
    /// |0…0⟩ on `num_qubits`.
    pub fn zero_state(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::ZERO; 1 << num_qubits];
        amplitudes[0] = Complex64::ONE;
        StateVector {
            amplitudes,
            num_qubits,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// L2-normalize and zero-pad a real vector into 2^L amplitudes.
pub fn amplitude_encode(raw: &[f64], num_qubits: usize) -> Result<StateVector, QsimError> {
    let dim = 1 << num_qubits;
    if raw.len() > dim {
        return Err(QsimError::InputTooLong {
            len: raw.len(),
            qubits: num_qubits,
        });
    }
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(QsimError::ZeroNormInput);
    }
    let mut amplitudes = vec![Complex64::ZERO; dim];
    for (a, &x) in amplitudes.iter_mut().zip(raw) {
        *a = Complex64::new(x / norm, 0.0);
    }
    Ok(StateVector {
        amplitudes,
        num_qubits,
    })
}

/// Marginal probabilities of the first `measured` qubits: full 2^K vector,
/// entry `b` summing |amplitude|² over the unmeasured configurations.
pub fn marginal_probs(state: &StateVector, measured: usize) -> Vec<f64> {
    let shift = state.num_qubits - measured;
    let mut probs = vec![0.0; 1 << measured];
    for (i, a) in state.amplitudes.iter().enumerate() {
        probs[i >> shift] += a.norm_sqr();
    }
    probs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_basis_vector() {
        let mut raw = vec![0.0; 784];
        raw[0] = 1.0;
        let s = amplitude_encode(&raw, 10).unwrap();
        assert_eq!(s.amplitudes.len(), 1024);
        assert!((s.amplitudes[0].re - 1.0).abs() < 1e-15);
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_three_four_five() {
        let s = amplitude_encode(&[3.0, 4.0], 2).unwrap();
        assert!((s.amplitudes[0].re - 0.6).abs() < 1e-15);
        assert!((s.amplitudes[1].re - 0.8).abs() < 1e-15);
        assert_eq!(s.amplitudes[2], Complex64::ZERO);
        assert_eq!(s.amplitudes[3], Complex64::ZERO);
    }

    #[test]
    fn encode_random_vector_has_unit_norm() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "encode-test", 0);
        let raw: Vec<f64> = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = amplitude_encode(&raw, 10).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_rejects_zero_norm() {
        assert!(matches!(
            amplitude_encode(&[0.0; 16], 5),
            Err(QsimError::ZeroNormInput)
        ));
    }

    #[test]
    fn encode_rejects_oversized_input() {
        assert!(matches!(
            amplitude_encode(&[1.0; 40], 5),
            Err(QsimError::InputTooLong { .. })
        ));
    }

    #[test]
    fn marginals_of_basis_state() {
        let s = StateVector::zero_state(10);
        let p = marginal_probs(&s, 4);
        assert_eq!(p.len(), 16);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn marginals_of_uniform_superposition() {
        let dim = 1024;
        let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        let s = StateVector {
            amplitudes: vec![amp; dim],
            num_qubits: 10,
        };
        let p = marginal_probs(&s, 4);
        for &x in &p {
            assert!((x - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_match_bitwise_brute_force() {
        use rand::Rng;
        let mut rng = crate::rng::stream(4, "marginal-test", 0);
        let mut amplitudes: Vec<Complex64> = (0..1024)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amplitudes {
            *a /= norm;
        }
        let s = StateVector {
            amplitudes,
            num_qubits: 10,
        };
        let k = 5;
        let p = marginal_probs(&s, k);
        // Oracle: per-outcome scan testing each designated bit explicitly.
        for b in 0..1usize << k {
            let mut want = 0.0;
            for (i, a) in s.amplitudes.iter().enumerate() {
                let matches = (0..k).all(|j| (i >> (10 - 1 - j)) & 1 == (b >> (k - 1 - j)) & 1);
                if matches {
                    want += a.norm_sqr();
                }
            }
            assert!((p[b] - want).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(QnnConfig::auxiliary(2).param_count(), 270);
        assert_eq!(QnnConfig::auxiliary(4).param_count(), 540);
        assert_eq!(QnnConfig::task(4).param_count(), 540);
        for d in 1..=6 {
            assert_eq!(QnnConfig::auxiliary(d).param_count(), d * 135);
        }
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = QnnConfig::auxiliary(2);
        cfg.logit_count = 17;
        assert!(cfg.validate().is_err());
        let mut cfg = QnnConfig::task(2);
        cfg.measured_qubits = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = QnnConfig::task(2);
        cfg.depth = 0;
        assert!(cfg.validate().is_err());
    }
}
