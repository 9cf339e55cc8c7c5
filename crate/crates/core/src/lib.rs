//! Desk-scale simulator for subliminal learning in quantum and classical models.
//!
//! The library trains teacher models, distills students through two public
//! channels (auxiliary logits on noise inputs, or the supervised task logits
//! alone), and measures how much hidden-task drift stays visible through the
//! public interface via the cross-task susceptibility chi.
//!
//! Main pieces:
//! - [`qsim`]: exact statevector simulation of a brickwork SU(4) circuit with
//!   amplitude encoding, marginal-log-probability logits, and exact
//!   reverse/forward differentiation.
//! - [`nets`]: MLP and MicroCNN controls under the same [`model::Model`]
//!   contract.
//! - [`data`]: IDX ingestion, a deterministic synthetic dataset generator,
//!   public-noise generation, and targeted pair poisoning.
//! - [`training`]: Adam, the three loss heads, and the four protocol stages.
//! - [`diagnostics`]: accuracy / flip-rate metrics, matrix-free ridge
//!   reconstruction by conjugate gradient, chi and norm visibility.

pub mod data;
pub mod diagnostics;
pub mod linalg;
pub mod model;
pub mod nets;
pub mod qsim;
pub mod rng;
pub mod training;
