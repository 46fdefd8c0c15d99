//! Maximum-likelihood error thresholds for the planar surface code under
//! generic single-qubit coherent errors.
//!
//! A coherent error is a unitary rotation `U_j = exp(i α n·σ)` applied to
//! every physical qubit. The logical-class amplitudes `Z_{μ,s}` of the
//! projected error operator map onto partition functions of a random-bond
//! Ising model with complex couplings (an Ashkin-Teller variant with
//! four-spin terms). Those partition functions are evaluated here by
//! contracting the model's transfer matrix as a non-unitary (1+1)D quantum
//! circuit on `2M-1` sites, represented as a matrix-product state with
//! singular-value truncation.
//!
//! The crate is organized around that pipeline:
//!
//! - [`lattice`]: planar surface-code geometry, syndromes, logical classes.
//! - [`couplings`]: rotation parameters to Pauli coefficients, complex RBIM
//!   couplings, and Pauli-twirled real couplings.
//! - [`circuit`]: per-qubit transfer-matrix gates and the four-amplitude
//!   evaluation `(Z_I, Z_X, Z_Y, Z_Z)`.
//! - [`mps`]: the matrix-product-state engine (plus an exact dense backend
//!   for cross-validation at small sizes).
//! - [`sampler`]: Born-probability sampling of error strings via sequential
//!   per-qubit marginals.
//! - [`oracle`]: independent small-scale ground truths (brute-force spin
//!   sums, exact statevector traces, Bloch-sphere identities).
//! - [`decode`]: maximum-likelihood verdicts, minimum-weight perfect
//!   matching, and the incoherent-twirl evaluation.
//! - [`experiment`]: sweep orchestration, threshold/decay estimation, CSV
//!   and CLI plumbing.

pub mod amplitude;
pub mod circuit;
pub mod couplings;
pub mod decode;
pub mod experiment;
pub mod lattice;
pub mod mps;
pub mod oracle;
pub mod sampler;

pub use amplitude::AmplitudeLog;
pub use lattice::{CodeLayout, EtaConfig, LogicalClass, Syndrome};
