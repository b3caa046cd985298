//! Fermionic matrix product states on occupation-number chains.
//!
//! The crate factors many-fermion states over a finite chain of spin
//! orbitals into left-normalized site tensors, fixes the closure gauge in
//! which truncating the chain becomes reading off a single matrix column,
//! and studies how ground states of second-quantized Hamiltonians converge
//! as the orbital basis grows. Solvers cover exact diagonalization and a
//! two-site DMRG over compressed operator chains.
//!
//! Modules:
//! - [`fock`]: packed occupation labels, symmetry sectors, state vectors.
//! - [`kernel`]: dense SVD/eigensolver contracts and an iterative extremal
//!   eigensolver.
//! - [`mps`]: site tensors, canonical forms, closure gauge, truncation,
//!   Schmidt spectra, spin pairing, serialization.
//! - [`hamiltonian`]: integral tables, stock models, FCIDUMP, exact
//!   diagonalization.
//! - [`dmrg`]: operator chains built from integral tables and the two-site
//!   sweep solver.
//! - [`convergence`]: basis-ladder runner, spectrum distances, reports.
//! - [`cli`]: command implementations behind the `fockmps` binary.

pub mod cli;
pub mod convergence;
pub mod dmrg;
pub mod fock;
pub mod hamiltonian;
pub mod kernel;
pub mod mps;

/// Crate-wide numerical tolerances.
///
/// Centralizing them keeps the guarantees of the public contracts in one
/// place; tests assert against these same constants.
pub mod tol {
    /// Orthonormality defect allowed for computed isometries and unitaries.
    pub const ORTHO: f64 = 1e-12;

    /// Relative reconstruction error allowed for factorizations.
    pub const RECONSTRUCT: f64 = 1e-10;

    /// Relative cutoff below which singular values count as exact zeros.
    pub const RANK_CUT: f64 = 1e-14;

    /// Absolute norm below which a closure vector counts as vanished. The
    /// chain tensors are subunitary, so closure norms never exceed one and
    /// an absolute cutoff is meaningful.
    pub const ZERO_CLOSURE: f64 = 1e-14;

    /// Default residual tolerance for iterative eigensolvers, relative to
    /// the operator norm estimate.
    pub const EIGEN_RESIDUAL: f64 = 1e-10;

    /// Energy gap below which a ground state is flagged degenerate.
    pub const DEGENERACY_GAP: f64 = 1e-8;

    /// Mass allowed outside the last component of a gauge-fixed closure
    /// vector, relative to its norm.
    pub const CLOSURE_OFF_LAST: f64 = 1e-12;
}
