//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A state constructor received a parameter outside its domain.
    #[error("invalid state parameter: {0}")]
    InvalidState(String),

    /// A photon-number index fell outside the truncated space.
    #[error("index {index} outside truncated space with n_max = {n_max}")]
    IndexOutOfRange { index: i64, n_max: usize },

    /// A coarse-graining parameter was outside its domain.
    #[error("invalid coarse-graining parameter: {0}")]
    InvalidCoarseGraining(String),

    /// An index map convention does not cover every Fock state.
    #[error("index convention is not bijective: {0}")]
    NonBijectiveIndexMap(String),

    /// A coefficient table violated the Hermiticity required for a real
    /// Wigner function.
    #[error("coefficient table is not Hermitian (residue {residue:.3e})")]
    NonHermitianCoefficients { residue: f64 },

    /// A symbolic P-distribution request exceeded the supported term growth.
    #[error("P-distribution order {0} exceeds the supported bookkeeping range")]
    PdistOrderTooLarge(usize),

    /// A closed form failed validation against the Fock-space oracle in
    /// strict mode.
    #[error(
        "closed form diverged from the numeric oracle: max |diff| = {max_diff:.3e} (tol {tol:.1e})"
    )]
    OracleDivergence { max_diff: f64, tol: f64 },

    /// A quadrature request would exceed the configured memory budget.
    #[error(
        "grid with {points} points per axis exceeds the memory budget ({budget} total points)"
    )]
    GridBudgetExceeded { points: usize, budget: usize },

    /// A weight table does not cover the support needed by a sum.
    #[error("resolution weights (k_cut = {k_cut}) do not cover the requested range {needed}")]
    WeightCoverage { k_cut: i64, needed: i64 },
}

pub type Result<T> = std::result::Result<T, Error>;
