//! Dense linear algebra of the secular formalism: the bond scattering matrix,
//! the unitary evolution at a torus point, its eigendecomposition with the
//! loop subspace split off, the inverse Cayley map and the Hessian surrogates
//! whose positive index is the nodal surplus.

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub mod cayley;
pub mod scattering;
pub mod secular;

pub use cayley::{edge_weight, g_apply, g_moore_penrose, g_spectral, hessian, surplus_index, HessianSurrogate};
pub use scattering::{build_scattering, ScatteringMatrix};
pub use secular::{circular_distance, decompose, secular_sample, unitary_schur, SecularSample};

/// Numerical thresholds shared by the decomposition and the Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Circular distance below which eigenphases form one eigenspace.
    pub deg: f64,
    /// Minimum distance from the reference phase to any other phase.
    pub gap: f64,
    /// Zero threshold for Hessian eigenvalues, relative to `max |H|`.
    pub zero_rel: f64,
    /// Required ratio between the smallest non-kernel and largest kernel magnitude.
    pub kernel_gap_ratio: f64,
    /// Bound on the relative imaginary part of the assembled Hessian.
    pub hermitian: f64,
    /// Loop-vector capture threshold for the antisymmetric split.
    pub antisym: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { deg: 1e-8, gap: 1e-6, zero_rel: 1e-7, kernel_gap_ratio: 1e3, hermitian: 1e-8, antisym: 1e-8 }
    }
}

/// Why an eigenpair was excluded from the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discard {
    Degenerate { kernel_dim: usize },
    PhaseGap,
    NotHermitian,
    KernelMismatch { near_zero: usize, expected: usize },
    KernelGap,
}

impl From<Discard> for Error {
    fn from(d: Discard) -> Self {
        match d {
            Discard::Degenerate { kernel_dim } => Error::DegeneratePhase { kernel_dim },
            Discard::PhaseGap => Error::DegeneratePhase { kernel_dim: 1 },
            Discard::NotHermitian => Error::NotHermitian(f64::NAN),
            Discard::KernelMismatch { near_zero, expected } => {
                Error::Numerical(format!("Hessian kernel has dimension {near_zero}, expected {expected}"))
            }
            Discard::KernelGap => Error::Numerical("Hessian kernel is not separated from the spectrum".into()),
        }
    }
}
