//! Space-time solvers for evolutionary equations `∂₀𝓜u + 𝓝u + 𝓐u = f` on
//! exponentially weighted time grids.
//!
//! The time axis is a uniform grid with zero history before its first point.
//! Every operator acting on trajectories is a block matrix in time; causal
//! operators are exactly block lower triangular, so causality, positivity and
//! independence of the exponential weight become checkable matrix properties.
//!
//! Module map:
//!
//! - [`grid`]: time grids, exponential weights, trajectories, cutoffs and shifts
//! - [`operators`]: the causal operator algebra (derivative, integral, kernels, adjoints)
//! - [`material`]: material laws `(𝓜, 𝓝)` and their commutator with `∂₀`
//! - [`wellposed`]: positivity certificates and checks on the spatial operator
//! - [`solver`]: assembly, causal forward substitution, weight sweeps
//! - [`verify`]: executable property and convergence checks
//! - [`scenario`]: declarative problem descriptions and the shipped examples
//! - [`convergence`]: the manufactured-solution study for the heat example

pub mod convergence;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod material;
pub mod operators;
pub mod scenario;
pub mod solver;
pub mod verify;
pub mod wellposed;

pub use error::{Error, Result};
pub use grid::{TimeGrid, Trajectory, Weight};
pub use material::MaterialLaw;
pub use operators::CausalOperator;
pub use solver::{EvolutionaryProblem, SolveReport};
pub use wellposed::Certificate;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
