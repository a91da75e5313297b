//! Circular-convolution filter banks and a generalized AL/ADMM fixpoint solver for
//! image decomposition on periodic grids.

pub mod error;
pub mod filters;
pub mod grid;
pub mod harness;
pub mod lsr;
pub mod shrink;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, FilterBank, GridFamily, RealGrid, SpectralFilter, C64};
pub use shrink::Penalty;
pub use solver::{DecompositionResult, DiagnosticsReport, InputFilterTriple, SolverConfig, SolverState};
