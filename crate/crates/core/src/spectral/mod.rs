//! Band-limited fields on the unit torus and constant-coefficient operators.

pub mod bump;
pub mod fft;
pub mod field;
pub mod grid;
pub mod io;
pub mod lp;
pub mod mollify;
pub mod ops;
pub mod state;
pub mod testing;

pub use field::{
    sym_index, Components, MatrixField3, ScalarField3, SymTensorField3, TimeSampled, VectorField3, SYM_PAIRS,
};
pub use grid::Grid3;
pub use lp::{holder_seminorm, project_band, project_low};
pub use mollify::{commutator_defect, mollify, mollify_field};
pub use ops::{antidiv_r, derivative, div, div_sym, grad, helmholtz, laplace_inverse, leray, Helmholtz};
pub use state::{euler_reynolds_residual, EulerReynoldsState, FreqEnergyLevels, ResidualReport};
