//! Finite-element computation of extremal functions of the Sobolev
//! inequality `C ||u||_{L^p} <= ||∇u||_{L^2}` on convex polygons, i.e.
//! positive ground states of the Lane-Emden equation `-Δu = |u|^{p-2} u`
//! with homogeneous Dirichlet data.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the CLI and
//! the convergence studies use.

// `!(x > 0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod io;
pub mod mesh;
pub mod minimizer;
pub mod quadrature;
pub mod scalar;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use field::NodalField;
pub use mesh::{Mesh, Origin, Triangle, Vertex};
pub use minimizer::{solve_extremal, ExtremalProblem, ExtremalSolution, MinimizerConfig};
pub use quadrature::QuadratureRule;
pub use scalar::Real;
pub use sparse::{cg_solve, CgReport, SparseOperator};
pub use study::{run_study, RateRow, Scaling, StudyConfig, StudyReport};

pub type Mesh64 = Mesh<f64>;
pub type Field64 = NodalField<f64>;
pub type Operator64 = SparseOperator<f64>;
pub type MinimizerConfig64 = MinimizerConfig<f64>;
pub type ExtremalSolution64 = ExtremalSolution<f64>;
pub type StudyConfig64 = StudyConfig<f64>;
pub type RateRow64 = RateRow<f64>;

pub type Mesh32 = Mesh<f32>;
pub type Field32 = NodalField<f32>;
