//! Exact sparse rational linear algebra over row-finite systems: tightness
//! certificates, loading injections, proud row-diagonalization, and the
//! matching-theoretic view of the column/row incidence graph.

pub mod corpus;
pub mod io;
pub mod loader;
pub mod matching;
pub mod matrix;
pub mod numerics;

pub use matrix::{FiniteMatrix, LazyMatrix, Tightness};
pub use numerics::{Rational, SparseVector};
