//! Constructive weak factorization of the little Hardy space `h^1(R x R)`.
//!
//! Functions are exactly piecewise constant on uniform grids ([`grid`]), the
//! Hilbert transforms are discretised by exact cell-pair integrals
//! ([`singular`]), and on top of that the crate builds rectangle atoms
//! ([`atoms`]), the bilinear form `Pi(g, h) = h H1H2 g - g H1H2 h` and its
//! iterative factorization ([`factorization`]), bmo estimators ([`norms`]) and
//! commutator experiments ([`commutator`]).

pub mod atoms;
pub mod commutator;
pub mod error;
pub mod factorization;
pub mod grid;
pub mod norms;
pub mod patch;
pub mod singular;
pub mod symbols;

pub use atoms::{Atom, AtomicDecomposition};
pub use error::{Error, Result};
pub use factorization::{Factorization, FactorizeOptions};
pub use grid::{Grid2D, GridFunction, Interval, Rect};
pub use norms::RectFamily;
