//! Symbolic and numeric tools for theta-deformed spheres and noncommutative tori.
//!
//! The exact layer ([`phase_ring`], [`algebra_core`], [`matrix_ops`]) is generic
//! over an exact rational coefficient type; the numeric layer ([`linalg`],
//! [`torus_rep`], [`field_model`], [`clutching`]) is generic over a float type
//! implementing [`linalg::Real`]. The aliases below fix the common choices.

pub mod algebra_core;
pub mod clutching;
pub mod field_model;
pub mod linalg;
pub mod matrix_ops;
pub mod phase_ring;
pub mod report;
pub mod tolerances;
pub mod torus_rep;

pub use num_complex::Complex;

/// Default exact coefficient field.
pub type Rational = num_rational::BigRational;
pub type Phase = phase_ring::PhaseScalar<Rational>;
pub type Element = algebra_core::AlgebraElement<Rational>;
pub type Matrix = matrix_ops::AlgMatrix<Rational>;

pub type ComplexMatrix = linalg::CMat<f64>;
pub type Field = field_model::FieldElement<f64>;
pub type Rep = torus_rep::Rep<f64>;
pub type Datum = clutching::ClutchingDatum<f64>;

pub use algebra_core::{Monomial, Presentation};
pub use clutching::ModuleClass;
pub use phase_ring::{Theta, ThetaKind};
pub use report::{Check, Report};
