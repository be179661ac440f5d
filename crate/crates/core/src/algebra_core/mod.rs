//! Presentations of the twisted algebras and an exact normal-form engine.
//!
//! Conventions: `z2 z1 = rho z1 z2` (so `theta_12 = theta`), the starred
//! exchange `z_i z_j* = rho_ij z_j* z_i`, and for `m > 2` every pair `i < j`
//! uses the same `theta`. The top-index pair `z_m z_m*` is eliminated by the
//! radius relation; `u y -> 1 - u` eliminates mixed `u`/`y` powers.

mod element;
mod monomial;
mod parser;
mod presentation;

use thiserror::Error;

pub use element::{hom_check, parse_element, AlgebraElement, GeneratorMap};
pub use monomial::Monomial;
pub use parser::{parse_expr, Expr, ParseError};
pub use presentation::{Family, Generator, PhaseConvention, Presentation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown generator '{name}' for {presentation} at position {pos}")]
    UnknownGenerator { name: String, presentation: String, pos: usize },
    #[error("presentation mismatch: {0} vs {1}")]
    PresentationMismatch(String, String),
    #[error("generator '{0}' is not mapped")]
    Unmapped(String),
    #[error("negative power of '{name}' at position {pos} outside a torus presentation")]
    NegativePower { name: String, pos: usize },
    #[error("invalid presentation: {0}")]
    InvalidPresentation(String),
    #[error("monomial does not fit {0}")]
    InvalidMonomial(String),
}
