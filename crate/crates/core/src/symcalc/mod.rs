//! Exact algebra for localization: rational scalars, linear torus weights, and rational functions
//! stored as products of linear forms.

mod factored;
mod scalar;
mod weight;

pub use factored::{FactoredRat, LimitU0};
pub use scalar::Scalar;
pub use weight::WeightForm;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("valuation of the zero function is undefined")]
    ZeroValuation,
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid opaque symbol name {0:?}")]
    BadSymbol(String),
    #[error("cannot parse factored form {0:?}")]
    Parse(String),
}
