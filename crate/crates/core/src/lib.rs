//! Exact symbolic toolkit for orbifold Gromov-Witten localization on cyclic-quotient conifold
//! flops: sector arithmetic, dimension and admissibility bookkeeping, torus-fixed graph sums with
//! `U`-order vanishing analysis, and flop-side matching of contributions.
//!
//! The algebra kernel ([`symcalc`], [`orbact`]) is generic over any exact [`Scalar`]; the
//! geometry layers work over [`Q`].

pub mod degen;
pub mod dimension;
pub mod localize;
pub mod localmodel;
pub mod orbact;
pub mod symcalc;

pub use symcalc::{FactoredRat, LimitU0, Scalar, SymError, WeightForm};

/// Arbitrary-precision rationals, the default scalar.
pub type Q = num_rational::BigRational;
/// Linear weights over [`Q`].
pub type Weight = WeightForm<Q>;
/// Factored rational functions over [`Q`].
pub type Factored = FactoredRat<Q>;
/// Fixed-width variant of [`Factored`] for small, overflow-free computations.
pub type Factored64 = FactoredRat<num_rational::Ratio<i64>>;
