//! Exact entropy inequalities for sums and products over prime fields and ℚ.
//!
//! The crate is organized bottom-up: [`field`] provides canonical scalars,
//! [`dist`] exact laws and their entropies, [`query`] laws of polynomial
//! expressions in independent variables, and the remaining modules build the
//! combinatorial and experimental machinery on top.

pub mod dist;
pub mod error;
pub mod expr;
pub mod extractor;
pub mod field;
pub mod flat;
pub mod incidence;
pub mod numeric;
pub mod progression;
pub mod query;
pub mod search;
pub mod seeding;
pub mod verifier;

pub use dist::{Dist, EntropyValue, JointLaw, Law};
pub use error::{Error, ErrorKind, Result};
pub use expr::{parse_query, Expr, QueryAst, QueryKind};
pub use field::{FieldSpec, Scalar};
pub use query::{entropy_of, pushforward, ruzsa_distance, Bindings, Budget, EntropyKind};
pub use search::{Objective32, Objective64};

/// Exact rational masses.
pub type Rational = num_rational::BigRational;
