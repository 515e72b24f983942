//! Generalized sufficiency, deformed Rao-Blackwell estimation and
//! generalized Cramér-Rao bounds for power-law families.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod deformed;
pub mod error;
pub mod estimators;
pub mod families;
pub mod likelihoods;
pub mod numerics;
pub mod raoblackwell;
pub mod scalar;
pub mod sufficiency;

pub use bounds::BoundReport;
pub use deformed::DeformedJoint;
pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatingProblem};
pub use families::{FamilyKind, FamilySpec, ParamBox, Support, ThetaPoint};
pub use likelihoods::{EmpiricalPmf, LikelihoodKind};
pub use raoblackwell::{EstimatorFn, RBReport};
pub use scalar::Real;
pub use sufficiency::{StatisticFn, Verdict};

/// `f64` instantiations.
pub type Family = FamilySpec<f64>;
pub type Theta = ThetaPoint<f64>;
