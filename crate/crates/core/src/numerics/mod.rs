//! Shared numerical plumbing: quadrature, finite differences, enumeration of
//! product spaces, small dense linear algebra and seeded random streams.

pub mod diff;
pub mod enumerate;
pub mod linalg;
pub mod quadrature;
pub mod sampling;

pub use diff::{central_diff, fd_derivative, gradient, hessian, FdEstimate};
pub use enumerate::{
    enumerate, space_cap, space_size, ProductSpace, DEFAULT_MAX_SPACE, MAX_SPACE_ENV,
};
pub use quadrature::{integrate, integrate_box, tail_exponent, QuadOptions, QuadratureResult};
pub use sampling::{sample_family, stream};
