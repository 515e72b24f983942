use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type used by every numerical routine in the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Natural log of the gamma function.
    fn lgamma(self) -> Self {
        Self::c(statrs::function::gamma::ln_gamma(self.f64()))
    }

    fn tgamma(self) -> Self {
        Self::c(statrs::function::gamma::gamma(self.f64()))
    }

    /// Machine epsilon scaled for tolerance defaults.
    #[inline]
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Binomial coefficient C(n, k) in the scalar type.
pub fn binomial_coeff<S: Real>(n: usize, k: usize) -> S {
    if k > n {
        return S::zero();
    }
    let k = k.min(n - k);
    let mut acc = S::one();
    for i in 0..k {
        acc = acc * S::from_usize_lossy(n - i) / S::from_usize_lossy(i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial_coeff::<f64>(4, 2), 6.0);
        assert_eq!(binomial_coeff::<f64>(6, 0), 1.0);
        assert_eq!(binomial_coeff::<f64>(3, 5), 0.0);
        assert_eq!(binomial_coeff::<f32>(10, 3), 120.0);
    }

    #[test]
    fn ln_gamma_matches_factorial() {
        let v: f64 = Real::lgamma(5.0);
        assert!((v - 24f64.ln()).abs() < 1e-12);
        let g: f32 = Real::tgamma(0.5f32);
        assert!((g - std::f32::consts::PI.sqrt()).abs() < 1e-5);
    }
}
