use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Central-difference estimate with a Richardson consistency diagnostic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdEstimate<S> {
    /// Richardson-extrapolated value from steps `h` and `h/2`; the `h/4`
    /// step only feeds the consistency ratio, which keeps rounding noise low.
    pub value: S,
    /// Plain central difference at step `h`.
    pub coarse: S,
    /// `(D(h) - D(h/2)) / (D(h/2) - D(h/4))`; about 4 for smooth `g`.
    /// `None` when both differences sit below the rounding floor.
    pub ratio: Option<S>,
    pub consistent: bool,
}

/// Accepted band around the ideal ratio of 4.
pub const RICHARDSON_BAND: f64 = 0.2;

fn central<S: Real, G: FnMut(S) -> S>(g: &mut G, theta: S, order: u8, h: S) -> S {
    match order {
        1 => (g(theta + h) - g(theta - h)) / (S::c(2.0) * h),
        _ => (g(theta + h) - S::c(2.0) * g(theta) + g(theta - h)) / (h * h),
    }
}

/// Central finite difference of order 1 or 2 at `theta` with base step `h`.
///
/// Fails with `NoisyFunction` when the three-step ladder is not in the
/// asymptotic regime and the differences exceed the rounding floor.
pub fn fd_derivative<S: Real, G: FnMut(S) -> S>(
    mut g: G,
    theta: S,
    order: u8,
    h: S,
) -> Result<FdEstimate<S>> {
    if order != 1 && order != 2 {
        return Err(Error::Unsupported(format!("derivative order {order}")));
    }
    let two = S::c(2.0);
    let d1 = central(&mut g, theta, order, h);
    let d2 = central(&mut g, theta, order, h / two);
    let d4 = central(&mut g, theta, order, h / (two * two));
    let value = d2 + (d2 - d1) / S::c(3.0);
    let gt = g(theta).abs();
    let step = h / (two * two);
    let floor = S::c(64.0) * S::epsilon() * (gt + S::one()) / step.powi(order as i32)
        + S::c(1e-12) * value.abs();
    let a = d1 - d2;
    let b = d2 - d4;
    if a.abs() <= floor && b.abs() <= floor {
        return Ok(FdEstimate {
            value,
            coarse: d1,
            ratio: None,
            consistent: true,
        });
    }
    let ratio = if b == S::zero() { S::infinity() } else { a / b };
    let band = S::c(4.0 * RICHARDSON_BAND);
    let consistent = (ratio - S::c(4.0)).abs() <= band;
    if !consistent {
        return Err(Error::NoisyFunction { ratio: ratio.f64() });
    }
    Ok(FdEstimate {
        value,
        coarse: d1,
        ratio: Some(ratio),
        consistent,
    })
}

/// Plain central difference without diagnostics, for optimizer gradients.
pub fn central_diff<S: Real, G: FnMut(S) -> S>(mut g: G, theta: S, h: S) -> S {
    central(&mut g, theta, 1, h)
}

/// Central-difference gradient of `g` at `x`, one step per coordinate.
pub fn gradient<S: Real, G: FnMut(&[S]) -> S>(mut g: G, x: &[S], steps: &[S]) -> Vec<S> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = steps[i];
            p[i] = x[i] + h;
            let up = g(&p);
            p[i] = x[i] - h;
            let dn = g(&p);
            p[i] = x[i];
            (up - dn) / (S::c(2.0) * h)
        })
        .collect()
}

/// Central-difference Hessian of `g` at `x`.
pub fn hessian<S: Real, G: FnMut(&[S]) -> S>(mut g: G, x: &[S], steps: &[S]) -> Vec<Vec<S>> {
    let k = x.len();
    let mut p = x.to_vec();
    let g0 = g(&p);
    let mut hmat = vec![vec![S::zero(); k]; k];
    for i in 0..k {
        let hi = steps[i];
        p[i] = x[i] + hi;
        let up = g(&p);
        p[i] = x[i] - hi;
        let dn = g(&p);
        p[i] = x[i];
        hmat[i][i] = (up - S::c(2.0) * g0 + dn) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: S, sj: S| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = g(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let one = S::one();
            let v = (eval(one, one) - eval(one, -one) - eval(-one, one) + eval(-one, -one))
                / (S::c(4.0) * hi * hj);
            hmat[i][j] = v;
            hmat[j][i] = v;
        }
    }
    hmat
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_one() {
        let d = fd_derivative(|t: f64| t * t, 1.0, 1, 1e-3).unwrap();
        assert!((d.value - 2.0).abs() < 1e-8);
        assert!(d.consistent);
    }

    #[test]
    fn ratio_near_four_for_smooth_function() {
        let d = fd_derivative(|t: f64| t.sin(), 0.3, 1, 0.05).unwrap();
        let r = d.ratio.unwrap();
        assert!((r - 4.0).abs() < 0.8, "ratio {r}");
        assert!((d.value - 0.3f64.cos()).abs() < 1e-7);
    }

    #[test]
    fn second_order() {
        let d = fd_derivative(|t: f64| t.exp(), 0.0, 2, 1e-2).unwrap();
        assert!((d.value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn noisy_function_rejected() {
        let mut k = 0u32;
        let g = move |t: f64| {
            k = k.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            t + 1e-3 * ((k >> 16) as f64 / 65_536.0)
        };
        assert!(matches!(
            fd_derivative(g, 0.0, 1, 1e-4),
            Err(Error::NoisyFunction { .. })
        ));
    }

    #[test]
    fn gradient_and_hessian_of_quadratic() {
        let g = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1] * x[1];
        let gr = gradient(g, &[1.0, 2.0], &[1e-5, 1e-5]);
        assert!((gr[0] - 8.0).abs() < 1e-6 && (gr[1] + 7.0).abs() < 1e-6);
        let h = hessian(g, &[1.0, 2.0], &[1e-3, 1e-3]);
        assert!(
            (h[0][0] - 6.0).abs() < 1e-5
                && (h[0][1] - 1.0).abs() < 1e-5
                && (h[1][1] + 4.0).abs() < 1e-5
        );
    }
}
