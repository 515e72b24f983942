//! Adaptive Gauss-Kronrod 10/21 quadrature with an exponential substitution
//! for unbounded ranges, and a nested tensor rule for boxes of dimension up to 3.

// Nodes and weights as tabulated.
#![allow(clippy::excessive_precision)]

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_868_099,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Largest `y` in the tail map `t = e^y − 1`.
const TAIL_Y_MAX: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult<S> {
    pub value: S,
    pub error_estimate: S,
    pub subdivisions: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    pub max_subdivisions: usize,
    /// Location and width used by the tail map and by the initial
    /// breakpoints on long finite ranges.
    pub center: S,
    pub scale: S,
}

impl<S: Real> Default for QuadOptions<S> {
    fn default() -> Self {
        Self {
            rel_tol: S::c(1e-11),
            abs_tol: S::c(1e-14),
            max_subdivisions: 2000,
            center: S::zero(),
            scale: S::one(),
        }
    }
}

impl<S: Real> QuadOptions<S> {
    pub fn with_rel_tol(mut self, tol: S) -> Self {
        self.rel_tol = tol;
        self
    }

    pub fn with_abs_tol(mut self, tol: S) -> Self {
        self.abs_tol = tol;
        self
    }

    pub fn centered(mut self, center: S, scale: S) -> Self {
        self.center = center;
        self.scale = scale;
        self
    }
}

struct Panel<S> {
    a: S,
    b: S,
    value: S,
    err: S,
}

fn gk21<S: Real, F: FnMut(S) -> S>(f: &mut F, a: S, b: S) -> (S, S) {
    let half = (b - a) * S::c(0.5);
    let mid = (a + b) * S::c(0.5);
    let fc = f(mid);
    let mut kron = fc * S::c(WGK[10]);
    let mut gauss = S::zero();
    for j in 0..10 {
        let dx = half * S::c(XGK[j]);
        let f1 = f(mid - dx);
        let f2 = f(mid + dx);
        let s = f1 + f2;
        kron = kron + s * S::c(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + s * S::c(WG[j / 2]);
        }
    }
    let value = kron * half;
    let err = ((kron - gauss) * half).abs();
    (value, err)
}

/// Global adaptive integration of `f` over the finite interval `[a, b]`,
/// starting from the given interior breakpoints.
fn adaptive<S: Real, F: FnMut(S) -> S>(
    f: &mut F,
    breaks: &[S],
    opts: &QuadOptions<S>,
) -> Result<QuadratureResult<S>> {
    let mut panels: Vec<Panel<S>> = Vec::with_capacity(64);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, err) = gk21(f, w[0], w[1]);
            panels.push(Panel {
                a: w[0],
                b: w[1],
                value,
                err,
            });
        }
    }
    let mut subdivisions = panels.len();
    loop {
        let total: S = panels.iter().map(|p| p.value).sum();
        let err: S = panels.iter().map(|p| p.err).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::DivergentIntegral(format!(
                "non-finite integrand contribution (value {})",
                total.f64()
            )));
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            return Ok(QuadratureResult {
                value: total,
                error_estimate: err,
                subdivisions,
                converged: true,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::MaxSubdivisions {
                subdivisions,
                error_estimate: err.f64(),
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, S::neg_infinity()), |acc, (i, p)| {
                if p.err > acc.1 {
                    (i, p.err)
                } else {
                    acc
                }
            });
        let p = panels.swap_remove(idx);
        let m = (p.a + p.b) * S::c(0.5);
        if !(m > p.a && m < p.b) {
            // Panel cannot be split further in this precision.
            return Err(Error::MaxSubdivisions {
                subdivisions,
                error_estimate: err.f64(),
            });
        }
        let (v1, e1) = gk21(f, p.a, m);
        let (v2, e2) = gk21(f, m, p.b);
        panels.push(Panel {
            a: p.a,
            b: m,
            value: v1,
            err: e1,
        });
        panels.push(Panel {
            a: m,
            b: p.b,
            value: v2,
            err: e2,
        });
        subdivisions += 1;
    }
}

fn uniform_breaks<S: Real>(a: S, b: S, pieces: usize) -> Vec<S> {
    let step = (b - a) / S::from_usize_lossy(pieces);
    let mut v: Vec<S> = (0..pieces)
        .map(|i| a + step * S::from_usize_lossy(i))
        .collect();
    v.push(b);
    v
}

/// Breakpoints for a finite range: geometric rings around `center` so a
/// narrow peak inside a wide truncation box is not missed.
fn finite_breaks<S: Real>(a: S, b: S, center: S, scale: S) -> Vec<S> {
    let mut pts = vec![a, b];
    if (b - a) > S::c(20.0) * scale {
        let mut r = scale;
        while r < (b - a) {
            for c in [center - r, center + r] {
                if c > a && c < b {
                    pts.push(c);
                }
            }
            r = r * S::c(10.0);
        }
        if center > a && center < b {
            pts.push(center);
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    pts.dedup();
    if pts.len() == 2 {
        return uniform_breaks(a, b, 4);
    }
    pts
}

/// One-dimensional integral over `[lo, hi]`; either end may be infinite.
pub fn integrate<S: Real, F: FnMut(S) -> S>(
    mut f: F,
    lo: S,
    hi: S,
    opts: &QuadOptions<S>,
) -> Result<QuadratureResult<S>> {
    if !(hi > lo) {
        return Ok(QuadratureResult {
            value: S::zero(),
            error_estimate: S::zero(),
            subdivisions: 0,
            converged: true,
        });
    }
    let s = opts.scale;
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => adaptive(&mut f, &finite_breaks(lo, hi, opts.center, s), opts),
        (false, false) => {
            let c = opts.center;
            let mut g = |v: S| {
                let (t, jac) = exp_map(v.abs());
                if jac == S::zero() {
                    return S::zero();
                }
                let x = if v < S::zero() { c - s * t } else { c + s * t };
                tail_safe(f(x), s * jac)
            };
            adaptive(&mut g, &uniform_breaks(-S::one(), S::one(), 8), opts)
        }
        (true, false) => {
            let mut g = |v: S| {
                let (t, jac) = exp_map(v);
                if jac == S::zero() {
                    return S::zero();
                }
                tail_safe(f(lo + s * t), s * jac)
            };
            adaptive(&mut g, &uniform_breaks(S::zero(), S::one(), 4), opts)
        }
        (false, true) => {
            let mut g = |v: S| {
                let (t, jac) = exp_map(v);
                if jac == S::zero() {
                    return S::zero();
                }
                tail_safe(f(hi - s * t), s * jac)
            };
            adaptive(&mut g, &uniform_breaks(S::zero(), S::one(), 4), opts)
        }
    }
}

/// `t = exp(v/(1−v)) − 1` on `[0, 1)` and its derivative. A power-law tail
/// `t^{-p}` becomes an exponential `e^{-(p−1)y}` in `y = v/(1−v)`, which the
/// Kronrod rule resolves without endpoint singularities. Beyond
/// `y = TAIL_Y_MAX` (t ≈ 1e65) the map returns a zero Jacobian so that
/// polynomial statistics never overflow; the neglected mass of an `x^{-p}`
/// tail is below `e^{-150(p−1)}`.
#[inline]
fn exp_map<S: Real>(v: S) -> (S, S) {
    let w = S::one() - v;
    let y = v / w;
    if !(y <= S::c(TAIL_Y_MAX)) {
        return (S::zero(), S::zero());
    }
    let e = y.exp();
    (e - S::one(), e / (w * w))
}

#[inline]
fn tail_safe<S: Real>(fx: S, jac: S) -> S {
    if fx == S::zero() {
        S::zero()
    } else {
        fx * jac
    }
}

/// Integral over a box of dimension 1 to 3 by nesting the one-dimensional
/// rule. Inner integrals reuse the same options.
pub fn integrate_box<S: Real, F: Fn(&[S]) -> S>(
    f: F,
    bounds: &[(S, S)],
    opts: &[QuadOptions<S>],
) -> Result<QuadratureResult<S>> {
    let dim = bounds.len();
    if dim == 0 || dim > 3 {
        return Err(Error::Unsupported(format!(
            "box quadrature in dimension {dim}"
        )));
    }
    if opts.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: opts.len(),
        });
    }
    let mut point = vec![S::zero(); dim];
    let mut state = NestState {
        worst_rel: S::zero(),
        failure: None,
        evaluations: 0,
    };
    let out = nested(&f, bounds, opts, 0, S::one(), &mut point, &mut state)?;
    if let Some(e) = state.failure {
        return Err(e);
    }
    let inner_err = out.value.abs() * state.worst_rel;
    Ok(QuadratureResult {
        value: out.value,
        error_estimate: out.error_estimate + inner_err,
        subdivisions: out.subdivisions,
        converged: out.converged,
    })
}

struct NestState<S> {
    worst_rel: S,
    failure: Option<Error>,
    evaluations: usize,
}

/// `damp` multiplies the absolute tolerance of this level. Each outer
/// coordinate `x` contributes `s/(s + |x − c|)`, which offsets the growth of
/// the outer tail Jacobian so far slices are resolved in proportion to their
/// weight in the total.
fn nested<S: Real, F: Fn(&[S]) -> S>(
    f: &F,
    bounds: &[(S, S)],
    opts: &[QuadOptions<S>],
    d: usize,
    damp: S,
    point: &mut [S],
    state: &mut NestState<S>,
) -> Result<QuadratureResult<S>> {
    let (lo, hi) = bounds[d];
    let mut o = opts[d];
    o.abs_tol = o.abs_tol * damp;
    if d + 1 == bounds.len() {
        let r = integrate(
            |x| {
                point[d] = x;
                state.evaluations += 1;
                f(point)
            },
            lo,
            hi,
            &o,
        )?;
        return Ok(r);
    }
    integrate(
        |x| {
            point[d] = x;
            let w = o.scale / (o.scale + (x - o.center).abs());
            match nested(f, bounds, opts, d + 1, damp * w, point, state) {
                Ok(r) => {
                    let abs_floor = opts[d + 1].abs_tol * damp * w;
                    if r.value != S::zero() && r.error_estimate > abs_floor {
                        let rel = r.error_estimate / r.value.abs();
                        if rel > state.worst_rel {
                            state.worst_rel = rel;
                        }
                    }
                    r.value
                }
                Err(e) => {
                    if state.failure.is_none() {
                        state.failure = Some(e);
                    }
                    S::zero()
                }
            }
        },
        lo,
        hi,
        &o,
    )
}

/// Local power-law decay exponent `p` of `|g(x)| ~ |x|^{-p}` estimated from
/// two far points in the given direction. Returns `None` when `g` has
/// already underflowed (faster than any power).
pub fn tail_exponent<S: Real, F: Fn(S) -> S>(g: F, center: S, scale: S, direction: S) -> Option<S> {
    let r1 = scale * S::c(1e6);
    let r2 = scale * S::c(1e7);
    let g1 = g(center + direction * r1).abs();
    let g2 = g(center + direction * r2).abs();
    if g1 == S::zero() || g2 == S::zero() || !g1.is_finite() || !g2.is_finite() {
        return None;
    }
    Some(-(g2.ln() - g1.ln()) / (r2 / r1).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> QuadOptions<f64> {
        QuadOptions::default()
    }

    #[test]
    fn polynomial_exact_on_unit_interval() {
        let r = integrate(|x: f64| x, 0.0, 1.0, &opts()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!(r.converged);
        // Kronrod 21 integrates degree 31 exactly
        let r = integrate(|x: f64| x.powi(30), -1.0, 1.0, &opts()).unwrap();
        assert!((r.value - 2.0 / 31.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_over_real_line() {
        let r = integrate(
            |x: f64| (-0.5 * x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &opts(),
        )
        .unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn half_lines() {
        let r = integrate(|x: f64| (-x).exp(), 0.0, f64::INFINITY, &opts()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
        let r = integrate(|x: f64| x.exp(), f64::NEG_INFINITY, 0.0, &opts()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn cauchy_tail_handled_by_substitution() {
        let r = integrate(
            |x: f64| 1.0 / (1.0 + x * x),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &opts(),
        )
        .unwrap();
        assert!((r.value - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn box_of_gaussians() {
        let inf = f64::INFINITY;
        let b = [(-inf, inf), (-inf, inf), (-inf, inf)];
        let o = [QuadOptions::default().with_rel_tol(1e-9); 3];
        let r = integrate_box(
            |x: &[f64]| (-0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(),
            &b,
            &o,
        )
        .unwrap();
        let exact = (2.0 * std::f64::consts::PI).powf(1.5);
        assert!((r.value / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn wide_finite_box_finds_narrow_peak() {
        let r = integrate(
            |x: f64| (-0.5 * (x - 3.0).powi(2)).exp(),
            -1e4,
            1e4,
            &opts().centered(3.0, 1.0),
        )
        .unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn tail_exponent_of_power_law() {
        let p = tail_exponent(|x: f64| (1.0 + x * x).powf(-1.5), 0.0, 1.0, 1.0).unwrap();
        assert!((p - 3.0).abs() < 1e-6);
        assert!(tail_exponent(|x: f64| (-x * x).exp(), 0.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn single_precision_scalar() {
        let o = QuadOptions::<f32>::default()
            .with_rel_tol(1e-5)
            .with_abs_tol(1e-7);
        let r = integrate(|x: f32| x * x, 0.0, 3.0, &o).unwrap();
        assert!((r.value - 9.0).abs() < 1e-4);
    }
}
