//! Estimating equations: multi-start maximization of any likelihood, the
//! binomial Cauchy-Schwarz stationarity polynomial, Student Jones estimates
//! from sufficient statistics and a contamination demo.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{
    binomial, normal, student_as_m_alpha, student_constants, FamilySpec, ParamBox, ThetaPoint,
};
use crate::likelihoods::{cauchy_schwarz_likelihood, EmpiricalPmf, LikelihoodKind};
use crate::numerics::{hessian, stream};
use crate::scalar::Real;

/// Starts per solve: the initial point plus Latin-hypercube points.
pub const DEFAULT_STARTS: usize = 5;
/// Distance to the search-box edge, relative to its width, below which a
/// maximizer is treated as a boundary point.
const EDGE_TOL: f64 = 1e-6;

/// Settings shared by every solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerOptions<S> {
    pub max_iter: usize,
    pub grad_tol: S,
    pub starts: usize,
    pub seed: u64,
}

impl<S: Real> Default for OptimizerOptions<S> {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: S::c(1e-6),
            starts: DEFAULT_STARTS,
            seed: 0,
        }
    }
}

/// One local solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry<S> {
    pub start: Vec<S>,
    pub end: Vec<S>,
    pub objective: S,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum<S> {
    pub theta: Vec<S>,
    pub objective: S,
    /// Euclidean norm of the extrapolated FD gradient at `theta`.
    pub grad_norm: S,
    pub trace: Vec<TraceEntry<S>>,
}

/// `count` Latin-hypercube points in the box.
pub fn lhs_points<S: Real>(bx: &ParamBox<S>, count: usize, seed: u64) -> Vec<Vec<S>> {
    let mut pts = vec![Vec::with_capacity(bx.dim()); count];
    for (d, &(lo, hi)) in bx.bounds.iter().enumerate() {
        let mut rng = stream(seed, "lhs", d as u64);
        let mut cells: Vec<usize> = (0..count).collect();
        cells.shuffle(&mut rng);
        for (p, &c) in pts.iter_mut().zip(&cells) {
            let u: f64 = rng.random();
            p.push(lo + (hi - lo) * S::c((c as f64 + u) / count as f64));
        }
    }
    pts
}

/// Per-coordinate scale for difference steps.
fn scales<S: Real>(x: &[S], bx: &ParamBox<S>) -> Vec<S> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| v.abs().max(S::c(1e-3) * bx.width(i)))
        .collect()
}

fn negative_definite<S: Real>(h: &[Vec<S>]) -> bool {
    let k = h.len();
    let m = DMatrix::from_fn(k, k, |i, j| -h[i][j].f64());
    m.iter().all(|v| v.is_finite()) && m.cholesky().is_some()
}

/// Golden-section search on the bracket found by walking uphill from `x0`.
fn golden<S: Real>(f: &impl Fn(&[S]) -> S, bx: &ParamBox<S>, x0: S, max_iter: usize) -> (S, usize) {
    let (lo, hi) = bx.bounds[0];
    let width = hi - lo;
    let inner_lo = lo + S::c(1e-12) * width;
    let inner_hi = hi - S::c(1e-12) * width;
    let g = |t: S| f(&[t]);
    let mut step = S::c(1e-2) * width;
    let (mut a, mut b);
    let f0 = g(x0);
    let dir = if g((x0 + step).min(inner_hi)) >= f0 {
        S::one()
    } else {
        -S::one()
    };
    let mut prev = x0;
    let mut cur = x0;
    let mut fcur = f0;
    let mut iters = 0;
    loop {
        iters += 1;
        let next = (cur + dir * step).max(inner_lo).min(inner_hi);
        let fnext = g(next);
        if fnext < fcur || next == cur || iters > max_iter {
            a = prev.min(next);
            b = prev.max(next);
            break;
        }
        prev = cur;
        cur = next;
        fcur = fnext;
        step = step * S::c(2.0);
    }
    let r = S::c(0.5) * (S::c(5.0).sqrt() - S::one());
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    while b - a > S::c(1e-12) * width && iters < max_iter {
        iters += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    (if fc >= fd { c } else { d }, iters)
}

/// Nelder-Mead simplex maximization.
fn nelder_mead<S: Real>(
    f: &impl Fn(&[S]) -> S,
    bx: &ParamBox<S>,
    x0: &[S],
    max_iter: usize,
) -> (Vec<S>, usize) {
    let k = x0.len();
    let mut simplex = vec![x0.to_vec()];
    for i in 0..k {
        let mut v = x0.to_vec();
        let h = S::c(0.05) * bx.width(i);
        v[i] = if bx.contains(&{
            let mut t = v.clone();
            t[i] = t[i] + h;
            t
        }) {
            v[i] + h
        } else {
            v[i] - h
        };
        simplex.push(v);
    }
    let mut vals: Vec<S> = simplex.iter().map(|v| f(v)).collect();
    let half = S::c(0.5);
    let two = S::c(2.0);
    let mut iters = 0;
    while iters < max_iter {
        iters += 1;
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&i, &j| {
            vals[j]
                .partial_cmp(&vals[i])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[0] - vals[k];
        let size = (1..=k)
            .flat_map(|j| (0..k).map(move |i| (j, i)))
            .map(|(j, i)| (simplex[j][i] - simplex[0][i]).abs() / bx.width(i))
            .fold(S::zero(), S::max);
        if (spread.abs() <= S::c(1e-15) * (S::one() + vals[0].abs())
            || !spread.is_finite() && vals[0].is_finite() && size < S::c(1e-13))
            && size < S::c(1e-11)
        {
            break;
        }
        let centroid: Vec<S> = (0..k)
            .map(|i| simplex[..k].iter().map(|v| v[i]).sum::<S>() / S::from_usize_lossy(k))
            .collect();
        let along = |t: S| -> Vec<S> {
            (0..k)
                .map(|i| centroid[i] + t * (simplex[k][i] - centroid[i]))
                .collect()
        };
        let xr = along(-S::one());
        let fr = f(&xr);
        if fr > vals[0] {
            let xe = along(-two);
            let fe = f(&xe);
            if fe > fr {
                simplex[k] = xe;
                vals[k] = fe;
            } else {
                simplex[k] = xr;
                vals[k] = fr;
            }
        } else if fr > vals[k - 1] {
            simplex[k] = xr;
            vals[k] = fr;
        } else {
            let xc = if fr > vals[k] {
                along(-half)
            } else {
                along(half)
            };
            let fc = f(&xc);
            if fc > vals[k].max(fr) {
                simplex[k] = xc;
                vals[k] = fc;
            } else {
                for j in 1..=k {
                    simplex[j] = (0..k)
                        .map(|i| simplex[0][i] + half * (simplex[j][i] - simplex[0][i]))
                        .collect();
                    vals[j] = f(&simplex[j]);
                }
            }
        }
    }
    let best = (0..=k).fold(0, |b, j| if vals[j] > vals[b] { j } else { b });
    (simplex[best].clone(), iters)
}

/// Central-difference gradient extrapolated from steps `h` and `h/2`,
/// `h = 1e-3` of the local scale.
fn fine_gradient<S: Real>(f: &impl Fn(&[S]) -> S, x: &[S], scale: &[S]) -> Vec<S> {
    let central = |i: usize, h: S| {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[i] = up[i] + h;
        down[i] = down[i] - h;
        (f(&up) - f(&down)) / (h + h)
    };
    (0..x.len())
        .map(|i| {
            let h = S::c(1e-3) * scale[i];
            let (d1, d2) = (central(i, h), central(i, h * S::c(0.5)));
            d2 + (d2 - d1) / S::c(3.0)
        })
        .collect()
}

fn norm<S: Real>(v: &[S]) -> S {
    v.iter().map(|&a| a * a).sum::<S>().sqrt()
}

/// Damped Newton steps on [`fine_gradient`] with an FD Hessian. A step is
/// taken when the gradient shrinks and the objective does not drop beyond
/// rounding.
fn polish<S: Real>(f: &impl Fn(&[S]) -> S, bx: &ParamBox<S>, x0: Vec<S>) -> Vec<S> {
    let k = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = fine_gradient(f, &x, &scales(&x, bx));
    for _ in 0..30 {
        let s = scales(&x, bx);
        let h = hessian(
            |v| f(v),
            &x,
            &s.iter().map(|&v| v * S::c(1e-4)).collect::<Vec<_>>(),
        );
        if !negative_definite(&h) || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let hm = DMatrix::from_fn(k, k, |i, j| h[i][j].f64());
        let gv = nalgebra::DVector::from_iterator(k, g.iter().map(|v| -v.f64()));
        let Some(d) = hm.lu().solve(&gv) else { break };
        let gnorm = norm(&g);
        let mut t = S::one();
        let mut accepted = None;
        for _ in 0..12 {
            let xn: Vec<S> = (0..k).map(|i| x[i] + t * S::c(d[i])).collect();
            let fxn = if bx.contains(&xn) {
                f(&xn)
            } else {
                S::neg_infinity()
            };
            if fxn.is_finite() && fxn >= fx - S::c(1e-12) * (S::one() + fx.abs()) {
                let gn = fine_gradient(f, &xn, &scales(&xn, bx));
                if norm(&gn) < gnorm || fxn > fx {
                    accepted = Some((xn, fxn, gn));
                    break;
                }
            }
            t = t * S::c(0.5);
        }
        let Some((xn, fxn, gn)) = accepted else { break };
        let tiny = (0..k).all(|i| (xn[i] - x[i]).abs() <= S::c(1e-14) * s[i]);
        x = xn;
        fx = fxn;
        g = gn;
        if tiny {
            break;
        }
    }
    x
}

/// Multi-start maximization of `f` over the open box.
///
/// Fails with `Divergence` when the objective is not finite at `init` or the
/// gradient at the best point exceeds `grad_tol`, and with `NoInteriorMax`
/// when the best point sits on the box edge or its Hessian is not negative
/// definite.
pub fn maximize<S: Real>(
    f: impl Fn(&[S]) -> S,
    bx: &ParamBox<S>,
    init: &[S],
    opts: &OptimizerOptions<S>,
) -> Result<Optimum<S>> {
    let g = |x: &[S]| {
        if !bx.contains(x) {
            return S::neg_infinity();
        }
        let v = f(x);
        if v.is_nan() {
            S::neg_infinity()
        } else {
            v
        }
    };
    if !g(init).is_finite() {
        return Err(Error::Divergence(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut starts = vec![init.to_vec()];
    starts.extend(lhs_points(bx, opts.starts.saturating_sub(1), opts.seed));
    let mut trace = Vec::new();
    for s in starts {
        if !g(&s).is_finite() {
            trace.push(TraceEntry {
                start: s.clone(),
                end: s,
                objective: S::neg_infinity(),
                iterations: 0,
            });
            continue;
        }
        let (x, iterations) = if s.len() == 1 {
            let (t, it) = golden(&g, bx, s[0], opts.max_iter);
            (vec![t], it)
        } else {
            nelder_mead(&g, bx, &s, opts.max_iter)
        };
        let x = polish(&g, bx, x);
        trace.push(TraceEntry {
            start: s,
            objective: g(&x),
            end: x,
            iterations,
        });
    }
    let best = trace
        .iter()
        .filter(|t| t.objective.is_finite())
        .fold(None::<&TraceEntry<S>>, |b, t| match b {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .ok_or_else(|| Error::Divergence("objective is not finite at any start".into()))?;
    let theta = best.end.clone();
    let objective = best.objective;
    for (i, &(lo, hi)) in bx.bounds.iter().enumerate() {
        let d = (theta[i] - lo).min(hi - theta[i]);
        if d <= S::c(EDGE_TOL) * (hi - lo) {
            return Err(Error::NoInteriorMax);
        }
    }
    let s = scales(&theta, bx);
    if !negative_definite(&hessian(
        |v| g(v),
        &theta,
        &s.iter().map(|&v| v * S::c(1e-4)).collect::<Vec<_>>(),
    )) {
        return Err(Error::NoInteriorMax);
    }
    let grad_norm = norm(&fine_gradient(&g, &theta, &s));
    if !(grad_norm < opts.grad_tol) {
        return Err(Error::Divergence(format!(
            "gradient norm {} exceeds {}",
            grad_norm, opts.grad_tol
        )));
    }
    Ok(Optimum {
        theta,
        objective,
        grad_norm,
        trace,
    })
}

/// A likelihood to maximize over a family.
#[derive(Debug, Clone)]
pub struct EstimatingProblem<S: Real> {
    pub spec: FamilySpec<S>,
    pub likelihood: LikelihoodKind<S>,
    pub sample: Vec<S>,
    pub init: ThetaPoint<S>,
    /// Region searched; the family box unless narrowed.
    pub search_box: ParamBox<S>,
    pub options: OptimizerOptions<S>,
}

impl<S: Real> EstimatingProblem<S> {
    pub fn new(
        spec: &FamilySpec<S>,
        likelihood: LikelihoodKind<S>,
        sample: Vec<S>,
        init: ThetaPoint<S>,
    ) -> Self {
        Self {
            search_box: spec.param_box.clone(),
            spec: spec.clone(),
            likelihood,
            sample,
            init,
            options: OptimizerOptions::default(),
        }
    }

    /// Narrow the search to a box inside the family box.
    pub fn within(mut self, bx: ParamBox<S>) -> Self {
        self.search_box = bx;
        self
    }

    pub fn with_options(mut self, options: OptimizerOptions<S>) -> Self {
        self.options = options;
        self
    }

    /// `L(sample; θ)`, `−∞` where undefined.
    pub fn objective(&self, theta: &[S]) -> S {
        ThetaPoint::new(theta.to_vec(), &self.spec.param_box)
            .and_then(|t| self.likelihood.evaluate(&self.spec, &t, &self.sample))
            .unwrap_or(S::neg_infinity())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate<S> {
    pub theta_hat: ThetaPoint<S>,
    pub objective: S,
    /// FD gradient norm at `theta_hat`.
    pub residual: S,
    pub trace: Vec<TraceEntry<S>>,
}

/// `argmax_θ L(sample; θ)`.
pub fn maximize_likelihood<S: Real>(problem: &EstimatingProblem<S>) -> Result<Estimate<S>> {
    if problem.sample.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    let opt = maximize(
        |t| problem.objective(t),
        &problem.search_box,
        &problem.init.values,
        &problem.options,
    )?;
    Ok(Estimate {
        theta_hat: ThetaPoint::new(opt.theta, &problem.spec.param_box)?,
        objective: opt.objective,
        residual: opt.grad_norm,
        trace: opt.trace,
    })
}

/// A polynomial in θ, coefficients in descending degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialEq<S> {
    pub coefficients: Vec<S>,
    pub domain: (S, S),
    /// Leading coefficient is zero.
    pub degenerate: bool,
}

impl<S: Real> PolynomialEq<S> {
    pub fn new(coefficients: Vec<S>, domain: (S, S)) -> Self {
        let degenerate = coefficients.first().is_none_or(|&c| c == S::zero());
        Self {
            coefficients,
            domain,
            degenerate,
        }
    }

    pub fn eval(&self, t: S) -> S {
        self.coefficients
            .iter()
            .fold(S::zero(), |acc, &c| acc * t + c)
    }

    fn derivative_at(&self, t: S) -> S {
        let d = self.coefficients.len().saturating_sub(1);
        self.coefficients[..d]
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (i, &c)| {
                acc * t + c * S::from_usize_lossy(d - i)
            })
    }

    /// Real roots inside the open domain, ascending, from companion-matrix
    /// eigenvalues refined by Newton steps.
    pub fn real_roots(&self) -> Vec<S> {
        let scale = self
            .coefficients
            .iter()
            .map(|c| c.abs())
            .fold(S::zero(), S::max);
        let first = self
            .coefficients
            .iter()
            .position(|c| c.abs() > S::c(1e-14) * scale);
        let Some(first) = first else {
            return Vec::new();
        };
        let c: Vec<f64> = self.coefficients[first..].iter().map(|v| v.f64()).collect();
        let d = c.len() - 1;
        if d == 0 {
            return Vec::new();
        }
        let companion = DMatrix::from_fn(d, d, |i, j| {
            if i == 0 {
                -c[j + 1] / c[0]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let (lo, hi) = (self.domain.0.f64(), self.domain.1.f64());
        let mut roots: Vec<S> = Vec::new();
        for z in companion.complex_eigenvalues().iter() {
            if z.im.abs() > 1e-6 * (1.0 + z.re.abs()) {
                continue;
            }
            let mut t = S::c(z.re);
            for _ in 0..8 {
                let dp = self.derivative_at(t);
                if dp == S::zero() {
                    break;
                }
                t = t - self.eval(t) / dp;
            }
            let tf = t.f64();
            if tf > lo
                && tf < hi
                && self.eval(t).abs() <= S::c(1e-8) * scale
                && !roots.iter().any(|&r| (r - t).abs() < S::c(1e-9))
            {
                roots.push(t);
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
        roots
    }
}

fn binomial_masses<S: Real>(p: &EmpiricalPmf<S>) -> Result<(S, S, S)> {
    let atoms: Vec<f64> = p.atoms.iter().map(|a| a.f64()).collect();
    if atoms != [0.0, 1.0, 2.0] {
        return Err(Error::InvalidFamily(format!(
            "binomial m = 2 needs atoms [0, 1, 2], got {atoms:?}"
        )));
    }
    Ok((p.masses[0], p.masses[1], p.masses[2]))
}

/// The printed degree-5 coefficients for the m = 2 Cauchy-Schwarz
/// estimating equation.
pub fn binomial_cs_polynomial<S: Real>(p: &EmpiricalPmf<S>) -> Result<PolynomialEq<S>> {
    let (a, b, c) = binomial_masses(p)?;
    let k = S::c;
    Ok(PolynomialEq::new(
        vec![
            k(8.0) * b,
            k(8.0) * a - k(20.0) * b - k(6.0) * c,
            -k(20.0) * a + k(16.0) * b + k(12.0) * c,
            k(18.0) * a - k(4.0) * b - k(6.0) * c,
            -k(7.0) * a - k(2.0) * b + c,
            a + b,
        ],
        (S::zero(), S::one()),
    ))
}

/// `(A′D − AD′)/2` with `A = Σ p_n(x) p_θ(x)` and `D = Σ p_θ(x)²`, the
/// numerator of `dL_cs/dθ` for m = 2.
pub fn binomial_cs_stationarity<S: Real>(p: &EmpiricalPmf<S>) -> Result<PolynomialEq<S>> {
    let (a, b, c) = binomial_masses(p)?;
    let k = S::c;
    Ok(PolynomialEq::new(
        vec![
            -k(6.0) * a + k(12.0) * b - k(6.0) * c,
            k(24.0) * a - k(30.0) * b + k(6.0) * c,
            -k(36.0) * a + k(24.0) * b,
            k(26.0) * a - k(6.0) * b - k(2.0) * c,
            -k(9.0) * a - k(2.0) * b + c,
            a + b,
        ],
        (S::zero(), S::one()),
    ))
}

/// Roots of a stationarity polynomial ranked by `L_cs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsEstimate<S> {
    pub theta_hat: S,
    pub roots: Vec<S>,
    pub values: Vec<S>,
}

/// The root in (0, 1) with the largest `L_cs`; ties go to the smaller θ.
pub fn binomial_cs_estimate<S: Real>(
    p: &EmpiricalPmf<S>,
    poly: &PolynomialEq<S>,
) -> Result<CsEstimate<S>> {
    let (spec, _) = binomial(2, S::c(0.5))?;
    let roots = poly.real_roots();
    let values: Vec<S> = roots
        .iter()
        .map(|&t| {
            spec.theta(&[t])
                .and_then(|th| cauchy_schwarz_likelihood(p, &spec, &th))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for i in 0..roots.len() {
        if best.is_none_or(|b| values[i] > values[b] + S::c(1e-12)) {
            best = Some(i);
        }
    }
    let i = best.ok_or(Error::NoInteriorMax)?;
    Ok(CsEstimate {
        theta_hat: roots[i],
        roots,
        values,
    })
}

/// Jones `L_J` for `t_ν(μ, σ²)` at `α = (ν−1)/(ν+1)`, written through the
/// first two sample moments `m1 = Σx/n`, `m2 = Σx²/n` only.
pub fn student_jones_objective<S: Real>(
    spec: &FamilySpec<S>,
    nu: S,
    m1: S,
    m2: S,
    mu: S,
    sigma2: S,
) -> Result<S> {
    let (alpha, b, norm) = student_constants(nu, sigma2);
    let th = spec.theta(&[mu, sigma2])?;
    let v = m2 - S::c(2.0) * mu * m1 + mu * mu;
    let mean_pow = norm.powf(alpha - S::one()) * (S::one() + b * v / sigma2);
    Ok(mean_pow.ln() / (alpha - S::one()) - spec.power_integral(&th, alpha)?.ln() / alpha)
}

/// `(μ̂, σ̂²)` maximizing the Student Jones likelihood, from `(Σx, Σx², n)`.
pub fn jones_estimate_from_suffstats<S: Real>(
    sum_x: S,
    sum_x2: S,
    n: usize,
    nu: S,
) -> Result<(S, S)> {
    if n < 2 {
        return Err(Error::DegenerateSample(format!("need n >= 2, got {n}")));
    }
    let nn = S::from_usize_lossy(n);
    let (m1, m2) = (sum_x / nn, sum_x2 / nn);
    let var = m2 - m1 * m1;
    if !(var > S::c(1e-12) * (S::one() + m2)) {
        return Err(Error::DegenerateSample(format!(
            "sum of squares {sum_x2} does not exceed (sum)^2/n"
        )));
    }
    let (spec, _) = student_as_m_alpha(nu, S::zero(), S::one())?;
    let bx = spec.param_box.clone();
    let clamp = |v: S, i: usize| {
        v.max(bx.bounds[i].0 + S::c(1e-3) * bx.width(i))
            .min(bx.bounds[i].1 - S::c(1e-3) * bx.width(i))
    };
    let init = [
        clamp(m1, 0),
        clamp(var * (nu - S::c(2.0)).max(S::c(0.1)) / nu, 1),
    ];
    let opts = OptimizerOptions {
        grad_tol: S::c(1e-8),
        ..OptimizerOptions::default()
    };
    let opt = maximize(
        |t| student_jones_objective(&spec, nu, m1, m2, t[0], t[1]).unwrap_or(S::neg_infinity()),
        &bx,
        &init,
        &opts,
    )?;
    Ok((opt.theta[0], opt.theta[1]))
}

/// Contamination experiment on Normal(μ, σ²) data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustConfig<S> {
    /// Fraction of each sample replaced by the outlier value.
    pub eps: S,
    pub outlier: S,
    pub n: usize,
    pub alphas: Vec<S>,
    pub reps: usize,
    pub seed: u64,
    pub mu: S,
    pub sigma2: S,
}

impl<S: Real> RobustConfig<S> {
    /// ε = 0.1, outlier +50, n = 50, Jones α = 1.5, 200 replications.
    pub fn standard(seed: u64) -> Self {
        Self {
            eps: S::c(0.1),
            outlier: S::c(50.0),
            n: 50,
            alphas: vec![S::c(1.5)],
            reps: 200,
            seed,
            mu: S::zero(),
            sigma2: S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustRow<S> {
    pub rep: usize,
    pub alpha: S,
    pub mu_hat: S,
    pub sigma2_hat: S,
    pub mle_mu: S,
    pub mle_sigma2: S,
    /// `|μ̂_Jones − μ| < |μ̂_MLE − μ|`.
    pub jones_wins: bool,
}

impl<S: Real> RobustRow<S> {
    pub const CSV_HEADER: &'static str = "rep,alpha,mu_hat,sigma2_hat,mle_mu,mle_sigma2,jones_wins";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.rep,
            self.alpha,
            self.mu_hat.f64(),
            self.sigma2_hat.f64(),
            self.mle_mu.f64(),
            self.mle_sigma2.f64(),
            self.jones_wins
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustDemo<S> {
    pub config: RobustConfig<S>,
    pub rows: Vec<RobustRow<S>>,
    /// `(α, fraction of replications Jones wins)`.
    pub win_fraction: Vec<(S, S)>,
}

/// The contaminated sample of replication `rep`: `round(εn)` points set to
/// the outlier, the rest Normal(μ, σ²).
pub fn contaminated_sample<S: Real>(cfg: &RobustConfig<S>, rep: usize) -> Vec<S> {
    let mut rng = stream(cfg.seed, "robust_demo", rep as u64);
    let bad = (cfg.eps * S::from_usize_lossy(cfg.n))
        .round()
        .to_usize()
        .unwrap_or(0)
        .min(cfg.n);
    (0..cfg.n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i < bad {
                cfg.outlier
            } else {
                cfg.mu + cfg.sigma2.sqrt() * S::c(z)
            }
        })
        .collect()
}

fn median<S: Real>(v: &[S]) -> S {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) * S::c(0.5)
    }
}

/// Jones(α) and MLE fits of Normal(μ, σ²) on contaminated samples. The
/// search box spans the sample range in μ; starts include the median and
/// the squared normalized MAD.
pub fn robust_contamination_demo<S: Real>(cfg: &RobustConfig<S>) -> Result<RobustDemo<S>> {
    if !(cfg.eps >= S::zero() && cfg.eps <= S::c(0.3)) || cfg.n < 3 {
        return Err(Error::Unsupported(format!(
            "contamination must lie in [0, 0.3] with n >= 3, got eps = {}, n = {}",
            cfg.eps, cfg.n
        )));
    }
    let (spec, _) = normal(S::zero(), S::one())?;
    let per_rep: Vec<Result<Vec<RobustRow<S>>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let x = contaminated_sample(cfg, rep);
            let lo = x.iter().copied().fold(S::infinity(), S::min);
            let hi = x.iter().copied().fold(S::neg_infinity(), S::max);
            let med = median(&x);
            let dev: Vec<S> = x.iter().map(|&v| (v - med).abs()).collect();
            let mad2 = (S::c(1.4826) * median(&dev)).powi(2).max(S::c(1e-2));
            let range = hi - lo + S::one();
            let bx = ParamBox::new(vec![
                (lo - S::one(), hi + S::one()),
                (S::c(1e-3) * mad2, S::c(4.0) * range * range),
            ]);
            let init = spec.theta(&[med, mad2])?;
            let opts = OptimizerOptions {
                seed: cfg.seed ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                ..OptimizerOptions::default()
            };
            let fit = |kind: LikelihoodKind<S>| {
                let p = EstimatingProblem::new(&spec, kind, x.clone(), init.clone())
                    .within(bx.clone())
                    .with_options(opts);
                maximize_likelihood(&p).map(|e| e.theta_hat.values)
            };
            let mle = fit(LikelihoodKind::Log)?;
            cfg.alphas
                .iter()
                .map(|&a| {
                    let j = fit(LikelihoodKind::Jones(a))?;
                    Ok(RobustRow {
                        rep,
                        alpha: a,
                        mu_hat: j[0],
                        sigma2_hat: j[1],
                        mle_mu: mle[0],
                        mle_sigma2: mle[1],
                        jones_wins: (j[0] - cfg.mu).abs() < (mle[0] - cfg.mu).abs(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    let win_fraction = cfg
        .alphas
        .iter()
        .map(|&a| {
            let sel: Vec<&RobustRow<S>> = rows.iter().filter(|r| r.alpha == a).collect();
            let wins = sel.iter().filter(|r| r.jones_wins).count();
            (
                a,
                S::from_usize_lossy(wins) / S::from_usize_lossy(sel.len().max(1)),
            )
        })
        .collect();
    Ok(RobustDemo {
        config: cfg.clone(),
        rows,
        win_fraction,
    })
}
