//! Exponential, M^(α) and B^(α) families and the shipped instances.
//!
//! A family is stored as opaque callables `h`, `w`, `f` (and `F` for B^(α))
//! plus arity metadata. Densities are
//!
//! * exponential: `Z(θ) exp[h + wᵀf]`
//! * M^(α): `Z(θ) [h + wᵀf]^{1/(α−1)}`
//! * B^(α): `[h + F(θ) + wᵀf]^{1/(α−1)}`

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::RngCore;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::column_rank;
use crate::numerics::{integrate, tail_exponent, QuadOptions};
use crate::scalar::{binomial_coeff, Real};

pub type ScalarFn<S> = Arc<dyn Fn(S) -> S + Send + Sync>;
pub type VecFn<S> = Arc<dyn Fn(S) -> Vec<S> + Send + Sync>;
pub type ParamFn<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;
pub type ParamVecFn<S> = Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>;
/// `(θ, a) ↦ ∫ p_θ^a`.
pub type PowerIntegralFn<S> = Arc<dyn Fn(&[S], S) -> Option<S> + Send + Sync>;
pub type SamplerFn<S> = Arc<dyn Fn(&[S], &mut dyn RngCore) -> S + Send + Sync>;
/// `θ ↦ (center, scale)` hint for quadrature.
pub type LocateFn<S> = Arc<dyn Fn(&[S]) -> (S, S) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Exponential,
    MAlpha,
    BAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Support<S> {
    Finite(Vec<S>),
    Interval { lo: S, hi: S },
}

impl<S: Real> Support<S> {
    pub fn contains(&self, x: S) -> bool {
        match self {
            Support::Finite(pts) => pts
                .iter()
                .any(|&p| (p - x).abs() <= S::c(1e-12) * (S::one() + p.abs())),
            Support::Interval { lo, hi } => x >= *lo && x <= *hi,
        }
    }

    pub fn points(&self) -> Option<&[S]> {
        match self {
            Support::Finite(p) => Some(p),
            Support::Interval { .. } => None,
        }
    }

    pub fn is_finite_set(&self) -> bool {
        matches!(self, Support::Finite(_))
    }

    /// Probe points: the finite set itself, or `count` points spread over the
    /// interval (tangent-spaced on unbounded ends) including finite endpoints.
    pub fn probe_grid(&self, count: usize, center: S, scale: S) -> Vec<S> {
        match self {
            Support::Finite(p) => p.clone(),
            Support::Interval { lo, hi } => {
                let count = count.max(3);
                let mut out = Vec::with_capacity(count);
                for i in 0..count {
                    let u = S::from_usize_lossy(i + 1) / S::from_usize_lossy(count + 1);
                    let x = match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => *lo + (*hi - *lo) * u,
                        (false, false) => center + scale * ((u - S::c(0.5)) * S::PI()).tan(),
                        (true, false) => *lo + scale * (u * S::FRAC_PI_2()).tan(),
                        (false, true) => *hi - scale * (u * S::FRAC_PI_2()).tan(),
                    };
                    out.push(x);
                }
                if lo.is_finite() {
                    out.insert(0, *lo);
                }
                if hi.is_finite() {
                    out.push(*hi);
                }
                out
            }
        }
    }
}

/// Open parameter box, one interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamBox<S> {
    pub bounds: Vec<(S, S)>,
}

impl<S: Real> ParamBox<S> {
    pub fn new(bounds: Vec<(S, S)>) -> Self {
        Self { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, v: &[S]) -> bool {
        v.len() == self.bounds.len()
            && v.iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x > lo && x < hi)
    }

    pub fn midpoint(&self) -> Vec<S> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (lo + hi) * S::c(0.5))
            .collect()
    }

    pub fn width(&self, i: usize) -> S {
        self.bounds[i].1 - self.bounds[i].0
    }

    /// Tensor grid with `total` points (split as evenly as the divisors of
    /// `total` allow) over the box shrunk by `margin` of each width.
    pub fn grid(&self, total: usize, margin: S) -> Vec<Vec<S>> {
        let counts = split_counts(total, self.dim());
        let axes: Vec<Vec<S>> = self
            .bounds
            .iter()
            .zip(&counts)
            .map(|(&(lo, hi), &c)| {
                let a = lo + (hi - lo) * margin;
                let b = hi - (hi - lo) * margin;
                if c == 1 {
                    return vec![(a + b) * S::c(0.5)];
                }
                (0..c)
                    .map(|i| a + (b - a) * S::from_usize_lossy(i) / S::from_usize_lossy(c - 1))
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &v in axis {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// Factor `total` into `k` counts whose product is `total` and whose spread
/// is small, falling back to `ceil(total^{1/k})` per axis.
fn split_counts(total: usize, k: usize) -> Vec<usize> {
    if k <= 1 {
        return vec![total.max(1)];
    }
    if k == 2 {
        let mut best = (1, total);
        for a in 1..=total {
            if total.is_multiple_of(a) {
                let b = total / a;
                if a <= b && b - a < best.1 - best.0 {
                    best = (a, b);
                }
            }
        }
        if best.0 > 1 || total < 4 {
            return vec![best.1, best.0];
        }
    }
    let c = (total as f64).powf(1.0 / k as f64).ceil() as usize;
    vec![c.max(2); k]
}

/// A parameter value strictly inside its open box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaPoint<S> {
    pub values: Vec<S>,
    pub bounds: Vec<(S, S)>,
}

impl<S: Real> ThetaPoint<S> {
    pub fn new(values: Vec<S>, bx: &ParamBox<S>) -> Result<Self> {
        if values.len() != bx.dim() {
            return Err(Error::DimensionMismatch {
                expected: bx.dim(),
                got: values.len(),
            });
        }
        for (i, (&v, &(lo, hi))) in values.iter().zip(&bx.bounds).enumerate() {
            if !(v > lo && v < hi) {
                return Err(Error::ThetaOutOfBox {
                    index: i,
                    value: v.f64(),
                    lo: lo.f64(),
                    hi: hi.f64(),
                });
            }
        }
        Ok(Self {
            values,
            bounds: bx.bounds.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// First coordinate; the bound and Rao-Blackwell modules work with scalar θ.
    pub fn scalar(&self) -> S {
        self.values[0]
    }

    /// Same box, coordinate `i` moved to `v`.
    pub fn with_coord(&self, i: usize, v: S) -> Result<Self> {
        let mut values = self.values.clone();
        values[i] = v;
        Self::new(values, &ParamBox::new(self.bounds.clone()))
    }
}

type CacheKey = Vec<u64>;

#[derive(Default)]
struct NormCache<S> {
    map: RwLock<HashMap<CacheKey, S>>,
}

impl<S: Real> NormCache<S> {
    fn get_or_try<F: FnOnce() -> Result<S>>(&self, key: CacheKey, f: F) -> Result<S> {
        if let Some(v) = self.map.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = f()?;
        self.map
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert(v);
        Ok(v)
    }
}

fn cache_key<S: Real>(tag: u64, theta: &[S], extra: &[S]) -> CacheKey {
    let mut k = Vec::with_capacity(1 + theta.len() + extra.len());
    k.push(tag);
    k.extend(theta.iter().chain(extra).map(|v| v.f64().to_bits()));
    k
}

/// Immutable description of a parametric family.
#[derive(Clone)]
pub struct FamilySpec<S: Real> {
    pub name: String,
    pub kind: FamilyKind,
    /// Power-law index; `1` for exponential families.
    pub alpha: S,
    pub support: Support<S>,
    pub param_box: ParamBox<S>,
    pub stat_dim: usize,
    h: ScalarFn<S>,
    w: ParamVecFn<S>,
    f: VecFn<S>,
    big_f: Option<ParamFn<S>>,
    closed_log_normalizer: Option<ParamFn<S>>,
    power_integral: Option<PowerIntegralFn<S>>,
    sampler: Option<SamplerFn<S>>,
    locate: Option<LocateFn<S>>,
    cache: Arc<NormCache<S>>,
}

impl<S: Real> fmt::Debug for FamilySpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("alpha", &self.alpha)
            .field("support", &self.support)
            .field("param_box", &self.param_box)
            .field("stat_dim", &self.stat_dim)
            .finish_non_exhaustive()
    }
}

/// Builder for [`FamilySpec`]; `build` validates positivity of the base on a
/// probe grid.
pub struct FamilyBuilder<S: Real> {
    name: String,
    kind: FamilyKind,
    alpha: S,
    support: Support<S>,
    param_box: ParamBox<S>,
    stat_dim: usize,
    h: Option<ScalarFn<S>>,
    w: Option<ParamVecFn<S>>,
    f: Option<VecFn<S>>,
    big_f: Option<ParamFn<S>>,
    closed_log_normalizer: Option<ParamFn<S>>,
    power_integral: Option<PowerIntegralFn<S>>,
    sampler: Option<SamplerFn<S>>,
    locate: Option<LocateFn<S>>,
}

impl<S: Real> FamilyBuilder<S> {
    pub fn new(
        name: impl Into<String>,
        kind: FamilyKind,
        alpha: S,
        support: Support<S>,
        param_box: ParamBox<S>,
        stat_dim: usize,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            alpha,
            support,
            param_box,
            stat_dim,
            h: None,
            w: None,
            f: None,
            big_f: None,
            closed_log_normalizer: None,
            power_integral: None,
            sampler: None,
            locate: None,
        }
    }

    pub fn h(mut self, h: impl Fn(S) -> S + Send + Sync + 'static) -> Self {
        self.h = Some(Arc::new(h));
        self
    }

    pub fn w(mut self, w: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static) -> Self {
        self.w = Some(Arc::new(w));
        self
    }

    pub fn f(mut self, f: impl Fn(S) -> Vec<S> + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn big_f(mut self, big_f: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        self.big_f = Some(Arc::new(big_f));
        self
    }

    pub fn closed_normalizer(mut self, z: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        self.closed_log_normalizer = Some(Arc::new(move |th| z(th).ln()));
        self
    }

    /// Closed form of `ln Z(θ)`, for exponential families whose `Z`
    /// under- or overflows.
    pub fn closed_log_normalizer(mut self, z: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        self.closed_log_normalizer = Some(Arc::new(z));
        self
    }

    pub fn power_integral(
        mut self,
        p: impl Fn(&[S], S) -> Option<S> + Send + Sync + 'static,
    ) -> Self {
        self.power_integral = Some(Arc::new(p));
        self
    }

    pub fn sampler(
        mut self,
        s: impl Fn(&[S], &mut dyn RngCore) -> S + Send + Sync + 'static,
    ) -> Self {
        self.sampler = Some(Arc::new(s));
        self
    }

    pub fn locate(mut self, l: impl Fn(&[S]) -> (S, S) + Send + Sync + 'static) -> Self {
        self.locate = Some(Arc::new(l));
        self
    }

    pub fn build(self) -> Result<FamilySpec<S>> {
        if self.kind != FamilyKind::Exponential
            && (!(self.alpha > S::zero()) || self.alpha == S::one())
        {
            return Err(Error::InvalidFamily(format!(
                "alpha must be positive and not 1, got {}",
                self.alpha
            )));
        }
        if self.kind == FamilyKind::BAlpha && self.big_f.is_none() {
            return Err(Error::InvalidFamily(
                "B^(alpha) family needs F(theta)".into(),
            ));
        }
        if self.param_box.dim() == 0 || self.param_box.bounds.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(Error::InvalidFamily(
                "parameter box must be non-empty".into(),
            ));
        }
        if self.stat_dim < 1 {
            return Err(Error::InvalidFamily(
                "statistic dimension must be at least 1".into(),
            ));
        }
        let zero_h: ScalarFn<S> = Arc::new(|_| S::zero());
        let spec = FamilySpec {
            name: self.name,
            kind: self.kind,
            alpha: if self.kind == FamilyKind::Exponential {
                S::one()
            } else {
                self.alpha
            },
            support: self.support,
            param_box: self.param_box,
            stat_dim: self.stat_dim,
            h: self.h.unwrap_or(zero_h),
            w: self
                .w
                .ok_or_else(|| Error::InvalidFamily("missing w(theta)".into()))?,
            f: self
                .f
                .ok_or_else(|| Error::InvalidFamily("missing f(x)".into()))?,
            big_f: self.big_f,
            closed_log_normalizer: self.closed_log_normalizer,
            power_integral: self.power_integral,
            sampler: self.sampler,
            locate: self.locate,
            cache: Arc::new(NormCache::default()),
        };
        let mid = spec.param_box.midpoint();
        let wd = (spec.w)(&mid).len();
        let fd = (spec.f)(spec.support.probe_grid(3, S::zero(), S::one())[0]).len();
        if wd != spec.stat_dim || fd != spec.stat_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.stat_dim,
                got: if wd != spec.stat_dim { wd } else { fd },
            });
        }
        spec.validate_positivity()?;
        Ok(spec)
    }
}

/// A family evaluated at a fixed θ: `w(θ)`, `F(θ)` and `Z(θ)` are computed
/// once and reused for every `x`.
#[derive(Debug, Clone)]
pub struct FamilyAt<'a, S: Real> {
    pub spec: &'a FamilySpec<S>,
    pub theta: Vec<S>,
    pub w: Vec<S>,
    pub big_f: S,
    pub z: S,
    pub ln_z: S,
}

impl<'a, S: Real> FamilyAt<'a, S> {
    /// Bracketed base; for exponential families this is the exponent.
    pub fn base(&self, x: S) -> S {
        let fx = (self.spec.f)(x);
        let lin: S = self.w.iter().zip(&fx).map(|(&a, &b)| a * b).sum();
        let h = (self.spec.h)(x);
        match self.spec.kind {
            FamilyKind::BAlpha => h + self.big_f + lin,
            _ => h + lin,
        }
    }

    /// Unnormalized kernel; 0 outside the support.
    pub fn kernel(&self, x: S) -> Result<S> {
        if !self.spec.support.contains(x) {
            return Ok(S::zero());
        }
        let b = self.base(x);
        match self.spec.kind {
            FamilyKind::Exponential => Ok(b.exp()),
            _ => {
                if !(b > S::zero()) {
                    return Err(Error::NonPositiveBase {
                        x: x.f64(),
                        base: b.f64(),
                    });
                }
                Ok(b.powf(self.spec.exponent()))
            }
        }
    }

    pub fn density(&self, x: S) -> Result<S> {
        if self.spec.kind == FamilyKind::Exponential {
            if !self.spec.support.contains(x) {
                return Ok(S::zero());
            }
            return Ok((self.ln_z + self.base(x)).exp());
        }
        Ok(self.z * self.kernel(x)?)
    }

    pub fn log_density(&self, x: S) -> Result<S> {
        if !self.spec.support.contains(x) {
            return Ok(S::neg_infinity());
        }
        let b = self.base(x);
        match self.spec.kind {
            FamilyKind::Exponential => Ok(self.ln_z + b),
            _ => {
                if !(b > S::zero()) {
                    return Err(Error::NonPositiveBase {
                        x: x.f64(),
                        base: b.f64(),
                    });
                }
                Ok(self.ln_z + self.spec.exponent() * b.ln())
            }
        }
    }
}

impl<S: Real> FamilySpec<S> {
    /// `1/(α−1)`.
    pub fn exponent(&self) -> S {
        S::one() / (self.alpha - S::one())
    }

    pub fn theta_dim(&self) -> usize {
        self.param_box.dim()
    }

    pub fn theta(&self, values: &[S]) -> Result<ThetaPoint<S>> {
        ThetaPoint::new(values.to_vec(), &self.param_box)
    }

    pub fn h(&self, x: S) -> S {
        (self.h)(x)
    }

    pub fn f(&self, x: S) -> Vec<S> {
        (self.f)(x)
    }

    pub fn w(&self, theta: &[S]) -> Vec<S> {
        (self.w)(theta)
    }

    /// `F(θ)` for B^(α) families, zero otherwise.
    pub fn big_f(&self, theta: &[S]) -> S {
        self.big_f.as_ref().map_or(S::zero(), |g| g(theta))
    }

    pub fn has_closed_normalizer(&self) -> bool {
        self.closed_log_normalizer.is_some()
    }

    /// Quadrature center and scale at θ.
    pub fn locate(&self, theta: &[S]) -> (S, S) {
        self.locate
            .as_ref()
            .map_or((S::zero(), S::one()), |l| l(theta))
    }

    fn check_theta(&self, theta: &ThetaPoint<S>) -> Result<()> {
        if theta.dim() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_dim(),
                got: theta.dim(),
            });
        }
        if !self.param_box.contains(&theta.values) {
            let (i, v) = theta
                .values
                .iter()
                .enumerate()
                .find(|(i, &v)| {
                    !(v > self.param_box.bounds[*i].0 && v < self.param_box.bounds[*i].1)
                })
                .map(|(i, &v)| (i, v))
                .unwrap_or((0, theta.values[0]));
            let (lo, hi) = self.param_box.bounds[i];
            return Err(Error::ThetaOutOfBox {
                index: i,
                value: v.f64(),
                lo: lo.f64(),
                hi: hi.f64(),
            });
        }
        Ok(())
    }

    fn unnormalized_at(&self, theta: &[S]) -> FamilyAt<'_, S> {
        FamilyAt {
            spec: self,
            theta: theta.to_vec(),
            w: (self.w)(theta),
            big_f: self.big_f(theta),
            z: S::one(),
            ln_z: S::zero(),
        }
    }

    /// Evaluate the family at θ.
    pub fn at(&self, theta: &ThetaPoint<S>) -> Result<FamilyAt<'_, S>> {
        self.check_theta(theta)?;
        let mut at = self.unnormalized_at(&theta.values);
        if self.kind != FamilyKind::BAlpha {
            at.ln_z = self.log_normalizer(theta)?;
            at.z = at.ln_z.exp();
        }
        Ok(at)
    }

    pub fn density(&self, theta: &ThetaPoint<S>, x: S) -> Result<S> {
        self.at(theta)?.density(x)
    }

    /// `Z(θ)`: closed form when the instance has one, otherwise the inverse
    /// of the kernel's sum or integral. For B^(α) families this is the
    /// reciprocal total mass, 1 when `F` is the right normalizer.
    pub fn normalizer(&self, theta: &ThetaPoint<S>) -> Result<S> {
        Ok(self.log_normalizer(theta)?.exp())
    }

    pub fn log_normalizer(&self, theta: &ThetaPoint<S>) -> Result<S> {
        self.check_theta(theta)?;
        if let Some(z) = &self.closed_log_normalizer {
            return Ok(z(&theta.values));
        }
        Ok(self.normalizer_numeric(theta)?.ln())
    }

    /// `Z(θ)` by summation or quadrature, ignoring any closed form.
    pub fn normalizer_numeric(&self, theta: &ThetaPoint<S>) -> Result<S> {
        self.check_theta(theta)?;
        self.cache.get_or_try(cache_key(1, &theta.values, &[]), || {
            let at = self.unnormalized_at(&theta.values);
            let mass = self.integrate_over_support(
                &theta.values,
                |x| at.kernel(x),
                Error::DivergentIntegral,
            )?;
            if !(mass > S::zero()) || !mass.is_finite() {
                return Err(Error::DivergentIntegral(format!(
                    "kernel mass {}",
                    mass.f64()
                )));
            }
            Ok(S::one() / mass)
        })
    }

    /// `∫ g` over the support, summing on finite sets. Unbounded ends are
    /// checked for a power-law tail no faster than `|x|^{-1}` first.
    pub fn integrate_over_support<G>(
        &self,
        theta: &[S],
        g: G,
        divergent: fn(String) -> Error,
    ) -> Result<S>
    where
        G: Fn(S) -> Result<S>,
    {
        match &self.support {
            Support::Finite(pts) => {
                let mut acc = S::zero();
                for &x in pts {
                    acc = acc + g(x)?;
                }
                Ok(acc)
            }
            Support::Interval { lo, hi } => {
                let (center, scale) = self.locate(theta);
                let probe = |x: S| g(x).unwrap_or(S::nan());
                for (end, dir) in [(*lo, -S::one()), (*hi, S::one())] {
                    if end.is_finite() {
                        continue;
                    }
                    if let Some(p) = tail_exponent(probe, center, scale, dir) {
                        if !p.is_finite() || p <= S::one() + S::c(1e-6) {
                            return Err(divergent(format!("tail decays like |x|^-{:.6}", p.f64())));
                        }
                    }
                }
                let mut failure = None;
                let opts = QuadOptions::default().centered(center, scale);
                let r = integrate(
                    |x| match g(x) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            S::zero()
                        }
                    },
                    *lo,
                    *hi,
                    &opts,
                );
                if let Some(e) = failure {
                    return Err(e);
                }
                Ok(r?.value)
            }
        }
    }

    /// `∫ p_θ^a`, cached per (θ, a). Closed forms are used when the instance
    /// provides them.
    pub fn power_integral(&self, theta: &ThetaPoint<S>, a: S) -> Result<S> {
        self.check_theta(theta)?;
        self.cache
            .get_or_try(cache_key(2, &theta.values, &[a]), || {
                if let Some(p) = &self.power_integral {
                    return p(&theta.values, a).ok_or_else(|| {
                        Error::DivergentNorm(format!(
                            "integral of p^{} diverges for {}",
                            a.f64(),
                            self.name
                        ))
                    });
                }
                self.power_integral_numeric(theta, a)
            })
    }

    /// `∫ p_θ^a` by summation or quadrature only.
    pub fn power_integral_numeric(&self, theta: &ThetaPoint<S>, a: S) -> Result<S> {
        let at = self.at(theta)?;
        self.integrate_over_support(
            &theta.values,
            |x| Ok(at.density(x)?.powf(a)),
            Error::DivergentNorm,
        )
    }

    /// Check the base is positive on a probe grid of θ and x.
    pub fn validate_positivity(&self) -> Result<()> {
        if self.kind == FamilyKind::Exponential {
            return Ok(());
        }
        let grid = self
            .param_box
            .grid(5usize.pow(self.theta_dim().min(3) as u32), S::c(0.01));
        for th in grid {
            let at = self.unnormalized_at(&th);
            let (c, s) = self.locate(&th);
            for x in self.support.probe_grid(41, c, s) {
                let b = at.base(x);
                if !(b > S::zero()) {
                    return Err(Error::NonPositiveBase {
                        x: x.f64(),
                        base: b.f64(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Draw one value from the family at θ.
    pub fn draw(&self, theta: &ThetaPoint<S>, rng: &mut dyn RngCore) -> Result<S> {
        if let Some(s) = &self.sampler {
            return Ok(s(&theta.values, rng));
        }
        match &self.support {
            Support::Finite(pts) => {
                let at = self.at(theta)?;
                let u: f64 = rand::Rng::random(rng);
                let u = S::c(u);
                let mut acc = S::zero();
                for &x in pts {
                    acc = acc + at.density(x)?;
                    if u < acc {
                        return Ok(x);
                    }
                }
                Ok(*pts.last().expect("non-empty support"))
            }
            Support::Interval { .. } => {
                Err(Error::Unsupported(format!("no sampler for {}", self.name)))
            }
        }
    }
}

/// Student distribution constants for shape ν: `(α, b, N_{σ,ν})`.
pub fn student_constants<S: Real>(nu: S, sigma2: S) -> (S, S, S) {
    let alpha = (nu - S::one()) / (nu + S::one());
    let b = S::one() / nu;
    let half = S::c(0.5);
    let ln_n = ((nu + S::one()) * half).lgamma()
        - (nu * half).lgamma()
        - half * (nu * S::PI() * sigma2).ln();
    (alpha, b, ln_n.exp())
}

/// `∫ t_ν(μ, σ²)^a dx` in closed form, `None` when divergent.
fn student_power_integral<S: Real>(nu: S, sigma2: S, a: S) -> Option<S> {
    let (_, _, norm) = student_constants(nu, sigma2);
    let m = a * (nu + S::one()) * S::c(0.5);
    if !(m > S::c(0.5)) {
        return None;
    }
    let ln = a * norm.ln() + S::c(0.5) * (nu * sigma2 * S::PI()).ln() + (m - S::c(0.5)).lgamma()
        - m.lgamma();
    Some(ln.exp())
}

fn student_sampler<S: Real>(nu: S, mu: S, sigma: S, rng: &mut dyn RngCore) -> S {
    let z: f64 = StandardNormal.sample(rng);
    let chi = ChiSquared::new(nu.f64())
        .expect("positive degrees of freedom")
        .sample(rng);
    mu + sigma * S::c(z / (chi / nu.f64()).sqrt())
}

const STUDENT_MU_BOX: (f64, f64) = (-10.0, 10.0);
const STUDENT_SIGMA2_BOX: (f64, f64) = (1e-3, 100.0);

/// Student `t_ν(μ, σ²)` as an M^(α) family in θ = (μ, σ²): `h ≡ 1`,
/// `f = (x², x)`, `α = (ν−1)/(ν+1)`.
pub fn student_as_m_alpha<S: Real>(
    nu: S,
    mu: S,
    sigma2: S,
) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    if !(nu > S::c(2.0)) {
        return Err(Error::InvalidFamily(format!(
            "Student M^(alpha) form needs nu > 2, got {nu}"
        )));
    }
    let (alpha, b, _) = student_constants(nu, S::one());
    let e = S::one() / (alpha - S::one());
    let bx = ParamBox::new(vec![
        (S::c(STUDENT_MU_BOX.0), S::c(STUDENT_MU_BOX.1)),
        (S::c(STUDENT_SIGMA2_BOX.0), S::c(STUDENT_SIGMA2_BOX.1)),
    ]);
    let spec = FamilyBuilder::new(
        format!("student_m_alpha(nu={nu})"),
        FamilyKind::MAlpha,
        alpha,
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        2,
    )
    .h(|_| S::one())
    .f(|x| vec![x * x, x])
    .w(move |th| {
        let d = th[1] + b * th[0] * th[0];
        vec![b / d, -S::c(2.0) * th[0] * b / d]
    })
    .closed_normalizer(move |th| {
        let (_, _, n) = student_constants(nu, th[1]);
        n * (S::one() + th[0] * th[0] * b / th[1]).powf(e)
    })
    .power_integral(move |th, a| student_power_integral(nu, th[1], a))
    .sampler(move |th, rng| student_sampler(nu, th[0], th[1].sqrt(), rng))
    .locate(|th| (th[0], th[1].sqrt()))
    .build()?;
    let theta = spec.theta(&[mu, sigma2])?;
    Ok((spec, theta))
}

/// Student `t_ν(0, σ²)` as a one-parameter M^(α) family in θ = σ²:
/// `h ≡ 1`, `w = b/σ²`, `f = x²`.
pub fn student_scale_as_m_alpha<S: Real>(
    nu: S,
    sigma2: S,
) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    if !(nu > S::c(2.0)) {
        return Err(Error::InvalidFamily(format!(
            "Student M^(alpha) form needs nu > 2, got {nu}"
        )));
    }
    let (alpha, b, _) = student_constants(nu, S::one());
    let bx = ParamBox::new(vec![(
        S::c(STUDENT_SIGMA2_BOX.0),
        S::c(STUDENT_SIGMA2_BOX.1),
    )]);
    let spec = FamilyBuilder::new(
        format!("student_scale_m_alpha(nu={nu})"),
        FamilyKind::MAlpha,
        alpha,
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        1,
    )
    .h(|_| S::one())
    .f(|x| vec![x * x])
    .w(move |th| vec![b / th[0]])
    .closed_normalizer(move |th| student_constants(nu, th[0]).2)
    .power_integral(move |th, a| student_power_integral(nu, th[0], a))
    .sampler(move |th, rng| student_sampler(nu, S::zero(), th[0].sqrt(), rng))
    .locate(|th| (S::zero(), th[0].sqrt()))
    .build()?;
    let theta = spec.theta(&[sigma2])?;
    Ok((spec, theta))
}

/// Student location family with σ² known, written as an M^(α) family in
/// θ = μ. It has two statistics for one parameter, so it is not regular.
pub fn student_location_as_m_alpha<S: Real>(
    nu: S,
    mu: S,
    sigma2: S,
) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    if !(nu > S::c(2.0)) {
        return Err(Error::InvalidFamily(format!(
            "Student M^(alpha) form needs nu > 2, got {nu}"
        )));
    }
    let (alpha, b, _) = student_constants(nu, S::one());
    let e = S::one() / (alpha - S::one());
    let bx = ParamBox::new(vec![(S::c(STUDENT_MU_BOX.0), S::c(STUDENT_MU_BOX.1))]);
    let spec = FamilyBuilder::new(
        format!("student_location_m_alpha(nu={nu})"),
        FamilyKind::MAlpha,
        alpha,
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        2,
    )
    .h(|_| S::one())
    .f(|x| vec![x * x, x])
    .w(move |th| {
        let d = sigma2 + b * th[0] * th[0];
        vec![b / d, -S::c(2.0) * th[0] * b / d]
    })
    .closed_normalizer(move |th| {
        let (_, _, n) = student_constants(nu, sigma2);
        n * (S::one() + th[0] * th[0] * b / sigma2).powf(e)
    })
    .power_integral(move |_, a| student_power_integral(nu, sigma2, a))
    .sampler(move |th, rng| student_sampler(nu, th[0], sigma2.sqrt(), rng))
    .locate(move |th| (th[0], sigma2.sqrt()))
    .build()?;
    let theta = spec.theta(&[mu])?;
    Ok((spec, theta))
}

/// Student location family as a B^(α) family in θ = μ with σ² known:
/// `h = N^{α−1} b x²/σ²`, `F = N^{α−1}(1 + bμ²/σ²)`, `w = −2μN^{α−1}b/σ²`,
/// `f = x`.
pub fn student_as_b_alpha<S: Real>(
    nu: S,
    mu: S,
    sigma2: S,
) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    if !(nu > S::c(2.0)) {
        return Err(Error::InvalidFamily(format!(
            "Student B^(alpha) form needs nu > 2, got {nu}"
        )));
    }
    let (alpha, b, n) = student_constants(nu, sigma2);
    let na = n.powf(alpha - S::one());
    let bx = ParamBox::new(vec![(S::c(STUDENT_MU_BOX.0), S::c(STUDENT_MU_BOX.1))]);
    let spec = FamilyBuilder::new(
        format!("student_b_alpha(nu={nu})"),
        FamilyKind::BAlpha,
        alpha,
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        1,
    )
    .h(move |x| na * b * x * x / sigma2)
    .big_f(move |th| na * (S::one() + b * th[0] * th[0] / sigma2))
    .w(move |th| vec![-S::c(2.0) * th[0] * na * b / sigma2])
    .f(|x| vec![x])
    .power_integral(move |_, a| student_power_integral(nu, sigma2, a))
    .sampler(move |th, rng| student_sampler(nu, th[0], sigma2.sqrt(), rng))
    .locate(move |th| (th[0], sigma2.sqrt()))
    .build()?;
    let theta = spec.theta(&[mu])?;
    Ok((spec, theta))
}

fn unit_box<S: Real>() -> ParamBox<S> {
    ParamBox::new(vec![(S::zero(), S::one())])
}

/// Bernoulli as M^(2): `h ≡ 1`, `w = (2θ−1)/(1−θ)`, `f = x`, `Z = 1−θ`.
pub fn bernoulli_as_m2<S: Real>(theta: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    let spec = FamilyBuilder::new(
        "bernoulli_m2",
        FamilyKind::MAlpha,
        S::c(2.0),
        Support::Finite(vec![S::zero(), S::one()]),
        unit_box(),
        1,
    )
    .h(|_| S::one())
    .w(|th| vec![(S::c(2.0) * th[0] - S::one()) / (S::one() - th[0])])
    .f(|x| vec![x])
    .closed_normalizer(|th| S::one() - th[0])
    .build()?;
    let t = spec.theta(&[theta])?;
    Ok((spec, t))
}

/// Bernoulli as B^(2): `h = 0`, `F = 1−θ`, `w = 2θ−1`, `f = x`.
pub fn bernoulli_as_b2<S: Real>(theta: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    let spec = FamilyBuilder::new(
        "bernoulli_b2",
        FamilyKind::BAlpha,
        S::c(2.0),
        Support::Finite(vec![S::zero(), S::one()]),
        unit_box(),
        1,
    )
    .h(|_| S::zero())
    .big_f(|th| S::one() - th[0])
    .w(|th| vec![S::c(2.0) * th[0] - S::one()])
    .f(|x| vec![x])
    .build()?;
    let t = spec.theta(&[theta])?;
    Ok((spec, t))
}

/// Binomial(m, θ) as an exponential family: `h = ln C(m, x)`,
/// `w = logit θ`, `f = x`, `Z = (1−θ)^m`.
pub fn binomial<S: Real>(m: usize, theta: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    if m == 0 {
        return Err(Error::InvalidFamily("binomial needs m >= 1".into()));
    }
    let pts: Vec<S> = (0..=m).map(S::from_usize_lossy).collect();
    let mm = S::from_usize_lossy(m);
    let spec = FamilyBuilder::new(
        format!("binomial(m={m})"),
        FamilyKind::Exponential,
        S::one(),
        Support::Finite(pts),
        unit_box(),
        1,
    )
    .h(move |x| binomial_coeff::<S>(m, x.round().to_usize().unwrap_or(0)).ln())
    .w(|th| vec![(th[0] / (S::one() - th[0])).ln()])
    .f(|x| vec![x])
    .closed_log_normalizer(move |th| mm * (-th[0]).ln_1p())
    .build()?;
    let t = spec.theta(&[theta])?;
    Ok((spec, t))
}

/// Bernoulli as an exponential family.
pub fn bernoulli_exponential<S: Real>(theta: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    binomial(1, theta)
}

/// Normal(μ, 1) as an exponential family in μ.
pub fn normal_location<S: Real>(mu: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    let bx = ParamBox::new(vec![(S::c(-100.0), S::c(100.0))]);
    let spec = FamilyBuilder::new(
        "normal_location",
        FamilyKind::Exponential,
        S::one(),
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        1,
    )
    .h(|x| -x * x * S::c(0.5))
    .w(|th| vec![th[0]])
    .f(|x| vec![x])
    .closed_log_normalizer(|th| -th[0] * th[0] * S::c(0.5) - S::c(0.5) * (S::c(2.0) * S::PI()).ln())
    .power_integral(|_, a| gaussian_power_integral(S::one(), a))
    .sampler(|th, rng| {
        let z: f64 = StandardNormal.sample(rng);
        th[0] + S::c(z)
    })
    .locate(|th| (th[0], S::one()))
    .build()?;
    let t = spec.theta(&[mu])?;
    Ok((spec, t))
}

fn gaussian_power_integral<S: Real>(sigma2: S, a: S) -> Option<S> {
    if !(a > S::zero()) {
        return None;
    }
    Some((S::c(2.0) * S::PI() * sigma2).powf((S::one() - a) * S::c(0.5)) / a.sqrt())
}

/// Normal(μ, σ²) as an exponential family in θ = (μ, σ²):
/// `w = (μ/σ², −1/(2σ²))`, `f = (x, x²)`.
pub fn normal<S: Real>(mu: S, sigma2: S) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    let bx = ParamBox::new(vec![(S::c(-1e3), S::c(1e3)), (S::c(1e-6), S::c(1e6))]);
    let spec = FamilyBuilder::new(
        "normal",
        FamilyKind::Exponential,
        S::one(),
        Support::Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        },
        bx,
        2,
    )
    .w(|th| vec![th[0] / th[1], -S::one() / (S::c(2.0) * th[1])])
    .f(|x| vec![x, x * x])
    .closed_log_normalizer(|th| {
        -th[0] * th[0] / (S::c(2.0) * th[1]) - S::c(0.5) * (S::c(2.0) * S::PI() * th[1]).ln()
    })
    .power_integral(|th, a| gaussian_power_integral(th[1], a))
    .sampler(|th, rng| {
        let z: f64 = StandardNormal.sample(rng);
        th[0] + th[1].sqrt() * S::c(z)
    })
    .locate(|th| (th[0], th[1].sqrt()))
    .build()?;
    let t = spec.theta(&[mu, sigma2])?;
    Ok((spec, t))
}

/// Outcome of [`regularity_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub support_independent: bool,
    pub s_equals_k: bool,
    /// Numerical rank of `{1, w_1, …, w_s}` over the θ probes.
    pub w_rank: usize,
    pub w_independent: bool,
    /// Numerical rank of `{f_i}` (with `1` prepended for B^(α)).
    pub f_rank: usize,
    pub f_independent: bool,
    pub regular: bool,
}

/// Numerical-rank test of the regularity conditions.
pub fn regularity_check<S: Real>(
    spec: &FamilySpec<S>,
    theta_grid: &[Vec<S>],
    x_grid: &[S],
) -> Result<RegularityReport> {
    let s = spec.stat_dim;
    let needed = s + 2;
    let got = theta_grid.len().min(x_grid.len());
    if got < needed {
        return Err(Error::InsufficientProbes { needed, got });
    }
    let tol = S::c(1e-9);
    let mut wcols = vec![vec![S::one(); theta_grid.len()]];
    wcols.extend((0..s).map(|_| Vec::with_capacity(theta_grid.len())));
    for th in theta_grid {
        for (i, v) in spec.w(th).into_iter().enumerate() {
            wcols[i + 1].push(v);
        }
    }
    let with_one = spec.kind == FamilyKind::BAlpha;
    let mut fcols: Vec<Vec<S>> = Vec::new();
    if with_one {
        fcols.push(vec![S::one(); x_grid.len()]);
    }
    let base = fcols.len();
    fcols.extend((0..s).map(|_| Vec::with_capacity(x_grid.len())));
    for &x in x_grid {
        for (i, v) in spec.f(x).into_iter().enumerate() {
            fcols[base + i].push(v);
        }
    }
    let w_rank = column_rank(&wcols, tol);
    let f_rank = column_rank(&fcols, tol);
    let s_equals_k = s == spec.theta_dim();
    let w_independent = w_rank == s + 1;
    let f_independent = f_rank == fcols.len();
    Ok(RegularityReport {
        support_independent: true,
        s_equals_k,
        w_rank,
        w_independent,
        f_rank,
        f_independent,
        regular: s_equals_k && w_independent && f_independent,
    })
}

/// Support description in a family JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SupportDoc {
    Points(Vec<f64>),
    Interval { lo: Option<f64>, hi: Option<f64> },
}

/// Family description loadable from JSON.
///
/// Custom entries give `h` and each `f_i` as polynomial coefficients in
/// ascending degree; `w(θ) = θ` (natural parameterization) and, for
/// B^(α), `F` is a polynomial in θ₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyDoc {
    StudentMAlpha {
        nu: f64,
        mu: f64,
        sigma2: f64,
    },
    StudentScaleMAlpha {
        nu: f64,
        #[serde(default = "one")]
        sigma2: f64,
    },
    StudentLocationMAlpha {
        nu: f64,
        mu: f64,
        #[serde(default = "one")]
        sigma2: f64,
    },
    StudentBAlpha {
        nu: f64,
        mu: f64,
        #[serde(default = "one")]
        sigma2: f64,
    },
    Bernoulli {
        theta: f64,
    },
    BernoulliBAlpha {
        theta: f64,
    },
    BernoulliExponential {
        theta: f64,
    },
    Binomial {
        m: usize,
        theta: f64,
    },
    Normal {
        mu: f64,
        sigma2: f64,
    },
    NormalLocation {
        mu: f64,
    },
    Custom {
        family: FamilyKind,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default)]
        h: Vec<f64>,
        f: Vec<Vec<f64>>,
        #[serde(default)]
        big_f: Vec<f64>,
        support: SupportDoc,
        theta_box: Vec<(f64, f64)>,
        theta: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn poly<S: Real>(coeffs: &[S], x: S) -> S {
    coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * x + c)
}

impl FamilyDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidFamily(format!("family JSON: {e}")))
    }

    pub fn build<S: Real>(&self) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
        let c = S::c;
        match self {
            FamilyDoc::StudentMAlpha { nu, mu, sigma2 } => {
                student_as_m_alpha(c(*nu), c(*mu), c(*sigma2))
            }
            FamilyDoc::StudentScaleMAlpha { nu, sigma2 } => {
                student_scale_as_m_alpha(c(*nu), c(*sigma2))
            }
            FamilyDoc::StudentLocationMAlpha { nu, mu, sigma2 } => {
                student_location_as_m_alpha(c(*nu), c(*mu), c(*sigma2))
            }
            FamilyDoc::StudentBAlpha { nu, mu, sigma2 } => {
                student_as_b_alpha(c(*nu), c(*mu), c(*sigma2))
            }
            FamilyDoc::Bernoulli { theta } => bernoulli_as_m2(c(*theta)),
            FamilyDoc::BernoulliBAlpha { theta } => bernoulli_as_b2(c(*theta)),
            FamilyDoc::BernoulliExponential { theta } => bernoulli_exponential(c(*theta)),
            FamilyDoc::Binomial { m, theta } => binomial(*m, c(*theta)),
            FamilyDoc::Normal { mu, sigma2 } => normal(c(*mu), c(*sigma2)),
            FamilyDoc::NormalLocation { mu } => normal_location(c(*mu)),
            FamilyDoc::Custom {
                family,
                alpha,
                h,
                f,
                big_f,
                support,
                theta_box,
                theta,
            } => {
                let s = f.len();
                if s == 0 || theta_box.len() != s {
                    return Err(Error::InvalidFamily(format!(
                        "custom family needs one theta coordinate per statistic (s = {s}, k = {})",
                        theta_box.len()
                    )));
                }
                let support = match support {
                    SupportDoc::Points(p) => Support::Finite(p.iter().map(|&v| c(v)).collect()),
                    SupportDoc::Interval { lo, hi } => Support::Interval {
                        lo: lo.map_or(S::neg_infinity(), c),
                        hi: hi.map_or(S::infinity(), c),
                    },
                };
                let hc: Vec<S> = h.iter().map(|&v| c(v)).collect();
                let fc: Vec<Vec<S>> = f
                    .iter()
                    .map(|p| p.iter().map(|&v| c(v)).collect())
                    .collect();
                let bx = ParamBox::new(theta_box.iter().map(|&(a, b)| (c(a), c(b))).collect());
                let mut builder = FamilyBuilder::new("custom", *family, c(*alpha), support, bx, s)
                    .h(move |x| poly(&hc, x))
                    .f(move |x| fc.iter().map(|p| poly(p, x)).collect())
                    .w(|th| th.to_vec());
                if *family == FamilyKind::BAlpha {
                    let bf: Vec<S> = big_f.iter().map(|&v| c(v)).collect();
                    builder = builder.big_f(move |th| poly(&bf, th[0]));
                }
                let spec = builder.build()?;
                let t = spec.theta(&theta.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
                Ok((spec, t))
            }
        }
    }
}

/// Parse and build a family from a JSON document.
pub fn load_family_json<S: Real>(text: &str) -> Result<(FamilySpec<S>, ThetaPoint<S>)> {
    FamilyDoc::from_json(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_prefers_balanced_divisors() {
        assert_eq!(split_counts(50, 2), vec![10, 5]);
        assert_eq!(split_counts(50, 1), vec![50]);
        assert_eq!(
            ParamBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
                .grid(50, 0.05)
                .len(),
            50
        );
    }

    #[test]
    fn theta_rejected_on_boundary() {
        assert!(matches!(
            bernoulli_as_m2(1.0f64),
            Err(Error::ThetaOutOfBox { .. })
        ));
        assert!(matches!(
            bernoulli_as_m2(0.0f64),
            Err(Error::ThetaOutOfBox { .. })
        ));
    }

    #[test]
    fn polynomial_evaluation_ascending() {
        assert_eq!(poly(&[1.0, 2.0, 3.0], 2.0), 17.0);
    }
}
