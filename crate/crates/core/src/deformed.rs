//! The deformed distribution `p*_θ ∝ exp L_G(x_1^n; θ)` over n-samples, its
//! normalizer, conditionals on statistic classes and class masses.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilySpec, ThetaPoint};
use crate::likelihoods::{LikelihoodAt, LikelihoodKind};
use crate::numerics::{
    enumerate, integrate_box, space_cap, space_size, tail_exponent, QuadOptions,
};
use crate::scalar::Real;
use crate::sufficiency::{Bucket, StatisticFn};

/// Largest continuous sample size handled by tensor quadrature.
pub const MAX_CONTINUOUS_N: usize = 3;

/// Quantum of the θ key in the normalizer cache.
const THETA_KEY_QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SampleSpace<S> {
    /// `points^n`, enumerated exactly.
    Finite { points: Vec<S> },
    /// `ℝ^n` (or a product interval), integrated by nested quadrature.
    Continuous { bounds: Vec<(S, S)> },
}

/// Which θ-free factors are dropped from `exp L_G` before normalizing.
/// `p*` is the same under every form; only the reported normalizer differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelForm {
    /// Log-likelihood: `Π p_θ(x_i)`, normalizer 1.
    Product,
    /// Jones(α) on an M^(α) family of the same α: `[h̄ + wᵀf̄]^{1/(α−1)}`.
    JonesCanonical,
    /// Basu(α) on a B^(α) family of the same α: `exp[α/(α−1)(h̄ + wᵀf̄)]`.
    BasuCanonical,
    /// `exp L_G` as is.
    ExpLikelihood,
}

impl KernelForm {
    fn choose<S: Real>(spec: &FamilySpec<S>, kind: &LikelihoodKind<S>) -> Self {
        let same = |a: S| (a - spec.alpha).abs() <= S::c(1e-12);
        match (kind, spec.kind) {
            (LikelihoodKind::Log, _) => KernelForm::Product,
            (LikelihoodKind::Jones(a), FamilyKind::MAlpha) if same(*a) => {
                KernelForm::JonesCanonical
            }
            (LikelihoodKind::Basu(a), FamilyKind::BAlpha) if same(*a) => KernelForm::BasuCanonical,
            _ => KernelForm::ExpLikelihood,
        }
    }
}

/// `p*_θ` for a family, a likelihood and a sample size.
#[derive(Debug, Clone)]
pub struct DeformedJoint<S: Real> {
    pub spec: FamilySpec<S>,
    pub likelihood: LikelihoodKind<S>,
    pub n: usize,
    pub space: SampleSpace<S>,
    pub form: KernelForm,
    /// Outer relative tolerance of the continuous quadrature; inner
    /// dimensions run 100 times tighter.
    pub rel_tol: S,
    cache: Arc<RwLock<HashMap<Vec<i64>, S>>>,
}

/// The kernel bound at one θ.
pub struct KernelAt<'a, S: Real> {
    form: KernelForm,
    lik: LikelihoodAt<'a, S>,
}

impl<'a, S: Real> KernelAt<'a, S> {
    /// `log` of the unnormalized kernel; `−∞` outside the support.
    pub fn log_kernel(&self, x: &[S]) -> Result<S> {
        let at = &self.lik.at;
        if x.iter().any(|&v| !at.spec.support.contains(v)) {
            return Ok(S::neg_infinity());
        }
        match self.form {
            KernelForm::Product | KernelForm::ExpLikelihood => self.lik.eval(x),
            KernelForm::JonesCanonical => {
                let b = x.iter().map(|&v| at.base(v)).sum::<S>() / S::from_usize_lossy(x.len());
                if !(b > S::zero()) {
                    return Err(Error::NonPositiveBase {
                        x: x[0].f64(),
                        base: b.f64(),
                    });
                }
                Ok(at.spec.exponent() * b.ln())
            }
            KernelForm::BasuCanonical => {
                let b = x.iter().map(|&v| at.base(v) - at.big_f).sum::<S>()
                    / S::from_usize_lossy(x.len());
                let a = at.spec.alpha;
                Ok(a / (a - S::one()) * b)
            }
        }
    }
}

/// Exact `p*_θ` over an enumerated finite space.
#[derive(Debug, Clone, Serialize)]
pub struct DeformedTable<S> {
    pub theta: Vec<S>,
    pub samples: Vec<Vec<S>>,
    pub probs: Vec<S>,
    pub log_normalizer: S,
}

impl<S: Real> DeformedTable<S> {
    /// `E*[g]`.
    pub fn expect(&self, mut g: impl FnMut(&[S]) -> S) -> S {
        self.samples
            .iter()
            .zip(&self.probs)
            .map(|(x, &p)| p * g(x))
            .sum()
    }

    /// `Var*[g]`, two-pass.
    pub fn variance(&self, mut g: impl FnMut(&[S]) -> S) -> S {
        let vals: Vec<S> = self.samples.iter().map(|x| g(x)).collect();
        let m: S = vals.iter().zip(&self.probs).map(|(&v, &p)| p * v).sum();
        vals.iter()
            .zip(&self.probs)
            .map(|(&v, &p)| p * (v - m) * (v - m))
            .sum()
    }

    /// `Cov*[g1, g2]`, two-pass.
    pub fn covariance(&self, mut g1: impl FnMut(&[S]) -> S, mut g2: impl FnMut(&[S]) -> S) -> S {
        let a: Vec<S> = self.samples.iter().map(|x| g1(x)).collect();
        let b: Vec<S> = self.samples.iter().map(|x| g2(x)).collect();
        let ma: S = a.iter().zip(&self.probs).map(|(&v, &p)| p * v).sum();
        let mb: S = b.iter().zip(&self.probs).map(|(&v, &p)| p * v).sum();
        a.iter()
            .zip(&b)
            .zip(&self.probs)
            .map(|((&u, &v), &p)| p * (u - ma) * (v - mb))
            .sum()
    }

    /// Class masses `q*(t)` in bucket order.
    pub fn marginals(&self, stat: &StatisticFn<S>) -> BTreeMap<Bucket, S> {
        let mut out = BTreeMap::new();
        for (x, &p) in self.samples.iter().zip(&self.probs) {
            let e = out.entry(stat.bucket(x)).or_insert(S::zero());
            *e = *e + p;
        }
        out
    }

    /// `E*[g | T]` per bucket.
    pub fn conditional_expectations(
        &self,
        stat: &StatisticFn<S>,
        mut g: impl FnMut(&[S]) -> S,
    ) -> BTreeMap<Bucket, S> {
        let mut acc: BTreeMap<Bucket, (S, S)> = BTreeMap::new();
        for (x, &p) in self.samples.iter().zip(&self.probs) {
            let e = acc.entry(stat.bucket(x)).or_insert((S::zero(), S::zero()));
            e.0 = e.0 + p * g(x);
            e.1 = e.1 + p;
        }
        acc.into_iter()
            .map(|(k, (num, q))| (k, if q > S::zero() { num / q } else { S::nan() }))
            .collect()
    }

    pub fn slice(&self, stat: &StatisticFn<S>, bucket: &Bucket) -> Result<ConditionalSlice<S>> {
        let mut members = Vec::new();
        let mut weights = Vec::new();
        for (x, &p) in self.samples.iter().zip(&self.probs) {
            if &stat.bucket(x) == bucket {
                members.push(x.clone());
                weights.push(p);
            }
        }
        if members.is_empty() {
            return Err(Error::EmptyBucket);
        }
        let q: S = weights.iter().copied().sum();
        if !(q > S::zero()) {
            return Err(Error::EmptyBucket);
        }
        for w in weights.iter_mut() {
            *w = *w / q;
        }
        Ok(ConditionalSlice {
            bucket: bucket.clone(),
            members,
            weights,
            q,
        })
    }
}

/// `p*_θ(x | T = t)` on the class `A_t`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalSlice<S> {
    pub bucket: Bucket,
    pub members: Vec<Vec<S>>,
    pub weights: Vec<S>,
    /// `q*_θ(t)`.
    pub q: S,
}

impl<S: Real> DeformedJoint<S> {
    pub fn new(spec: &FamilySpec<S>, likelihood: LikelihoodKind<S>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::DegenerateSample("n must be at least 1".into()));
        }
        let space = match spec.support.points() {
            Some(p) => {
                let states = space_size(p.len(), n);
                let cap = space_cap();
                if states > cap as u128 {
                    return Err(Error::SpaceTooLarge { states, cap });
                }
                SampleSpace::Finite { points: p.to_vec() }
            }
            None => {
                if n > MAX_CONTINUOUS_N {
                    return Err(Error::Unsupported(format!(
                        "continuous deformed joint needs n <= {MAX_CONTINUOUS_N}, got {n}"
                    )));
                }
                let crate::families::Support::Interval { lo, hi } = spec.support else {
                    unreachable!()
                };
                SampleSpace::Continuous {
                    bounds: vec![(lo, hi); n],
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            likelihood,
            n,
            space,
            form: KernelForm::choose(spec, &likelihood),
            rel_tol: S::c(if n >= 3 { 1e-6 } else { 1e-10 }),
            cache: Arc::new(RwLock::new(HashMap::new())),
        })
    }

    pub fn with_rel_tol(mut self, tol: S) -> Self {
        self.rel_tol = tol;
        self.cache = Arc::new(RwLock::new(HashMap::new()));
        self
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.space, SampleSpace::Finite { .. })
    }

    pub fn theta(&self, values: &[S]) -> Result<ThetaPoint<S>> {
        self.spec.theta(values)
    }

    pub fn kernel_at(&self, theta: &ThetaPoint<S>) -> Result<KernelAt<'_, S>> {
        Ok(KernelAt {
            form: self.form,
            lik: self.likelihood.at(&self.spec, theta)?,
        })
    }

    fn key(theta: &ThetaPoint<S>) -> Vec<i64> {
        theta
            .values
            .iter()
            .map(|v| (v.f64() / THETA_KEY_QUANTUM).round() as i64)
            .collect()
    }

    /// All samples of a finite space in lexicographic order.
    pub fn samples(&self) -> Result<Vec<Vec<S>>> {
        match &self.space {
            SampleSpace::Finite { points } => Ok(enumerate(points, self.n, space_cap())?.collect()),
            SampleSpace::Continuous { .. } => Err(Error::Unsupported(
                "continuous sample space cannot be enumerated".into(),
            )),
        }
    }

    /// `log ∫ kernel`, cached per θ.
    pub fn log_normalizer(&self, theta: &ThetaPoint<S>) -> Result<S> {
        let key = Self::key(theta);
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.compute_log_normalizer(theta)?;
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert(v);
        Ok(v)
    }

    /// `∫ kernel`; for Jones on a matching M^(α) family this is `N(θ)^{-1}`.
    pub fn normalizer(&self, theta: &ThetaPoint<S>) -> Result<S> {
        Ok(self.log_normalizer(theta)?.exp())
    }

    fn compute_log_normalizer(&self, theta: &ThetaPoint<S>) -> Result<S> {
        let k = self.kernel_at(theta)?;
        match &self.space {
            SampleSpace::Finite { points } => {
                let logs: Vec<S> = enumerate(points, self.n, space_cap())?
                    .map(|x| k.log_kernel(&x))
                    .collect::<Result<_>>()?;
                let mx = logs.iter().copied().fold(S::neg_infinity(), S::max);
                if !mx.is_finite() {
                    return Err(Error::DivergentNormalizer(format!(
                        "kernel maximum {}",
                        mx.f64()
                    )));
                }
                Ok(mx + logs.iter().map(|&l| (l - mx).exp()).sum::<S>().ln())
            }
            SampleSpace::Continuous { bounds } => {
                if self.form == KernelForm::Product {
                    return Ok(S::zero());
                }
                self.check_tails(theta, &k)?;
                let (c, _) = self.spec.locate(&theta.values);
                let shift = k.log_kernel(&vec![c; self.n])?;
                let mass = self.integrate(theta, bounds, S::one(), |x| {
                    Ok((k.log_kernel(x)? - shift).exp())
                })?;
                if !(mass > S::zero()) || !mass.is_finite() {
                    return Err(Error::DivergentNormalizer(format!(
                        "kernel mass {}",
                        mass.f64()
                    )));
                }
                Ok(shift + mass.ln())
            }
        }
    }

    /// Per-dimension options. `peak` is the integrand's size near the center;
    /// an integral over the last `k` dimensions is then of order
    /// `peak·s^k`, which sets its absolute tolerance so far-out slices stop
    /// refining once negligible.
    fn quad_options(&self, theta: &ThetaPoint<S>, peak: S) -> Vec<QuadOptions<S>> {
        let (c, s) = self.spec.locate(&theta.values);
        (0..self.n)
            .map(|d| {
                let tol = if d == 0 {
                    self.rel_tol
                } else {
                    self.rel_tol * S::c(1e-2)
                };
                let tol = tol.max(S::c(1e-12));
                let size = peak * s.powi((self.n - d) as i32);
                QuadOptions::default()
                    .with_rel_tol(tol)
                    .with_abs_tol((tol * size).max(S::c(1e-300)))
                    .centered(c, s)
            })
            .collect()
    }

    fn integrate(
        &self,
        theta: &ThetaPoint<S>,
        bounds: &[(S, S)],
        peak: S,
        g: impl Fn(&[S]) -> Result<S>,
    ) -> Result<S> {
        let failure: RwLock<Option<Error>> = RwLock::new(None);
        let r = integrate_box(
            |x| match g(x) {
                Ok(v) => v,
                Err(e) => {
                    failure.write().expect("lock").get_or_insert(e);
                    S::zero()
                }
            },
            bounds,
            &self.quad_options(theta, peak),
        );
        if let Some(e) = failure.into_inner().expect("lock") {
            return Err(e);
        }
        Ok(r?.value)
    }

    /// `p*(c)·max|g|` over the center and the points `c ± s` on the diagonal.
    fn probe_peak(
        &self,
        theta: &ThetaPoint<S>,
        k: &KernelAt<'_, S>,
        ln: S,
        g: &impl Fn(&[S]) -> S,
    ) -> Result<S> {
        let (c, s) = self.spec.locate(&theta.values);
        let mut gmax = S::zero();
        for x in [c, c - s, c + s] {
            let pt = vec![x; self.n];
            if self.spec.support.contains(x) {
                gmax = gmax.max(g(&pt).abs());
            }
        }
        let p = (k.log_kernel(&vec![c; self.n])? - ln).exp();
        Ok(p * gmax.max(S::c(1e-3)))
    }

    /// Ray directions used by the tail test: coordinate axes, the diagonal
    /// and an anti-diagonal, both signs.
    fn rays(&self) -> Vec<Vec<S>> {
        let n = self.n;
        let mut rays = Vec::new();
        for i in 0..n {
            let mut e = vec![S::zero(); n];
            e[i] = S::one();
            rays.push(e);
        }
        rays.push(vec![S::one() / S::from_usize_lossy(n).sqrt(); n]);
        if n >= 2 {
            let mut e = vec![S::zero(); n];
            e[0] = S::one() / S::c(2.0).sqrt();
            e[1] = -e[0];
            rays.push(e);
        }
        let neg: Vec<Vec<S>> = rays
            .iter()
            .map(|r| r.iter().map(|&v| -v).collect())
            .collect();
        rays.extend(neg);
        rays
    }

    /// Smallest decay exponent of `|h|` over the probe rays, `None` when `h`
    /// underflows along every ray.
    fn ray_decay(&self, theta: &ThetaPoint<S>, h: impl Fn(&[S]) -> S) -> Option<S> {
        let (c, s) = self.spec.locate(&theta.values);
        self.rays()
            .iter()
            .filter_map(|d| {
                let g = |r: S| {
                    let x: Vec<S> = d.iter().map(|&di| c + r * di).collect();
                    h(&x)
                };
                tail_exponent(g, S::zero(), s, S::one()).map(|p| {
                    if p.is_finite() {
                        p
                    } else {
                        S::neg_infinity()
                    }
                })
            })
            .reduce(S::min)
    }

    /// Along every probe ray the kernel must decay faster than `r^{-n}`.
    fn check_tails(&self, theta: &ThetaPoint<S>, k: &KernelAt<'_, S>) -> Result<()> {
        let need = S::from_usize_lossy(self.n);
        match self.ray_decay(theta, |x| {
            k.log_kernel(x).map(|l| l.exp()).unwrap_or(S::nan())
        }) {
            Some(p) if p <= need + S::c(1e-6) => Err(Error::DivergentNormalizer(format!(
                "kernel decays like r^-{:.4} along a ray, needs more than r^-{} in dimension {}",
                p.f64(),
                self.n,
                self.n
            ))),
            _ => Ok(()),
        }
    }

    /// Kernel mass on the boxes `[c − R s, c + R s]^n` for R in 1e2, 1e3, 1e4.
    /// Convergent kernels show increments that shrink with R.
    pub fn nested_box_masses(&self, theta: &ThetaPoint<S>) -> Result<Vec<S>> {
        let k = self.kernel_at(theta)?;
        let (c, s) = self.spec.locate(&theta.values);
        let shift = k.log_kernel(&vec![c; self.n])?;
        [1e2, 1e3, 1e4]
            .iter()
            .map(|&r| {
                let half = S::c(r) * s;
                let bounds = vec![(c - half, c + half); self.n];
                let opts = vec![
                    QuadOptions::default()
                        .with_rel_tol(self.rel_tol.max(S::c(1e-8)))
                        .centered(c, s);
                    self.n
                ];
                let r = integrate_box(
                    |x| {
                        k.log_kernel(x)
                            .map(|l| (l - shift).exp())
                            .unwrap_or(S::zero())
                    },
                    &bounds,
                    &opts,
                )?;
                Ok(r.value * shift.exp())
            })
            .collect()
    }

    /// `log p*_θ(x)`.
    pub fn log_density(&self, theta: &ThetaPoint<S>, x: &[S]) -> Result<S> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let ln = self.log_normalizer(theta)?;
        Ok(self.kernel_at(theta)?.log_kernel(x)? - ln)
    }

    /// `p*_θ(x)`.
    pub fn density(&self, theta: &ThetaPoint<S>, x: &[S]) -> Result<S> {
        Ok(self.log_density(theta, x)?.exp())
    }

    /// Exact `p*_θ` table over a finite space.
    pub fn table(&self, theta: &ThetaPoint<S>) -> Result<DeformedTable<S>> {
        let samples = self.samples()?;
        let k = self.kernel_at(theta)?;
        let logs: Vec<S> = samples
            .iter()
            .map(|x| k.log_kernel(x))
            .collect::<Result<_>>()?;
        let mx = logs.iter().copied().fold(S::neg_infinity(), S::max);
        if !mx.is_finite() {
            return Err(Error::DivergentNormalizer(format!(
                "kernel maximum {}",
                mx.f64()
            )));
        }
        let w: Vec<S> = logs.iter().map(|&l| (l - mx).exp()).collect();
        let total: S = w.iter().copied().sum();
        let log_normalizer = mx + total.ln();
        self.cache
            .write()
            .expect("cache lock")
            .entry(Self::key(theta))
            .or_insert(log_normalizer);
        Ok(DeformedTable {
            theta: theta.values.clone(),
            samples,
            probs: w.into_iter().map(|v| v / total).collect(),
            log_normalizer,
        })
    }

    /// `E*_θ[g]` by enumeration or quadrature.
    pub fn expectation(&self, theta: &ThetaPoint<S>, g: impl Fn(&[S]) -> S) -> Result<S> {
        match &self.space {
            SampleSpace::Finite { .. } => Ok(self.table(theta)?.expect(g)),
            SampleSpace::Continuous { bounds } => {
                let ln = self.log_normalizer(theta)?;
                let k = self.kernel_at(theta)?;
                let peak = self.probe_peak(theta, &k, ln, &g)?;
                let need = S::from_usize_lossy(self.n);
                let integrand = |x: &[S]| {
                    k.log_kernel(x)
                        .map(|l| (l - ln).exp() * g(x))
                        .unwrap_or(S::nan())
                };
                if let Some(p) = self
                    .ray_decay(theta, integrand)
                    .filter(|&p| p <= need + S::c(1e-6))
                {
                    return Err(Error::DivergentIntegral(format!(
                        "p*·g decays like r^-{:.4} along a ray, needs more than r^-{} in dimension {}",
                        p.f64().max(0.0),
                        self.n,
                        self.n
                    )));
                }
                self.integrate(theta, bounds, peak, |x| {
                    let p = (k.log_kernel(x)? - ln).exp();
                    Ok(if p == S::zero() { S::zero() } else { p * g(x) })
                })
            }
        }
    }

    /// `p*_θ(· | T = T(x))`; finite spaces only.
    pub fn conditional(
        &self,
        stat: &StatisticFn<S>,
        theta: &ThetaPoint<S>,
        x: &[S],
    ) -> Result<ConditionalSlice<S>> {
        self.require_finite()?;
        self.table(theta)?.slice(stat, &stat.bucket(x))
    }

    /// `q*_θ(t)` for one bucket.
    pub fn marginal_q(
        &self,
        stat: &StatisticFn<S>,
        theta: &ThetaPoint<S>,
        bucket: &Bucket,
    ) -> Result<S> {
        self.require_finite()?;
        self.table(theta)?
            .marginals(stat)
            .get(bucket)
            .copied()
            .ok_or(Error::EmptyBucket)
    }

    fn require_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "conditionals need a finite sample space".into(),
            ))
        }
    }
}
