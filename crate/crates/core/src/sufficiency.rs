//! Statistics, generalized Koopman sufficiency probes, factorization
//! witnesses and minimality probes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{regularity_check, FamilyKind, FamilySpec, RegularityReport, Support};
use crate::likelihoods::{LikelihoodAt, LikelihoodKind};
use crate::numerics::linalg::lstsq_residual;
use crate::numerics::{enumerate, space_cap, space_size, stream};
use crate::scalar::Real;

/// Quantized statistic value used as an equality class.
pub type Bucket = Vec<i64>;

/// Default bucket quantum.
pub const DEFAULT_QUANTUM: f64 = 1e-9;

/// What a statistic is known to depend on. Drives constructive pair
/// generation and canonical representatives on continuous spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StatShape {
    /// The sample itself.
    Identity,
    /// A function of `Σx` only.
    FirstMoment,
    /// A function of `(Σx, Σx²)` only.
    SecondMoment,
    General,
}

type StatEval<S> = Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>;

/// A statistic `T(x_1^n)` with a bucket map for equality classes.
#[derive(Clone)]
pub struct StatisticFn<S: Real> {
    pub name: String,
    pub arity: usize,
    pub quantum: S,
    pub shape: StatShape,
    /// Name of the family this is the canonical statistic of, if any.
    pub canonical_for: Option<String>,
    eval: StatEval<S>,
}

impl<S: Real> fmt::Debug for StatisticFn<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StatisticFn")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("shape", &self.shape)
            .finish()
    }
}

fn mean<S: Real>(x: &[S]) -> S {
    x.iter().copied().sum::<S>() / S::from_usize_lossy(x.len())
}

impl<S: Real> StatisticFn<S> {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        shape: StatShape,
        f: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arity,
            quantum: S::c(DEFAULT_QUANTUM),
            shape,
            canonical_for: None,
            eval: Arc::new(f),
        }
    }

    pub fn with_quantum(mut self, q: S) -> Self {
        self.quantum = q;
        self
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        (self.eval)(x)
    }

    /// Equality class: each coordinate rounded to a multiple of the quantum.
    pub fn bucket(&self, x: &[S]) -> Bucket {
        self.eval(x)
            .into_iter()
            .map(|v| (v / self.quantum).round().to_i64().unwrap_or(i64::MAX))
            .collect()
    }

    /// `T(x) = T(y)` up to the quantum, relative to the magnitude.
    pub fn matches(&self, x: &[S], y: &[S]) -> bool {
        let (a, b) = (self.eval(x), self.eval(y));
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(&u, &v)| (u - v).abs() <= self.quantum * (S::one() + u.abs().max(v.abs())))
    }

    pub fn sum() -> Self {
        Self::new("sum", 1, StatShape::FirstMoment, |x| {
            vec![x.iter().copied().sum()]
        })
    }

    pub fn mean() -> Self {
        Self::new("mean", 1, StatShape::FirstMoment, |x| vec![mean(x)])
    }

    /// `(Σx, Σx²)`.
    pub fn sums() -> Self {
        Self::new("sums", 2, StatShape::SecondMoment, |x| {
            vec![x.iter().copied().sum(), x.iter().map(|&v| v * v).sum()]
        })
    }

    /// `(mean x², mean x)`, the order used by the Student M^(α) family.
    pub fn moments() -> Self {
        Self::new("moments", 2, StatShape::SecondMoment, |x| {
            let sq: Vec<S> = x.iter().map(|&v| v * v).collect();
            vec![mean(&sq), mean(x)]
        })
    }

    pub fn identity() -> Self {
        Self::new("identity", 0, StatShape::Identity, |x| x.to_vec())
    }

    pub fn constant() -> Self {
        Self::new("constant", 1, StatShape::General, |_| vec![S::zero()])
    }

    /// `(Σx, x₁)`: finer than needed for Bernoulli.
    pub fn sum_and_first() -> Self {
        Self::new("sum_and_first", 2, StatShape::General, |x| {
            vec![x.iter().copied().sum(), x[0]]
        })
    }

    /// `f̄ = (1/n) Σ f(x_i)`.
    pub fn fbar(spec: &FamilySpec<S>) -> Self {
        let s = spec.clone();
        let shape = f_shape(spec, false);
        Self::new("fbar", spec.stat_dim, shape, move |x| fbar_of(&s, x))
    }

    /// `f̄/h̄`.
    pub fn fbar_over_hbar(spec: &FamilySpec<S>) -> Self {
        let s = spec.clone();
        let shape = f_shape(spec, true);
        Self::new("fbar_over_hbar", spec.stat_dim, shape, move |x| {
            let hb = mean(&x.iter().map(|&v| s.h(v)).collect::<Vec<_>>());
            fbar_of(&s, x).into_iter().map(|v| v / hb).collect()
        })
    }
}

fn fbar_of<S: Real>(spec: &FamilySpec<S>, x: &[S]) -> Vec<S> {
    let mut acc = vec![S::zero(); spec.stat_dim];
    for &v in x {
        for (a, b) in acc.iter_mut().zip(spec.f(v)) {
            *a = *a + b;
        }
    }
    let n = S::from_usize_lossy(x.len());
    acc.into_iter().map(|v| v / n).collect()
}

/// Polynomial degree (≤ 2) of every `f_i` on probe points, and of `h` when
/// it enters the statistic.
fn f_shape<S: Real>(spec: &FamilySpec<S>, with_h: bool) -> StatShape {
    let mid = spec.param_box.midpoint();
    let (c, s) = spec.locate(&mid);
    let xs: Vec<S> = match &spec.support {
        Support::Finite(p) => p.clone(),
        Support::Interval { lo, hi } => {
            let a = if lo.is_finite() {
                *lo
            } else {
                c - S::c(3.0) * s
            };
            let b = if hi.is_finite() {
                *hi
            } else {
                c + S::c(3.0) * s
            };
            (0..9)
                .map(|i| a + (b - a) * S::from_usize_lossy(i) / S::c(8.0))
                .collect()
        }
    };
    let ones = vec![S::one(); xs.len()];
    let lin = xs.clone();
    let sq: Vec<S> = xs.iter().map(|&x| x * x).collect();
    let degree = |y: &[S]| -> Option<usize> {
        let scale = y.iter().map(|v| v.abs()).fold(S::zero(), S::max) + S::one();
        let tol = S::c(1e-9) * scale;
        let bases = [
            vec![ones.clone()],
            vec![ones.clone(), lin.clone()],
            vec![ones.clone(), lin.clone(), sq.clone()],
        ];
        (0..3).find(|&d| {
            lstsq_residual(&bases[d], y, S::c(1e-12))
                .iter()
                .all(|r| r.abs() <= tol)
        })
    };
    if with_h {
        let h: Vec<S> = xs.iter().map(|&x| spec.h(x)).collect();
        if degree(&h) != Some(0) {
            return StatShape::General;
        }
    }
    let mut worst = 0;
    for i in 0..spec.stat_dim {
        let y: Vec<S> = xs.iter().map(|&x| spec.f(x)[i]).collect();
        match degree(&y) {
            Some(d) => worst = worst.max(d),
            None => return StatShape::General,
        }
    }
    if worst <= 1 {
        StatShape::FirstMoment
    } else {
        StatShape::SecondMoment
    }
}

/// `f̄/h̄` for M^(α), `f̄` for B^(α) and exponential families.
pub fn canonical_sufficient_statistic<S: Real>(spec: &FamilySpec<S>) -> StatisticFn<S> {
    let mut t = match spec.kind {
        FamilyKind::MAlpha => StatisticFn::fbar_over_hbar(spec),
        FamilyKind::BAlpha | FamilyKind::Exponential => StatisticFn::fbar(spec),
    };
    t.canonical_for = Some(spec.name.clone());
    t
}

/// Probe settings shared by the sufficiency operations.
#[derive(Debug, Clone)]
pub struct ProbeConfig<S> {
    pub n: usize,
    pub pair_budget: usize,
    pub theta_grid: Vec<Vec<S>>,
    /// Reference θ₀ for likelihood differences and continuous base draws.
    pub theta0: Vec<S>,
    /// Relative spread tolerance.
    pub tol: S,
    pub seed: u64,
}

impl<S: Real> ProbeConfig<S> {
    /// 50-point grid with a 5% margin, θ₀ at the box midpoint, 200 pairs.
    pub fn new(spec: &FamilySpec<S>, n: usize) -> Self {
        Self {
            n,
            pair_budget: 200,
            theta_grid: spec.param_box.grid(50, S::c(0.05)),
            theta0: spec.param_box.midpoint(),
            tol: S::c(1e-8),
            seed: 0,
        }
    }

    pub fn with_budget(mut self, b: usize) -> Self {
        self.pair_budget = b;
        self
    }

    pub fn with_tol(mut self, t: S) -> Self {
        self.tol = t;
        self
    }

    pub fn with_seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    pub fn with_grid(mut self, g: Vec<Vec<S>>) -> Self {
        self.theta_grid = g;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairStrategy {
    /// All pairs from the enumerated finite sample space.
    Enumerate,
    /// Moment-preserving moves of a drawn sample.
    Constructive,
    /// Random draws matched by bucket.
    Rejection,
}

/// Sample pairs with matching statistic.
#[derive(Debug, Clone)]
pub struct PairSet<S> {
    pub pairs: Vec<(Vec<S>, Vec<S>)>,
    pub strategy: PairStrategy,
    /// Every matching pair class of the space is represented.
    pub exhaustive: bool,
}

fn is_permutation<S: Real>(a: &[S], b: &[S]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    a == b
}

fn enumerable<S: Real>(spec: &FamilySpec<S>, n: usize) -> bool {
    spec.support
        .points()
        .is_some_and(|p| space_size(p.len(), n) <= space_cap() as u128)
}

/// Pick the pair strategy for a family, statistic and sample size.
pub fn pair_strategy<S: Real>(
    spec: &FamilySpec<S>,
    stat: &StatisticFn<S>,
    n: usize,
) -> PairStrategy {
    if enumerable(spec, n) {
        return PairStrategy::Enumerate;
    }
    match stat.shape {
        StatShape::FirstMoment if n >= 2 && !spec.support.is_finite_set() => {
            PairStrategy::Constructive
        }
        StatShape::SecondMoment if n >= 3 && !spec.support.is_finite_set() => {
            PairStrategy::Constructive
        }
        _ => PairStrategy::Rejection,
    }
}

/// Enumerated space grouped by bucket, in first-seen order.
pub fn bucket_space<S: Real>(
    spec: &FamilySpec<S>,
    stat: &StatisticFn<S>,
    n: usize,
) -> Result<BTreeMap<Bucket, Vec<Vec<S>>>> {
    let pts = spec.support.points().ok_or_else(|| {
        Error::Unsupported(format!("{} has no finite support to enumerate", spec.name))
    })?;
    let mut out: BTreeMap<Bucket, Vec<Vec<S>>> = BTreeMap::new();
    for x in enumerate(pts, n, space_cap())? {
        out.entry(stat.bucket(&x)).or_default().push(x);
    }
    Ok(out)
}

fn random_unit_orthogonal<S: Real>(
    n: usize,
    against: &[Vec<S>],
    rng: &mut impl Rng,
) -> Option<Vec<S>> {
    let mut v: Vec<S> = (0..n)
        .map(|_| S::c(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let ones = vec![S::one() / S::from_usize_lossy(n).sqrt(); n];
    for q in std::iter::once(&ones).chain(against) {
        let d: S = v.iter().zip(q).map(|(&a, &b)| a * b).sum();
        for (vi, &qi) in v.iter_mut().zip(q) {
            *vi = *vi - d * qi;
        }
    }
    let norm = v.iter().map(|&a| a * a).sum::<S>().sqrt();
    if norm <= S::c(1e-8) {
        return None;
    }
    Some(v.into_iter().map(|a| a / norm).collect())
}

/// Generate up to `cfg.pair_budget` pairs with `T(x) = T(y)` and `x` not a
/// permutation of `y`.
pub fn generate_pairs<S: Real>(
    spec: &FamilySpec<S>,
    stat: &StatisticFn<S>,
    cfg: &ProbeConfig<S>,
) -> Result<PairSet<S>> {
    let strategy = pair_strategy(spec, stat, cfg.n);
    match strategy {
        PairStrategy::Enumerate => {
            let buckets = bucket_space(spec, stat, cfg.n)?;
            let mut pairs = Vec::new();
            for members in buckets.values() {
                let rep = &members[0];
                for m in &members[1..] {
                    if !is_permutation(rep, m) {
                        pairs.push((rep.clone(), m.clone()));
                    }
                }
            }
            let exhaustive = pairs.len() <= cfg.pair_budget;
            if !exhaustive {
                pairs.shuffle(&mut stream(cfg.seed, "pairs", 0));
                pairs.truncate(cfg.pair_budget);
            }
            Ok(PairSet {
                pairs,
                strategy,
                exhaustive,
            })
        }
        PairStrategy::Constructive => {
            let theta0 = spec.theta(&cfg.theta0)?;
            let (_, scale) = spec.locate(&cfg.theta0);
            let mut pairs = Vec::new();
            for i in 0..cfg.pair_budget as u64 {
                let mut rng = stream(cfg.seed, "pairs", i);
                let x: Vec<S> = (0..cfg.n)
                    .map(|_| spec.draw(&theta0, &mut rng))
                    .collect::<Result<_>>()?;
                let y = match stat.shape {
                    StatShape::FirstMoment => {
                        let Some(v) = random_unit_orthogonal(cfg.n, &[], &mut rng) else {
                            continue;
                        };
                        let step = scale * S::c(rng.random_range(0.5..1.5));
                        x.iter()
                            .zip(&v)
                            .map(|(&a, &b)| a + step * b)
                            .collect::<Vec<S>>()
                    }
                    _ => {
                        let m = mean(&x);
                        let d: Vec<S> = x.iter().map(|&a| a - m).collect();
                        let r = d.iter().map(|&a| a * a).sum::<S>().sqrt();
                        if r <= S::c(1e-12) {
                            continue;
                        }
                        let e1: Vec<S> = d.iter().map(|&a| a / r).collect();
                        let Some(e2) =
                            random_unit_orthogonal(cfg.n, std::slice::from_ref(&e1), &mut rng)
                        else {
                            continue;
                        };
                        let phi = S::c(rng.random_range(0.3..(std::f64::consts::PI - 0.3)));
                        e1.iter()
                            .zip(&e2)
                            .map(|(&a, &b)| m + r * (phi.cos() * a + phi.sin() * b))
                            .collect()
                    }
                };
                if y.iter().all(|&v| spec.support.contains(v))
                    && stat.matches(&x, &y)
                    && !is_permutation(&x, &y)
                {
                    pairs.push((x, y));
                }
            }
            if pairs.is_empty() {
                return Err(Error::PairGenerationFailed {
                    budget: cfg.pair_budget,
                });
            }
            Ok(PairSet {
                pairs,
                strategy,
                exhaustive: false,
            })
        }
        PairStrategy::Rejection => {
            let theta0 = spec.theta(&cfg.theta0)?;
            let mut rng = stream(cfg.seed, "pairs", 0);
            let mut seen: HashMap<Bucket, Vec<Vec<S>>> = HashMap::new();
            let mut pairs = Vec::new();
            for _ in 0..cfg.pair_budget.saturating_mul(20) {
                let x: Vec<S> = (0..cfg.n)
                    .map(|_| spec.draw(&theta0, &mut rng))
                    .collect::<Result<_>>()?;
                let slot = seen.entry(stat.bucket(&x)).or_default();
                if let Some(y) = slot.iter().find(|y| !is_permutation(y, &x)) {
                    pairs.push((y.clone(), x.clone()));
                    if pairs.len() >= cfg.pair_budget {
                        break;
                    }
                }
                if slot.len() < 4 {
                    slot.push(x);
                }
            }
            if pairs.is_empty() {
                return Err(Error::PairGenerationFailed {
                    budget: cfg.pair_budget,
                });
            }
            Ok(PairSet {
                pairs,
                strategy,
                exhaustive: false,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Sufficient,
    NotSufficient,
    Inconclusive,
}

/// Outcome of [`koopman_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyVerdict<S> {
    pub verdict: Verdict,
    /// Largest absolute spread of `L(x;θ) − L(y;θ)` over the grid.
    pub max_spread: S,
    /// Largest spread relative to `1 + max |L|`.
    pub max_rel_spread: S,
    pub witness_pair: Option<(Vec<S>, Vec<S>)>,
    pub theta_grid_size: usize,
    pub pairs_tested: usize,
    pub strategy: PairStrategy,
    pub exhaustive: bool,
}

/// Relative spreads above `tol` but below this multiple of it are reported
/// as inconclusive rather than as a witness.
const GRAY_ZONE: f64 = 1e3;

fn bind_grid<'a, S: Real>(
    kind: LikelihoodKind<S>,
    spec: &'a FamilySpec<S>,
    grid: &[Vec<S>],
) -> Result<Vec<LikelihoodAt<'a, S>>> {
    grid.iter()
        .map(|t| kind.at(spec, &spec.theta(t)?))
        .collect()
}

/// Spread of `L(x;·) − L(y;·)` over bound likelihoods: `(absolute, relative)`.
fn pair_spread<S: Real>(bound: &[LikelihoodAt<'_, S>], x: &[S], y: &[S]) -> Result<(S, S)> {
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    let mut mag = S::zero();
    for b in bound {
        let (lx, ly) = (b.eval(x)?, b.eval(y)?);
        let d = lx - ly;
        lo = lo.min(d);
        hi = hi.max(d);
        mag = mag.max(lx.abs()).max(ly.abs());
    }
    let spread = hi - lo;
    Ok((spread, spread / (S::one() + mag)))
}

/// Generalized Koopman probe: is `L(x;θ) − L(y;θ)` free of θ whenever
/// `T(x) = T(y)`?
pub fn koopman_probe<S: Real>(
    kind: LikelihoodKind<S>,
    spec: &FamilySpec<S>,
    stat: &StatisticFn<S>,
    cfg: &ProbeConfig<S>,
) -> Result<SufficiencyVerdict<S>> {
    let set = generate_pairs(spec, stat, cfg)?;
    let bound = bind_grid(kind, spec, &cfg.theta_grid)?;
    let mut worst = (S::zero(), S::zero(), None);
    for (x, y) in &set.pairs {
        let (abs, rel) = pair_spread(&bound, x, y)?;
        if rel > worst.1 || worst.2.is_none() {
            worst = (
                worst.0.max(abs),
                rel.max(worst.1),
                Some((x.clone(), y.clone())),
            );
        } else {
            worst.0 = worst.0.max(abs);
        }
    }
    let (max_spread, max_rel_spread, pair) = worst;
    let verdict = if max_rel_spread <= cfg.tol {
        Verdict::Sufficient
    } else if max_rel_spread <= cfg.tol * S::c(GRAY_ZONE) {
        Verdict::Inconclusive
    } else {
        Verdict::NotSufficient
    };
    Ok(SufficiencyVerdict {
        verdict,
        max_spread,
        max_rel_spread,
        witness_pair: if verdict == Verdict::NotSufficient {
            pair
        } else {
            None
        },
        theta_grid_size: cfg.theta_grid.len(),
        pairs_tested: set.pairs.len(),
        strategy: set.strategy,
        exhaustive: set.exhaustive,
    })
}

/// Designated representative of each statistic class.
#[derive(Debug, Clone)]
pub enum RepPicker<S> {
    /// First enumerated member of each bucket.
    Table(BTreeMap<Bucket, Vec<S>>),
    /// `(x̄, …, x̄)`.
    MeanPoint,
    /// `x̄·1 + ‖x − x̄‖·e` with a fixed unit `e ⟂ 1`.
    MomentPoint,
    /// The sample itself.
    Itself,
}

impl<S: Real> RepPicker<S> {
    pub fn for_statistic(spec: &FamilySpec<S>, stat: &StatisticFn<S>, n: usize) -> Result<Self> {
        if stat.shape == StatShape::Identity {
            return Ok(RepPicker::Itself);
        }
        if enumerable(spec, n) {
            let table = bucket_space(spec, stat, n)?
                .into_iter()
                .map(|(k, mut v)| (k, v.swap_remove(0)))
                .collect();
            return Ok(RepPicker::Table(table));
        }
        match stat.shape {
            StatShape::FirstMoment => Ok(RepPicker::MeanPoint),
            StatShape::SecondMoment => Ok(RepPicker::MomentPoint),
            _ => Err(Error::Unsupported(format!(
                "no representative picker for statistic {}",
                stat.name
            ))),
        }
    }

    pub fn pick(&self, stat: &StatisticFn<S>, x: &[S]) -> Result<Vec<S>> {
        let n = x.len();
        match self {
            RepPicker::Itself => Ok(x.to_vec()),
            RepPicker::Table(t) => t.get(&stat.bucket(x)).cloned().ok_or(Error::EmptyBucket),
            RepPicker::MeanPoint => Ok(vec![mean(x); n]),
            RepPicker::MomentPoint => {
                let m = mean(x);
                if n < 2 {
                    return Ok(vec![m; n]);
                }
                let r = x.iter().map(|&a| (a - m) * (a - m)).sum::<S>().sqrt();
                let c = r / S::c(2.0).sqrt();
                let mut out = vec![m; n];
                out[0] = m + c;
                out[1] = m - c;
                Ok(out)
            }
        }
    }
}

/// `L(x;θ) = u(θ, T(x)) + v(x)` built from class representatives.
#[derive(Debug, Clone)]
pub struct Factorization<'a, S: Real> {
    pub kind: LikelihoodKind<S>,
    pub spec: &'a FamilySpec<S>,
    pub stat: StatisticFn<S>,
    pub theta0: Vec<S>,
    pub reps: RepPicker<S>,
}

impl<'a, S: Real> Factorization<'a, S> {
    /// `u(θ, T(x)) := L(rep(T(x)); θ)`.
    pub fn u(&self, theta: &[S], x: &[S]) -> Result<S> {
        let rep = self.reps.pick(&self.stat, x)?;
        self.kind
            .evaluate(self.spec, &self.spec.theta(theta)?, &rep)
    }

    /// `v(x) := L(x; θ₀) − L(rep(T(x)); θ₀)`.
    pub fn v(&self, x: &[S]) -> Result<S> {
        let th = self.spec.theta(&self.theta0)?;
        let rep = self.reps.pick(&self.stat, x)?;
        Ok(self.kind.evaluate(self.spec, &th, x)? - self.kind.evaluate(self.spec, &th, &rep)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport<S> {
    /// Largest `|L − u − v| / (1 + |L|)`.
    pub max_residual: S,
    pub probes: usize,
}

/// Factorization witness and its residual over probe samples and the
/// θ-grid. Fails with `ResidualExceedsTol` when the construction does not
/// reproduce the likelihood.
pub fn factorization_witness<'a, S: Real>(
    kind: LikelihoodKind<S>,
    spec: &'a FamilySpec<S>,
    stat: &StatisticFn<S>,
    cfg: &ProbeConfig<S>,
) -> Result<(Factorization<'a, S>, FactorizationReport<S>)> {
    let reps = RepPicker::for_statistic(spec, stat, cfg.n)?;
    let fact = Factorization {
        kind,
        spec,
        stat: stat.clone(),
        theta0: cfg.theta0.clone(),
        reps,
    };
    let samples: Vec<Vec<S>> = if enumerable(spec, cfg.n) {
        let pts = spec.support.points().expect("finite support");
        enumerate(pts, cfg.n, space_cap())?.collect()
    } else {
        let th = spec.theta(&cfg.theta0)?;
        (0..cfg.pair_budget as u64)
            .map(|i| {
                let mut rng = stream(cfg.seed, "factorization", i);
                (0..cfg.n)
                    .map(|_| spec.draw(&th, &mut rng))
                    .collect::<Result<Vec<S>>>()
            })
            .collect::<Result<_>>()?
    };
    let bound = bind_grid(kind, spec, &cfg.theta_grid)?;
    let th0 = spec.theta(&cfg.theta0)?;
    let l0 = kind.at(spec, &th0)?;
    let mut max_residual = S::zero();
    let mut probes = 0;
    for x in &samples {
        let rep = fact.reps.pick(stat, x)?;
        let v = l0.eval(x)? - l0.eval(&rep)?;
        for b in &bound {
            let l = b.eval(x)?;
            let u = b.eval(&rep)?;
            let r = (l - u - v).abs() / (S::one() + l.abs());
            max_residual = max_residual.max(r);
            probes += 1;
        }
    }
    if max_residual > cfg.tol {
        return Err(Error::ResidualExceedsTol {
            residual: max_residual.f64(),
            tol: cfg.tol.f64(),
        });
    }
    Ok((
        fact,
        FactorizationReport {
            max_residual,
            probes,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Minimality {
    Minimal,
    NotMinimal,
    Inconclusive,
    /// The statistic failed the sufficiency probe first.
    NotSufficient,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport<S> {
    pub verdict: Minimality,
    /// Samples in different classes whose likelihood difference is θ-free.
    pub witness_pair: Option<(Vec<S>, Vec<S>)>,
    /// All class pairs of a finite space were compared.
    pub exhaustive: bool,
    pub regularity: Option<RegularityReport>,
    /// Minimality follows from regularity of the family and the statistic
    /// being its canonical one.
    pub by_regularity: bool,
    pub classes: usize,
    pub sufficiency: SufficiencyVerdict<S>,
}

/// Converse probe: a θ-free likelihood difference must imply equal
/// statistics.
pub fn minimality_probe<S: Real>(
    kind: LikelihoodKind<S>,
    spec: &FamilySpec<S>,
    stat: &StatisticFn<S>,
    cfg: &ProbeConfig<S>,
) -> Result<MinimalityReport<S>> {
    let sufficiency = koopman_probe(kind, spec, stat, cfg)?;
    let (c, s) = spec.locate(&cfg.theta0);
    let regularity = regularity_check(
        spec,
        &cfg.theta_grid,
        &spec.support.probe_grid(cfg.theta_grid.len().max(8), c, s),
    )
    .ok();
    let mut report = MinimalityReport {
        verdict: Minimality::Inconclusive,
        witness_pair: None,
        exhaustive: false,
        regularity: regularity.clone(),
        by_regularity: false,
        classes: 0,
        sufficiency: sufficiency.clone(),
    };
    match sufficiency.verdict {
        Verdict::NotSufficient => {
            report.verdict = Minimality::NotSufficient;
            return Ok(report);
        }
        Verdict::Inconclusive => return Ok(report),
        Verdict::Sufficient => {}
    }
    if enumerable(spec, cfg.n) {
        let buckets = bucket_space(spec, stat, cfg.n)?;
        let bound = bind_grid(kind, spec, &cfg.theta_grid)?;
        let reps: Vec<&Vec<S>> = buckets.values().map(|m| &m[0]).collect();
        let rows: Vec<Vec<S>> = reps
            .iter()
            .map(|r| bound.iter().map(|b| b.eval(r)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        report.classes = reps.len();
        report.exhaustive = true;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let d0 = rows[i][0] - rows[j][0];
                let mut mag = S::zero();
                let constant = rows[i].iter().zip(&rows[j]).all(|(&a, &b)| {
                    mag = mag.max(a.abs()).max(b.abs());
                    ((a - b) - d0).abs() <= cfg.tol * (S::one() + mag)
                });
                if constant {
                    report.verdict = Minimality::NotMinimal;
                    report.witness_pair = Some((reps[i].clone(), reps[j].clone()));
                    return Ok(report);
                }
            }
        }
        report.verdict = Minimality::Minimal;
        return Ok(report);
    }
    let canonical = stat.canonical_for.as_deref() == Some(spec.name.as_str());
    if canonical && regularity.as_ref().is_some_and(|r| r.regular) {
        report.verdict = Minimality::Minimal;
        report.by_regularity = true;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_and_matching() {
        let t = StatisticFn::<f64>::sum();
        assert_eq!(t.bucket(&[0.1, 0.2]), t.bucket(&[0.2, 0.1]));
        assert!(t.matches(&[0.1, 0.2], &[0.3, 0.0]));
        assert!(!t.matches(&[0.1, 0.2], &[0.3, 0.1]));
    }

    #[test]
    fn permutation_test() {
        assert!(is_permutation(&[1.0f64, 0.0, 2.0], &[2.0, 1.0, 0.0]));
        assert!(!is_permutation(&[1.0f64, 1.0], &[0.0, 2.0]));
    }

    #[test]
    fn moment_representative_preserves_moments() {
        let t = StatisticFn::<f64>::moments();
        let x = [0.3, -1.2, 2.5, 0.0];
        let rep = RepPicker::MomentPoint.pick(&t, &x).unwrap();
        assert!(t.matches(&x, &rep));
        let rep2 = RepPicker::MomentPoint
            .pick(&t, &[2.5, 0.3, 0.0, -1.2])
            .unwrap();
        for (a, b) in rep.iter().zip(&rep2) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
