//! The Rao-Blackwell operator `φ*(T) = E*_θ[θ̂ | T]` over enumerated sample
//! spaces, with the variance decomposition, uniqueness and covariance checks
//! built on it.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::deformed::{DeformedJoint, DeformedTable};
use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilySpec, ThetaPoint};
use crate::likelihoods::LikelihoodKind;
use crate::numerics::linalg::null_space;
use crate::numerics::stream;
use crate::scalar::Real;
use crate::sufficiency::{Bucket, StatisticFn};

/// Absolute tolerance on conditional expectations across θ.
pub const THETA_INDEPENDENCE_TOL: f64 = 1e-10;
/// Largest `|E*[ψ] − τ*|` accepted as unbiased.
pub const UNBIASED_TOL: f64 = 1e-10;
/// Pointwise tolerance for estimator equality and measurability.
pub const EQUALITY_TOL: f64 = 1e-10;

pub type EvalFn<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;

/// An estimator `θ̂(x_1^n)`.
#[derive(Clone)]
pub struct EstimatorFn<S: Real> {
    pub name: String,
    eval: EvalFn<S>,
}

impl<S: Real> fmt::Debug for EstimatorFn<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorFn")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl<S: Real> EstimatorFn<S> {
    pub fn new(name: impl Into<String>, f: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[S]) -> S {
        (self.eval)(x)
    }

    pub fn constant(c: S) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    /// `x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("x{}", i + 1), move |x| x[i])
    }

    /// `x̄`.
    pub fn mean() -> Self {
        Self::new("xbar", |x| {
            x.iter().copied().sum::<S>() / S::from_usize_lossy(x.len())
        })
    }

    /// `(1/n) Σ x_i²`.
    pub fn mean_of_squares() -> Self {
        Self::new("mean_sq", |x| {
            x.iter().map(|&v| v * v).sum::<S>() / S::from_usize_lossy(x.len())
        })
    }

    /// `x_i x_j`.
    pub fn product(i: usize, j: usize) -> Self {
        Self::new(format!("x{}x{}", i + 1, j + 1), move |x| x[i] * x[j])
    }

    /// `a·self + b·other + c`.
    pub fn combine(&self, a: S, other: &Self, b: S, c: S) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Self::new(
            format!("{a}*{}+{b}*{}+{c}", self.name, other.name),
            move |x| a * f(x) + b * g(x) + c,
        )
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// A function of `T` given by its value on each bucket; `NaN` off the table.
    pub fn from_buckets(
        name: impl Into<String>,
        stat: StatisticFn<S>,
        table: BTreeMap<Bucket, S>,
    ) -> Self {
        Self::new(name, move |x| {
            table.get(&stat.bucket(x)).copied().unwrap_or(S::nan())
        })
    }
}

/// Outcome of [`rao_blackwellize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RBReport<S> {
    pub theta: ThetaPoint<S>,
    /// `τ*(θ) = E*[θ̂]`.
    pub tau_star: S,
    pub var_original: S,
    pub var_rb: S,
    /// `Var*[θ̂] − Var*[φ*]`, unclamped.
    pub improvement: S,
    /// `θ̂` already T-measurable, checked pointwise.
    pub equality_flag: bool,
    /// `max_x |θ̂(x) − φ*(T(x))|`.
    pub pointwise_gap: S,
    /// `|E*[φ*] − E*[θ̂]|`.
    pub mean_gap: S,
    /// Largest spread of `E*_θ[θ̂ | t]` over the θ-grid.
    pub theta_deviation: S,
}

impl<S: Real> RBReport<S> {
    pub const CSV_HEADER: &'static str = "theta,tau_star,var_original,var_rb,improvement";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.theta.scalar().f64(),
            self.tau_star.f64(),
            self.var_original.f64(),
            self.var_rb.f64(),
            self.improvement.f64()
        )
    }
}

/// θ-grid and tolerance for the θ-independence check.
#[derive(Debug, Clone)]
pub struct RbConfig<S> {
    pub theta_grid: Vec<Vec<S>>,
    pub tol: S,
}

impl<S: Real> RbConfig<S> {
    /// Nine points inside the parameter box, 5% margin.
    pub fn for_spec(spec: &FamilySpec<S>) -> Self {
        Self {
            theta_grid: spec.param_box.grid(9, S::c(0.05)),
            tol: S::c(THETA_INDEPENDENCE_TOL),
        }
    }

    pub fn with_grid(mut self, grid: Vec<Vec<S>>) -> Self {
        self.theta_grid = grid;
        self
    }
}

/// `E*_θ[g]`.
pub fn deformed_expectation<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
    g: &EstimatorFn<S>,
) -> Result<S> {
    dj.expectation(theta, |x| g.eval(x))
}

/// Largest within-class spread of `g` over the enumerated space.
pub fn measurable_spread<S: Real>(
    table: &DeformedTable<S>,
    stat: &StatisticFn<S>,
    g: &EstimatorFn<S>,
) -> S {
    let mut range: BTreeMap<Bucket, (S, S)> = BTreeMap::new();
    for x in &table.samples {
        let v = g.eval(x);
        let e = range.entry(stat.bucket(x)).or_insert((v, v));
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    range
        .values()
        .map(|&(lo, hi)| hi - lo)
        .fold(S::zero(), S::max)
}

fn max_gap<S: Real>(table: &DeformedTable<S>, a: &EstimatorFn<S>, b: &EstimatorFn<S>) -> S {
    table
        .samples
        .iter()
        .map(|x| (a.eval(x) - b.eval(x)).abs())
        .fold(S::zero(), S::max)
}

fn require_measurable<S: Real>(
    table: &DeformedTable<S>,
    stat: &StatisticFn<S>,
    g: &EstimatorFn<S>,
) -> Result<()> {
    let spread = measurable_spread(table, stat, g);
    if spread > S::c(EQUALITY_TOL) || spread.is_nan() {
        return Err(Error::NotMeasurable {
            spread: spread.f64(),
        });
    }
    Ok(())
}

/// Largest `|E*_θ[g | t] − E*_θ′[g | t]|` over buckets and grid points,
/// relative to the values at `reference`.
pub fn theta_dependence<S: Real>(
    dj: &DeformedJoint<S>,
    stat: &StatisticFn<S>,
    reference: &BTreeMap<Bucket, S>,
    grid: &[Vec<S>],
    g: &EstimatorFn<S>,
) -> Result<S> {
    let mut dev = S::zero();
    for t in grid {
        let th = dj.theta(t)?;
        let cond = dj.table(&th)?.conditional_expectations(stat, |x| g.eval(x));
        for (b, &v) in &cond {
            if let Some(&r) = reference.get(b) {
                if v.is_finite() && r.is_finite() {
                    dev = dev.max((v - r).abs());
                }
            }
        }
    }
    Ok(dev)
}

/// `φ*(T) = E*_θ[θ̂ | T]` and its report. Fails with
/// `ThetaDependenceDetected` when the conditional expectations move with θ
/// on the grid, which happens when `T` is not sufficient for the likelihood.
pub fn rao_blackwellize<S: Real>(
    dj: &DeformedJoint<S>,
    stat: &StatisticFn<S>,
    theta: &ThetaPoint<S>,
    estimator: &EstimatorFn<S>,
    cfg: &RbConfig<S>,
) -> Result<(EstimatorFn<S>, RBReport<S>)> {
    let table = dj.table(theta)?;
    let cond = table.conditional_expectations(stat, |x| estimator.eval(x));
    let deviation = theta_dependence(dj, stat, &cond, &cfg.theta_grid, estimator)?;
    if deviation > cfg.tol {
        return Err(Error::ThetaDependenceDetected {
            deviation: deviation.f64(),
        });
    }
    let phi = EstimatorFn::from_buckets(
        format!("E*[{}|{}]", estimator.name, stat.name),
        stat.clone(),
        cond,
    );
    let tau_star = table.expect(|x| estimator.eval(x));
    let var_original = table.variance(|x| estimator.eval(x));
    let var_rb = table.variance(|x| phi.eval(x));
    let pointwise_gap = max_gap(&table, estimator, &phi);
    let report = RBReport {
        theta: theta.clone(),
        tau_star,
        var_original,
        var_rb,
        improvement: var_original - var_rb,
        equality_flag: pointwise_gap < S::c(EQUALITY_TOL),
        pointwise_gap,
        mean_gap: (table.expect(|x| phi.eval(x)) - tau_star).abs(),
        theta_deviation: deviation,
    };
    Ok((phi, report))
}

/// Terms of `Var*[θ̂] = E*[(θ̂ − ψ)²] + Var*[ψ] + 2E*[ψ(φ* − ψ)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition<S> {
    pub lhs: S,
    pub squared_error: S,
    pub var_psi: S,
    pub cross: S,
    pub residual: S,
    pub bias: S,
}

/// Checks the decomposition for a T-measurable `ψ` unbiased for `τ*`.
pub fn variance_decomposition_check<S: Real>(
    dj: &DeformedJoint<S>,
    stat: &StatisticFn<S>,
    theta: &ThetaPoint<S>,
    estimator: &EstimatorFn<S>,
    psi: &EstimatorFn<S>,
) -> Result<Decomposition<S>> {
    let table = dj.table(theta)?;
    require_measurable(&table, stat, psi)?;
    let tau = table.expect(|x| estimator.eval(x));
    let bias = table.expect(|x| psi.eval(x)) - tau;
    if bias.abs() > S::c(UNBIASED_TOL) {
        return Err(Error::PsiBiased { bias: bias.f64() });
    }
    let phi = EstimatorFn::from_buckets(
        "phi",
        stat.clone(),
        table.conditional_expectations(stat, |x| estimator.eval(x)),
    );
    let lhs = table.variance(|x| estimator.eval(x));
    let squared_error = table.expect(|x| {
        let d = estimator.eval(x) - psi.eval(x);
        d * d
    });
    let var_psi = table.variance(|x| psi.eval(x));
    let cross = S::c(2.0) * table.expect(|x| psi.eval(x) * (phi.eval(x) - psi.eval(x)));
    let residual = (lhs - squared_error - var_psi - cross).abs();
    Ok(Decomposition {
        lhs,
        squared_error,
        var_psi,
        cross,
        residual,
        bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Uniqueness {
    Unique,
    /// Several minimizers, all pointwise equal.
    TiedEqual,
    /// Several minimizers that differ somewhere.
    TiedDistinct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport<S> {
    pub statistic: String,
    /// Which members are functions of the statistic.
    pub measurable: Vec<bool>,
    pub names: Vec<String>,
    pub variances: Vec<S>,
    pub tau_star: S,
    pub min_variance: S,
    pub minimizers: Vec<usize>,
    pub verdict: Uniqueness,
}

/// Among estimators sharing one deformed mean, finds the minimal-variance
/// members and checks that ties are pointwise equal. Members need not be
/// T-measurable; `stat` only names the class for reporting.
pub fn uniqueness_probe<S: Real>(
    dj: &DeformedJoint<S>,
    stat: &StatisticFn<S>,
    theta: &ThetaPoint<S>,
    pool: &[EstimatorFn<S>],
) -> Result<UniquenessReport<S>> {
    let first = pool
        .first()
        .ok_or(Error::InsufficientProbes { needed: 1, got: 0 })?;
    let table = dj.table(theta)?;
    let tau_star = table.expect(|x| first.eval(x));
    let mut variances = Vec::with_capacity(pool.len());
    for g in pool {
        let bias = table.expect(|x| g.eval(x)) - tau_star;
        if bias.abs() > S::c(UNBIASED_TOL) {
            return Err(Error::PsiBiased { bias: bias.f64() });
        }
        variances.push(table.variance(|x| g.eval(x)));
    }
    let min_variance = variances.iter().copied().fold(S::infinity(), S::min);
    let minimizers: Vec<usize> = (0..pool.len())
        .filter(|&i| variances[i] - min_variance <= S::c(EQUALITY_TOL))
        .collect();
    let verdict = if minimizers.len() == 1 {
        Uniqueness::Unique
    } else if minimizers
        .windows(2)
        .all(|w| max_gap(&table, &pool[w[0]], &pool[w[1]]) <= S::c(EQUALITY_TOL))
    {
        Uniqueness::TiedEqual
    } else {
        Uniqueness::TiedDistinct
    };
    let measurable = pool
        .iter()
        .map(|g| measurable_spread(&table, stat, g) <= S::c(EQUALITY_TOL))
        .collect();
    Ok(UniquenessReport {
        statistic: stat.name.clone(),
        measurable,
        names: pool.iter().map(|g| g.name.clone()).collect(),
        variances,
        tau_star,
        min_variance,
        minimizers,
        verdict,
    })
}

/// Functions of `T` with `E*_θ[ψ(T)] = 0` at every grid θ.
#[derive(Debug, Clone)]
pub struct ZeroMeanPool<S: Real> {
    /// Dimension of the null space of the class-mass matrix `q*_θ(t)`.
    pub basis_dim: usize,
    pub buckets: Vec<Bucket>,
    pub members: Vec<EstimatorFn<S>>,
}

/// Draws `count` random members of the null space of `[q*_θ(t)]_{θ, t}`,
/// each scaled to `max |ψ| = 1`. Empty when `T` is complete on the grid.
pub fn zero_mean_pool<S: Real>(
    dj: &DeformedJoint<S>,
    stat: &StatisticFn<S>,
    grid: &[Vec<S>],
    count: usize,
    seed: u64,
) -> Result<ZeroMeanPool<S>> {
    let mut marginals = Vec::with_capacity(grid.len());
    for t in grid {
        marginals.push(dj.table(&dj.theta(t)?)?.marginals(stat));
    }
    let buckets: Vec<Bucket> = {
        let mut all: BTreeMap<Bucket, ()> = BTreeMap::new();
        for m in &marginals {
            all.extend(m.keys().map(|b| (b.clone(), ())));
        }
        all.into_keys().collect()
    };
    let rows: Vec<Vec<f64>> = marginals
        .iter()
        .map(|m| {
            let r: Vec<f64> = buckets
                .iter()
                .map(|b| m.get(b).map_or(0.0, |v| v.f64()))
                .collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| v / norm).collect()
        })
        .collect();
    let basis = null_space(&rows, buckets.len(), 1e-9);
    let mut members = Vec::new();
    if !basis.is_empty() {
        for k in 0..count {
            let mut rng = stream(seed, "zero_mean_pool", k as u64);
            let coef: Vec<f64> = basis
                .iter()
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let v: Vec<f64> = (0..buckets.len())
                .map(|j| basis.iter().zip(&coef).map(|(b, c)| b[j] * c).sum())
                .collect();
            let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let table: BTreeMap<Bucket, S> = buckets
                .iter()
                .cloned()
                .zip(v.iter().map(|&x| S::c(x / scale)))
                .collect();
            members.push(EstimatorFn::from_buckets(
                format!("psi{k}"),
                stat.clone(),
                table,
            ));
        }
    }
    Ok(ZeroMeanPool {
        basis_dim: basis.len(),
        buckets,
        members,
    })
}

/// `Cov*_θ[ψ, g]` for each pool member.
pub fn pool_covariances<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
    pool: &[EstimatorFn<S>],
    g: &EstimatorFn<S>,
) -> Result<Vec<S>> {
    let table = dj.table(theta)?;
    Ok(pool
        .iter()
        .map(|p| table.covariance(|x| p.eval(x), |x| g.eval(x)))
        .collect())
}

/// Classical Rao-Blackwell on an exponential family with `T = f̄`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalRbReport<S> {
    pub rb: RBReport<S>,
    /// Dimension of the zero-mean functions of `f̄` on the grid.
    pub null_dim: usize,
    /// Largest `|Cov_θ[ψ(f̄), f̄]|` over the checked `ψ`.
    pub max_abs_cov: S,
}

/// Rao-Blackwellizes `estimator` on `f̄` under the product density and
/// checks `Cov_θ[ψ(f̄), f̄] = 0` for zero-mean `ψ`. `psi = None` draws five
/// from the zero-mean null space, falling back to `ψ ≡ 0` when it is trivial.
pub fn classical_rb_exponential<S: Real>(
    spec: &FamilySpec<S>,
    n: usize,
    theta: &ThetaPoint<S>,
    estimator: &EstimatorFn<S>,
    psi: Option<&EstimatorFn<S>>,
) -> Result<ClassicalRbReport<S>> {
    if spec.kind != FamilyKind::Exponential || !spec.support.is_finite_set() {
        return Err(Error::Unsupported(
            "classical Rao-Blackwell needs an exponential family on a finite support".into(),
        ));
    }
    let dj = DeformedJoint::new(spec, LikelihoodKind::Log, n)?;
    let stat = StatisticFn::fbar(spec);
    let cfg = RbConfig::for_spec(spec);
    let (_, rb) = rao_blackwellize(&dj, &stat, theta, estimator, &cfg)?;
    let pool = zero_mean_pool(&dj, &stat, &cfg.theta_grid, 5, 0)?;
    let psis: Vec<EstimatorFn<S>> = match psi {
        Some(p) => {
            let table = dj.table(theta)?;
            require_measurable(&table, &stat, p)?;
            let bias = table.expect(|x| p.eval(x));
            if bias.abs() > S::c(UNBIASED_TOL) {
                return Err(Error::PsiBiased { bias: bias.f64() });
            }
            vec![p.clone()]
        }
        None if pool.members.is_empty() => vec![EstimatorFn::constant(S::zero())],
        None => pool.members.clone(),
    };
    let fbar = {
        let s = stat.clone();
        EstimatorFn::new("fbar", move |x| s.eval(x)[0])
    };
    let max_abs_cov = pool_covariances(&dj, theta, &psis, &fbar)?
        .into_iter()
        .map(|c| c.abs())
        .fold(S::zero(), S::max);
    Ok(ClassicalRbReport {
        rb,
        null_dim: pool.basis_dim,
        max_abs_cov,
    })
}
