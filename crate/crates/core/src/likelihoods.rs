//! Log, Jones, Basu and Cauchy-Schwarz likelihoods on i.i.d. samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilyAt, FamilySpec, ThetaPoint};
use crate::numerics::{fd_derivative, FdEstimate};
use crate::scalar::Real;

/// Which generalized likelihood to evaluate. `Jones` and `Basu` carry their
/// own α, which need not equal the family's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LikelihoodKind<S> {
    Log,
    Jones(S),
    Basu(S),
    CauchySchwarz,
}

impl<S: Real> LikelihoodKind<S> {
    pub fn alpha(&self) -> Option<S> {
        match self {
            LikelihoodKind::Jones(a) | LikelihoodKind::Basu(a) => Some(*a),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            LikelihoodKind::Log => "log".into(),
            LikelihoodKind::Jones(a) => format!("jones({a})"),
            LikelihoodKind::Basu(a) => format!("basu({a})"),
            LikelihoodKind::CauchySchwarz => "cauchy_schwarz".into(),
        }
    }

    fn check_alpha(&self) -> Result<()> {
        if let Some(a) = self.alpha() {
            if !(a > S::zero()) || a == S::one() {
                return Err(Error::InvalidFamily(format!(
                    "likelihood alpha must be positive and not 1, got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Bind the likelihood to a family at θ; θ-only terms are computed once.
    pub fn at<'a>(
        &self,
        spec: &'a FamilySpec<S>,
        theta: &ThetaPoint<S>,
    ) -> Result<LikelihoodAt<'a, S>> {
        self.check_alpha()?;
        let at = spec.at(theta)?;
        let theta_term = match self {
            LikelihoodKind::Log => S::zero(),
            LikelihoodKind::Jones(a) => spec.power_integral(theta, *a)?.ln() / *a,
            LikelihoodKind::Basu(a) => spec.power_integral(theta, *a)?,
            LikelihoodKind::CauchySchwarz => {
                let pts = spec.support.points().ok_or_else(|| {
                    Error::Unsupported("Cauchy-Schwarz likelihood needs a finite support".into())
                })?;
                let mut acc = S::zero();
                for &x in pts {
                    let p = at.density(x)?;
                    acc = acc + p * p;
                }
                acc
            }
        };
        Ok(LikelihoodAt {
            kind: *self,
            at,
            theta_term,
        })
    }

    /// `L(x; θ)`.
    pub fn evaluate(&self, spec: &FamilySpec<S>, theta: &ThetaPoint<S>, sample: &[S]) -> Result<S> {
        self.at(spec, theta)?.eval(sample)
    }
}

/// A likelihood bound to a family at a fixed θ.
#[derive(Debug, Clone)]
pub struct LikelihoodAt<'a, S: Real> {
    pub kind: LikelihoodKind<S>,
    pub at: FamilyAt<'a, S>,
    /// `log‖p‖` (Jones), `∫p^α` (Basu), `Σ p²` (Cauchy-Schwarz).
    pub theta_term: S,
}

impl<'a, S: Real> LikelihoodAt<'a, S> {
    fn log_densities(&self, sample: &[S]) -> Result<Vec<S>> {
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let l = self.at.log_density(x)?;
                if l == S::neg_infinity() {
                    Err(Error::ZeroDensityAtSample { index: i })
                } else {
                    Ok(l)
                }
            })
            .collect()
    }

    pub fn eval(&self, sample: &[S]) -> Result<S> {
        if sample.is_empty() {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        let n = S::from_usize_lossy(sample.len());
        match self.kind {
            LikelihoodKind::Log => Ok(self.log_densities(sample)?.into_iter().sum()),
            LikelihoodKind::Jones(a) => {
                let am1 = a - S::one();
                let logs = self.log_densities(sample)?;
                let m = mean_exp(&logs, am1);
                Ok(m / am1 - self.theta_term)
            }
            LikelihoodKind::Basu(a) => {
                let am1 = a - S::one();
                let logs = self.log_densities(sample)?;
                let s: S = logs
                    .iter()
                    .map(|&l| (a * (am1 * l).exp() - S::one()) / am1)
                    .sum();
                Ok(s / n - self.theta_term)
            }
            LikelihoodKind::CauchySchwarz => {
                let pn = EmpiricalPmf::from_sample(
                    sample,
                    self.at.spec.support.points().unwrap_or(&[]),
                )?;
                let mut cross = S::zero();
                for (&x, &m) in pn.atoms.iter().zip(&pn.masses) {
                    cross = cross + m * self.at.density(x)?;
                }
                Ok((cross / self.theta_term).ln())
            }
        }
    }
}

/// `ln[(1/n) Σ exp(c·l_i)]` with a max shift; `expm1`/`ln_1p` keep the
/// digits that survive division by `α − 1` as `α → 1`.
fn mean_exp<S: Real>(logs: &[S], c: S) -> S {
    let scaled: Vec<S> = logs.iter().map(|&l| c * l).collect();
    let mx = scaled.iter().copied().fold(S::neg_infinity(), S::max);
    let s: S = scaled.iter().map(|&v| (v - mx).exp_m1()).sum();
    mx + (s / S::from_usize_lossy(logs.len())).ln_1p()
}

/// Empirical distribution of a sample over a finite set of atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf<S> {
    pub atoms: Vec<S>,
    pub masses: Vec<S>,
}

impl<S: Real> EmpiricalPmf<S> {
    pub fn new(atoms: Vec<S>, masses: Vec<S>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: masses.len(),
            });
        }
        let total: S = masses.iter().copied().sum();
        if masses.iter().any(|&m| m < S::zero()) || (total - S::one()).abs() > S::c(1e-12) {
            return Err(Error::InvalidFamily(format!(
                "empirical masses must be nonnegative and sum to 1, sum {total}"
            )));
        }
        Ok(Self { atoms, masses })
    }

    pub fn from_sample(sample: &[S], atoms: &[S]) -> Result<Self> {
        let mut masses = vec![S::zero(); atoms.len()];
        let w = S::one() / S::from_usize_lossy(sample.len());
        for (i, &x) in sample.iter().enumerate() {
            let j = atoms
                .iter()
                .position(|&a| (a - x).abs() <= S::c(1e-12) * (S::one() + a.abs()))
                .ok_or(Error::OutsideSupport {
                    index: i,
                    value: x.f64(),
                })?;
            masses[j] = masses[j] + w;
        }
        Ok(Self {
            atoms: atoms.to_vec(),
            masses,
        })
    }
}

/// `Σ log p_θ(x_i)`.
pub fn log_likelihood<S: Real>(
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    sample: &[S],
) -> Result<S> {
    LikelihoodKind::Log.evaluate(spec, theta, sample)
}

/// `(1/(α−1)) log[(1/n) Σ p^{α−1}] − log‖p‖`.
pub fn jones_likelihood<S: Real>(
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    sample: &[S],
    alpha: S,
) -> Result<S> {
    LikelihoodKind::Jones(alpha).evaluate(spec, theta, sample)
}

/// Jones likelihood through the normalized density `p/‖p‖`.
pub fn jones_likelihood_normalized<S: Real>(
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    sample: &[S],
    alpha: S,
) -> Result<S> {
    let norm = lp_norm(spec, theta, alpha)?;
    let at = spec.at(theta)?;
    let am1 = alpha - S::one();
    let mut acc = S::zero();
    for (i, &x) in sample.iter().enumerate() {
        let p = at.density(x)?;
        if p == S::zero() {
            return Err(Error::ZeroDensityAtSample { index: i });
        }
        acc = acc + (p / norm).powf(am1);
    }
    Ok((acc / S::from_usize_lossy(sample.len())).ln() / am1)
}

/// `(1/n) Σ (α p^{α−1} − 1)/(α−1) − ∫ p^α`.
pub fn basu_likelihood<S: Real>(
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    sample: &[S],
    alpha: S,
) -> Result<S> {
    LikelihoodKind::Basu(alpha).evaluate(spec, theta, sample)
}

/// `log[Σ p_n p_θ / Σ p_θ²]` over a finite support.
pub fn cauchy_schwarz_likelihood<S: Real>(
    empirical: &EmpiricalPmf<S>,
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
) -> Result<S> {
    let bound = LikelihoodKind::CauchySchwarz.at(spec, theta)?;
    let mut cross = S::zero();
    for (&x, &m) in empirical.atoms.iter().zip(&empirical.masses) {
        cross = cross + m * bound.at.density(x)?;
    }
    Ok((cross / bound.theta_term).ln())
}

/// `‖p_θ‖_α = (∫ p_θ^α)^{1/α}`.
pub fn lp_norm<S: Real>(spec: &FamilySpec<S>, theta: &ThetaPoint<S>, alpha: S) -> Result<S> {
    Ok(spec.power_integral(theta, alpha)?.powf(S::one() / alpha))
}

/// Finite-difference gradient of `L(x; ·)` at θ, one Richardson-checked
/// estimate per coordinate. The base step is `rel_step` times the box width.
pub fn likelihood_gradient<S: Real>(
    kind: LikelihoodKind<S>,
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    sample: &[S],
    rel_step: S,
) -> Result<Vec<FdEstimate<S>>> {
    (0..theta.dim())
        .map(|i| {
            let h = rel_step * spec.param_box.width(i);
            let (lo, hi) = spec.param_box.bounds[i];
            let t = theta.values[i];
            if !(t - h > lo && t + h < hi) {
                return Err(Error::BoundaryTheta);
            }
            let mut failure = None;
            let est = fd_derivative(
                |v| {
                    let r = theta
                        .with_coord(i, v)
                        .and_then(|th| kind.evaluate(spec, &th, sample));
                    r.unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        S::nan()
                    })
                },
                t,
                1,
                h,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            est
        })
        .collect()
}
