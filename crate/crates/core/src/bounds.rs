//! Generalized score `s* = ∂_θ log p*_θ`, the informations `I*_{α,n}` and
//! `I_n*`, generalized Cramér-Rao bounds and the Student closed forms.

use serde::Serialize;

use crate::deformed::{DeformedJoint, KernelForm};
use crate::error::{Error, Result};
use crate::families::{
    student_as_b_alpha, student_constants, student_scale_as_m_alpha, FamilyKind, FamilySpec,
    ThetaPoint,
};
use crate::likelihoods::LikelihoodKind;
use crate::numerics::fd_derivative;
use crate::numerics::linalg::lstsq_residual;
use crate::raoblackwell::{EstimatorFn, EQUALITY_TOL, UNBIASED_TOL};
use crate::scalar::Real;

/// Finite-difference base step as a fraction of the box width.
pub const FD_REL_STEP: f64 = 1e-5;
/// Moments below this are treated as zero.
const ZERO_MOMENT: f64 = 1e-24;
/// Relative disagreement above which a closed form is flagged.
pub const DISCREPANCY_TOL: f64 = 1e-4;
/// Slack allowed below the generalized bound.
pub const BOUND_TOL: f64 = 1e-10;

fn require_scalar<S: Real>(theta: &ThetaPoint<S>) -> Result<()> {
    if theta.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "bounds need a scalar theta, got dimension {}",
            theta.dim()
        )));
    }
    Ok(())
}

/// Step `h` for θ-derivatives; the whole Richardson stencil must fit inside
/// the open box.
fn fd_step<S: Real>(theta: &ThetaPoint<S>) -> Result<S> {
    require_scalar(theta)?;
    let (lo, hi) = theta.bounds[0];
    let h = S::c(FD_REL_STEP) * (hi - lo);
    let t = theta.scalar();
    if !(t - h > lo && t + h < hi) {
        return Err(Error::BoundaryTheta);
    }
    Ok(h)
}

/// Richardson-checked `d/dθ g(θ)` where `g` may fail.
pub fn theta_derivative<S: Real>(
    theta: &ThetaPoint<S>,
    mut g: impl FnMut(&ThetaPoint<S>) -> Result<S>,
) -> Result<S> {
    let h = fd_step(theta)?;
    let mut failure = None;
    let est = fd_derivative(
        |t| match theta.with_coord(0, t).and_then(|th| g(&th)) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                S::nan()
            }
        },
        theta.scalar(),
        1,
        h,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est?.value)
}

/// `s*(x, θ) = ∂_θ log p*_θ(x)`.
pub fn score_star<S: Real>(dj: &DeformedJoint<S>, theta: &ThetaPoint<S>, x: &[S]) -> Result<S> {
    theta_derivative(theta, |th| dj.log_density(th, x))
}

/// `τ*′(θ) = d/dθ E*_θ[g]`.
pub fn tau_star_prime<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
    g: &EstimatorFn<S>,
) -> Result<S> {
    theta_derivative(theta, |th| dj.expectation(th, |x| g.eval(x)))
}

/// Exponent of the weight `p*^{α−1}`; `α = 1` for the log-likelihood.
fn weight_alpha<S: Real>(dj: &DeformedJoint<S>) -> S {
    dj.likelihood.alpha().unwrap_or(S::one())
}

/// Moments of `s*` and `u = p*^{α−1} s*` under `p*_θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreMoments<S> {
    pub alpha: S,
    pub mean_score: S,
    /// `I_n* = Var*[s*]`.
    pub var_score: S,
    pub var_weighted: S,
    pub cov: S,
}

impl<S: Real> ScoreMoments<S> {
    /// `I*_{α,n} = Cov*[s*, u]² / Var*[u]`.
    pub fn gen_fisher(&self) -> Result<S> {
        if !(self.cov * self.cov > S::c(ZERO_MOMENT)) || !(self.var_weighted > S::c(ZERO_MOMENT)) {
            return Err(Error::ZeroCovariance);
        }
        Ok(self.cov * self.cov / self.var_weighted)
    }

    pub fn classical_fisher(&self) -> Result<S> {
        if !(self.var_score > S::c(ZERO_MOMENT)) {
            return Err(Error::ZeroInformation);
        }
        Ok(self.var_score)
    }
}

/// Score moments by enumeration or quadrature.
pub fn score_moments<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
) -> Result<ScoreMoments<S>> {
    fd_step(theta)?;
    let alpha = weight_alpha(dj);
    let am1 = alpha - S::one();
    if dj.is_finite() {
        let table = dj.table(theta)?;
        let s: Vec<S> = table
            .samples
            .iter()
            .map(|x| score_star(dj, theta, x))
            .collect::<Result<_>>()?;
        let u: Vec<S> = s
            .iter()
            .zip(&table.probs)
            .map(|(&si, &p)| (am1 * p.ln()).exp() * si)
            .collect();
        let ev = |v: &[S]| -> S { v.iter().zip(&table.probs).map(|(&a, &p)| a * p).sum() };
        let (ms, mu) = (ev(&s), ev(&u));
        let cs: Vec<S> = s.iter().map(|&v| v - ms).collect();
        let cu: Vec<S> = u.iter().map(|&v| v - mu).collect();
        let prod = |a: &[S], b: &[S]| -> S {
            a.iter()
                .zip(b)
                .zip(&table.probs)
                .map(|((&x, &y), &p)| x * y * p)
                .sum()
        };
        return Ok(ScoreMoments {
            alpha,
            mean_score: ms,
            var_score: prod(&cs, &cs),
            var_weighted: prod(&cu, &cu),
            cov: prod(&cs, &cu),
        });
    }
    let score = |x: &[S]| score_star(dj, theta, x).unwrap_or(S::nan());
    let weighted = |x: &[S]| match (dj.log_density(theta, x), score_star(dj, theta, x)) {
        (Ok(l), Ok(s)) => (am1 * l).exp() * s,
        _ => S::nan(),
    };
    let e = |g: &dyn Fn(&[S]) -> S| -> Result<S> {
        let v = dj.expectation(theta, g)?;
        if v.is_nan() {
            return Err(Error::NoisyFunction { ratio: f64::NAN });
        }
        Ok(v)
    };
    let ms = e(&score)?;
    let mu = e(&weighted)?;
    let ss = e(&|x| score(x).powi(2))?;
    let uu = e(&|x| weighted(x).powi(2))?;
    let su = e(&|x| score(x) * weighted(x))?;
    Ok(ScoreMoments {
        alpha,
        mean_score: ms,
        var_score: ss - ms * ms,
        var_weighted: uu - mu * mu,
        cov: su - ms * mu,
    })
}

/// `I*_{α,n}(θ)`.
pub fn gen_fisher_info<S: Real>(dj: &DeformedJoint<S>, theta: &ThetaPoint<S>) -> Result<S> {
    score_moments(dj, theta)?.gen_fisher()
}

/// `I_n*(θ) = Var*[s*]`.
pub fn classical_fisher_info<S: Real>(dj: &DeformedJoint<S>, theta: &ThetaPoint<S>) -> Result<S> {
    score_moments(dj, theta)?.classical_fisher()
}

/// Bounds for estimating `τ*(θ) = E*[f̄]` at one θ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<S> {
    pub theta: ThetaPoint<S>,
    pub tau_star: S,
    pub tau_star_prime: S,
    pub gen_fisher: S,
    pub classical_fisher: S,
    /// `τ*′² / I*_{α,n}`.
    pub gen_crlb: S,
    /// `τ*′² / I_n*`.
    pub classical_crlb: S,
    pub var_of_fbar: S,
}

impl<S: Real> BoundReport<S> {
    pub const CSV_HEADER: &'static str = "theta,var_fbar,gen_crlb,classical_crlb,ratio";

    /// `ratio = gen_crlb / classical_crlb`, at least 1 up to rounding.
    pub fn ratio(&self) -> S {
        self.gen_crlb / self.classical_crlb
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.theta.scalar(),
            self.var_of_fbar.f64(),
            self.gen_crlb.f64(),
            self.classical_crlb.f64(),
            self.ratio().f64()
        )
    }

    /// `gen_crlb ≥ classical_crlb − 1e-10`.
    pub fn is_sharper(&self) -> bool {
        self.gen_crlb >= self.classical_crlb - S::c(BOUND_TOL)
    }
}

/// `f̄ = (1/n) Σ f(x_i)` for the first statistic of the family.
pub fn fbar<S: Real>(spec: &FamilySpec<S>) -> EstimatorFn<S> {
    let s = spec.clone();
    EstimatorFn::new("fbar", move |x| {
        x.iter().map(|&v| s.f(v)[0]).sum::<S>() / S::from_usize_lossy(x.len())
    })
}

/// Both bounds for `g` (usually `f̄`) at θ.
pub fn bound_report<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
    g: &EstimatorFn<S>,
) -> Result<BoundReport<S>> {
    let m = score_moments(dj, theta)?;
    let gen_fisher = m.gen_fisher()?;
    let classical_fisher = m.classical_fisher()?;
    let tau_star_prime = tau_star_prime(dj, theta, g)?;
    let tau_star = dj.expectation(theta, |x| g.eval(x))?;
    let second = dj.expectation(theta, |x| g.eval(x).powi(2))?;
    let t2 = tau_star_prime * tau_star_prime;
    Ok(BoundReport {
        theta: theta.clone(),
        tau_star,
        tau_star_prime,
        gen_fisher,
        classical_fisher,
        gen_crlb: t2 / gen_fisher,
        classical_crlb: t2 / classical_fisher,
        var_of_fbar: second - tau_star * tau_star,
    })
}

/// One pool member against the generalized bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrlbMember<S> {
    pub name: String,
    pub variance: S,
    /// `Var*[θ̂] − gen_crlb`.
    pub slack: S,
    pub attains: bool,
    /// Largest `|θ̂ − f̄|` over the space.
    pub distance_to_fbar: S,
}

/// Outcome of [`m_alpha_crlb_check`]. Violations are listed, not raised.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrlbCheck<S> {
    pub report: BoundReport<S>,
    pub members: Vec<CrlbMember<S>>,
    pub violations: Vec<String>,
}

/// Checks `Var*[θ̂] ≥ τ*′²/I*_{α,n}` for every pool member, with equality
/// only at `f̄`. Needs Jones(α) on an M^(α) family with `h ≡ 1` and
/// `w(θ) > 0`, over a finite space.
pub fn m_alpha_crlb_check<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
    pool: &[EstimatorFn<S>],
) -> Result<CrlbCheck<S>> {
    if dj.spec.kind != FamilyKind::MAlpha || dj.form != KernelForm::JonesCanonical {
        return Err(Error::Unsupported(
            "the generalized bound check needs Jones(alpha) on a matching M^(alpha) family".into(),
        ));
    }
    let points = dj.spec.support.points().ok_or_else(|| {
        Error::Unsupported("the generalized bound check needs a finite space".into())
    })?;
    if points
        .iter()
        .any(|&x| (dj.spec.h(x) - S::one()).abs() > S::c(EQUALITY_TOL))
    {
        return Err(Error::ValidityViolated("h(x) = 1 on the support".into()));
    }
    require_scalar(theta)?;
    let w = dj.spec.w(&theta.values)[0];
    if !(w > S::zero()) {
        return Err(Error::ValidityViolated(format!("w(theta) > 0, got {w}")));
    }
    let f = fbar(&dj.spec);
    let report = bound_report(dj, theta, &f)?;
    let table = dj.table(theta)?;
    for g in pool {
        let bias = table.expect(|x| g.eval(x)) - report.tau_star;
        if !(bias.abs() <= S::c(UNBIASED_TOL)) {
            return Err(Error::PsiBiased { bias: bias.f64() });
        }
    }
    let mut members = Vec::new();
    let mut violations = Vec::new();
    for g in pool {
        let variance = table.variance(|x| g.eval(x));
        let slack = variance - report.gen_crlb;
        let distance_to_fbar = table
            .samples
            .iter()
            .map(|x| (g.eval(x) - f.eval(x)).abs())
            .fold(S::zero(), S::max);
        let attains = slack.abs() <= S::c(BOUND_TOL);
        if slack < -S::c(BOUND_TOL) {
            violations.push(format!(
                "{}: variance {} below the bound by {:e}",
                g.name,
                variance,
                (-slack).f64()
            ));
        }
        if attains && distance_to_fbar > S::c(EQUALITY_TOL) {
            violations.push(format!(
                "{}: attains the bound but differs from fbar by {:e}",
                g.name,
                distance_to_fbar.f64()
            ));
        }
        members.push(CrlbMember {
            name: g.name.clone(),
            variance,
            slack,
            attains,
            distance_to_fbar,
        });
    }
    Ok(CrlbCheck {
        report,
        members,
        violations,
    })
}

/// Both sides of the two moment identities for Jones(α) on an M^(α) family
/// with `h ≡ 1`, where `w̃ = N^{α−1} w` and `N = 1/∫kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedScoreIdentities<S> {
    pub w_tilde_prime: S,
    pub tau_star_prime: S,
    pub var_fbar: S,
    /// `Var*[p*^{α−1}s*]`.
    pub var_weighted: S,
    /// `(w̃′/(α−1))² Var*[f̄]`.
    pub var_weighted_rhs: S,
    /// `Cov*[s*, p*^{α−1}s*]`.
    pub cov: S,
    /// `(w̃′/(α−1)) τ*′`.
    pub cov_rhs: S,
}

pub fn weighted_score_identities<S: Real>(
    dj: &DeformedJoint<S>,
    theta: &ThetaPoint<S>,
) -> Result<WeightedScoreIdentities<S>> {
    if dj.form != KernelForm::JonesCanonical {
        return Err(Error::Unsupported(
            "identities need Jones(alpha) on a matching M^(alpha) family".into(),
        ));
    }
    let alpha = weight_alpha(dj);
    let am1 = alpha - S::one();
    let m = score_moments(dj, theta)?;
    let w_tilde_prime = theta_derivative(theta, |th| {
        Ok((-am1 * dj.log_normalizer(th)?).exp() * dj.spec.w(&th.values)[0])
    })?;
    let f = fbar(&dj.spec);
    let tau_star_prime = tau_star_prime(dj, theta, &f)?;
    let mean = dj.expectation(theta, |x| f.eval(x))?;
    let var_fbar = dj.expectation(theta, |x| (f.eval(x) - mean).powi(2))?;
    let k = w_tilde_prime / am1;
    Ok(WeightedScoreIdentities {
        w_tilde_prime,
        tau_star_prime,
        var_fbar,
        var_weighted: m.var_weighted,
        var_weighted_rhs: k * k * var_fbar,
        cov: m.cov,
        cov_rhs: k * tau_star_prime,
    })
}

/// Largest residual of `L_B(x; θ)` regressed on `(1, h̄, f̄)` over the
/// given samples; zero when `exp L_B` has the exponential form.
pub fn basu_affine_residual<S: Real>(
    spec: &FamilySpec<S>,
    theta: &ThetaPoint<S>,
    alpha: S,
    samples: &[Vec<S>],
) -> Result<S> {
    let lik = LikelihoodKind::Basu(alpha).at(spec, theta)?;
    let y: Vec<S> = samples.iter().map(|x| lik.eval(x)).collect::<Result<_>>()?;
    let mean = |g: &dyn Fn(S) -> S, x: &[S]| {
        x.iter().map(|&v| g(v)).sum::<S>() / S::from_usize_lossy(x.len())
    };
    let mut cols = vec![
        vec![S::one(); samples.len()],
        samples.iter().map(|x| mean(&|v| spec.h(v), x)).collect(),
    ];
    for j in 0..spec.stat_dim {
        cols.push(samples.iter().map(|x| mean(&|v| spec.f(v)[j], x)).collect());
    }
    let r = lstsq_residual(&cols, &y, S::c(1e-12));
    Ok(r.iter().map(|v| v.abs()).fold(S::zero(), S::max))
}

/// Closed forms for `t_ν(0, σ²)` with n observations, α = (ν−1)/(ν+1),
/// `b = 1/ν`. Fields ending in `_printed` follow the printed branches;
/// `_derived` are the Beta-prime integrals. Coefficients multiply `σⁿ`
/// (`h_n`), `σ²` (moment) and `σ⁴` (bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudentClosedForms<S> {
    pub alpha: S,
    pub nu: S,
    pub n: usize,
    pub b: S,
    pub a_n: S,
    pub b_n: S,
    pub c_n: S,
    pub h_n_printed: S,
    pub h_n_derived: S,
    pub e_star_xbar2_printed: S,
    pub e_star_xbar2_derived: S,
    pub gen_crlb_sigma4_coeff_printed: S,
    pub gen_crlb_sigma4_coeff_derived: S,
}

fn check_threshold<S: Real>(alpha: S, bound: S, name: &str) -> Result<()> {
    if alpha > bound {
        Ok(())
    } else {
        Err(Error::ValidityViolated(format!(
            "{name}: alpha = {alpha} must exceed {bound}"
        )))
    }
}

/// Printed and derived Student quantities. All three validity thresholds
/// are enforced.
pub fn student_closed_forms<S: Real>(nu: S, n: usize) -> Result<StudentClosedForms<S>> {
    if !(nu > S::c(2.0)) || n == 0 {
        return Err(Error::InvalidFamily(format!(
            "Student closed forms need nu > 2 and n >= 1, got nu = {nu}, n = {n}"
        )));
    }
    let (alpha, b, _) = student_constants(nu, S::one());
    let one = S::one();
    let two = S::c(2.0);
    let nn = S::from_usize_lossy(n);
    check_threshold(alpha, one - two / nn, "alpha > 1 - 2/n (H_n)")?;
    check_threshold(alpha, nn / (nn + two), "alpha > n/(n+2) (E*[xbar^2])")?;
    check_threshold(
        alpha,
        (nn + two) / (nn + S::c(4.0)),
        "alpha > (n+2)/(n+4) (generalized CRLB)",
    )?;
    let oma = one - alpha;
    let a_n = oma * (nn - two) / (two - nn * oma);
    let b_n = nn * oma / (two * alpha - nn * oma);
    let c_n = oma * (nn + two) / (two * alpha + (nn + two) * (alpha - one));
    let k = (n / 2) as i32;
    let pi = S::PI();
    let m = one / oma;
    let base = (nn * pi / b).powf(nn / two);
    let h_n_printed = if n % 2 == 1 {
        (pi * b).sqrt() * base * ((one + alpha) / (two * oma)).lgamma().exp() * a_n.powi(k)
            / ((nn / two).lgamma().exp() * m.lgamma().exp())
    } else {
        base * oma * a_n.powi(k - 1) / (alpha * (nn / two).lgamma().exp())
    };
    let h_n_derived = base * ((m - nn / two).lgamma() - m.lgamma()).exp();
    let (e_printed, crlb_printed) = if n.is_multiple_of(2) {
        (
            a_n.powi(2 - k) * b_n.powi(k - 1) / b,
            a_n.powi(3 - k) * (c_n.powi(k - 1) - a_n.powi(1 - k) * b_n.powi(2 * k - 1)) / (b * b),
        )
    } else {
        (
            a_n.powi(1 - k) * b_n.powi(k) / b,
            a_n.powi(2 - k) * (c_n.powi(k) - a_n.powi(-k) * b_n.powi(2 * k)) / (b * b),
        )
    };
    Ok(StudentClosedForms {
        alpha,
        nu,
        n,
        b,
        a_n,
        b_n,
        c_n,
        h_n_printed,
        h_n_derived,
        e_star_xbar2_printed: e_printed,
        e_star_xbar2_derived: b_n / b,
        gen_crlb_sigma4_coeff_printed: crlb_printed,
        gen_crlb_sigma4_coeff_derived: b_n * (c_n - b_n) / (b * b),
    })
}

fn rel_diff<S: Real>(a: S, b: S) -> S {
    (a - b).abs() / b.abs().max(S::c(1e-300))
}

/// Student closed forms at σ² against quadrature of the Jones(α) `p*`.
/// A flag is set when the printed value differs from quadrature by more
/// than [`DISCREPANCY_TOL`] relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudentCheck<S> {
    pub forms: StudentClosedForms<S>,
    pub sigma2: S,
    /// `∫ [1 + b x̄²/σ²]^{1/(α−1)}` where `x̄²` is the mean of squares.
    pub z_inv_quadrature: S,
    pub e_star_xbar2_quadrature: S,
    /// `Var*[x̄²]`, the bound attained by the mean of squares.
    pub var_xbar2_quadrature: S,
    pub h_n_discrepancy: bool,
    pub e_star_discrepancy: bool,
    pub crlb_discrepancy: bool,
}

pub fn student_quadrature_check<S: Real>(nu: S, n: usize, sigma2: S) -> Result<StudentCheck<S>> {
    let forms = student_closed_forms(nu, n)?;
    let (spec, theta) = student_scale_as_m_alpha(nu, sigma2)?;
    let dj = DeformedJoint::new(&spec, LikelihoodKind::Jones(forms.alpha), n)?;
    let z_inv_quadrature = dj.normalizer(&theta)?;
    let msq = EstimatorFn::mean_of_squares();
    let e = dj.expectation(&theta, |x| msq.eval(x))?;
    let var = dj.expectation(&theta, |x| (msq.eval(x) - e).powi(2))?;
    let sn = sigma2.powf(S::from_usize_lossy(n) / S::c(2.0));
    let tol = S::c(DISCREPANCY_TOL);
    Ok(StudentCheck {
        forms,
        sigma2,
        z_inv_quadrature,
        e_star_xbar2_quadrature: e,
        var_xbar2_quadrature: var,
        h_n_discrepancy: rel_diff(sn * forms.h_n_printed, z_inv_quadrature) > tol,
        e_star_discrepancy: rel_diff(forms.e_star_xbar2_printed * sigma2, e) > tol,
        crlb_discrepancy: rel_diff(forms.gen_crlb_sigma4_coeff_printed * sigma2 * sigma2, var)
            > tol,
    })
}

/// Location example under Basu(α) on the B^(α) Student family with σ² = 1:
/// `E*[x̄] = μ` and `Var*[x̄] = (1−α)/(2α b N^{α−1})` for every n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasuLocationBound<S> {
    pub nu: S,
    pub alpha: S,
    pub b: S,
    /// `N_ν` at σ² = 1.
    pub n_alpha: S,
    pub var_xbar: S,
}

pub fn basu_student_location_bound<S: Real>(nu: S) -> Result<BasuLocationBound<S>> {
    if !(nu > S::c(2.0)) {
        return Err(Error::InvalidFamily(format!(
            "Basu location bound needs nu > 2, got {nu}"
        )));
    }
    let (alpha, b, n_alpha) = student_constants(nu, S::one());
    let var_xbar = (S::one() - alpha) / (S::c(2.0) * alpha * b * n_alpha.powf(alpha - S::one()));
    Ok(BasuLocationBound {
        nu,
        alpha,
        b,
        n_alpha,
        var_xbar,
    })
}

/// Mean and variance of `x̄` under Basu(α) `p*` at μ, by quadrature.
pub fn basu_location_moments<S: Real>(nu: S, mu: S, n: usize) -> Result<(S, S)> {
    let (spec, theta) = student_as_b_alpha(nu, mu, S::one())?;
    let dj = DeformedJoint::new(&spec, LikelihoodKind::Basu(spec.alpha), n)?;
    let xbar = EstimatorFn::mean();
    let m = dj.expectation(&theta, |x| xbar.eval(x))?;
    let v = dj.expectation(&theta, |x| (xbar.eval(x) - m).powi(2))?;
    Ok((m, v))
}
