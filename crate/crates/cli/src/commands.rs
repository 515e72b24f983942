//! Subcommand bodies. Each returns the rendered output and the list of
//! assertion outcomes.

use serde::Serialize;

use powerlaw_suff::bounds::{
    basu_location_moments, basu_student_location_bound, bound_report, fbar,
    student_quadrature_check, BasuLocationBound, StudentCheck,
};
use powerlaw_suff::deformed::DeformedJoint;
use powerlaw_suff::estimators::{robust_contamination_demo, RobustConfig, RobustRow};
use powerlaw_suff::families::bernoulli_as_m2;
use powerlaw_suff::raoblackwell::{rao_blackwellize, EstimatorFn, RbConfig};
use powerlaw_suff::scalar::binomial_coeff;
use powerlaw_suff::sufficiency::{koopman_probe, ProbeConfig, StatisticFn, SufficiencyVerdict};
use powerlaw_suff::{BoundReport, LikelihoodKind, RBReport};

use crate::presets::{self, Shape};
use crate::{CliError, Format};

/// Tolerance for exact-enumeration identities.
const EXACT_TOL: f64 = 1e-10;
/// Tolerance for identities that go through an FD derivative in θ.
const FD_TOL: f64 = 1e-6;
/// Relative tolerance for closed forms against quadrature.
const QUAD_TOL: f64 = 1e-5;
/// Sharpness slack: `gen_crlb ≥ classical_crlb − SHARP_TOL`.
const SHARP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Rendered output plus assertion outcomes.
pub struct Outcome {
    pub body: String,
    pub checks: Vec<Check>,
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct BernoulliReport<'a> {
    n: usize,
    rows: &'a [RBReport<f64>],
    checks: &'a [Check],
}

/// Bernoulli M^(2) under Jones(2): N(θ)⁻¹, τ*, conditional uniformity,
/// `E*[x₁ | Σx] = x̄`, `Var*[x₁] = τ*(1 − τ*)` and the variance bound.
pub fn verify_bernoulli(n: usize, grid: &[f64], format: Format) -> Result<Outcome, CliError> {
    let (spec, _) = bernoulli_as_m2(0.5)?;
    let dj = DeformedJoint::new(&spec, LikelihoodKind::Jones(2.0), n)?;
    let stat = StatisticFn::sum();
    let cfg = RbConfig::for_spec(&spec);
    let x1 = EstimatorFn::coordinate(0);
    let nf = n as f64;
    let mut rows = Vec::with_capacity(grid.len());
    let mut checks = Vec::new();
    for &t in grid {
        let th = spec.theta(&[t])?;
        let inv_norm = 2f64.powi(n as i32 - 1) / (1.0 - t);
        let got = dj.normalizer(&th)?;
        let rel = ((got - inv_norm) / inv_norm).abs();
        checks.push(check(
            format!("normalizer θ={t}"),
            rel < EXACT_TOL,
            format!("N⁻¹ = {got:.12e}, 2^(n−1)/(1−θ) = {inv_norm:.12e}"),
        ));
        let tau = t / nf + (nf - 1.0) / (2.0 * nf);
        let (phi, rb) = rao_blackwellize(&dj, &stat, &th, &x1, &cfg)?;
        checks.push(check(
            format!("tau_star θ={t}"),
            (rb.tau_star - tau).abs() < EXACT_TOL,
            format!("τ* = {:.12e}, θ/n + (n−1)/(2n) = {tau:.12e}", rb.tau_star),
        ));
        checks.push(check(
            format!("var_x1 θ={t}"),
            (rb.var_original - tau * (1.0 - tau)).abs() < EXACT_TOL,
            format!(
                "Var*[x₁] = {:.12e}, τ*(1−τ*) = {:.12e}",
                rb.var_original,
                tau * (1.0 - tau)
            ),
        ));
        let table = dj.table(&th)?;
        let mut weight_gap = 0.0f64;
        for bucket in table.marginals(&stat).keys() {
            let slice = table.slice(&stat, bucket)?;
            let k = slice.members[0].iter().sum::<f64>() as usize;
            let w = 1.0 / binomial_coeff::<f64>(n, k);
            for v in slice.weights {
                weight_gap = weight_gap.max((v - w).abs());
            }
        }
        let phi_gap = table
            .samples
            .iter()
            .map(|x| (phi.eval(x) - x.iter().sum::<f64>() / nf).abs())
            .fold(0.0, f64::max);
        checks.push(check(
            format!("conditional_uniform θ={t}"),
            weight_gap < EXACT_TOL,
            format!("max |p*(x|t) − 1/C(n,t)| = {weight_gap:.1e}"),
        ));
        checks.push(check(
            format!("phi_star_is_mean θ={t}"),
            phi_gap < EXACT_TOL,
            format!("max |φ*(x) − x̄| = {phi_gap:.1e}"),
        ));
        let b = bound_report(&dj, &th, &EstimatorFn::mean())?;
        checks.push(check(
            format!("variance_bound θ={t}"),
            (b.var_of_fbar - b.gen_crlb).abs() < FD_TOL,
            format!(
                "Var*[x̄] = {:.12e}, τ*′²/I* = {:.12e}",
                b.var_of_fbar, b.gen_crlb
            ),
        ));
        rows.push(rb);
    }
    let body = match format {
        Format::Csv => csv(
            RBReport::<f64>::CSV_HEADER,
            rows.iter().map(RBReport::csv_row),
        ),
        Format::Json => json(&BernoulliReport {
            n,
            rows: &rows,
            checks: &checks,
        })?,
    };
    Ok(Outcome { body, checks })
}

#[derive(Serialize)]
struct BasuSummary {
    closed: BasuLocationBound<f64>,
    mean_quadrature: f64,
    var_quadrature: f64,
}

#[derive(Serialize)]
struct StudentReport<'a> {
    check: StudentCheck<f64>,
    basu: &'a BasuSummary,
    checks: &'a [Check],
}

/// Largest n for the Basu location quadrature.
const BASU_MAX_N: usize = 2;

/// Student closed forms at σ² against quadrature, and the Basu location
/// variance.
pub fn verify_student(nu: f64, n: usize, sigma2: f64, format: Format) -> Result<Outcome, CliError> {
    if !(1..=3).contains(&n) {
        return Err(CliError::Usage(format!(
            "verify-student supports 1 <= n <= 3, got {n}"
        )));
    }
    let c = student_quadrature_check(nu, n, sigma2)?;
    let f = c.forms;
    let sn = sigma2.powf(n as f64 / 2.0);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut checks = vec![
        check(
            "h_n_identity",
            rel(sn * f.h_n_printed, c.z_inv_quadrature) < QUAD_TOL,
            format!(
                "σⁿH_n = {:.12e}, quadrature Z⁻¹ = {:.12e}",
                sn * f.h_n_printed,
                c.z_inv_quadrature
            ),
        ),
        check(
            "h_n_derived",
            rel(sn * f.h_n_derived, c.z_inv_quadrature) < QUAD_TOL,
            format!("derived σⁿH_n = {:.12e}", sn * f.h_n_derived),
        ),
        check(
            "e_star_xbar2_derived",
            rel(f.e_star_xbar2_derived * sigma2, c.e_star_xbar2_quadrature) < QUAD_TOL,
            format!(
                "B_nσ²/b = {:.12e}, quadrature = {:.12e}",
                f.e_star_xbar2_derived * sigma2,
                c.e_star_xbar2_quadrature
            ),
        ),
        check(
            "var_xbar2_derived",
            rel(
                f.gen_crlb_sigma4_coeff_derived * sigma2 * sigma2,
                c.var_xbar2_quadrature,
            ) < QUAD_TOL,
            format!(
                "B_n(C_n−B_n)σ⁴/b² = {:.12e}, quadrature = {:.12e}",
                f.gen_crlb_sigma4_coeff_derived * sigma2 * sigma2,
                c.var_xbar2_quadrature
            ),
        ),
    ];
    let closed = basu_student_location_bound(nu)?;
    let basu_n = n.min(BASU_MAX_N);
    let (mean_quadrature, var_quadrature) = basu_location_moments(nu, 0.0, basu_n)?;
    checks.push(check(
        format!("basu_location_var n={basu_n}"),
        rel(var_quadrature, closed.var_xbar) < QUAD_TOL,
        format!(
            "(1−α)/(2αbN^(α−1)) = {:.12e}, quadrature = {var_quadrature:.12e}",
            closed.var_xbar
        ),
    ));
    checks.push(check(
        "basu_location_symmetry",
        mean_quadrature.abs() < 1e-8,
        format!("E*[x̄] at μ = 0: {mean_quadrature:.1e}"),
    ));
    let basu = BasuSummary {
        closed,
        mean_quadrature,
        var_quadrature,
    };
    let body = match format {
        Format::Json => json(&StudentReport {
            check: c,
            basu: &basu,
            checks: &checks,
        })?,
        Format::Csv => {
            let row = |name: &str, printed: f64, derived: f64, quad: f64, flag: bool| {
                format!("{name},{printed:.12e},{derived:.12e},{quad:.12e},{flag}")
            };
            let s4 = sigma2 * sigma2;
            csv(
                STUDENT_CSV_HEADER,
                [
                    row(
                        "z_inv",
                        sn * f.h_n_printed,
                        sn * f.h_n_derived,
                        c.z_inv_quadrature,
                        c.h_n_discrepancy,
                    ),
                    row(
                        "e_star_xbar2",
                        f.e_star_xbar2_printed * sigma2,
                        f.e_star_xbar2_derived * sigma2,
                        c.e_star_xbar2_quadrature,
                        c.e_star_discrepancy,
                    ),
                    row(
                        "gen_crlb",
                        f.gen_crlb_sigma4_coeff_printed * s4,
                        f.gen_crlb_sigma4_coeff_derived * s4,
                        c.var_xbar2_quadrature,
                        c.crlb_discrepancy,
                    ),
                    row(
                        "basu_var_xbar",
                        closed.var_xbar,
                        closed.var_xbar,
                        var_quadrature,
                        rel(var_quadrature, closed.var_xbar) > QUAD_TOL,
                    ),
                ],
            )
        }
    };
    Ok(Outcome { body, checks })
}

pub const STUDENT_CSV_HEADER: &str = "quantity,printed,derived,quadrature,discrepancy";
pub const SUFFICIENCY_CSV_HEADER: &str =
    "verdict,max_spread,max_rel_spread,pairs_tested,theta_grid_size,strategy,exhaustive";

#[derive(Serialize)]
struct SufficiencyReport<'a> {
    family: &'a str,
    likelihood: String,
    statistic: &'a str,
    n: usize,
    #[serde(flatten)]
    verdict: &'a SufficiencyVerdict<f64>,
}

pub struct SufficiencyArgs<'a> {
    pub family: &'a str,
    pub theta: Option<&'a [f64]>,
    pub likelihood: Option<&'a str>,
    pub alpha: Option<f64>,
    pub statistic: &'a str,
    pub n: usize,
    pub budget: usize,
    pub seed: u64,
}

/// Koopman probe verdict. A `NotSufficient` verdict is a result, not an
/// assertion failure.
pub fn sufficiency(a: &SufficiencyArgs<'_>, format: Format) -> Result<Outcome, CliError> {
    let (spec, _) = presets::family(a.family, a.theta, Shape::Full)?;
    let kind = presets::likelihood(a.likelihood, a.alpha, &spec)?;
    let stat = presets::statistic(a.statistic, &spec)?;
    let cfg = ProbeConfig::new(&spec, a.n)
        .with_budget(a.budget)
        .with_seed(a.seed);
    let v = koopman_probe(kind, &spec, &stat, &cfg)?;
    let body = match format {
        Format::Json => json(&SufficiencyReport {
            family: &spec.name,
            likelihood: kind.name(),
            statistic: a.statistic,
            n: a.n,
            verdict: &v,
        })?,
        Format::Csv => csv(
            SUFFICIENCY_CSV_HEADER,
            [format!(
                "{:?},{:.12e},{:.12e},{},{},{:?},{}",
                v.verdict,
                v.max_spread,
                v.max_rel_spread,
                v.pairs_tested,
                v.theta_grid_size,
                v.strategy,
                v.exhaustive
            )],
        ),
    };
    Ok(Outcome {
        body,
        checks: Vec::new(),
    })
}

#[derive(Serialize)]
struct BoundsReport<'a> {
    family: &'a str,
    likelihood: String,
    n: usize,
    rows: &'a [BoundReport<f64>],
    checks: &'a [Check],
}

/// Generalized and classical bounds for `τ*(θ) = E*[f̄]` over a θ-grid.
pub fn bounds_table(
    family: &str,
    likelihood: Option<&str>,
    alpha: Option<f64>,
    n: usize,
    grid: &[f64],
    format: Format,
) -> Result<Outcome, CliError> {
    let (spec, _) = presets::family(family, None, Shape::Scalar)?;
    let kind = presets::likelihood(likelihood, alpha, &spec)?;
    let dj = DeformedJoint::new(&spec, kind, n)?;
    let g = fbar(&spec);
    let mut rows = Vec::with_capacity(grid.len());
    let mut checks = Vec::new();
    for &t in grid {
        let r = bound_report(&dj, &spec.theta(&[t])?, &g)?;
        checks.push(check(
            format!("sharpness θ={t}"),
            r.gen_crlb >= r.classical_crlb - SHARP_TOL,
            format!(
                "gen_crlb − classical_crlb = {:.3e}",
                r.gen_crlb - r.classical_crlb
            ),
        ));
        rows.push(r);
    }
    let body = match format {
        Format::Csv => csv(
            BoundReport::<f64>::CSV_HEADER,
            rows.iter().map(BoundReport::csv_row),
        ),
        Format::Json => json(&BoundsReport {
            family: &spec.name,
            likelihood: kind.name(),
            n,
            rows: &rows,
            checks: &checks,
        })?,
    };
    Ok(Outcome { body, checks })
}

/// Contamination experiment; the win fractions go to stderr in CSV mode.
pub fn robust_demo(cfg: &RobustConfig<f64>, format: Format) -> Result<(Outcome, String), CliError> {
    let demo = robust_contamination_demo(cfg)?;
    let summary = demo
        .win_fraction
        .iter()
        .map(|(a, f)| {
            format!(
                "jones(alpha={a}) beats MLE in {:.1}% of {} replications",
                100.0 * f,
                cfg.reps
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let body = match format {
        Format::Csv => csv(
            RobustRow::<f64>::CSV_HEADER,
            demo.rows.iter().map(RobustRow::csv_row),
        ),
        Format::Json => json(&demo)?,
    };
    Ok((
        Outcome {
            body,
            checks: Vec::new(),
        },
        summary,
    ))
}
