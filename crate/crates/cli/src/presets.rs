//! Built-in families and the selectors shared by the subcommands.

use std::path::Path;

use powerlaw_suff::families::{
    bernoulli_as_m2, binomial, load_family_json, student_as_m_alpha, student_location_as_m_alpha,
    student_scale_as_m_alpha,
};
use powerlaw_suff::sufficiency::{canonical_sufficient_statistic, StatisticFn};
use powerlaw_suff::{Family, FamilyKind, LikelihoodKind, Theta};

use crate::CliError;

pub const PRESETS: [&str; 4] = ["bernoulli", "binomial2", "student3", "student-location"];

/// How a preset is parameterized for a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Any parameter dimension.
    Full,
    /// One scalar θ, as needed by θ-grid tables.
    Scalar,
}

/// Resolves `--family`: a preset name or a path to a family JSON document.
/// `student3` is t₃(μ, σ²) in θ = (μ, σ²), or t₃(0, σ²) in θ = σ² when a
/// scalar parameter is required.
pub fn family(
    name: &str,
    theta: Option<&[f64]>,
    shape: Shape,
) -> Result<(Family, Theta), CliError> {
    let scalar = |default: f64| theta.map_or(Ok(default), single);
    let (spec, th) = match name {
        "bernoulli" => bernoulli_as_m2(scalar(0.3)?)?,
        "binomial2" => binomial(2, scalar(0.3)?)?,
        "student3" if shape == Shape::Scalar => student_scale_as_m_alpha(3.0, scalar(1.0)?)?,
        "student3" => {
            let t = theta.unwrap_or(&[0.0, 1.0]);
            if t.len() != 2 {
                return Err(CliError::Usage(format!(
                    "student3 takes --theta mu,sigma2, got {} values",
                    t.len()
                )));
            }
            student_as_m_alpha(3.0, t[0], t[1])?
        }
        "student-location" => student_location_as_m_alpha(3.0, scalar(0.0)?, 1.0)?,
        path if Path::new(path).is_file() => {
            let text = std::fs::read_to_string(path)?;
            let (spec, default) = load_family_json::<f64>(&text)?;
            let th = match theta {
                Some(t) => spec.theta(t)?,
                None => default,
            };
            (spec, th)
        }
        other => {
            return Err(CliError::Usage(format!("unknown family {other:?}: expected one of {PRESETS:?} or a path to a family JSON file")));
        }
    };
    if shape == Shape::Scalar && spec.theta_dim() != 1 {
        return Err(CliError::Usage(format!(
            "{} has a {}-dimensional parameter; this subcommand needs a scalar θ",
            spec.name,
            spec.theta_dim()
        )));
    }
    Ok((spec, th))
}

fn single(t: &[f64]) -> Result<f64, CliError> {
    match t {
        [v] => Ok(*v),
        _ => Err(CliError::Usage(format!(
            "expected a single --theta value, got {}",
            t.len()
        ))),
    }
}

/// The likelihood paired with a family by default: Jones on M^(α), Basu on
/// B^(α), log-likelihood on exponential families.
pub fn natural_likelihood(spec: &Family) -> LikelihoodKind<f64> {
    match spec.kind {
        FamilyKind::MAlpha => LikelihoodKind::Jones(spec.alpha),
        FamilyKind::BAlpha => LikelihoodKind::Basu(spec.alpha),
        FamilyKind::Exponential => LikelihoodKind::Log,
    }
}

/// Parses `--likelihood`; `alpha` overrides the family α for Jones/Basu.
pub fn likelihood(
    name: Option<&str>,
    alpha: Option<f64>,
    spec: &Family,
) -> Result<LikelihoodKind<f64>, CliError> {
    let a = alpha.unwrap_or(spec.alpha);
    Ok(match name {
        None => match (natural_likelihood(spec), alpha) {
            (LikelihoodKind::Jones(_), Some(a)) => LikelihoodKind::Jones(a),
            (LikelihoodKind::Basu(_), Some(a)) => LikelihoodKind::Basu(a),
            (k, _) => k,
        },
        Some("log") => LikelihoodKind::Log,
        Some("jones") => LikelihoodKind::Jones(a),
        Some("basu") => LikelihoodKind::Basu(a),
        Some("cauchy-schwarz") => LikelihoodKind::CauchySchwarz,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "unknown likelihood {other:?}: expected log, jones, basu or cauchy-schwarz"
            )))
        }
    })
}

pub fn statistic(name: &str, spec: &Family) -> Result<StatisticFn<f64>, CliError> {
    Ok(match name {
        "sum" => StatisticFn::sum(),
        "mean" => StatisticFn::mean(),
        "sums" => StatisticFn::sums(),
        "moments" => StatisticFn::moments(),
        "identity" => StatisticFn::identity(),
        "fbar" => StatisticFn::fbar(spec),
        "canonical" => canonical_sufficient_statistic(spec),
        other => {
            return Err(CliError::Usage(format!("unknown statistic {other:?}: expected sum, mean, sums, moments, identity, fbar or canonical")));
        }
    })
}
