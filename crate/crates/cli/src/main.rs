//! `powerlaw-suff`: exact-enumeration and quadrature experiments for
//! deformed sufficiency, Rao-Blackwellization and generalized bounds.

mod commands;
mod presets;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use powerlaw_suff::estimators::RobustConfig;
use powerlaw_suff::numerics::MAX_SPACE_ENV;

use commands::{Check, Outcome, SufficiencyArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] powerlaw_suff::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Inclusive θ-grid `a:b:steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, steps] = parts[..] else {
            return Err(format!("expected a:b:steps, got {s:?}"));
        };
        let a: f64 = a.trim().parse().map_err(|e| format!("grid start: {e}"))?;
        let b: f64 = b.trim().parse().map_err(|e| format!("grid end: {e}"))?;
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|e| format!("grid steps: {e}"))?;
        if !(a.is_finite() && b.is_finite()) || steps == 0 {
            return Err(format!(
                "grid needs finite endpoints and steps >= 1, got {s:?}"
            ));
        }
        if steps == 1 {
            return Ok(Grid(vec![a]));
        }
        let h = (b - a) / (steps - 1) as f64;
        Ok(Grid(
            (0..steps)
                .map(|i| if i + 1 == steps { b } else { a + h * i as f64 })
                .collect(),
        ))
    }
}

const AFTER_HELP: &str = "\
CSV output (one header line, then one row per record):
  verify-bernoulli  theta,tau_star,var_original,var_rb,improvement
  bounds-table      theta,var_fbar,gen_crlb,classical_crlb,ratio
  verify-student    quantity,printed,derived,quadrature,discrepancy
  sufficiency       verdict,max_spread,max_rel_spread,pairs_tested,theta_grid_size,strategy,exhaustive
  robust-demo       rep,alpha,mu_hat,sigma2_hat,mle_mu,mle_sigma2,jones_wins
Floats are written as {:.12e} except theta, which is written as given.
Column meanings are listed in crates/cli/schema.json.

Families: bernoulli, binomial2, student3, student-location, or a path to a
family JSON document.

Exit status: 0 when every assertion holds, 1 when an assertion fails, 2 on
errors. POWERLAW_SUFF_MAX_SPACE overrides the enumeration cap (default 4096).";

#[derive(Debug, Parser)]
#[command(name = "powerlaw-suff", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for pair sampling and Monte Carlo replications.
    #[arg(long, global = true, default_value_t = 20_240_601)]
    seed: u64,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Enumeration cap for finite sample spaces.
    #[arg(long, global = true, env = MAX_SPACE_ENV, hide_env_values = true)]
    max_space: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bernoulli M^(2) under Jones(2): normalizer, τ*, conditional
    /// uniformity, φ* = x̄ and the variance bound, with the RB table for x₁.
    VerifyBernoulli {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value = "0.1:0.9:9")]
        theta_grid: Grid,
    },
    /// Student closed forms against quadrature, and the Basu location bound.
    VerifyStudent {
        /// Degrees of freedom; α = (ν−1)/(ν+1).
        #[arg(long, conflicts_with = "alpha")]
        nu: Option<f64>,
        /// Power index; ν = (1+α)/(1−α).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Scale σ² of t_ν(0, σ²).
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
    },
    /// Koopman probe: is L(x;θ) − L(y;θ) free of θ when T(x) = T(y)?
    Sufficiency {
        #[arg(long, default_value = "bernoulli")]
        family: String,
        /// Parameter values for the family, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        /// log, jones, basu or cauchy-schwarz; defaults to the family's own.
        #[arg(long)]
        likelihood: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// sum, mean, sums, moments, identity, fbar or canonical.
        #[arg(long, default_value = "sum")]
        statistic: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Pair budget for sampled pairs.
        #[arg(long, default_value_t = 1000)]
        budget: usize,
    },
    /// Var*[f̄], generalized and classical bounds over a θ-grid.
    BoundsTable {
        #[arg(long, default_value = "bernoulli")]
        family: String,
        #[arg(long)]
        likelihood: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "0.1:0.9:9", allow_hyphen_values = true)]
        theta_grid: Grid,
    },
    /// Jones vs MLE for a Normal sample with a fraction of outliers.
    RobustDemo {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 50.0, allow_hyphen_values = true)]
        outlier: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Jones α values, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1.5")]
        alpha: Vec<f64>,
    },
}

fn run(cli: Cli) -> Result<(Outcome, Option<String>), CliError> {
    let Common { seed, format, .. } = cli.common;
    Ok(match cli.command {
        Command::VerifyBernoulli { n, theta_grid } => {
            (commands::verify_bernoulli(n, &theta_grid.0, format)?, None)
        }
        Command::VerifyStudent {
            nu,
            alpha,
            n,
            sigma2,
        } => {
            let nu = match (nu, alpha) {
                (Some(nu), _) => nu,
                (None, Some(a)) if a > 0.0 && a < 1.0 => (1.0 + a) / (1.0 - a),
                (None, Some(a)) => {
                    return Err(CliError::Usage(format!(
                        "--alpha must lie in (0, 1) for a Student family, got {a}"
                    )))
                }
                (None, None) => 11.0,
            };
            (commands::verify_student(nu, n, sigma2, format)?, None)
        }
        Command::Sufficiency {
            family,
            theta,
            likelihood,
            alpha,
            statistic,
            n,
            budget,
        } => {
            let args = SufficiencyArgs {
                family: &family,
                theta: theta.as_deref(),
                likelihood: likelihood.as_deref(),
                alpha,
                statistic: &statistic,
                n,
                budget,
                seed,
            };
            (commands::sufficiency(&args, format)?, None)
        }
        Command::BoundsTable {
            family,
            likelihood,
            alpha,
            n,
            theta_grid,
        } => (
            commands::bounds_table(
                &family,
                likelihood.as_deref(),
                alpha,
                n,
                &theta_grid.0,
                format,
            )?,
            None,
        ),
        Command::RobustDemo {
            eps,
            outlier,
            n,
            reps,
            alpha,
        } => {
            let cfg = RobustConfig {
                eps,
                outlier,
                n,
                alphas: alpha,
                reps,
                ..RobustConfig::standard(seed)
            };
            let (out, summary) = commands::robust_demo(&cfg, format)?;
            (out, Some(summary))
        }
    })
}

fn emit(body: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, body)?;
        }
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn report(checks: &[Check]) -> bool {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
    for c in &failed {
        eprintln!("assertion failed: {}: {}", c.name, c.detail);
    }
    if !checks.is_empty() {
        eprintln!(
            "{} of {} assertions passed",
            checks.len() - failed.len(),
            checks.len()
        );
    }
    failed.is_empty()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(cap) = cli.common.max_space {
        // Single-threaded at this point; the library reads the cap from the environment.
        std::env::set_var(MAX_SPACE_ENV, cap.to_string());
    }
    let out = cli.common.out.clone();
    let result = run(cli).and_then(|(outcome, summary)| {
        emit(&outcome.body, out.as_ref())?;
        if let Some(s) = summary {
            eprintln!("{s}");
        }
        Ok(outcome.checks)
    });
    match result {
        Ok(checks) if report(&checks) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
