use powerlaw_suff::deformed::DeformedJoint;
use powerlaw_suff::families::*;
use powerlaw_suff::raoblackwell::*;
use powerlaw_suff::sufficiency::StatisticFn;
use powerlaw_suff::{Error, LikelihoodKind};
use proptest::prelude::*;

fn jones(n: usize) -> (DeformedJoint<f64>, StatisticFn<f64>, RbConfig<f64>) {
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let cfg = RbConfig::for_spec(&spec);
    (
        DeformedJoint::new(&spec, LikelihoodKind::Jones(2.0), n).unwrap(),
        StatisticFn::sum(),
        cfg,
    )
}

/// `p*(x) = (1−θ)/2^{n−1} · (1 + w x̄)`, `w = (2θ−1)/(1−θ)`, summed directly.
fn closed_expect(n: usize, theta: f64, g: impl Fn(&[f64]) -> f64) -> f64 {
    let w = (2.0 * theta - 1.0) / (1.0 - theta);
    let norm = (1.0 - theta) / 2f64.powi(n as i32 - 1);
    (0..1usize << n)
        .map(|code| {
            let x: Vec<f64> = (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as f64).collect();
            let xbar = x.iter().sum::<f64>() / n as f64;
            norm * (1.0 + w * xbar) * g(&x)
        })
        .sum()
}

fn tau(n: usize, theta: f64) -> f64 {
    theta / n as f64 + (n as f64 - 1.0) / (2.0 * n as f64)
}

#[test]
fn expectation_of_constant_and_first_coordinate() {
    let (dj, _, _) = jones(4);
    let th = dj.theta(&[0.3]).unwrap();
    assert!(
        (deformed_expectation(&dj, &th, &EstimatorFn::constant(2.5)).unwrap() - 2.5).abs() < 1e-14
    );
    for n in [1, 2, 3, 6] {
        let (dj, _, _) = jones(n);
        for t in [0.1, 0.35, 0.8] {
            let th = dj.theta(&[t]).unwrap();
            let e = deformed_expectation(&dj, &th, &EstimatorFn::coordinate(0)).unwrap();
            assert!((e - tau(n, t)).abs() < 1e-13, "n {n} θ {t}");
        }
    }
    let (spec, th) = bernoulli_exponential(0.35f64).unwrap();
    let dj = DeformedJoint::new(&spec, LikelihoodKind::Log, 3).unwrap();
    assert!(
        (deformed_expectation(&dj, &th, &EstimatorFn::coordinate(0)).unwrap() - 0.35).abs() < 1e-14
    );
}

#[test]
fn first_coordinate_blackwellizes_to_the_mean() {
    for n in [2, 3, 4, 6] {
        let (dj, stat, cfg) = jones(n);
        for t in [0.2, 0.5, 0.7] {
            let th = dj.theta(&[t]).unwrap();
            let (phi, rep) =
                rao_blackwellize(&dj, &stat, &th, &EstimatorFn::coordinate(0), &cfg).unwrap();
            for x in dj.samples().unwrap() {
                let xbar = x.iter().sum::<f64>() / n as f64;
                assert!((phi.eval(&x) - xbar).abs() < 1e-12);
            }
            let ts = tau(n, t);
            assert!((rep.tau_star - ts).abs() < 1e-13);
            assert!((rep.var_original - ts * (1.0 - ts)).abs() < 1e-13);
            let m = closed_expect(n, t, |x| x.iter().sum::<f64>() / n as f64);
            let m2 = closed_expect(n, t, |x| (x.iter().sum::<f64>() / n as f64).powi(2));
            assert!((rep.var_rb - (m2 - m * m)).abs() < 1e-13);
            assert!(rep.improvement > 0.0 || n == 1);
            assert!(!rep.equality_flag);
            assert!(rep.theta_deviation < 1e-12);
        }
    }
}

#[test]
fn measurable_estimator_is_a_fixed_point() {
    let (dj, stat, cfg) = jones(5);
    let th = dj.theta(&[0.6]).unwrap();
    let (phi, rep) = rao_blackwellize(&dj, &stat, &th, &EstimatorFn::mean(), &cfg).unwrap();
    assert!(rep.equality_flag);
    assert!(rep.improvement.abs() < 1e-15);
    assert!((phi.eval(&[1.0, 0.0, 1.0, 1.0, 0.0]) - 0.6).abs() < 1e-15);
}

#[test]
fn biased_product_keeps_its_own_mean() {
    let (dj, stat, cfg) = jones(3);
    let th = dj.theta(&[0.3]).unwrap();
    let est = EstimatorFn::product(0, 1);
    let (_, rep) = rao_blackwellize(&dj, &stat, &th, &est, &cfg).unwrap();
    let oracle = closed_expect(3, 0.3, |x| x[0] * x[1]);
    assert!((rep.tau_star - oracle).abs() < 1e-14);
    assert!(rep.mean_gap < 1e-12);
    assert!(rep.var_rb <= rep.var_original + 1e-12);
}

#[test]
fn insufficient_statistic_is_detected() {
    let (dj, _, cfg) = jones(3);
    let th = dj.theta(&[0.3]).unwrap();
    let first = StatisticFn::new(
        "x1",
        1,
        powerlaw_suff::sufficiency::StatShape::General,
        |x: &[f64]| vec![x[0]],
    );
    let err = rao_blackwellize(&dj, &first, &th, &EstimatorFn::coordinate(1), &cfg).unwrap_err();
    assert!(
        matches!(err, Error::ThetaDependenceDetected { deviation } if deviation > 1e-3),
        "{err:?}"
    );
}

#[test]
fn decomposition_with_psi_equal_phi() {
    let (dj, stat, cfg) = jones(4);
    let th = dj.theta(&[0.7]).unwrap();
    let est = EstimatorFn::coordinate(2);
    let (phi, _) = rao_blackwellize(&dj, &stat, &th, &est, &cfg).unwrap();
    let d = variance_decomposition_check(&dj, &stat, &th, &est, &phi).unwrap();
    assert!(d.residual < 1e-12);
    assert!(d.cross.abs() < 1e-14);
}

#[test]
fn decomposition_with_affine_psi() {
    let (dj, stat, _) = jones(4);
    for t in [0.15, 0.5, 0.85] {
        let th = dj.theta(&[t]).unwrap();
        let ts = tau(4, t);
        let psi = EstimatorFn::mean().combine(1.7, &EstimatorFn::constant(0.0), 0.0, -0.7 * ts);
        let d = variance_decomposition_check(&dj, &stat, &th, &EstimatorFn::coordinate(0), &psi)
            .unwrap();
        assert!(d.residual < 1e-12, "{d:?}");
        assert!(d.cross.abs() > 1e-4);
    }
}

#[test]
fn decomposition_rejects_bad_psi() {
    let (dj, stat, _) = jones(3);
    let th = dj.theta(&[0.4]).unwrap();
    let est = EstimatorFn::coordinate(0);
    let biased = EstimatorFn::mean().combine(1.0, &EstimatorFn::constant(0.0), 0.0, 0.1);
    assert!(matches!(
        variance_decomposition_check(&dj, &stat, &th, &est, &biased),
        Err(Error::PsiBiased { .. })
    ));
    assert!(matches!(
        variance_decomposition_check(&dj, &stat, &th, &est, &EstimatorFn::coordinate(1)),
        Err(Error::NotMeasurable { .. })
    ));
}

#[test]
fn mean_is_the_unique_minimizer() {
    let (dj, stat, _) = jones(4);
    let th = dj.theta(&[0.65]).unwrap();
    let xbar = EstimatorFn::mean();
    let x1 = EstimatorFn::coordinate(0);
    let pool: Vec<_> = [0.5, 1.0]
        .iter()
        .map(|&c| xbar.combine(1.0 - c, &x1, c, 0.0))
        .chain([xbar.clone()])
        .collect();
    let rep = uniqueness_probe(&dj, &stat, &th, &pool).unwrap();
    assert_eq!(rep.verdict, Uniqueness::Unique);
    assert_eq!(rep.minimizers, vec![2]);
    assert_eq!(rep.measurable, vec![false, false, true]);

    let single = uniqueness_probe(&dj, &stat, &th, &pool[..1]).unwrap();
    assert_eq!(single.verdict, Uniqueness::Unique);

    let twin = EstimatorFn::new("sum/n", |x: &[f64]| {
        x.iter().rev().sum::<f64>() / x.len() as f64
    });
    let tie = uniqueness_probe(&dj, &stat, &th, &[xbar.clone(), twin]).unwrap();
    assert_eq!(tie.verdict, Uniqueness::TiedEqual);
    assert_eq!(tie.minimizers.len(), 2);

    let biased = xbar.combine(1.0, &x1, 0.0, 0.2);
    assert!(matches!(
        uniqueness_probe(&dj, &stat, &th, &[xbar, biased]),
        Err(Error::PsiBiased { .. })
    ));
}

#[test]
fn classical_bernoulli_and_binomial() {
    let (spec, th) = bernoulli_exponential(0.3f64).unwrap();
    let r = classical_rb_exponential(&spec, 4, &th, &EstimatorFn::coordinate(0), None).unwrap();
    assert!((r.rb.var_rb - 0.3 * 0.7 / 4.0).abs() < 1e-14);
    assert!((r.rb.var_original - 0.21).abs() < 1e-14);
    assert_eq!(r.null_dim, 0);
    assert!(r.max_abs_cov < 1e-10);

    let (spec, th) = binomial(2, 0.45f64).unwrap();
    let est = EstimatorFn::new("x1/2", |x: &[f64]| x[0] / 2.0);
    let r = classical_rb_exponential(&spec, 3, &th, &est, None).unwrap();
    assert!((r.rb.tau_star - 0.45).abs() < 1e-14);
    assert!((r.rb.var_rb - 0.45 * 0.55 / 6.0).abs() < 1e-14);
    let zero = EstimatorFn::constant(0.0);
    let r = classical_rb_exponential(&spec, 3, &th, &est, Some(&zero)).unwrap();
    assert_eq!(r.max_abs_cov, 0.0);

    let (spec, th) = bernoulli_as_m2(0.3f64).unwrap();
    assert!(matches!(
        classical_rb_exponential(&spec, 2, &th, &EstimatorFn::mean(), None),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn zero_mean_functions_of_the_mean() {
    // q*_θ(t) spans {N, N·w}, so functions of Σx with zero mean for all θ
    // form an (n − 1)-dimensional space; at n = 2 it is c·(−1, 1, −1).
    for n in [2, 3, 4] {
        let (dj, stat, cfg) = jones(n);
        let pool = zero_mean_pool(&dj, &stat, &cfg.theta_grid, 4, 7).unwrap();
        assert_eq!(pool.basis_dim, n - 1);
        for t in [0.2, 0.6, 0.9] {
            let th = dj.theta(&[t]).unwrap();
            for p in &pool.members {
                assert!(deformed_expectation(&dj, &th, p).unwrap().abs() < 1e-12);
            }
        }
    }
    let (dj, _, _) = jones(2);
    let psi = EstimatorFn::new(
        "psi",
        |x: &[f64]| if x[0] + x[1] == 1.0 { 1.0 } else { -1.0 },
    );
    let xbar = EstimatorFn::mean();
    let th = dj.theta(&[0.7]).unwrap();
    let cov = pool_covariances(&dj, &th, std::slice::from_ref(&psi), &xbar).unwrap()[0];
    // −N w / 2 with N = (1−θ)/2, w = 4/3.
    assert!((cov + 0.1).abs() < 1e-14, "{cov}");
    // x̄ + 0.05ψ is unbiased for τ* at every θ and beats x̄ at θ = 0.7.
    let better = xbar.combine(1.0, &psi, 0.05, 0.0);
    let tab = dj.table(&th).unwrap();
    let v_xbar = tab.variance(|x| xbar.eval(x));
    let v_better = tab.variance(|x| better.eval(x));
    assert!((v_xbar - 0.115).abs() < 1e-14 && (v_better - 0.1075).abs() < 1e-14);
}

#[test]
fn csv_row_format() {
    let (dj, stat, cfg) = jones(2);
    let th = dj.theta(&[0.5]).unwrap();
    let (_, rep) = rao_blackwellize(&dj, &stat, &th, &EstimatorFn::coordinate(0), &cfg).unwrap();
    assert_eq!(
        RBReport::<f64>::CSV_HEADER,
        "theta,tau_star,var_original,var_rb,improvement"
    );
    let fields: Vec<f64> = rep
        .csv_row()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], 0.5);
    assert_eq!(fields[1], 0.5);
}

fn decode(code: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as f64).collect()
}

fn encode(x: &[f64]) -> usize {
    x.iter().fold(0, |acc, &v| acc * 2 + v as usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn theorem_chain_on_random_estimators(n in 1usize..=5, t in 0.05f64..0.95, seed in any::<u64>()) {
        let (dj, stat, cfg) = jones(n);
        let th = dj.theta(&[t]).unwrap();
        let values: Vec<f64> = (0..1usize << n).map(|k| ((seed.wrapping_mul(2654435761).wrapping_add(k as u64 * 40503) % 1000) as f64) / 100.0 - 5.0).collect();
        let est = EstimatorFn::new("random", move |x: &[f64]| values[encode(x)]);
        let (phi, rep) = rao_blackwellize(&dj, &stat, &th, &est, &cfg).unwrap();
        prop_assert!(rep.theta_deviation < 1e-10);
        prop_assert!(rep.mean_gap < 1e-12);
        prop_assert!(rep.var_rb <= rep.var_original + 1e-12);
        let gap = (0..1usize << n).map(|k| { let x = decode(k, n); (est.eval(&x) - phi.eval(&x)).abs() }).fold(0.0, f64::max);
        prop_assert_eq!(rep.equality_flag, gap < 1e-10);
        prop_assert_eq!(rep.equality_flag, (rep.var_original - rep.var_rb).abs() < 1e-10);
        let d = variance_decomposition_check(&dj, &stat, &th, &est, &phi).unwrap();
        prop_assert!(d.residual < 1e-10);
    }

    #[test]
    fn blackwellizing_a_function_of_t_is_idempotent(n in 1usize..=6, t in 0.05f64..0.95, vals in proptest::collection::vec(-3.0f64..3.0, 7)) {
        let (dj, stat, cfg) = jones(n);
        let th = dj.theta(&[t]).unwrap();
        let psi = EstimatorFn::new("g(T)", move |x: &[f64]| vals[x.iter().sum::<f64>() as usize]);
        let (phi, rep) = rao_blackwellize(&dj, &stat, &th, &psi, &cfg).unwrap();
        prop_assert!(rep.equality_flag);
        for k in 0..1usize << n {
            let x = decode(k, n);
            prop_assert!((phi.eval(&x) - psi.eval(&x)).abs() < 1e-12);
        }
    }
}
