use powerlaw_suff::families::*;
use powerlaw_suff::sufficiency::*;
use powerlaw_suff::{Error, FamilyKind, LikelihoodKind, ParamBox, Support};

type Family = powerlaw_suff::Family;

/// M^(2) on {1,2,3} with non-constant `h(x) = x` and `f(x) = x²`.
fn weighted_m2() -> Family {
    FamilyBuilder::new(
        "weighted_m2",
        FamilyKind::MAlpha,
        2.0,
        Support::Finite(vec![1.0, 2.0, 3.0]),
        ParamBox::new(vec![(0.0, 1.0)]),
        1,
    )
    .h(|x| x)
    .w(|t| vec![t[0]])
    .f(|x| vec![x * x])
    .build()
    .unwrap()
}

#[test]
fn binomial_log_likelihood_sum_is_sufficient() {
    let (spec, _) = binomial(2, 0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 4);
    let v = koopman_probe(LikelihoodKind::Log, &spec, &StatisticFn::sum(), &cfg).unwrap();
    assert_eq!(v.verdict, Verdict::Sufficient);
    assert!(v.exhaustive);
    assert!(v.pairs_tested > 0);
    assert!(v.max_spread < 1e-12);
}

#[test]
fn binomial_cauchy_schwarz_sum_is_not_sufficient() {
    let (spec, _) = binomial(2, 0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 4).with_budget(1000);
    let v = koopman_probe(
        LikelihoodKind::CauchySchwarz,
        &spec,
        &StatisticFn::sum(),
        &cfg,
    )
    .unwrap();
    assert_eq!(v.verdict, Verdict::NotSufficient);
    let (x, y) = v.witness_pair.unwrap();
    assert_eq!(x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let counts = |s: &[f64]| [0.0, 1.0, 2.0].map(|a| s.iter().filter(|&&b| b == a).count());
    assert_ne!(counts(&x), counts(&y));
    assert!(v.max_spread > 1e-3);
}

#[test]
fn student_jones_moments_are_sufficient() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let cfg = ProbeConfig::new(&spec, 4).with_budget(50).with_seed(11);
    let v = koopman_probe(
        LikelihoodKind::Jones(0.5),
        &spec,
        &StatisticFn::moments(),
        &cfg,
    )
    .unwrap();
    assert_eq!(v.strategy, PairStrategy::Constructive);
    assert_eq!(v.verdict, Verdict::Sufficient, "{v:?}");
    assert!(v.pairs_tested >= 40);
    assert!(v.max_spread < 1e-9, "{}", v.max_spread);
    assert_eq!(v.theta_grid_size, 50);
}

#[test]
fn student_jones_mean_alone_is_not_sufficient() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let cfg = ProbeConfig::new(&spec, 3).with_budget(20);
    let v = koopman_probe(
        LikelihoodKind::Jones(0.5),
        &spec,
        &StatisticFn::mean(),
        &cfg,
    )
    .unwrap();
    assert_eq!(v.verdict, Verdict::NotSufficient);
    assert!(v.witness_pair.is_some());
}

#[test]
fn canonical_statistics() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let t = canonical_sufficient_statistic(&spec);
    assert_eq!(t.shape, StatShape::SecondMoment);
    let v = t.eval(&[1.0, 2.0, 4.0]);
    assert!((v[0] - 7.0).abs() < 1e-14 && (v[1] - 7.0 / 3.0).abs() < 1e-14);

    let (spec, _) = bernoulli_as_m2(0.3f64).unwrap();
    let t = canonical_sufficient_statistic(&spec);
    assert_eq!(t.eval(&[1.0, 0.0, 1.0, 1.0]), vec![0.75]);

    let (spec, _) = student_as_b_alpha(3.0f64, 0.0, 1.0).unwrap();
    let t = canonical_sufficient_statistic(&spec);
    assert_eq!(t.shape, StatShape::FirstMoment);
    assert!((t.eval(&[1.0, 2.0, 4.0])[0] - 7.0 / 3.0).abs() < 1e-14);

    let t = canonical_sufficient_statistic(&weighted_m2());
    assert_eq!(t.shape, StatShape::General);
    assert!((t.eval(&[1.0, 3.0])[0] - 2.5).abs() < 1e-14);
}

#[test]
fn student_location_basu_mean_is_sufficient() {
    let (spec, _) = student_as_b_alpha(3.0f64, 0.0, 1.0).unwrap();
    let t = canonical_sufficient_statistic(&spec);
    let cfg = ProbeConfig::new(&spec, 3).with_budget(30);
    let v = koopman_probe(LikelihoodKind::Basu(0.5), &spec, &t, &cfg).unwrap();
    assert_eq!(v.verdict, Verdict::Sufficient, "{v:?}");
}

#[test]
fn bernoulli_jones_factorization_is_exact() {
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 6);
    let (fact, rep) =
        factorization_witness(LikelihoodKind::Jones(2.0), &spec, &StatisticFn::sum(), &cfg)
            .unwrap();
    assert!(rep.max_residual < 1e-10);
    assert!(rep.probes >= 100);
    let x = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let th = spec.theta(&[0.83]).unwrap();
    let l = LikelihoodKind::Jones(2.0).evaluate(&spec, &th, &x).unwrap();
    assert!((l - fact.u(&[0.83], &x).unwrap() - fact.v(&x).unwrap()).abs() < 1e-12);
}

#[test]
fn identity_statistic_factorizes_trivially() {
    let (spec, _) = binomial(2, 0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 3);
    for kind in [
        LikelihoodKind::Log,
        LikelihoodKind::CauchySchwarz,
        LikelihoodKind::Jones(1.5),
    ] {
        let (fact, rep) =
            factorization_witness(kind, &spec, &StatisticFn::identity(), &cfg).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert_eq!(fact.v(&[2.0, 0.0, 1.0]).unwrap(), 0.0);
    }
}

#[test]
fn cauchy_schwarz_sum_factorization_fails() {
    let (spec, _) = binomial(2, 0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 4);
    let r = factorization_witness(
        LikelihoodKind::CauchySchwarz,
        &spec,
        &StatisticFn::sum(),
        &cfg,
    );
    assert!(matches!(r, Err(Error::ResidualExceedsTol { .. })), "{r:?}");
}

#[test]
fn student_factorization_through_moment_representatives() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let cfg = ProbeConfig::new(&spec, 3).with_budget(20);
    let (_, rep) = factorization_witness(
        LikelihoodKind::Jones(0.5),
        &spec,
        &StatisticFn::moments(),
        &cfg,
    )
    .unwrap();
    assert!(rep.max_residual < 1e-10, "{}", rep.max_residual);
}

/// Def. 1 and the factorization agree on every shipped pairing.
#[test]
fn koopman_and_factorization_agree() {
    let cases: Vec<(Family, LikelihoodKind<f64>, StatisticFn<f64>, usize)> = vec![
        (
            binomial(2, 0.5).unwrap().0,
            LikelihoodKind::Log,
            StatisticFn::sum(),
            4,
        ),
        (
            binomial(2, 0.5).unwrap().0,
            LikelihoodKind::CauchySchwarz,
            StatisticFn::sum(),
            4,
        ),
        (
            bernoulli_as_m2(0.5).unwrap().0,
            LikelihoodKind::Jones(2.0),
            StatisticFn::sum(),
            5,
        ),
        (
            bernoulli_as_m2(0.5).unwrap().0,
            LikelihoodKind::Log,
            StatisticFn::sum(),
            5,
        ),
        (
            bernoulli_as_b2(0.5).unwrap().0,
            LikelihoodKind::Basu(2.0),
            StatisticFn::sum(),
            5,
        ),
        (
            bernoulli_as_m2(0.5).unwrap().0,
            LikelihoodKind::Jones(3.0),
            StatisticFn::sum(),
            4,
        ),
        (
            student_as_m_alpha(3.0, 0.0, 1.0).unwrap().0,
            LikelihoodKind::Jones(0.5),
            StatisticFn::moments(),
            3,
        ),
        (
            student_as_m_alpha(3.0, 0.0, 1.0).unwrap().0,
            LikelihoodKind::Jones(0.5),
            StatisticFn::mean(),
            3,
        ),
    ];
    for (spec, kind, t, n) in cases {
        let cfg = ProbeConfig::new(&spec, n).with_budget(30);
        let v = koopman_probe(kind, &spec, &t, &cfg).unwrap();
        let f = factorization_witness(kind, &spec, &t, &cfg);
        assert_eq!(
            v.verdict == Verdict::Sufficient,
            f.is_ok(),
            "{} {kind:?} {}: {v:?}",
            spec.name,
            t.name
        );
    }
}

#[test]
fn jones_difference_constant_is_log_hbar_ratio() {
    let spec = weighted_m2();
    let t = canonical_sufficient_statistic(&spec);
    let cfg = ProbeConfig::new(&spec, 4).with_budget(10_000);
    let set = generate_pairs(&spec, &t, &cfg).unwrap();
    let mut nonzero = 0;
    for (x, y) in &set.pairs {
        let hb = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let expect = (hb(x) / hb(y)).ln();
        if expect.abs() > 1e-6 {
            nonzero += 1;
        }
        for th in &cfg.theta_grid {
            let th = spec.theta(th).unwrap();
            let d = LikelihoodKind::Jones(2.0).evaluate(&spec, &th, x).unwrap()
                - LikelihoodKind::Jones(2.0).evaluate(&spec, &th, y).unwrap();
            assert!((d - expect).abs() < 1e-10, "{x:?} {y:?}: {d} vs {expect}");
        }
    }
    assert!(
        nonzero > 0,
        "no pair with different h-bar among {} pairs",
        set.pairs.len()
    );
}

#[test]
fn student_canonical_is_minimal_by_regularity() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let t = canonical_sufficient_statistic(&spec);
    let cfg = ProbeConfig::new(&spec, 3).with_budget(20);
    let r = minimality_probe(LikelihoodKind::Jones(0.5), &spec, &t, &cfg).unwrap();
    assert_eq!(r.verdict, Minimality::Minimal);
    assert!(r.by_regularity);
}

#[test]
fn non_canonical_continuous_statistic_is_inconclusive() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let cfg = ProbeConfig::new(&spec, 3).with_budget(20);
    let r = minimality_probe(
        LikelihoodKind::Jones(0.5),
        &spec,
        &StatisticFn::sums(),
        &cfg,
    )
    .unwrap();
    assert_eq!(r.verdict, Minimality::Inconclusive);
}

#[test]
fn bernoulli_overfine_statistic_is_not_minimal() {
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 4);
    let r = minimality_probe(
        LikelihoodKind::Jones(2.0),
        &spec,
        &StatisticFn::sum_and_first(),
        &cfg,
    )
    .unwrap();
    assert_eq!(r.verdict, Minimality::NotMinimal);
    let (x, y) = r.witness_pair.unwrap();
    assert_eq!(x.iter().sum::<f64>(), y.iter().sum::<f64>());
    assert_ne!(x[0], y[0]);
}

#[test]
fn bernoulli_sum_is_minimal_by_enumeration() {
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 4);
    let r = minimality_probe(LikelihoodKind::Jones(2.0), &spec, &StatisticFn::sum(), &cfg).unwrap();
    assert_eq!(r.verdict, Minimality::Minimal);
    assert!(r.exhaustive);
    assert_eq!(r.classes, 5);
}

#[test]
fn constant_statistic_is_rejected_upstream() {
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 3);
    let r = minimality_probe(
        LikelihoodKind::Jones(2.0),
        &spec,
        &StatisticFn::constant(),
        &cfg,
    )
    .unwrap();
    assert_eq!(r.verdict, Minimality::NotSufficient);
}

#[test]
fn rejection_pairs_on_large_finite_space() {
    let (spec, _) = binomial(2, 0.5f64).unwrap();
    let cfg = ProbeConfig::new(&spec, 20).with_budget(20);
    let v = koopman_probe(LikelihoodKind::Log, &spec, &StatisticFn::sum(), &cfg).unwrap();
    assert_eq!(v.strategy, PairStrategy::Rejection);
    assert_eq!(v.verdict, Verdict::Sufficient);
}

#[test]
fn bernoulli_sum_classes_hold_only_permutations() {
    // Every pair with equal Σx on {0,1}^n is a permutation, which no
    // symmetric likelihood can tell apart, so the probe is vacuous.
    let (spec, _) = bernoulli_as_m2(0.5f64).unwrap();
    let v = koopman_probe(
        LikelihoodKind::Jones(2.0),
        &spec,
        &StatisticFn::sum(),
        &ProbeConfig::new(&spec, 6),
    )
    .unwrap();
    assert_eq!(
        (v.verdict, v.pairs_tested, v.exhaustive),
        (Verdict::Sufficient, 0, true)
    );
    let r = koopman_probe(
        LikelihoodKind::Jones(2.0),
        &spec,
        &StatisticFn::sum(),
        &ProbeConfig::new(&spec, 20).with_budget(5),
    );
    assert_eq!(r.unwrap_err(), Error::PairGenerationFailed { budget: 5 });
}

#[test]
fn probes_are_deterministic() {
    let (spec, _) = student_as_m_alpha(3.0f64, 0.0, 1.0).unwrap();
    let cfg = ProbeConfig::new(&spec, 3).with_budget(10).with_seed(5);
    let a = generate_pairs(&spec, &StatisticFn::moments(), &cfg).unwrap();
    let b = generate_pairs(&spec, &StatisticFn::moments(), &cfg).unwrap();
    assert_eq!(a.pairs, b.pairs);
}
