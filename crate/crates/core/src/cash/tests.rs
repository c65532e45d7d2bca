use super::*;
use crate::fixtures;
use crate::risk::Profile;
use proptest::prelude::*;
use rand::Rng;

fn binomial(t: usize) -> EventTree {
    EventTree::binomial(t, 0.5).unwrap()
}

fn terminal(tree: &EventTree) -> AdaptedProcess {
    dirac_at(tree, tree.horizon())
}

fn linear(m: AdaptedProcess, gamma: AdaptedProcess) -> RiskMeasureSpec {
    RiskMeasureSpec::Separated { inner: InnerRisk::Expectation { density: Some(m) }, family: DiscountFamily::Fixed(gamma) }
}

fn zoo(tree: &EventTree) -> Vec<RiskMeasureSpec> {
    let uniform = AdaptedProcess::constant(tree, 1.0 / (tree.horizon() + 1) as f64);
    vec![
        RiskMeasureSpec::entropic(0.8),
        RiskMeasureSpec::SimplifiedEntropic { u: Profile::constant(1.1), v: Profile::constant(0.6) },
        RiskMeasureSpec::avar(0.4),
        RiskMeasureSpec::DecoupledAvar { lambda1: Profile::constant(0.7), lambda2: Profile::constant(0.5) },
        RiskMeasureSpec::Separated { inner: InnerRisk::Entropic { r: 1.3 }, family: DiscountFamily::Fixed(uniform) },
        RiskMeasureSpec::Separated { inner: InnerRisk::Entropic { r: 1.3 }, family: DiscountFamily::Fixed(terminal(tree)) },
        RiskMeasureSpec::Separated { inner: InnerRisk::Avar { lambda: 0.5 }, family: DiscountFamily::Dirac(1) },
        RiskMeasureSpec::Separated { inner: InnerRisk::Expectation { density: None }, family: DiscountFamily::Dirac(tree.horizon()) },
        RiskMeasureSpec::Separated { inner: InnerRisk::Entropic { r: 0.7 }, family: DiscountFamily::StoppingTimes },
        RiskMeasureSpec::recursive(RiskMeasureSpec::avar(0.5)),
    ]
}

#[test]
fn subadditivity_trivial_cases() {
    let tree = binomial(2);
    let mut rng = fixtures::rng(1);
    let x = fixtures::random_process(&mut rng, &tree, 3.0);
    let rm = RiskMeasureSpec::entropic(1.0);
    let rep = check_cash_subadditive(&rm, &tree, &x, 0, 1, &[0.0]).unwrap();
    assert!((rep.lhs[0] - rep.rhs[0]).abs() < 1e-12);
    let rep = check_cash_subadditive(&rm, &tree, &x, 1, 0, &[0.7, 1.3]).unwrap();
    for (l, r) in rep.lhs.iter().zip(&rep.rhs) {
        assert!((l - r).abs() < 1e-12);
    }
}

#[test]
fn entropic_subadditivity_is_strict() {
    let tree = fixtures::one_step_binomial();
    let x = fixtures::one_step_plus_minus(&tree);
    let rep = check_cash_subadditive(&RiskMeasureSpec::entropic(1.0), &tree, &x, 0, 1, &[1.0]).unwrap();
    // root weight 1/2 keeps X_0 = 0, each leaf weight 1/4 gets X_1 + 1 ∈ {2, 0}
    let lhs = (0.5 + 0.25 * (-2.0f64).exp() + 0.25).ln();
    let rhs = ((1.0 + 1f64.cosh()) / 2.0).ln() - 1.0;
    assert!((rep.lhs[0] - lhs).abs() < 1e-12);
    assert!((rep.rhs[0] - rhs).abs() < 1e-12);
    assert!(rep.passed && rep.lhs[0] > rep.rhs[0] + 0.1);
}

#[test]
fn subadditivity_rejects_bad_input() {
    let tree = binomial(2);
    let x = AdaptedProcess::zeros(&tree);
    let rm = RiskMeasureSpec::entropic(1.0);
    assert!(matches!(check_cash_subadditive(&rm, &tree, &x, 1, 2, &[1.0, 1.0]), Err(Error::TimeOrder(_))));
    assert!(matches!(check_cash_subadditive(&rm, &tree, &x, 0, 1, &[-1.0]), Err(Error::InvalidParameter(_))));
    assert!(matches!(check_cash_subadditive(&rm, &tree, &x, 0, 1, &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn every_kind_is_cash_subadditive(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let tree = fixtures::random_tree(&mut rng, 2, 2);
        let x = fixtures::random_process(&mut rng, &tree, 4.0);
        for rm in zoo(&tree) {
            for t in 0..2 {
                let m: Vec<f64> = tree.nodes_at(t).iter().map(|_| rng.gen_range(0.0..3.0)).collect();
                for s in 1..=2 - t {
                    let rep = check_cash_subadditive(&rm, &tree, &x, t, s, &m).unwrap();
                    prop_assert!(rep.passed, "{}: {:?}", rm.kind(), rep);
                }
            }
        }
    }
}

#[test]
fn terminal_discount_is_cash_additive() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::Separated { inner: InnerRisk::Avar { lambda: 0.5 }, family: DiscountFamily::Fixed(terminal(&tree)) };
    for t in 0..3 {
        for s in t + 1..=3 {
            let rep = check_cash_additive_at(&rm, &tree, t, s, 50, 7).unwrap();
            assert!(rep.passed, "{rep:?}");
            let cert = rep.certificate.unwrap();
            assert!(cert.constant && cert.measures > 0, "{cert:?}");
        }
    }
}

#[test]
fn entropic_is_not_cash_additive() {
    let tree = binomial(2);
    let rep = check_cash_additive_at(&RiskMeasureSpec::entropic(1.0), &tree, 0, 1, 50, 7).unwrap();
    assert!(!rep.passed);
    let ce = rep.counterexample.unwrap();
    assert!(ce.m > 0.0 && (ce.lhs - ce.rhs).abs() > 1e-6);
    assert!(!rep.certificate.unwrap().constant);
}

#[test]
fn one_period_terminal_discount_passes() {
    let tree = fixtures::one_step_binomial();
    let rm = RiskMeasureSpec::Separated { inner: InnerRisk::Entropic { r: 2.0 }, family: DiscountFamily::Dirac(1) };
    assert!(check_cash_additive_at(&rm, &tree, 0, 1, 50, 7).unwrap().passed);
}

#[test]
fn certificate_agrees_with_definition() {
    let tree = binomial(2);
    let mut certified = 0;
    for rm in zoo(&tree) {
        for t in 0..2 {
            for s in t + 1..=2 {
                let rep = check_cash_additive_at(&rm, &tree, t, s, 50, 11).unwrap();
                if let Some(cert) = &rep.certificate {
                    certified += 1;
                    assert!(cert.measures > 0, "{}: {cert:?}", rm.kind());
                    assert_eq!(cert.constant, rep.passed, "{} at ({t}, {s}): {rep:?}", rm.kind());
                }
            }
        }
    }
    assert!(certified >= 15);
}

#[test]
fn additivity_time_order() {
    let tree = binomial(2);
    let rm = RiskMeasureSpec::entropic(1.0);
    assert!(matches!(check_cash_additive_at(&rm, &tree, 1, 1, 10, 0), Err(Error::TimeOrder(_))));
    assert!(matches!(check_cash_additive_at(&rm, &tree, 0, 3, 10, 0), Err(Error::TimeOrder(_))));
}

#[test]
fn linear_measure_prices_numeraire() {
    let tree = binomial(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = mixed_density(&mut rng, &tree, 0.5);
    let gamma = AdaptedProcess::constant(&tree, 0.25);
    let rm = linear(m.clone(), gamma.clone());
    let numeraire = AdaptedProcess::from_fn(&tree, |_| rng.gen_range(0.5..2.0));
    let rep = numeraire_linearity(&rm, &tree, &numeraire, 2, 0, 20, 3).unwrap();
    assert!(rep.homogeneous && rep.additive == Some(true), "{rep:?}");
    // E_Q[N_2 D_2], D_2 = 1/2 under constant weights 1/4
    let oracle: f64 = tree.nodes_at(2).iter().map(|&n| tree.path_prob(n) * m[n] * numeraire[n] * 0.5).sum();
    assert!((rep.price[0] - oracle).abs() < 1e-12);
}

#[test]
fn linearity_trivial_and_failing() {
    let tree = binomial(2);
    let one = AdaptedProcess::constant(&tree, 1.0);
    let rep = numeraire_linearity(&RiskMeasureSpec::entropic(1.0), &tree, &one, 1, 1, 10, 0).unwrap();
    // s = t is cash invariance
    assert!(rep.homogeneous && rep.additive == Some(true));
    assert!(rep.price.iter().all(|p| (p - 1.0).abs() < 1e-12));
    let rep = numeraire_linearity(&RiskMeasureSpec::entropic(1.0), &tree, &one, 2, 0, 10, 0).unwrap();
    assert!(!rep.homogeneous && rep.additive.is_none());
}

fn predictable_rates(tree: &EventTree, per_time: &[f64]) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |n| if n == tree.root() { 0.0 } else { per_time[tree.time(n) - 1] })
}

#[test]
fn money_market_account() {
    let tree = binomial(2);
    let ts = TermStructure::new(&tree, predictable_rates(&tree, &[0.1, 0.1]), BTreeMap::new()).unwrap();
    let b = ts.money_market(&tree);
    assert_eq!(b[0], 1.0);
    for &n in tree.nodes_at(2) {
        assert!((b[n] - 1.21).abs() < 1e-12);
    }
    assert!(ts.is_predictable(&tree));
    let mut r = predictable_rates(&tree, &[0.1, 0.1]);
    r.set(tree.nodes_at(2)[0], 0.2);
    assert!(!TermStructure::new(&tree, r, BTreeMap::new()).unwrap().is_predictable(&tree));
}

#[test]
fn calibrated_linear_measure_is_cash_additive() {
    let tree = binomial(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = mixed_density(&mut rng, &tree, 0.6);
    let q = compose(&tree, &m, &terminal(&tree)).unwrap();
    let term = TermStructure::implied(&tree, predictable_rates(&tree, &[0.02, 0.05, 0.03]), &q).unwrap();
    let rm = linear(m, terminal(&tree));
    for t in 0..3 {
        let rep = check_zcb_calibration(&rm, &tree, &term, t, 20, 1).unwrap();
        assert!(rep.passed && rep.predictable, "{rep:?}");
        assert!(rep.cash_additive.as_ref().unwrap().passed);
        for s in t + 1..=3 {
            assert!(check_cash_additive_at(&rm, &tree, t, s, 20, 1).unwrap().passed);
        }
    }
}

#[test]
fn calibration_with_adapted_rates() {
    let tree = binomial(2);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rates = AdaptedProcess::from_fn(&tree, |_| rng.gen_range(0.0..0.1));
    let gamma = AdaptedProcess::constant(&tree, 1.0 / 3.0);
    let m = mixed_density(&mut rng, &tree, 0.4);
    let q = compose(&tree, &m, &gamma).unwrap();
    let term = TermStructure::implied(&tree, rates, &q).unwrap();
    let rep = check_zcb_calibration(&linear(m, gamma), &tree, &term, 0, 20, 1).unwrap();
    assert!(rep.passed && !rep.predictable && rep.cash_additive.is_none(), "{rep:?}");
}

#[test]
fn predictable_rates_need_matching_short_bond() {
    let tree = binomial(2);
    let gamma = AdaptedProcess::constant(&tree, 1.0 / 3.0);
    let q = compose(&tree, &AdaptedProcess::constant(&tree, 1.0), &gamma).unwrap();
    let term = TermStructure::implied(&tree, predictable_rates(&tree, &[0.05, 0.05]), &q).unwrap();
    let rm = linear(AdaptedProcess::constant(&tree, 1.0), gamma);
    assert!(matches!(check_zcb_calibration(&rm, &tree, &term, 0, 10, 1), Err(Error::BadTermStructure(_))));
}

#[test]
fn entropic_is_not_calibrated() {
    let tree = binomial(3);
    let q = compose(&tree, &AdaptedProcess::constant(&tree, 1.0), &terminal(&tree)).unwrap();
    let term = TermStructure::implied(&tree, predictable_rates(&tree, &[0.05, 0.05, 0.05]), &q).unwrap();
    let rep = check_zcb_calibration(&RiskMeasureSpec::entropic(1.0), &tree, &term, 0, 10, 1).unwrap();
    assert!(!rep.passed);
    assert_eq!(rep.failed, vec![1, 2, 3]);
}

#[test]
fn flat_calibration_is_cash_additivity() {
    let tree = binomial(2);
    let flat = TermStructure::flat(&tree);
    for rm in zoo(&tree) {
        let rep = check_zcb_calibration(&rm, &tree, &flat, 0, 20, 4).unwrap();
        for mc in &rep.maturities {
            let additive = check_cash_additive_at(&rm, &tree, 0, mc.k, 20, 4).unwrap().passed;
            assert_eq!(mc.passed, additive, "{} at k = {}", rm.kind(), mc.k);
        }
    }
}

#[test]
fn term_structure_validation() {
    let tree = binomial(2);
    let bad_rate = predictable_rates(&tree, &[-1.0, 0.0]);
    assert!(matches!(TermStructure::new(&tree, bad_rate, BTreeMap::new()), Err(Error::BadTermStructure(_))));
    let rates = predictable_rates(&tree, &[0.01, 0.01]);
    let above_one = BTreeMap::from([(0, BTreeMap::from([(1, 1.2)]))]);
    assert!(matches!(TermStructure::new(&tree, rates.clone(), above_one), Err(Error::BadTermStructure(_))));
    let past = BTreeMap::from([(1, BTreeMap::from([(0, 0.9)]))]);
    assert!(matches!(TermStructure::new(&tree, rates.clone(), past), Err(Error::BadTermStructure(_))));
    let missing = TermStructure::new(&tree, rates, BTreeMap::new()).unwrap();
    assert!(matches!(
        check_zcb_calibration(&RiskMeasureSpec::entropic(1.0), &tree, &missing, 0, 10, 1),
        Err(Error::BadTermStructure(_))
    ));
    let ids = BTreeMap::from([(1u64, 0.1)]);
    assert!(matches!(TermStructure::from_ids(&tree, &ids, &BTreeMap::new()), Err(Error::BadTermStructure(_))));
}
