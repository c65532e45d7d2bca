use super::*;
use crate::fixtures;
use crate::measure::ProductMeasure;
use crate::risk::{PenaltyTable, PenaltyValue, Profile, TableMeasure};
use crate::zoo::entropic::gibbs_measure;
use crate::zoo::{DiscountFamily, InnerRisk};

const SEED: u64 = 42;

fn binomial(t: usize) -> EventTree {
    EventTree::binomial(t, 0.5).unwrap()
}

fn probe_measures(tree: &EventTree, count: usize, seed: u64) -> Vec<ProductMeasure> {
    let mut rng = fixtures::rng(seed);
    (0..count).map(|_| ProductMeasure::random(&mut rng, tree, 0.0)).collect()
}

fn entropic_profile(r: Vec<f64>) -> RiskMeasureSpec {
    RiskMeasureSpec::Entropic { r: Profile::per_time(r) }
}

#[test]
fn entropic_constant_passes_strong() {
    let tree = binomial(3);
    let v = check_time_consistent(&RiskMeasureSpec::entropic(1.0), &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE)
        .unwrap();
    assert!(v.passed(), "{v:?}");
    assert_eq!(v.probes, DEFAULT_BUDGET * 7);
}

#[test]
fn decreasing_risk_aversion_is_rejection_consistent_only() {
    let tree = binomial(3);
    let rm = entropic_profile(vec![2.0, 1.0, 0.5, 0.25]);
    let strong = check_time_consistent(&rm, &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(!strong.passed());
    assert!(strong.replay(&rm, &tree).unwrap());
    let rej = check_time_consistent(&rm, &tree, Property::Rejection, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(rej.passed(), "{rej:?}");
    let acc = check_time_consistent(&rm, &tree, Property::Acceptance, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(!acc.passed());
}

#[test]
fn increasing_risk_aversion_is_acceptance_consistent() {
    let tree = binomial(3);
    let rm = entropic_profile(vec![0.25, 0.5, 1.0, 2.0]);
    let acc = check_time_consistent(&rm, &tree, Property::Acceptance, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(acc.passed(), "{acc:?}");
    let weak = check_weak_acceptance(&rm, &tree, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(weak.passed(), "{weak:?}");
    let strong = check_time_consistent(&rm, &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(!strong.passed());
}

#[test]
fn recursive_avar_passes_raw_avar_fails() {
    let tree = binomial(2);
    let raw = RiskMeasureSpec::avar(0.5);
    let wrapped = RiskMeasureSpec::recursive(raw.clone());
    let v = check_time_consistent(&wrapped, &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(v.passed(), "{v:?}");
    let v = check_time_consistent(&raw, &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(v.status, Status::Fail);
    let ce = v.counterexample.as_ref().unwrap();
    assert!((ce.lhs - ce.rhs).abs() > DEFAULT_TOLERANCE);
    assert!(v.replay(&raw, &tree).unwrap());
    // the same seed finds the same counterexample
    let again = check_time_consistent(&raw, &tree, Property::Strong, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(v, again);
    // and it is not a violation for the wrapper
    assert!(!v.replay(&wrapped, &tree).unwrap());
}

#[test]
fn fixed_gamma_expectation_is_consistent() {
    let tree = binomial(3);
    let gamma = AdaptedProcess::constant(&tree, 0.25);
    let rm = RiskMeasureSpec::Separated { inner: InnerRisk::Expectation { density: None }, family: DiscountFamily::Fixed(gamma) };
    let v = check_time_consistent(&rm, &tree, Property::Strong, 200, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(v.passed(), "{v:?}");
}

#[test]
fn one_step_processes_satisfy_recursion() {
    let tree = binomial(2);
    let mut rng = fixtures::rng(3);
    let x = fixtures::random_process(&mut rng, &tree, 3.0);
    // constant after time 1
    let x = AdaptedProcess::from_fn(&tree, |n| x[tree.ancestor_at(n, 1.min(tree.time(n)))]);
    let rep = check_recursive(&RiskMeasureSpec::avar(0.5), &tree, &x, 0).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn acceptance_split() {
    let tree = binomial(2);
    let rep = check_acceptance_split(&RiskMeasureSpec::entropic(1.0), &tree, 200, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(rep.superset.passed() && rep.subset.passed(), "{rep:?}");
    let rm = entropic_profile(vec![2.0, 1.0, 0.5]);
    let rep = check_acceptance_split(&rm, &tree, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(rep.subset.passed(), "{rep:?}");
    assert!(!rep.superset.passed());
    assert!(rep.superset.replay(&rm, &tree).unwrap());
}

/// Reference law with zero penalty plus a measure on one leaf that is free at
/// time 0 and excluded at time 1.
fn weakly_inconsistent_table(tree: &EventTree) -> RiskMeasureSpec {
    let leaf = *tree.leaves().last().unwrap();
    let z = AdaptedProcess::from_fn(tree, |n| if n == leaf { 1.0 } else { 0.0 });
    let point = ProductMeasure::normalized(tree, z).unwrap();
    let penalty = (0..tree.len())
        .map(|n| {
            if n == tree.root() || n == leaf {
                PenaltyValue::Finite(0.0)
            } else {
                PenaltyValue::Infinite
            }
        })
        .collect();
    RiskMeasureSpec::PenaltyTable(PenaltyTable {
        measures: vec![
            TableMeasure {
                id: "reference".into(),
                measure: ProductMeasure::reference(tree),
                penalty: vec![PenaltyValue::Finite(0.0); tree.len()],
                one_step: None,
            },
            TableMeasure { id: "point".into(), measure: point, penalty, one_step: None },
        ],
    })
}

#[test]
fn weak_acceptance_violation_found() {
    let tree = binomial(2);
    let rm = weakly_inconsistent_table(&tree);
    rm.validate(&tree).unwrap();
    let v = check_weak_acceptance(&rm, &tree, DEFAULT_BUDGET, SEED, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(v.test, Test::Inclusion);
    assert!(!v.passed());
    let ce = v.counterexample.as_ref().unwrap();
    assert_eq!(ce.t, 0);
    assert!(ce.lhs > ce.rhs);
    assert!(v.replay(&rm, &tree).unwrap());
    let ok = check_weak_acceptance(&RiskMeasureSpec::entropic(1.0), &tree, 200, SEED, DEFAULT_TOLERANCE).unwrap();
    assert!(ok.passed());
}

#[test]
fn verdict_json() {
    let tree = binomial(2);
    let v = check_time_consistent(&RiskMeasureSpec::avar(0.5), &tree, Property::Strong, 100, SEED, DEFAULT_TOLERANCE).unwrap();
    let s = serde_json::to_string(&v).unwrap();
    assert!(s.contains("\"status\":\"fail\""));
    let back: ConsistencyVerdict = serde_json::from_str(&s).unwrap();
    assert_eq!(back, v);
}

#[test]
fn entropic_cocycle_vanishes() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(0.9);
    for q in probe_measures(&tree, 20, 7) {
        for t in 0..3 {
            for r in penalty_cocycle(&rm, &tree, &q, t).unwrap().into_iter().flatten() {
                assert!(r.abs() < 1e-9, "t={t}: {r}");
            }
        }
    }
}

#[test]
fn cocycle_sign_follows_profile() {
    let tree = binomial(3);
    let dec = entropic_profile(vec![2.0, 1.0, 0.5, 0.25]);
    let inc = entropic_profile(vec![0.25, 0.5, 1.0, 2.0]);
    for q in probe_measures(&tree, 20, 8) {
        for t in 0..3 {
            for r in penalty_cocycle(&dec, &tree, &q, t).unwrap().into_iter().flatten() {
                assert!(r <= 1e-9, "decreasing: {r}");
            }
            for r in penalty_cocycle(&inc, &tree, &q, t).unwrap().into_iter().flatten() {
                assert!(r >= -1e-9, "increasing: {r}");
            }
        }
    }
}

#[test]
fn cocycle_needs_closed_forms() {
    let tree = binomial(2);
    let q = ProductMeasure::reference(&tree);
    let rm = RiskMeasureSpec::DecoupledAvar { lambda1: Profile::constant(0.5), lambda2: Profile::constant(0.5) };
    assert!(matches!(penalty_cocycle(&rm, &tree, &q, 0), Err(Error::UnsupportedKind(_))));
}

#[test]
fn coherent_zero_penalty_cocycle() {
    let tree = binomial(2);
    let q = ProductMeasure::reference(&tree);
    let rm = RiskMeasureSpec::avar(0.5);
    for t in 0..2 {
        assert!(penalty_cocycle(&rm, &tree, &q, t).unwrap().iter().all(|r| *r == Some(0.0)));
    }
    let dec = doob_riesz(&rm, &tree, &q).unwrap();
    assert!(dec.martingale.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn doob_riesz_entropic() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(1.2);
    for q in probe_measures(&tree, 20, 9) {
        let dec = doob_riesz(&rm, &tree, &q).unwrap();
        let mart = supermartingale_check(&tree, &dec.martingale, &q, Direction::Martingale, 1e-9).unwrap();
        assert!(mart.passed, "{mart:?}");
        assert_eq!(dec.predictable[tree.root()], Some(0.0));
        for n in 0..tree.len() {
            if let (Some(a), Some(s), Some(r)) = (dec.discounted[n], dec.potential[n], dec.remainder[n]) {
                assert!(r.abs() < 1e-9, "N at {n}: {r}");
                assert!((a - s - r).abs() < 1e-12);
            }
            if let (Some(p), Some(c)) = (tree.parent(n).and_then(|p| dec.predictable[p]), dec.predictable[n]) {
                assert!(c >= p - 1e-15);
            }
        }
        let sup = supermartingale_check(&tree, &dec.discounted, &q, Direction::Supermartingale, 1e-9).unwrap();
        assert!(sup.passed, "{sup:?}");
    }
}

#[test]
fn doob_riesz_reference_is_zero() {
    let tree = binomial(2);
    let q = ProductMeasure::reference(&tree);
    let dec = doob_riesz(&RiskMeasureSpec::entropic(1.0), &tree, &q).unwrap();
    for v in [&dec.discounted, &dec.predictable, &dec.martingale, &dec.potential, &dec.remainder] {
        assert!(v.iter().flatten().all(|v| v.abs() < 1e-12), "{v:?}");
    }
}

#[test]
fn doob_riesz_rejects_inconsistent() {
    let tree = binomial(3);
    let rm = entropic_profile(vec![2.0, 1.0, 0.5, 0.25]);
    let q = probe_measures(&tree, 1, 10).remove(0);
    assert!(matches!(doob_riesz(&rm, &tree, &q), Err(Error::InconsistentInput(_))));
}

#[test]
fn constant_process_is_martingale() {
    let tree = binomial(2);
    let q = probe_measures(&tree, 1, 11).remove(0);
    let c = vec![Some(3.0); tree.len()];
    assert!(supermartingale_check(&tree, &c, &q, Direction::Martingale, 1e-12).unwrap().passed);
}

#[test]
fn w_process_supermartingale() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(0.7);
    let mut rng = fixtures::rng(12);
    for q in probe_measures(&tree, 10, 13) {
        for _ in 0..5 {
            let x = fixtures::random_process(&mut rng, &tree, 4.0);
            let w = w_process(&rm, &tree, &x, &q).unwrap();
            let rep = supermartingale_check(&tree, &w, &q, Direction::Supermartingale, 1e-9).unwrap();
            assert!(rep.passed, "{rep:?}");
            for t in 0..3 {
                for r in condition_iv_residual(&rm, &tree, &x, &q, t).unwrap().into_iter().flatten() {
                    assert!(r <= 1e-9, "{r}");
                }
            }
        }
    }
}

#[test]
fn condition_iv_is_tight_at_gibbs_measure() {
    let tree = binomial(3);
    let mut rng = fixtures::rng(14);
    let x = fixtures::random_process(&mut rng, &tree, 2.0);
    let rm = RiskMeasureSpec::entropic(1.0);
    let q = gibbs_measure(&tree, &x, 1.0);
    for t in 0..3 {
        for r in condition_iv_residual(&rm, &tree, &x, &q, t).unwrap().into_iter().flatten() {
            assert!(r.abs() < 1e-9, "{r}");
        }
    }
}

#[test]
fn condition_iv_fails_for_decreasing_profile() {
    let tree = binomial(3);
    let rm = entropic_profile(vec![2.0, 1.0, 0.5, 0.25]);
    let mut rng = fixtures::rng(15);
    let x = fixtures::random_process(&mut rng, &tree, 2.0);
    let q = gibbs_measure(&tree, &x, 2.0);
    let worst = condition_iv_residual(&rm, &tree, &x, &q, 0).unwrap()[0].unwrap();
    assert!(worst > 1e-6, "{worst}");
}

#[test]
fn maximal_inequality_exact() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(1.0);
    let mut rng = fixtures::rng(16);
    for q in probe_measures(&tree, 10, 17) {
        let x = fixtures::random_process(&mut rng, &tree, 3.0);
        for c in [0.05, 0.1, 0.5] {
            let rep = maximal_inequality(&rm, &tree, &q, &x, c, MaximalMode::Exact).unwrap();
            assert!(rep.holds, "{rep:?}");
            assert!(rep.bound >= 0.0);
        }
    }
}

#[test]
fn maximal_inequality_at_optimizer() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(1.0);
    let mut rng = fixtures::rng(18);
    let x = fixtures::random_process(&mut rng, &tree, 3.0);
    let q = gibbs_measure(&tree, &x, 1.0);
    let rep = maximal_inequality(&rm, &tree, &q, &x, 0.1, MaximalMode::Exact).unwrap();
    assert!(rep.bound.abs() < 1e-9, "{rep:?}");
    assert!(rep.probability.abs() < 1e-12, "{rep:?}");
}

#[test]
fn maximal_inequality_monte_carlo() {
    let tree = binomial(3);
    let rm = RiskMeasureSpec::entropic(1.0);
    let mut rng = fixtures::rng(19);
    let x = fixtures::random_process(&mut rng, &tree, 3.0);
    let q = probe_measures(&tree, 1, 20).remove(0);
    let exact = maximal_inequality(&rm, &tree, &q, &x, 0.1, MaximalMode::Exact).unwrap();
    let mc = maximal_inequality(&rm, &tree, &q, &x, 0.1, MaximalMode::MonteCarlo { trials: 20_000, seed: 1 }).unwrap();
    let (lo, hi) = mc.interval.unwrap();
    assert!(lo <= exact.probability && exact.probability <= hi, "{exact:?} {mc:?}");
    assert!(mc.holds);
    let huge = maximal_inequality(&rm, &tree, &q, &x, 1e6, MaximalMode::Exact).unwrap();
    assert_eq!(huge.probability, 0.0);
}

#[test]
fn maximal_inequality_errors() {
    let tree = binomial(2);
    let x = AdaptedProcess::zeros(&tree);
    let q = ProductMeasure::reference(&tree);
    let rm = RiskMeasureSpec::entropic(1.0);
    assert!(matches!(maximal_inequality(&rm, &tree, &q, &x, 0.0, MaximalMode::Exact), Err(Error::InvalidParameter(_))));
    // density 4 on the root exceeds the cap 1/λ = 2 under AV@R(1/2)
    let z = AdaptedProcess::from_fn(&tree, |n| if n == 0 { 1.0 } else { 0.0 });
    let point = ProductMeasure::normalized(&tree, z).unwrap();
    assert!(matches!(
        maximal_inequality(&RiskMeasureSpec::avar(0.5), &tree, &point, &x, 0.1, MaximalMode::Exact),
        Err(Error::InfinitePenalty)
    ));
}

#[test]
fn bubble_profile_reference_is_zero() {
    let tree = binomial(3);
    let q = ProductMeasure::reference(&tree);
    let p = bubble_profile(&RiskMeasureSpec::entropic(1.0), &tree, &q, &[0, 1, 2, 3]).unwrap();
    assert_eq!(p.trend, Trend::Zero);
}

#[test]
fn bubble_profile_matches_tail_sum() {
    let tree = binomial(4);
    let rm = RiskMeasureSpec::entropic(1.0);
    // fixed per-step tilt toward the up branch
    let z = AdaptedProcess::from_fn(&tree, |n| {
        let ups = tree.path_to(n).windows(2).filter(|w| tree.children(w[0])[0] == w[1]).count();
        1.5f64.powi(ups as i32) * 0.5f64.powi((tree.time(n) - ups) as i32)
    });
    let q = ProductMeasure::normalized(&tree, z).unwrap();
    let p = bubble_profile(&rm, &tree, &q, &[0, 1, 2, 3, 4]).unwrap();
    for pt in &p.points {
        let (v, s) = (pt.value.unwrap(), pt.tail_sum.unwrap());
        assert!((v - s).abs() < 1e-9, "s={}: {v} vs {s}", pt.s);
    }
    assert!(p.points.last().unwrap().value.unwrap().abs() < 1e-12);
    assert_eq!(p.trend, Trend::DecreasingToZero);
}

fn avar_vertex_set(tree: &EventTree, lambda: f64) -> Vec<ProductMeasure> {
    let w: Vec<f64> = (0..tree.len()).map(|n| tree.path_prob(n) * tree.mu(n)).collect();
    let caps: Vec<f64> = w.iter().map(|w| w / lambda).collect();
    crate::zoo::avar::capped_simplex_vertices(&caps)
        .into_iter()
        .map(|q| ProductMeasure::new(tree, AdaptedProcess::from_fn(tree, |n| q[n] / w[n])).unwrap())
        .collect()
}

#[test]
fn avar_vertices_are_stable() {
    let tree = fixtures::one_step_binomial();
    let vertices = avar_vertex_set(&tree, 0.5);
    assert_eq!(vertices.len(), 4);
    let closure = paste_closure(&tree, &vertices, 64).unwrap();
    let rep = check_stability(&tree, &closure, &Membership::List).unwrap();
    assert!(rep.stable, "{rep:?}");
    assert!(rep.pastings > 0);
    let rep = check_stability(&tree, &vertices, &Membership::DensityCap { cap: 2.0 }).unwrap();
    assert!(rep.stable, "{rep:?}");
}

#[test]
fn unrelated_measures_are_not_stable() {
    let tree = binomial(2);
    let qs = probe_measures(&tree, 2, 21);
    let rep = check_stability(&tree, &qs, &Membership::List).unwrap();
    assert!(!rep.stable);
    let v = rep.violation.unwrap();
    assert_eq!(v.t, 1);
    let closure = paste_closure(&tree, &qs, 64).unwrap();
    assert!(closure.len() > 2);
    assert!(check_stability(&tree, &closure, &Membership::List).unwrap().stable);
}

#[test]
fn paste_closure_size_cap() {
    let tree = binomial(2);
    let qs = probe_measures(&tree, 3, 22);
    assert!(matches!(paste_closure(&tree, &qs, 4), Err(Error::InfeasibleFamily(_))));
}

#[test]
fn non_admissible_pastings_are_skipped() {
    let tree = binomial(2);
    let up = tree.children(0)[0];
    // second measure puts no mass below the up node
    let z = AdaptedProcess::from_fn(&tree, |n| if tree.subtree(up).contains(&n) { 0.0 } else { 1.0 });
    let qs = vec![ProductMeasure::reference(&tree), ProductMeasure::normalized(&tree, z).unwrap()];
    let rep = check_stability(&tree, &qs, &Membership::DensityCap { cap: 10.0 }).unwrap();
    assert!(rep.skipped > 0);
}
