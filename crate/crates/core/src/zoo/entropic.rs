//! Entropic risk measure for processes.
//!
//! At a node `n` at time `t` with risk aversion `r`,
//! `ρ_t(X) = (1/r) log E[Σ_{s≥t} μ^t_s exp(-r X_s) | F_t]` where `μ^t` is `μ`
//! renormalized to unit mass on the tail.

use crate::measure::{Disintegration, ProductMeasure};
use crate::numeric::{log_sum_exp, relative_entropy};
use crate::risk::PenaltyValue;
use crate::tree::{AdaptedProcess, EventTree};

pub fn entropic_node(tree: &EventTree, x: &AdaptedProcess, n: usize, r: f64) -> f64 {
    let w = tree.tail_mu(n);
    let lse = log_sum_exp(
        tree.subtree(n).map(|m| (tree.cond_prob(m, n) * tree.mu(m) / w).ln() - r * x[m]),
    );
    lse / r
}

/// Conditional relative entropy of `Q ⊗ γ` on the tail atom of `n`, divided by `r`.
pub fn entropic_penalty_node(tree: &EventTree, dis: &Disintegration, n: usize, r: f64) -> PenaltyValue {
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return PenaltyValue::Infinite;
    }
    let w = tree.tail_mu(n);
    let mut h = 0.0;
    for m in tree.subtree(n) {
        let g = dis.gamma[m] / dis.d[n];
        let mass = dis.q_cond_prob(tree, m, n) * g;
        if mass > 0.0 {
            h += mass * (g * dis.m[m] * w / (tree.mu(m) * dis.m[n])).ln();
        }
    }
    PenaltyValue::Finite(h.max(0.0) / r)
}

/// Penalty of the one-step restriction: relative entropy between the coarse
/// laws `(γ_t / D_t, Q(c) D_{t+1} / D_t)` and `(μ^t_t, P(c) Σ_{s>t} μ^t_s)`.
pub fn entropic_one_step_penalty_node(
    tree: &EventTree,
    dis: &Disintegration,
    n: usize,
    r: f64,
) -> PenaltyValue {
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return PenaltyValue::Infinite;
    }
    let (q, a) = one_step_laws(tree, dis, n);
    PenaltyValue::Finite(relative_entropy(&q, &a).max(0.0) / r)
}

/// Coarse one-step laws of the measure and of the reference at `n`:
/// the atom `{n} × {t}` first, then one tail atom per child.
pub(crate) fn one_step_laws(tree: &EventTree, dis: &Disintegration, n: usize) -> (Vec<f64>, Vec<f64>) {
    let w = tree.tail_mu(n);
    let d = dis.d[n];
    let mut q = vec![dis.gamma[n] / d];
    let mut a = vec![tree.mu(n) / w];
    for &c in tree.children(n) {
        q.push(dis.q_cond_prob(tree, c, n) * dis.d_next(n) / d);
        a.push(tree.prob(c) * (w - tree.mu(n)) / w);
    }
    (q, a)
}

/// Measure attaining `ρ_0(X)` for risk aversion `r`: density proportional to `exp(-r X)`.
pub fn gibbs_measure(tree: &EventTree, x: &AdaptedProcess, r: f64) -> ProductMeasure {
    let lo = x.values().iter().copied().fold(f64::INFINITY, f64::min);
    let z = x.map(|v| (-r * (v - lo)).exp());
    ProductMeasure::normalized(tree, z).expect("positive density")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measure::{compose, decompose};

    #[test]
    fn one_step_plus_minus_value() {
        let tree = fixtures::one_step_binomial();
        let x = fixtures::one_step_plus_minus(&tree);
        let v = entropic_node(&tree, &x, 0, 1.0);
        let expected = ((1.0 + 1f64.cosh()) / 2.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.240_229_013_916_555).abs() < 1e-12);
    }

    #[test]
    fn terminal_dirac_under_reference_costs_log_two() {
        let tree = fixtures::one_step_binomial();
        let m = AdaptedProcess::constant(&tree, 1.0);
        let gamma = AdaptedProcess::from_fn(&tree, |n| if tree.time(n) == 1 { 1.0 } else { 0.0 });
        let q = compose(&tree, &m, &gamma).unwrap();
        let dis = decompose(&tree, &q).unwrap();
        let a = entropic_penalty_node(&tree, &dis, 0, 1.0).value().unwrap();
        assert!((a - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stable_for_large_aversion() {
        let tree = EventTree::binomial(3, 0.5).unwrap();
        let mut r = fixtures::rng(5);
        let x = fixtures::random_process(&mut r, &tree, 5.0);
        let v = entropic_node(&tree, &x, 0, 50.0);
        assert!(v.is_finite());
        let worst = x.values().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(v <= -worst + 1e-12 && v >= -worst - 1.0);
    }

    #[test]
    fn gibbs_measure_attains_value() {
        let tree = EventTree::binomial(2, 0.4).unwrap();
        let mut r = fixtures::rng(9);
        let x = fixtures::random_process(&mut r, &tree, 3.0);
        let q = gibbs_measure(&tree, &x, 1.5);
        let dis = decompose(&tree, &q).unwrap();
        let alpha = entropic_penalty_node(&tree, &dis, 0, 1.5).value().unwrap();
        let lin = -q.expectation(&tree, &x);
        assert!((lin - alpha - entropic_node(&tree, &x, 0, 1.5)).abs() < 1e-10);
    }
}
