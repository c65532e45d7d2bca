//! Risk measures that separate discounting from path risk:
//! `ρ_t(X) = sup_{γ ∈ G_t} ψ_t(Σ_{s≥t} γ_s X_s)` for a risk measure `ψ` on
//! terminal random variables and a family `G` of discount measures.

use crate::error::{Error, Result};
use crate::measure::{discount_from_gamma, Disintegration};
use crate::numeric::{log_sum_exp, relative_entropy};
use crate::risk::PenaltyValue;
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};

use super::avar::{capped_simplex_vertices, sorted_tail, VERTEX_ENUMERATION_LIMIT};

/// Risk measure for random variables at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerRisk {
    /// `E_Q[-Y]`; `density` is the martingale density of `Q` (reference law if absent).
    Expectation { density: Option<AdaptedProcess> },
    Entropic { r: f64 },
    Avar { lambda: f64 },
}

impl InnerRisk {
    pub fn validate(&self, tree: &EventTree) -> Result<()> {
        match self {
            InnerRisk::Expectation { density: Some(m) } => {
                crate::measure::check_martingale_density(tree, m)?;
                if let Some(k) = m.values().iter().position(|v| *v <= 0.0) {
                    return Err(Error::UnsupportedInner(format!(
                        "expectation density must be positive, node {} has {}",
                        tree.id(k),
                        m[k]
                    )));
                }
                Ok(())
            }
            InnerRisk::Expectation { density: None } => Ok(()),
            InnerRisk::Entropic { r } if *r > 0.0 && r.is_finite() => Ok(()),
            InnerRisk::Avar { lambda } if *lambda > 0.0 && *lambda <= 1.0 => Ok(()),
            other => Err(Error::UnsupportedInner(format!("bad parameter in {other:?}"))),
        }
    }

    pub fn is_coherent(&self) -> bool {
        !matches!(self, InnerRisk::Entropic { .. })
    }

    /// Leaf law used by the inner measure at `n` (reference or `Q`).
    fn leaf_law(&self, tree: &EventTree, n: usize) -> Vec<f64> {
        tree.leaves_under(n)
            .map(|l| match self {
                InnerRisk::Expectation { density: Some(m) } => tree.cond_prob(l, n) * m[l] / m[n],
                _ => tree.cond_prob(l, n),
            })
            .collect()
    }

    /// `ψ_t(Y)` at `n` with `y` listed in the order of `tree.leaves_under(n)`.
    pub fn eval_leaves(&self, tree: &EventTree, n: usize, y: &[f64]) -> f64 {
        let p = self.leaf_law(tree, n);
        match self {
            InnerRisk::Expectation { .. } => -p.iter().zip(y).map(|(p, y)| p * y).sum::<f64>(),
            InnerRisk::Entropic { r } => log_sum_exp(p.iter().zip(y).map(|(p, y)| p.ln() - r * y)) / r,
            InnerRisk::Avar { lambda } => {
                let losses: Vec<f64> = y.iter().map(|v| -v).collect();
                sorted_tail(&p, &losses, *lambda)
            }
        }
    }

    /// Minimal penalty of the inner measure for the leaf law `q` at `n`.
    fn penalty_leaves(&self, tree: &EventTree, n: usize, q: &[f64]) -> PenaltyValue {
        let p: Vec<f64> = tree.leaves_under(n).map(|l| tree.cond_prob(l, n)).collect();
        match self {
            InnerRisk::Expectation { .. } => {
                let target = self.leaf_law(tree, n);
                if q.iter().zip(&target).all(|(a, b)| (a - b).abs() <= tolerance::IDENTITY) {
                    PenaltyValue::Finite(0.0)
                } else {
                    PenaltyValue::Infinite
                }
            }
            InnerRisk::Entropic { r } => PenaltyValue::Finite(relative_entropy(q, &p).max(0.0) / r),
            InnerRisk::Avar { lambda } => {
                if q.iter().zip(&p).all(|(q, p)| *q <= p / lambda * (1.0 + tolerance::IDENTITY)) {
                    PenaltyValue::Finite(0.0)
                } else {
                    PenaltyValue::Infinite
                }
            }
        }
    }
}

/// Family of discount measures over which the supremum runs.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscountFamily {
    /// A single discount measure; renormalized to the tail at each node. Where
    /// its tail mass vanishes all weight moves to the horizon.
    Fixed(AdaptedProcess),
    /// All weight at time `max(s, t)`.
    Dirac(usize),
    /// Dirac measures at stopping times `τ ≥ t`.
    StoppingTimes,
}

impl DiscountFamily {
    pub fn validate(&self, tree: &EventTree) -> Result<()> {
        match self {
            DiscountFamily::Fixed(gamma) => {
                if let Some(k) = gamma.values().iter().position(|v| *v < 0.0) {
                    return Err(Error::BadGamma(format!("negative weight at node {}", tree.id(k))));
                }
                let d = discount_from_gamma(tree, gamma);
                for &l in tree.leaves() {
                    if (d[l] - gamma[l]).abs() > tolerance::VALIDATION * 10.0 {
                        return Err(Error::BadGamma(format!(
                            "weights along the path to node {} do not sum to one",
                            tree.id(l)
                        )));
                    }
                }
                Ok(())
            }
            DiscountFamily::Dirac(s) if *s <= tree.horizon() => Ok(()),
            DiscountFamily::Dirac(s) => Err(Error::TimeOrder(format!("dirac time {s} beyond horizon"))),
            DiscountFamily::StoppingTimes => Ok(()),
        }
    }

    /// Tail discount `γ^t` below `n`, indexed by `m - n`; `None` for stopping times.
    pub fn tail_discount(&self, tree: &EventTree, n: usize) -> Option<Vec<f64>> {
        let t = tree.time(n);
        let at = |s: usize| -> Vec<f64> { tree.subtree(n).map(|m| if tree.time(m) == s { 1.0 } else { 0.0 }).collect() };
        match self {
            DiscountFamily::Fixed(gamma) => {
                let d: f64 = 1.0 - tree.path_to(n)[..t].iter().map(|&a| gamma[a]).sum::<f64>();
                if d > tolerance::VALIDATION {
                    Some(tree.subtree(n).map(|m| gamma[m] / d).collect())
                } else {
                    Some(at(tree.horizon()))
                }
            }
            DiscountFamily::Dirac(s) => Some(at((*s).max(t))),
            DiscountFamily::StoppingTimes => None,
        }
    }
}

/// Path sums `Σ_{s≥t} γ_s X_s` at the leaves below `n`.
pub fn discounted_path_sums(tree: &EventTree, x: &AdaptedProcess, n: usize, gamma: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; tree.subtree(n).len()];
    for m in tree.subtree(n) {
        let k = m - n;
        acc[k] = gamma[k] * x[m] + if m == n { 0.0 } else { acc[tree.parent(m).unwrap() - n] };
    }
    tree.leaves_under(n).map(|l| acc[l - n]).collect()
}

pub fn separated_node(
    tree: &EventTree,
    x: &AdaptedProcess,
    n: usize,
    inner: &InnerRisk,
    family: &DiscountFamily,
) -> Result<f64> {
    match family.tail_discount(tree, n) {
        Some(gamma) => Ok(inner.eval_leaves(tree, n, &discounted_path_sums(tree, x, n, &gamma))),
        None => stopping_sup_node(tree, x, n, inner),
    }
}

/// `sup_{τ ≥ t} ψ_t(X_τ)` by backward induction.
pub fn stopping_sup_node(tree: &EventTree, x: &AdaptedProcess, n: usize, inner: &InnerRisk) -> Result<f64> {
    match inner {
        InnerRisk::Expectation { .. } | InnerRisk::Avar { .. } if tree.is_leaf(n) => Ok(-x[n]),
        InnerRisk::Expectation { .. } => {
            let q = inner.leaf_law(tree, n);
            Ok(snell_linear(tree, x, n, &q))
        }
        InnerRisk::Entropic { r } => {
            // maximize E[exp(-r X_τ)] in log space
            let mut lv = vec![0.0; tree.subtree(n).len()];
            for m in tree.subtree(n).rev() {
                let k = m - n;
                let stop = -r * x[m];
                lv[k] = if tree.is_leaf(m) {
                    stop
                } else {
                    let cont = log_sum_exp(tree.children(m).iter().map(|&c| tree.prob(c).ln() + lv[c - n]));
                    stop.max(cont)
                };
            }
            Ok(lv[0] / r)
        }
        InnerRisk::Avar { lambda } => {
            let p: Vec<f64> = tree.leaves_under(n).map(|l| tree.cond_prob(l, n)).collect();
            let caps: Vec<f64> = p.iter().map(|p| p / lambda).collect();
            if p.len() <= VERTEX_ENUMERATION_LIMIT {
                Ok(capped_simplex_vertices(&caps)
                    .iter()
                    .map(|q| snell_linear(tree, x, n, q))
                    .fold(f64::NEG_INFINITY, f64::max))
            } else {
                Err(Error::OptimizerFailed(format!(
                    "stopping supremum with AV@R inner over {} leaves exceeds the enumeration limit {}",
                    p.len(),
                    VERTEX_ENUMERATION_LIMIT
                )))
            }
        }
    }
}

/// `sup_τ E_Q[-X_τ]` for the leaf law `q` below `n`.
fn snell_linear(tree: &EventTree, x: &AdaptedProcess, n: usize, q: &[f64]) -> f64 {
    let len = tree.subtree(n).len();
    let mut mass = vec![0.0; len];
    let mut li = 0;
    for m in tree.subtree(n) {
        if tree.is_leaf(m) {
            mass[m - n] = q[li];
            li += 1;
        }
    }
    let mut v = vec![0.0; len];
    for m in tree.subtree(n).rev() {
        let k = m - n;
        if tree.is_leaf(m) {
            v[k] = -x[m];
            continue;
        }
        mass[k] = tree.children(m).iter().map(|&c| mass[c - n]).sum();
        let cont = if mass[k] > 0.0 {
            tree.children(m).iter().map(|&c| mass[c - n] / mass[k] * v[c - n]).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        };
        v[k] = (-x[m]).max(cont);
    }
    v[0]
}

/// Exact penalty for a fixed or Dirac family: infinite unless the discount of
/// `Q ⊗ γ` matches the family on `Q`-charged nodes, otherwise the inner
/// penalty of the leaf law.
pub fn separated_penalty_node(
    tree: &EventTree,
    dis: &Disintegration,
    n: usize,
    inner: &InnerRisk,
    family: &DiscountFamily,
) -> Option<PenaltyValue> {
    let target = family.tail_discount(tree, n)?;
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return Some(PenaltyValue::Infinite);
    }
    for m in tree.subtree(n) {
        if dis.q_cond_prob(tree, m, n) > 0.0
            && (dis.gamma[m] / dis.d[n] - target[m - n]).abs() > tolerance::IDENTITY
        {
            return Some(PenaltyValue::Infinite);
        }
    }
    let q: Vec<f64> = tree.leaves_under(n).map(|l| dis.q_cond_prob(tree, l, n)).collect();
    Some(inner.penalty_leaves(tree, n, &q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tree::delta;
    use proptest::prelude::*;

    fn inners() -> Vec<InnerRisk> {
        vec![
            InnerRisk::Expectation { density: None },
            InnerRisk::Entropic { r: 0.9 },
            InnerRisk::Avar { lambda: 0.4 },
        ]
    }

    /// Every stopping time below `n`, as the list of stopping nodes.
    fn stopping_times(tree: &EventTree, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![m]];
        if tree.is_leaf(m) {
            return out;
        }
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for &c in tree.children(m) {
            let sub = stopping_times(tree, c);
            combos = combos
                .into_iter()
                .flat_map(|acc| sub.iter().map(move |s| [acc.clone(), s.clone()].concat()))
                .collect();
        }
        out.extend(combos);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn stopping_recursion_matches_enumeration(seed in any::<u64>()) {
            let mut rng = fixtures::rng(seed);
            let tree = fixtures::random_tree(&mut rng, 2, 2);
            let x = fixtures::random_process(&mut rng, &tree, 4.0);
            for inner in inners() {
                for n in 0..tree.len() {
                    let fast = stopping_sup_node(&tree, &x, n, &inner).unwrap();
                    let mut best = f64::NEG_INFINITY;
                    for tau in stopping_times(&tree, n) {
                        let y: Vec<f64> = tree.leaves_under(n)
                            .map(|l| x[*tau.iter().find(|&&s| tree.path_to(l).contains(&s)).unwrap()])
                            .collect();
                        best = best.max(inner.eval_leaves(&tree, n, &y));
                    }
                    prop_assert!((fast - best).abs() < 1e-9, "{:?}: {} vs {}", inner, fast, best);
                }
            }
        }

        #[test]
        fn fixed_discount_uses_increments(seed in any::<u64>()) {
            let mut rng = fixtures::rng(seed);
            let tree = fixtures::random_tree(&mut rng, 3, 2);
            let x = fixtures::random_process(&mut rng, &tree, 4.0);
            let gamma = AdaptedProcess::from_fn(&tree, |m| tree.mu(m));
            let d = discount_from_gamma(&tree, &gamma);
            let dx = delta(&tree, &x);
            let family = DiscountFamily::Fixed(gamma);
            for inner in inners() {
                // at the root the payoff is Y_T with ΔY = D ΔX
                let y: Vec<f64> = tree.leaves().iter()
                    .map(|&l| tree.path_to(l).iter().map(|&m| d[m] * dx[m]).sum())
                    .collect();
                let direct = inner.eval_leaves(&tree, 0, &y);
                let v = separated_node(&tree, &x, 0, &inner, &family).unwrap();
                prop_assert!((v - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dirac_family_reads_one_time() {
        let tree = EventTree::binomial(2, 0.5).unwrap();
        let mut rng = fixtures::rng(2);
        let x = fixtures::random_process(&mut rng, &tree, 3.0);
        let inner = InnerRisk::Entropic { r: 1.0 };
        let v = separated_node(&tree, &x, 0, &inner, &DiscountFamily::Dirac(1)).unwrap();
        let y: Vec<f64> = tree.leaves().iter().map(|&l| x[tree.ancestor_at(l, 1)]).collect();
        assert!((v - inner.eval_leaves(&tree, 0, &y)).abs() < 1e-12);
    }
}
