use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{decompose, Disintegration, ProductMeasure};
use crate::tree::{AdaptedProcess, EventTree};
use crate::zoo;

use super::RiskMeasureSpec;

/// Box `[-B, B]` for generic penalty probes.
pub const DEFAULT_PROBE_BOUND: f64 = 10.0;
pub const DEFAULT_PROBE_COUNT: usize = 10_000;
const DEFAULT_PROBE_SEED: u64 = 0x5eed;
/// A probe gap above this certifies an infinite penalty for coherent kinds.
const COHERENT_GAP: f64 = 1e-8;

/// Penalty value; `Infinite` obeys `0 · ∞ = 0` when discounted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltyValue {
    Finite(f64),
    #[serde(with = "infinite_marker")]
    Infinite,
}

mod infinite_marker {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"inf\", got {s:?}")))
        }
    }
}

impl PenaltyValue {
    pub fn value(self) -> Option<f64> {
        match self {
            PenaltyValue::Finite(v) => Some(v),
            PenaltyValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, PenaltyValue::Finite(_))
    }

    /// `d · α` with `0 · ∞ = 0`; `None` stands for `+∞`.
    pub fn discounted(self, d: f64) -> Option<f64> {
        match self {
            PenaltyValue::Finite(a) => Some(d * a),
            PenaltyValue::Infinite if d == 0.0 => Some(0.0),
            PenaltyValue::Infinite => None,
        }
    }
}

/// Penalty at every node of `nodes_at(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyReport {
    pub t: usize,
    pub values: Vec<PenaltyValue>,
    /// `false` when the values are probe lower bounds.
    pub exact: bool,
}

fn closed_form(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
    dis: &Disintegration,
    n: usize,
) -> Option<PenaltyValue> {
    let t = tree.time(n);
    if t == tree.horizon() {
        // ρ_T(X) = -X_T for every normalized cash-invariant measure
        return Some(if dis.m[n] > 0.0 && dis.d[n] > 0.0 { PenaltyValue::Finite(0.0) } else { PenaltyValue::Infinite });
    }
    match rm {
        RiskMeasureSpec::Entropic { r } => Some(zoo::entropic::entropic_penalty_node(tree, dis, n, r.at(t))),
        RiskMeasureSpec::SimplifiedEntropic { u, v } => {
            Some(zoo::simplified::simplified_penalty_node(tree, dis, n, u.at(t), v.at(t)))
        }
        RiskMeasureSpec::Avar { lambda } => Some(zoo::avar::avar_penalty_node(tree, dis, n, lambda.at(t))),
        RiskMeasureSpec::Separated { inner, family } => {
            zoo::separated::separated_penalty_node(tree, dis, n, inner, family)
        }
        // table entries are taken as given for the listed measures
        RiskMeasureSpec::PenaltyTable(table) => table.entry_for(q, n),
        _ => None,
    }
}

/// Minimal penalty `α_t(Q̄)`: closed form where available, otherwise a
/// probe lower bound with the default budget.
pub fn penalty(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure, t: usize) -> Result<PenaltyReport> {
    let dis = decompose(tree, q)?;
    let closed: Option<Vec<PenaltyValue>> =
        tree.nodes_at(t).iter().map(|&n| closed_form(rm, tree, q, &dis, n)).collect();
    match closed {
        Some(values) => Ok(PenaltyReport { t, values, exact: true }),
        None => penalty_lower_bound(rm, tree, q, t, DEFAULT_PROBE_COUNT, DEFAULT_PROBE_BOUND, DEFAULT_PROBE_SEED),
    }
}

/// Penalty at a single node, closed form or default probe bound.
pub(crate) fn penalty_at_node(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
    dis: &Disintegration,
    n: usize,
) -> Result<PenaltyValue> {
    if let Some(v) = closed_form(rm, tree, q, dis, n) {
        return Ok(v);
    }
    probe_node(rm, tree, q, dis, n, DEFAULT_PROBE_COUNT, DEFAULT_PROBE_BOUND, DEFAULT_PROBE_SEED)
}

/// Deterministic probe search for `sup_v f(v)` over `[-bound, bound]^dim`,
/// never below `f(0) = 0`. Probes alternate between uniform draws and
/// perturbations of the incumbent with shrinking radius; a larger budget
/// extends the same sequence, so the result is monotone in `count`.
pub(crate) fn probe_sup(
    dim: usize,
    count: usize,
    bound: f64,
    seed: u64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0;
    let mut incumbent = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for k in 0..count {
        if k % 2 == 0 {
            v.iter_mut().for_each(|c| *c = rng.gen_range(-bound..=bound));
        } else {
            let radius = bound * 0.5f64.powf(k as f64 / 500.0);
            for (c, inc) in v.iter_mut().zip(&incumbent) {
                *c = (inc + radius * rng.gen_range(-1.0..=1.0)).clamp(-bound, bound);
            }
        }
        let val = f(&v)?;
        if val > best {
            best = val;
            incumbent.copy_from_slice(&v);
        }
    }
    Ok(best)
}

fn node_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Probe lower bound `sup_X E_Q̄[-X | F̄_t] - ρ_t(X)` at each time-`t` node.
pub fn penalty_lower_bound(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
    t: usize,
    count: usize,
    bound: f64,
    seed: u64,
) -> Result<PenaltyReport> {
    let dis = decompose(tree, q)?;
    let values = tree
        .nodes_at(t)
        .iter()
        .map(|&n| probe_node(rm, tree, q, &dis, n, count, bound, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(PenaltyReport { t, values, exact: false })
}

#[allow(clippy::too_many_arguments)]
fn probe_node(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
    dis: &Disintegration,
    n: usize,
    count: usize,
    bound: f64,
    seed: u64,
) -> Result<PenaltyValue> {
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return Ok(PenaltyValue::Infinite);
    }
    let u = q.tail_mass(tree);
    let range = tree.subtree(n);
    let mut x = AdaptedProcess::zeros(tree);
    let best = probe_sup(range.len(), count, bound, node_seed(seed, n), |v| {
        for (k, m) in range.clone().enumerate() {
            x.set(m, v[k]);
        }
        let lin = -q.tail_mean(tree, &u, &x, n).expect("charged tail");
        Ok(lin - rm.eval_node(tree, &x, n)?)
    })?;
    Ok(certify(rm, best))
}

fn certify(rm: &RiskMeasureSpec, best: f64) -> PenaltyValue {
    if rm.is_coherent() && best > COHERENT_GAP {
        PenaltyValue::Infinite
    } else {
        PenaltyValue::Finite(best)
    }
}

/// Penalty of the restriction of `ρ_t` to one-step processes (value at `t`,
/// then a constant after `t + 1`), at each time-`t` node for `t < T`.
pub fn one_step_penalty(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure, t: usize) -> Result<PenaltyReport> {
    if t >= tree.horizon() {
        return Err(Error::TimeOrder(format!("one-step penalty needs t < {}", tree.horizon())));
    }
    let dis = decompose(tree, q)?;
    let closed = |n: usize| -> Option<PenaltyValue> {
        match rm {
            RiskMeasureSpec::Entropic { r } => {
                Some(zoo::entropic::entropic_one_step_penalty_node(tree, &dis, n, r.at(t)))
            }
            RiskMeasureSpec::Avar { lambda } => {
                Some(zoo::avar::avar_one_step_penalty_node(tree, &dis, n, lambda.at(t)))
            }
            RiskMeasureSpec::PenaltyTable(table) => table.one_step_for(tree, q, n),
            _ => None,
        }
    };
    let exact: Option<Vec<PenaltyValue>> = tree.nodes_at(t).iter().map(|&n| closed(n)).collect();
    if let Some(values) = exact {
        return Ok(PenaltyReport { t, values, exact: true });
    }
    let mut values = Vec::new();
    for &n in tree.nodes_at(t) {
        if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
            values.push(PenaltyValue::Infinite);
            continue;
        }
        let (coarse, _) = zoo::entropic::one_step_laws(tree, &dis, n);
        let kids = tree.children(n).to_vec();
        let mut x = AdaptedProcess::zeros(tree);
        let best = probe_sup(coarse.len(), DEFAULT_PROBE_COUNT, DEFAULT_PROBE_BOUND, node_seed(DEFAULT_PROBE_SEED, n), |v| {
            x.set(n, v[0]);
            for (i, &c) in kids.iter().enumerate() {
                for m in tree.subtree(c) {
                    x.set(m, v[i + 1]);
                }
            }
            let lin: f64 = -coarse.iter().zip(v).map(|(q, v)| q * v).sum::<f64>();
            Ok(lin - rm.eval_node(tree, &x, n)?)
        })?;
        values.push(certify(rm, best));
    }
    Ok(PenaltyReport { t, values, exact: false })
}

/// `D_t α_t(Q̄)` at every node with `0 · ∞ = 0`; `None` is `+∞`.
pub fn discounted_penalty(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
) -> Result<(Vec<Option<f64>>, bool)> {
    let dis = decompose(tree, q)?;
    let mut out = vec![None; tree.len()];
    let mut exact = true;
    for t in 0..=tree.horizon() {
        let rep = penalty(rm, tree, q, t)?;
        exact &= rep.exact;
        for (&n, a) in tree.nodes_at(t).iter().zip(rep.values) {
            out[n] = a.discounted(dis.d[n]);
        }
    }
    Ok((out, exact))
}
