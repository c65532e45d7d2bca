use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{decompose, Disintegration, ProductMeasure};
use crate::risk::{discounted_penalty, one_step_penalty, penalty, RiskMeasureSpec};
use crate::tree::{AdaptedProcess, EventTree};

use super::DEFAULT_TOLERANCE;

/// `Q(n)` along the path to `n`.
fn q_path(tree: &EventTree, dis: &Disintegration, n: usize) -> f64 {
    tree.path_prob(n) * dis.m[n]
}

/// `Q(c | n)` for a child `c` of a `Q`-charged node.
fn q_step(tree: &EventTree, dis: &Disintegration, c: usize, n: usize) -> f64 {
    tree.prob(c) * dis.m[c] / dis.m[n]
}

/// `E_Q[v_{t+1} | F_t]` at `n`; `None` when a charged child is infinite.
fn q_next(tree: &EventTree, dis: &Disintegration, v: &[Option<f64>], n: usize) -> Option<f64> {
    let mut acc = 0.0;
    for &c in tree.children(n) {
        let w = q_step(tree, dis, c, n);
        if w > 0.0 {
            acc += w * v[c]?;
        }
    }
    Some(acc)
}

/// `D_t α_{t,t+1}` at every non-leaf node with `0 · ∞ = 0`; `None` is `+∞`.
fn discounted_one_step(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure, dis: &Disintegration) -> Result<Vec<Option<f64>>> {
    let mut out = vec![Some(0.0); tree.len()];
    for t in 0..tree.horizon() {
        let rep = one_step_penalty(rm, tree, q, t)?;
        if !rep.exact {
            return Err(Error::UnsupportedKind(format!("{} has no closed-form one-step penalty", rm.kind())));
        }
        for (&n, a) in tree.nodes_at(t).iter().zip(rep.values) {
            out[n] = a.discounted(dis.d[n]);
        }
    }
    Ok(out)
}

fn exact_discounted(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure) -> Result<Vec<Option<f64>>> {
    let (disc, exact) = discounted_penalty(rm, tree, q)?;
    if !exact {
        return Err(Error::UnsupportedKind(format!("{} has no closed-form penalty", rm.kind())));
    }
    Ok(disc)
}

/// Residual `D_t α_t - D_t α_{t,t+1} - E_Q[D_{t+1} α_{t+1} | F_t]` at each
/// time-`t` node; `None` on `Q`-null nodes and where a side is infinite.
/// Zero under strong consistency, `≥ 0` under acceptance and `≤ 0` under
/// rejection consistency.
pub fn penalty_cocycle(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure, t: usize) -> Result<Vec<Option<f64>>> {
    if t >= tree.horizon() {
        return Err(Error::TimeOrder(format!("cocycle needs t < {}", tree.horizon())));
    }
    let dis = decompose(tree, q)?;
    let at = |s: usize| -> Result<Vec<Option<f64>>> {
        let rep = penalty(rm, tree, q, s)?;
        if !rep.exact {
            return Err(Error::UnsupportedKind(format!("{} has no closed-form penalty", rm.kind())));
        }
        let mut v = vec![None; tree.len()];
        for (&n, a) in tree.nodes_at(s).iter().zip(rep.values) {
            v[n] = a.discounted(dis.d[n]);
        }
        Ok(v)
    };
    let now = at(t)?;
    let next = at(t + 1)?;
    let one = one_step_penalty(rm, tree, q, t)?;
    if !one.exact {
        return Err(Error::UnsupportedKind(format!("{} has no closed-form one-step penalty", rm.kind())));
    }
    Ok(tree
        .nodes_at(t)
        .iter()
        .zip(one.values)
        .map(|(&n, a1)| {
            if q_path(tree, &dis, n) <= 0.0 {
                return None;
            }
            let lhs = now[n]?;
            let rhs = a1.discounted(dis.d[n])? + q_next(tree, &dis, &next, n)?;
            Some(lhs - rhs)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Supermartingale,
    Martingale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub direction: Direction,
    /// Largest one-step violation over `Q`-charged nodes (0 when none).
    pub max_violation: f64,
    pub node: Option<u64>,
    pub passed: bool,
}

/// One-step `E_Q[V_{t+1} | F_t] ≤ V_t` (or `=`) at every `Q`-charged node.
/// `None` entries are `+∞`; an infinite parent bounds anything.
pub fn supermartingale_check(
    tree: &EventTree,
    process: &[Option<f64>],
    q: &ProductMeasure,
    direction: Direction,
    tol: f64,
) -> Result<SupermartingaleReport> {
    if process.len() != tree.len() {
        return Err(Error::LengthMismatch { expected: tree.len(), got: process.len() });
    }
    let dis = decompose(tree, q)?;
    let mut worst = 0.0;
    let mut node = None;
    for n in 0..tree.len() {
        if tree.is_leaf(n) || q_path(tree, &dis, n) <= 0.0 {
            continue;
        }
        let gap = match (process[n], q_next(tree, &dis, process, n)) {
            (None, None) => continue,
            (None, Some(_)) if direction == Direction::Supermartingale => continue,
            (Some(v), Some(e)) => match direction {
                Direction::Supermartingale => e - v,
                Direction::Martingale => (e - v).abs(),
            },
            _ => f64::INFINITY,
        };
        let scale = 1.0 + process[n].map_or(0.0, f64::abs);
        if gap / scale > worst {
            worst = gap / scale;
            node = Some(tree.id(n));
        }
    }
    Ok(SupermartingaleReport { direction, max_violation: worst, node, passed: worst <= tol })
}

/// `W_t = D_t ρ_t(X - X_t 1_{≥t}) - Σ_{s≤t} D_s ΔX_s + D_t α_t` at every node.
pub fn w_process(rm: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, q: &ProductMeasure) -> Result<Vec<Option<f64>>> {
    let dis = decompose(tree, q)?;
    let disc = exact_discounted(rm, tree, q)?;
    let rho = rm.evaluate_all(tree, x)?;
    let mut flow = vec![0.0; tree.len()];
    let mut out = vec![None; tree.len()];
    for n in 0..tree.len() {
        let prev = tree.parent(n).map_or(0.0, |p| x[p]);
        flow[n] = tree.parent(n).map_or(0.0, |p| flow[p]) - dis.d[n] * (x[n] - prev);
        // cash invariance: ρ_t(X - X_t) = ρ_t(X) + X_t
        out[n] = disc[n].map(|a| dis.d[n] * (rho[n] + x[n]) + flow[n] + a);
    }
    Ok(out)
}

/// `E_Q[D_{t+1}(X_t + ρ_{t+1} + α_{t+1}) | F_t] - D_t(X_t + ρ_t + α_t)` at
/// each time-`t` node; `≤ 0` everywhere under strong consistency.
pub fn condition_iv_residual(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    x: &AdaptedProcess,
    q: &ProductMeasure,
    t: usize,
) -> Result<Vec<Option<f64>>> {
    if t >= tree.horizon() {
        return Err(Error::TimeOrder(format!("supermartingale condition needs t < {}", tree.horizon())));
    }
    let dis = decompose(tree, q)?;
    let disc = exact_discounted(rm, tree, q)?;
    let rho = rm.evaluate_all(tree, x)?;
    Ok(tree
        .nodes_at(t)
        .iter()
        .map(|&n| {
            if q_path(tree, &dis, n) <= 0.0 {
                return None;
            }
            let d1 = dis.d_next(n);
            let next: Vec<Option<f64>> = (0..tree.len())
                .map(|c| if tree.parent(c) == Some(n) { disc[c].map(|a| d1 * (x[n] + rho[c]) + a) } else { None })
                .collect();
            let lhs = q_next(tree, &dis, &next, n)?;
            let rhs = disc[n].map(|a| dis.d[n] * (x[n] + rho[n]) + a)?;
            Some(lhs - rhs)
        })
        .collect())
}

/// Doob and Riesz decompositions of the discounted penalty `D_t α_t`.
/// Entries are `None` where infinite or on `Q`-null nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyDecomposition {
    pub discounted: Vec<Option<f64>>,
    /// `A_t = Σ_{k<t} D_k α_{k,k+1}`.
    pub predictable: Vec<Option<f64>>,
    /// `D_t α_t + A_t`.
    pub martingale: Vec<Option<f64>>,
    /// `E_Q[Σ_{k=t}^{T-1} D_k α_{k,k+1} | F_t]`.
    pub potential: Vec<Option<f64>>,
    /// `D_t α_t - S_t`; vanishes at finite horizon.
    pub remainder: Vec<Option<f64>>,
}

pub fn doob_riesz(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure) -> Result<PenaltyDecomposition> {
    let dis = decompose(tree, q)?;
    let disc = exact_discounted(rm, tree, q)?;
    let one = discounted_one_step(rm, tree, q, &dis)?;
    let charged: Vec<bool> = (0..tree.len()).map(|n| q_path(tree, &dis, n) > 0.0).collect();
    let mask = |v: Vec<Option<f64>>| -> Vec<Option<f64>> {
        v.into_iter().zip(&charged).map(|(v, c)| if *c { v } else { None }).collect()
    };

    let mut predictable = vec![Some(0.0); tree.len()];
    for n in 1..tree.len() {
        let p = tree.parent(n).expect("non-root");
        predictable[n] = predictable[p].zip(one[p]).map(|(a, b)| a + b);
    }
    let martingale: Vec<Option<f64>> = disc.iter().zip(&predictable).map(|(a, b)| a.zip(*b).map(|(a, b)| a + b)).collect();
    let mut potential = vec![Some(0.0); tree.len()];
    for n in (0..tree.len()).rev() {
        if !tree.is_leaf(n) && charged[n] {
            potential[n] = one[n].zip(q_next(tree, &dis, &potential, n)).map(|(a, b)| a + b);
        }
    }
    let remainder: Vec<Option<f64>> = disc.iter().zip(&potential).map(|(a, s)| a.zip(*s).map(|(a, s)| a - s)).collect();

    let out = PenaltyDecomposition {
        discounted: mask(disc),
        predictable: mask(predictable),
        martingale: mask(martingale),
        potential: mask(potential),
        remainder: mask(remainder),
    };
    let report = supermartingale_check(tree, &out.martingale, q, Direction::Martingale, DEFAULT_TOLERANCE)?;
    if !report.passed {
        return Err(Error::InconsistentInput(format!(
            "penalty martingale fails by {:e} at node {:?}; the measure is not strongly time consistent",
            report.max_violation, report.node
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Zero,
    DecreasingToZero,
    BoundedAway,
    Irregular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubblePoint {
    pub s: usize,
    /// `E_Q[D_s α_s]`; `None` when infinite.
    pub value: Option<f64>,
    /// `α_0 - E_Q[Σ_{k<s} D_k α_{k,k+1}]`.
    pub tail_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleProfile {
    pub points: Vec<BubblePoint>,
    pub trend: Trend,
}

/// Expected discounted penalty at the truncation times `times`, with the
/// tail-sum formula alongside and a trend label. No limit is claimed.
pub fn bubble_profile(rm: &RiskMeasureSpec, tree: &EventTree, q: &ProductMeasure, times: &[usize]) -> Result<BubbleProfile> {
    if let Some(s) = times.iter().find(|s| **s > tree.horizon()) {
        return Err(Error::TimeOrder(format!("time {s} beyond horizon {}", tree.horizon())));
    }
    let dis = decompose(tree, q)?;
    let disc = exact_discounted(rm, tree, q)?;
    let one = discounted_one_step(rm, tree, q, &dis)?;
    let expect = |v: &[Option<f64>], s: usize| -> Option<f64> {
        let mut acc = 0.0;
        for &n in tree.nodes_at(s) {
            let w = q_path(tree, &dis, n);
            if w > 0.0 {
                acc += w * v[n]?;
            }
        }
        Some(acc)
    };
    let mut points = Vec::with_capacity(times.len());
    for &s in times {
        let mut tail = disc[tree.root()];
        for k in 0..s {
            tail = tail.zip(expect(&one, k)).map(|(a, b)| a - b);
        }
        points.push(BubblePoint { s, value: expect(&disc, s), tail_sum: tail });
    }
    let trend = classify(&points);
    Ok(BubbleProfile { points, trend })
}

fn classify(points: &[BubblePoint]) -> Trend {
    let Some(values) = points.iter().map(|p| p.value).collect::<Option<Vec<f64>>>() else {
        return Trend::Irregular;
    };
    if values.iter().all(|v| v.abs() <= DEFAULT_TOLERANCE) {
        return Trend::Zero;
    }
    if values.windows(2).any(|w| w[1] > w[0] + DEFAULT_TOLERANCE) {
        return Trend::Irregular;
    }
    let first = values[0].abs().max(f64::MIN_POSITIVE);
    match values.last() {
        Some(last) if *last <= 0.05 * first => Trend::DecreasingToZero,
        _ => Trend::BoundedAway,
    }
}
