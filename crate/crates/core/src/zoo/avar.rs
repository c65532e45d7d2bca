//! Average value at risk on the product space and its decoupled variant.

use crate::error::{Error, Result};
use crate::measure::Disintegration;
use crate::risk::PenaltyValue;
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};

/// `sup { Σ q_i loss_i : 0 ≤ q_i ≤ w_i / λ, Σ q_i = 1 }` for weights summing to one.
pub fn sorted_tail(weights: &[f64], losses: &[f64], lambda: f64) -> f64 {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    let mut left = 1.0;
    let mut acc = 0.0;
    for i in idx {
        if left <= 0.0 {
            break;
        }
        let take = (weights[i] / lambda).min(left);
        acc += take * losses[i];
        left -= take;
    }
    acc
}

/// Product-space AV@R at level `lambda` over the tail atoms below `n`.
pub fn avar_node(tree: &EventTree, x: &AdaptedProcess, n: usize, lambda: f64) -> f64 {
    let w = tree.tail_mu(n);
    let weights: Vec<f64> = tree.subtree(n).map(|m| tree.cond_prob(m, n) * tree.mu(m) / w).collect();
    let losses: Vec<f64> = tree.subtree(n).map(|m| -x[m]).collect();
    sorted_tail(&weights, &losses, lambda)
}

/// Zero when the conditional density of the tail atom of `n` is at most `1/λ`.
pub fn avar_penalty_node(tree: &EventTree, dis: &Disintegration, n: usize, lambda: f64) -> PenaltyValue {
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return PenaltyValue::Infinite;
    }
    let w = tree.tail_mu(n);
    let bound = (1.0 + tolerance::IDENTITY) / lambda;
    let ok = tree.subtree(n).all(|m| {
        let density = dis.m[m] * dis.gamma[m] * w / (tree.mu(m) * dis.m[n] * dis.d[n]);
        density <= bound
    });
    if ok {
        PenaltyValue::Finite(0.0)
    } else {
        PenaltyValue::Infinite
    }
}

pub fn avar_one_step_penalty_node(tree: &EventTree, dis: &Disintegration, n: usize, lambda: f64) -> PenaltyValue {
    if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
        return PenaltyValue::Infinite;
    }
    let (q, a) = super::entropic::one_step_laws(tree, dis, n);
    let bound = (1.0 + tolerance::IDENTITY) / lambda;
    if q.iter().zip(&a).all(|(q, a)| *q <= a * bound) {
        PenaltyValue::Finite(0.0)
    } else {
        PenaltyValue::Infinite
    }
}

/// Vertices of `{q : 0 ≤ q_i ≤ caps_i, Σ q_i = 1}`: a set of coordinates at
/// their caps plus at most one coordinate strictly inside its range.
pub fn capped_simplex_vertices(caps: &[f64]) -> Vec<Vec<f64>> {
    const EPS: f64 = 1e-12;
    let mut out = Vec::new();
    let mut full = Vec::new();
    fn rec(i: usize, used: f64, caps: &[f64], full: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if i == caps.len() {
            let left = 1.0 - used;
            let mut q = vec![0.0; caps.len()];
            full.iter().for_each(|&k| q[k] = caps[k]);
            if left.abs() <= EPS {
                out.push(q);
            } else if left > 0.0 {
                for j in (0..caps.len()).filter(|j| !full.contains(j) && caps[*j] > left + EPS) {
                    let mut v = q.clone();
                    v[j] = left;
                    out.push(v);
                }
            }
            return;
        }
        rec(i + 1, used, caps, full, out);
        if used + caps[i] <= 1.0 + EPS {
            full.push(i);
            rec(i + 1, used + caps[i], caps, full, out);
            full.pop();
        }
    }
    rec(0, 0.0, caps, &mut full, &mut out);
    out
}

/// Concave piecewise-linear function on `[0, len]` with value 0 at 0, stored
/// as segments `(length, slope)` with nonincreasing slopes.
#[derive(Debug, Clone)]
struct Concave {
    segs: Vec<(f64, f64)>,
}

impl Concave {
    fn linear(len: f64, slope: f64) -> Self {
        Concave { segs: vec![(len, slope)] }
    }

    fn domain(&self) -> f64 {
        self.segs.iter().map(|s| s.0).sum()
    }

    fn eval(&self, x: f64) -> f64 {
        let mut left = x;
        let mut v = 0.0;
        for &(len, slope) in &self.segs {
            let take = len.min(left);
            v += take * slope;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        v
    }

    /// `sup_{a+b=x} f(a) + g(b)`: merge segments by slope.
    fn sup_convolve(mut self, other: &Concave) -> Self {
        self.segs.extend_from_slice(&other.segs);
        self.segs.sort_by(|a, b| b.1.total_cmp(&a.1));
        self
    }

    /// Pointwise sum on the common domain.
    fn sum(fs: &[Concave]) -> Concave {
        let dom = fs.iter().map(Concave::domain).fold(f64::INFINITY, f64::min);
        let mut cuts: Vec<f64> = vec![dom];
        for f in fs {
            let mut acc = 0.0;
            for &(len, _) in &f.segs {
                acc += len;
                if acc < dom {
                    cuts.push(acc);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut segs = Vec::with_capacity(cuts.len());
        let mut prev = 0.0;
        for &c in &cuts {
            let len = c - prev;
            if len > 0.0 {
                let mid = prev + len / 2.0;
                let slope: f64 = fs.iter().map(|f| f.slope_at(mid)).sum();
                segs.push((len, slope));
            }
            prev = c;
        }
        Concave { segs }
    }

    fn slope_at(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(len, slope) in &self.segs {
            acc += len;
            if x < acc {
                return slope;
            }
        }
        self.segs.last().map_or(0.0, |s| s.1)
    }
}

/// `sup_γ E_Q[Σ_{s≥t} γ_s loss_s | F_t]` over adapted `γ` with unit mass on
/// every path below `n` and caps `γ(m) ≤ cap(m)`. `mass[m - n]` is the
/// `Q`-probability of reaching `m` from `n`. Returns the value and a maximizer.
fn capped_discount_sup(tree: &EventTree, n: usize, mass: &[f64], loss: &[f64], cap: &[f64]) -> (f64, Vec<f64>) {
    let range = tree.subtree(n);
    let mut value: Vec<Concave> = vec![Concave { segs: Vec::new() }; range.len()];
    let mut below: Vec<Concave> = vec![Concave { segs: Vec::new() }; range.len()];
    for m in range.clone().rev() {
        let k = m - n;
        let own = Concave::linear(cap[k], mass[k] * loss[k]);
        value[k] = if tree.is_leaf(m) {
            own
        } else {
            let kids: Vec<Concave> = tree.children(m).iter().map(|&c| value[c - n].clone()).collect();
            below[k] = Concave::sum(&kids);
            own.sup_convolve(&below[k])
        };
    }
    // recover a maximizer: mass not absorbed by steeper continuation segments
    // is released at the node
    let mut gamma = vec![0.0; range.len()];
    let mut d = vec![0.0; range.len()];
    for m in range {
        let k = m - n;
        d[k] = match tree.parent(m) {
            Some(p) if m != n => d[p - n] - gamma[p - n],
            _ => 1.0,
        };
        gamma[k] = if tree.is_leaf(m) {
            d[k]
        } else {
            let slope = mass[k] * loss[k];
            let steeper: f64 = below[k].segs.iter().filter(|s| s.1 > slope).map(|s| s.0).sum();
            let room = below[k].domain();
            (d[k] - steeper).min(cap[k]).min(d[k]).max((d[k] - room).max(0.0))
        };
    }
    (value[0].eval(1.0), gamma)
}

/// Leaf weights `P(ℓ | n)` and node masses induced by leaf weights `q`.
fn node_masses(tree: &EventTree, n: usize, leaf_q: &[f64]) -> Vec<f64> {
    let range = tree.subtree(n);
    let mut mass = vec![0.0; range.len()];
    let mut li = 0;
    for m in range.clone() {
        if tree.is_leaf(m) {
            mass[m - n] = leaf_q[li];
            li += 1;
        }
    }
    for m in range.rev() {
        if !tree.is_leaf(m) {
            mass[m - n] = tree.children(m).iter().map(|&c| mass[c - n]).sum();
        }
    }
    mass
}

/// Leaves with more atoms than this are handled by alternating maximization.
pub const VERTEX_ENUMERATION_LIMIT: usize = 12;

/// `sup_{γ} AV@R^{λ2}_t(Σ_{s≥t} γ_s X_s)` over adapted `γ` with
/// `γ_s ≤ μ^t_s / λ1` and unit mass on every path below `n`.
pub fn decoupled_avar_node(tree: &EventTree, x: &AdaptedProcess, n: usize, lambda1: f64, lambda2: f64) -> Result<f64> {
    let w = tree.tail_mu(n);
    let cap: Vec<f64> = tree.subtree(n).map(|m| tree.mu(m) / (w * lambda1)).collect();
    let loss: Vec<f64> = tree.subtree(n).map(|m| -x[m]).collect();
    let leaves: Vec<usize> = tree.leaves_under(n).collect();
    let p: Vec<f64> = leaves.iter().map(|&l| tree.cond_prob(l, n)).collect();
    let leaf_caps: Vec<f64> = p.iter().map(|p| p / lambda2).collect();

    if leaves.len() <= VERTEX_ENUMERATION_LIMIT {
        let best = capped_simplex_vertices(&leaf_caps)
            .iter()
            .map(|q| capped_discount_sup(tree, n, &node_masses(tree, n, q), &loss, &cap).0)
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(best);
    }
    decoupled_alternating(tree, n, &p, &leaf_caps, &loss, &cap)
}

fn decoupled_alternating(
    tree: &EventTree,
    n: usize,
    p: &[f64],
    leaf_caps: &[f64],
    loss: &[f64],
    cap: &[f64],
) -> Result<f64> {
    // each half-step is an exact maximization, so values never decrease
    let leaves: Vec<usize> = tree.leaves_under(n).collect();
    let mut q = p.to_vec();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (v, gamma) = capped_discount_sup(tree, n, &node_masses(tree, n, &q), loss, cap);
        if v <= best + 1e-14 {
            return Ok(best.max(v));
        }
        best = v;
        let path_loss: Vec<f64> = leaves
            .iter()
            .map(|&l| tree.path_to(l).iter().filter(|&&m| m >= n).map(|&m| gamma[m - n] * loss[m - n]).sum())
            .collect();
        let mut idx: Vec<usize> = (0..q.len()).collect();
        idx.sort_by(|&a, &b| path_loss[b].total_cmp(&path_loss[a]));
        let mut left = 1.0;
        for i in idx {
            q[i] = leaf_caps[i].min(left);
            left -= q[i];
        }
    }
    Err(Error::OptimizerFailed("decoupled AV@R did not converge".into()))
}
