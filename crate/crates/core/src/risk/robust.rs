//! Robust evaluation: supremum of expected loss minus penalty over a family
//! of conditional measures on the tail atoms of a node.

use crate::error::{Error, Result};
use crate::measure::{decompose, ProductMeasure};
use crate::tree::{AdaptedProcess, EventTree};
use crate::zoo::avar::capped_simplex_vertices;

use super::penalty::penalty_at_node;
use super::{PenaltyValue, RiskMeasureSpec};

const MAX_ITERATIONS: usize = 10_000;
const CONVERGED: f64 = 1e-12;
const FD_STEP: f64 = 1e-7;
/// Atom count up to which capped families are searched over all vertices.
pub const CAPPED_VERTEX_LIMIT: usize = 20;

/// Penalty `α_t(Q̄)` at node `n` for candidate measures.
pub trait PenaltySource {
    fn penalty_at(&self, tree: &EventTree, q: &ProductMeasure, n: usize) -> Result<PenaltyValue>;

    /// Gradient of the penalty in the local tail weights (indexed by `m - n`),
    /// when available in closed form.
    fn gradient_at(&self, _tree: &EventTree, _n: usize, _local: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<F> PenaltySource for F
where
    F: Fn(&EventTree, &ProductMeasure, usize) -> Result<PenaltyValue>,
{
    fn penalty_at(&self, tree: &EventTree, q: &ProductMeasure, n: usize) -> Result<PenaltyValue> {
        self(tree, q, n)
    }
}

/// Minimal penalty of a risk measure spec.
#[derive(Debug, Clone, Copy)]
pub struct SpecPenalty<'a>(pub &'a RiskMeasureSpec);

impl PenaltySource for SpecPenalty<'_> {
    fn penalty_at(&self, tree: &EventTree, q: &ProductMeasure, n: usize) -> Result<PenaltyValue> {
        let dis = decompose(tree, q)?;
        penalty_at_node(self.0, tree, q, &dis, n)
    }

    fn gradient_at(&self, tree: &EventTree, n: usize, local: &[f64]) -> Option<Vec<f64>> {
        let RiskMeasureSpec::Entropic { r } = self.0 else {
            return None;
        };
        let r = r.at(tree.time(n));
        let pi = reference_local(tree, n);
        Some(
            local
                .iter()
                .zip(&pi)
                .map(|(q, p)| if *q > 0.0 { ((q / p).ln() + 1.0) / r } else { f64::NEG_INFINITY })
                .collect(),
        )
    }
}

/// Candidate conditional measures on the tail atoms of each node.
#[derive(Debug, Clone)]
pub enum Family {
    /// All laws on the tail atoms.
    Simplex,
    /// Laws with density at most `cap` against the reference tail law.
    CappedDensity { cap: f64 },
    /// An explicit list; each is used at the nodes whose tail it charges.
    Finite(Vec<ProductMeasure>),
}

/// Reference law `P(m | n) μ_m / Σ_{s≥t} μ_s` on the tail atoms of `n`.
fn reference_local(tree: &EventTree, n: usize) -> Vec<f64> {
    let w = tree.tail_mu(n);
    tree.subtree(n).map(|m| tree.cond_prob(m, n) * tree.mu(m) / w).collect()
}

/// Measure equal to `P̄` off the tail of `n` whose conditional law on the
/// tail atoms of `n` is `local` (indexed by `m - n`).
pub fn embed_conditional(tree: &EventTree, n: usize, local: &[f64]) -> Result<ProductMeasure> {
    let range = tree.subtree(n);
    if local.len() != range.len() {
        return Err(Error::LengthMismatch { expected: range.len(), got: local.len() });
    }
    let pi = reference_local(tree, n);
    let mut z = AdaptedProcess::constant(tree, 1.0);
    for (k, m) in range.enumerate() {
        z.set(m, local[k] / pi[k]);
    }
    ProductMeasure::new(tree, z)
}

struct NodeProblem<'a> {
    source: &'a dyn PenaltySource,
    tree: &'a EventTree,
    n: usize,
    loss: Vec<f64>,
}

impl NodeProblem<'_> {
    /// `Σ q (-X) - α`, or `None` when the penalty is infinite.
    fn objective(&self, local: &[f64]) -> Result<Option<f64>> {
        let q = embed_conditional(self.tree, self.n, local)?;
        let lin: f64 = local.iter().zip(&self.loss).map(|(q, l)| q * l).sum();
        Ok(self.source.penalty_at(self.tree, &q, self.n)?.value().map(|a| lin - a))
    }

    fn gradient(&self, local: &[f64], value: f64) -> Result<Vec<f64>> {
        if let Some(g) = self.source.gradient_at(self.tree, self.n, local) {
            return Ok(self.loss.iter().zip(g).map(|(l, g)| l - g).collect());
        }
        let mut out = Vec::with_capacity(local.len());
        let mut probe = local.to_vec();
        for i in 0..local.len() {
            probe[i] += FD_STEP;
            let total = 1.0 + FD_STEP;
            let scaled: Vec<f64> = probe.iter().map(|v| v / total).collect();
            let g = match self.objective(&scaled)? {
                Some(v) => (v - value) / FD_STEP,
                None => f64::NEG_INFINITY,
            };
            out.push(g);
            probe[i] = local[i];
        }
        Ok(out)
    }

    /// Exponentiated-gradient ascent from the reference law with backtracking.
    fn mirror_ascent(&self) -> Result<f64> {
        let mut q = reference_local(self.tree, self.n);
        let mut value = match self.objective(&q)? {
            Some(v) => v,
            None => {
                let k = q.len() as f64;
                q.iter_mut().for_each(|v| *v = 1.0 / k);
                self.objective(&q)?.ok_or_else(|| {
                    Error::InfeasibleFamily(format!("no finite penalty found at node {}", self.tree.id(self.n)))
                })?
            }
        };
        let mut step = 1.0;
        for _ in 0..MAX_ITERATIONS {
            let g = self.gradient(&q, value)?;
            let top = g.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Ok(value);
            }
            let mut improved = None;
            let mut eta = step * 2.0;
            for _ in 0..60 {
                let mut next: Vec<f64> =
                    q.iter().zip(&g).map(|(q, g)| if g.is_finite() { q * (eta * (g - top)).exp() } else { 0.0 }).collect();
                let total: f64 = next.iter().sum();
                next.iter_mut().for_each(|v| *v /= total);
                if let Some(v) = self.objective(&next)? {
                    if v > value {
                        improved = Some((next, v));
                        break;
                    }
                }
                eta *= 0.5;
            }
            let Some((next, v)) = improved else {
                return Ok(value);
            };
            let gain = v - value;
            q = next;
            value = v;
            step = eta;
            if gain <= CONVERGED * (1.0 + value.abs()) {
                return Ok(value);
            }
        }
        Err(Error::OptimizerFailed(format!(
            "mirror ascent at node {} did not converge in {MAX_ITERATIONS} iterations",
            self.tree.id(self.n)
        )))
    }

    fn capped(&self, cap: f64) -> Result<f64> {
        let caps: Vec<f64> = reference_local(self.tree, self.n).iter().map(|p| p * cap).collect();
        if caps.iter().sum::<f64>() < 1.0 - 1e-12 {
            return Err(Error::InfeasibleFamily(format!("density cap {cap} admits no probability law")));
        }
        let candidates = if caps.len() <= CAPPED_VERTEX_LIMIT {
            capped_simplex_vertices(&caps)
        } else {
            vec![greedy_vertex(&caps, &self.loss)]
        };
        let mut best: Option<f64> = None;
        for q in candidates {
            if let Some(v) = self.objective(&q)? {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
        best.ok_or_else(|| Error::InfeasibleFamily("every capped law has infinite penalty".into()))
    }
}

/// Capped law loading the largest losses first.
fn greedy_vertex(caps: &[f64], loss: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..caps.len()).collect();
    idx.sort_by(|&a, &b| loss[b].total_cmp(&loss[a]));
    let mut q = vec![0.0; caps.len()];
    let mut left = 1.0;
    for i in idx {
        let take = caps[i].min(left);
        q[i] = take;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    q
}

/// `sup_{Q̄} E_Q̄[-X | F̄_t] - α_t(Q̄)` at every time-`t` node, over the family.
pub fn robust_evaluate(
    source: &dyn PenaltySource,
    tree: &EventTree,
    x: &AdaptedProcess,
    t: usize,
    family: &Family,
) -> Result<Vec<f64>> {
    if t > tree.horizon() {
        return Err(Error::TimeOrder(format!("time {t} beyond horizon {}", tree.horizon())));
    }
    tree.nodes_at(t)
        .iter()
        .map(|&n| {
            let problem = NodeProblem { source, tree, n, loss: tree.subtree(n).map(|m| -x[m]).collect() };
            match family {
                Family::Simplex => problem.mirror_ascent(),
                Family::CappedDensity { cap } => problem.capped(*cap),
                Family::Finite(list) => {
                    let mut best: Option<f64> = None;
                    for q in list {
                        let u = q.tail_mass(tree);
                        let Some(mean) = q.tail_mean(tree, &u, x, n) else { continue };
                        if let Some(a) = source.penalty_at(tree, q, n)?.value() {
                            let v = -mean - a;
                            best = Some(best.map_or(v, |b| b.max(v)));
                        }
                    }
                    best.ok_or_else(|| {
                        Error::InfeasibleFamily(format!("no listed measure charges node {} with finite penalty", tree.id(n)))
                    })
                }
            }
        })
        .collect()
}
