//! Finite event trees, adapted processes and the elementary operations on them.
//!
//! Nodes are stored internally in depth-first preorder, so the subtree rooted at
//! a node is the contiguous index range `n..subtree_end(n)`. External node ids
//! from input files are kept for reporting.

use std::collections::{BTreeMap, HashMap};
use std::ops::{Index, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;

/// A node as given in input: external id, time, parent id, branch probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u64,
    pub time: usize,
    pub parent: Option<u64>,
    pub prob: f64,
}

/// Validated event tree with horizon `T`, branch probabilities and discount weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTree {
    horizon: usize,
    ids: Vec<u64>,
    time: Vec<usize>,
    parent: Vec<Option<usize>>,
    prob: Vec<f64>,
    children: Vec<Vec<usize>>,
    subtree_end: Vec<usize>,
    abs_prob: Vec<f64>,
    mu: Vec<f64>,
    tail_mu: Vec<f64>,
    by_time: Vec<Vec<usize>>,
    slot: Vec<usize>,
    index: HashMap<u64, usize>,
}

impl EventTree {
    /// Builds a tree from node specs. `mu` maps node ids to discount weights;
    /// `None` means the uniform weight `1/(T+1)`.
    pub fn from_nodes(
        horizon: usize,
        nodes: &[NodeSpec],
        mu: Option<&BTreeMap<u64, f64>>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::MalformedTree("no nodes".into()));
        }
        let mut pos: HashMap<u64, usize> = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if pos.insert(n.id, i).is_some() {
                return Err(Error::MalformedTree(format!("duplicate node id {}", n.id)));
            }
            if n.time > horizon {
                return Err(Error::MalformedTree(format!(
                    "node {} has time {} beyond horizon {}",
                    n.id, n.time, horizon
                )));
            }
        }
        let mut root = None;
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            match n.parent {
                None => {
                    if root.replace(i).is_some() {
                        return Err(Error::MalformedTree("more than one root".into()));
                    }
                    if n.time != 0 {
                        return Err(Error::MalformedTree(format!(
                            "root {} must be at time 0",
                            n.id
                        )));
                    }
                    if (n.prob - 1.0).abs() > tolerance::VALIDATION {
                        return Err(Error::BadProbabilities(format!(
                            "root {} must have probability 1, got {}",
                            n.id, n.prob
                        )));
                    }
                }
                Some(p) => {
                    let &pi = pos.get(&p).ok_or_else(|| {
                        Error::MalformedTree(format!("node {} has unknown parent {}", n.id, p))
                    })?;
                    if nodes[pi].time + 1 != n.time {
                        return Err(Error::MalformedTree(format!(
                            "node {} at time {} has parent {} at time {}",
                            n.id, n.time, p, nodes[pi].time
                        )));
                    }
                    if !(n.prob > 0.0 && n.prob <= 1.0 + tolerance::VALIDATION) {
                        return Err(Error::BadProbabilities(format!(
                            "branch probability of node {} is {}",
                            n.id, n.prob
                        )));
                    }
                    kids[pi].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| Error::MalformedTree("no root".into()))?;

        // depth-first preorder relabelling
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            for &c in kids[i].iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != nodes.len() {
            return Err(Error::MalformedTree(format!(
                "{} nodes are not reachable from the root",
                nodes.len() - order.len()
            )));
        }
        let mut new_of = vec![0usize; nodes.len()];
        for (k, &i) in order.iter().enumerate() {
            new_of[i] = k;
        }
        let n = nodes.len();
        let ids: Vec<u64> = order.iter().map(|&i| nodes[i].id).collect();
        let time: Vec<usize> = order.iter().map(|&i| nodes[i].time).collect();
        let prob: Vec<f64> = order
            .iter()
            .map(|&i| if i == root { 1.0 } else { nodes[i].prob })
            .collect();
        let parent: Vec<Option<usize>> = order
            .iter()
            .map(|&i| nodes[i].parent.map(|p| new_of[pos[&p]]))
            .collect();
        let children: Vec<Vec<usize>> = order
            .iter()
            .map(|&i| kids[i].iter().map(|&c| new_of[c]).collect())
            .collect();

        for k in 0..n {
            if time[k] < horizon && children[k].is_empty() {
                return Err(Error::MalformedTree(format!(
                    "node {} at time {} < horizon has no children",
                    ids[k], time[k]
                )));
            }
            if !children[k].is_empty() {
                let s: f64 = children[k].iter().map(|&c| prob[c]).sum();
                if (s - 1.0).abs() > tolerance::VALIDATION {
                    return Err(Error::BadProbabilities(format!(
                        "children of node {} sum to {}",
                        ids[k], s
                    )));
                }
            }
        }

        let mut subtree_end = vec![0usize; n];
        for k in (0..n).rev() {
            subtree_end[k] = children[k].last().map_or(k + 1, |&c| subtree_end[c]);
        }
        let mut abs_prob = vec![1.0; n];
        for k in 1..n {
            abs_prob[k] = abs_prob[parent[k].unwrap()] * prob[k];
        }
        let mut by_time = vec![Vec::new(); horizon + 1];
        let mut slot = vec![0usize; n];
        for k in 0..n {
            slot[k] = by_time[time[k]].len();
            by_time[time[k]].push(k);
        }
        let index = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();

        let mut tree = EventTree {
            horizon,
            ids,
            time,
            parent,
            prob,
            children,
            subtree_end,
            abs_prob,
            mu: Vec::new(),
            tail_mu: Vec::new(),
            by_time,
            slot,
            index,
        };
        let weights = match mu {
            None => vec![1.0 / (horizon as f64 + 1.0); n],
            Some(m) => (0..n)
                .map(|k| {
                    m.get(&tree.ids[k]).copied().ok_or_else(|| {
                        Error::BadMu(format!("missing weight for node {}", tree.ids[k]))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        tree.set_mu(weights)?;
        Ok(tree)
    }

    /// Replaces the discount weights (indexed by internal node index).
    pub fn with_mu(mut self, mu: Vec<f64>) -> Result<Self> {
        self.set_mu(mu)?;
        Ok(self)
    }

    fn set_mu(&mut self, mu: Vec<f64>) -> Result<()> {
        if mu.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: mu.len() });
        }
        let mut tail = vec![1.0; self.len()];
        for k in 0..self.len() {
            if !mu[k].is_finite() || mu[k] <= tolerance::VALIDATION {
                return Err(Error::BadMu(format!(
                    "weight at node {} is {}",
                    self.ids[k], mu[k]
                )));
            }
            if let Some(p) = self.parent[k] {
                tail[k] = tail[p] - mu[p];
            }
            if self.time[k] == self.horizon && (tail[k] - mu[k]).abs() > tolerance::VALIDATION {
                return Err(Error::BadMu(format!(
                    "weights along the path to node {} sum to {}",
                    self.ids[k],
                    1.0 - tail[k] + mu[k]
                )));
            }
        }
        self.mu = mu;
        self.tail_mu = tail;
        Ok(())
    }

    /// Full tree where every node at time `t < horizon` has `branching[t]`
    /// children; ids are assigned in breadth-first order starting at 0.
    pub fn regular(branching: &[usize], child_probs: &[Vec<f64>]) -> Result<Self> {
        if branching.len() != child_probs.len() {
            return Err(Error::MalformedTree("branching and probabilities differ in length".into()));
        }
        let horizon = branching.len();
        let mut nodes = vec![NodeSpec { id: 0, time: 0, parent: None, prob: 1.0 }];
        let mut frontier = vec![0u64];
        let mut next = 1u64;
        for t in 0..horizon {
            if child_probs[t].len() != branching[t] {
                return Err(Error::MalformedTree(format!(
                    "time {} lists {} probabilities for {} branches",
                    t,
                    child_probs[t].len(),
                    branching[t]
                )));
            }
            let mut new_frontier = Vec::new();
            for &p in &frontier {
                for &q in &child_probs[t] {
                    nodes.push(NodeSpec { id: next, time: t + 1, parent: Some(p), prob: q });
                    new_frontier.push(next);
                    next += 1;
                }
            }
            frontier = new_frontier;
        }
        Self::from_nodes(horizon, &nodes, None)
    }

    /// Binary tree with up-probability `p` at every step and uniform weights.
    pub fn binomial(horizon: usize, p: f64) -> Result<Self> {
        Self::regular(&vec![2; horizon], &vec![vec![p, 1.0 - p]; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn id(&self, n: usize) -> u64 {
        self.ids[n]
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn time(&self, n: usize) -> usize {
        self.time[n]
    }

    pub fn parent(&self, n: usize) -> Option<usize> {
        self.parent[n]
    }

    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    pub fn is_leaf(&self, n: usize) -> bool {
        self.children[n].is_empty()
    }

    /// Branch probability of `n` given its parent.
    pub fn prob(&self, n: usize) -> f64 {
        self.prob[n]
    }

    /// Unconditional probability of reaching `n`.
    pub fn path_prob(&self, n: usize) -> f64 {
        self.abs_prob[n]
    }

    /// Probability of `m` given `n`; `m` must lie in the subtree of `n`.
    pub fn cond_prob(&self, m: usize, n: usize) -> f64 {
        debug_assert!(self.subtree(n).contains(&m));
        self.abs_prob[m] / self.abs_prob[n]
    }

    pub fn mu(&self, n: usize) -> f64 {
        self.mu[n]
    }

    /// Remaining discount mass from `time(n)` on, i.e. one minus the weights
    /// of the strict ancestors of `n`.
    pub fn tail_mu(&self, n: usize) -> f64 {
        self.tail_mu[n]
    }

    pub fn nodes_at(&self, t: usize) -> &[usize] {
        &self.by_time[t]
    }

    /// Position of `n` within `nodes_at(time(n))`.
    pub fn slot(&self, n: usize) -> usize {
        self.slot[n]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.by_time[self.horizon]
    }

    pub fn subtree(&self, n: usize) -> Range<usize> {
        n..self.subtree_end[n]
    }

    pub fn leaves_under(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.subtree(n).filter(move |&m| self.time[m] == self.horizon)
    }

    /// Ancestor of `n` at time `t <= time(n)`.
    pub fn ancestor_at(&self, mut n: usize, t: usize) -> usize {
        debug_assert!(t <= self.time[n]);
        while self.time[n] > t {
            n = self.parent[n].unwrap();
        }
        n
    }

    /// Nodes on the path from the root to `n`, root first.
    pub fn path_to(&self, n: usize) -> Vec<usize> {
        let mut p = vec![n];
        let mut k = n;
        while let Some(q) = self.parent[k] {
            p.push(q);
            k = q;
        }
        p.reverse();
        p
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        (0..self.len())
            .map(|k| NodeSpec {
                id: self.ids[k],
                time: self.time[k],
                parent: self.parent[k].map(|p| self.ids[p]),
                prob: self.prob[k],
            })
            .collect()
    }

    pub fn mu_by_id(&self) -> BTreeMap<u64, f64> {
        (0..self.len()).map(|k| (self.ids[k], self.mu[k])).collect()
    }
}

/// A real-valued process adapted to the tree filtration: one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn new(tree: &EventTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::LengthMismatch { expected: tree.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at node {}",
                tree.id(k)
            )));
        }
        Ok(AdaptedProcess { values })
    }

    pub fn from_fn(tree: &EventTree, f: impl FnMut(usize) -> f64) -> Self {
        AdaptedProcess { values: (0..tree.len()).map(f).collect() }
    }

    pub fn zeros(tree: &EventTree) -> Self {
        Self::constant(tree, 0.0)
    }

    pub fn constant(tree: &EventTree, c: f64) -> Self {
        AdaptedProcess { values: vec![c; tree.len()] }
    }

    /// Reads a process from an id-keyed map that must cover every node.
    pub fn from_ids(tree: &EventTree, map: &BTreeMap<u64, f64>, what: &str) -> Result<Self> {
        let values = (0..tree.len())
            .map(|k| {
                map.get(&tree.id(k)).copied().ok_or_else(|| {
                    Error::MalformedTree(format!("{what}.{} missing", tree.id(k)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(id) = map.keys().find(|id| tree.index_of(**id).is_none()) {
            return Err(Error::MalformedTree(format!("{what}.{id} is not a node")));
        }
        Self::new(tree, values)
    }

    pub fn to_ids(&self, tree: &EventTree) -> BTreeMap<u64, f64> {
        self.values.iter().enumerate().map(|(k, &v)| (tree.id(k), v)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn set(&mut self, n: usize, v: f64) {
        self.values[n] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        AdaptedProcess { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        AdaptedProcess {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Process equal to `slice[slot(ancestor_at(m, t))]` on nodes `m` with
    /// time at least `t` and zero before.
    pub fn from_time_slice(tree: &EventTree, t: usize, slice: &[f64]) -> Self {
        Self::from_fn(tree, |m| {
            if tree.time(m) < t {
                0.0
            } else {
                slice[tree.slot(tree.ancestor_at(m, t))]
            }
        })
    }
}

impl Index<usize> for AdaptedProcess {
    type Output = f64;
    fn index(&self, n: usize) -> &f64 {
        &self.values[n]
    }
}

/// `E[X_s | F_t]` under the reference measure, one value per node in `nodes_at(t)`.
pub fn cond_expect(tree: &EventTree, x: &AdaptedProcess, s: usize, t: usize) -> Result<Vec<f64>> {
    check_times(tree, s, t)?;
    Ok(tree
        .nodes_at(t)
        .iter()
        .map(|&n| {
            tree.subtree(n)
                .filter(|&m| tree.time(m) == s)
                .map(|m| tree.cond_prob(m, n) * x[m])
                .sum()
        })
        .collect())
}

/// `E[X_s | F_t]` under the measure with leaf density `weights` (aligned with
/// `tree.leaves()`). Nodes of zero weighted mass give `None`.
pub fn cond_expect_weighted(
    tree: &EventTree,
    x: &AdaptedProcess,
    s: usize,
    t: usize,
    weights: &[f64],
) -> Result<Vec<Option<f64>>> {
    check_times(tree, s, t)?;
    if weights.len() != tree.leaves().len() {
        return Err(Error::LengthMismatch { expected: tree.leaves().len(), got: weights.len() });
    }
    if let Some(k) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::BadDensity(format!(
            "leaf weight {} at node {}",
            weights[k],
            tree.id(tree.leaves()[k])
        )));
    }
    Ok(tree
        .nodes_at(t)
        .iter()
        .map(|&n| {
            let (mut num, mut den) = (0.0, 0.0);
            for l in tree.leaves_under(n) {
                let w = tree.cond_prob(l, n) * weights[tree.slot(l)];
                num += w * x[tree.ancestor_at(l, s)];
                den += w;
            }
            (den > 0.0).then(|| num / den)
        })
        .collect())
}

fn check_times(tree: &EventTree, s: usize, t: usize) -> Result<()> {
    if s > tree.horizon() {
        return Err(Error::TimeOrder(format!("time {s} beyond horizon {}", tree.horizon())));
    }
    if s < t {
        return Err(Error::TimeOrder(format!("cannot condition time-{s} values on time {t}")));
    }
    Ok(())
}

/// Increments `X_t - X_{t-1}` with `X_{-1} = 0`.
pub fn delta(tree: &EventTree, x: &AdaptedProcess) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |n| x[n] - tree.parent(n).map_or(0.0, |p| x[p]))
}

/// Inverse of [`delta`]: running sums along each path.
pub fn cumsum(tree: &EventTree, dx: &AdaptedProcess) -> AdaptedProcess {
    let mut out = vec![0.0; tree.len()];
    for n in 0..tree.len() {
        out[n] = dx[n] + tree.parent(n).map_or(0.0, |p| out[p]);
    }
    AdaptedProcess { values: out }
}

/// Checks that the time-`s` values of `m` are constant on every time-`t` subtree
/// and returns them per time-`t` node.
pub fn measurable_slice(tree: &EventTree, m: &AdaptedProcess, t: usize, s: usize) -> Result<Vec<f64>> {
    check_times(tree, s, t)?;
    tree.nodes_at(t)
        .iter()
        .map(|&n| {
            let mut vals = tree.subtree(n).filter(|&k| tree.time(k) == s).map(|k| m[k]);
            let first = vals.next().unwrap_or(0.0);
            if vals.all(|v| (v - first).abs() <= tolerance::VALIDATION * (1.0 + first.abs())) {
                Ok(first)
            } else {
                Err(Error::MeasurabilityViolation(format!(
                    "cash amount varies below node {} at time {t}",
                    tree.id(n)
                )))
            }
        })
        .collect()
}

/// `X + m 1_{[s, T]}` where `m` is given per time-`t` node.
pub fn shift_cash_slice(
    tree: &EventTree,
    x: &AdaptedProcess,
    m: &[f64],
    t: usize,
    s: usize,
) -> Result<AdaptedProcess> {
    check_times(tree, s, t)?;
    if m.len() != tree.nodes_at(t).len() {
        return Err(Error::LengthMismatch { expected: tree.nodes_at(t).len(), got: m.len() });
    }
    Ok(AdaptedProcess::from_fn(tree, |k| {
        if tree.time(k) >= s {
            x[k] + m[tree.slot(tree.ancestor_at(k, t))]
        } else {
            x[k]
        }
    }))
}

/// `X + m 1_{[s, T]}` with `m` an `F_t`-measurable amount read from the
/// time-`s` values of a process.
pub fn shift_cash(
    tree: &EventTree,
    x: &AdaptedProcess,
    m: &AdaptedProcess,
    t: usize,
    s: usize,
) -> Result<AdaptedProcess> {
    let slice = measurable_slice(tree, m, t, s)?;
    shift_cash_slice(tree, x, &slice, t, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn binomial_layout() {
        let tree = EventTree::binomial(3, 0.5).unwrap();
        assert_eq!(tree.len(), 15);
        assert_eq!(tree.leaves().len(), 8);
        assert_eq!(tree.subtree(0), 0..15);
        for n in 0..tree.len() {
            let inside = tree.subtree(n).count();
            assert_eq!(inside, (1usize << (4 - tree.time(n))) - 1);
            assert!((tree.tail_mu(n) - (4 - tree.time(n)) as f64 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let ok = |p| NodeSpec { id: 1, time: 1, parent: Some(0), prob: p };
        let root = NodeSpec { id: 0, time: 0, parent: None, prob: 1.0 };
        let r = EventTree::from_nodes(1, &[root.clone(), ok(0.7)], None);
        assert!(matches!(r, Err(Error::BadProbabilities(_))));
        let orphan = NodeSpec { id: 2, time: 1, parent: Some(9), prob: 0.3 };
        let r = EventTree::from_nodes(1, &[root.clone(), ok(0.7), orphan], None);
        assert!(matches!(r, Err(Error::MalformedTree(_))));
        let mu: BTreeMap<u64, f64> = [(0, 0.5), (1, 0.4)].into();
        let r = EventTree::from_nodes(1, &[root, ok(1.0)], Some(&mu));
        assert!(matches!(r, Err(Error::BadMu(_))));
    }

    #[test]
    fn shift_cash_requires_measurable_amount() {
        let tree = EventTree::binomial(2, 0.5).unwrap();
        let x = AdaptedProcess::zeros(&tree);
        let m = AdaptedProcess::from_fn(&tree, |n| n as f64);
        assert!(matches!(
            shift_cash(&tree, &x, &m, 0, 2),
            Err(Error::MeasurabilityViolation(_))
        ));
        let ok = shift_cash(&tree, &x, &AdaptedProcess::constant(&tree, 2.0), 0, 1).unwrap();
        for n in 0..tree.len() {
            assert_eq!(ok[n], if tree.time(n) >= 1 { 2.0 } else { 0.0 });
        }
    }

    proptest! {
        #[test]
        fn tower_property(seed in any::<u64>(), horizon in 1usize..5) {
            let (tree, x) = fixtures::random_tree_and_process(seed, horizon);
            let s = horizon;
            for t in 0..s {
                let direct = cond_expect(&tree, &x, s, t).unwrap();
                let inner = cond_expect(&tree, &x, s, t + 1).unwrap();
                let inner_proc = AdaptedProcess::from_time_slice(&tree, t + 1, &inner);
                let outer = cond_expect(&tree, &inner_proc, t + 1, t).unwrap();
                for (a, b) in direct.iter().zip(&outer) {
                    prop_assert!((a - b).abs() <= tolerance::IDENTITY);
                }
            }
        }

        #[test]
        fn weighted_expectation_with_unit_weights(seed in any::<u64>(), horizon in 1usize..4) {
            let (tree, x) = fixtures::random_tree_and_process(seed, horizon);
            let w = vec![1.0; tree.leaves().len()];
            for t in 0..=horizon {
                let a = cond_expect(&tree, &x, horizon, t).unwrap();
                let b = cond_expect_weighted(&tree, &x, horizon, t, &w).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    prop_assert!((u - v.unwrap()).abs() <= tolerance::IDENTITY);
                }
            }
        }

        #[test]
        fn delta_cumsum_roundtrip(seed in any::<u64>(), horizon in 1usize..5) {
            let (tree, x) = fixtures::random_tree_and_process(seed, horizon);
            let back = cumsum(&tree, &delta(&tree, &x));
            prop_assert!(back.max_abs_diff(&x) <= 1e-12);
        }
    }
}
