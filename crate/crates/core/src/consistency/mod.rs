//! Time-consistency checks and the supermartingale structure of penalties.
//!
//! Probe-based checks draw processes uniformly from `[-5, 5]` on the subtree of
//! each node with a stream seeded per `(t, node)`. A pass is a budgeted
//! certificate; a failure carries a shrunk, replayable counterexample.

mod maximal;
mod penalty;
mod stability;

pub use maximal::{maximal_inequality, MaximalMode, MaximalReport};
pub use penalty::{
    bubble_profile, condition_iv_residual, doob_riesz, penalty_cocycle, supermartingale_check, w_process,
    BubblePoint, BubbleProfile, Direction, PenaltyDecomposition, SupermartingaleReport, Trend,
};
pub use stability::{check_stability, paste_closure, Membership, StabilityReport, Violation};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskMeasureSpec;
use crate::tree::{AdaptedProcess, EventTree};

pub const DEFAULT_BUDGET: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
const PROBE_BOUND: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Strong,
    Acceptance,
    Rejection,
    WeakAcceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
}

/// Which inequality a verdict was obtained from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Test {
    /// `ρ_t(X)` against `ρ_t(X_t 1_{t} - ρ_{t+1}(X) 1_{>t})`.
    Recursion,
    /// Accepted one-step `y` plus accepted later `x` must be accepted at `t`.
    SplitSum,
    /// An accepted `x` must split into accepted parts.
    SplitOf,
    /// `x_t = 0` and `ρ_{t+1}(x) ≤ 0` must give `ρ_t(x) ≤ 0`.
    Inclusion,
}

/// Violating input, keyed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub t: usize,
    pub node: u64,
    pub x: BTreeMap<u64, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<BTreeMap<u64, f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub property: Property,
    pub test: Test,
    pub status: Status,
    pub counterexample: Option<Counterexample>,
    pub tolerance: f64,
    pub probes: usize,
}

impl ConsistencyVerdict {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Recomputes the counterexample; `true` when the violation persists.
    pub fn replay(&self, rm: &RiskMeasureSpec, tree: &EventTree) -> Result<bool> {
        let Some(ce) = &self.counterexample else {
            return Ok(false);
        };
        let n = tree
            .index_of(ce.node)
            .ok_or_else(|| Error::InconsistentInput(format!("unknown node {}", ce.node)))?;
        let x = AdaptedProcess::from_ids(tree, &ce.x, "x")?;
        let y = ce.y.as_ref().map(|y| AdaptedProcess::from_ids(tree, y, "y")).transpose()?;
        let probe = Probe { rm, tree, n, property: self.property, test: self.test, tol: self.tolerance };
        Ok(probe.violation(&x, y.as_ref())?.is_some())
    }
}

/// Both sides of the recursion at every time-`t` node.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub passed: bool,
}

/// `X_t 1_{t} - ρ_{t+1}(X) 1_{>t}` on the subtree of `n`, zero elsewhere.
fn one_step_image(rm: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, n: usize) -> Result<AdaptedProcess> {
    let mut y = AdaptedProcess::zeros(tree);
    y.set(n, x[n]);
    for &c in tree.children(n) {
        let v = -rm.eval_node(tree, x, c)?;
        for m in tree.subtree(c) {
            y.set(m, v);
        }
    }
    Ok(y)
}

pub fn check_recursive(rm: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, t: usize) -> Result<RecursionReport> {
    if t >= tree.horizon() {
        return Err(Error::TimeOrder(format!("recursion needs t < {}", tree.horizon())));
    }
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for &n in tree.nodes_at(t) {
        lhs.push(rm.eval_node(tree, x, n)?);
        rhs.push(rm.eval_node(tree, &one_step_image(rm, tree, x, n)?, n)?);
    }
    let passed = lhs.iter().zip(&rhs).all(|(a, b)| !exceeds(a - b, *a, *b, DEFAULT_TOLERANCE) && !exceeds(b - a, *a, *b, DEFAULT_TOLERANCE));
    Ok(RecursionReport { lhs, rhs, passed })
}

fn exceeds(gap: f64, a: f64, b: f64, tol: f64) -> bool {
    gap > tol * (1.0 + a.abs().max(b.abs()))
}

struct Probe<'a> {
    rm: &'a RiskMeasureSpec,
    tree: &'a EventTree,
    n: usize,
    property: Property,
    test: Test,
    tol: f64,
}

impl Probe<'_> {
    fn compare(&self, lhs: f64, rhs: f64) -> Option<(f64, f64)> {
        let bad = match self.property {
            Property::Strong => exceeds(lhs - rhs, lhs, rhs, self.tol) || exceeds(rhs - lhs, lhs, rhs, self.tol),
            Property::Acceptance | Property::WeakAcceptance => exceeds(lhs - rhs, lhs, rhs, self.tol),
            Property::Rejection => exceeds(rhs - lhs, lhs, rhs, self.tol),
        };
        bad.then_some((lhs, rhs))
    }

    /// `Some((lhs, rhs))` when the input violates the property; `None` when it
    /// satisfies it or misses the premise.
    fn violation(&self, x: &AdaptedProcess, y: Option<&AdaptedProcess>) -> Result<Option<(f64, f64)>> {
        let (rm, tree, n) = (self.rm, self.tree, self.n);
        let accepted = |v: f64| v <= self.tol;
        match self.test {
            Test::Recursion => {
                let lhs = rm.eval_node(tree, x, n)?;
                let rhs = rm.eval_node(tree, &one_step_image(rm, tree, x, n)?, n)?;
                Ok(self.compare(lhs, rhs))
            }
            Test::SplitSum => {
                let y = y.ok_or_else(|| Error::InconsistentInput("split check needs the one-step part".into()))?;
                let premise = accepted(rm.eval_node(tree, y, n)?)
                    && x[n] == 0.0
                    && tree.children(n).iter().map(|&c| rm.eval_node(tree, x, c)).collect::<Result<Vec<_>>>()?.into_iter().all(accepted);
                if !premise {
                    return Ok(None);
                }
                let sum = rm.eval_node(tree, &x.add(y), n)?;
                Ok(self.compare(sum, 0.0))
            }
            Test::SplitOf => {
                if !accepted(rm.eval_node(tree, x, n)?) {
                    return Ok(None);
                }
                // the later part is accepted by cash invariance; only the one-step part can fail
                let part = rm.eval_node(tree, &one_step_image(rm, tree, x, n)?, n)?;
                Ok(self.compare(0.0, part))
            }
            Test::Inclusion => {
                let premise = x[n] == 0.0
                    && tree.children(n).iter().map(|&c| rm.eval_node(tree, x, c)).collect::<Result<Vec<_>>>()?.into_iter().all(accepted);
                if !premise {
                    return Ok(None);
                }
                Ok(self.compare(rm.eval_node(tree, x, n)?, 0.0))
            }
        }
    }

    /// Coordinate-wise shrinking toward 0 while the violation persists.
    fn shrink(&self, x: &mut AdaptedProcess, mut y: Option<&mut AdaptedProcess>) -> Result<(f64, f64)> {
        let mut current = self.violation(x, y.as_deref())?.expect("violating input");
        for _ in 0..4 {
            let mut changed = false;
            for m in self.tree.subtree(self.n) {
                for part in 0..2 {
                    let old = match (part, y.as_deref()) {
                        (0, _) => x[m],
                        (_, Some(y)) => y[m],
                        (_, None) => continue,
                    };
                    if old == 0.0 {
                        continue;
                    }
                    for candidate in [0.0, old / 2.0] {
                        set_part(x, y.as_deref_mut(), part, m, candidate);
                        if let Some(v) = self.violation(x, y.as_deref())? {
                            current = v;
                            changed = true;
                            break;
                        }
                        set_part(x, y.as_deref_mut(), part, m, old);
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Ok(current)
    }
}

fn set_part(x: &mut AdaptedProcess, y: Option<&mut AdaptedProcess>, part: usize, m: usize, v: f64) {
    match (part, y) {
        (0, _) => x.set(m, v),
        (_, Some(y)) => y.set(m, v),
        (_, None) => {}
    }
}

fn probe_seed(seed: u64, t: usize, id: u64) -> u64 {
    seed ^ (t as u64).wrapping_mul(0xa076_1d64_78bd_642f) ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn random_on_subtree(rng: &mut ChaCha8Rng, tree: &EventTree, n: usize) -> AdaptedProcess {
    let mut x = AdaptedProcess::zeros(tree);
    for m in tree.subtree(n) {
        x.set(m, rng.gen_range(-PROBE_BOUND..=PROBE_BOUND));
    }
    x
}

/// Adds cash on each child subtree so that `ρ_{t+1}` becomes `-slack ≤ 0`.
fn accept_children(rm: &RiskMeasureSpec, tree: &EventTree, x: &mut AdaptedProcess, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    for &c in tree.children(n) {
        let slack = boundary_slack(rng);
        let shift = rm.eval_node(tree, x, c)? + slack;
        for m in tree.subtree(c) {
            x.set(m, x[m] + shift);
        }
    }
    Ok(())
}

/// Half the probes sit on the acceptance boundary.
fn boundary_slack(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(0.0..1.0)
    }
}

/// Probe search for one property and test at every `(t, node)` with `t < T`.
pub fn check_property(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    property: Property,
    test: Test,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Result<ConsistencyVerdict> {
    if budget == 0 {
        return Err(Error::InvalidParameter("probe budget must be at least 1".into()));
    }
    let mut probes = 0;
    for t in 0..tree.horizon() {
        for &n in tree.nodes_at(t) {
            let mut rng = ChaCha8Rng::seed_from_u64(probe_seed(seed, t, tree.id(n)));
            let probe = Probe { rm, tree, n, property, test, tol };
            for _ in 0..budget {
                probes += 1;
                let mut x = random_on_subtree(&mut rng, tree, n);
                let mut y = None;
                match test {
                    Test::Recursion => {}
                    Test::SplitOf => {
                        // shift into the acceptance set at n
                        let shift = rm.eval_node(tree, &x, n)? + boundary_slack(&mut rng);
                        for m in tree.subtree(n) {
                            x.set(m, x[m] + shift);
                        }
                    }
                    Test::SplitSum | Test::Inclusion => {
                        x.set(n, 0.0);
                        accept_children(rm, tree, &mut x, n, &mut rng)?;
                        if test == Test::SplitSum {
                            let mut one = AdaptedProcess::zeros(tree);
                            one.set(n, rng.gen_range(-PROBE_BOUND..=PROBE_BOUND));
                            for &c in tree.children(n) {
                                let v = rng.gen_range(-PROBE_BOUND..=PROBE_BOUND);
                                tree.subtree(c).for_each(|m| one.set(m, v));
                            }
                            let shift = rm.eval_node(tree, &one, n)? + boundary_slack(&mut rng);
                            tree.subtree(n).for_each(|m| one.set(m, one[m] + shift));
                            y = Some(one);
                        }
                    }
                }
                if probe.violation(&x, y.as_ref())?.is_some() {
                    let (lhs, rhs) = probe.shrink(&mut x, y.as_mut())?;
                    let counterexample = Counterexample {
                        t,
                        node: tree.id(n),
                        x: x.to_ids(tree),
                        y: y.map(|y| y.to_ids(tree)),
                        lhs,
                        rhs,
                    };
                    return Ok(ConsistencyVerdict {
                        property,
                        test,
                        status: Status::Fail,
                        counterexample: Some(counterexample),
                        tolerance: tol,
                        probes,
                    });
                }
            }
        }
    }
    Ok(ConsistencyVerdict { property, test, status: Status::Pass, counterexample: None, tolerance: tol, probes })
}

/// Recursiveness at every `(t, node)`: strong, acceptance or rejection consistency.
pub fn check_time_consistent(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    property: Property,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Result<ConsistencyVerdict> {
    if property == Property::WeakAcceptance {
        return check_weak_acceptance(rm, tree, budget, seed, tol);
    }
    check_property(rm, tree, property, Test::Recursion, budget, seed, tol)
}

pub fn check_weak_acceptance(rm: &RiskMeasureSpec, tree: &EventTree, budget: usize, seed: u64, tol: f64) -> Result<ConsistencyVerdict> {
    check_property(rm, tree, Property::WeakAcceptance, Test::Inclusion, budget, seed, tol)
}

/// Both inclusions of the acceptance-set split at every `t < T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Sums of accepted pairs are accepted (acceptance side).
    pub superset: ConsistencyVerdict,
    /// Accepted positions split into accepted parts (rejection side).
    pub subset: ConsistencyVerdict,
}

pub fn check_acceptance_split(rm: &RiskMeasureSpec, tree: &EventTree, budget: usize, seed: u64, tol: f64) -> Result<SplitReport> {
    Ok(SplitReport {
        superset: check_property(rm, tree, Property::Acceptance, Test::SplitSum, budget, seed, tol)?,
        subset: check_property(rm, tree, Property::Rejection, Test::SplitOf, budget, seed, tol)?,
    })
}

#[cfg(test)]
mod tests;
