//! Conditional risk measures for processes and their robust representation.
//!
//! Every measure is evaluated node by node: `ρ_t(X)` at a time-`t` node only
//! depends on `X` on the subtree below that node.

mod penalty;
mod robust;
mod table;

pub use penalty::{
    discounted_penalty, one_step_penalty, penalty, penalty_lower_bound, PenaltyReport, PenaltyValue,
    DEFAULT_PROBE_BOUND, DEFAULT_PROBE_COUNT,
};
pub use robust::{embed_conditional, robust_evaluate, Family, PenaltySource, SpecPenalty};
pub use table::{PenaltyTable, TableMeasure};

use crate::error::{Error, Result};
use crate::measure::{OptionalRv, TailValue};
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};
use crate::zoo::{self, DiscountFamily, InnerRisk};

/// Time-indexed parameter: one value for all times or one per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile(Vec<f64>);

impl Profile {
    pub fn constant(v: f64) -> Self {
        Profile(vec![v])
    }

    pub fn per_time(values: Vec<f64>) -> Self {
        Profile(values)
    }

    pub fn at(&self, t: usize) -> f64 {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[t]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn check(&self, horizon: usize, name: &str, ok: impl Fn(f64) -> bool) -> Result<()> {
        if self.0.len() != 1 && self.0.len() != horizon + 1 {
            return Err(Error::InvalidParameter(format!(
                "{name} needs 1 or {} values, got {}",
                horizon + 1,
                self.0.len()
            )));
        }
        match self.0.iter().find(|v| !ok(**v)) {
            Some(v) => Err(Error::InvalidParameter(format!("{name} value {v} out of range"))),
            None => Ok(()),
        }
    }
}

/// Supported dynamic risk measures.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskMeasureSpec {
    Entropic { r: Profile },
    SimplifiedEntropic { u: Profile, v: Profile },
    Avar { lambda: Profile },
    DecoupledAvar { lambda1: Profile, lambda2: Profile },
    Separated { inner: InnerRisk, family: DiscountFamily },
    PenaltyTable(PenaltyTable),
    /// Time-consistent version built by backward recursion on one-step problems.
    Recursive(Box<RiskMeasureSpec>),
}

impl RiskMeasureSpec {
    pub fn entropic(r: f64) -> Self {
        RiskMeasureSpec::Entropic { r: Profile::constant(r) }
    }

    pub fn avar(lambda: f64) -> Self {
        RiskMeasureSpec::Avar { lambda: Profile::constant(lambda) }
    }

    pub fn recursive(inner: RiskMeasureSpec) -> Self {
        RiskMeasureSpec::Recursive(Box::new(inner))
    }

    /// Tag used in input files.
    pub fn kind(&self) -> &'static str {
        match self {
            RiskMeasureSpec::Entropic { .. } => "entropic",
            RiskMeasureSpec::SimplifiedEntropic { .. } => "simplified-entropic",
            RiskMeasureSpec::Avar { .. } => "avar",
            RiskMeasureSpec::DecoupledAvar { .. } => "decoupled-avar",
            RiskMeasureSpec::Separated { family: DiscountFamily::Fixed(_), .. } => "fixed-gamma",
            RiskMeasureSpec::Separated { family: DiscountFamily::Dirac(_), .. } => "dirac",
            RiskMeasureSpec::Separated { family: DiscountFamily::StoppingTimes, .. } => "stopping-sup",
            RiskMeasureSpec::PenaltyTable(_) => "penalty-table",
            RiskMeasureSpec::Recursive(_) => "recursive-wrapper",
        }
    }

    pub fn validate(&self, tree: &EventTree) -> Result<()> {
        let h = tree.horizon();
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let level = |v: f64| v > 0.0 && v <= 1.0;
        match self {
            RiskMeasureSpec::Entropic { r } => r.check(h, "r", positive),
            RiskMeasureSpec::SimplifiedEntropic { u, v } => {
                u.check(h, "u", positive)?;
                v.check(h, "v", positive)
            }
            RiskMeasureSpec::Avar { lambda } => lambda.check(h, "lambda", level),
            RiskMeasureSpec::DecoupledAvar { lambda1, lambda2 } => {
                lambda1.check(h, "lambda1", level)?;
                lambda2.check(h, "lambda2", level)
            }
            RiskMeasureSpec::Separated { inner, family } => {
                inner.validate(tree)?;
                family.validate(tree)
            }
            RiskMeasureSpec::PenaltyTable(table) => table.validate(tree),
            RiskMeasureSpec::Recursive(inner) => inner.validate(tree),
        }
    }

    /// Positively homogeneous kinds, whose minimal penalties take only the values 0 and ∞.
    pub fn is_coherent(&self) -> bool {
        match self {
            RiskMeasureSpec::Avar { .. } | RiskMeasureSpec::DecoupledAvar { .. } => true,
            RiskMeasureSpec::Separated { inner, .. } => inner.is_coherent(),
            RiskMeasureSpec::PenaltyTable(t) => t.is_coherent(),
            RiskMeasureSpec::Recursive(inner) => inner.is_coherent(),
            _ => false,
        }
    }

    /// `ρ_t(X)` at node `n`, `t = time(n)`.
    pub fn eval_node(&self, tree: &EventTree, x: &AdaptedProcess, n: usize) -> Result<f64> {
        let t = tree.time(n);
        match self {
            RiskMeasureSpec::Entropic { r } => Ok(zoo::entropic::entropic_node(tree, x, n, r.at(t))),
            RiskMeasureSpec::SimplifiedEntropic { u, v } => {
                zoo::simplified::simplified_entropic_node(tree, x, n, u.at(t), v.at(t))
            }
            RiskMeasureSpec::Avar { lambda } => Ok(zoo::avar::avar_node(tree, x, n, lambda.at(t))),
            RiskMeasureSpec::DecoupledAvar { lambda1, lambda2 } => {
                zoo::avar::decoupled_avar_node(tree, x, n, lambda1.at(t), lambda2.at(t))
            }
            RiskMeasureSpec::Separated { inner, family } => zoo::separated::separated_node(tree, x, n, inner, family),
            RiskMeasureSpec::PenaltyTable(table) => table.eval_node(tree, x, n),
            RiskMeasureSpec::Recursive(inner) => {
                let values = zoo::recursive::recursive_subtree(inner, tree, x, n)?;
                Ok(values[0])
            }
        }
    }

    /// `ρ_t(X)` at every node of `nodes_at(t)`.
    pub fn evaluate(&self, tree: &EventTree, x: &AdaptedProcess, t: usize) -> Result<Vec<f64>> {
        if t > tree.horizon() {
            return Err(Error::TimeOrder(format!("time {t} beyond horizon {}", tree.horizon())));
        }
        tree.nodes_at(t).iter().map(|&n| self.eval_node(tree, x, n)).collect()
    }

    /// `ρ_t(X)` at every node, each at its own time.
    pub fn evaluate_all(&self, tree: &EventTree, x: &AdaptedProcess) -> Result<AdaptedProcess> {
        let values = match self {
            RiskMeasureSpec::Recursive(inner) => zoo::recursive::recursive_subtree(inner, tree, x, tree.root())?,
            _ => (0..tree.len()).map(|n| self.eval_node(tree, x, n)).collect::<Result<Vec<_>>>()?,
        };
        AdaptedProcess::new(tree, values)
            .map_err(|e| Error::OptimizerFailed(format!("non-finite risk value: {e}")))
    }
}

/// `ρ̄_t(X)`: `-X_s` on atoms before `t` and `ρ_t(X)` on tail atoms.
pub fn lift(rm: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, t: usize) -> Result<OptionalRv> {
    let tail = rm.evaluate(tree, x, t)?.into_iter().map(TailValue::Value).collect();
    let past = (0..tree.len()).map(|n| (tree.time(n) < t).then(|| -x[n])).collect();
    Ok(OptionalRv { t, past, tail })
}

/// Acceptance at each time-`t` node.
#[derive(Debug, Clone, PartialEq)]
pub struct Acceptance {
    /// `ρ_t(X) ≤ 0`.
    pub accepted: Vec<bool>,
    /// Additionally `X_s ≥ 0` at every earlier node on the path.
    pub accepted_lifted: Vec<bool>,
}

pub fn acceptance_test(rm: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, t: usize) -> Result<Acceptance> {
    let rho = rm.evaluate(tree, x, t)?;
    let accepted: Vec<bool> = rho.iter().map(|v| *v <= tolerance::VALIDATION).collect();
    let accepted_lifted = tree
        .nodes_at(t)
        .iter()
        .zip(&accepted)
        .map(|(&n, &ok)| ok && tree.path_to(n)[..t].iter().all(|&a| x[a] >= 0.0))
        .collect();
    Ok(Acceptance { accepted, accepted_lifted })
}

/// Values of `ρ_t(X + 2^{-k})` for `k = 0..steps` and the limit `ρ_t(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub sequence: Vec<Vec<f64>>,
    pub limit: Vec<f64>,
    /// Largest gap at the last step.
    pub final_gap: f64,
    /// Values increase toward the limit at every node.
    pub monotone: bool,
}

pub fn continuity_probe(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    x: &AdaptedProcess,
    t: usize,
    steps: usize,
) -> Result<ContinuityReport> {
    let limit = rm.evaluate(tree, x, t)?;
    let sequence = (0..steps)
        .map(|k| rm.evaluate(tree, &x.map(|v| v + 0.5f64.powi(k as i32)), t))
        .collect::<Result<Vec<_>>>()?;
    let monotone = sequence.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *a <= b + tolerance::IDENTITY))
        && sequence.last().is_none_or(|s| s.iter().zip(&limit).all(|(a, b)| *a <= b + tolerance::IDENTITY));
    let final_gap = sequence
        .last()
        .map_or(0.0, |s| s.iter().zip(&limit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    Ok(ContinuityReport { sequence, limit, final_gap, monotone })
}
