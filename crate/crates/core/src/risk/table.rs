//! User-supplied penalty tables: `ρ_t(X) = max_i E_{Q̄_i}[-X | F̄_t] - α_t(Q̄_i)`.

use crate::error::{Error, Result};
use crate::measure::ProductMeasure;
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};

use super::PenaltyValue;

/// One listed measure with its penalty at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeasure {
    pub id: String,
    pub measure: ProductMeasure,
    /// Indexed by node; entries on uncharged tails are ignored.
    pub penalty: Vec<PenaltyValue>,
    /// Optional one-step penalties, indexed by node.
    pub one_step: Option<Vec<PenaltyValue>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    pub measures: Vec<TableMeasure>,
}

impl PenaltyTable {
    pub fn validate(&self, tree: &EventTree) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::InvalidParameter("penalty table lists no measures".into()));
        }
        for tm in &self.measures {
            let lens = [Some(tm.penalty.len()), tm.one_step.as_ref().map(Vec::len)];
            if let Some(len) = lens.into_iter().flatten().find(|l| *l != tree.len()) {
                return Err(Error::LengthMismatch { expected: tree.len(), got: len });
            }
            let all = tm.penalty.iter().chain(tm.one_step.iter().flatten());
            if let Some(v) = all.filter_map(|p| p.value()).find(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("measure {}: penalty {v} is not nonnegative", tm.id)));
            }
        }
        let masses: Vec<AdaptedProcess> = self.measures.iter().map(|tm| tm.measure.tail_mass(tree)).collect();
        for n in 0..tree.len() {
            let floor = self
                .measures
                .iter()
                .zip(&masses)
                .filter(|(_, u)| u[n] > 0.0)
                .filter_map(|(tm, _)| tm.penalty[n].value())
                .fold(f64::INFINITY, f64::min);
            if !floor.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "no listed measure charges node {} with a finite penalty",
                    tree.id(n)
                )));
            }
            if floor > tolerance::IDENTITY {
                return Err(Error::InvalidParameter(format!(
                    "smallest penalty at node {} is {floor}, so the measure is not normalized",
                    tree.id(n)
                )));
            }
        }
        Ok(())
    }

    pub fn is_coherent(&self) -> bool {
        self.measures.iter().flat_map(|tm| &tm.penalty).all(|p| p.value().is_none_or(|v| v == 0.0))
    }

    pub fn eval_node(&self, tree: &EventTree, x: &AdaptedProcess, n: usize) -> Result<f64> {
        let mut best: Option<f64> = None;
        for tm in &self.measures {
            let Some(a) = tm.penalty[n].value() else { continue };
            let u = tm.measure.tail_mass(tree);
            let Some(mean) = tm.measure.tail_mean(tree, &u, x, n) else { continue };
            let v = -mean - a;
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        best.ok_or_else(|| Error::InfeasibleFamily(format!("penalty table has no measure at node {}", tree.id(n))))
    }

    fn find(&self, q: &ProductMeasure) -> Option<&TableMeasure> {
        self.measures.iter().find(|tm| tm.measure.approx_eq(q, tolerance::IDENTITY))
    }

    /// Listed penalty of `q` at `n`, if `q` is in the table.
    pub fn entry_for(&self, q: &ProductMeasure, n: usize) -> Option<PenaltyValue> {
        self.find(q).map(|tm| tm.penalty[n])
    }

    /// Listed one-step penalty of `q` at `n`, if given.
    pub fn one_step_for(&self, _tree: &EventTree, q: &ProductMeasure, n: usize) -> Option<PenaltyValue> {
        self.find(q).and_then(|tm| tm.one_step.as_ref()).map(|v| v[n])
    }
}
