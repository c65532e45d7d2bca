use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{paste, OptionalSet, ProductMeasure};
use crate::tree::EventTree;

/// Tail atoms per time above which pasting sets are not enumerated.
const MAX_PASTING_ATOMS: usize = 16;
const MEMBER_TOL: f64 = 1e-12;

/// Membership test for pasted measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// Equal (to 1e-12) to one of the listed measures.
    List,
    /// Density against the reference at most `cap` everywhere.
    DensityCap { cap: f64 },
}

/// A pasting that leaves the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub first: usize,
    pub second: usize,
    pub t: usize,
    /// Tail atoms (node ids at time `t`) of the pasting set.
    pub set: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub pastings: usize,
    /// Pastings skipped for lack of absolute continuity on the pasting set.
    pub skipped: usize,
    pub violation: Option<Violation>,
}

fn contains(tree: &EventTree, set: &[ProductMeasure], q: &ProductMeasure, membership: &Membership) -> bool {
    match membership {
        Membership::List => set.iter().any(|m| m.approx_eq(q, MEMBER_TOL)),
        Membership::DensityCap { cap } => {
            (0..tree.len()).all(|n| q.density()[n] <= cap * (1.0 + MEMBER_TOL))
        }
    }
}

/// Every pasting `(Q1, Q2, t, B)` with `B` a set of time-`t` tail atoms.
fn pastings(
    tree: &EventTree,
    measures: &[ProductMeasure],
    mut visit: impl FnMut(usize, usize, usize, &[usize], Result<ProductMeasure>) -> Result<bool>,
) -> Result<()> {
    for t in 0..=tree.horizon() {
        let atoms = tree.nodes_at(t);
        if atoms.len() > MAX_PASTING_ATOMS {
            return Err(Error::InvalidParameter(format!(
                "{} tail atoms at time {t}; pasting sets are enumerated up to {MAX_PASTING_ATOMS}",
                atoms.len()
            )));
        }
        for mask in 1u32..(1u32 << atoms.len()) {
            let set: Vec<usize> = (0..atoms.len()).filter(|k| mask >> k & 1 == 1).map(|k| atoms[k]).collect();
            let b = OptionalSet::new(tree, t, set.iter().copied())?;
            for i in 0..measures.len() {
                for j in 0..measures.len() {
                    if i == j {
                        continue;
                    }
                    if !visit(i, j, t, &set, paste(tree, &measures[i], &measures[j], t, &b))? {
                        return Ok(());
                    }
                }
            }
        }
    }
    Ok(())
}

/// Closure of the set of measures under stability: every admissible pasting
/// of members is a member.
pub fn check_stability(tree: &EventTree, measures: &[ProductMeasure], membership: &Membership) -> Result<StabilityReport> {
    let mut report = StabilityReport { stable: true, pastings: 0, skipped: 0, violation: None };
    pastings(tree, measures, |i, j, t, set, pasted| {
        let q = match pasted {
            Ok(q) => q,
            Err(Error::NotAbsContinuous(_)) => {
                report.skipped += 1;
                return Ok(true);
            }
            Err(e) => return Err(e),
        };
        report.pastings += 1;
        if contains(tree, measures, &q, membership) {
            return Ok(true);
        }
        report.stable = false;
        report.violation = Some(Violation { first: i, second: j, t, set: set.iter().map(|&n| tree.id(n)).collect() });
        Ok(false)
    })?;
    Ok(report)
}

/// Adds admissible pastings until none is new; fails beyond `max_size` members.
pub fn paste_closure(tree: &EventTree, measures: &[ProductMeasure], max_size: usize) -> Result<Vec<ProductMeasure>> {
    let mut set = measures.to_vec();
    loop {
        let mut fresh: Vec<ProductMeasure> = Vec::new();
        pastings(tree, &set, |_, _, _, _, pasted| {
            match pasted {
                Ok(q) => {
                    if !set.iter().chain(&fresh).any(|m| m.approx_eq(&q, MEMBER_TOL)) {
                        fresh.push(q);
                    }
                }
                Err(Error::NotAbsContinuous(_)) => {}
                Err(e) => return Err(e),
            }
            Ok(set.len() + fresh.len() <= max_size)
        })?;
        if fresh.is_empty() {
            return Ok(set);
        }
        set.extend(fresh);
        if set.len() > max_size {
            return Err(Error::InfeasibleFamily(format!("pasting closure exceeds {max_size} measures")));
        }
    }
}
