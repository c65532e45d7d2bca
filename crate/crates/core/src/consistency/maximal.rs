use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{decompose, ProductMeasure};
use crate::risk::{discounted_penalty, RiskMeasureSpec};
use crate::tree::{AdaptedProcess, EventTree};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum MaximalMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalReport {
    pub c: f64,
    /// `Q(sup_t D_t (ρ_t - F_t) ≥ c)`, exact or estimated.
    pub probability: f64,
    /// `(ρ_0 - F_0) / c`.
    pub bound: f64,
    /// 99% Wilson interval in Monte Carlo mode.
    pub interval: Option<(f64, f64)>,
    pub holds: bool,
}

fn wilson(hits: usize, trials: usize) -> (f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z_99 * Z_99;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z_99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Maximal inequality for the excess of `ρ_t(X)` over the model evaluation
/// `F_t = E_Q̄[-X | F̄_t] - α_t(Q̄)`.
pub fn maximal_inequality(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    q: &ProductMeasure,
    x: &AdaptedProcess,
    c: f64,
    mode: MaximalMode,
) -> Result<MaximalReport> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::InvalidParameter(format!("threshold c must be positive, got {c}")));
    }
    let dis = decompose(tree, q)?;
    let (disc, exact) = discounted_penalty(rm, tree, q)?;
    if !exact {
        return Err(Error::UnsupportedKind(format!("{} has no closed-form penalty", rm.kind())));
    }
    if disc[tree.root()].is_none() {
        return Err(Error::InfinitePenalty);
    }
    let rho = rm.evaluate_all(tree, x)?;
    let u = q.tail_mass(tree);
    // excess D_t (ρ_t - F_t); +∞ where the penalty is infinite on a charged tail
    let excess: Vec<f64> = (0..tree.len())
        .map(|n| {
            if dis.d[n] <= 0.0 {
                return 0.0;
            }
            match (q.tail_mean(tree, &u, x, n), disc[n]) {
                (Some(mean), Some(da)) => dis.d[n] * (rho[n] + mean) + da,
                (None, _) => 0.0,
                (_, None) => f64::INFINITY,
            }
        })
        .collect();
    let bound = excess[tree.root()].max(0.0) / c;
    let mut path_max = vec![f64::NEG_INFINITY; tree.len()];
    for n in 0..tree.len() {
        path_max[n] = excess[n].max(tree.parent(n).map_or(f64::NEG_INFINITY, |p| path_max[p]));
    }
    match mode {
        MaximalMode::Exact => {
            let probability: f64 = tree
                .leaves()
                .iter()
                .filter(|&&l| path_max[l] >= c)
                .map(|&l| tree.path_prob(l) * dis.m[l])
                .sum();
            Ok(MaximalReport { c, probability, bound, interval: None, holds: probability <= bound + 1e-12 })
        }
        MaximalMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least one trial".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut hits = 0;
            for _ in 0..trials {
                let mut n = tree.root();
                let mut hit = excess[n] >= c;
                while !tree.is_leaf(n) && !hit {
                    let mut draw: f64 = rng.gen();
                    let kids = tree.children(n);
                    let mut next = kids[kids.len() - 1];
                    for &k in kids {
                        let w = dis.q_cond_prob(tree, k, n);
                        if draw < w {
                            next = k;
                            break;
                        }
                        draw -= w;
                    }
                    n = next;
                    hit = excess[n] >= c;
                }
                hits += usize::from(hit);
            }
            let interval = wilson(hits, trials);
            Ok(MaximalReport {
                c,
                probability: hits as f64 / trials as f64,
                bound,
                interval: Some(interval),
                holds: interval.0 <= bound,
            })
        }
    }
}
