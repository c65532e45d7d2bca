//! Cash subadditivity, cash additivity and calibration to a term structure.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{compose, decompose, ProductMeasure};
use crate::risk::{penalty, RiskMeasureSpec};
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};
use crate::zoo::{DiscountFamily, InnerRisk};

/// Per-node multipliers `λ_t` tried by the linearity and calibration checks.
pub const LAMBDA_PROBES: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
/// Cash amounts tried by the additivity check.
pub const CASH_PROBES: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
const PROBE_BOUND: f64 = 5.0;

/// Short rates and zero-coupon bond prices.
#[derive(Debug, Clone, PartialEq)]
pub struct TermStructure {
    /// `r_t` at each node; the root entry is unused.
    rates: AdaptedProcess,
    /// `B_{t,k}` keyed by time-`t` node and maturity `k`.
    zcb: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl TermStructure {
    pub fn new(tree: &EventTree, rates: AdaptedProcess, zcb: BTreeMap<usize, BTreeMap<usize, f64>>) -> Result<Self> {
        if rates.len() != tree.len() {
            return Err(Error::LengthMismatch { expected: tree.len(), got: rates.len() });
        }
        if let Some(n) = (1..tree.len()).find(|&n| !(rates[n] > -1.0 && rates[n].is_finite())) {
            return Err(Error::BadTermStructure(format!("rate {} at node {} is not above -1", rates[n], tree.id(n))));
        }
        let nonnegative = (1..tree.len()).all(|n| rates[n] >= 0.0);
        for (&n, prices) in &zcb {
            if n >= tree.len() {
                return Err(Error::BadTermStructure(format!("no node at index {n}")));
            }
            let t = tree.time(n);
            for (&k, &b) in prices {
                if k < t || k > tree.horizon() {
                    return Err(Error::BadTermStructure(format!(
                        "maturity {k} at node {} is outside [{t}, {}]",
                        tree.id(n),
                        tree.horizon()
                    )));
                }
                if !(b > 0.0 && b.is_finite()) {
                    return Err(Error::BadTermStructure(format!("price {b} at node {} for maturity {k}", tree.id(n))));
                }
                if k == t && (b - 1.0).abs() > tolerance::VALIDATION {
                    return Err(Error::BadTermStructure(format!("bond maturing now at node {} costs {b}", tree.id(n))));
                }
                if nonnegative && b > 1.0 + tolerance::VALIDATION {
                    return Err(Error::BadTermStructure(format!(
                        "price {b} above 1 at node {} with nonnegative rates",
                        tree.id(n)
                    )));
                }
            }
        }
        Ok(TermStructure { rates, zcb })
    }

    /// Reads id-keyed rates (every non-root node) and prices.
    pub fn from_ids(
        tree: &EventTree,
        rates: &BTreeMap<u64, f64>,
        zcb: &BTreeMap<u64, BTreeMap<usize, f64>>,
    ) -> Result<Self> {
        if let Some(id) = rates.keys().chain(zcb.keys()).find(|id| tree.index_of(**id).is_none()) {
            return Err(Error::BadTermStructure(format!("node {id} is not in the tree")));
        }
        let values = (0..tree.len())
            .map(|n| match rates.get(&tree.id(n)) {
                Some(r) => Ok(*r),
                None if n == tree.root() => Ok(0.0),
                None => Err(Error::BadTermStructure(format!("rate at node {} missing", tree.id(n)))),
            })
            .collect::<Result<Vec<_>>>()?;
        let zcb = zcb.iter().map(|(id, p)| (tree.index_of(*id).expect("checked above"), p.clone())).collect();
        Self::new(tree, AdaptedProcess::from_fn(tree, |n| values[n]), zcb)
    }

    pub fn rates_by_id(&self, tree: &EventTree) -> BTreeMap<u64, f64> {
        (1..tree.len()).map(|n| (tree.id(n), self.rates[n])).collect()
    }

    pub fn zcb_by_id(&self, tree: &EventTree) -> BTreeMap<u64, BTreeMap<usize, f64>> {
        self.zcb.iter().map(|(&n, p)| (tree.id(n), p.clone())).collect()
    }

    /// Zero rates and unit bond prices at every node and maturity.
    pub fn flat(tree: &EventTree) -> Self {
        let zcb = (0..tree.len())
            .map(|n| (n, (tree.time(n)..=tree.horizon()).map(|k| (k, 1.0)).collect()))
            .collect();
        TermStructure { rates: AdaptedProcess::zeros(tree), zcb }
    }

    /// Bond prices `E_Q[(B_t / B_k)(D_k / D_t) | F_t]` implied by a product
    /// measure; nodes where `Q` or `D` vanishes get no prices.
    pub fn implied(tree: &EventTree, rates: AdaptedProcess, q: &ProductMeasure) -> Result<Self> {
        let dis = decompose(tree, q)?;
        let probe = TermStructure { rates, zcb: BTreeMap::new() };
        let b = probe.money_market(tree);
        let mut zcb = BTreeMap::new();
        for n in 0..tree.len() {
            if !(dis.m[n] > 0.0 && dis.d[n] > 0.0) {
                continue;
            }
            let t = tree.time(n);
            let mut prices = BTreeMap::new();
            for k in t..=tree.horizon() {
                let price: f64 = tree
                    .subtree(n)
                    .filter(|&m| tree.time(m) == k)
                    .map(|m| dis.q_cond_prob(tree, m, n) * b[n] / b[m] * dis.d[m] / dis.d[n])
                    .sum();
                prices.insert(k, if k == t { 1.0 } else { price });
            }
            zcb.insert(n, prices);
        }
        Self::new(tree, probe.rates, zcb)
    }

    /// Money market account `B_t = Π_{s=1}^t (1 + r_s)`.
    pub fn money_market(&self, tree: &EventTree) -> AdaptedProcess {
        let mut b = vec![1.0; tree.len()];
        for n in 1..tree.len() {
            b[n] = b[tree.parent(n).expect("non-root")] * (1.0 + self.rates[n]);
        }
        AdaptedProcess::from_fn(tree, |n| b[n])
    }

    /// Rates known one step ahead: siblings share their rate.
    pub fn is_predictable(&self, tree: &EventTree) -> bool {
        (0..tree.len()).all(|n| {
            let kids = tree.children(n);
            kids.iter().all(|&c| self.rates[c] == self.rates[kids[0]])
        })
    }

    pub fn rates(&self) -> &AdaptedProcess {
        &self.rates
    }

    pub fn zcb(&self, n: usize, k: usize) -> Option<f64> {
        self.zcb.get(&n).and_then(|p| p.get(&k)).copied()
    }
}

/// `x` plus `amount(ancestor at t)` at every node of time `≥ from` below the time-`t` nodes.
fn add_from(tree: &EventTree, x: &AdaptedProcess, t: usize, from: usize, amount: impl Fn(usize) -> f64) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |m| {
        if tree.time(m) >= from {
            x[m] + amount(tree.ancestor_at(m, t))
        } else {
            x[m]
        }
    })
}

/// `ρ_t(X + m 1_{≥t+s})` against `ρ_t(X) - m` at each time-`t` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashReport {
    pub t: usize,
    pub s: usize,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Largest `rhs - lhs` (0 when none is positive).
    pub max_violation: f64,
    pub passed: bool,
}

/// Cash subadditivity for `m ≥ 0` given per time-`t` node; `s = 0` is cash invariance.
pub fn check_cash_subadditive(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    x: &AdaptedProcess,
    t: usize,
    s: usize,
    m: &[f64],
) -> Result<CashReport> {
    if t + s > tree.horizon() {
        return Err(Error::TimeOrder(format!("payment time {} beyond horizon {}", t + s, tree.horizon())));
    }
    let nodes = tree.nodes_at(t);
    if m.len() != nodes.len() {
        return Err(Error::LengthMismatch { expected: nodes.len(), got: m.len() });
    }
    if let Some(v) = m.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("cash amount {v} must be nonnegative")));
    }
    let y = add_from(tree, x, t, t + s, |a| m[tree.slot(a)]);
    let lhs = rm.evaluate(tree, &y, t)?;
    let base = rm.evaluate(tree, x, t)?;
    let rhs: Vec<f64> = base.iter().zip(m).map(|(b, m)| b - m).collect();
    let max_violation = lhs
        .iter()
        .zip(&rhs)
        .map(|(l, r)| (r - l) / (1.0 + l.abs().max(r.abs())))
        .fold(0.0, f64::max);
    Ok(CashReport { t, s, lhs, rhs, max_violation, passed: max_violation <= tolerance::IDENTITY })
}

/// Violating input of the additivity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityCounterexample {
    pub node: u64,
    pub m: f64,
    pub x: BTreeMap<u64, f64>,
    /// `ρ_t(X + m 1_{≥s})`.
    pub lhs: f64,
    /// `ρ_t(X) - m`.
    pub rhs: f64,
}

/// Discount constancy of finite-penalty probe measures on `[t, s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCertificate {
    /// Probe measures with finite penalty at some time-`t` node.
    pub measures: usize,
    /// Largest relative drop `1 - D_u / D_t` for `t < u ≤ s` on charged nodes.
    pub max_drop: f64,
    pub node: Option<u64>,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub t: usize,
    pub s: usize,
    /// Outcome of the definitional test.
    pub passed: bool,
    pub probes: usize,
    pub counterexample: Option<AdditivityCounterexample>,
    /// Present for kinds with closed-form penalties.
    pub certificate: Option<DiscountCertificate>,
}

fn probe_rng(seed: u64, t: usize, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0xa076_1d64_78bd_642f) ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn random_on_subtree(rng: &mut ChaCha8Rng, tree: &EventTree, n: usize) -> AdaptedProcess {
    let mut x = AdaptedProcess::zeros(tree);
    for m in tree.subtree(n) {
        x.set(m, rng.gen_range(-PROBE_BOUND..=PROBE_BOUND));
    }
    x
}

/// Cash additivity at time `s`: the definitional equality over probe
/// processes and cash amounts, plus the discount certificate where penalties
/// have closed forms.
pub fn check_cash_additive_at(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    t: usize,
    s: usize,
    budget: usize,
    seed: u64,
) -> Result<AdditivityReport> {
    if !(t < s && s <= tree.horizon()) {
        return Err(Error::TimeOrder(format!("cash additivity needs {t} < s = {s} ≤ {}", tree.horizon())));
    }
    if budget == 0 {
        return Err(Error::InvalidParameter("probe budget must be at least 1".into()));
    }
    let mut probes = 0;
    let mut counterexample = None;
    'nodes: for &n in tree.nodes_at(t) {
        let mut rng = probe_rng(seed, t, tree.id(n));
        for _ in 0..budget {
            let x = random_on_subtree(&mut rng, tree, n);
            let base = rm.eval_node(tree, &x, n)?;
            for m in CASH_PROBES {
                probes += 1;
                let lhs = rm.eval_node(tree, &add_from(tree, &x, t, s, |_| m), n)?;
                if !tolerance::close(lhs, base - m, tolerance::IDENTITY) {
                    counterexample =
                        Some(AdditivityCounterexample { node: tree.id(n), m, x: x.to_ids(tree), lhs, rhs: base - m });
                    break 'nodes;
                }
            }
        }
    }
    let certificate = discount_certificate(rm, tree, t, s, budget.min(64), seed)?;
    Ok(AdditivityReport { t, s, passed: counterexample.is_none(), probes, counterexample, certificate })
}

/// Martingale density mixing the reference with a random one-step tilt at weight `eps`.
fn mixed_density(rng: &mut ChaCha8Rng, tree: &EventTree, eps: f64) -> AdaptedProcess {
    let mut m = vec![1.0; tree.len()];
    for n in 0..tree.len() {
        let kids = tree.children(n);
        if kids.is_empty() {
            continue;
        }
        let raw: Vec<f64> = kids.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (&c, r) in kids.iter().zip(&raw) {
            let q = (1.0 - eps) * tree.prob(c) + eps * r / total;
            m[c] = m[n] * q / tree.prob(c);
        }
    }
    AdaptedProcess::from_fn(tree, |n| m[n])
}

fn dirac_at(tree: &EventTree, s: usize) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |n| if tree.time(n) == s { 1.0 } else { 0.0 })
}

/// Probe measures likely to carry a finite penalty at time `t`; `None` for
/// kinds without closed-form penalties.
fn certificate_measures(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    t: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<ProductMeasure>>> {
    let eps = |k: usize| [0.01, 0.1, 0.5][k % 3];
    let out = match rm {
        RiskMeasureSpec::Entropic { .. } | RiskMeasureSpec::SimplifiedEntropic { .. } | RiskMeasureSpec::Avar { .. } => {
            let mut out = vec![ProductMeasure::reference(tree)];
            for k in 0..count {
                let r = ProductMeasure::random(rng, tree, 0.0);
                let z = r.density().map(|v| eps(k) * v + 1.0 - eps(k));
                out.push(ProductMeasure::normalized(tree, z)?);
            }
            out
        }
        RiskMeasureSpec::Separated { inner, family } => {
            let gamma = match family {
                DiscountFamily::Fixed(g) => g.clone(),
                DiscountFamily::Dirac(s) => dirac_at(tree, (*s).max(t)),
                DiscountFamily::StoppingTimes => return Ok(None),
            };
            let mut out = Vec::new();
            for k in 0..count.max(1) {
                let m = match inner {
                    InnerRisk::Expectation { density: Some(m) } => m.clone(),
                    InnerRisk::Expectation { density: None } => AdaptedProcess::constant(tree, 1.0),
                    _ => mixed_density(rng, tree, eps(k)),
                };
                out.push(compose(tree, &m, &gamma)?);
            }
            out
        }
        RiskMeasureSpec::PenaltyTable(table) => table.measures.iter().map(|tm| tm.measure.clone()).collect(),
        RiskMeasureSpec::DecoupledAvar { .. } | RiskMeasureSpec::Recursive(_) => return Ok(None),
    };
    Ok(Some(out))
}

/// Checks that every probe measure with finite penalty at a time-`t` node
/// has constant discounting on `[t, s]` along its charged paths.
pub fn discount_certificate(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    t: usize,
    s: usize,
    count: usize,
    seed: u64,
) -> Result<Option<DiscountCertificate>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15c);
    let Some(measures) = certificate_measures(rm, tree, t, count, &mut rng)? else {
        return Ok(None);
    };
    let mut cert = DiscountCertificate { measures: 0, max_drop: 0.0, node: None, constant: true };
    for q in &measures {
        let rep = penalty(rm, tree, q, t)?;
        if !rep.exact {
            return Ok(None);
        }
        let dis = decompose(tree, q)?;
        let mut finite = false;
        for (&n, a) in tree.nodes_at(t).iter().zip(&rep.values) {
            if !(a.is_finite() && dis.m[n] > 0.0 && dis.d[n] > 0.0) {
                continue;
            }
            finite = true;
            for u in tree.subtree(n).filter(|&u| tree.time(u) <= s && dis.q_cond_prob(tree, u, n) > 0.0) {
                let drop = 1.0 - dis.d[u] / dis.d[n];
                if drop > cert.max_drop {
                    cert.max_drop = drop;
                    cert.node = Some(tree.id(u));
                }
            }
        }
        cert.measures += usize::from(finite);
    }
    cert.constant = cert.max_drop <= tolerance::IDENTITY;
    Ok(Some(cert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub t: usize,
    pub s: usize,
    /// `ρ_t(λ N_s 1_{≥s}) = λ ρ_t(N_s 1_{≥s})` over the probe multipliers.
    pub homogeneous: bool,
    /// `ρ_t(X + λ N_s 1_{≥s}) = ρ_t(X) + λ ρ_t(N_s 1_{≥s})`; checked only when homogeneous.
    pub additive: Option<bool>,
    /// Implied price `-ρ_t(N_s 1_{≥s})` at each time-`t` node.
    pub price: Vec<f64>,
    pub max_residual: f64,
}

/// Linearity of `ρ_t` along the payoff `N_s` held from `s` on. Only the
/// time-`s` values of `numeraire` are used.
pub fn numeraire_linearity(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    numeraire: &AdaptedProcess,
    s: usize,
    t: usize,
    budget: usize,
    seed: u64,
) -> Result<LinearityReport> {
    if !(t <= s && s <= tree.horizon()) {
        return Err(Error::TimeOrder(format!("numeraire time {s} must lie in [{t}, {}]", tree.horizon())));
    }
    if numeraire.len() != tree.len() {
        return Err(Error::LengthMismatch { expected: tree.len(), got: numeraire.len() });
    }
    let held = |scale: &dyn Fn(usize) -> f64| {
        AdaptedProcess::from_fn(tree, |m| {
            if tree.time(m) >= s {
                scale(tree.ancestor_at(m, t)) * numeraire[tree.ancestor_at(m, s)]
            } else {
                0.0
            }
        })
    };
    let unit = held(&|_| 1.0);
    let rho_n = rm.evaluate(tree, &unit, t)?;
    let price: Vec<f64> = rho_n.iter().map(|v| -v).collect();
    let mut worst: f64 = 0.0;
    let residual = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    for lambda in LAMBDA_PROBES {
        let scaled = rm.evaluate(tree, &held(&|_| lambda), t)?;
        for (v, r) in scaled.iter().zip(&rho_n) {
            worst = worst.max(residual(*v, lambda * r));
        }
    }
    let homogeneous = worst <= tolerance::IDENTITY;
    let additive = if homogeneous {
        let mut ok = true;
        for (i, &n) in tree.nodes_at(t).iter().enumerate() {
            let mut rng = probe_rng(seed, t, tree.id(n));
            for _ in 0..budget {
                let x = random_on_subtree(&mut rng, tree, n);
                let base = rm.eval_node(tree, &x, n)?;
                for lambda in LAMBDA_PROBES {
                    let y = x.add(&held(&|_| lambda));
                    let r = residual(rm.eval_node(tree, &y, n)?, base + lambda * rho_n[i]);
                    worst = worst.max(r);
                    ok &= r <= tolerance::IDENTITY;
                }
            }
        }
        Some(ok)
    } else {
        None
    };
    Ok(LinearityReport { t, s, homogeneous, additive, price, max_residual: worst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityCheck {
    pub k: usize,
    pub passed: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub t: usize,
    pub maturities: Vec<MaturityCheck>,
    pub failed: Vec<usize>,
    pub predictable: bool,
    /// Cash additivity at `t + 1`, checked when rates are predictable and every maturity passes.
    pub cash_additive: Option<AdditivityReport>,
    pub passed: bool,
}

/// `ρ_t(λ (B_t / B_k) 1_{≥k}) = -λ B_{t,k}` for every maturity `k > t` and probe `λ`.
pub fn check_zcb_calibration(
    rm: &RiskMeasureSpec,
    tree: &EventTree,
    term: &TermStructure,
    t: usize,
    budget: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if t >= tree.horizon() {
        return Err(Error::TimeOrder(format!("calibration needs t < {}", tree.horizon())));
    }
    let b = term.money_market(tree);
    let predictable = term.is_predictable(tree);
    if predictable {
        for &n in tree.nodes_at(t) {
            let r = term.rates[tree.children(n)[0]];
            match term.zcb(n, t + 1) {
                Some(p) if !tolerance::close(p, 1.0 / (1.0 + r), tolerance::IDENTITY) => {
                    return Err(Error::BadTermStructure(format!(
                        "one-period bond at node {} costs {p}, predictable rate {r} implies {}",
                        tree.id(n),
                        1.0 / (1.0 + r)
                    )))
                }
                _ => {}
            }
        }
    }
    let mut maturities = Vec::new();
    for k in t + 1..=tree.horizon() {
        let prices = tree
            .nodes_at(t)
            .iter()
            .map(|&n| {
                term.zcb(n, k).ok_or_else(|| {
                    Error::BadTermStructure(format!("no price at node {} for maturity {k}", tree.id(n)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut worst: f64 = 0.0;
        for lambda in LAMBDA_PROBES {
            let x = AdaptedProcess::from_fn(tree, |m| {
                if tree.time(m) >= k {
                    lambda * b[tree.ancestor_at(m, t)] / b[tree.ancestor_at(m, k)]
                } else {
                    0.0
                }
            });
            for (v, p) in rm.evaluate(tree, &x, t)?.iter().zip(&prices) {
                let target = -lambda * p;
                worst = worst.max((v - target).abs() / (1.0 + v.abs().max(target.abs())));
            }
        }
        maturities.push(MaturityCheck { k, passed: worst <= tolerance::IDENTITY, max_residual: worst });
    }
    let failed: Vec<usize> = maturities.iter().filter(|m| !m.passed).map(|m| m.k).collect();
    let cash_additive = if predictable && failed.is_empty() {
        Some(check_cash_additive_at(rm, tree, t, t + 1, budget, seed)?)
    } else {
        None
    };
    let passed = failed.is_empty() && cash_additive.as_ref().is_none_or(|c| c.passed);
    Ok(CalibrationReport { t, maturities, failed, predictable, cash_additive, passed })
}

#[cfg(test)]
mod tests;
