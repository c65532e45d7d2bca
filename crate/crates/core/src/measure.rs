//! Measures on the product space of paths and times.
//!
//! A measure absolutely continuous with respect to `P ⊗ μ` is stored as a
//! nonnegative density `Z` with one value per node (the atom `{node} × {time}`).
//! It factors as a path measure `Q` (martingale density `M`) and an adapted
//! discount measure `γ` with predictable tail mass `D_t = Σ_{s≥t} γ_s`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;
use crate::tree::{AdaptedProcess, EventTree};

/// Probability measure on optional atoms given by its density against `P ⊗ μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    z: AdaptedProcess,
}

impl ProductMeasure {
    /// Validates nonnegativity and unit mass.
    pub fn new(tree: &EventTree, z: AdaptedProcess) -> Result<Self> {
        check_nonnegative(tree, &z)?;
        let mass = total_mass(tree, &z);
        if (mass - 1.0).abs() > tolerance::VALIDATION * 10.0 {
            return Err(Error::BadDensity(format!("density has mass {mass}, expected 1")));
        }
        Ok(ProductMeasure { z })
    }

    /// Rescales a nonnegative, not identically zero density to unit mass.
    pub fn normalized(tree: &EventTree, z: AdaptedProcess) -> Result<Self> {
        check_nonnegative(tree, &z)?;
        let mass = total_mass(tree, &z);
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::BadDensity("density has zero mass".into()));
        }
        Ok(ProductMeasure { z: z.scale(1.0 / mass) })
    }

    /// The reference measure `P ⊗ μ` itself.
    pub fn reference(tree: &EventTree) -> Self {
        ProductMeasure { z: AdaptedProcess::constant(tree, 1.0) }
    }

    /// Random density; each atom is zero with probability `zero_prob`.
    pub fn random<R: Rng>(rng: &mut R, tree: &EventTree, zero_prob: f64) -> Self {
        loop {
            let z = AdaptedProcess::from_fn(tree, |_| {
                if rng.gen_bool(zero_prob) {
                    0.0
                } else {
                    -rng.gen_range(1e-3f64..1.0).ln()
                }
            });
            if let Ok(q) = Self::normalized(tree, z) {
                return q;
            }
        }
    }

    pub fn density(&self) -> &AdaptedProcess {
        &self.z
    }

    /// `E[X]` under this measure, i.e. `E_P[Σ_t μ_t Z_t X_t]`.
    pub fn expectation(&self, tree: &EventTree, x: &AdaptedProcess) -> f64 {
        (0..tree.len()).map(|n| tree.path_prob(n) * tree.mu(n) * self.z[n] * x[n]).sum()
    }

    /// `U_t = E_P[Σ_{s≥t} μ_s Z_s | F_t]`, the mass of the subtree at each node
    /// relative to the node's probability.
    pub fn tail_mass(&self, tree: &EventTree) -> AdaptedProcess {
        let mut u = vec![0.0; tree.len()];
        for n in (0..tree.len()).rev() {
            u[n] = tree.mu(n) * self.z[n]
                + tree.children(n).iter().map(|&c| tree.prob(c) * u[c]).sum::<f64>();
        }
        AdaptedProcess::from_fn(tree, |n| u[n])
    }

    /// `E[X | {n} × [t, T]]` given precomputed [`tail_mass`](Self::tail_mass);
    /// `None` when the tail atom of `n` is null.
    pub fn tail_mean(&self, tree: &EventTree, u: &AdaptedProcess, x: &AdaptedProcess, n: usize) -> Option<f64> {
        (u[n] > 0.0).then(|| {
            let s: f64 = tree
                .subtree(n)
                .map(|m| tree.cond_prob(m, n) * tree.mu(m) * self.z[m] * x[m])
                .sum();
            s / u[n]
        })
    }

    /// Density-level comparison with tolerance relative to the density scale.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.z.values().iter().zip(other.z.values()).all(|(a, b)| tolerance::close(*a, *b, tol))
    }
}

fn check_nonnegative(tree: &EventTree, z: &AdaptedProcess) -> Result<()> {
    match z.values().iter().position(|v| *v < 0.0) {
        Some(k) => Err(Error::BadDensity(format!("negative density {} at node {}", z[k], tree.id(k)))),
        None => Ok(()),
    }
}

fn total_mass(tree: &EventTree, z: &AdaptedProcess) -> f64 {
    (0..tree.len()).map(|n| tree.path_prob(n) * tree.mu(n) * z[n]).sum()
}

/// Factorization of a product measure into `(M, D, γ)`.
///
/// `D` is predictable: its value at a node is the tail mass entering that node.
#[derive(Debug, Clone, PartialEq)]
pub struct Disintegration {
    pub m: AdaptedProcess,
    pub d: AdaptedProcess,
    pub gamma: AdaptedProcess,
}

impl Disintegration {
    /// Conditional probability of `m` given `n` under the path measure `Q`.
    /// Zero when `n` is `Q`-null.
    pub fn q_cond_prob(&self, tree: &EventTree, m: usize, n: usize) -> f64 {
        if self.m[n] > 0.0 {
            tree.cond_prob(m, n) * self.m[m] / self.m[n]
        } else {
            0.0
        }
    }

    /// `D_{t+1}` as seen from a time-`t` node; zero at the horizon.
    pub fn d_next(&self, n: usize) -> f64 {
        (self.d[n] - self.gamma[n]).max(0.0)
    }
}

/// Multiplicative decomposition of a nonnegative supermartingale `U` with
/// `U_0 = 1` into a martingale `M` and a predictable nonincreasing `D`.
pub fn ito_watanabe(tree: &EventTree, u: &AdaptedProcess) -> Result<(AdaptedProcess, AdaptedProcess)> {
    if let Some(k) = u.values().iter().position(|v| *v < 0.0) {
        return Err(Error::Negative { node: tree.id(k), value: u[k] });
    }
    if (u[0] - 1.0).abs() > tolerance::VALIDATION * 10.0 {
        return Err(Error::BadStart(u[0]));
    }
    let mut d = vec![0.0; tree.len()];
    let mut m = vec![0.0; tree.len()];
    d[0] = 1.0;
    for n in 0..tree.len() {
        if let Some(p) = tree.parent(n) {
            let up = u[p];
            let eu: f64 = tree.children(p).iter().map(|&c| tree.prob(c) * u[c]).sum();
            if eu > up * (1.0 + tolerance::VALIDATION) + tolerance::VALIDATION {
                return Err(Error::NotSupermartingale { node: tree.id(p), mean: eu, value: up });
            }
            d[n] = if up > 0.0 { d[p] * (eu / up).min(1.0) } else { 0.0 };
        }
        m[n] = if d[n] > 0.0 { u[n] / d[n] } else { tree.parent(n).map_or(1.0, |p| m[p]) };
    }
    Ok((AdaptedProcess::from_fn(tree, |n| m[n]), AdaptedProcess::from_fn(tree, |n| d[n])))
}

/// Factors a product measure into `(M, D, γ)` with `Z = M γ / μ`.
pub fn decompose(tree: &EventTree, q: &ProductMeasure) -> Result<Disintegration> {
    let u = q.tail_mass(tree);
    let (m, d) = ito_watanabe(tree, &u)?;
    let gamma = AdaptedProcess::from_fn(tree, |n| {
        let next = tree.children(n).first().map_or(0.0, |&c| d[c]);
        (d[n] - next).max(0.0)
    });
    Ok(Disintegration { m, d, gamma })
}

/// Tail mass `D_t = 1 - Σ_{s<t} γ_s` implied by a discount measure.
pub fn discount_from_gamma(tree: &EventTree, gamma: &AdaptedProcess) -> AdaptedProcess {
    let mut d = vec![1.0; tree.len()];
    for n in 1..tree.len() {
        let p = tree.parent(n).unwrap();
        d[n] = d[p] - gamma[p];
    }
    AdaptedProcess::from_fn(tree, |n| d[n])
}

/// Builds the product measure `Q ⊗ γ` from a martingale density and a
/// discount measure summing to one on every `Q`-charged path.
pub fn compose(tree: &EventTree, m: &AdaptedProcess, gamma: &AdaptedProcess) -> Result<ProductMeasure> {
    check_martingale_density(tree, m)?;
    if let Some(k) = gamma.values().iter().position(|v| *v < 0.0) {
        return Err(Error::BadGamma(format!("negative weight {} at node {}", gamma[k], tree.id(k))));
    }
    let d = discount_from_gamma(tree, gamma);
    for &l in tree.leaves() {
        if m[l] > 0.0 && (d[l] - gamma[l]).abs() > tolerance::VALIDATION * 10.0 {
            return Err(Error::BadGamma(format!(
                "weights along the path to node {} sum to {}",
                tree.id(l),
                1.0 - d[l] + gamma[l]
            )));
        }
    }
    let z = AdaptedProcess::from_fn(tree, |n| m[n] * gamma[n] / tree.mu(n));
    ProductMeasure::new(tree, z)
}

/// Checks `M ≥ 0`, `M_0 = 1` and the one-step martingale property.
pub fn check_martingale_density(tree: &EventTree, m: &AdaptedProcess) -> Result<()> {
    if let Some(k) = m.values().iter().position(|v| *v < 0.0) {
        return Err(Error::Negative { node: tree.id(k), value: m[k] });
    }
    if (m[0] - 1.0).abs() > tolerance::VALIDATION * 10.0 {
        return Err(Error::NotMartingale { node: tree.id(0), mean: 1.0, value: m[0] });
    }
    for n in 0..tree.len() {
        if tree.is_leaf(n) {
            continue;
        }
        let mean: f64 = tree.children(n).iter().map(|&c| tree.prob(c) * m[c]).sum();
        if !tolerance::close(mean, m[n], tolerance::VALIDATION * 10.0) {
            return Err(Error::NotMartingale { node: tree.id(n), mean, value: m[n] });
        }
    }
    Ok(())
}

/// Both sides of `Σ_{s≥t} γ_s X_s = Σ_{s=t}^T D_s ΔX_s` on one path, with `X`
/// projected to times `≥ t` so that the first increment is `X_t` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathIdentity {
    pub leaf: u64,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn integration_by_parts(
    tree: &EventTree,
    x: &AdaptedProcess,
    dis: &Disintegration,
    t: usize,
) -> Vec<PathIdentity> {
    tree.leaves()
        .iter()
        .map(|&l| {
            let path = tree.path_to(l);
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for &n in &path[t..] {
                lhs += dis.gamma[n] * x[n];
                let prev = if tree.time(n) > t { x[tree.parent(n).unwrap()] } else { 0.0 };
                rhs += dis.d[n] * (x[n] - prev);
            }
            PathIdentity { leaf: tree.id(l), lhs, rhs }
        })
        .collect()
}

/// Value on a tail atom `{node} × [t, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailValue {
    Value(f64),
    /// The atom carries no mass under the conditioning measure.
    Undefined,
}

impl TailValue {
    pub fn value(self) -> Option<f64> {
        match self {
            TailValue::Value(v) => Some(v),
            TailValue::Undefined => None,
        }
    }
}

/// A random variable measurable for the optional sigma-field at time `t`:
/// single-time atoms before `t` and tail atoms from `t` on.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionalRv {
    pub t: usize,
    /// Indexed by node; `Some` exactly for nodes before time `t`.
    pub past: Vec<Option<f64>>,
    /// Aligned with `tree.nodes_at(t)`.
    pub tail: Vec<TailValue>,
}

impl OptionalRv {
    pub fn tail_values(&self) -> Vec<Option<f64>> {
        self.tail.iter().map(|v| v.value()).collect()
    }
}

fn past_of(tree: &EventTree, t: usize, f: impl Fn(usize) -> f64) -> Vec<Option<f64>> {
    (0..tree.len()).map(|n| (tree.time(n) < t).then(|| f(n))).collect()
}

/// `E_Q̄[X | F̄_t]`: `X` itself on atoms before `t`, and on the tail atom of a
/// time-`t` node the `Q`-expectation of `Σ_{s≥t} (γ_s / D_t) X_s`.
pub fn optional_cond_expect(
    tree: &EventTree,
    dis: &Disintegration,
    x: &AdaptedProcess,
    t: usize,
) -> OptionalRv {
    let tail = tree
        .nodes_at(t)
        .iter()
        .map(|&n| {
            if dis.m[n] > 0.0 && dis.d[n] > 0.0 {
                let v: f64 = tree
                    .subtree(n)
                    .map(|k| dis.q_cond_prob(tree, k, n) * dis.gamma[k] * x[k])
                    .sum();
                TailValue::Value(v / dis.d[n])
            } else {
                TailValue::Undefined
            }
        })
        .collect();
    OptionalRv { t, past: past_of(tree, t, |n| x[n]), tail }
}

/// `E_{P⊗μ}[Z | F̄_t]`: `Z` on atoms before `t`, `U_t / Σ_{s≥t} μ_s` on tails.
pub fn cond_density(tree: &EventTree, q: &ProductMeasure, t: usize) -> OptionalRv {
    let u = q.tail_mass(tree);
    let tail = tree
        .nodes_at(t)
        .iter()
        .map(|&n| TailValue::Value(u[n] / tree.tail_mu(n)))
        .collect();
    OptionalRv { t, past: past_of(tree, t, |n| q.density()[n]), tail }
}

/// Whether two measures agree on the optional sigma-field at time `t`.
pub fn restrict_equal(tree: &EventTree, q1: &ProductMeasure, q2: &ProductMeasure, t: usize) -> bool {
    let a = cond_density(tree, q1, t);
    let b = cond_density(tree, q2, t);
    let tol = tolerance::VALIDATION;
    a.past.iter().zip(&b.past).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => tolerance::close(*x, *y, tol),
        _ => true,
    }) && a
        .tail
        .iter()
        .zip(&b.tail)
        .all(|(x, y)| tolerance::close(x.value().unwrap(), y.value().unwrap(), tol))
}

/// Same test through the factors: `M γ` agrees before `t` and `M D` agrees at `t`.
pub fn restrict_equal_factors(tree: &EventTree, d1: &Disintegration, d2: &Disintegration, t: usize) -> bool {
    let tol = tolerance::VALIDATION;
    (0..tree.len()).all(|n| match tree.time(n) {
        s if s < t => tolerance::close(d1.m[n] * d1.gamma[n], d2.m[n] * d2.gamma[n], tol),
        s if s == t => tolerance::close(d1.m[n] * d1.d[n], d2.m[n] * d2.d[n], tol),
        _ => true,
    })
}

/// A set in the optional sigma-field at time `t`: a union of single-time
/// atoms (nodes before `t`) and tail atoms (nodes at `t`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionalSet {
    t: usize,
    atoms: BTreeSet<usize>,
}

impl OptionalSet {
    pub fn new(tree: &EventTree, t: usize, atoms: impl IntoIterator<Item = usize>) -> Result<Self> {
        let atoms: BTreeSet<usize> = atoms.into_iter().collect();
        if let Some(&n) = atoms.iter().find(|&&n| n >= tree.len() || tree.time(n) > t) {
            return Err(Error::MeasurabilityViolation(format!(
                "node index {n} is not an atom of the time-{t} optional sigma-field"
            )));
        }
        Ok(OptionalSet { t, atoms })
    }

    pub fn empty(t: usize) -> Self {
        OptionalSet { t, atoms: BTreeSet::new() }
    }

    pub fn full(tree: &EventTree, t: usize) -> Self {
        OptionalSet { t, atoms: (0..tree.len()).filter(|&n| tree.time(n) <= t).collect() }
    }

    /// All atoms of the optional sigma-field at `t`.
    pub fn atoms_of(tree: &EventTree, t: usize) -> Vec<usize> {
        (0..tree.len()).filter(|&n| tree.time(n) <= t).collect()
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn contains(&self, n: usize) -> bool {
        self.atoms.contains(&n)
    }

    pub fn atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.atoms.iter().copied()
    }
}

/// Follows `q1` up to `t` and, on `b`, the conditional behaviour of `q2` after `t`.
pub fn paste(
    tree: &EventTree,
    q1: &ProductMeasure,
    q2: &ProductMeasure,
    t: usize,
    b: &OptionalSet,
) -> Result<ProductMeasure> {
    if b.time() != t {
        return Err(Error::MeasurabilityViolation(format!(
            "pasting set belongs to time {}, not {t}",
            b.time()
        )));
    }
    let u1 = q1.tail_mass(tree);
    let u2 = q2.tail_mass(tree);
    let (z1, z2) = (q1.density(), q2.density());
    for n in b.atoms() {
        let (a, c) = if tree.time(n) < t { (z1[n], z2[n]) } else { (u1[n], u2[n]) };
        if a > 0.0 && c <= 0.0 {
            return Err(Error::NotAbsContinuous(format!("atom at node {}", tree.id(n))));
        }
    }
    let z = AdaptedProcess::from_fn(tree, |m| {
        if tree.time(m) < t {
            return z1[m];
        }
        let a = tree.ancestor_at(m, t);
        if b.contains(a) {
            if u2[a] > 0.0 {
                u1[a] * z2[m] / u2[a]
            } else {
                0.0
            }
        } else {
            z1[m]
        }
    });
    Ok(ProductMeasure { z })
}
