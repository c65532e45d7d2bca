//! Small deterministic trees and random generators used by tests, benches and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tree::{AdaptedProcess, EventTree, NodeSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-period binomial tree: root 0, up node 1, down node 2, fair coin,
/// uniform weights 1/2.
pub fn one_step_binomial() -> EventTree {
    EventTree::binomial(1, 0.5).expect("valid fixture")
}

/// Process `X_0 = 0`, `X_1 = +1` up, `-1` down on [`one_step_binomial`].
pub fn one_step_plus_minus(tree: &EventTree) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |n| match tree.id(n) {
        1 => 1.0,
        2 => -1.0,
        _ => 0.0,
    })
}

/// Random tree with branching between 1 and `max_branch`, random branch
/// probabilities and random positive discount weights.
pub fn random_tree<R: Rng>(rng: &mut R, horizon: usize, max_branch: usize) -> EventTree {
    let mut nodes = vec![NodeSpec { id: 0, time: 0, parent: None, prob: 1.0 }];
    let mut frontier = vec![0u64];
    let mut next = 1u64;
    for t in 0..horizon {
        let mut new_frontier = Vec::new();
        for &p in &frontier {
            let k = rng.gen_range(1..=max_branch);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut probs: Vec<f64> = raw.iter().map(|r| r / s).collect();
            let head: f64 = probs[..k - 1].iter().sum();
            probs[k - 1] = 1.0 - head;
            for q in probs {
                nodes.push(NodeSpec { id: next, time: t + 1, parent: Some(p), prob: q });
                new_frontier.push(next);
                next += 1;
            }
        }
        frontier = new_frontier;
    }
    let tree = EventTree::from_nodes(horizon, &nodes, None).expect("valid random tree");
    let mu = random_mu(rng, &tree);
    tree.with_mu(mu).expect("valid random weights")
}

/// Positive adapted weights summing to one along every path.
pub fn random_mu<R: Rng>(rng: &mut R, tree: &EventTree) -> Vec<f64> {
    let mut mu = vec![0.0; tree.len()];
    let mut tail = vec![1.0; tree.len()];
    for n in 0..tree.len() {
        if let Some(p) = tree.parent(n) {
            tail[n] = tail[p] - mu[p];
        }
        mu[n] = if tree.is_leaf(n) { tail[n] } else { tail[n] * rng.gen_range(0.15..0.85) };
    }
    mu
}

pub fn random_process<R: Rng>(rng: &mut R, tree: &EventTree, bound: f64) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |_| rng.gen_range(-bound..=bound))
}

/// Random binary-or-ternary tree with a process bounded by 5.
pub fn random_tree_and_process(seed: u64, horizon: usize) -> (EventTree, AdaptedProcess) {
    let mut r = rng(seed);
    let tree = random_tree(&mut r, horizon, 3);
    let x = random_process(&mut r, &tree, 5.0);
    (tree, x)
}
