//! Time-consistent version of a risk measure by backward recursion:
//! `W_T = -X_T` and `W_t = ρ_t(X_t 1_{t} - W_{t+1} 1_{>t})`.

use crate::error::Result;
use crate::risk::RiskMeasureSpec;
use crate::tree::{AdaptedProcess, EventTree};

/// `W` on the subtree of `n`, indexed by `m - n`.
pub fn recursive_subtree(inner: &RiskMeasureSpec, tree: &EventTree, x: &AdaptedProcess, n: usize) -> Result<Vec<f64>> {
    let range = tree.subtree(n);
    let mut w = vec![0.0; range.len()];
    let mut y = AdaptedProcess::zeros(tree);
    for m in range.rev() {
        if tree.is_leaf(m) {
            w[m - n] = -x[m];
            continue;
        }
        y.set(m, x[m]);
        for &c in tree.children(m) {
            let v = -w[c - n];
            for k in tree.subtree(c) {
                y.set(k, v);
            }
        }
        w[m - n] = inner.eval_node(tree, &y, m)?;
    }
    Ok(w)
}
