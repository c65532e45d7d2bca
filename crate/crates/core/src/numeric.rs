//! Small numerical helpers.

/// `log Σ exp(a_i)`, stable for large magnitudes. Empty input gives `-inf`.
pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// Relative entropy `Σ q log(q / p)` with `0 log 0 = 0`; infinite if `q`
/// charges a point where `p` vanishes.
pub fn relative_entropy(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| {
            if a <= 0.0 {
                0.0
            } else if b <= 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}
