//! Natural-log domain arithmetic. `f64::NEG_INFINITY` encodes probability 0.

use crate::error::{Error, Result};

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Stable `log Σ exp(v_i)` by max-shifting.
///
/// Returns `-inf` exactly when every input is `-inf`. An empty slice is a
/// usage error since the sum of nothing has no log.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("logsumexp of an empty list"));
    }
    Ok(logsumexp_unchecked(values))
}

pub(crate) fn logsumexp_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-softmax of one row in place. `-inf` entries stay `-inf`.
pub(crate) fn log_softmax_in_place(row: &mut [f64]) -> Result<()> {
    if row.iter().any(|v| v.is_nan()) {
        return Err(Error::data("NaN in logits"));
    }
    if row.contains(&f64::INFINITY) {
        return Err(Error::data("+inf in logits"));
    }
    let norm = logsumexp_unchecked(row);
    if norm == LOG_ZERO {
        return Err(Error::data("row has no finite entry"));
    }
    for v in row.iter_mut() {
        *v -= norm;
    }
    Ok(())
}

/// Backpropagates `grad` (with respect to row-wise log-softmax outputs
/// `log_probs`) to the logits: `g - softmax * sum(g)` per row.
pub fn log_softmax_backward(log_probs: &[f64], grad: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(grad.len());
    for (lp, g) in log_probs.chunks(cols).zip(grad.chunks(cols)) {
        let total: f64 = g.iter().sum();
        out.extend(lp.iter().zip(g).map(|(l, gv)| gv - l.exp() * total));
    }
    out
}

/// Index of the maximum value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
