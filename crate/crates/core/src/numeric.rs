//! Small numerical kernels shared by the exact and Curie-Weiss modules.
//!
//! Every reduction here uses a fixed pairwise tree so results do not depend on
//! how the caller chunks or schedules work.

use statrs::function::gamma::ln_gamma;

const PAIRWISE_LEAF: usize = 32;

/// Sum with a fixed pairwise tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(x)` without materialising the mapped vector.
pub fn pairwise_sum_by(values: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().map(|&x| f(x)).sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_by(&values[..mid], f) + pairwise_sum_by(&values[mid..], f)
}

/// `ln Σ exp(x)` shifted by the maximum. Returns `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + pairwise_sum_by(values, &|x| (x - max).exp()).ln()
}

/// Normalise log-weights into probabilities; returns `(log_probs, probs, log_partition)`.
pub fn normalize_log_weights(log_weights: Vec<f64>) -> (Vec<f64>, Vec<f64>, f64) {
    let log_z = log_sum_exp(&log_weights);
    let mut log_probs = log_weights;
    for lw in log_probs.iter_mut() {
        *lw -= log_z;
    }
    let probs = log_probs.iter().map(|lp| lp.exp()).collect();
    (log_probs, probs, log_z)
}

/// Numerically stable `1 / (1 + e^{-x})`.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 + δ e^{a})` for `δ >= 0`, evaluated as `log1p_exp(ln δ + a)`.
#[inline]
pub fn log1p_delta_exp(ln_delta: f64, a: f64) -> f64 {
    if ln_delta == f64::NEG_INFINITY {
        0.0
    } else {
        log1p_exp(ln_delta + a)
    }
}

/// Natural log of the binomial coefficient C(n, k).
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}
