//! Mean-field (complete graph) analysis. The magnetization is a sufficient
//! statistic, so every measure reduces to a law on `n + 1` points that can
//! be summed exactly for large `n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Convention, Inertia, Measure};
use crate::numeric::{ln_binomial, log1p_delta_exp, log_sum_exp, normalize_log_weights, pairwise_sum};

/// A Curie-Weiss instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CwSpec {
    pub n: usize,
    pub j: f64,
    pub convention: Convention,
    pub inertia: Inertia,
}

impl CwSpec {
    pub fn new(n: usize, j: f64, convention: Convention, inertia: Inertia) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("Curie-Weiss needs n >= 2"));
        }
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::invalid(format!("J must be positive and finite, got {j}")));
        }
        Ok(Self {
            n,
            j,
            convention,
            inertia,
        })
    }

    /// `J_ij` for `i ≠ j`.
    pub fn pair_coupling(&self) -> f64 {
        self.convention.pair_coupling(self.n, self.j)
    }
}

/// `I(x) = -x ln x - (1-x) ln(1-x)`, with `0 ln 0 = 0`.
pub fn entropy_i(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("entropy argument must lie in [0, 1], got {x}")));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.ln() };
    Ok(term(x) + term(1.0 - x))
}

/// `F(m) = (J/2) m² + I((1+m)/2)`.
pub fn free_energy_f(m: f64, j: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&m) {
        return Err(Error::invalid(format!("magnetization must lie in [-1, 1], got {m}")));
    }
    Ok(0.5 * j * m * m + entropy_i(0.5 * (1.0 + m))?)
}

/// Nonnegative solution of `J m = artanh(m)`: zero for `J <= 1`, the
/// positive root otherwise.
pub fn solve_mstar(j: f64) -> Result<f64> {
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::invalid(format!("J must be positive and finite, got {j}")));
    }
    if j <= 1.0 {
        return Ok(0.0);
    }
    let residual = |m: f64| j * m - m.atanh();
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() < 1e-12 && hi - lo < 1e-12 {
            return Ok(mid);
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `g(m, δ) = (a+b)/2 + m(a-b)/2` with `a = ln(1+δe^{-Jm})`, `b = ln(1+δe^{Jm})`:
/// the per-site tilt `f ≈ e^{n g(m)}`.
pub fn g_function(m: f64, delta: f64, j: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&m) {
        return Err(Error::invalid(format!("magnetization must lie in [-1, 1], got {m}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
    }
    let ln_delta = delta.ln();
    let a = log1p_delta_exp(ln_delta, -j * m);
    let b = log1p_delta_exp(ln_delta, j * m);
    Ok(0.5 * (a + b) + 0.5 * m * (a - b))
}

/// `argmax_{m ∈ [0,1]} F(m) + g(m, δ)` by golden-section search.
pub fn solve_mbar(j: f64, delta: f64) -> Result<f64> {
    if !(j > 0.0) {
        return Err(Error::invalid(format!("J must be positive, got {j}")));
    }
    let objective = |m: f64| -> Result<f64> { Ok(free_energy_f(m, j)? + g_function(m, delta, j)?) };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Law of the magnetization over `m_k = 2k/n - 1`, `k = 0..=n` up-spins.
#[derive(Clone, Debug, Serialize)]
pub struct MagnetizationLaw {
    pub n: usize,
    pub measure: Measure,
    pub support: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_partition: f64,
}

impl MagnetizationLaw {
    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> = self.support.iter().zip(&self.probs).map(|(m, p)| m * p).collect();
        pairwise_sum(&terms)
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let terms: Vec<f64> = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| p * (m - mean) * (m - mean))
            .collect();
        pairwise_sum(&terms)
    }

    /// The law conditioned on `m >= 0`, renormalised; entries with `m < 0` are zero.
    pub fn conditioned_nonnegative(&self) -> Vec<f64> {
        let mass: f64 = self
            .support
            .iter()
            .zip(&self.probs)
            .filter(|(m, _)| **m >= 0.0)
            .map(|(_, p)| p)
            .sum();
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| if *m >= 0.0 { p / mass } else { 0.0 })
            .collect()
    }
}

/// `ln f` summed over sites for a configuration with `k` up-spins, exactly
/// (including the `j = i` exclusion in each field).
fn log_f_at(n: usize, k: usize, c: f64, ln_delta: f64) -> f64 {
    let s = 2.0 * k as f64 - n as f64;
    k as f64 * log1p_delta_exp(ln_delta, -2.0 * c * s + 2.0 * c)
        + (n - k) as f64 * log1p_delta_exp(ln_delta, 2.0 * c * s + 2.0 * c)
}

/// Unnormalised log-weights `ln C(n,k) + c(S² - n) + p·ln f`, `S = 2k - n`,
/// `c = J_ij`, `p` the tilt power of the measure.
fn law_log_weights(spec: &CwSpec, power: f64) -> Vec<f64> {
    let n = spec.n;
    let c = spec.pair_coupling();
    let ln_delta = spec.inertia.ln_delta();
    (0..=n)
        .map(|k| {
            let s = 2.0 * k as f64 - n as f64;
            let mut lw = ln_binomial(n, k) + c * (s * s - n as f64);
            if power != 0.0 {
                lw += power * log_f_at(n, k, c, ln_delta);
            }
            lw
        })
        .collect()
}

/// Exact law of the magnetization under `π^G`, `π^PCA` or `π̃`.
pub fn magnetization_law(spec: &CwSpec, measure: Measure) -> MagnetizationLaw {
    let n = spec.n;
    let lw = law_log_weights(spec, measure.tilt_power());
    let (_, probs, log_partition) = normalize_log_weights(lw.clone());
    MagnetizationLaw {
        n,
        measure,
        support: (0..=n).map(|k| 2.0 * k as f64 / n as f64 - 1.0).collect(),
        log_weights: lw,
        probs,
        log_partition,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeltaRatioCw {
    pub computed: f64,
    /// `Jδ/2`.
    pub predicted: f64,
    pub relative_error: f64,
}

/// `Δ(δ) = π^G(f²)/π^G(f)² - 1` from binomial sums, next to `Jδ/2`.
pub fn delta_ratio_cw(spec: &CwSpec) -> DeltaRatioCw {
    let base = law_log_weights(spec, 0.0);
    let c = spec.pair_coupling();
    let ln_delta = spec.inertia.ln_delta();
    let log_f: Vec<f64> = (0..=spec.n).map(|k| log_f_at(spec.n, k, c, ln_delta)).collect();
    let tilted = |p: f64| -> Vec<f64> { base.iter().zip(&log_f).map(|(b, l)| b + p * l).collect() };
    let lz = log_sum_exp(&base);
    let l1 = log_sum_exp(&tilted(1.0)) - lz;
    let l2 = log_sum_exp(&tilted(2.0)) - lz;
    let computed = if spec.inertia.delta() == 0.0 {
        0.0
    } else {
        (l2 - 2.0 * l1).exp_m1().max(0.0)
    };
    let predicted = 0.5 * spec.j * spec.inertia.delta();
    DeltaRatioCw {
        computed,
        predicted,
        relative_error: if predicted > 0.0 {
            (computed - predicted).abs() / predicted
        } else {
            computed.abs()
        },
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussianCheck {
    pub gibbs_variance: f64,
    /// `[n(1-J)]^{-1}`.
    pub gibbs_target: f64,
    pub gibbs_relative_error: f64,
    pub pca_variance: f64,
    /// `[n(1-J-δJ(1-J))]^{-1}`.
    pub pca_target: f64,
    pub pca_relative_error: f64,
}

/// Compares the exact magnetization variances with the Gaussian widths.
pub fn gaussian_approx_check(spec: &CwSpec) -> Result<GaussianCheck> {
    let (n, j, d) = (spec.n as f64, spec.j, spec.inertia.delta());
    if j >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "Gaussian widths need J < 1, got {j}"
        )));
    }
    let gibbs_variance = magnetization_law(spec, Measure::Gibbs).variance();
    let pca_variance = magnetization_law(spec, Measure::Pca).variance();
    let gibbs_target = 1.0 / (n * (1.0 - j));
    let pca_target = 1.0 / (n * (1.0 - j - d * j * (1.0 - j)));
    Ok(GaussianCheck {
        gibbs_variance,
        gibbs_target,
        gibbs_relative_error: (gibbs_variance - gibbs_target).abs() / gibbs_target,
        pca_variance,
        pca_target,
        pca_relative_error: (pca_variance - pca_target).abs() / pca_target,
    })
}

/// One-step coupling contraction `1 - 2δ(1-J)`.
pub fn contraction_prediction(j: f64, delta: f64) -> Result<f64> {
    if j >= 1.0 {
        return Err(Error::NotApplicable(format!("contraction needs J < 1, got {j}")));
    }
    Ok(1.0 - 2.0 * delta * (1.0 - j))
}

/// `T = log(2n) / (2δ(1-J))`, where the coupling tail bound reaches 1.
pub fn mixing_prediction(n: usize, j: f64, delta: f64) -> Result<f64> {
    if j >= 1.0 {
        return Err(Error::NotApplicable(format!("mixing prediction needs J < 1, got {j}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("mixing prediction needs delta > 0"));
    }
    Ok((2.0 * n as f64).ln() / (2.0 * delta * (1.0 - j)))
}

/// Everything `cw-analyze` reports besides the law itself.
#[derive(Clone, Debug, Serialize)]
pub struct CwSummary {
    pub spec: CwSpec,
    pub m_star: f64,
    pub m_bar: f64,
    pub delta_ratio: DeltaRatioCw,
    pub contraction: Option<f64>,
    pub mixing_time: Option<f64>,
    pub gaussian: Option<GaussianCheck>,
    pub gibbs_mean_abs_m: f64,
    pub pca_mean_abs_m: f64,
}

pub fn summarize(spec: &CwSpec) -> Result<CwSummary> {
    let d = spec.inertia.delta();
    let mean_abs = |law: &MagnetizationLaw| -> f64 {
        law.support.iter().zip(&law.probs).map(|(m, p)| m.abs() * p).sum()
    };
    Ok(CwSummary {
        spec: *spec,
        m_star: solve_mstar(spec.j)?,
        m_bar: solve_mbar(spec.j, d)?,
        delta_ratio: delta_ratio_cw(spec),
        contraction: contraction_prediction(spec.j, d).ok(),
        mixing_time: mixing_prediction(spec.n, spec.j, d).ok(),
        gaussian: gaussian_approx_check(spec).ok(),
        gibbs_mean_abs_m: mean_abs(&magnetization_law(spec, Measure::Gibbs)),
        pca_mean_abs_m: mean_abs(&magnetization_law(spec, Measure::Pca)),
    })
}
