//! Brute-force enumeration over all `2^n` configurations.
//!
//! This is the ground truth for every sampler and bound in the crate, so it
//! deliberately takes no shortcuts: no transfer matrices, no message passing.
//! Configuration index `k` has bit `i` set iff `σ_i = +1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::model::{fill_from_index, pair_energy, CouplingModel, Inertia, Measure};
use crate::numeric::{log1p_delta_exp, log_sum_exp, logistic, normalize_log_weights, pairwise_sum};

/// Site-count caps for exhaustive computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Probability vectors over `2^n` states.
    pub vector_sites: usize,
    /// `2^n × 2^n` matrices (transition kernel, joint measure).
    pub matrix_sites: usize,
    /// Exhaustive sups over `σ` inside bound computations.
    pub sup_sites: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            vector_sites: 20,
            matrix_sites: 12,
            sup_sites: 10,
        }
    }
}

/// Tolerances used by the exact-oracle self checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub normalization: f64,
    pub reversibility_relative: f64,
    pub identity: f64,
    pub kernel_factorization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normalization: 1e-12,
            reversibility_relative: 1e-10,
            identity: 1e-10,
            kernel_factorization: 1e-12,
        }
    }
}

/// A normalised probability vector over all configurations.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    n: usize,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
    log_partition: f64,
}

impl ExactDistribution {
    pub fn from_log_weights(n: usize, log_weights: Vec<f64>) -> Self {
        assert_eq!(log_weights.len(), 1usize << n);
        let (log_probs, probs, log_partition) = normalize_log_weights(log_weights);
        Self {
            n,
            log_probs,
            probs,
            log_partition,
        }
    }

    /// Builds from raw probabilities (e.g. empirical frequencies); zero entries get `-inf` log.
    pub fn from_probs(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << n {
            return Err(Error::invalid(format!(
                "expected {} probabilities, got {}",
                1usize << n,
                probs.len()
            )));
        }
        let total = pairwise_sum(&probs);
        if !(total > 0.0) || probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite, nonnegative and not all zero"));
        }
        let probs: Vec<f64> = probs.into_iter().map(|p| p / total).collect();
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self {
            n,
            log_probs,
            probs,
            log_partition: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// `ln Z` of the unnormalised weights this distribution was built from.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn prob(&self, index: u64) -> f64 {
        self.probs[index as usize]
    }

    pub fn expectation(&self, table: &[f64]) -> f64 {
        assert_eq!(table.len(), self.probs.len());
        let terms: Vec<f64> = self.probs.iter().zip(table).map(|(p, x)| p * x).collect();
        pairwise_sum(&terms)
    }

    /// Centred second moment, computed two-pass.
    pub fn variance(&self, table: &[f64]) -> f64 {
        self.covariance(table, table)
    }

    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let ma = self.expectation(a);
        let mb = self.expectation(b);
        let terms: Vec<f64> = self
            .probs
            .iter()
            .zip(a.iter().zip(b))
            .map(|(p, (x, y))| p * (x - ma) * (y - mb))
            .collect();
        pairwise_sum(&terms)
    }

    /// Law of the number of `+1` spins (index `k` ↔ magnetization `2k/n - 1`).
    pub fn up_count_law(&self) -> Vec<f64> {
        let mut law = vec![0.0; self.n + 1];
        for (idx, p) in self.probs.iter().enumerate() {
            law[(idx as u64).count_ones() as usize] += p;
        }
        law
    }
}

/// Evaluates an observable on every configuration, in index order.
pub fn tabulate(n: usize, f: impl Fn(&[i8]) -> f64) -> Vec<f64> {
    let mut spins = vec![0i8; n];
    (0..1u64 << n)
        .map(|idx| {
            fill_from_index(idx, &mut spins);
            f(&spins)
        })
        .collect()
}

/// `½ Σ |p - r|`.
pub fn tv_distance(p: &ExactDistribution, r: &ExactDistribution) -> Result<f64> {
    if p.len() != r.len() {
        return Err(Error::invalid(format!(
            "distributions have different sizes ({} vs {})",
            p.len(),
            r.len()
        )));
    }
    let diffs: Vec<f64> = p.probs.iter().zip(&r.probs).map(|(a, b)| (a - b).abs()).collect();
    Ok(0.5 * pairwise_sum(&diffs))
}

/// Dense `2^n × 2^n` row-stochastic matrix.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, from: u64, to: u64) -> f64 {
        self.data[from as usize * self.dim + to as usize]
    }

    pub fn row(&self, from: u64) -> &[f64] {
        let f = from as usize;
        &self.data[f * self.dim..(f + 1) * self.dim]
    }
}

/// The joint measure `μ₂(σ,τ) ∝ e^{-H(σ,τ)}` over configuration pairs.
#[derive(Clone, Debug)]
pub struct JointDistribution {
    n: usize,
    dim: usize,
    probs: Vec<f64>,
    log_partition: f64,
}

impl JointDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prob(&self, sigma: u64, tau: u64) -> f64 {
        self.probs[sigma as usize * self.dim + tau as usize]
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.probs)
    }

    /// `Σ_τ μ₂(σ, τ)`.
    pub fn row_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.dim).map(pairwise_sum).collect()
    }

    pub fn diagonal_mass(&self) -> f64 {
        (0..self.dim).map(|s| self.probs[s * self.dim + s]).sum()
    }
}

/// Finite-difference residuals of the derivative identities for
/// `ln π^G[f]` and `ln π^G[f²]` with respect to `δ`.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeReport {
    pub delta: f64,
    pub step: f64,
    pub first_pca: Residual,
    pub second_pca: Residual,
    pub first_tilde: Residual,
    pub second_tilde: Residual,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residual {
    pub finite_difference: f64,
    pub identity: f64,
    pub residual: f64,
}

impl Residual {
    fn new(finite_difference: f64, identity: f64) -> Self {
        Self {
            finite_difference,
            identity,
            residual: (finite_difference - identity).abs(),
        }
    }
}

impl DerivativeReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.first_pca,
            self.second_pca,
            self.first_tilde,
            self.second_tilde,
        ]
        .iter()
        .map(|r| r.residual)
        .fold(0.0, f64::max)
    }
}

/// Enumeration engine with configurable caps.
#[derive(Clone, Copy, Debug, Default)]
pub struct Enumerator {
    pub caps: Caps,
    pub tolerances: Tolerances,
}

impl Enumerator {
    pub fn new(caps: Caps) -> Self {
        Self {
            caps,
            tolerances: Tolerances::default(),
        }
    }

    fn check_cap(&self, what: &'static str, n: usize, cap: usize) -> Result<()> {
        if n > cap {
            return Err(Error::ResourceCap {
                what,
                requested: n,
                cap,
            });
        }
        Ok(())
    }

    /// Unnormalised `ln w(σ) = -H(σ) + k·ln f(σ)` for every configuration,
    /// with `ln f` evaluated at `ln δ`.
    fn log_weights(&self, model: &CouplingModel, power: f64, ln_delta: f64) -> Result<Vec<f64>> {
        let n = model.n();
        self.check_cap("exact enumeration", n, self.caps.vector_sites)?;
        let mut spins = vec![0i8; n];
        Ok((0..1u64 << n)
            .map(|idx| {
                fill_from_index(idx, &mut spins);
                let fields = model.fields(&spins);
                let mut energy = 0.0;
                let mut log_f = 0.0;
                for (i, &s) in spins.iter().enumerate() {
                    let h = fields.field(i);
                    energy += h * s as f64;
                    if power != 0.0 {
                        log_f += log1p_delta_exp(ln_delta, 2.0 * h * s as f64);
                    }
                }
                -energy + power * log_f
            })
            .collect())
    }

    pub fn measure(
        &self,
        model: &CouplingModel,
        measure: Measure,
        inertia: Inertia,
    ) -> Result<ExactDistribution> {
        let lw = self.log_weights(model, measure.tilt_power(), inertia.ln_delta())?;
        Ok(ExactDistribution::from_log_weights(model.n(), lw))
    }

    /// `π^G(σ) ∝ e^{-H(σ)}`.
    pub fn gibbs(&self, model: &CouplingModel) -> Result<ExactDistribution> {
        let lw = self.log_weights(model, 0.0, f64::NEG_INFINITY)?;
        Ok(ExactDistribution::from_log_weights(model.n(), lw))
    }

    /// `π^PCA(σ) ∝ e^{-H(σ)} f(σ)`.
    pub fn pca(&self, model: &CouplingModel, inertia: Inertia) -> Result<ExactDistribution> {
        self.measure(model, Measure::Pca, inertia)
    }

    /// `π̃(σ) ∝ e^{-H(σ)} f(σ)²`.
    pub fn tilde(&self, model: &CouplingModel, inertia: Inertia) -> Result<ExactDistribution> {
        self.measure(model, Measure::Tilde, inertia)
    }

    /// `P(σ,σ') = e^{-H(σ,σ')} / Z_σ`, normalised per row by log-sum-exp over
    /// the pair Hamiltonian (not via the single-site product).
    pub fn transition_matrix(
        &self,
        model: &CouplingModel,
        inertia: Inertia,
    ) -> Result<TransitionMatrix> {
        let n = model.n();
        self.check_cap("transition matrix", n, self.caps.matrix_sites)?;
        let dim = 1usize << n;
        let mut data = vec![0.0; dim * dim];
        let mut sigma = vec![0i8; n];
        let mut tau = vec![0i8; n];
        let mut fields = vec![0.0; n];
        let mut row_lw = vec![0.0; dim];
        for s in 0..dim {
            fill_from_index(s as u64, &mut sigma);
            let eval = model.fields(&sigma);
            for (i, h) in fields.iter_mut().enumerate() {
                *h = eval.field(i);
            }
            for (t, lw) in row_lw.iter_mut().enumerate() {
                fill_from_index(t as u64, &mut tau);
                *lw = -pair_energy(&fields, &sigma, &tau, inertia.q());
            }
            let log_z = log_sum_exp(&row_lw);
            for (dst, lw) in data[s * dim..(s + 1) * dim].iter_mut().zip(&row_lw) {
                *dst = (lw - log_z).exp();
            }
        }
        Ok(TransitionMatrix { n, dim, data })
    }

    /// `μ₂(σ,τ) ∝ e^{-H(σ,τ)}`.
    pub fn joint(&self, model: &CouplingModel, inertia: Inertia) -> Result<JointDistribution> {
        let n = model.n();
        self.check_cap("joint measure", n, self.caps.matrix_sites)?;
        let dim = 1usize << n;
        let mut log_w = vec![0.0; dim * dim];
        let mut sigma = vec![0i8; n];
        let mut tau = vec![0i8; n];
        let mut fields = vec![0.0; n];
        for s in 0..dim {
            fill_from_index(s as u64, &mut sigma);
            let eval = model.fields(&sigma);
            for (i, h) in fields.iter_mut().enumerate() {
                *h = eval.field(i);
            }
            for t in 0..dim {
                fill_from_index(t as u64, &mut tau);
                log_w[s * dim + t] = -pair_energy(&fields, &sigma, &tau, inertia.q());
            }
        }
        let (_, probs, log_partition) = normalize_log_weights(log_w);
        Ok(JointDistribution {
            n,
            dim,
            probs,
            log_partition,
        })
    }

    /// `ln π^G[f^k]` at a raw `δ` (which may be slightly negative for
    /// centred differences, as long as every `1 + δφ_i > 0`).
    fn log_gibbs_moment(&self, model: &CouplingModel, power: f64, delta: f64) -> Result<f64> {
        let n = model.n();
        self.check_cap("exact enumeration", n, self.caps.vector_sites)?;
        let mut spins = vec![0i8; n];
        let mut base = Vec::with_capacity(1 << n);
        let mut tilted = Vec::with_capacity(1 << n);
        for idx in 0..1u64 << n {
            fill_from_index(idx, &mut spins);
            let fields = model.fields(&spins);
            let mut energy = 0.0;
            let mut log_f = 0.0;
            for (i, &s) in spins.iter().enumerate() {
                let h = fields.field(i);
                energy += h * s as f64;
                let x = delta * (2.0 * h * s as f64).exp();
                if x <= -1.0 {
                    return Err(Error::invalid(format!(
                        "1 + δφ is not positive at δ = {delta}"
                    )));
                }
                log_f += x.ln_1p();
            }
            base.push(-energy);
            tilted.push(-energy + power * log_f);
        }
        Ok(log_sum_exp(&tilted) - log_sum_exp(&base))
    }

    /// `Δ(δ) = π^G(f²) / π^G(f)² - 1`, via log-domain moments.
    pub fn delta_ratio(&self, model: &CouplingModel, inertia: Inertia) -> Result<f64> {
        if inertia.delta() == 0.0 {
            return Ok(0.0);
        }
        let l1 = self.log_gibbs_moment(model, 1.0, inertia.delta())?;
        let l2 = self.log_gibbs_moment(model, 2.0, inertia.delta())?;
        Ok((l2 - 2.0 * l1).exp_m1().max(0.0))
    }

    /// Compares centred finite differences of `ln π^G[f]` and `ln π^G[f²]`
    /// against their expressions as moments of `π^PCA` and `π̃`.
    pub fn derivative_check(
        &self,
        model: &CouplingModel,
        delta: f64,
        step: f64,
    ) -> Result<DerivativeReport> {
        if !(step > 0.0) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        if delta < 0.0 {
            return Err(Error::invalid("delta must be nonnegative"));
        }
        let l = |power: f64, d: f64| self.log_gibbs_moment(model, power, d);
        let (l1m, l10, l1p) = (l(1.0, delta - step)?, l(1.0, delta)?, l(1.0, delta + step)?);
        let (l2m, l20, l2p) = (l(2.0, delta - step)?, l(2.0, delta)?, l(2.0, delta + step)?);
        let d1 = (l1p - l1m) / (2.0 * step);
        let dd1 = (l1p - 2.0 * l10 + l1m) / (step * step);
        let d2 = (l2p - l2m) / (2.0 * step);
        let dd2 = (l2p - 2.0 * l20 + l2m) / (step * step);

        let inertia = Inertia::from_delta(delta)?;
        let n = model.n();
        let ratio_sums = |power: u32| {
            tabulate(n, |spins| {
                let fields = model.fields(spins);
                (0..n)
                    .map(|i| {
                        let phi = (2.0 * fields.field(i) * spins[i] as f64).exp();
                        (phi / (1.0 + delta * phi)).powi(power as i32)
                    })
                    .sum()
            })
        };
        let s1 = ratio_sums(1);
        let s2 = ratio_sums(2);
        let pca = self.pca(model, inertia)?;
        let tilde = self.tilde(model, inertia)?;
        Ok(DerivativeReport {
            delta,
            step,
            first_pca: Residual::new(d1, pca.expectation(&s1)),
            second_pca: Residual::new(dd1, -pca.expectation(&s2) + pca.variance(&s1)),
            first_tilde: Residual::new(d2, 2.0 * tilde.expectation(&s1)),
            second_tilde: Residual::new(
                dd2,
                -2.0 * tilde.expectation(&s2) + 4.0 * tilde.variance(&s1),
            ),
        })
    }

    /// Exact Dobrushin coefficients
    /// `γ_ij = sup_σ |π(σ_i=1 | σ_{\i}) - π(σ_i=1 | σ^j_{\i})|`, `γ_ii = 0`.
    pub fn dobrushin_coefficients(&self, dist: &ExactDistribution) -> Result<SquareMatrix> {
        let n = dist.n();
        self.check_cap("exact Dobrushin coefficients", n, self.caps.sup_sites)?;
        let lp = dist.log_probs();
        let mut gamma = SquareMatrix::zeros(n);
        let mut cond = vec![0.0; 1 << n];
        for i in 0..n {
            let bit = 1usize << i;
            for x in (0..1usize << n).filter(|x| x & bit != 0) {
                cond[x] = logistic(lp[x] - lp[x ^ bit]);
            }
            for j in (0..n).filter(|&j| j != i) {
                let flip = 1usize << j;
                let sup = (0..1usize << n)
                    .filter(|x| x & bit != 0)
                    .map(|x| (cond[x] - cond[x ^ flip]).abs())
                    .fold(0.0, f64::max);
                gamma.set(i, j, sup);
            }
        }
        Ok(gamma)
    }
}

/// Reflected kernel on `X₊ = {σ : m(σ) >= 0}`.
#[derive(Clone, Debug)]
pub struct ReflectedKernel {
    /// Configuration indices of `X₊`, increasing.
    pub states: Vec<u64>,
    /// Row-major `|X₊| × |X₊|` kernel.
    pub data: Vec<f64>,
}

impl ReflectedKernel {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.states.len() + b]
    }
}

fn spin_sum_of_index(n: usize, idx: u64) -> i64 {
    2 * idx.count_ones() as i64 - n as i64
}

/// `P⁺` from a PCA kernel, matching the reflected sampler: candidates with
/// `m < 0` are globally flipped; candidates with `m = 0` are kept or flipped
/// with probability ½ each.
pub fn reflected_kernel(p: &TransitionMatrix) -> ReflectedKernel {
    let n = p.n();
    let mask = (1u64 << n) - 1;
    let states: Vec<u64> = (0..1u64 << n)
        .filter(|&s| spin_sum_of_index(n, s) >= 0)
        .collect();
    let k = states.len();
    let mut data = vec![0.0; k * k];
    for (a, &s) in states.iter().enumerate() {
        for (b, &t) in states.iter().enumerate() {
            let direct = p.get(s, t);
            let mirrored = p.get(s, t ^ mask);
            data[a * k + b] = if spin_sum_of_index(n, t) > 0 {
                direct + mirrored
            } else {
                0.5 * (direct + mirrored)
            };
        }
    }
    ReflectedKernel { states, data }
}

/// Law of `σ` under `π` folded onto `X₊` by `σ ↦ -σ` when `m(σ) < 0`,
/// with `m = 0` states keeping their own mass. For odd `n` this is exactly
/// `π` restricted to `X₊` and renormalised, when `π` is flip-symmetric.
pub fn reflected_stationary(dist: &ExactDistribution, states: &[u64]) -> Vec<f64> {
    let n = dist.n();
    let mask = (1u64 << n) - 1;
    states
        .iter()
        .map(|&s| {
            if spin_sum_of_index(n, s) > 0 {
                dist.prob(s) + dist.prob(s ^ mask)
            } else {
                dist.prob(s)
            }
        })
        .collect()
}

pub fn enumerate_gibbs(model: &CouplingModel) -> Result<ExactDistribution> {
    Enumerator::default().gibbs(model)
}

pub fn enumerate_pca(model: &CouplingModel, inertia: Inertia) -> Result<ExactDistribution> {
    Enumerator::default().pca(model, inertia)
}

pub fn enumerate_tilde(model: &CouplingModel, inertia: Inertia) -> Result<ExactDistribution> {
    Enumerator::default().tilde(model, inertia)
}

pub fn pca_transition_matrix(model: &CouplingModel, inertia: Inertia) -> Result<TransitionMatrix> {
    Enumerator::default().transition_matrix(model, inertia)
}

pub fn joint_measure(model: &CouplingModel, inertia: Inertia) -> Result<JointDistribution> {
    Enumerator::default().joint(model, inertia)
}

pub fn delta_ratio(model: &CouplingModel, inertia: Inertia) -> Result<f64> {
    Enumerator::default().delta_ratio(model, inertia)
}

pub fn exact_dobrushin_coefficients(dist: &ExactDistribution) -> Result<SquareMatrix> {
    Enumerator::default().dobrushin_coefficients(dist)
}

pub fn log_pg_f_derivative_check(
    model: &CouplingModel,
    delta: f64,
    step: f64,
) -> Result<DerivativeReport> {
    Enumerator::default().derivative_check(model, delta, step)
}
