//! Computable certificates: Dobrushin matrices, the PCA influence bound via
//! `ψ_{i,δ}`, the matrix `D = Σ Γ^k`, Föllmer's covariance bound, oscillation
//! bounds and the variance / total-variation certificates built from them.
//!
//! Every sup over configurations exists in two modes: exhaustive (all `2^n`
//! configurations, `n <= 10`) and analytic. Reports say which one was used.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{Caps, Enumerator};
use crate::linalg::SquareMatrix;
use crate::model::{fill_from_index, CouplingModel, Inertia, Measure, SpinConfiguration};
use crate::numeric::log1p_delta_exp;

/// Largest `n` for which [`GammaMatrix::to_dense`] will allocate.
pub const DENSE_GAMMA_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// `tanh(2|J_ij|)`, valid for `π^G`.
    Coupling,
    /// Exhaustive sup over all configurations.
    Exhaustive,
    /// Closed-form bound.
    Analytic,
}

/// Nonnegative influence matrix with zero diagonal.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "storage", rename_all = "kebab-case")]
pub enum GammaMatrix {
    Dense(SquareMatrix),
    Sparse { n: usize, rows: Vec<Vec<(usize, f64)>> },
    Uniform { n: usize, value: f64 },
}

impl GammaMatrix {
    pub fn n(&self) -> usize {
        match self {
            GammaMatrix::Dense(m) => m.n(),
            GammaMatrix::Sparse { n, .. } | GammaMatrix::Uniform { n, .. } => *n,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            GammaMatrix::Dense(m) => m.get(i, j),
            GammaMatrix::Sparse { rows, .. } => rows[i]
                .iter()
                .find(|&&(k, _)| k == j)
                .map_or(0.0, |&(_, v)| v),
            GammaMatrix::Uniform { value, .. } => {
                if i == j {
                    0.0
                } else {
                    *value
                }
            }
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        match self {
            GammaMatrix::Dense(m) => m.row(i).iter().sum(),
            GammaMatrix::Sparse { rows, .. } => rows[i].iter().map(|&(_, v)| v).sum(),
            GammaMatrix::Uniform { n, value } => n.saturating_sub(1) as f64 * value,
        }
    }

    /// `γ = sup_i Σ_j Γ_ij`.
    pub fn max_row_sum(&self) -> f64 {
        match self {
            GammaMatrix::Uniform { .. } => self.row_sum(0),
            _ => (0..self.n()).map(|i| self.row_sum(i)).fold(0.0, f64::max),
        }
    }

    pub fn max_entry(&self) -> f64 {
        match self {
            GammaMatrix::Dense(m) => m.max_abs(),
            GammaMatrix::Sparse { rows, .. } => rows
                .iter()
                .flatten()
                .map(|&(_, v)| v)
                .fold(0.0, f64::max),
            GammaMatrix::Uniform { n, value } => {
                if *n > 1 {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_dense(&self) -> Result<SquareMatrix> {
        let n = self.n();
        if n > DENSE_GAMMA_CAP {
            return Err(Error::ResourceCap {
                what: "dense gamma matrix",
                requested: n,
                cap: DENSE_GAMMA_CAP,
            });
        }
        Ok(match self {
            GammaMatrix::Dense(m) => m.clone(),
            _ => {
                let mut m = SquareMatrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        m.set(i, j, self.get(i, j));
                    }
                }
                m
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DobrushinReport {
    pub mode: BoundMode,
    pub measure: Measure,
    pub delta: Option<f64>,
    pub gamma_matrix: GammaMatrix,
    pub gamma: f64,
    pub satisfied: bool,
    /// `1/(1-γ)`, an upper bound on every row sum of `D`.
    pub d_row_sum_bound: Option<f64>,
}

impl DobrushinReport {
    fn new(mode: BoundMode, measure: Measure, delta: Option<f64>, gamma_matrix: GammaMatrix) -> Self {
        let gamma = gamma_matrix.max_row_sum();
        let satisfied = gamma < 1.0;
        Self {
            mode,
            measure,
            delta,
            gamma_matrix,
            gamma,
            satisfied,
            d_row_sum_bound: satisfied.then(|| 1.0 / (1.0 - gamma)),
        }
    }
}

/// Coupling-only Dobrushin matrix `Γ_ij = tanh(2|J_ij|)` for `π^G`.
pub fn dobrushin_condition(model: &CouplingModel) -> DobrushinReport {
    let n = model.n();
    let gamma = if model.is_uniform() {
        let v = if n > 1 { model.coupling(0, 1) } else { 0.0 };
        GammaMatrix::Uniform {
            n,
            value: (2.0 * v.abs()).tanh(),
        }
    } else {
        GammaMatrix::Sparse {
            n,
            rows: (0..n)
                .map(|i| {
                    model
                        .neighbors(i)
                        .map(|(j, v)| (j, (2.0 * v.abs()).tanh()))
                        .collect()
                })
                .collect(),
        }
    };
    DobrushinReport::new(BoundMode::Coupling, Measure::Gibbs, None, gamma)
}

/// `ψ_i` for every site at a fixed configuration, given the fields `h_l(σ)`.
///
/// With `g_l = h_l + J_li σ_i` the part of site `l`'s field not involving `i`,
/// `ψ_i = ½[ln((1+δe^{2h_i})/(1+δe^{-2h_i}))
///        + Σ_{l≠i} ln((1+δe^{-2J_ilσ_l+2σ_l g_l})/(1+δe^{2J_ilσ_l+2σ_l g_l}))]`,
/// so that `π^PCA(σ_i=+1 | σ_{V∖i}) = e^{-2h_i+ψ_i} / (2cosh(2h_i-ψ_i))`.
fn psi_all(model: &CouplingModel, ln_delta: f64, spins: &[i8], fields: &[f64], out: &mut [f64]) {
    for (i, psi) in out.iter_mut().enumerate() {
        let h = fields[i];
        let si = spins[i] as f64;
        let mut acc = log1p_delta_exp(ln_delta, 2.0 * h) - log1p_delta_exp(ln_delta, -2.0 * h);
        for (l, j_il) in model.neighbors(i) {
            let sl = spins[l] as f64;
            let g = fields[l] + j_il * si;
            acc += log1p_delta_exp(ln_delta, -2.0 * j_il * sl + 2.0 * sl * g)
                - log1p_delta_exp(ln_delta, 2.0 * j_il * sl + 2.0 * sl * g);
        }
        *psi = 0.5 * acc;
    }
}

/// `ψ_{i,δ}(σ)`; depends on `σ` only through `σ_{V∖i}`.
pub fn psi(model: &CouplingModel, inertia: Inertia, i: usize, sigma: &SpinConfiguration) -> Result<f64> {
    model.check_config(sigma)?;
    if i >= model.n() {
        return Err(Error::invalid(format!("site index {i} out of range")));
    }
    let spins = sigma.spins();
    let eval = model.fields(spins);
    let fields: Vec<f64> = (0..model.n()).map(|l| eval.field(l)).collect();
    let mut out = vec![0.0; model.n()];
    psi_all(model, inertia.ln_delta(), spins, &fields, &mut out);
    Ok(out[i])
}

/// Multiplier of `ψ` for a measure `e^{-H} f^k`: `k` (0, 1 or 2).
fn psi_scale(measure: Measure) -> f64 {
    measure.tilt_power()
}

fn check_sup_cap(what: &'static str, n: usize) -> Result<()> {
    let cap = Caps::default().sup_sites;
    if n > cap {
        return Err(Error::ResourceCap {
            what,
            requested: n,
            cap,
        });
    }
    Ok(())
}

/// `ρ_j(ψ_i) = sup_σ |ψ_i(σ) - ψ_i(σ^j)|`, exhaustively; entry `(i, j)`.
pub fn psi_oscillations(model: &CouplingModel, inertia: Inertia) -> Result<SquareMatrix> {
    let n = model.n();
    check_sup_cap("psi oscillations", n)?;
    let states = 1usize << n;
    let mut table = vec![0.0; states * n];
    let mut spins = vec![0i8; n];
    let mut fields = vec![0.0; n];
    for idx in 0..states {
        fill_from_index(idx as u64, &mut spins);
        let eval = model.fields(&spins);
        for (l, h) in fields.iter_mut().enumerate() {
            *h = eval.field(l);
        }
        psi_all(model, inertia.ln_delta(), &spins, &fields, &mut table[idx * n..(idx + 1) * n]);
    }
    let mut rho = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let sup = (0..states)
                .map(|x| (table[x * n + i] - table[(x ^ (1 << j)) * n + i]).abs())
                .fold(0.0, f64::max);
            rho.set(i, j, sup);
        }
    }
    Ok(rho)
}

/// Exhaustive Dobrushin bound for `π^PCA` (or `π̃`, whose `ψ` is doubled):
/// `Γ_ij = tanh(2|J_ij|) + ½ρ_j(kψ_i)`. For `Measure::Gibbs` this is the
/// coupling bound.
pub fn pca_gamma_bound(model: &CouplingModel, inertia: Inertia, measure: Measure) -> Result<DobrushinReport> {
    let n = model.n();
    let rho = psi_oscillations(model, inertia)?;
    let k = psi_scale(measure);
    let mut gamma = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            gamma.set(i, j, (2.0 * model.coupling(i, j).abs()).tanh() + 0.5 * k * rho.get(i, j));
        }
    }
    Ok(DobrushinReport::new(
        BoundMode::Exhaustive,
        measure,
        Some(inertia.delta()),
        GammaMatrix::Dense(gamma),
    ))
}

/// `D = Σ_{k>=0} Γ^k` by repeated doubling `S ← S + P·S`, `P ← P²`.
pub fn d_matrix(gamma: &SquareMatrix) -> Result<SquareMatrix> {
    let g = gamma.max_row_sum();
    if gamma.max_abs() > 0.0 && gamma.to_rows().iter().flatten().any(|&v| v < 0.0) {
        return Err(Error::invalid("gamma matrix must be nonnegative"));
    }
    if !(g < 1.0) {
        return Err(Error::Divergence { gamma: g });
    }
    let n = gamma.n();
    let mut sum = SquareMatrix::identity(n);
    let mut power = gamma.clone();
    // remainder after 2^k terms is bounded by g^{2^k}/(1-g)
    let mut tail = g;
    for _ in 0..64 {
        if power.max_abs() == 0.0 || tail / (1.0 - g) < 1e-17 {
            break;
        }
        let add = power.matmul(&sum);
        sum.add_assign(&add);
        power = power.matmul(&power);
        tail *= tail;
    }
    Ok(sum)
}

/// Föllmer's bound `¼ Σ_ij D_ij ρ_i(f) ρ_j(g)` on `|Cov(f, g)|`.
pub fn follmer_bound(d: &SquareMatrix, rho_f: &[f64], rho_g: &[f64]) -> Result<f64> {
    let n = d.n();
    if rho_f.len() != n || rho_g.len() != n {
        return Err(Error::invalid(format!(
            "oscillation vectors must have length {n} (got {} and {})",
            rho_f.len(),
            rho_g.len()
        )));
    }
    if rho_f.iter().chain(rho_g).any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::invalid("oscillations must be finite and nonnegative"));
    }
    let mut total = 0.0;
    for i in 0..n {
        if rho_f[i] == 0.0 {
            continue;
        }
        let row: f64 = d.row(i).iter().zip(rho_g).map(|(dij, r)| dij * r).sum();
        total += rho_f[i] * row;
    }
    Ok(0.25 * total)
}

/// `ρ_j(f) = sup_σ |f(σ) - f(σ^j)|` for every `j`, by enumeration.
pub fn oscillations_exhaustive(n: usize, f: impl Fn(&[i8]) -> f64) -> Result<Vec<f64>> {
    check_sup_cap("exhaustive oscillation", n)?;
    let values = crate::exact::tabulate(n, f);
    Ok((0..n)
        .map(|j| {
            (0..values.len())
                .map(|x| (values[x] - values[x ^ (1 << j)]).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

pub fn oscillation(n: usize, f: impl Fn(&[i8]) -> f64, j: usize) -> Result<f64> {
    if j >= n {
        return Err(Error::invalid(format!("site index {j} out of range")));
    }
    Ok(oscillations_exhaustive(n, f)?[j])
}

/// Analytic `ρ_h(φ_i)`: with `J_i = Σ_j |J_ij|`, `φ_i = e^x` for
/// `x = 2h_iσ_i ∈ [-2J_i, 2J_i]`. Flipping `h ≠ i` moves `x` by `4|J_ih|`,
/// flipping `i` negates it.
pub fn phi_oscillation_bound(model: &CouplingModel, i: usize, h: usize) -> f64 {
    let ji = model.row_norm(i);
    if h == i {
        2.0 * (2.0 * ji).sinh()
    } else {
        let jih = model.coupling(i, h).abs();
        (2.0 * ji).exp() * -(-4.0 * jih).exp_m1()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Oscillations {
    pub mode: BoundMode,
    pub values: Vec<f64>,
}

/// Oscillations of `r_i = φ_i / (1 + δφ_i)` in every coordinate. The
/// analytic mode uses that `x ↦ x/(1+δx)` is 1-Lipschitz on `x > 0`.
pub fn ratio_oscillations(
    model: &CouplingModel,
    inertia: Inertia,
    i: usize,
    mode: BoundMode,
) -> Result<Oscillations> {
    let n = model.n();
    if i >= n {
        return Err(Error::invalid(format!("site index {i} out of range")));
    }
    let values = match mode {
        BoundMode::Exhaustive => {
            let d = inertia.delta();
            oscillations_exhaustive(n, |s| {
                let phi = (2.0 * model.fields(s).field(i) * s[i] as f64).exp();
                phi / (1.0 + d * phi)
            })?
        }
        BoundMode::Analytic => (0..n).map(|h| phi_oscillation_bound(model, i, h)).collect(),
        BoundMode::Coupling => {
            return Err(Error::invalid("oscillations are exhaustive or analytic"));
        }
    };
    Ok(Oscillations { mode, values })
}

/// Where the `γ` entering the variance certificate comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum GammaSource {
    /// [`pca_gamma_bound`] for the measure at hand (n <= 10).
    Exhaustive,
    /// `dobrushin_condition` plus a caller-supplied allowance for the `δ`-dependent part.
    CouplingWithSlack { slack: f64 },
}

impl GammaSource {
    /// Exhaustive when the model is small enough, else coupling plus `slack`.
    pub fn auto(model: &CouplingModel, slack: f64) -> Self {
        if model.n() <= Caps::default().sup_sites {
            GammaSource::Exhaustive
        } else {
            GammaSource::CouplingWithSlack { slack }
        }
    }

    fn gamma(self, model: &CouplingModel, inertia: Inertia, measure: Measure) -> Result<f64> {
        match self {
            GammaSource::Exhaustive => Ok(pca_gamma_bound(model, inertia, measure)?.gamma),
            GammaSource::CouplingWithSlack { slack } => {
                if !(slack >= 0.0) {
                    return Err(Error::invalid("gamma slack must be nonnegative"));
                }
                Ok(dobrushin_condition(model).gamma + slack)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceBound {
    pub value: f64,
    pub gamma: f64,
    pub coupling_norm: f64,
    pub measure: Measure,
    pub source: GammaSource,
}

/// Certified bound on `Var_π[Σ_i φ_i/(1+δφ_i)] / |V|` for `π ∈ {π^PCA, π̃}`:
/// `(sinh(2J) + 2J e^{2J})² / (1 - γ)`.
///
/// From Föllmer's bound with `Σ_i ρ_h(r_i) <= 2 sinh(2J) + 4J e^{2J}` and
/// row sums of `D` at most `1/(1-γ)`.
pub fn variance_bound(
    model: &CouplingModel,
    inertia: Inertia,
    measure: Measure,
    source: GammaSource,
) -> Result<VarianceBound> {
    let gamma = source.gamma(model, inertia, measure)?;
    if !(gamma < 1.0) {
        return Err(Error::NotApplicable(format!(
            "Dobrushin condition fails (gamma = {gamma})"
        )));
    }
    let j = model.sup_norm();
    let a = (2.0 * j).sinh() + 2.0 * j * (2.0 * j).exp();
    Ok(VarianceBound {
        value: a * a / (1.0 - gamma),
        gamma,
        coupling_norm: j,
        measure,
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TvMode {
    /// `sqrt(Δ(δ))` from exact moments.
    Exact,
    /// `Δ <= exp(½δ²|V|(4V + 2e^{4J})) - 1` with `V` the `π̃` variance bound.
    Analytic { source: GammaSource },
}

#[derive(Clone, Debug, Serialize)]
pub struct TvBound {
    pub delta: f64,
    pub value: f64,
    /// The bound on `Δ(δ)` whose square root is `value`.
    pub delta_ratio_bound: f64,
    pub mode: TvMode,
}

/// Upper bound on `‖π^PCA - π^G‖_TV`.
///
/// The analytic mode integrates `d²/dδ² [ln π^G(f²) - 2 ln π^G(f)]
/// <= 4 Var_π̃(Σr_i) + 2 π^PCA(Σr_i²)` twice from `δ = 0`, where both the value
/// and first derivative vanish; `γ` is taken at the endpoint `δ`.
pub fn tv_upper_bound(model: &CouplingModel, inertia: Inertia, mode: TvMode) -> Result<TvBound> {
    let delta = inertia.delta();
    let delta_ratio_bound = match mode {
        TvMode::Exact => Enumerator::default().delta_ratio(model, inertia)?,
        TvMode::Analytic { source } => {
            if delta == 0.0 {
                0.0
            } else {
                let v = variance_bound(model, inertia, Measure::Tilde, source)?.value;
                let j = model.sup_norm();
                let curvature = model.n() as f64 * (4.0 * v + 2.0 * (4.0 * j).exp());
                (0.5 * delta * delta * curvature).exp_m1()
            }
        }
    };
    Ok(TvBound {
        delta,
        value: delta_ratio_bound.sqrt().min(1.0),
        delta_ratio_bound,
        mode,
    })
}
