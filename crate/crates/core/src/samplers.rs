//! Stochastic engines: the synchronous PCA step, the single-site Gibbs
//! baseline, the reflected PCA on `m >= 0` and the shared-uniform coupling.
//!
//! Every site update uses the threshold rule `σ'_i = -1 iff u ≤ P(σ'_i = -1 | σ)`
//! with `u` the counter-based uniform for `(step, i)`. Sites are processed in
//! fixed chunks of [`CHUNK`] and each chunk seeks its own stream, so the
//! result is bit-identical for any number of worker threads.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{magnetization, spin_sum, CouplingModel, FieldEval, Inertia, SpinConfiguration};
use crate::numeric::logistic;
use crate::rng::RngPolicy;

/// Sites per work unit.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Pca,
    Gibbs,
    ReflectedPca,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(SamplerKind::Pca),
            "gibbs" => Ok(SamplerKind::Gibbs),
            "reflected-pca" => Ok(SamplerKind::ReflectedPca),
            other => Err(Error::invalid(format!(
                "unknown sampler '{other}', expected pca, gibbs or reflected-pca"
            ))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Pca => "pca",
            SamplerKind::Gibbs => "gibbs",
            SamplerKind::ReflectedPca => "reflected-pca",
        })
    }
}

/// `P(σ'_i = -1 | σ)` for the PCA kernel given `h = h_i(σ)` and `s = σ_i`.
///
/// Equals `logistic(2h - 2qs)`; written with `ln δ = -2q` so that `δ = 0`
/// gives exactly 0 or 1.
#[inline]
pub fn pca_prob_minus(h: f64, s: i8, ln_delta: f64) -> f64 {
    logistic(2.0 * h + s as f64 * ln_delta)
}

/// `P(σ_i = -1 | σ_{V∖i})` under `π^G`: the site enters `H` as `2h_iσ_i`.
#[inline]
pub fn gibbs_prob_minus(h: f64) -> f64 {
    logistic(4.0 * h)
}

/// Probability that `σ'_i = +1` under the PCA kernel,
/// `exp(-h_i + qσ_i) / (2 cosh(h_i - qσ_i))`.
pub fn pca_single_site_probability(
    model: &CouplingModel,
    sigma: &SpinConfiguration,
    i: usize,
    inertia: Inertia,
) -> Result<f64> {
    let h = model.local_field(sigma, i)?;
    Ok(1.0 - pca_prob_minus(h, sigma.get(i), inertia.ln_delta()))
}

/// Flip form `P(σ'_i = -σ_i | σ) = δφ_i / (1 + δφ_i)`.
pub fn pca_flip_probability(
    model: &CouplingModel,
    sigma: &SpinConfiguration,
    i: usize,
    inertia: Inertia,
) -> Result<f64> {
    let x = inertia.delta() * model.phi(sigma, i)?;
    Ok(if x.is_infinite() { 1.0 } else { x / (1.0 + x) })
}

/// `E[flips | σ] = Σ_i δφ_i / (1 + δφ_i)`.
pub fn expected_flips(model: &CouplingModel, sigma: &SpinConfiguration, inertia: Inertia) -> Result<f64> {
    model.check_config(sigma)?;
    let fields = model.fields(sigma.spins());
    Ok(sigma
        .spins()
        .iter()
        .enumerate()
        .map(|(i, &s)| logistic(inertia.ln_delta() + 2.0 * fields.field(i) * s as f64))
        .sum())
}

/// Worker pool for site-parallel steps. Without the `parallel` feature, or
/// with one thread, chunks run in order on the caller's thread.
#[derive(Clone, Debug)]
pub struct Workers {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl Default for Workers {
    fn default() -> Self {
        Self::sequential()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Tally {
    a: u64,
    b: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }
}

impl Workers {
    pub fn sequential() -> Self {
        Self {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Pool with `threads` workers; falls back to sequential when the crate
    /// is built without `parallel`.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::invalid("threads must be >= 1"));
        }
        #[cfg(feature = "parallel")]
        {
            if threads == 1 {
                return Ok(Self::sequential());
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?;
            Ok(Self {
                threads,
                pool: Some(std::sync::Arc::new(pool)),
            })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Self::sequential())
        }
    }

    /// Number of hardware threads the host reports.
    pub fn available() -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    fn chunks<F>(&self, out: &mut [i8], f: F) -> Tally
    where
        F: Fn(usize, &mut [i8]) -> Tally + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                out.par_chunks_mut(CHUNK)
                    .enumerate()
                    .map(|(c, chunk)| f(c * CHUNK, chunk))
                    .reduce(Tally::default, |x, y| x + y)
            });
        }
        out.chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, chunk)| f(c * CHUNK, chunk))
            .fold(Tally::default(), |x, y| x + y)
    }

    fn chunks2<F>(&self, a: &mut [i8], b: &mut [i8], f: F) -> Tally
    where
        F: Fn(usize, &mut [i8], &mut [i8]) -> Tally + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                a.par_chunks_mut(CHUNK)
                    .zip(b.par_chunks_mut(CHUNK))
                    .enumerate()
                    .map(|(c, (x, y))| f(c * CHUNK, x, y))
                    .reduce(Tally::default, |x, y| x + y)
            });
        }
        a.chunks_mut(CHUNK)
            .zip(b.chunks_mut(CHUNK))
            .enumerate()
            .map(|(c, (x, y))| f(c * CHUNK, x, y))
            .fold(Tally::default(), |x, y| x + y)
    }

    /// Runs `f(0..count)` and returns the results in index order.
    pub fn map_indices<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..count).into_par_iter().map(&f).collect());
        }
        (0..count).map(f).collect()
    }
}

/// Remembers the last `P(σ'_i = -1)` per current spin value. Local fields
/// repeat heavily on lattices and sparse graphs, and a hit returns the
/// identical float, so results do not depend on cache state.
struct ProbCache {
    ln_delta: f64,
    h: [f64; 2],
    p: [f64; 2],
}

impl ProbCache {
    fn new(ln_delta: f64) -> Self {
        Self {
            ln_delta,
            h: [f64::NAN; 2],
            p: [0.0; 2],
        }
    }

    #[inline]
    fn prob_minus(&mut self, h: f64, s: i8) -> f64 {
        let k = (s > 0) as usize;
        if self.h[k] != h {
            self.h[k] = h;
            self.p[k] = pca_prob_minus(h, s, self.ln_delta);
        }
        self.p[k]
    }
}

fn check_len(model: &CouplingModel, len: usize, what: &str) -> Result<()> {
    if len != model.n() {
        return Err(Error::invalid(format!(
            "{what} has {len} spins, model has {} sites",
            model.n()
        )));
    }
    Ok(())
}

/// One synchronous PCA update of every site from `sigma` into `out`; returns
/// the number of flipped spins.
pub fn pca_step_into(
    model: &CouplingModel,
    inertia: Inertia,
    sigma: &[i8],
    out: &mut [i8],
    rng: &RngPolicy,
    step: u64,
    workers: &Workers,
) -> Result<u64> {
    check_len(model, sigma.len(), "state")?;
    check_len(model, out.len(), "output buffer")?;
    let ln_delta = inertia.ln_delta();
    let fields = model.fields(sigma);
    let tally = workers.chunks(out, |start, chunk| {
        let mut stream = rng.site_stream(step, start);
        let mut cache = ProbCache::new(ln_delta);
        let mut flips = 0;
        for (k, dst) in chunk.iter_mut().enumerate() {
            let i = start + k;
            let s = sigma[i];
            let p = cache.prob_minus(fields.field(i), s);
            let new = if stream.next_uniform() <= p { -1 } else { 1 };
            flips += (new != s) as u64;
            *dst = new;
        }
        Tally { a: flips, b: 0 }
    });
    Ok(tally.a)
}

#[derive(Clone, Debug)]
pub struct PcaStep {
    pub state: SpinConfiguration,
    pub flips: u64,
}

/// Pure synchronous step: the result depends only on the arguments.
pub fn pca_step(
    model: &CouplingModel,
    inertia: Inertia,
    sigma: &SpinConfiguration,
    rng: &RngPolicy,
    step: u64,
) -> Result<PcaStep> {
    let mut out = vec![0i8; sigma.len()];
    let flips = pca_step_into(model, inertia, sigma.spins(), &mut out, rng, step, &Workers::sequential())?;
    Ok(PcaStep {
        state: SpinConfiguration::new(out)?,
        flips,
    })
}

/// Resamples one uniformly chosen site from its exact `π^G` conditional, in
/// place; returns `(site, flipped)`.
pub fn gibbs_step_in_place(
    model: &CouplingModel,
    spins: &mut [i8],
    rng: &RngPolicy,
    step: u64,
) -> Result<(usize, bool)> {
    check_len(model, spins.len(), "state")?;
    if spins.is_empty() {
        return Err(Error::invalid("cannot update an empty configuration"));
    }
    let mut stream = rng.site_stream(step, 0);
    let i = stream.next_index(spins.len());
    let h: f64 = -model.neighbors(i).map(|(j, v)| v * spins[j] as f64).sum::<f64>();
    let new = if stream.next_uniform() <= gibbs_prob_minus(h) { -1 } else { 1 };
    let flipped = new != spins[i];
    spins[i] = new;
    Ok((i, flipped))
}

pub fn gibbs_step(
    model: &CouplingModel,
    sigma: &SpinConfiguration,
    rng: &RngPolicy,
    step: u64,
) -> Result<SpinConfiguration> {
    let mut spins = sigma.spins().to_vec();
    gibbs_step_in_place(model, &mut spins, rng, step)?;
    SpinConfiguration::new(spins)
}

/// Reflected PCA step on `X₊ = {m >= 0}` into `out`; returns the number of
/// sites where `out` differs from `sigma`.
///
/// A candidate with `m < 0` is replaced by its global flip. A candidate with
/// `m = 0` (even `n` only) is kept or flipped on a fair coin drawn from the
/// uniform at position `n` of the step's stream.
pub fn reflected_pca_step_into(
    model: &CouplingModel,
    inertia: Inertia,
    sigma: &[i8],
    out: &mut [i8],
    rng: &RngPolicy,
    step: u64,
    workers: &Workers,
) -> Result<u64> {
    if spin_sum(sigma) < 0 {
        return Err(Error::InvalidState(
            "reflected dynamics requires a configuration with m >= 0".into(),
        ));
    }
    pca_step_into(model, inertia, sigma, out, rng, step, workers)?;
    let s = spin_sum(out);
    let negate = s < 0 || (s == 0 && rng.uniform(step, model.n()) <= 0.5);
    if negate {
        for x in out.iter_mut() {
            *x = -*x;
        }
    }
    Ok(sigma.iter().zip(out.iter()).filter(|(a, b)| a != b).count() as u64)
}

pub fn reflected_pca_step(
    model: &CouplingModel,
    inertia: Inertia,
    sigma: &SpinConfiguration,
    rng: &RngPolicy,
    step: u64,
) -> Result<SpinConfiguration> {
    model.check_config(sigma)?;
    let mut out = vec![0i8; sigma.len()];
    reflected_pca_step_into(model, inertia, sigma.spins(), &mut out, rng, step, &Workers::sequential())?;
    SpinConfiguration::new(out)
}

/// Two chains driven by the same uniforms, upper ⪰ lower componentwise.
#[derive(Clone, Debug)]
pub struct CoupledChains {
    pub upper: Vec<i8>,
    pub lower: Vec<i8>,
    scratch_upper: Vec<i8>,
    scratch_lower: Vec<i8>,
    check_order: bool,
}

impl CoupledChains {
    /// Fails when `upper ⪰ lower` does not hold. The order is re-checked after
    /// every step for ferromagnetic models, where the coupling guarantees it.
    pub fn new(model: &CouplingModel, upper: Vec<i8>, lower: Vec<i8>) -> Result<Self> {
        check_len(model, upper.len(), "upper chain")?;
        check_len(model, lower.len(), "lower chain")?;
        if upper.iter().zip(&lower).any(|(u, l)| u < l) {
            return Err(Error::invalid("coupled chains require upper ⪰ lower"));
        }
        let n = upper.len();
        Ok(Self {
            upper,
            lower,
            scratch_upper: vec![0; n],
            scratch_lower: vec![0; n],
            check_order: model.is_ferromagnetic(),
        })
    }

    /// Starts from all `+1` and all `-1`.
    pub fn extremal(model: &CouplingModel) -> Self {
        Self::new(model, vec![1; model.n()], vec![-1; model.n()]).expect("extremal states are ordered")
    }

    pub fn disagreements(&self) -> usize {
        self.upper.iter().zip(&self.lower).filter(|(a, b)| a != b).count()
    }

    /// Advances both chains; returns the number of disagreeing sites after the step.
    pub fn step(
        &mut self,
        model: &CouplingModel,
        inertia: Inertia,
        rng: &RngPolicy,
        step: u64,
        workers: &Workers,
    ) -> Result<u64> {
        let ln_delta = inertia.ln_delta();
        let upper = &self.upper;
        let lower = &self.lower;
        let fu: FieldEval<'_> = model.fields(upper);
        let fl: FieldEval<'_> = model.fields(lower);
        let tally = workers.chunks2(&mut self.scratch_upper, &mut self.scratch_lower, |start, cu, cl| {
            let mut stream = rng.site_stream(step, start);
            let (mut cu_cache, mut cl_cache) = (ProbCache::new(ln_delta), ProbCache::new(ln_delta));
            let mut diff = 0;
            let mut inverted = 0;
            for k in 0..cu.len() {
                let i = start + k;
                let u = stream.next_uniform();
                let a = if u <= cu_cache.prob_minus(fu.field(i), upper[i]) { -1 } else { 1 };
                let b = if u <= cl_cache.prob_minus(fl.field(i), lower[i]) { -1 } else { 1 };
                diff += (a != b) as u64;
                inverted += (a < b) as u64;
                cu[k] = a;
                cl[k] = b;
            }
            Tally { a: diff, b: inverted }
        });
        std::mem::swap(&mut self.upper, &mut self.scratch_upper);
        std::mem::swap(&mut self.lower, &mut self.scratch_lower);
        if self.check_order && tally.b > 0 {
            return Err(Error::InvalidState(format!(
                "monotone coupling lost its order at step {step} ({} sites)",
                tally.b
            )));
        }
        Ok(tally.a)
    }
}

/// One coupled step from `(σ⁺, σ⁻)`; returns the new pair.
pub fn coupled_pca_step(
    model: &CouplingModel,
    inertia: Inertia,
    sigma_plus: &SpinConfiguration,
    sigma_minus: &SpinConfiguration,
    rng: &RngPolicy,
    step: u64,
) -> Result<(SpinConfiguration, SpinConfiguration)> {
    let mut chains = CoupledChains::new(model, sigma_plus.spins().to_vec(), sigma_minus.spins().to_vec())?;
    chains.step(model, inertia, rng, step, &Workers::sequential())?;
    Ok((SpinConfiguration::new(chains.upper)?, SpinConfiguration::new(chains.lower)?))
}

/// First step count at which the coupled chains agree, or `None` if they
/// still differ after `max_steps`.
pub fn coalescence_time(
    model: &CouplingModel,
    inertia: Inertia,
    chains: &mut CoupledChains,
    rng: &RngPolicy,
    max_steps: u64,
    workers: &Workers,
) -> Result<Option<u64>> {
    if chains.disagreements() == 0 {
        return Ok(Some(0));
    }
    for t in 0..max_steps {
        if chains.step(model, inertia, rng, t, workers)? == 0 {
            return Ok(Some(t + 1));
        }
    }
    Ok(None)
}

/// `1 - 2δ(1 - J)`.
pub fn contraction_factor(j: f64, delta: f64) -> f64 {
    1.0 - 2.0 * delta * (1.0 - j)
}

/// `2n [1 - 2δ(1 - J)]^t`, the coupling bound on `P(τ_c > t)`.
pub fn coalescence_tail_bound(n: usize, j: f64, delta: f64, t: u64) -> f64 {
    2.0 * n as f64 * contraction_factor(j, delta).powf(t as f64)
}

/// Strength `J` entering the contraction factor. The kernel sees `2h_i`, so
/// this is `2 sup_i Σ_j |J_ij|`: the stated `J` for the half convention, `2J`
/// for the full one.
pub fn effective_coupling(model: &CouplingModel) -> f64 {
    use crate::model::Convention;
    match model.mean_field() {
        Some(mf) => match mf.convention {
            Convention::Half => mf.j,
            Convention::Full => 2.0 * mf.j,
        },
        None => 2.0 * model.sup_norm(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TailPoint {
    pub t: u64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalescenceReport {
    pub n: usize,
    pub delta: f64,
    pub j: f64,
    pub max_steps: u64,
    /// Per-trial `τ_c`; `None` when the chains had not met by `max_steps`.
    pub taus: Vec<Option<u64>>,
    pub median: Option<f64>,
    pub quantile_90: Option<f64>,
    pub mean: Option<f64>,
    pub censored: usize,
    /// `log(2n) / (2δ(1-J))` when `J < 1`.
    pub predicted_mixing: Option<f64>,
    pub tail: Vec<TailPoint>,
    pub ferromagnetic: bool,
    /// Set when the monotone sandwich does not apply.
    pub warning: Option<String>,
}

impl CoalescenceReport {
    /// Recorded times where the empirical tail exceeds the bound.
    pub fn tail_violations(&self) -> Vec<&TailPoint> {
        self.tail.iter().filter(|p| p.empirical > p.bound).collect()
    }
}

/// Empirical quantile with censored (`None`) samples sorted last; `None` if
/// the quantile falls among them.
fn quantile(sorted: &[Option<u64>], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let a = sorted[lo]? as f64;
    let b = sorted[hi]? as f64;
    Some(a + (pos - lo as f64) * (b - a))
}

/// Runs `trials` coupled pairs from all `+1` / all `-1`, trial `k` using
/// `rng.fork(k)`. Trials are spread over the workers; results are ordered by trial.
pub fn estimate_coalescence(
    model: &CouplingModel,
    inertia: Inertia,
    max_steps: u64,
    trials: u64,
    rng: &RngPolicy,
    workers: &Workers,
) -> Result<CoalescenceReport> {
    let ferromagnetic = model.is_ferromagnetic();
    let sequential = Workers::sequential();
    let taus: Vec<Option<u64>> = workers
        .map_indices(trials, |k| {
            let mut chains = CoupledChains::extremal(model);
            coalescence_time(model, inertia, &mut chains, &rng.fork(k), max_steps, &sequential)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let j = effective_coupling(model);
    let delta = inertia.delta();
    let mut sorted = taus.clone();
    sorted.sort_by_key(|t| t.unwrap_or(u64::MAX));
    let censored = taus.iter().filter(|t| t.is_none()).count();
    let finished: Vec<u64> = taus.iter().flatten().copied().collect();
    let mean = (censored == 0 && !finished.is_empty())
        .then(|| finished.iter().sum::<u64>() as f64 / finished.len() as f64);
    let horizon = if censored > 0 {
        max_steps
    } else {
        finished.iter().copied().max().unwrap_or(0)
    };
    let mut tail = Vec::with_capacity(horizon as usize + 1);
    let mut idx = 0;
    let ordered: Vec<u64> = sorted.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
    for t in 0..=horizon {
        while idx < ordered.len() && ordered[idx] <= t {
            idx += 1;
        }
        let exceed = (ordered.len() - idx) as f64 / ordered.len().max(1) as f64;
        tail.push(TailPoint {
            t,
            empirical: exceed,
            bound: coalescence_tail_bound(model.n(), j, delta, t),
        });
    }
    let warning = (!ferromagnetic).then(|| {
        "model has negative couplings: the coupling is not monotone and the tail bound does not apply"
            .to_string()
    });
    Ok(CoalescenceReport {
        n: model.n(),
        delta,
        j,
        max_steps,
        median: quantile(&sorted, 0.5),
        quantile_90: quantile(&sorted, 0.9),
        mean,
        censored,
        predicted_mixing: (j < 1.0 && delta > 0.0)
            .then(|| (2.0 * model.n() as f64).ln() / (2.0 * delta * (1.0 - j))),
        tail,
        ferromagnetic,
        warning,
        taus,
    })
}

/// Per-step observables recorded by [`run_chain`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub flips: u64,
    pub magnetization: f64,
    pub energy: f64,
    pub wall_ns: u64,
}

/// [`StepRecord`] without wall time: the reproducible part of a step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub flips: u64,
    pub magnetization: f64,
    pub energy: f64,
}

impl StepRow {
    pub const COLUMNS: &'static [&'static str] = &["step", "flips", "magnetization", "energy"];
}

impl StepRecord {
    pub const COLUMNS: &'static [&'static str] = &["step", "flips", "magnetization", "energy", "wall_ns"];
}

impl From<&StepRecord> for StepRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            flips: r.flips,
            magnetization: r.magnetization,
            energy: r.energy,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainStats {
    pub records: Vec<StepRecord>,
}

impl ChainStats {
    pub fn mean_flip_rate(&self, n: usize) -> Option<f64> {
        if self.records.is_empty() || n == 0 {
            return None;
        }
        let flips: u64 = self.records.iter().map(|r| r.flips).sum();
        Some(flips as f64 / (self.records.len() * n) as f64)
    }

    pub fn mean_magnetization(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        Some(self.records.iter().map(|r| r.magnetization).sum::<f64>() / self.records.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct ChainRun {
    pub stats: ChainStats,
    pub final_state: SpinConfiguration,
}

#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    pub kind: SamplerKind,
    pub inertia: Inertia,
    /// Total number of steps, including burn-in.
    pub steps: u64,
    /// Steps run before recording starts.
    pub burn_in: u64,
}

/// Runs a chain from `initial`. For `Gibbs`, one step is a sweep of `n`
/// single-site updates (sub-update `k` of step `t` uses counter `t·n + k`),
/// so a step touches `n` sites for every sampler kind.
///
/// `observe` sees every recorded step together with the state after it.
pub fn run_chain(
    model: &CouplingModel,
    options: ChainOptions,
    initial: SpinConfiguration,
    rng: &RngPolicy,
    workers: &Workers,
    mut observe: impl FnMut(&StepRecord, &[i8]),
) -> Result<ChainRun> {
    model.check_config(&initial)?;
    if options.steps < options.burn_in {
        return Err(Error::invalid(format!(
            "steps ({}) must be >= burn-in ({})",
            options.steps, options.burn_in
        )));
    }
    let n = model.n();
    let mut state = initial.into_inner();
    let mut next = vec![0i8; n];
    let mut stats = ChainStats {
        records: Vec::with_capacity((options.steps - options.burn_in) as usize),
    };
    for t in 0..options.steps {
        let start = Instant::now();
        let flips = match options.kind {
            SamplerKind::Pca => {
                let f = pca_step_into(model, options.inertia, &state, &mut next, rng, t, workers)?;
                std::mem::swap(&mut state, &mut next);
                f
            }
            SamplerKind::ReflectedPca => {
                let f = reflected_pca_step_into(model, options.inertia, &state, &mut next, rng, t, workers)?;
                std::mem::swap(&mut state, &mut next);
                f
            }
            SamplerKind::Gibbs => {
                let mut f = 0;
                for k in 0..n as u64 {
                    let (_, flipped) = gibbs_step_in_place(model, &mut state, rng, t * n as u64 + k)?;
                    f += flipped as u64;
                }
                f
            }
        };
        let wall_ns = start.elapsed().as_nanos() as u64;
        if t >= options.burn_in {
            let record = StepRecord {
                step: t,
                flips,
                magnetization: magnetization(&state),
                energy: model.hamiltonian_raw(&state),
                wall_ns,
            };
            observe(&record, &state);
            stats.records.push(record);
        }
    }
    Ok(ChainRun {
        stats,
        final_state: SpinConfiguration::new(state)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{enumerate_pca, pca_transition_matrix};
    use crate::generators::{curie_weiss, lattice2d, random_couplings};
    use crate::model::Convention;

    fn delta(d: f64) -> Inertia {
        Inertia::from_delta(d).unwrap()
    }

    #[test]
    fn single_site_forms_agree() {
        for seed in 0..20 {
            let m = random_couplings(6, 0.6, 0.8, false, seed).unwrap();
            let q = 0.1 + seed as f64 * 0.15;
            let inertia = Inertia::from_q(q).unwrap();
            for idx in [0u64, 7, 21, 63] {
                let s = SpinConfiguration::from_index(6, idx);
                for i in 0..6 {
                    let h = m.local_field(&s, i).unwrap();
                    let si = s.get(i) as f64;
                    let direct = (-h + q * si).exp() / (2.0 * (h - q * si).cosh());
                    let p = pca_single_site_probability(&m, &s, i, inertia).unwrap();
                    assert!((p - direct).abs() < 1e-12);
                    let flip = pca_flip_probability(&m, &s, i, inertia).unwrap();
                    let p_flip = if si > 0.0 { 1.0 - p } else { p };
                    assert!((flip - p_flip).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_site_trivial_cases() {
        let free = CouplingModel::free(3);
        let up = SpinConfiguration::all_up(3);
        let d = 0.2;
        let flip = pca_flip_probability(&free, &up, 0, delta(d)).unwrap();
        assert!((flip - d / 1.2).abs() < 1e-15);
        let p = pca_single_site_probability(&free, &up, 1, Inertia::from_q(0.0).unwrap()).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let frozen = pca_single_site_probability(&free, &up, 1, delta(0.0)).unwrap();
        assert_eq!(frozen, 1.0);
    }

    #[test]
    fn kernel_rows_factorize() {
        let m = random_couplings(5, 0.8, 0.7, false, 9).unwrap();
        let inertia = delta(0.3);
        let p = pca_transition_matrix(&m, inertia).unwrap();
        for s in 0..32u64 {
            let sigma = SpinConfiguration::from_index(5, s);
            let plus: Vec<f64> = (0..5)
                .map(|i| pca_single_site_probability(&m, &sigma, i, inertia).unwrap())
                .collect();
            for t in 0..32u64 {
                let tau = SpinConfiguration::from_index(5, t);
                let prod: f64 = (0..5)
                    .map(|i| if tau.get(i) > 0 { plus[i] } else { 1.0 - plus[i] })
                    .product();
                assert!((prod - p.get(s, t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_step_is_pure_and_chunk_independent() {
        let m = lattice2d(100, 0.3, true).unwrap();
        let inertia = delta(0.2);
        let rng = RngPolicy::new(11);
        let s = SpinConfiguration::new((0..m.n()).map(|i| if (i * 7919) % 13 < 6 { 1 } else { -1 }).collect()).unwrap();
        let a = pca_step(&m, inertia, &s, &rng, 5).unwrap();
        let b = pca_step(&m, inertia, &s, &rng, 5).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.flips, b.flips);
        let mut out = vec![0i8; m.n()];
        let flips = pca_step_into(&m, inertia, s.spins(), &mut out, &rng, 5, &Workers::new(3).unwrap()).unwrap();
        assert_eq!(out, a.state.spins());
        assert_eq!(flips, a.flips);
        // site-by-site recomputation with one stream per site
        let fields = m.fields(s.spins());
        for i in (0..m.n()).step_by(997) {
            let p = pca_prob_minus(fields.field(i), s.get(i), inertia.ln_delta());
            let expected = if rng.uniform(5, i) <= p { -1 } else { 1 };
            assert_eq!(out[i], expected);
        }
    }

    #[test]
    fn frozen_chain_never_moves() {
        let m = random_couplings(8, 1.0, 1.0, false, 1).unwrap();
        let s = SpinConfiguration::from_index(8, 0b1011_0110);
        let r = pca_step(&m, delta(0.0), &s, &RngPolicy::new(0), 0).unwrap();
        assert_eq!(r.state, s);
        assert_eq!(r.flips, 0);
        let r = pca_step(&m, delta(1e-12), &s, &RngPolicy::new(0), 0).unwrap();
        assert_eq!(r.state, s);
    }

    #[test]
    fn free_flip_rate_matches() {
        let n = 1000;
        let m = CouplingModel::free(n);
        let d = 0.1;
        let opts = ChainOptions {
            kind: SamplerKind::Pca,
            inertia: delta(d),
            steps: 200,
            burn_in: 0,
        };
        let run = run_chain(&m, opts, SpinConfiguration::all_up(n), &RngPolicy::new(4), &Workers::sequential(), |_, _| {}).unwrap();
        let p = d / (1.0 + d);
        let rate = run.stats.mean_flip_rate(n).unwrap();
        let se = (p * (1.0 - p) / (200.0 * n as f64)).sqrt();
        assert!((rate - p).abs() < 4.0 * se, "{rate} vs {p}");
    }

    #[test]
    fn expected_flips_conditional_monte_carlo() {
        let m = random_couplings(6, 0.8, 0.5, false, 3).unwrap();
        let inertia = delta(0.3);
        let s = SpinConfiguration::from_index(6, 0b101100);
        let expected = expected_flips(&m, &s, inertia).unwrap();
        let rng = RngPolicy::new(8);
        let trials = 100_000u64;
        let mut out = vec![0i8; 6];
        let total: u64 = (0..trials)
            .map(|t| pca_step_into(&m, inertia, s.spins(), &mut out, &rng, t, &Workers::sequential()).unwrap())
            .sum();
        let mean = total as f64 / trials as f64;
        // variance per step <= 6·¼
        let se = (1.5 / trials as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn gibbs_free_and_single_site() {
        let m = CouplingModel::free(1);
        let rng = RngPolicy::new(2);
        let mut s = vec![1i8];
        let mut ups = 0;
        let trials = 40_000;
        for t in 0..trials {
            gibbs_step_in_place(&m, &mut s, &rng, t).unwrap();
            ups += (s[0] == 1) as u64;
        }
        let frac = ups as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / trials as f64).sqrt());
        let sigma = SpinConfiguration::all_up(5);
        let next = gibbs_step(&lattice2d(2, 0.3, false).unwrap().scaled(0.0), &SpinConfiguration::all_up(4), &rng, 0).unwrap();
        assert!(next.hamming(&SpinConfiguration::all_up(4)) <= 1);
        assert!(gibbs_step(&m, &sigma, &rng, 0).is_err());
    }

    #[test]
    fn reflected_stays_nonnegative() {
        let m = curie_weiss(6, 1.5, Convention::Full).unwrap();
        let rng = RngPolicy::new(13);
        let mut s = SpinConfiguration::all_up(6);
        for t in 0..2000 {
            s = reflected_pca_step(&m, delta(0.4), &s, &rng, t).unwrap();
            assert!(s.sum() >= 0);
        }
        let bad = SpinConfiguration::all_down(6);
        assert!(matches!(
            reflected_pca_step(&m, delta(0.4), &bad, &rng, 0),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn reflected_zero_magnetization_candidates_are_not_forced() {
        // q = 0 on a free model: every candidate is uniform; among those with
        // m = 0 both σ' and -σ' (also m = 0) should appear, each about half the time.
        let m = CouplingModel::free(2);
        let rng = RngPolicy::new(5);
        let start = SpinConfiguration::all_up(2);
        let mut kept = 0;
        let mut zero = 0;
        let mut out = vec![0i8; 2];
        for t in 0..20_000 {
            pca_step_into(&m, delta(1.0), start.spins(), &mut out, &rng, t, &Workers::sequential()).unwrap();
            if spin_sum(&out) != 0 {
                continue;
            }
            zero += 1;
            let candidate = out.clone();
            let r = reflected_pca_step(&m, delta(1.0), &start, &rng, t).unwrap();
            assert_eq!(r.sum(), 0);
            kept += (r.spins() == candidate.as_slice()) as u64;
        }
        let frac = kept as f64 / zero as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / zero as f64).sqrt());
    }

    #[test]
    fn coupling_is_sticky_and_checks_order() {
        let m = lattice2d(4, 0.3, true).unwrap();
        let rng = RngPolicy::new(1);
        let s = SpinConfiguration::from_index(16, 0x1234);
        let (a, b) = coupled_pca_step(&m, delta(0.3), &s, &s, &rng, 0).unwrap();
        assert_eq!(a, b);
        let up = SpinConfiguration::all_up(16);
        let down = SpinConfiguration::all_down(16);
        assert!(coupled_pca_step(&m, delta(0.3), &down, &up, &rng, 0).is_err());
        let mut chains = CoupledChains::extremal(&m);
        assert_eq!(coalescence_time(&m, delta(0.3), &mut CoupledChains::new(&m, vec![1; 16], vec![1; 16]).unwrap(), &rng, 10, &Workers::sequential()).unwrap(), Some(0));
        for t in 0..500 {
            chains.step(&m, delta(0.3), &rng, t, &Workers::sequential()).unwrap();
            assert!(chains.upper.iter().zip(&chains.lower).all(|(u, l)| u >= l));
        }
    }

    #[test]
    fn coupled_marginals_are_pca_steps() {
        let m = lattice2d(3, 0.2, true).unwrap();
        let rng = RngPolicy::new(77);
        let up = SpinConfiguration::all_up(9);
        let down = SpinConfiguration::all_down(9);
        for t in 0..50 {
            let (a, b) = coupled_pca_step(&m, delta(0.2), &up, &down, &rng, t).unwrap();
            assert_eq!(a, pca_step(&m, delta(0.2), &up, &rng, t).unwrap().state);
            assert_eq!(b, pca_step(&m, delta(0.2), &down, &rng, t).unwrap().state);
        }
    }

    #[test]
    fn free_coupling_contracts_by_threshold_gap() {
        let n = 2000;
        let m = CouplingModel::free(n);
        let d = 0.2;
        let rng = RngPolicy::new(6);
        let mut chains = CoupledChains::extremal(&m);
        let diff = chains.step(&m, delta(d), &rng, 0, &Workers::sequential()).unwrap() as f64;
        let p = (1.0 - d) / (1.0 + d);
        let se = (p * (1.0 - p) / n as f64).sqrt() * n as f64;
        assert!((diff - p * n as f64).abs() < 4.0 * se);
    }

    #[test]
    fn single_site_coalescence_is_geometric() {
        // n = 1, free: the chains meet at each step with probability 2δ/(1+δ)
        let m = CouplingModel::free(1);
        let d = 0.25;
        let report = estimate_coalescence(&m, delta(d), 10_000, 20_000, &RngPolicy::new(3), &Workers::sequential()).unwrap();
        let p = 2.0 * d / (1.0 + d);
        let mean = report.mean.unwrap();
        let sd = ((1.0 - p) / (p * p) / 20_000.0).sqrt();
        assert!((mean - 1.0 / p).abs() < 4.0 * sd, "{mean} vs {}", 1.0 / p);
        assert_eq!(report.censored, 0);
        assert!(report.ferromagnetic);
        let at3 = report.tail.iter().find(|x| x.t == 3).unwrap().empirical;
        assert!((at3 - (1.0 - p).powi(3)).abs() < 0.02);
    }

    #[test]
    fn effective_coupling_tracks_the_kernel_field() {
        assert_eq!(effective_coupling(&curie_weiss(50, 0.4, Convention::Half).unwrap()), 0.4);
        assert_eq!(effective_coupling(&curie_weiss(50, 0.4, Convention::Full).unwrap()), 0.8);
        let lat = lattice2d(4, 0.1, true).unwrap();
        assert!((effective_coupling(&lat) - 0.8).abs() < 1e-15);
        assert_eq!(effective_coupling(&CouplingModel::free(3)), 0.0);
    }

    #[test]
    fn coalescence_flags_antiferromagnets() {
        let m = CouplingModel::from_pairs(3, "af", [(0, 1, -0.2), (1, 2, 0.1)]).unwrap();
        let r = estimate_coalescence(&m, delta(0.3), 200, 10, &RngPolicy::new(1), &Workers::sequential()).unwrap();
        assert!(!r.ferromagnetic);
        assert!(r.warning.is_some());
        assert_eq!(r.taus.len(), 10);
    }

    #[test]
    fn run_chain_basics() {
        let m = lattice2d(3, 0.2, true).unwrap();
        let rng = RngPolicy::new(9);
        let start = SpinConfiguration::all_up(9);
        let opts = |steps, burn_in| ChainOptions {
            kind: SamplerKind::Pca,
            inertia: delta(0.2),
            steps,
            burn_in,
        };
        let empty = run_chain(&m, opts(0, 0), start.clone(), &rng, &Workers::sequential(), |_, _| {}).unwrap();
        assert!(empty.stats.records.is_empty());
        assert_eq!(empty.final_state, start);
        let a = run_chain(&m, opts(50, 10), start.clone(), &rng, &Workers::sequential(), |_, _| {}).unwrap();
        let b = run_chain(&m, opts(50, 10), start.clone(), &rng, &Workers::sequential(), |_, _| {}).unwrap();
        assert_eq!(a.stats.records.len(), 40);
        assert_eq!(a.final_state, b.final_state);
        for (x, y) in a.stats.records.iter().zip(&b.stats.records) {
            assert_eq!((x.step, x.flips, x.magnetization, x.energy), (y.step, y.flips, y.magnetization, y.energy));
            assert!(x.flips <= 9 && x.magnetization.abs() <= 1.0);
        }
        assert!(run_chain(&m, opts(5, 10), start, &rng, &Workers::sequential(), |_, _| {}).is_err());
    }

    #[test]
    fn gibbs_chain_tracks_stationary_law() {
        let m = random_couplings(3, 1.0, 0.5, false, 12).unwrap();
        let exact = crate::exact::enumerate_gibbs(&m).unwrap();
        let mut counts = [0u64; 8];
        let opts = ChainOptions {
            kind: SamplerKind::Gibbs,
            inertia: delta(0.0),
            steps: 100_000,
            burn_in: 100,
        };
        run_chain(&m, opts, SpinConfiguration::all_up(3), &RngPolicy::new(21), &Workers::sequential(), |_, s| {
            counts[crate::model::spins_to_index(s) as usize] += 1;
        })
        .unwrap();
        let total: u64 = counts.iter().sum();
        let tv: f64 = 0.5
            * counts
                .iter()
                .zip(exact.probs())
                .map(|(&c, p)| (c as f64 / total as f64 - p).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "tv {tv}");
        let pca = enumerate_pca(&m, delta(0.2)).unwrap();
        assert!((pca.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_kind_round_trip() {
        for k in [SamplerKind::Pca, SamplerKind::Gibbs, SamplerKind::ReflectedPca] {
            assert_eq!(k.to_string().parse::<SamplerKind>().unwrap(), k);
        }
        assert!("metropolis".parse::<SamplerKind>().is_err());
    }
}
