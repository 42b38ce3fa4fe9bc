//! wasm-bindgen surface for the static page in `www/`.

use pca_gibbs::curie_weiss::{magnetization_law, CwSpec};
use pca_gibbs::exact::{delta_ratio, tv_distance, Enumerator};
use pca_gibbs::generators::lattice;
use pca_gibbs::model::magnetization;
use pca_gibbs::rng::RngPolicy;
use pca_gibbs::samplers::{gibbs_step_in_place, pca_step_into, Workers};
use pca_gibbs::{Convention, CouplingModel, Inertia, Measure};
use wasm_bindgen::prelude::*;

/// Largest lattice the exact panel will enumerate.
pub const MAX_EXACT_SITES: usize = 16;

fn js(e: pca_gibbs::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Periodic square lattice driven by the PCA or single-site Gibbs sampler.
#[wasm_bindgen]
pub struct LatticeDemo {
    model: CouplingModel,
    inertia: Inertia,
    rng: RngPolicy,
    gibbs: bool,
    state: Vec<i8>,
    next: Vec<i8>,
    t: u64,
    last_flips: u64,
}

#[wasm_bindgen]
impl LatticeDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize, j0: f64, delta: f64, seed: u64, gibbs: bool) -> Result<LatticeDemo, JsError> {
        let model = lattice(side, side, j0, true).map_err(js)?;
        let inertia = Inertia::from_delta(delta).map_err(js)?;
        let rng = RngPolicy::new(seed);
        let init = rng.fork(u64::MAX);
        let state = (0..model.n())
            .map(|i| if init.uniform(0, i) <= 0.5 { -1 } else { 1 })
            .collect();
        Ok(LatticeDemo {
            next: vec![0; model.n()],
            model,
            inertia,
            rng,
            gibbs,
            state,
            t: 0,
            last_flips: 0,
        })
    }

    /// Advances `count` steps (a Gibbs step is one sweep); returns the flips
    /// in the last of them.
    pub fn step(&mut self, count: u32) -> Result<u32, JsError> {
        let n = self.model.n() as u64;
        let workers = Workers::sequential();
        for _ in 0..count {
            self.last_flips = if self.gibbs {
                let mut f = 0;
                for k in 0..n {
                    let (_, flipped) =
                        gibbs_step_in_place(&self.model, &mut self.state, &self.rng, self.t * n + k).map_err(js)?;
                    f += flipped as u64;
                }
                f
            } else {
                let f = pca_step_into(
                    &self.model,
                    self.inertia,
                    &self.state,
                    &mut self.next,
                    &self.rng,
                    self.t,
                    &workers,
                )
                .map_err(js)?;
                std::mem::swap(&mut self.state, &mut self.next);
                f
            };
            self.t += 1;
        }
        Ok(self.last_flips as u32)
    }

    pub fn spins(&self) -> Vec<i8> {
        self.state.clone()
    }

    pub fn magnetization(&self) -> f64 {
        magnetization(&self.state)
    }

    pub fn flips(&self) -> u32 {
        self.last_flips as u32
    }

    pub fn time(&self) -> f64 {
        self.t as f64
    }
}

/// Exact `TV(π^PCA, π^G)` and its bound `sqrt(Δ(δ))` on an open `lx × ly`
/// lattice, flattened as `[tv_0, bound_0, tv_1, bound_1, ...]`.
#[wasm_bindgen]
pub fn tv_curve(lx: usize, ly: usize, j0: f64, deltas: Vec<f64>) -> Result<Vec<f64>, JsError> {
    if lx * ly > MAX_EXACT_SITES {
        return Err(JsError::new(&format!("at most {MAX_EXACT_SITES} sites for exact enumeration")));
    }
    let model = lattice(lx, ly, j0, false).map_err(js)?;
    let exact = Enumerator::default();
    let gibbs = exact.gibbs(&model).map_err(js)?;
    let mut out = Vec::with_capacity(2 * deltas.len());
    for d in deltas {
        let inertia = Inertia::from_delta(d).map_err(js)?;
        let pca = exact.pca(&model, inertia).map_err(js)?;
        out.push(tv_distance(&pca, &gibbs).map_err(js)?);
        out.push(delta_ratio(&model, inertia).map_err(js)?.sqrt());
    }
    Ok(out)
}

/// Laws of the magnetization on `k = 0..=n` up spins for the Curie-Weiss
/// model, flattened as `[gibbs.., pca.., tilde..]`, each of length `n + 1`.
#[wasm_bindgen]
pub fn cw_laws(n: usize, j: f64, delta: f64, full: bool) -> Result<Vec<f64>, JsError> {
    let convention = if full { Convention::Full } else { Convention::Half };
    let spec = CwSpec::new(n, j, convention, Inertia::from_delta(delta).map_err(js)?).map_err(js)?;
    Ok([Measure::Gibbs, Measure::Pca, Measure::Tilde]
        .into_iter()
        .flat_map(|m| magnetization_law(&spec, m).probs)
        .collect())
}
