//! Brute-force oracles written directly from the definitions, independent of
//! the enumeration code paths in the library.

use pca_gibbs::curie_weiss::{delta_ratio_cw, magnetization_law, CwSpec};
use pca_gibbs::exact::{
    delta_ratio, enumerate_gibbs, enumerate_pca, enumerate_tilde, pca_transition_matrix, Enumerator,
};
use pca_gibbs::generators::{curie_weiss, lattice2d, random_couplings};
use pca_gibbs::{Convention, CouplingModel, Inertia, Measure};

fn spins(n: usize, index: usize) -> Vec<f64> {
    (0..n).map(|i| if index >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

fn energy(m: &CouplingModel, s: &[f64]) -> f64 {
    let n = s.len();
    let mut h = 0.0;
    for i in 0..n {
        for j in 0..n {
            h -= m.coupling(i, j) * s[i] * s[j];
        }
    }
    h
}

fn field(m: &CouplingModel, s: &[f64], i: usize) -> f64 {
    -(0..s.len()).map(|j| m.coupling(i, j) * s[j]).sum::<f64>()
}

/// `exp(-Σ h_i(σ)σ'_i) · δ^{#{i: σ_i ≠ σ'_i}}`, with `δ = e^{-2q}`.
fn pair_weight(m: &CouplingModel, s: &[f64], t: &[f64], delta: f64) -> f64 {
    let e: f64 = (0..s.len()).map(|i| field(m, s, i) * t[i]).sum();
    let differing = (0..s.len()).filter(|&i| s[i] != t[i]).count() as i32;
    (-e).exp() * delta.powi(differing)
}

fn normalise(w: Vec<f64>) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn f_factor(m: &CouplingModel, s: &[f64], delta: f64) -> f64 {
    (0..s.len())
        .map(|i| 1.0 + delta * (2.0 * field(m, s, i) * s[i]).exp())
        .product()
}

fn test_models() -> Vec<CouplingModel> {
    vec![
        lattice2d(2, 0.3, true).unwrap(),
        random_couplings(5, 0.7, 0.6, false, 3).unwrap(),
        random_couplings(6, 0.5, 0.4, true, 4).unwrap(),
        curie_weiss(5, 0.8, Convention::Full).unwrap(),
    ]
}

#[test]
fn gibbs_matches_boltzmann_weights() {
    for m in test_models() {
        let n = m.n();
        let oracle = normalise((0..1 << n).map(|x| (-energy(&m, &spins(n, x))).exp()).collect());
        let dist = enumerate_gibbs(&m).unwrap();
        for (x, p) in oracle.iter().enumerate() {
            assert!((dist.prob(x as u64) - p).abs() < 1e-13, "{} state {x}", m.name());
        }
    }
}

#[test]
fn pca_stationary_law_is_the_pair_marginal() {
    for m in test_models() {
        let n = m.n();
        for d in [0.0, 0.05, 0.7] {
            let inertia = Inertia::from_delta(d).unwrap();
            let oracle = normalise(
                (0..1 << n)
                    .map(|x| {
                        let s = spins(n, x);
                        (0..1 << n).map(|y| pair_weight(&m, &s, &spins(n, y), d)).sum()
                    })
                    .collect(),
            );
            let dist = enumerate_pca(&m, inertia).unwrap();
            for (x, p) in oracle.iter().enumerate() {
                assert!((dist.prob(x as u64) - p).abs() < 1e-12, "{} δ={d} state {x}", m.name());
            }
        }
    }
}

#[test]
fn tilted_measures_follow_powers_of_f() {
    for m in test_models() {
        let n = m.n();
        let d = 0.2;
        let inertia = Inertia::from_delta(d).unwrap();
        let weights = |k: i32| -> Vec<f64> {
            normalise(
                (0..1 << n)
                    .map(|x| {
                        let s = spins(n, x);
                        (-energy(&m, &s)).exp() * f_factor(&m, &s, d).powi(k)
                    })
                    .collect(),
            )
        };
        let pca = enumerate_pca(&m, inertia).unwrap();
        let tilde = enumerate_tilde(&m, inertia).unwrap();
        for (x, (a, b)) in weights(1).iter().zip(weights(2)).enumerate() {
            assert!((pca.prob(x as u64) - a).abs() < 1e-12);
            assert!((tilde.prob(x as u64) - b).abs() < 1e-12);
        }
    }
}

#[test]
fn transition_matrix_is_normalised_pair_weight() {
    let m = random_couplings(5, 0.8, 0.7, false, 11).unwrap();
    let n = m.n();
    let inertia = Inertia::from_q(0.9).unwrap();
    let p = pca_transition_matrix(&m, inertia).unwrap();
    for x in 0..1usize << n {
        let s = spins(n, x);
        let row: Vec<f64> = normalise((0..1 << n).map(|y| pair_weight(&m, &s, &spins(n, y), inertia.delta())).collect());
        for (y, v) in row.iter().enumerate() {
            assert!((p.get(x as u64, y as u64) - v).abs() < 1e-13);
        }
    }
}

#[test]
fn delta_ratio_matches_moment_definition() {
    for m in test_models() {
        let n = m.n();
        for d in [0.01, 0.3] {
            let mut z = 0.0;
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            for x in 0..1 << n {
                let s = spins(n, x);
                let w = (-energy(&m, &s)).exp();
                let f = f_factor(&m, &s, d);
                z += w;
                f1 += w * f;
                f2 += w * f * f;
            }
            let oracle = f2 * z / (f1 * f1) - 1.0;
            let got = delta_ratio(&m, Inertia::from_delta(d).unwrap()).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.max(1e-6), "{} δ={d}: {got} vs {oracle}", m.name());
        }
    }
}

#[test]
fn curie_weiss_law_matches_enumeration() {
    for convention in [Convention::Full, Convention::Half] {
        for measure in [Measure::Gibbs, Measure::Pca, Measure::Tilde] {
            let n = 9;
            let inertia = Inertia::from_delta(0.15).unwrap();
            let spec = CwSpec::new(n, 0.7, convention, inertia).unwrap();
            let law = magnetization_law(&spec, measure);
            let m = curie_weiss(n, 0.7, convention).unwrap();
            let dist = Enumerator::default().measure(&m, measure, inertia).unwrap();
            let by_count = dist.up_count_law();
            for (k, p) in by_count.iter().enumerate() {
                assert!((law.probs[k] - p).abs() < 1e-12, "{convention:?} {measure:?} k={k}");
            }
        }
    }
}

#[test]
fn curie_weiss_delta_ratio_matches_enumeration() {
    let inertia = Inertia::from_delta(0.05).unwrap();
    for convention in [Convention::Full, Convention::Half] {
        let spec = CwSpec::new(10, 0.5, convention, inertia).unwrap();
        let m = curie_weiss(10, 0.5, convention).unwrap();
        let exact = delta_ratio(&m, inertia).unwrap();
        let cw = delta_ratio_cw(&spec).computed;
        assert!((cw - exact).abs() < 1e-10 * exact, "{convention:?}: {cw} vs {exact}");
    }
}
