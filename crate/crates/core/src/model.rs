//! Problem instances and the pointwise energy, field and weight evaluations
//! every other module builds on.
//!
//! Conventions used throughout the crate:
//!
//! * `H(σ) = -Σ_{i≠j} J_ij σ_i σ_j`, both orderings of each pair counted.
//! * `h_i(σ) = -Σ_j J_ij σ_j`, so that `H(σ) = Σ_i h_i(σ) σ_i`.
//! * `φ_i(σ) = exp(2 h_i(σ) σ_i)` and `f(σ) = Π_i (1 + δ φ_i(σ))`.
//!
//! Weights are only ever handled through their logarithms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log1p_delta_exp;

/// Spin configuration in `{-1, +1}^n`.
///
/// Index `k` of a configuration in exhaustive enumerations is the bitmask with
/// bit `i` set iff `σ_i = +1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration(Vec<i8>);

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!(
                "spin {pos} has value {}, expected -1 or +1",
                spins[pos]
            )));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn all_down(n: usize) -> Self {
        Self(vec![-1; n])
    }

    pub fn from_index(n: usize, index: u64) -> Self {
        let mut spins = vec![0i8; n];
        fill_from_index(index, &mut spins);
        Self(spins)
    }

    pub fn to_index(&self) -> u64 {
        spins_to_index(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    /// Configuration with site `i` flipped (`σ^i`).
    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.0[i] = -out.0[i];
        out
    }

    /// Global spin flip `-σ`.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&s| -s).collect())
    }

    pub fn sum(&self) -> i64 {
        spin_sum(&self.0)
    }

    pub fn magnetization(&self) -> f64 {
        magnetization(&self.0)
    }

    /// Componentwise order `self ⪰ other`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Debug for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect();
        write!(f, "SpinConfiguration({s})")
    }
}

pub(crate) fn fill_from_index(index: u64, spins: &mut [i8]) {
    for (i, s) in spins.iter_mut().enumerate() {
        *s = if (index >> i) & 1 == 1 { 1 } else { -1 };
    }
}

pub(crate) fn spins_to_index(spins: &[i8]) -> u64 {
    spins
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .fold(0u64, |acc, (i, _)| acc | (1 << i))
}

pub(crate) fn spin_sum(spins: &[i8]) -> i64 {
    spins.iter().map(|&s| s as i64).sum()
}

/// `(1/n) Σ σ_i`; zero for an empty configuration.
pub fn magnetization(spins: &[i8]) -> f64 {
    if spins.is_empty() {
        0.0
    } else {
        spin_sum(spins) as f64 / spins.len() as f64
    }
}

/// Inertia `q >= 0` together with the flip density `δ = e^{-2q}`.
///
/// `δ = 0` corresponds to `q = +∞` (the chain never moves).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inertia {
    q: f64,
    delta: f64,
}

impl Inertia {
    pub fn from_q(q: f64) -> Result<Self> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::invalid(format!("q must be >= 0, got {q}")));
        }
        Ok(Self {
            q,
            delta: (-2.0 * q).exp(),
        })
    }

    pub fn from_delta(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self {
            q: -0.5 * delta.ln(),
            delta,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ln δ = -2q`, `-inf` when `δ = 0`.
    pub fn ln_delta(&self) -> f64 {
        -2.0 * self.q
    }
}

/// Field normalisation of the mean-field model: `J_ij = J/(2n)` or `J_ij = J/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `J_ij = J/(2n)`: single-site field ≈ `-J m / 2`.
    Half,
    /// `J_ij = J/n`: single-site field ≈ `-J m`.
    Full,
}

impl Convention {
    pub fn pair_coupling(self, n: usize, j: f64) -> f64 {
        match self {
            Convention::Half => j / (2.0 * n as f64),
            Convention::Full => j / n as f64,
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(Convention::Half),
            "full" => Ok(Convention::Full),
            other => Err(Error::invalid(format!(
                "unknown convention '{other}', expected half or full"
            ))),
        }
    }
}

/// Which probability on `{-1,+1}^V` is meant: `π^G ∝ e^{-H}`, `π^PCA ∝ e^{-H} f`
/// or `π̃ ∝ e^{-H} f²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Gibbs,
    Pca,
    Tilde,
}

impl Measure {
    /// Power `k` of `f` in the density `e^{-H} f^k`.
    pub fn tilt_power(self) -> f64 {
        match self {
            Measure::Gibbs => 0.0,
            Measure::Pca => 1.0,
            Measure::Tilde => 2.0,
        }
    }
}

/// Metadata kept for Curie-Weiss instances so callers can recover `J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub j: f64,
    pub convention: Convention,
}

/// Row-compressed adjacency: row `i` is `entries[offsets[i]..offsets[i + 1]]`.
#[derive(Clone, Debug)]
struct Csr {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut entries = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            entries.extend(row);
            offsets.push(entries.len());
        }
        Self { offsets, entries }
    }

    #[inline]
    fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Clone, Debug)]
enum Couplings {
    /// Sorted adjacency lists, mirrored so both `(i,j)` and `(j,i)` are present.
    Sparse(Csr),
    /// `J_ij = value` for every `i ≠ j`.
    Uniform(f64),
}

/// A finite volume with a symmetric, zero-diagonal coupling matrix.
#[derive(Clone, Debug)]
pub struct CouplingModel {
    n: usize,
    couplings: Couplings,
    row_norms: Vec<f64>,
    sup_norm: f64,
    name: String,
    mean_field: Option<MeanField>,
}

impl CouplingModel {
    /// Builds a model from undirected pairs `(i, j, J_ij)`.
    ///
    /// Repeated pairs accumulate (a periodic lattice of side 2 has a doubled bond).
    /// Diagonal entries and out-of-range indices are rejected; zero couplings are dropped.
    pub fn from_pairs(
        n: usize,
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, value) in pairs {
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "coupling ({i}, {j}) out of range for {n} sites"
                )));
            }
            if i == j {
                return Err(Error::invalid(format!("diagonal coupling J_{i}{i} is not allowed")));
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!("coupling ({i}, {j}) is not finite")));
            }
            adjacency[i].push((j, value));
            adjacency[j].push((i, value));
        }
        for row in adjacency.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some((last, acc)) if *last == j => *acc += v,
                    _ => merged.push((j, v)),
                }
            }
            merged.retain(|&(_, v)| v != 0.0);
            *row = merged;
        }
        let row_norms: Vec<f64> = adjacency
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum())
            .collect();
        let sup_norm = row_norms.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            n,
            couplings: Couplings::Sparse(Csr::from_rows(adjacency)),
            row_norms,
            sup_norm,
            name: name.into(),
            mean_field: None,
        })
    }

    /// All-to-all model with the same coupling on every pair.
    pub fn uniform(n: usize, value: f64, name: impl Into<String>) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("uniform coupling must be finite"));
        }
        let row = value.abs() * n.saturating_sub(1) as f64;
        Ok(Self {
            n,
            couplings: Couplings::Uniform(value),
            row_norms: vec![row; n],
            sup_norm: if n > 0 { row } else { 0.0 },
            name: name.into(),
            mean_field: None,
        })
    }

    /// Zero-coupling (independent spins) model.
    pub fn free(n: usize) -> Self {
        Self::from_pairs(n, "free", std::iter::empty()).expect("empty model is valid")
    }

    pub(crate) fn with_mean_field(mut self, mean_field: MeanField) -> Self {
        self.mean_field = Some(mean_field);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mean_field(&self) -> Option<MeanField> {
        self.mean_field
    }

    /// `J = sup_i Σ_j |J_ij|`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `Σ_j |J_ij|` for one site.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row_norms[i]
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.couplings, Couplings::Uniform(_))
    }

    /// `J_ij`, zero when absent or on the diagonal.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.couplings {
            Couplings::Uniform(v) => *v,
            Couplings::Sparse(adj) => adj
                .row(i)
                .binary_search_by_key(&j, |&(k, _)| k)
                .map(|pos| adj.row(i)[pos].1)
                .unwrap_or(0.0),
        }
    }

    /// Nonzero couplings `(j, J_ij)` of site `i`, in increasing `j`.
    pub fn neighbors(&self, i: usize) -> Neighbors<'_> {
        match &self.couplings {
            Couplings::Sparse(adj) => Neighbors::Sparse(adj.row(i).iter()),
            Couplings::Uniform(v) => Neighbors::Uniform {
                skip: i,
                next: 0,
                n: self.n,
                value: *v,
            },
        }
    }

    /// Undirected pairs `(i, j, J_ij)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbors(i)
                    .filter(move |&(j, _)| j > i)
                    .map(move |(j, v)| (i, j, v))
            })
            .collect()
    }

    pub fn is_ferromagnetic(&self) -> bool {
        match &self.couplings {
            Couplings::Uniform(v) => *v >= 0.0,
            Couplings::Sparse(adj) => adj.entries.iter().all(|&(_, v)| v >= 0.0),
        }
    }

    /// Copy with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out.couplings {
            Couplings::Uniform(v) => *v *= factor,
            Couplings::Sparse(adj) => {
                for (_, v) in adj.entries.iter_mut() {
                    *v *= factor;
                }
            }
        }
        for r in out.row_norms.iter_mut() {
            *r *= factor.abs();
        }
        out.sup_norm *= factor.abs();
        out.mean_field = None;
        out
    }

    pub(crate) fn check_config(&self, sigma: &SpinConfiguration) -> Result<()> {
        if sigma.len() != self.n {
            return Err(Error::invalid(format!(
                "configuration has {} spins, model has {} sites",
                sigma.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_site(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::invalid(format!(
                "site index {i} out of range for {} sites",
                self.n
            )));
        }
        Ok(())
    }

    /// Field evaluator for one configuration. For uniform models this
    /// precomputes `Σσ` so each `field(i)` is O(1).
    pub fn fields<'a>(&'a self, spins: &'a [i8]) -> FieldEval<'a> {
        let sum = match self.couplings {
            Couplings::Uniform(_) => spin_sum(spins) as f64,
            Couplings::Sparse(_) => 0.0,
        };
        FieldEval {
            model: self,
            spins,
            sum,
        }
    }

    /// `H(σ) = -Σ_{i≠j} J_ij σ_i σ_j`.
    pub fn hamiltonian(&self, sigma: &SpinConfiguration) -> Result<f64> {
        self.check_config(sigma)?;
        Ok(self.hamiltonian_raw(sigma.spins()))
    }

    pub(crate) fn hamiltonian_raw(&self, spins: &[i8]) -> f64 {
        match self.couplings {
            Couplings::Uniform(v) => {
                let s = spin_sum(spins) as f64;
                -v * (s * s - spins.len() as f64)
            }
            Couplings::Sparse(ref adj) => {
                if adj.entries.is_empty() {
                    return 0.0;
                }
                let fields = self.fields(spins);
                (0..self.n).map(|i| fields.field(i) * spins[i] as f64).sum()
            }
        }
    }

    /// `h_i(σ) = -Σ_j J_ij σ_j`.
    pub fn local_field(&self, sigma: &SpinConfiguration, i: usize) -> Result<f64> {
        self.check_config(sigma)?;
        self.check_site(i)?;
        Ok(self.fields(sigma.spins()).field(i))
    }

    /// `φ_i(σ) = exp(2 h_i(σ) σ_i)`.
    pub fn phi(&self, sigma: &SpinConfiguration, i: usize) -> Result<f64> {
        let h = self.local_field(sigma, i)?;
        Ok((2.0 * h * sigma.get(i) as f64).exp())
    }

    /// `ln f(σ) = Σ_i ln(1 + δ φ_i(σ))`.
    pub fn log_f_factor(&self, sigma: &SpinConfiguration, inertia: Inertia) -> Result<f64> {
        self.check_config(sigma)?;
        Ok(self.log_f_raw(sigma.spins(), inertia.ln_delta()))
    }

    pub(crate) fn log_f_raw(&self, spins: &[i8], ln_delta: f64) -> f64 {
        let fields = self.fields(spins);
        (0..self.n)
            .map(|i| log1p_delta_exp(ln_delta, 2.0 * fields.field(i) * spins[i] as f64))
            .sum()
    }

    /// `H(σ,σ') = Σ_i [h_i(σ) σ'_i + q (1 - σ_i σ'_i)]`; `+inf` when `q = ∞`
    /// and the configurations differ.
    pub fn pair_hamiltonian(
        &self,
        sigma: &SpinConfiguration,
        sigma_prime: &SpinConfiguration,
        inertia: Inertia,
    ) -> Result<f64> {
        self.check_config(sigma)?;
        self.check_config(sigma_prime)?;
        let fields = self.fields(sigma.spins());
        let field_values: Vec<f64> = (0..self.n).map(|i| fields.field(i)).collect();
        Ok(pair_energy(
            &field_values,
            sigma.spins(),
            sigma_prime.spins(),
            inertia.q(),
        ))
    }
}

/// `Σ_i h_i σ'_i + 2q·#{i: σ_i ≠ σ'_i}` given precomputed fields of `σ`.
pub(crate) fn pair_energy(fields: &[f64], sigma: &[i8], sigma_prime: &[i8], q: f64) -> f64 {
    let mut energy = 0.0;
    let mut differing = 0usize;
    for ((&h, &s), &t) in fields.iter().zip(sigma).zip(sigma_prime) {
        energy += h * t as f64;
        if s != t {
            differing += 1;
        }
    }
    if differing > 0 {
        energy += 2.0 * q * differing as f64;
    }
    energy
}

/// Iterator over `(j, J_ij)`.
pub enum Neighbors<'a> {
    Sparse(std::slice::Iter<'a, (usize, f64)>),
    Uniform {
        skip: usize,
        next: usize,
        n: usize,
        value: f64,
    },
}

impl Iterator for Neighbors<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            Neighbors::Sparse(it) => it.next().copied(),
            Neighbors::Uniform {
                skip,
                next,
                n,
                value,
            } => {
                if *next == *skip {
                    *next += 1;
                }
                if *next >= *n || *value == 0.0 {
                    return None;
                }
                let j = *next;
                *next += 1;
                Some((j, *value))
            }
        }
    }
}

/// Evaluates `h_i(σ)` for a fixed configuration.
pub struct FieldEval<'a> {
    model: &'a CouplingModel,
    spins: &'a [i8],
    sum: f64,
}

impl FieldEval<'_> {
    #[inline]
    pub fn field(&self, i: usize) -> f64 {
        match &self.model.couplings {
            Couplings::Uniform(v) => -v * (self.sum - self.spins[i] as f64),
            Couplings::Sparse(adj) => -adj
                .row(i)
                .iter()
                .map(|&(j, v)| v * self.spins[j] as f64)
                .sum::<f64>(),
        }
    }
}
