//! Model generators and the edge-list file format.
//!
//! Edge-list format: UTF-8 text, one coupling per line as `i j J_ij` with 0-based
//! indices. `#` starts a comment. Each undirected pair is listed once; the loader
//! mirrors it to `(j, i)`. Listing the same pair twice with the same value is
//! tolerated, with different values it is an error.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Convention, CouplingModel, MeanField};

/// Declarative model description, used by configuration files and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        n: Option<usize>,
    },
    Lattice {
        lx: usize,
        ly: usize,
        j0: f64,
        #[serde(default)]
        periodic: bool,
    },
    PowerLaw1d {
        n: usize,
        j1: f64,
    },
    CurieWeiss {
        n: usize,
        j: f64,
        convention: Convention,
    },
    Random {
        n: usize,
        density: f64,
        max_abs: f64,
        #[serde(default)]
        ferromagnetic: bool,
        seed: u64,
    },
}

pub fn build_model(spec: &ModelSpec) -> Result<CouplingModel> {
    match spec {
        ModelSpec::EdgeList { path, n } => load_edge_list(path, *n),
        ModelSpec::Lattice {
            lx,
            ly,
            j0,
            periodic,
        } => lattice(*lx, *ly, *j0, *periodic),
        ModelSpec::PowerLaw1d { n, j1 } => power_law_1d(*n, *j1),
        ModelSpec::CurieWeiss { n, j, convention } => curie_weiss(*n, *j, *convention),
        ModelSpec::Random {
            n,
            density,
            max_abs,
            ferromagnetic,
            seed,
        } => random_couplings(*n, *density, *max_abs, *ferromagnetic, *seed),
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(format!("{name} must be positive, got {value}")));
    }
    Ok(())
}

/// `lx × ly` nearest-neighbour lattice; site `(x, y)` has index `y·lx + x`.
pub fn lattice(lx: usize, ly: usize, j0: f64, periodic: bool) -> Result<CouplingModel> {
    if lx == 0 || ly == 0 || lx * ly < 2 {
        return Err(Error::invalid("lattice needs at least two sites"));
    }
    require_positive("J0", j0)?;
    let index = |x: usize, y: usize| y * lx + x;
    let mut pairs = Vec::with_capacity(2 * lx * ly);
    for y in 0..ly {
        for x in 0..lx {
            if x + 1 < lx {
                pairs.push((index(x, y), index(x + 1, y), j0));
            } else if periodic && lx > 1 {
                pairs.push((index(x, y), index(0, y), j0));
            }
            if y + 1 < ly {
                pairs.push((index(x, y), index(x, y + 1), j0));
            } else if periodic && ly > 1 {
                pairs.push((index(x, y), index(x, 0), j0));
            }
        }
    }
    let kind = if periodic { "torus" } else { "open" };
    CouplingModel::from_pairs(lx * ly, format!("lattice {lx}x{ly} {kind} J0={j0}"), pairs)
}

/// Square `L × L` lattice.
pub fn lattice2d(l: usize, j0: f64, periodic: bool) -> Result<CouplingModel> {
    if l < 2 {
        return Err(Error::invalid(format!("lattice side must be >= 2, got {l}")));
    }
    lattice(l, l, j0, periodic)
}

/// One-dimensional chain with `J_ij = J1 / |i-j|²` on every pair.
pub fn power_law_1d(n: usize, j1: f64) -> Result<CouplingModel> {
    if n < 2 {
        return Err(Error::invalid(format!("power-law chain needs n >= 2, got {n}")));
    }
    require_positive("J1", j1)?;
    let pairs = (0..n).flat_map(|i| {
        (i + 1..n).map(move |j| {
            let d = (j - i) as f64;
            (i, j, j1 / (d * d))
        })
    });
    CouplingModel::from_pairs(n, format!("power-law-1d n={n} J1={j1}"), pairs)
}

/// Complete graph with `J_ij = J/(2n)` (`Half`) or `J/n` (`Full`).
pub fn curie_weiss(n: usize, j: f64, convention: Convention) -> Result<CouplingModel> {
    if n < 2 {
        return Err(Error::invalid(format!("Curie-Weiss needs n >= 2, got {n}")));
    }
    require_positive("J", j)?;
    let value = convention.pair_coupling(n, j);
    let name = format!("curie-weiss n={n} J={j} {convention:?}").to_lowercase();
    Ok(CouplingModel::uniform(n, value, name)?.with_mean_field(MeanField { j, convention }))
}

/// Random sparse instance: each pair present with probability `density`,
/// magnitude uniform in `(0, max_abs]`, sign random unless `ferromagnetic`.
pub fn random_couplings(
    n: usize,
    density: f64,
    max_abs: f64,
    ferromagnetic: bool,
    seed: u64,
) -> Result<CouplingModel> {
    if n < 2 {
        return Err(Error::invalid("random model needs n >= 2"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!("density must be in [0,1], got {density}")));
    }
    require_positive("max_abs", max_abs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let magnitude = max_abs * (1.0 - rng.random::<f64>());
                let sign = if ferromagnetic || rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                };
                pairs.push((i, j, sign * magnitude));
            }
        }
    }
    let kind = if ferromagnetic { "ferro" } else { "mixed" };
    CouplingModel::from_pairs(n, format!("random n={n} {kind} seed={seed}"), pairs)
}

/// Parses the edge-list format. `n` overrides the site count (otherwise max index + 1).
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<CouplingModel> {
    let mut seen: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    let mut pairs = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 'i j J_ij', found {} fields", fields.len()),
            });
        }
        let parse_index = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("'{s}' is not a site index"),
            })
        };
        let i = parse_index(fields[0])?;
        let j = parse_index(fields[1])?;
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("'{}' is not a number", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: "coupling is not finite".into(),
            });
        }
        if i == j {
            return Err(Error::Parse {
                line,
                message: format!("diagonal entry J_{i}{i} is not allowed"),
            });
        }
        let key = (i.min(j), i.max(j));
        match seen.get(&key) {
            Some(&(prev, prev_line)) if prev != value => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "pair ({}, {}) already given as {prev} on line {prev_line}",
                        key.0, key.1
                    ),
                });
            }
            Some(_) => continue,
            None => {
                seen.insert(key, (value, line));
            }
        }
        max_index = max_index.max(i).max(j);
        pairs.push((i, j, value));
    }
    let n = match n {
        Some(n) if n <= max_index && !pairs.is_empty() => {
            return Err(Error::invalid(format!(
                "site count {n} too small for index {max_index}"
            )))
        }
        Some(n) => n,
        None if pairs.is_empty() => 0,
        None => max_index + 1,
    };
    CouplingModel::from_pairs(n, "edge-list", pairs)
}

pub fn load_edge_list(path: &Path, n: Option<usize>) -> Result<CouplingModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = parse_edge_list(&text, n)?;
    let name = format!("edge-list {}", path.display());
    CouplingModel::from_pairs(model.n(), name, model.edges())
}

pub fn write_edge_list(model: &CouplingModel, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# {} ({} sites)", model.name(), model.n())?;
    for (i, j, v) in model.edges() {
        writeln!(out, "{i} {j} {v}")?;
    }
    Ok(())
}
