//! Experiment settings: TOML file, command-line flags and replayed provenance
//! all deserialize into [`Settings`]; flags win field by field.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::Args;
use pca_gibbs::exact::Caps;
use pca_gibbs::generators::ModelSpec;
use pca_gibbs::output::{Format, Provenance};
use pca_gibbs::samplers::SamplerKind;
use pca_gibbs::{Convention, Inertia};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    EdgeList,
    Lattice,
    PowerLaw1d,
    CurieWeiss,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    Up,
    Down,
    Random,
}

/// Model source. In a config file this is the `[model]` table.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Model generator
    #[arg(long = "model", value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ModelKind>,
    /// Edge-list file (implies --model edge-list)
    #[arg(long = "edges")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Number of sites
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lx: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ly: Option<usize>,
    /// Side of a square lattice (sets lx = ly)
    #[arg(long = "side")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    /// Nearest-neighbour coupling of the lattice
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j0: Option<f64>,
    /// Curie-Weiss strength J
    #[arg(long = "j")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    /// Power-law amplitude
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j1: Option<f64>,
    /// Curie-Weiss normalisation: half (J/2n) or full (J/n)
    #[arg(long, value_parser = parse_convention)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic: Option<bool>,
    /// Random model: probability that a pair is coupled
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Random model: largest |J_ij|
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ferromagnetic: Option<bool>,
    /// Random model: generator seed
    #[arg(id = "model_seed", long = "model-seed")]
    #[serde(rename = "seed", skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    s.parse().map_err(|e: pca_gibbs::Error| e.to_string())
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    s.parse().map_err(|e: pca_gibbs::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: pca_gibbs::Error| e.to_string())
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        $( if $hi.$f.is_none() { $hi.$f = $lo.$f.take(); } )*
    };
}

impl ModelConfig {
    fn is_empty(&self) -> bool {
        *self == ModelConfig::default()
    }

    fn kind(&self) -> Option<ModelKind> {
        self.kind.or(self.path.as_ref().map(|_| ModelKind::EdgeList))
    }

    fn merge(mut self, mut lower: ModelConfig) -> ModelConfig {
        if let (Some(a), Some(b)) = (self.kind(), lower.kind()) {
            if a != b {
                return self;
            }
        }
        merge_fields!(self, lower, kind, path, n, lx, ly, side, j0, j, j1, convention, periodic, density, max_abs, ferromagnetic, seed);
        self
    }

    pub fn to_spec(&self) -> Result<ModelSpec, CliError> {
        let kind = self
            .kind()
            .ok_or_else(|| CliError::Usage("no model given; use --model <kind> or a [model] table".into()))?;
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| CliError::Usage(format!("{kind:?} model needs --{flag}")))
        };
        let need_n = |flag: &str| {
            self.n
                .ok_or_else(|| CliError::Usage(format!("{kind:?} model needs --{flag}")))
        };
        Ok(match kind {
            ModelKind::EdgeList => ModelSpec::EdgeList {
                path: self
                    .path
                    .clone()
                    .ok_or_else(|| CliError::Usage("edge-list model needs --edges <path>".into()))?,
                n: self.n,
            },
            ModelKind::Lattice => {
                let (lx, ly) = match (self.lx.or(self.side), self.ly.or(self.side)) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(CliError::Usage("lattice model needs --side or --lx and --ly".into())),
                };
                ModelSpec::Lattice {
                    lx,
                    ly,
                    j0: need(self.j0, "j0")?,
                    periodic: self.periodic.unwrap_or(false),
                }
            }
            ModelKind::PowerLaw1d => ModelSpec::PowerLaw1d {
                n: need_n("n")?,
                j1: need(self.j1, "j1")?,
            },
            ModelKind::CurieWeiss => ModelSpec::CurieWeiss {
                n: need_n("n")?,
                j: need(self.j, "j")?,
                convention: self.convention.unwrap_or(Convention::Half),
            },
            ModelKind::Random => ModelSpec::Random {
                n: need_n("n")?,
                density: self.density.unwrap_or(0.5),
                max_abs: need(self.max_abs, "max-abs")?,
                ferromagnetic: self.ferromagnetic.unwrap_or(false),
                seed: self.seed.unwrap_or(0),
            },
        })
    }
}

#[derive(Args, Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsConfig {
    /// Largest n for exhaustive probability vectors
    #[arg(long = "cap-vector-sites")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector_sites: Option<usize>,
    /// Largest n for 2^n x 2^n matrices
    #[arg(long = "cap-matrix-sites")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_sites: Option<usize>,
    /// Largest n for exhaustive sups in bound computations
    #[arg(long = "cap-sup-sites")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_sites: Option<usize>,
}

impl CapsConfig {
    fn is_empty(&self) -> bool {
        *self == CapsConfig::default()
    }

    pub fn resolve(&self) -> Caps {
        let d = Caps::default();
        Caps {
            vector_sites: self.vector_sites.unwrap_or(d.vector_sites),
            matrix_sites: self.matrix_sites.unwrap_or(d.matrix_sites),
            sup_sites: self.sup_sites.unwrap_or(d.sup_sites),
        }
    }
}

/// Every setting any subcommand reads. Flags, the TOML file and replayed
/// provenance all produce this shape.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[command(flatten)]
    #[serde(default, skip_serializing_if = "ModelConfig::is_empty")]
    pub model: ModelConfig,
    /// Sampler: pca, gibbs or reflected-pca
    #[arg(long, value_parser = parse_sampler)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerKind>,
    /// Flip density δ = e^{-2q}
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Inertia q (alternative to --delta)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Initial configuration: up, down or random
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    /// Worker threads (also PCA_GIBBS_THREADS)
    #[arg(long, env = "PCA_GIBBS_THREADS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Table format: csv or jsonl
    #[arg(long, value_parser = parse_format)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Secondary JSON output (summary of mixing and cw-analyze)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default, skip_serializing_if = "CapsConfig::is_empty")]
    pub caps: CapsConfig,
    /// Comma-separated δ grid (exact-tv)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Coupled-chain trials (mixing)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Censoring horizon per trial (mixing)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    /// Comma-separated thread counts (bench)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thread_counts: Option<Vec<usize>>,
    /// Allowance added to the coupling γ when the exhaustive bound is out of reach
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_slack: Option<f64>,
    /// Include full γ matrices in dobrushin-check output
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<bool>,
}

impl Settings {
    /// Field-wise `self` over `lower`. `q`/`delta` travel as a pair so a flag
    /// for one replaces a file value for the other.
    pub fn merge(mut self, mut lower: Settings) -> Settings {
        if self.q.is_some() || self.delta.is_some() {
            lower.q = None;
            lower.delta = None;
        }
        self.model = std::mem::take(&mut self.model).merge(std::mem::take(&mut lower.model));
        let caps = &mut self.caps;
        merge_fields!(caps, lower.caps, vector_sites, matrix_sites, sup_sites);
        merge_fields!(
            self, lower, sampler, delta, q, steps, burn_in, seed, initial, threads, output, format, summary, deltas,
            trials, max_steps, thread_counts, gamma_slack, matrix
        );
        self
    }

    pub fn inertia(&self) -> Result<Option<Inertia>, CliError> {
        match (self.delta, self.q) {
            (Some(_), Some(_)) => Err(CliError::Usage("give either --delta or --q, not both".into())),
            (Some(d), None) => Ok(Some(Inertia::from_delta(d)?)),
            (None, Some(q)) => Ok(Some(Inertia::from_q(q)?)),
            (None, None) => Ok(None),
        }
    }

    pub fn require_inertia(&self) -> Result<Inertia, CliError> {
        self.inertia()?
            .ok_or_else(|| CliError::Usage("missing --delta (or --q)".into()))
    }

    pub fn threads(&self) -> Result<usize, CliError> {
        match self.threads {
            Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
            Some(t) => Ok(t),
            None => Ok(pca_gibbs::samplers::Workers::available()),
        }
    }

    /// The settings as embedded in output provenance: no thread count or
    /// output paths, which do not affect content.
    pub fn for_provenance(&self) -> Settings {
        let mut s = self.clone();
        s.threads = None;
        s.output = None;
        s.summary = None;
        s
    }
}

pub fn load_toml(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {}", path.display(), e.message())))
}

/// Reads the provenance of an earlier output (CSV, JSON lines or JSON) and
/// returns the command and settings it was produced with.
pub fn load_replay(path: &Path) -> Result<(String, Settings), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = std::io::BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::Parse(format!("{}: {msg}", path.display()));
    let provenance: Provenance = if let Some(json) = first.strip_prefix("# provenance ") {
        serde_json::from_str(json.trim_end()).map_err(|e| bad(e.to_string()))?
    } else {
        let mut text = first;
        std::io::Read::read_to_string(&mut reader, &mut text).map_err(|e| CliError::io(path, e))?;
        let first_value: serde_json::Value = serde_json::Deserializer::from_str(&text)
            .into_iter()
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        serde_json::from_value(first_value["provenance"].clone()).map_err(|e| bad(format!("no provenance: {e}")))?
    };
    let command = provenance.config["command"]
        .as_str()
        .ok_or_else(|| bad("provenance has no command".into()))?
        .to_string();
    let settings = serde_json::from_value(provenance.config["settings"].clone()).map_err(|e| bad(e.to_string()))?;
    Ok((command, settings))
}
