//! Tabular output with embedded provenance.
//!
//! CSV files start with one comment line `# provenance {json}` followed by a
//! header naming every column. JSON-lines files start with a
//! `{"provenance": {...}}` object. Floats are written in shortest round-trip
//! form, so a file can be regenerated byte for byte from its provenance.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const PROVENANCE_PREFIX: &str = "# provenance ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" => Ok(Format::Jsonl),
            other => Err(Error::invalid(format!("unknown format '{other}', expected csv or jsonl"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::invalid(format!("config is not serialisable: {e}")))?;
        let canonical = config.to_string();
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: version_string(),
            config_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
            config,
            seed,
        })
    }
}

/// `<crate version>` plus `+<rev>` when built with `PCA_GIBBS_GIT_REV` set.
pub fn version_string() -> String {
    match option_env!("PCA_GIBBS_GIT_REV") {
        Some(rev) if !rev.is_empty() => format!("{}+{rev}", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

enum Sink<W: Write> {
    Csv(csv::Writer<W>),
    Jsonl(W),
}

/// Streams records of one shape to a sink.
pub struct TableWriter<W: Write> {
    sink: Sink<W>,
}

fn io_err(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

impl<W: Write> TableWriter<W> {
    /// Writes the provenance line and, for CSV, the header row.
    pub fn new(mut out: W, format: Format, provenance: &Provenance, columns: &[&str]) -> std::io::Result<Self> {
        let prov = serde_json::to_string(provenance).map_err(io_err)?;
        let sink = match format {
            Format::Csv => {
                writeln!(out, "{PROVENANCE_PREFIX}{prov}")?;
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
                w.write_record(columns).map_err(io_err)?;
                Sink::Csv(w)
            }
            Format::Jsonl => {
                writeln!(out, "{{\"provenance\":{prov}}}")?;
                Sink::Jsonl(out)
            }
        };
        Ok(Self { sink })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        match &mut self.sink {
            Sink::Csv(w) => w.serialize(record).map_err(io_err),
            Sink::Jsonl(w) => {
                serde_json::to_writer(&mut *w, record).map_err(io_err)?;
                w.write_all(b"\n")
            }
        }
    }

    pub fn finish(self) -> std::io::Result<W> {
        match self.sink {
            Sink::Csv(w) => w.into_inner().map_err(|e| io_err(e.error())),
            Sink::Jsonl(mut w) => {
                w.flush()?;
                Ok(w)
            }
        }
    }
}

/// Writes a whole table to `path`, attaching the path to any I/O failure.
pub fn write_table<T: Serialize>(
    path: &Path,
    format: Format,
    provenance: &Provenance,
    columns: &[&str],
    records: impl IntoIterator<Item = T>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let run = || -> std::io::Result<()> {
        let mut w = TableWriter::new(std::io::BufWriter::new(file), format, provenance, columns)?;
        for r in records {
            w.write(&r)?;
        }
        w.finish()?.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

/// Parsed CSV table: provenance, header and typed rows.
#[derive(Clone, Debug)]
pub struct CsvTable<T> {
    pub provenance: Option<Provenance>,
    pub columns: Vec<String>,
    pub rows: Vec<T>,
}

/// Reads a CSV produced by [`TableWriter`].
pub fn read_csv<T: DeserializeOwned>(mut input: impl BufRead) -> Result<CsvTable<T>> {
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    let (provenance, rest): (Option<Provenance>, Box<dyn std::io::Read + '_>) =
        match first.strip_prefix(PROVENANCE_PREFIX) {
            Some(json) => (
                Some(serde_json::from_str(json.trim_end()).map_err(|e| Error::Parse {
                    line: 1,
                    message: format!("bad provenance: {e}"),
                })?),
                Box::new(input),
            ),
            None => (None, Box::new(std::io::Read::chain(std::io::Cursor::new(first), input))),
        };
    let offset = provenance.is_some() as usize;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(rest);
    let columns = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1 + offset, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .deserialize()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| Error::Parse {
                line: k + 2 + offset,
                message: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CsvTable {
        provenance,
        columns,
        rows,
    })
}
