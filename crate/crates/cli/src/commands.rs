use std::io::Write;
use std::path::Path;
use std::time::Instant;

use pca_gibbs::bounds::{
    dobrushin_condition, pca_gamma_bound, tv_upper_bound, variance_bound, DobrushinReport, GammaSource, TvMode,
};
use pca_gibbs::curie_weiss::{magnetization_law, summarize, CwSpec};
use pca_gibbs::exact::{tv_distance, Enumerator};
use pca_gibbs::generators::{build_model, ModelSpec};
use pca_gibbs::output::{Format, Provenance, TableWriter};
use pca_gibbs::rng::RngPolicy;
use pca_gibbs::samplers::{
    estimate_coalescence, gibbs_step_in_place, pca_step_into, run_chain, ChainOptions, SamplerKind, StepRow,
    Workers,
};
use pca_gibbs::{CouplingModel, Inertia, Measure, SpinConfiguration};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Initial, Settings};
use crate::error::CliError;

const DEFAULT_GRID: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5];

fn provenance(command: &str, settings: &Settings) -> Result<Provenance, CliError> {
    let mut config = json!({
        "command": command,
        "settings": settings.for_provenance(),
    });
    if let Some(inertia) = settings.inertia()? {
        config["inertia"] = json!({"q": inertia.q(), "delta": inertia.delta()});
    }
    Ok(Provenance::new(&config, settings.seed)?)
}

fn model(settings: &Settings) -> Result<(ModelSpec, CouplingModel), CliError> {
    let spec = settings.model.to_spec()?;
    let model = build_model(&spec)?;
    Ok((spec, model))
}

fn workers(settings: &Settings) -> Result<Workers, CliError> {
    Ok(Workers::new(settings.threads()?)?)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io_path(path: Option<&Path>) -> &Path {
    path.unwrap_or(Path::new("<stdout>"))
}

fn write_rows<T: Serialize>(
    settings: &Settings,
    prov: &Provenance,
    columns: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let path = settings.output.as_deref();
    let format = settings.format.unwrap_or(Format::Csv);
    let run = || -> std::io::Result<()> {
        let mut w = TableWriter::new(sink(path).map_err(to_io)?, format, prov, columns)?;
        for r in rows {
            w.write(&r)?;
        }
        w.finish()?.flush()
    };
    run().map_err(|e| CliError::io(io_path(path), e))
}

fn to_io(e: CliError) -> std::io::Error {
    match e {
        CliError::Io { source, .. } => source,
        other => std::io::Error::other(other.to_string()),
    }
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let run = || -> std::io::Result<()> {
        let mut out = sink(path).map_err(to_io)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        out.write_all(b"\n")?;
        out.flush()
    };
    run().map_err(|e| CliError::io(io_path(path), e))
}

fn initial_state(n: usize, initial: Initial, seed: u64) -> SpinConfiguration {
    match initial {
        Initial::Up => SpinConfiguration::all_up(n),
        Initial::Down => SpinConfiguration::all_down(n),
        Initial::Random => {
            let mut stream = RngPolicy::new(seed).fork(u64::MAX).site_stream(0, 0);
            let spins = (0..n).map(|_| if stream.next_uniform() <= 0.5 { -1 } else { 1 }).collect();
            SpinConfiguration::new(spins).expect("spins are ±1")
        }
    }
}

pub fn sample(settings: &Settings) -> Result<(), CliError> {
    let (_, model) = model(settings)?;
    let mut s = settings.clone();
    s.sampler.get_or_insert(SamplerKind::Pca);
    s.steps.get_or_insert(1000);
    s.burn_in.get_or_insert(0);
    s.seed.get_or_insert(0);
    s.initial.get_or_insert(Initial::Up);
    let options = ChainOptions {
        kind: s.sampler.unwrap(),
        inertia: s.require_inertia()?,
        steps: s.steps.unwrap(),
        burn_in: s.burn_in.unwrap(),
    };
    let seed = s.seed.unwrap();
    let start = initial_state(model.n(), s.initial.unwrap(), seed);
    let run = run_chain(&model, options, start, &RngPolicy::new(seed), &workers(&s)?, |_, _| {})?;
    let prov = provenance("sample", &s)?;
    write_rows(&s, &prov, StepRow::COLUMNS, run.stats.records.iter().map(StepRow::from))?;
    if let Some(rate) = run.stats.mean_flip_rate(model.n()) {
        eprintln!(
            "{}: {} recorded steps, mean flip rate {rate:.6}, final magnetization {:.6}",
            model.name(),
            run.stats.records.len(),
            run.final_state.magnetization()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TvRow {
    n: usize,
    q: f64,
    delta: f64,
    tv: f64,
    delta_ratio: f64,
    tv_upper_bound: f64,
}

pub fn exact_tv(settings: &Settings) -> Result<(), CliError> {
    let (_, model) = model(settings)?;
    let mut s = settings.clone();
    let deltas = match (s.deltas.clone(), s.inertia()?) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --deltas or a single --delta/--q, not both".into())),
        (Some(d), None) => d,
        (None, Some(inertia)) => vec![inertia.delta()],
        (None, None) => {
            s.deltas = Some(DEFAULT_GRID.to_vec());
            DEFAULT_GRID.to_vec()
        }
    };
    let en = Enumerator::new(s.caps.resolve());
    let gibbs = en.gibbs(&model)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for d in deltas {
        let inertia = match (s.q, s.deltas.is_none()) {
            (Some(q), true) => Inertia::from_q(q)?,
            _ => Inertia::from_delta(d)?,
        };
        let ratio = en.delta_ratio(&model, inertia)?;
        rows.push(TvRow {
            n: model.n(),
            q: inertia.q(),
            delta: inertia.delta(),
            tv: tv_distance(&en.pca(&model, inertia)?, &gibbs)?,
            delta_ratio: ratio,
            tv_upper_bound: ratio.sqrt().min(1.0),
        });
    }
    let prov = provenance("exact-tv", &s)?;
    write_rows(&s, &prov, &["n", "q", "delta", "tv", "delta_ratio", "tv_upper_bound"], rows)
}

fn report_json(report: &DobrushinReport, matrix: bool) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if !matrix {
        v.as_object_mut().expect("object").remove("gamma_matrix");
    }
    v
}

pub fn dobrushin_check(settings: &Settings) -> Result<(), CliError> {
    let (spec, model) = model(settings)?;
    let caps = settings.caps.resolve();
    let matrix = settings.matrix.unwrap_or(false);
    let inertia = settings.inertia()?;
    let mut notes: Vec<String> = Vec::new();
    let coupling = dobrushin_condition(&model);
    let mut out = json!({
        "provenance": provenance("dobrushin-check", settings)?,
        "model": spec,
        "n": model.n(),
        "coupling_norm": model.sup_norm(),
        "gibbs": report_json(&coupling, matrix),
    });
    if let Some(inertia) = inertia {
        let source = if model.n() <= caps.sup_sites {
            Some(GammaSource::Exhaustive)
        } else {
            settings.gamma_slack.map(|slack| GammaSource::CouplingWithSlack { slack })
        };
        if model.n() <= caps.sup_sites {
            for (key, measure) in [("pca", Measure::Pca), ("tilde", Measure::Tilde)] {
                let report = pca_gamma_bound(&model, inertia, measure)?;
                out[key] = report_json(&report, matrix);
                if model.n() <= caps.vector_sites {
                    let dist = Enumerator::new(caps).measure(&model, measure, inertia)?;
                    let exact = Enumerator::new(caps).dobrushin_coefficients(&dist)?;
                    out[key]["exact_gamma"] = json!(exact.max_row_sum());
                }
            }
        } else {
            notes.push(format!(
                "n = {} exceeds the exhaustive cap {}; PCA gamma matrices skipped",
                model.n(),
                caps.sup_sites
            ));
        }
        match source {
            Some(source) => {
                for (key, measure) in [("variance_bound_pca", Measure::Pca), ("variance_bound_tilde", Measure::Tilde)] {
                    out[key] = match variance_bound(&model, inertia, measure, source) {
                        Ok(v) => json!(v),
                        Err(e) => {
                            notes.push(format!("{key}: {e}"));
                            Value::Null
                        }
                    };
                }
                out["tv_certificate"] = match tv_upper_bound(&model, inertia, TvMode::Analytic { source }) {
                    Ok(b) => json!(b),
                    Err(e) => {
                        notes.push(format!("tv_certificate: {e}"));
                        Value::Null
                    }
                };
            }
            None => notes.push("variance and TV certificates need --gamma-slack for this n".into()),
        }
    } else {
        notes.push("no --delta given; only the coupling condition for the Gibbs measure is reported".into());
    }
    out["notes"] = json!(notes);
    write_json(settings.output.as_deref(), &out)
}

#[derive(Serialize)]
struct TrialRow {
    trial: u64,
    tau: Option<u64>,
    censored: bool,
}

pub fn mixing(settings: &Settings) -> Result<(), CliError> {
    let (_, model) = model(settings)?;
    let mut s = settings.clone();
    s.trials.get_or_insert(100);
    s.max_steps.get_or_insert(100_000);
    s.seed.get_or_insert(0);
    let inertia = s.require_inertia()?;
    let report = estimate_coalescence(
        &model,
        inertia,
        s.max_steps.unwrap(),
        s.trials.unwrap(),
        &RngPolicy::new(s.seed.unwrap()),
        &workers(&s)?,
    )?;
    let prov = provenance("mixing", &s)?;
    let rows = report.taus.iter().enumerate().map(|(k, tau)| TrialRow {
        trial: k as u64,
        tau: *tau,
        censored: tau.is_none(),
    });
    write_rows(&s, &prov, &["trial", "tau", "censored"], rows)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "median tau_c {}, predicted {}, censored {}/{}, tail violations {}",
        fmt_opt(report.median),
        fmt_opt(report.predicted_mixing),
        report.censored,
        report.taus.len(),
        report.tail_violations().len()
    );
    if let Some(path) = &s.summary {
        let mut summary = json!(report);
        summary.as_object_mut().expect("object").remove("taus");
        summary["provenance"] = json!(prov);
        write_json(Some(path), &summary)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "n/a".into())
}

#[derive(Serialize)]
struct LawRow {
    k: usize,
    m: f64,
    gibbs: f64,
    pca: f64,
    tilde: f64,
}

pub fn cw_analyze(settings: &Settings) -> Result<(), CliError> {
    let spec = match settings.model.to_spec()? {
        ModelSpec::CurieWeiss { n, j, convention } => CwSpec::new(n, j, convention, settings.require_inertia()?)?,
        _ => return Err(CliError::Usage("cw-analyze needs --model curie-weiss".into())),
    };
    let laws = [Measure::Gibbs, Measure::Pca, Measure::Tilde].map(|m| magnetization_law(&spec, m));
    let prov = provenance("cw-analyze", settings)?;
    let rows = (0..=spec.n).map(|k| LawRow {
        k,
        m: laws[0].support[k],
        gibbs: laws[0].probs[k],
        pca: laws[1].probs[k],
        tilde: laws[2].probs[k],
    });
    write_rows(settings, &prov, &["k", "m", "gibbs", "pca", "tilde"], rows)?;
    let summary = summarize(&spec)?;
    eprintln!(
        "m* = {:.6}, m_bar = {:.6}, Delta = {:.4e} (J delta/2 = {:.4e})",
        summary.m_star, summary.m_bar, summary.delta_ratio.computed, summary.delta_ratio.predicted
    );
    if let Some(path) = &settings.summary {
        let mut v = json!(summary);
        v["provenance"] = json!(prov);
        write_json(Some(path), &v)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    sampler: SamplerKind,
    threads: usize,
    n: usize,
    steps: u64,
    seconds: f64,
    site_updates_per_sec: f64,
    flips_per_sec: f64,
    speedup: f64,
    state_sha256: String,
}

fn state_hash(spins: &[i8]) -> String {
    let bytes: Vec<u8> = spins.iter().map(|&s| s as u8).collect();
    hex::encode(Sha256::digest(&bytes))
}

pub fn bench(settings: &Settings) -> Result<(), CliError> {
    let (_, model) = model(settings)?;
    let mut s = settings.clone();
    s.steps.get_or_insert(20);
    s.seed.get_or_insert(0);
    let max = s.threads()?;
    if s.thread_counts.is_none() {
        let mut counts = vec![1];
        while counts.last().unwrap() * 2 <= max {
            counts.push(counts.last().unwrap() * 2);
        }
        if *counts.last().unwrap() != max {
            counts.push(max);
        }
        s.thread_counts = Some(counts);
    }
    let counts = s.thread_counts.clone().unwrap();
    if counts.contains(&0) {
        return Err(CliError::Usage("thread counts must be at least 1".into()));
    }
    let inertia = s.require_inertia()?;
    let steps = s.steps.unwrap();
    let rng = RngPolicy::new(s.seed.unwrap());
    let n = model.n();
    let mut rows = Vec::new();
    let mut baseline = None;
    for &threads in &counts {
        let workers = Workers::new(threads)?;
        let mut state = vec![1i8; n];
        let mut next = vec![0i8; n];
        let mut flips = 0;
        let start = Instant::now();
        for t in 0..steps {
            flips += pca_step_into(&model, inertia, &state, &mut next, &rng, t, &workers)?;
            std::mem::swap(&mut state, &mut next);
        }
        let seconds = start.elapsed().as_secs_f64();
        let base = *baseline.get_or_insert(seconds);
        rows.push(BenchRow {
            sampler: SamplerKind::Pca,
            threads,
            n,
            steps,
            seconds,
            site_updates_per_sec: (n as u64 * steps) as f64 / seconds,
            flips_per_sec: flips as f64 / seconds,
            speedup: base / seconds,
            state_sha256: state_hash(&state),
        });
    }
    let mut state = vec![1i8; n];
    let mut flips = 0;
    let start = Instant::now();
    for t in 0..steps * n as u64 {
        flips += gibbs_step_in_place(&model, &mut state, &rng, t)?.1 as u64;
    }
    let seconds = start.elapsed().as_secs_f64();
    rows.push(BenchRow {
        sampler: SamplerKind::Gibbs,
        threads: 1,
        n,
        steps,
        seconds,
        site_updates_per_sec: (n as u64 * steps) as f64 / seconds,
        flips_per_sec: flips as f64 / seconds,
        speedup: baseline.unwrap_or(seconds) / seconds,
        state_sha256: state_hash(&state),
    });
    let deterministic = rows
        .iter()
        .filter(|r| r.sampler == SamplerKind::Pca)
        .all(|r| r.state_sha256 == rows[0].state_sha256);
    eprintln!(
        "PCA trajectories {} across thread counts {counts:?}",
        if deterministic { "identical" } else { "DIFFER" }
    );
    let prov = provenance("bench", &s)?;
    write_rows(
        &s,
        &prov,
        &[
            "sampler",
            "threads",
            "n",
            "steps",
            "seconds",
            "site_updates_per_sec",
            "flips_per_sec",
            "speedup",
            "state_sha256",
        ],
        rows,
    )?;
    if !deterministic {
        return Err(pca_gibbs::Error::InvalidState("PCA trajectories depend on the thread count".into()).into());
    }
    Ok(())
}
