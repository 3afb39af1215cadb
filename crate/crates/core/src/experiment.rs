//! Experiment runner behind the command-line tool: plays the instance stream
//! once per seed and writes plot-ready CSV files.
//!
//! Outputs, each starting with a schema line:
//! - `episodes.csv`: one row per seed and instance.
//! - `overhead.csv`: cumulative overhead against the oracle per seed and
//!   position (ground truth required).
//! - `bounds_report.csv`: realized regret against the best allocator and the
//!   unknown-bound regret bound, per seed.
//! - `summary.csv`: mean cumulative overhead across seeds with a Student-t
//!   95% band, for the learner and the fixed baselines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::allocators::Share;
use crate::bounds::{self, BoundInputs};
use crate::csvio::{self, fmt_f64};
use crate::error::{invalid, Error, Result};
use crate::exec::AlgorithmRun;
use crate::external::ExternalBackend;
use crate::gambleta::{
    overhead_curve, regret_report, reorder, run_sequence, single_algorithm_times, static_share_times, EpisodeRecord,
    GambletaConfig, SimulatedBackend,
};
use crate::manifest::{RunManifest, Source};
use crate::synth;
use crate::trace;

pub const EPISODES_SCHEMA: &str = "gambleta.episodes/1";
pub const OVERHEAD_SCHEMA: &str = "gambleta.overhead/1";
pub const BOUNDS_REPORT_SCHEMA: &str = "gambleta.bounds-report/1";
pub const SUMMARY_SCHEMA: &str = "gambleta.summary/1";
pub const BOUNDS_TABLE_SCHEMA: &str = "gambleta.bounds/1";

/// Name of the learner's series in overhead and summary files.
pub const LEARNER: &str = "gambleta";

/// Per-instance times of a fixed strategy, aligned with the played order.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub name: String,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub baselines: Vec<Baseline>,
}

impl SeedRun {
    /// Cumulative overhead curves of the learner and each baseline; empty
    /// when oracle times are unknown.
    pub fn overhead_series(&self) -> Vec<(String, Vec<Option<f64>>)> {
        let Some(oracle) = self.records.iter().map(|r| r.oracle_time).collect::<Option<Vec<f64>>>() else {
            return Vec::new();
        };
        let learner = overhead_curve(self.records.iter().map(|r| r.loss).zip(oracle.iter().copied()));
        std::iter::once((LEARNER.to_string(), learner))
            .chain(self.baselines.iter().map(|b| {
                (b.name.clone(), overhead_curve(b.times.iter().copied().zip(oracle.iter().copied())))
            }))
            .collect()
    }
}

/// Loads the manifest's instance stream (simulated modes), truncated to
/// `manifest.instances` when set.
pub fn load_runs(manifest: &RunManifest) -> Result<Vec<AlgorithmRun>> {
    let mut runs = match &manifest.source {
        Source::Synthetic(spec) => synth::generate(spec)?.into_iter().map(|i| i.run).collect(),
        Source::Trace(path) => trace::read_trace(File::open(path).map_err(|e| with_path(e, path))?)?,
        Source::External { .. } => return Err(invalid("external runs have no ground-truth runtimes")),
    };
    if let Some(m) = manifest.instances {
        runs.truncate(m);
    }
    if runs.is_empty() {
        return Err(invalid("the instance stream is empty"));
    }
    Ok(runs)
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn order<T: Clone>(items: &[T], seed: u64, shuffle: bool) -> Vec<T> {
    if shuffle {
        reorder(items, seed)
    } else {
        items.to_vec()
    }
}

fn baselines(runs: &[AlgorithmRun]) -> Result<Vec<Baseline>> {
    let k = runs[0].n_algorithms();
    let mut out = vec![Baseline {
        name: "uniform".into(),
        times: static_share_times(runs, &Share::uniform(k))?,
    }];
    for a in 0..k {
        if let Ok(times) = single_algorithm_times(runs, a) {
            out.push(Baseline {
                name: format!("algorithm-{a}"),
                times,
            });
        }
    }
    Ok(out)
}

/// Plays every seed on ground-truth runtimes, in parallel across seeds.
pub fn run_simulated(runs: &[AlgorithmRun], seeds: &[u64], shuffle: bool, config: &GambletaConfig) -> Result<Vec<SeedRun>> {
    let k = runs.first().ok_or_else(|| invalid("the instance stream is empty"))?.n_algorithms();
    if let Some(r) = runs.iter().find(|r| r.n_algorithms() != k) {
        return Err(invalid(format!("instance {} has {} algorithms, expected {k}", r.instance_id, r.n_algorithms())));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let played = order(runs, seed, shuffle);
            let mut backend = SimulatedBackend { n_algorithms: k };
            let records = run_sequence(&mut backend, &played, config, seed)?;
            Ok(SeedRun {
                seed,
                records,
                baselines: baselines(&played)?,
            })
        })
        .collect()
}

/// Plays every seed with real processes. Seeds run one after another so
/// that concurrent runs do not disturb each other's time slices.
pub fn run_external(
    backend: &ExternalBackend,
    instances: &[trace::InstanceFile],
    seeds: &[u64],
    shuffle: bool,
    config: &GambletaConfig,
) -> Result<Vec<SeedRun>> {
    seeds
        .iter()
        .map(|&seed| {
            let played = order(instances, seed, shuffle);
            let mut backend = backend.clone();
            let records = run_sequence(&mut backend, &played, config, seed)?;
            Ok(SeedRun {
                seed,
                records,
                baselines: Vec::new(),
            })
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

fn joined(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";")
}

pub fn write_episodes<W: Write>(mut out: W, runs: &[SeedRun], labels: &[String]) -> Result<()> {
    csvio::write_schema(&mut out, EPISODES_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "position",
        "instance_id",
        "allocator",
        "allocator_label",
        "probability",
        "loss",
        "winner",
        "oracle_time",
        "inner_epoch",
        "outer_epoch",
        "share_updates",
        "initial_share",
        "consumed",
        "allocator_losses",
    ])?;
    for run in runs {
        for r in &run.records {
            w.write_record([
                run.seed.to_string(),
                r.position.to_string(),
                r.instance_id.clone(),
                r.chosen_allocator.to_string(),
                labels[r.chosen_allocator].clone(),
                fmt_f64(r.chosen_probability),
                fmt_f64(r.loss),
                r.result.winner.to_string(),
                opt(r.oracle_time),
                r.inner_epoch.to_string(),
                r.outer_epoch.to_string(),
                (r.result.share_trace.len() - 1).to_string(),
                joined(r.result.initial_share().as_slice()),
                joined(&r.result.consumed),
                r.allocator_losses.as_deref().map_or_else(String::new, joined),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_overhead<W: Write>(mut out: W, runs: &[SeedRun]) -> Result<()> {
    csvio::write_schema(&mut out, OVERHEAD_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "series", "position", "overhead"])?;
    for run in runs {
        for (name, curve) in run.overhead_series() {
            for (i, v) in curve.iter().enumerate() {
                w.write_record([run.seed.to_string(), name.clone(), (i + 1).to_string(), opt(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bounds_report<W: Write>(mut out: W, runs: &[SeedRun], n_arms: usize) -> Result<()> {
    csvio::write_schema(&mut out, BOUNDS_REPORT_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "n_arms",
        "horizon",
        "solver_loss",
        "best_allocator",
        "best_allocator_loss",
        "regret",
        "max_loss",
        "theorem2_bound",
        "within_bound",
    ])?;
    for run in runs {
        let solver_loss: f64 = run.records.iter().map(|r| r.loss).sum();
        let mut row = vec![
            run.seed.to_string(),
            n_arms.to_string(),
            run.records.len().to_string(),
            fmt_f64(solver_loss),
        ];
        match regret_report(&run.records) {
            Some(rep) => row.extend([
                rep.best_allocator.to_string(),
                fmt_f64(rep.best_allocator_loss),
                fmt_f64(rep.regret),
                fmt_f64(rep.max_loss),
                opt(rep.bound),
                rep.bound.map_or_else(String::new, |b| (rep.regret <= b).to_string()),
            ]),
            None => row.extend(std::iter::repeat(String::new()).take(6)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and two-sided 95% Student-t interval; the interval is `None` with
/// fewer than two values.
pub fn mean_band(values: &[f64]) -> Option<(f64, Option<(f64, f64)>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, None));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom").inverse_cdf(0.975);
    let half = t * (var / n).sqrt();
    Some((mean, Some((mean - half, mean + half))))
}

/// Final mean cumulative overhead per series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub series: String,
    pub mean: f64,
    pub band: Option<(f64, f64)>,
}

/// Mean curve across seeds for each series, position by position.
fn mean_curves(runs: &[SeedRun]) -> Vec<(String, Vec<Option<(f64, Option<(f64, f64)>, usize)>>)> {
    let per_seed: Vec<Vec<(String, Vec<Option<f64>>)>> = runs.iter().map(SeedRun::overhead_series).collect();
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(s, (name, curve))| {
            let points = (0..curve.len())
                .map(|i| {
                    let values: Vec<f64> = per_seed.iter().filter_map(|series| series[s].1[i]).collect();
                    mean_band(&values).map(|(m, b)| (m, b, values.len()))
                })
                .collect();
            (name.clone(), points)
        })
        .collect()
}

pub fn write_summary<W: Write>(mut out: W, runs: &[SeedRun]) -> Result<Vec<SeriesSummary>> {
    csvio::write_schema(&mut out, SUMMARY_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "position", "n_seeds", "mean", "lower95", "upper95"])?;
    let mut finals = Vec::new();
    for (name, points) in mean_curves(runs) {
        for (i, p) in points.iter().enumerate() {
            let (mean, band, n) = match p {
                Some((m, b, n)) => (Some(*m), *b, *n),
                None => (None, None, 0),
            };
            w.write_record([
                name.clone(),
                (i + 1).to_string(),
                n.to_string(),
                opt(mean),
                opt(band.map(|b| b.0)),
                opt(band.map(|b| b.1)),
            ])?;
        }
        if let Some(Some((mean, band, _))) = points.last() {
            finals.push(SeriesSummary {
                series: name,
                mean: *mean,
                band: *band,
            });
        }
    }
    w.flush()?;
    Ok(finals)
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub finals: Vec<SeriesSummary>,
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| with_path(e, &path))?;
    Ok((path, BufWriter::new(file)))
}

/// Runs a manifest end to end and writes its outputs.
pub fn run_manifest(manifest: &RunManifest) -> Result<RunOutcome> {
    let config = &manifest.config;
    let runs = match &manifest.source {
        Source::External { config: ext, instances } => {
            let file = File::open(instances).map_err(|e| with_path(e, instances))?;
            let mut list = trace::read_instances(file)?;
            if let Some(m) = manifest.instances {
                list.truncate(m);
            }
            if list.is_empty() {
                return Err(invalid("the instance list is empty"));
            }
            let backend = ExternalBackend { config: ext.clone() };
            run_external(&backend, &list, &manifest.seeds, manifest.reorder, config)?
        }
        _ => run_simulated(&load_runs(manifest)?, &manifest.seeds, manifest.reorder, config)?,
    };
    fs::create_dir_all(&manifest.output_dir).map_err(|e| with_path(e, &manifest.output_dir))?;
    let labels: Vec<String> = config.allocators.iter().map(|a| a.label()).collect();
    let mut files = Vec::new();

    let (path, mut out) = create(&manifest.output_dir, "episodes.csv")?;
    write_episodes(&mut out, &runs, &labels)?;
    out.flush()?;
    files.push(path);

    let (path, mut out) = create(&manifest.output_dir, "bounds_report.csv")?;
    write_bounds_report(&mut out, &runs, labels.len())?;
    out.flush()?;
    files.push(path);

    let mut finals = Vec::new();
    if !matches!(manifest.source, Source::External { .. }) {
        let (path, mut out) = create(&manifest.output_dir, "overhead.csv")?;
        write_overhead(&mut out, &runs)?;
        out.flush()?;
        files.push(path);

        let (path, mut out) = create(&manifest.output_dir, "summary.csv")?;
        finals = write_summary(&mut out, &runs)?;
        out.flush()?;
        files.push(path);
    }
    Ok(RunOutcome { files, finals })
}

/// Writes the manifest's instance stream as a trace for later replay.
pub fn export_traces(manifest: &RunManifest, path: &Path) -> Result<usize> {
    let runs = load_runs(manifest)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(e, dir))?;
    }
    let file = File::create(path).map_err(|e| with_path(e, path))?;
    let mut out = BufWriter::new(file);
    trace::write_trace(&mut out, &runs)?;
    out.flush()?;
    Ok(runs.len())
}

/// Cartesian grid of bound inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundsGrid {
    pub n_arms: Vec<usize>,
    pub horizons: Vec<usize>,
    pub loss_bounds: Vec<f64>,
    pub best_losses: Vec<f64>,
}

/// Evaluates every bound on the grid. Cells outside a bound's domain get an
/// empty value and a status naming the reason.
pub fn write_bounds_table<W: Write>(mut out: W, grid: &BoundsGrid) -> Result<usize> {
    csvio::write_schema(&mut out, BOUNDS_TABLE_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_arms",
        "horizon",
        "loss_bound",
        "best_arm_loss",
        "theorem1",
        "theorem2",
        "theorem2_status",
        "unit_bound",
    ])?;
    let mut rows = 0;
    for &n in &grid.n_arms {
        for &m in &grid.horizons {
            for &l in &grid.loss_bounds {
                for &best in &grid.best_losses {
                    let inputs = BoundInputs::new(n, m, l, best)?;
                    let (t2, status) = match bounds::theorem2(&inputs) {
                        Ok(b) => (Some(b), "ok"),
                        Err(_) => (None, "out-of-domain"),
                    };
                    w.write_record([
                        n.to_string(),
                        m.to_string(),
                        fmt_f64(l),
                        fmt_f64(best),
                        fmt_f64(bounds::theorem1(&inputs)),
                        opt(t2),
                        status.to_string(),
                        opt(bounds::exp3light_unit(&inputs).ok()),
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(rows)
}
