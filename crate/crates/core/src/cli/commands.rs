//! Command implementations. Each writes its artifacts into an output
//! directory and returns what it wrote for programmatic callers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::settings::{DatasetSource, Settings};
use crate::baselines::{max_finite_distance, run_baseline, BaselineKind, BaselineSpec};
use crate::data::{
    load, save_readings, save_topology, split_7_1_2, split_by_test_months, synth_generate, Dataset, Normalization,
    SynthConfig,
};
use crate::error::{KitsError, Result};
use crate::graph::{
    apply_missing, insert_virtual_nodes, DegreeAccumulator, DegreeStats, InsertionConfig, MissingPattern, Role,
};
use crate::metrics::{evaluate_all, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, ModelParams};
use crate::training::{evaluate_unobserved, stream_rng, train, Stream, Task, TrainOutcome};

pub const METRICS_FILE: &str = "metrics.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const GRAPH_GAP_FILE: &str = "graph_gap.json";

/// A dataset with its missing pattern applied, split and normalised.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: Dataset,
    pub task: Task,
    pub norm: Normalization,
}

pub fn load_source(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Files { readings, topology, format } => load(readings, topology, *format),
        DatasetSource::Synth { nodes, steps, topology_seed, dynamics_seed } => {
            synth_generate(&SynthConfig::new(*nodes, *steps, *topology_seed, *dynamics_seed))
        }
    }
}

pub fn prepare(settings: &Settings) -> Result<Prepared> {
    prepare_dataset(load_source(&settings.source()?)?, settings)
}

/// Builds the graph, assigns roles with the configured missing pattern,
/// splits the series and fits the normalisation on observed training data.
pub fn prepare_dataset(dataset: Dataset, settings: &Settings) -> Result<Prepared> {
    let graph = dataset.adjacency(settings.gamma, settings.delta)?;
    let mut pattern = MissingPattern::new(settings.pattern, settings.train.alpha, settings.train.seed);
    pattern.center = settings.region_center;
    let roles = apply_missing(&graph, &pattern)?;
    let observed: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] == Role::Observed).collect();
    if observed.len() < 2 || observed.len() == roles.len() {
        return Err(KitsError::Data(format!(
            "the missing pattern leaves {} of {} nodes observed; need at least two observed and one unobserved",
            observed.len(),
            roles.len()
        )));
    }
    let split = match &settings.test_months {
        Some(months) => {
            let ts = dataset
                .timestamps
                .as_ref()
                .ok_or_else(|| KitsError::Config("a month-based split needs a timestamp column".into()))?;
            split_by_test_months(ts, months)?
        }
        None => split_7_1_2(dataset.n_steps),
    };
    let norm = Normalization::fit(&dataset, settings.norm, &split.train, &observed)?;
    let values = norm.apply(&dataset.readings, dataset.n_nodes());
    let task = Task::new(graph.with_roles(roles)?, values, split)?;
    Ok(Prepared { dataset, task, norm })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn check_finite(report: &MetricsReport) -> Result<()> {
    if [report.mae, report.rmse, report.mre].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KitsError::Numerical(format!("non-finite metrics: {:?}", report)))
    }
}

/// Test-split metrics over the unobserved nodes, in original units.
pub fn test_metrics(params: &ModelParams, prepared: &Prepared, window: usize) -> Result<MetricsReport> {
    let report = evaluate_unobserved(
        params,
        &prepared.task,
        &prepared.task.split.test,
        window,
        &prepared.norm,
        &prepared.dataset.readings,
    )?;
    check_finite(&report)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub metrics: MetricsReport,
    pub outcome: TrainOutcome,
    pub dir: PathBuf,
}

pub fn cmd_train(settings: &Settings, out: &Path) -> Result<TrainArtifacts> {
    let prepared = prepare(settings)?;
    train_and_report(&prepared, &prepared, settings, out)
}

/// Trains on `source`, scores on `target`, writes all three artifacts.
fn train_and_report(source: &Prepared, target: &Prepared, settings: &Settings, out: &Path) -> Result<TrainArtifacts> {
    ensure_dir(out)?;
    let outcome = train(&source.task, &settings.train)?;
    let metrics = test_metrics(&outcome.params, target, settings.train.window)?;
    save_checkpoint(&outcome.params, &out.join(CHECKPOINT_FILE))?;
    std::fs::write(out.join(HISTORY_FILE), outcome.history_jsonl())?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    Ok(TrainArtifacts { metrics, outcome, dir: out.to_path_buf() })
}

pub fn cmd_evaluate(settings: &Settings, checkpoint: &Path, out: &Path) -> Result<MetricsReport> {
    let params = load_checkpoint(checkpoint)?;
    let prepared = prepare(settings)?;
    ensure_dir(out)?;
    let metrics = test_metrics(&params, &prepared, settings.train.window)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Scores a classical baseline on the test split, in original units.
pub fn baseline_metrics(prepared: &Prepared, kind: BaselineKind, k: usize) -> Result<MetricsReport> {
    let ds = &prepared.dataset;
    let n = ds.n_nodes();
    let observed = prepared.task.observed();
    let targets = prepared.task.unobserved();
    let dist = ds.distances()?;
    let mut spec = BaselineSpec::new(kind);
    spec.k = k;
    let default_range = max_finite_distance(&dist, n);
    let mut estimates = Vec::new();
    let mut labels = Vec::new();
    for r in &prepared.task.split.test {
        let x = &ds.readings[r.start * n..r.end * n];
        estimates.extend(run_baseline(&spec, x, r.len(), n, &dist, &observed, &targets, default_range)?);
        labels.extend(x.chunks(n).flat_map(|row| targets.iter().map(move |&j| row[j])));
    }
    let report = evaluate_all(&labels, &estimates)?;
    check_finite(&report)?;
    Ok(report)
}

pub fn cmd_baseline(settings: &Settings, kind: BaselineKind, out: &Path) -> Result<MetricsReport> {
    let prepared = prepare(settings)?;
    ensure_dir(out)?;
    let metrics = baseline_metrics(&prepared, kind, settings.baseline_k)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Largest-degree statistics of training graphs against the inference graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphGapReport {
    pub alpha: f64,
    pub n_batches: usize,
    pub inference_nodes: usize,
    pub inference_largest_degree: usize,
    pub inference_mean_degree: f64,
    pub increment: DegreeStats,
    pub decrement: DegreeStats,
    /// `(inference largest − average training largest) / inference largest`.
    pub increment_relative_gap: f64,
    pub decrement_relative_gap: f64,
}

/// Generates `n_batches` training graphs per strategy from the observed
/// subgraph: increment inserts fresh virtual nodes every batch; decrement
/// trains on the observed subgraph itself.
pub fn graph_gap(task: &Task, settings: &Settings, n_batches: usize) -> Result<GraphGapReport> {
    if n_batches == 0 {
        return Err(KitsError::Config("graph-gap needs at least one batch".into()));
    }
    let inference = &task.graph;
    let degrees = inference.undirected_degrees();
    let inference_largest = degrees.iter().copied().max().unwrap_or(0);
    let inference_mean = degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64;
    let observed = task.observed_graph()?;

    let mut ins = InsertionConfig::new(settings.train.alpha);
    ins.epsilon_range = settings.train.epsilon_range;
    let mut rng = stream_rng(settings.train.seed, Stream::Augment);
    let mut increment = DegreeAccumulator::default();
    let mut decrement = DegreeAccumulator::default();
    for _ in 0..n_batches {
        increment.push(&insert_virtual_nodes(&observed, &ins, &mut rng)?.graph);
        decrement.push(&observed);
    }
    let (increment, decrement) = (increment.finish()?, decrement.finish()?);
    let gap = |s: &DegreeStats| {
        if inference_largest == 0 {
            0.0
        } else {
            (inference_largest as f64 - s.avg) / inference_largest as f64
        }
    };
    Ok(GraphGapReport {
        alpha: settings.train.alpha,
        n_batches,
        inference_nodes: inference.n_nodes(),
        inference_largest_degree: inference_largest,
        inference_mean_degree: inference_mean,
        increment_relative_gap: gap(&increment),
        decrement_relative_gap: gap(&decrement),
        increment,
        decrement,
    })
}

pub fn cmd_graph_gap(settings: &Settings, out: &Path) -> Result<GraphGapReport> {
    let prepared = prepare(settings)?;
    ensure_dir(out)?;
    let report = graph_gap(&prepared.task, settings, settings.gap_batches)?;
    write_json(&out.join(GRAPH_GAP_FILE), &report)?;
    Ok(report)
}

/// Writes `readings.csv` and `topology.csv` for a synthetic dataset.
pub fn cmd_synth(config: &SynthConfig, out: &Path) -> Result<Dataset> {
    let ds = synth_generate(config)?;
    ensure_dir(out)?;
    save_readings(&ds, &out.join("readings.csv"))?;
    save_topology(&ds, &out.join("topology.csv"))?;
    Ok(ds)
}

/// Scores a model on `target` without retraining. With a checkpoint it is
/// loaded as is; otherwise a model is trained on `source` first and its
/// checkpoint and history are written alongside the metrics.
pub fn cmd_transfer(
    source: &Settings,
    target: &Settings,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<MetricsReport> {
    let target_prepared = prepare(target)?;
    match checkpoint {
        Some(path) => {
            let params = load_checkpoint(path)?;
            ensure_dir(out)?;
            let metrics = test_metrics(&params, &target_prepared, target.train.window)?;
            write_json(&out.join(METRICS_FILE), &metrics)?;
            Ok(metrics)
        }
        None => {
            let source_prepared = prepare(source)?;
            Ok(train_and_report(&source_prepared, &target_prepared, source, out)?.metrics)
        }
    }
}
