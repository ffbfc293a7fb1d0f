//! Command-line surface: argument definitions, settings resolution and the
//! command implementations behind the `kits` binary.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given by `--config` (a flat object with dotted keys such as
//! `"train.epochs"`), then explicit flags.

mod commands;
mod settings;

pub use commands::{
    baseline_metrics, cmd_baseline, cmd_evaluate, cmd_graph_gap, cmd_synth, cmd_train, cmd_transfer, graph_gap,
    load_source, prepare, prepare_dataset, test_metrics, GraphGapReport, Prepared, TrainArtifacts, CHECKPOINT_FILE,
    GRAPH_GAP_FILE, HISTORY_FILE, METRICS_FILE,
};
pub use settings::{parse_synth, DatasetSource, Settings};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::baselines::BaselineKind;
use crate::data::SynthConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "kits", version, about = "Inductive spatio-temporal kriging with virtual-node training graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and score it on the unobserved nodes of the test split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Score a saved checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Inference window length.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value = "runs/evaluate")]
        out: PathBuf,
    },
    /// Score a classical kriging baseline on the test split.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = ["mean", "knn", "okriging"])]
        method: String,
        /// Neighbour count for knn.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "runs/baseline")]
        out: PathBuf,
    },
    /// Compare training-graph degree statistics with the inference graph.
    GraphGap {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long, default_value = "runs/graph-gap")]
        out: PathBuf,
    },
    /// Write a synthetic dataset (readings.csv, topology.csv).
    Synth {
        #[arg(long, default_value_t = 60)]
        nodes: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Topology seed; the dynamics use seed + 1.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "data/synth")]
        out: PathBuf,
    },
    /// Apply a model trained on one dataset to another without retraining.
    Transfer {
        /// Training dataset (path or synth spec); ignored with --checkpoint.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        source_topology: Option<PathBuf>,
        /// Use this model instead of training on --source.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Target dataset options.
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "runs/transfer")]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// JSON settings file with flat dotted keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Readings CSV, or `synth[:nodes[:steps[:seed]]]`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Edge list (`from,to,dist`) or coordinates (`id,lat,lon` / `id,x,y`).
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long, value_parser = ["auto", "edges", "latlon", "xy"])]
    pub topology_format: Option<String>,
    /// Missing ratio α in (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = ["random", "f2c", "region"])]
    pub pattern: Option<String>,
    #[arg(long)]
    pub region_center: Option<usize>,
    /// Root seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["zscore", "minmax", "none"])]
    pub norm: Option<String>,
    /// Comma-separated months forming the test split, e.g. 3,6,9,12.
    #[arg(long)]
    pub test_months: Option<String>,
    /// Gaussian kernel width; defaults to the squared distance std.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Connection threshold.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long, value_parser = ["increment", "decrement", "transductive"])]
    pub strategy: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Feature dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Temporal radius m of the convolution.
    #[arg(long)]
    pub m: Option<usize>,
    /// Window length t.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => s.set(key, &Value::String(v.to_string())),
        None => Ok(()),
    }
}

impl DataArgs {
    /// Defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.merge_file(path)?;
        }
        put(&mut s, "dataset", &self.dataset)?;
        put(&mut s, "topology", &self.topology.as_ref().map(|p| p.display().to_string()))?;
        put(&mut s, "topology_format", &self.topology_format)?;
        put(&mut s, "alpha", &self.alpha)?;
        put(&mut s, "pattern", &self.pattern)?;
        put(&mut s, "region_center", &self.region_center)?;
        put(&mut s, "seed", &self.seed)?;
        put(&mut s, "norm", &self.norm)?;
        put(&mut s, "test_months", &self.test_months)?;
        put(&mut s, "gamma", &self.gamma)?;
        put(&mut s, "delta", &self.delta)?;
        Ok(s)
    }
}

impl ModelArgs {
    pub fn apply(&self, s: &mut Settings) -> Result<()> {
        put(s, "train.strategy", &self.strategy)?;
        put(s, "train.epochs", &self.epochs)?;
        put(s, "train.patience", &self.patience)?;
        put(s, "train.dim", &self.dim)?;
        put(s, "train.layers", &self.layers)?;
        put(s, "train.m", &self.m)?;
        put(s, "train.window", &self.window)?;
        put(s, "train.batch_size", &self.batch_size)?;
        put(s, "train.batches_per_epoch", &self.batches_per_epoch)?;
        put(s, "train.lambda", &self.lambda)?;
        put(s, "train.lr", &self.lr)?;
        put(s, "train.clip", &self.clip)?;
        s.finish();
        Ok(())
    }
}

/// Runs one command and returns a short JSON summary for stdout.
pub fn run(cli: Cli) -> Result<String> {
    let summary = match cli.command {
        Command::Train { data, model, out } => {
            let mut s = data.resolve()?;
            model.apply(&mut s)?;
            let art = cmd_train(&s, &out)?;
            serde_json::to_string(&art.metrics)?
        }
        Command::Evaluate { data, checkpoint, window, out } => {
            let mut s = data.resolve()?;
            put(&mut s, "train.window", &window)?;
            serde_json::to_string(&cmd_evaluate(&s, &checkpoint, &out)?)?
        }
        Command::Baseline { data, method, k, out } => {
            let mut s = data.resolve()?;
            put(&mut s, "baseline.k", &k)?;
            let kind: BaselineKind = method.parse()?;
            serde_json::to_string(&cmd_baseline(&s, kind, &out)?)?
        }
        Command::GraphGap { data, batches, out } => {
            let mut s = data.resolve()?;
            put(&mut s, "graph_gap.batches", &batches)?;
            serde_json::to_string(&cmd_graph_gap(&s, &out)?)?
        }
        Command::Synth { nodes, steps, seed, out } => {
            let ds = cmd_synth(&SynthConfig::new(nodes, steps, seed, seed + 1), &out)?;
            format!(r#"{{"nodes":{},"steps":{},"out":{:?}}}"#, ds.n_nodes(), ds.n_steps, out.display().to_string())
        }
        Command::Transfer { source, source_topology, checkpoint, data, model, out } => {
            let mut target = data.resolve()?;
            model.apply(&mut target)?;
            let mut src = target.clone();
            if checkpoint.is_none() {
                let Some(dataset) = source else {
                    return Err(crate::KitsError::Config("transfer needs --source or --checkpoint".into()));
                };
                src.dataset = dataset;
                src.topology = source_topology;
            }
            serde_json::to_string(&cmd_transfer(&src, &target, checkpoint.as_deref(), &out)?)?
        }
    };
    Ok(summary)
}
