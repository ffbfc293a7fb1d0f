//! Batch construction, the optimisation loop with early stopping, and
//! validation by re-masking observed nodes.

mod batch;
mod optim;
#[cfg(test)]
mod tests;

pub use batch::{make_batch, AugmentedBatch};
pub use optim::{adam_step, clip_global_norm, cosine_lr, global_norm, AdamState};

use std::ops::Range;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{segment_len, window_starts, Normalization, Split};
use crate::error::{KitsError, Result};
use crate::graph::{Role, SpatialGraph};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{loss, ncr_pass, predict, GraphOp, Layout, ModelConfig, ModelParams};
use crate::tensor::{Tape, Tensor};

/// How training graphs are derived from the observed graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Grow the observed graph with virtual nodes.
    Increment,
    /// Hide a share of the observed nodes and reconstruct them.
    Decrement,
    /// Train on the full graph with the real unobserved nodes zero-valued.
    Transductive,
}

impl FromStr for Strategy {
    type Err = KitsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increment" => Ok(Self::Increment),
            "decrement" => Ok(Self::Decrement),
            "transductive" => Ok(Self::Transductive),
            other => Err(KitsError::Config(format!("unknown strategy {:?}", other))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Increment => "increment",
            Self::Decrement => "decrement",
            Self::Transductive => "transductive",
        })
    }
}

/// Independent random streams derived from the root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Mask = 0,
    Augment = 1,
    Init = 2,
    Batch = 3,
    Valid = 4,
}

/// ChaCha8 generator for one named stream of `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Temporal window `t`.
    pub window: usize,
    pub batch_size: usize,
    pub model: ModelConfig,
    pub lambda: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub epsilon_range: (f64, f64),
    pub alpha: f64,
    pub seed: u64,
    pub strategy: Strategy,
    /// Cap on batches per epoch.
    pub max_batches_per_epoch: usize,
    /// Share of observed nodes hidden during validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 24,
            batch_size: 32,
            model: ModelConfig::default(),
            lambda: 1.0,
            lr: 2e-4,
            max_epochs: 300,
            patience: 50,
            grad_clip_norm: 1.0,
            epsilon_range: (0.0, 0.2),
            alpha: 0.5,
            seed: 1,
            strategy: Strategy::Increment,
            max_batches_per_epoch: 50,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(KitsError::Config(msg));
        if self.window == 0 || self.batch_size == 0 || self.max_batches_per_epoch == 0 {
            return bad("window, batch size and batches per epoch must be positive".into());
        }
        if self.model.dim == 0 || self.model.layers == 0 {
            return bad("model dimension and depth must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.grad_clip_norm > 0.0) || !(self.lambda >= 0.0) {
            return bad(format!(
                "lr {} and clip norm {} must be positive, lambda {} nonnegative",
                self.lr, self.grad_clip_norm, self.lambda
            ));
        }
        if self.max_epochs == 0 || self.patience > self.max_epochs {
            return bad(format!("need 1 <= epochs ({}) and patience ({}) <= epochs", self.max_epochs, self.patience));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("missing ratio must lie in (0, 1), got {}", self.alpha));
        }
        let (lo, hi) = self.epsilon_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("invalid epsilon range [{}, {}]", lo, hi));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("validation fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }
}

/// A normalised dataset bound to its graph and split.
///
/// `graph` holds every node with its role (observed or unobserved) and no
/// self-loops; `values` is `n_steps × n` row-major. Readings of unobserved
/// nodes are never read during training or validation.
#[derive(Clone, Debug)]
pub struct Task {
    pub graph: SpatialGraph,
    pub values: Vec<f64>,
    pub n_steps: usize,
    pub split: Split,
}

impl Task {
    pub fn new(graph: SpatialGraph, values: Vec<f64>, split: Split) -> Result<Self> {
        let n = graph.n_nodes();
        if n == 0 || !values.len().is_multiple_of(n) {
            return Err(KitsError::Data(format!("{} values do not fill {} node columns", values.len(), n)));
        }
        if graph.roles().contains(&Role::Virtual) {
            return Err(KitsError::Contract("task graphs hold observed and unobserved nodes only".into()));
        }
        if graph.count_role(Role::Observed) < 2 {
            return Err(KitsError::Data("need at least two observed nodes".into()));
        }
        let n_steps = values.len() / n;
        let end = split.train.iter().chain(&split.val).chain(&split.test).map(|r| r.end).max().unwrap_or(0);
        if end > n_steps {
            return Err(KitsError::Data(format!("split reaches step {} but the series has {}", end, n_steps)));
        }
        Ok(Self { graph: graph.without_self_loops(), values, n_steps, split })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn value(&self, step: usize, node: usize) -> f64 {
        self.values[step * self.n_nodes() + node]
    }

    pub fn observed(&self) -> Vec<usize> {
        self.graph.nodes_with_role(Role::Observed)
    }

    pub fn unobserved(&self) -> Vec<usize> {
        self.graph.nodes_with_role(Role::Unobserved)
    }

    /// Induced subgraph over the observed nodes, in index order.
    pub fn observed_graph(&self) -> Result<SpatialGraph> {
        self.graph.subgraph(&self.observed())
    }

    pub fn train_starts(&self, t: usize) -> Vec<usize> {
        window_starts(&self.split.train, t)
    }
}

/// Windows of at most `t` steps tiling `ranges`; the last window of a range
/// is shifted back so it stays full length when the range allows it.
/// Returns `(start, len, first step to keep)` triples.
fn tiling(ranges: &[Range<usize>], t: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for r in ranges {
        if r.len() <= t {
            if !r.is_empty() {
                out.push((r.start, r.len(), r.start));
            }
            continue;
        }
        let mut s = r.start;
        while s < r.end {
            let start = s.min(r.end - t);
            out.push((start, t, s));
            s += t;
        }
    }
    out
}

/// First-pass estimates for every step of `ranges` over `graph`, feeding the
/// readings of the nodes flagged in `known` and zero elsewhere.
///
/// `values` is `n_steps × n` over the graph's nodes. The result is
/// `segment_len(ranges) × n`, steps in range order.
pub fn reconstruct(
    params: &ModelParams,
    graph: &GraphOp,
    values: &[f64],
    known: &[bool],
    ranges: &[Range<usize>],
    t: usize,
) -> Result<Vec<f64>> {
    let n = graph.n_nodes();
    if known.len() != n || !values.len().is_multiple_of(n.max(1)) {
        return Err(KitsError::Dimension(format!(
            "{} role flags, {} values for {} nodes",
            known.len(),
            values.len(),
            n
        )));
    }
    let mut out = Vec::with_capacity(segment_len(ranges) * n);
    for (start, len, keep_from) in tiling(ranges, t) {
        let layout = Layout::new(1, len, n);
        let x = &values[start * n..(start + len) * n];
        let mask: Vec<f64> = (0..len * n).map(|k| if known[k % n] { 1.0 } else { 0.0 }).collect();
        let est = predict(params, graph, x, &mask, layout)?;
        out.extend_from_slice(&est[(keep_from - start) * n..]);
    }
    Ok(out)
}

/// Fixed validation protocol: a seeded `val_fraction` share of the observed
/// nodes is hidden, the rest feed the model on the observed subgraph, and
/// errors are measured on the hidden entries of the validation segment.
#[derive(Clone, Debug)]
pub struct Validator {
    op: GraphOp,
    values: Vec<f64>,
    known: Vec<bool>,
    omega: Vec<usize>,
    ranges: Vec<Range<usize>>,
    n_obs: usize,
    window: usize,
}

impl Validator {
    pub fn new(task: &Task, config: &TrainConfig) -> Result<Self> {
        let ranges = task.split.val.clone();
        if segment_len(&ranges) == 0 {
            return Err(KitsError::Data("validation segment is empty".into()));
        }
        let observed = task.observed();
        let n_obs = observed.len();
        let k = ((config.val_fraction * n_obs as f64).round() as usize).clamp(1, n_obs - 1);
        let mut rng = stream_rng(config.seed, Stream::Valid);
        let mut known = vec![true; n_obs];
        for i in sample(&mut rng, n_obs, k) {
            known[i] = false;
        }
        let values: Vec<f64> = (0..task.n_steps)
            .flat_map(|s| observed.iter().map(move |&j| (s, j)))
            .map(|(s, j)| task.value(s, j))
            .collect();
        let total = segment_len(&ranges);
        let omega = (0..total * n_obs).filter(|&e| !known[e % n_obs]).collect();
        let op = GraphOp::new(&task.observed_graph()?)?;
        Ok(Self { op, values, known, omega, ranges, n_obs, window: config.window })
    }

    /// Observed-node positions (in observed order) hidden during validation.
    pub fn hidden(&self) -> Vec<usize> {
        (0..self.n_obs).filter(|&i| !self.known[i]).collect()
    }

    /// Ground truth on the validation segment, `steps × N_o`.
    pub fn labels(&self) -> Vec<f64> {
        self.ranges.iter().flat_map(|r| self.values[r.start * self.n_obs..r.end * self.n_obs].iter().copied()).collect()
    }

    /// Scores any estimate laid out like [`Validator::labels`].
    pub fn score(&self, estimate: &[f64]) -> Result<MetricsReport> {
        evaluate(&self.labels(), estimate, &self.omega)
    }

    pub fn validate(&self, params: &ModelParams) -> Result<MetricsReport> {
        let est = reconstruct(params, &self.op, &self.values, &self.known, &self.ranges, self.window)?;
        self.score(&est)
    }
}

/// Convenience wrapper around [`Validator`].
pub fn validate(params: &ModelParams, task: &Task, config: &TrainConfig) -> Result<MetricsReport> {
    Validator::new(task, config)?.validate(params)
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MAE.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub skipped_batches: usize,
}

impl TrainOutcome {
    pub fn history_jsonl(&self) -> String {
        self.history.iter().map(|r| serde_json::to_string(r).expect("plain record") + "\n").collect()
    }
}

/// Batches per epoch: train windows / batch size, at least 1, capped.
pub fn batches_per_epoch(task: &Task, config: &TrainConfig) -> usize {
    (task.train_starts(config.window).len() / config.batch_size).clamp(1, config.max_batches_per_epoch)
}

/// Loss and gradients of one batch.
pub fn batch_gradients(params: &ModelParams, batch: &AugmentedBatch, lambda: f64) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let x = tape.constant(Tensor::new(vec![batch.layout.rows(), 1], batch.y.clone())?);
    let out = ncr_pass(&mut tape, &bound, x, &batch.input_mask, batch.layout, &batch.op)?;
    let l = loss(&mut tape, &out, x, &batch.label_mask, lambda)?;
    let value = tape.value(l).item()?;
    if !value.is_finite() {
        return Err(KitsError::Numerical(format!("training loss became {}", value)));
    }
    tape.backward(l)?;
    let grads = bound
        .vars
        .iter()
        .zip(params.named())
        .map(|(v, (_, p))| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, grads))
}

/// Trains from a fresh initialisation drawn from the `Init` stream.
pub fn train(task: &Task, config: &TrainConfig) -> Result<TrainOutcome> {
    config.check()?;
    let params = ModelParams::init(config.model, &mut stream_rng(config.seed, Stream::Init))?;
    train_from(task, config, params)
}

/// Runs the optimisation loop from `params`: per batch, NCR passes, loss,
/// backward, clipping, a cosine-scheduled Adam step; validation after every
/// epoch; stops once `patience` epochs pass without improvement.
pub fn train_from(task: &Task, config: &TrainConfig, mut params: ModelParams) -> Result<TrainOutcome> {
    config.check()?;
    if task.train_starts(config.window).is_empty() {
        return Err(KitsError::Data(format!(
            "training segment of {} steps is shorter than the window {}",
            segment_len(&task.split.train),
            config.window
        )));
    }
    let validator = Validator::new(task, config)?;
    let mut window_rng = stream_rng(config.seed, Stream::Batch);
    let mut graph_rng = stream_rng(config.seed, Stream::Augment);
    let per_epoch = batches_per_epoch(task, config);
    let total_steps = config.max_epochs * per_epoch;
    let mut adam = AdamState::new(&params.tensors());
    let mut step = 0;
    let mut skipped = 0;
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        let mut loss_sum = 0.0;
        let mut used = 0;
        let mut lr = config.lr;
        for _ in 0..per_epoch {
            let batch = make_batch(task, config, &mut window_rng, &mut graph_rng)?;
            let (value, mut grads) = batch_gradients(&params, &batch, config.lambda)?;
            lr = cosine_lr(step, total_steps, config.lr);
            step += 1;
            if !grads.iter().all(Tensor::is_finite) {
                log::warn!("epoch {}: skipping a batch with non-finite gradients", epoch);
                skipped += 1;
                continue;
            }
            clip_global_norm(&mut grads, config.grad_clip_norm);
            adam_step(params.tensors_mut(), &grads, &mut adam, lr)?;
            loss_sum += value;
            used += 1;
        }
        if !params.is_finite() {
            return Err(KitsError::Numerical(format!("parameters diverged in epoch {}", epoch)));
        }
        let train_loss = if used > 0 { loss_sum / used as f64 } else { f64::NAN };
        let val_mae = validator.validate(&params)?.mae;
        if !val_mae.is_finite() {
            return Err(KitsError::Numerical(format!("validation MAE became {} in epoch {}", val_mae, epoch)));
        }
        log::info!("epoch {:>3}  train loss {:.5}  val mae {:.5}  lr {:.3e}", epoch, train_loss, val_mae, lr);
        history.push(EpochRecord { epoch, train_loss, val_mae, lr });
        if val_mae < best.0 {
            best = (val_mae, epoch, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome { params: best.2, history, best_epoch: best.1, best_val_mae: best.0, skipped_batches: skipped })
}

/// Estimates at every unobserved node over `ranges` on the full graph,
/// mapped back to original units and scored against `raw` readings
/// (`n_steps × n`, same node order as the task).
pub fn evaluate_unobserved(
    params: &ModelParams,
    task: &Task,
    ranges: &[Range<usize>],
    window: usize,
    norm: &Normalization,
    raw: &[f64],
) -> Result<MetricsReport> {
    let n = task.n_nodes();
    if raw.len() != task.values.len() {
        return Err(KitsError::Dimension(format!("{} raw readings for {} task values", raw.len(), task.values.len())));
    }
    let known: Vec<bool> = task.graph.roles().iter().map(|&r| r == Role::Observed).collect();
    if known.iter().all(|&k| k) {
        return Err(KitsError::Contract("no unobserved nodes to evaluate".into()));
    }
    let op = GraphOp::new(&task.graph)?;
    let est = reconstruct(params, &op, &task.values, &known, ranges, window)?;
    let est = norm.invert(&est, n);
    let labels: Vec<f64> = ranges.iter().flat_map(|r| raw[r.start * n..r.end * n].iter().copied()).collect();
    let omega: Vec<usize> = (0..labels.len()).filter(|&e| !known[e % n]).collect();
    evaluate(&labels, &est, &omega)
}
