//! Training batches for the three strategies.

use rand::seq::index::sample;
use rand::Rng;

use super::{Strategy, Task, TrainConfig};
use crate::error::{KitsError, Result};
use crate::graph::{insert_virtual_nodes, InsertionConfig, Role, SpatialGraph};
use crate::model::{GraphOp, Layout};

/// One training batch: `b` windows of `t` steps over the batch graph.
#[derive(Clone, Debug)]
pub struct AugmentedBatch {
    /// `[b·t·N_b]` readings in `(sample, step, node)` order; zero wherever no
    /// reading is fed in.
    pub x: Vec<f64>,
    /// Ground truth for the supervised term; equals `x` on input entries.
    pub y: Vec<f64>,
    pub layout: Layout,
    /// Batch graph without self-loops; virtual nodes follow observed ones.
    pub graph: SpatialGraph,
    pub op: GraphOp,
    /// `M`: 1 where a real reading is fed to the model.
    pub input_mask: Vec<f64>,
    /// 1 where the supervised loss applies (entries with a real reading).
    pub label_mask: Vec<f64>,
    /// Window start steps, one per sample.
    pub starts: Vec<usize>,
    /// Dataset node index of every batch node; `None` for virtual nodes.
    pub node_map: Vec<Option<usize>>,
}

impl AugmentedBatch {
    pub fn n_virtual(&self) -> usize {
        self.node_map.iter().filter(|m| m.is_none()).count()
    }
}

/// Samples `batch_size` window starts uniformly (with replacement) from the
/// training segment and builds the batch graph for `config.strategy`.
///
/// * increment: the observed subgraph plus freshly inserted virtual nodes;
///   virtual readings are zero and carry no labels.
/// * decrement: the observed subgraph; a random `α` share of its nodes is
///   hidden from the input but keeps its labels.
/// * transductive: the full graph; unobserved nodes are zero-valued and
///   unlabelled.
///
/// `window_rng` draws the start offsets and `graph_rng` the graph or the
/// hidden nodes, so each stream can be varied on its own.
pub fn make_batch<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    task: &Task,
    config: &TrainConfig,
    window_rng: &mut R1,
    graph_rng: &mut R2,
) -> Result<AugmentedBatch> {
    let t = config.window;
    let starts_pool = task.train_starts(t);
    if starts_pool.is_empty() {
        return Err(KitsError::Data(format!("training segment has no run of {} consecutive steps", t)));
    }
    let starts: Vec<usize> =
        (0..config.batch_size).map(|_| starts_pool[window_rng.random_range(0..starts_pool.len())]).collect();

    let observed = task.observed();
    let (graph, node_map, hidden): (SpatialGraph, Vec<Option<usize>>, Vec<bool>) = match config.strategy {
        Strategy::Increment => {
            let mut ins = InsertionConfig::new(config.alpha);
            ins.epsilon_range = config.epsilon_range;
            let aug = insert_virtual_nodes(&task.observed_graph()?, &ins, graph_rng)?;
            let mut map: Vec<Option<usize>> = observed.iter().map(|&i| Some(i)).collect();
            map.extend(std::iter::repeat_n(None, aug.n_virtual));
            let n = map.len();
            (aug.graph, map, vec![false; n])
        }
        Strategy::Decrement => {
            let n_o = observed.len();
            let k = ((config.alpha * n_o as f64).round() as usize).clamp(1, n_o.saturating_sub(1).max(1));
            let mut hidden = vec![false; n_o];
            for i in sample(graph_rng, n_o, k) {
                hidden[i] = true;
            }
            (task.observed_graph()?, observed.iter().map(|&i| Some(i)).collect(), hidden)
        }
        Strategy::Transductive => {
            let n = task.n_nodes();
            (task.graph.clone(), (0..n).map(Some).collect(), vec![false; n])
        }
    };
    let n_b = node_map.len();
    let layout = Layout::new(starts.len(), t, n_b);
    let roles = graph.roles().to_vec();
    let mut x = vec![0.0; layout.rows()];
    let mut y = vec![0.0; layout.rows()];
    let mut input_mask = vec![0.0; layout.rows()];
    let mut label_mask = vec![0.0; layout.rows()];
    for (s, &start) in starts.iter().enumerate() {
        for step in 0..t {
            for (b, node) in node_map.iter().enumerate() {
                let Some(node) = *node else { continue };
                if roles[b] != Role::Observed {
                    continue;
                }
                let r = layout.row(s, step, b);
                let v = task.value(start + step, node);
                y[r] = v;
                label_mask[r] = 1.0;
                if !hidden[b] {
                    x[r] = v;
                    input_mask[r] = 1.0;
                }
            }
        }
    }
    let graph = graph.without_self_loops();
    let op = GraphOp::new(&graph)?;
    Ok(AugmentedBatch { x, y, layout, graph, op, input_mask, label_mask, starts, node_map })
}
