//! Growing the observed graph with virtual nodes.
//!
//! Each virtual node picks an existing node uniformly at random from the
//! growing neighbour map, links to it and to each of its first-order
//! neighbours with a per-node probability `p`, and every created link gets a
//! random direction. Later virtual nodes may attach to earlier ones.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Role, SpatialGraph};
use crate::error::{KitsError, Result};

/// Weight given to every virtual edge: the kernel value at distance zero.
pub const VIRTUAL_EDGE_WEIGHT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDirection {
    /// Only `A[c][e]` is set: the existing node `c` aggregates from the virtual node `e`.
    Forward,
    /// Only `A[e][c]` is set.
    Backward,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeProbability {
    /// Draw `p ~ U[0, 1]` once per virtual node.
    Random,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachMode {
    /// Candidates are the picked node's first-order neighbours.
    Neighbors,
    /// Candidates are drawn from all known nodes, so links may be long-range.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionConfig {
    pub alpha: f64,
    pub epsilon_range: (f64, f64),
    pub edge_probability: EdgeProbability,
    pub attach_mode: AttachMode,
}

impl InsertionConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            epsilon_range: (0.0, 0.2),
            edge_probability: EdgeProbability::Random,
            attach_mode: AttachMode::Neighbors,
        }
    }
}

/// Result of one insertion round. Nodes `0..n_observed` keep their original
/// order; virtual nodes follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmentation {
    pub graph: SpatialGraph,
    pub n_observed: usize,
    pub n_virtual: usize,
    pub epsilon: f64,
    /// `(virtual node, existing node, direction)` for every created link.
    pub edges: Vec<(usize, usize, EdgeDirection)>,
}

/// `int(N_o / (1 - alpha + eps)) - N_o`, never negative.
pub fn virtual_count(n_observed: usize, alpha: f64, epsilon: f64) -> usize {
    let total = (n_observed as f64 / (1.0 - alpha + epsilon)).floor();
    (total as i64 - n_observed as i64).max(0) as usize
}

/// Inserts virtual nodes into an all-observed graph.
pub fn insert_virtual_nodes<R: Rng + ?Sized>(
    graph: &SpatialGraph,
    config: &InsertionConfig,
    rng: &mut R,
) -> Result<Augmentation> {
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(KitsError::Config(format!("missing ratio must lie in (0, 1), got {}", alpha)));
    }
    let (lo, hi) = config.epsilon_range;
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(KitsError::Config(format!("invalid epsilon range [{}, {}]", lo, hi)));
    }
    if let EdgeProbability::Fixed(p) = config.edge_probability {
        if !(0.0..=1.0).contains(&p) {
            return Err(KitsError::Config(format!("edge probability {} outside [0, 1]", p)));
        }
    }
    if graph.roles().iter().any(|r| *r != Role::Observed) {
        return Err(KitsError::Contract("virtual nodes are inserted into the observed graph only".into()));
    }
    let n_o = graph.n_nodes();
    if n_o == 0 {
        return Err(KitsError::Data("cannot augment an empty graph".into()));
    }

    let epsilon = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let n_v = virtual_count(n_o, alpha, epsilon);
    let n = n_o + n_v;

    let mut weights = vec![0.0; n * n];
    for i in 0..n_o {
        weights[i * n..i * n + n_o].copy_from_slice(&graph.weights()[i * n_o..(i + 1) * n_o]);
    }
    // undirected first-order neighbour map, grown as virtual nodes arrive
    let mut neighbor_map: Vec<Vec<usize>> = (0..n_o)
        .map(|i| (0..n_o).filter(|&j| j != i && (graph.weight(i, j) > 0.0 || graph.weight(j, i) > 0.0)).collect())
        .collect();
    let mut edges = Vec::new();

    for e in n_o..n {
        let v = rng.random_range(0..e);
        let p = match config.edge_probability {
            EdgeProbability::Random => rng.random::<f64>(),
            EdgeProbability::Fixed(p) => p,
        };
        let mut candidates = vec![v];
        match config.attach_mode {
            AttachMode::Neighbors => {
                for &u in &neighbor_map[v] {
                    if rng.random::<f64>() < p {
                        candidates.push(u);
                    }
                }
            }
            AttachMode::Random => {
                let k = neighbor_map[v].iter().filter(|_| rng.random::<f64>() < p).count();
                let pool: Vec<usize> = (0..e).filter(|&u| u != v).collect();
                candidates.extend(pool.choose_multiple(rng, k).copied());
            }
        }
        for &c in &candidates {
            let direction = match rng.random_range(0..3u8) {
                0 => EdgeDirection::Forward,
                1 => EdgeDirection::Backward,
                _ => EdgeDirection::Both,
            };
            if direction != EdgeDirection::Backward {
                weights[c * n + e] = VIRTUAL_EDGE_WEIGHT;
            }
            if direction != EdgeDirection::Forward {
                weights[e * n + c] = VIRTUAL_EDGE_WEIGHT;
            }
            neighbor_map[c].push(e);
            edges.push((e, c, direction));
        }
        neighbor_map.push(candidates);
    }

    let mut roles = vec![Role::Observed; n_o];
    roles.extend(std::iter::repeat_n(Role::Virtual, n_v));
    let graph = SpatialGraph::new(n, weights, roles, None)?;
    Ok(Augmentation { graph, n_observed: n_o, n_virtual: n_v, epsilon, edges })
}
