use serde::{Deserialize, Serialize};

use super::SpatialGraph;
use crate::error::{KitsError, Result};

/// Distribution of the per-graph largest node degree over a batch of graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub avg: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Mean node degree, averaged over the batch.
    pub mean_degree: f64,
    pub n_graphs: usize,
}

pub fn degree_stats<'a, I>(graphs: I) -> Result<DegreeStats>
where
    I: IntoIterator<Item = &'a SpatialGraph>,
{
    let mut acc = DegreeAccumulator::default();
    for g in graphs {
        acc.push(g);
    }
    acc.finish()
}

/// Streaming form of [`degree_stats`] for batches too large to keep alive.
#[derive(Clone, Debug, Default)]
pub struct DegreeAccumulator {
    largest: Vec<f64>,
    mean_degree_sum: f64,
}

impl DegreeAccumulator {
    pub fn push(&mut self, g: &SpatialGraph) {
        let degrees = g.undirected_degrees();
        self.largest.push(degrees.iter().copied().max().unwrap_or(0) as f64);
        if !degrees.is_empty() {
            self.mean_degree_sum += degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
        }
    }

    pub fn finish(&self) -> Result<DegreeStats> {
        stats_from_largest(&self.largest, self.mean_degree_sum / self.largest.len().max(1) as f64)
    }
}

/// Builds the summary from already computed largest degrees.
fn stats_from_largest(largest: &[f64], mean_degree: f64) -> Result<DegreeStats> {
    if largest.is_empty() {
        return Err(KitsError::Contract("degree statistics need at least one graph".into()));
    }
    let mut sorted = largest.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    Ok(DegreeStats {
        avg: sorted.iter().sum::<f64>() / k as f64,
        median,
        min: sorted[0],
        max: sorted[k - 1],
        mean_degree,
        n_graphs: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> SpatialGraph {
        let n = leaves + 1;
        let mut w = vec![0.0; n * n];
        w[1..n].fill(1.0);
        SpatialGraph::observed(n, w, None).unwrap()
    }

    #[test]
    fn star_has_its_leaf_count_on_every_statistic() {
        let s = degree_stats([&star(5)]).unwrap();
        assert_eq!((s.avg, s.median, s.min, s.max), (5.0, 5.0, 5.0, 5.0));
        assert_eq!(s.n_graphs, 1);
        // 5 leaves of degree 1 plus the hub of degree 5
        assert!((s.mean_degree - 10.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_graphs_aggregate() {
        let (a, b) = (star(4), star(8));
        let s = degree_stats([&a, &b]).unwrap();
        assert_eq!((s.avg, s.min, s.max, s.median), (6.0, 4.0, 8.0, 6.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(degree_stats(std::iter::empty::<&SpatialGraph>()).is_err());
    }
}
