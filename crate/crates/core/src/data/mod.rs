//! Datasets: readings tables, topology, temporal splits, normalisation and a
//! synthetic generator.

mod io;
mod synth;

pub use io::{load, load_readings, load_topology, save_readings, save_topology, TopologyFormat};
pub use synth::{synth_generate, SynthConfig};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{KitsError, Result};
use crate::graph::{build_adjacency, distance_matrix, DistanceSource, Metric, SpatialGraph};

/// Spatial side information for a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    /// Sparse `(from, to, distance)` triples over node indices.
    Edges(Vec<(usize, usize, f64)>),
    Coords {
        coords: Vec<[f64; 2]>,
        metric: Metric,
    },
}

/// `t × n` readings in row-major order (one row per time step).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub node_ids: Vec<String>,
    pub timestamps: Option<Vec<String>>,
    pub readings: Vec<f64>,
    pub n_steps: usize,
    pub topology: Topology,
    /// Threshold the dataset was built with, if known (the synthetic radius).
    pub delta_hint: Option<f64>,
}

impl Dataset {
    pub fn new(node_ids: Vec<String>, readings: Vec<f64>, topology: Topology) -> Result<Self> {
        let n = node_ids.len();
        if n == 0 || !readings.len().is_multiple_of(n) {
            return Err(KitsError::Data(format!("{} readings do not fill {} columns", readings.len(), n)));
        }
        let ds = Self { node_ids, timestamps: None, n_steps: readings.len() / n, readings, topology, delta_hint: None };
        ds.check_topology()?;
        Ok(ds)
    }

    fn check_topology(&self) -> Result<()> {
        let n = self.n_nodes();
        match &self.topology {
            Topology::Coords { coords, .. } if coords.len() != n => {
                Err(KitsError::Data(format!("{} readings columns but {} topology nodes", n, coords.len())))
            }
            Topology::Edges(edges) => match edges.iter().find(|e| e.0 >= n || e.1 >= n) {
                Some(e) => Err(KitsError::Data(format!("edge ({}, {}) outside {} nodes", e.0, e.1, n))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn value(&self, step: usize, node: usize) -> f64 {
        self.readings[step * self.n_nodes() + node]
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        match &self.topology {
            Topology::Coords { coords, .. } => Some(coords),
            Topology::Edges(_) => None,
        }
    }

    pub fn distance_source(&self) -> DistanceSource<'_> {
        match &self.topology {
            Topology::Edges(pairs) => DistanceSource::Pairs { n: self.n_nodes(), pairs },
            Topology::Coords { coords, metric } => DistanceSource::Coords { coords, metric: *metric },
        }
    }

    /// Dense `n × n` distances; missing pairs are infinite.
    pub fn distances(&self) -> Result<Vec<f64>> {
        Ok(distance_matrix(&self.distance_source())?.1)
    }

    /// Thresholded Gaussian-kernel graph over all nodes.
    ///
    /// Unset `delta` falls back to the dataset's own threshold, and failing
    /// that to `sqrt(γ·ln 10)`, the distance at which the kernel drops to 0.1.
    pub fn adjacency(&self, gamma: Option<f64>, delta: Option<f64>) -> Result<SpatialGraph> {
        let src = self.distance_source();
        let delta = match delta.or(self.delta_hint) {
            Some(d) => d,
            None => {
                let g = match gamma {
                    Some(g) => g,
                    None => {
                        let (n, d) = distance_matrix(&src)?;
                        crate::graph::distance_std(n, &d).powi(2)
                    }
                };
                (g * std::f64::consts::LN_10).sqrt()
            }
        };
        build_adjacency(&src, gamma, delta)
    }

    /// Copy restricted to the given time steps.
    pub fn slice_steps(&self, steps: Range<usize>) -> Self {
        let n = self.n_nodes();
        let mut out = self.clone();
        out.readings = self.readings[steps.start * n..steps.end * n].to_vec();
        out.timestamps = self.timestamps.as_ref().map(|ts| ts[steps.clone()].to_vec());
        out.n_steps = steps.len();
        out
    }
}

/// Train/validation/test time steps as lists of contiguous ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Range<usize>>,
    pub val: Vec<Range<usize>>,
    pub test: Vec<Range<usize>>,
}

/// Contiguous, unshuffled 70/10/20 split of `n_steps`.
pub fn split_7_1_2(n_steps: usize) -> Split {
    let a = 7 * n_steps / 10;
    let b = a + n_steps / 10;
    Split { train: vec![0..a], val: vec![a..b], test: vec![b..n_steps] }
}

/// Steps whose timestamp falls in one of `months` go to test; the final
/// eighth of the remaining steps is validation and the rest train.
///
/// Timestamps must start with `YYYY-MM`.
pub fn split_by_test_months(timestamps: &[String], months: &[u32]) -> Result<Split> {
    let mut test = Vec::new();
    let mut rest = Vec::new();
    for (i, ts) in timestamps.iter().enumerate() {
        let month = ts
            .get(5..7)
            .and_then(|m| m.parse::<u32>().ok())
            .ok_or_else(|| KitsError::Data(format!("row {}: cannot read a month from timestamp {:?}", i + 1, ts)))?;
        if months.contains(&month) {
            test.push(i);
        } else {
            rest.push(i);
        }
    }
    let n_val = rest.len() / 8;
    let (train, val) = rest.split_at(rest.len() - n_val);
    Ok(Split { train: to_ranges(train), val: to_ranges(val), test: to_ranges(&test) })
}

fn to_ranges(steps: &[usize]) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    for &s in steps {
        match out.last_mut() {
            Some(r) if r.end == s => r.end = s + 1,
            _ => out.push(s..s + 1),
        }
    }
    out
}

/// Start offsets of every length-`t` window lying inside one range.
pub fn window_starts(ranges: &[Range<usize>], t: usize) -> Vec<usize> {
    ranges.iter().filter(|r| r.len() >= t).flat_map(|r| r.start..=r.end - t).collect()
}

pub fn segment_len(ranges: &[Range<usize>]) -> usize {
    ranges.iter().map(|r| r.len()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    ZScore,
    MinMax,
    None,
}

impl std::str::FromStr for NormScheme {
    type Err = KitsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(Self::ZScore),
            "minmax" => Ok(Self::MinMax),
            "none" => Ok(Self::None),
            other => Err(KitsError::Config(format!("unknown normalisation {:?}", other))),
        }
    }
}

/// Fitted normalisation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Normalization {
    ZScore { mean: f64, std: f64 },
    MinMax { min: Vec<f64>, max: Vec<f64> },
    None,
}

impl Normalization {
    /// z-score: global mean/std of the observed nodes' training readings.
    /// min-max: each node's own training range (its capacity).
    pub fn fit(ds: &Dataset, scheme: NormScheme, train: &[Range<usize>], observed: &[usize]) -> Result<Self> {
        if segment_len(train) == 0 {
            return Err(KitsError::Data("training segment is empty".into()));
        }
        let steps = || train.iter().flat_map(|r| r.clone());
        match scheme {
            NormScheme::None => Ok(Self::None),
            NormScheme::ZScore => {
                if observed.is_empty() {
                    return Err(KitsError::Data("no observed nodes to fit normalisation on".into()));
                }
                let count = (segment_len(train) * observed.len()) as f64;
                let mean = steps()
                    .flat_map(|s| observed.iter().map(move |&j| (s, j)))
                    .map(|(s, j)| ds.value(s, j))
                    .sum::<f64>()
                    / count;
                let var = steps()
                    .flat_map(|s| observed.iter().map(move |&j| (s, j)))
                    .map(|(s, j)| (ds.value(s, j) - mean).powi(2))
                    .sum::<f64>()
                    / count;
                let std = var.sqrt();
                if !(std > 0.0) {
                    return Err(KitsError::Data("training readings have zero standard deviation".into()));
                }
                Ok(Self::ZScore { mean, std })
            }
            NormScheme::MinMax => {
                let n = ds.n_nodes();
                let mut min = vec![f64::INFINITY; n];
                let mut max = vec![f64::NEG_INFINITY; n];
                for s in steps() {
                    for j in 0..n {
                        min[j] = min[j].min(ds.value(s, j));
                        max[j] = max[j].max(ds.value(s, j));
                    }
                }
                if let Some(j) = (0..n).find(|&j| !(max[j] > min[j])) {
                    return Err(KitsError::Data(format!(
                        "node {} has zero range in the training segment",
                        ds.node_ids[j]
                    )));
                }
                Ok(Self::MinMax { min, max })
            }
        }
    }

    /// Normalises a value read at `node`.
    pub fn forward(&self, node: usize, x: f64) -> f64 {
        match self {
            Self::ZScore { mean, std } => (x - mean) / std,
            Self::MinMax { min, max } => (x - min[node]) / (max[node] - min[node]),
            Self::None => x,
        }
    }

    pub fn inverse(&self, node: usize, z: f64) -> f64 {
        match self {
            Self::ZScore { mean, std } => z * std + mean,
            Self::MinMax { min, max } => z * (max[node] - min[node]) + min[node],
            Self::None => z,
        }
    }

    /// Normalises a whole row-major `t × n` table.
    pub fn apply(&self, readings: &[f64], n: usize) -> Vec<f64> {
        readings.iter().enumerate().map(|(k, &x)| self.forward(k % n, x)).collect()
    }

    pub fn invert(&self, readings: &[f64], n: usize) -> Vec<f64> {
        readings.iter().enumerate().map(|(k, &z)| self.inverse(k % n, z)).collect()
    }
}
