//! Spatial graphs: kernel adjacency, missing patterns, virtual-node
//! augmentation and degree statistics.

mod augment;
mod missing;
mod stats;

pub use augment::{
    insert_virtual_nodes, virtual_count, AttachMode, Augmentation, EdgeDirection, EdgeProbability, InsertionConfig,
    VIRTUAL_EDGE_WEIGHT,
};
pub use missing::{apply_missing, MissingKind, MissingPattern};
pub use stats::{degree_stats, DegreeAccumulator, DegreeStats};

use serde::{Deserialize, Serialize};

use crate::error::{KitsError, Result};
use crate::tensor::SparseMatrix;

/// Mean Earth radius in kilometres.
const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Observed,
    Virtual,
    Unobserved,
}

impl Role {
    /// Observed nodes carry readings; the other roles are kriging targets.
    pub fn has_readings(self) -> bool {
        self == Role::Observed
    }
}

/// Weighted adjacency over nodes with role labels.
///
/// `weights[i * n + j]` is the affinity of the edge along which node `i`
/// aggregates from node `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    n: usize,
    weights: Vec<f64>,
    roles: Vec<Role>,
    coords: Option<Vec<[f64; 2]>>,
    neighbor_map: Vec<Vec<usize>>,
}

impl SpatialGraph {
    pub fn new(n: usize, weights: Vec<f64>, roles: Vec<Role>, coords: Option<Vec<[f64; 2]>>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(KitsError::Dimension(format!("{} weights for {} nodes", weights.len(), n)));
        }
        if roles.len() != n {
            return Err(KitsError::Dimension(format!("{} roles for {} nodes", roles.len(), n)));
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(KitsError::Dimension(format!("{} coordinates for {} nodes", c.len(), n)));
            }
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0 || **w > 1.0) {
            return Err(KitsError::Data(format!("adjacency weight {} outside [0, 1]", bad)));
        }
        let neighbor_map = (0..n).map(|i| (0..n).filter(|&j| j != i && weights[i * n + j] > 0.0).collect()).collect();
        Ok(Self { n, weights, roles, coords, neighbor_map })
    }

    /// Graph over `n` nodes that are all observed.
    pub fn observed(n: usize, weights: Vec<f64>, coords: Option<Vec<[f64; 2]>>) -> Result<Self> {
        Self::new(n, weights, vec![Role::Observed; n], coords)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn with_roles(mut self, roles: Vec<Role>) -> Result<Self> {
        if roles.len() != self.n {
            return Err(KitsError::Dimension(format!("{} roles for {} nodes", roles.len(), self.n)));
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// First-order out-neighbours of `i` (positive weight, excluding `i`).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbor_map[i]
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.n).filter(|&i| self.roles[i] == role).collect()
    }

    /// Induced subgraph over `nodes`, in the given order.
    pub fn subgraph(&self, nodes: &[usize]) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&i| i >= self.n) {
            return Err(KitsError::Index(format!("node {} out of range for {} nodes", bad, self.n)));
        }
        let m = nodes.len();
        let mut w = vec![0.0; m * m];
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                w[a * m + b] = self.weight(i, j);
            }
        }
        let roles = nodes.iter().map(|&i| self.roles[i]).collect();
        let coords = self.coords.as_ref().map(|c| nodes.iter().map(|&i| c[i]).collect());
        Self::new(m, w, roles, coords)
    }

    /// Copy with the diagonal zeroed (A⁻).
    pub fn without_self_loops(&self) -> Self {
        let mut out = self.clone();
        out.weights = remove_self_loops(self.n, &self.weights);
        out
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.weight(i, i) != 0.0)
    }

    /// Row-normalised operator: each row divided by its sum, zero rows stay zero.
    pub fn row_normalized(&self) -> SparseMatrix {
        let n = self.n;
        let mut dense = self.weights.clone();
        for row in dense.chunks_mut(n.max(1)) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|w| *w /= s);
            }
        }
        SparseMatrix::from_dense(n, n, &dense)
    }

    /// Number of distinct neighbours per node, counting an edge present in
    /// either direction once.
    pub fn undirected_degrees(&self) -> Vec<usize> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i && (self.weight(i, j) > 0.0 || self.weight(j, i) > 0.0)).count())
            .collect()
    }

    pub fn largest_degree(&self) -> usize {
        self.undirected_degrees().into_iter().max().unwrap_or(0)
    }
}

/// Zeroes the diagonal of a square row-major matrix.
pub fn remove_self_loops(n: usize, a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    for i in 0..n {
        out[i * n + i] = 0.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Planar coordinates.
    Euclidean,
    /// (lat, lon) in degrees; distances in kilometres.
    Haversine,
}

/// Where pairwise distances come from.
#[derive(Clone, Copy, Debug)]
pub enum DistanceSource<'a> {
    /// Listed `(from, to, distance)` pairs over `n` nodes; unlisted pairs are
    /// infinitely far apart.
    Pairs {
        n: usize,
        pairs: &'a [(usize, usize, f64)],
    },
    Coords {
        coords: &'a [[f64; 2]],
        metric: Metric,
    },
}

pub fn haversine_km(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lat1, lon1) = (a[0].to_radians(), a[1].to_radians());
    let (lat2, lon2) = (b[0].to_radians(), b[1].to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn point_distance(a: [f64; 2], b: [f64; 2], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
        Metric::Haversine => haversine_km(a, b),
    }
}

/// Dense `n×n` distance matrix; the diagonal is 0 and unknown pairs are `+inf`.
pub fn distance_matrix(src: &DistanceSource<'_>) -> Result<(usize, Vec<f64>)> {
    match *src {
        DistanceSource::Pairs { n, pairs } => {
            if n == 0 || pairs.is_empty() {
                return Err(KitsError::Data("empty distance list".into()));
            }
            let mut d = vec![f64::INFINITY; n * n];
            for i in 0..n {
                d[i * n + i] = 0.0;
            }
            for &(i, j, dist) in pairs {
                if i >= n || j >= n {
                    return Err(KitsError::Data(format!("pair ({}, {}) outside {} nodes", i, j, n)));
                }
                if dist.is_nan() || dist < 0.0 {
                    return Err(KitsError::Data(format!("invalid distance {} for pair ({}, {})", dist, i, j)));
                }
                d[i * n + j] = dist;
            }
            Ok((n, d))
        }
        DistanceSource::Coords { coords, metric } => {
            let n = coords.len();
            if n == 0 {
                return Err(KitsError::Data("no coordinates".into()));
            }
            if let Some(bad) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
                return Err(KitsError::Data(format!("non-finite coordinate for node {}", bad)));
            }
            let mut d = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let v = point_distance(coords[i], coords[j], metric);
                    d[i * n + j] = v;
                    d[j * n + i] = v;
                }
            }
            Ok((n, d))
        }
    }
}

/// Standard deviation of the finite off-diagonal distances.
pub fn distance_std(n: usize, dist: &[f64]) -> f64 {
    let vals: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| dist[i * n + j])
        .filter(|d| d.is_finite())
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
}

/// Thresholded Gaussian kernel adjacency:
/// `A[i][j] = exp(-dist² / gamma)` when `dist <= delta`, else 0.
///
/// With `gamma = None` the kernel width is the squared standard deviation of
/// the finite pairwise distances.
pub fn build_adjacency(src: &DistanceSource<'_>, gamma: Option<f64>, delta: f64) -> Result<SpatialGraph> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(KitsError::Config(format!("threshold delta must be positive, got {}", delta)));
    }
    let (n, dist) = distance_matrix(src)?;
    let gamma = match gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(KitsError::Config(format!("kernel width gamma must be positive, got {}", g))),
        None => {
            let s = distance_std(n, &dist);
            if s <= 0.0 {
                return Err(KitsError::Data("pairwise distances have zero spread; set gamma explicitly".into()));
            }
            s * s
        }
    };
    let weights = dist.iter().map(|&d| if d <= delta { (-(d * d) / gamma).exp() } else { 0.0 }).collect();
    let coords = match *src {
        DistanceSource::Coords { coords, .. } => Some(coords.to_vec()),
        DistanceSource::Pairs { .. } => None,
    };
    SpatialGraph::observed(n, weights, coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_distance_gives_unit_weight_and_threshold_cuts() {
        let pairs = [(0, 1, 0.0), (1, 0, 3.0)];
        let g = build_adjacency(&DistanceSource::Pairs { n: 2, pairs: &pairs }, Some(1.0), 2.0).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 0.0); // delta + 1
        assert_eq!(g.weight(0, 0), 1.0);
    }

    #[test]
    fn collinear_points_hand_evaluation() {
        let d = 2.5;
        let coords = [[0.0, 0.0], [d, 0.0], [2.0 * d, 0.0]];
        let g = build_adjacency(
            &DistanceSource::Coords { coords: &coords, metric: Metric::Euclidean },
            Some(d * d),
            2.0 * d,
        )
        .unwrap();
        assert!((g.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.weight(0, 2) - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn default_gamma_is_squared_distance_std() {
        let coords = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let src = DistanceSource::Coords { coords: &coords, metric: Metric::Euclidean };
        let g = build_adjacency(&src, None, f64::INFINITY).unwrap();
        // off-diagonal distances: 1, 3, 2 (each twice) -> mean 2, variance 2/3
        let gamma: f64 = 2.0 / 3.0;
        assert!((g.weight(0, 1) - (-1.0 / gamma).exp()).abs() < 1e-12);
    }

    #[test]
    fn adjacency_input_errors() {
        let neg = [(0, 1, -1.0)];
        assert!(matches!(
            build_adjacency(&DistanceSource::Pairs { n: 2, pairs: &neg }, Some(1.0), 1.0),
            Err(KitsError::Data(_))
        ));
        assert!(matches!(
            build_adjacency(&DistanceSource::Pairs { n: 2, pairs: &[] }, Some(1.0), 1.0),
            Err(KitsError::Data(_))
        ));
        let coords: [[f64; 2]; 0] = [];
        assert!(matches!(
            build_adjacency(&DistanceSource::Coords { coords: &coords, metric: Metric::Euclidean }, None, 1.0),
            Err(KitsError::Data(_))
        ));
    }

    #[test]
    fn haversine_one_degree_of_latitude() {
        let d = haversine_km([0.0, 0.0], [1.0, 0.0]);
        assert!((d - 111.195).abs() < 0.01, "{d}");
    }

    #[test]
    fn self_loop_removal_examples() {
        assert_eq!(remove_self_loops(2, &[1.0, 0.0, 0.0, 1.0]), vec![0.0; 4]);
        let a = [0.0, 0.2, 0.2, 0.0];
        assert_eq!(remove_self_loops(2, &a), a.to_vec());
        let b = [0.5, 0.2, 0.2, 0.5];
        assert_eq!(remove_self_loops(2, &b), vec![0.0, 0.2, 0.2, 0.0]);
    }

    #[test]
    fn row_normalization_maps_empty_rows_to_zero() {
        let g = SpatialGraph::observed(3, vec![0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0], None).unwrap();
        let p = g.row_normalized();
        let row0: Vec<_> = p.row(0).collect();
        assert_eq!(row0, vec![(1, 2.0 / 3.0), (2, 1.0 / 3.0)]);
        assert_eq!(p.row(1).count(), 0);
    }

    #[test]
    fn undirected_degree_counts_either_direction() {
        let g = SpatialGraph::observed(3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], None).unwrap();
        assert_eq!(g.undirected_degrees(), vec![2, 1, 1]);
        assert_eq!(g.neighbors(1), &[] as &[usize]);
    }

    proptest! {
        #[test]
        fn self_loop_removal_is_idempotent(vals in prop::collection::vec(0.0f64..1.0, 16)) {
            let once = remove_self_loops(4, &vals);
            prop_assert_eq!(remove_self_loops(4, &once), once.clone());
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        prop_assert_eq!(once[i * 4 + j], vals[i * 4 + j]);
                    }
                }
            }
        }

        #[test]
        fn neighbor_map_matches_positive_weights(vals in prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 25)) {
            let g = SpatialGraph::observed(5, vals.clone(), None).unwrap();
            for i in 0..5 {
                let expected: Vec<usize> = (0..5).filter(|&j| j != i && vals[i * 5 + j] > 0.0).collect();
                prop_assert_eq!(g.neighbors(i), &expected[..]);
            }
        }
    }
}
