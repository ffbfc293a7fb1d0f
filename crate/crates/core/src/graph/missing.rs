//! Splitting nodes into observed and unobserved sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Role, SpatialGraph};
use crate::error::{KitsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingKind {
    /// Each node is unobserved when its uniform draw falls below `alpha`.
    Random,
    /// Evenly spaced nodes along a space-filling order are unobserved.
    FineToCoarse,
    /// Only a ball around a centre node keeps its sensors.
    Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingPattern {
    pub kind: MissingKind,
    pub alpha: f64,
    pub seed: u64,
    /// Without coordinates, order nodes by index instead of failing.
    pub index_fallback: bool,
    /// Region centre; defaults to the node nearest the coordinate centroid.
    pub center: Option<usize>,
}

impl MissingPattern {
    pub fn random(alpha: f64, seed: u64) -> Self {
        Self { kind: MissingKind::Random, alpha, seed, index_fallback: false, center: None }
    }

    pub fn new(kind: MissingKind, alpha: f64, seed: u64) -> Self {
        Self { kind, alpha, seed, index_fallback: true, center: None }
    }
}

/// Assigns observed/unobserved roles to every node of `graph`.
pub fn apply_missing(graph: &SpatialGraph, pattern: &MissingPattern) -> Result<Vec<Role>> {
    let alpha = pattern.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(KitsError::Config(format!("missing ratio must lie in (0, 1), got {}", alpha)));
    }
    let n = graph.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(pattern.seed);
    match pattern.kind {
        MissingKind::Random => {
            Ok((0..n).map(|_| if rng.random::<f64>() < alpha { Role::Unobserved } else { Role::Observed }).collect())
        }
        MissingKind::FineToCoarse => {
            let order = spatial_order(graph, pattern)?;
            let n_missing = target_count(alpha, n);
            let mut roles = vec![Role::Observed; n];
            if n_missing > 0 {
                let step = n as f64 / n_missing as f64;
                let phase: f64 = rng.random();
                for j in 0..n_missing {
                    let pos = (((j as f64) + phase) * step).floor() as usize;
                    roles[order[pos.min(n - 1)]] = Role::Unobserved;
                }
            }
            Ok(roles)
        }
        MissingKind::Region => {
            let center = region_center(graph, pattern)?;
            let dist = |i: usize| -> f64 {
                match graph.coords() {
                    Some(c) => (c[i][0] - c[center][0]).hypot(c[i][1] - c[center][1]),
                    None => (i as f64 - center as f64).abs(),
                }
            };
            let mut by_dist: Vec<usize> = (0..n).collect();
            by_dist.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            let n_missing = target_count(alpha, n);
            let mut roles = vec![Role::Observed; n];
            for &i in &by_dist[n - n_missing..] {
                roles[i] = Role::Unobserved;
            }
            Ok(roles)
        }
    }
}

fn target_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64).round() as usize).min(n)
}

fn spatial_order(graph: &SpatialGraph, pattern: &MissingPattern) -> Result<Vec<usize>> {
    let n = graph.n_nodes();
    match graph.coords() {
        Some(coords) => {
            let (lo, hi) = bounding_box(coords);
            let keys: Vec<u64> = coords
                .iter()
                .map(|c| {
                    let scale = |v: f64, a: f64, b: f64| -> u32 {
                        if b > a {
                            (((v - a) / (b - a)) * 65535.0).round() as u32
                        } else {
                            0
                        }
                    };
                    hilbert_index(16, scale(c[0], lo[0], hi[0]), scale(c[1], lo[1], hi[1]))
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (keys[i], i));
            Ok(order)
        }
        None if pattern.index_fallback => Ok((0..n).collect()),
        None => Err(KitsError::Config("fine-to-coarse missing needs coordinates or the index fallback".into())),
    }
}

fn region_center(graph: &SpatialGraph, pattern: &MissingPattern) -> Result<usize> {
    let n = graph.n_nodes();
    if let Some(c) = pattern.center {
        if c >= n {
            return Err(KitsError::Config(format!("region centre {} outside {} nodes", c, n)));
        }
        return Ok(c);
    }
    match graph.coords() {
        Some(coords) => {
            let cx = coords.iter().map(|c| c[0]).sum::<f64>() / n as f64;
            let cy = coords.iter().map(|c| c[1]).sum::<f64>() / n as f64;
            let d = |i: usize| (coords[i][0] - cx).hypot(coords[i][1] - cy);
            Ok((0..n).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap_or(0))
        }
        None if pattern.index_fallback => Ok(n / 2),
        None => Err(KitsError::Config("region missing needs coordinates or the index fallback".into())),
    }
}

fn bounding_box(coords: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    (lo, hi)
}

/// Position of cell `(x, y)` along a Hilbert curve over a `2^order` grid.
fn hilbert_index(order: u32, mut x: u32, mut y: u32) -> u64 {
    let mut d: u64 = 0;
    let mut s: u32 = 1 << (order - 1);
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = s.wrapping_mul(2).wrapping_sub(1).wrapping_sub(x) & ((1 << order) - 1);
                y = s.wrapping_mul(2).wrapping_sub(1).wrapping_sub(y) & ((1 << order) - 1);
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}
