//! Non-learned kriging baselines: interval mean, k-nearest neighbours and
//! ordinary kriging with a Gaussian variogram.
//!
//! Readings are row-major `t × n` (one row per time step). Every function
//! returns `t × targets.len()` estimates in the order of `targets`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KitsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Mean,
    Knn,
    #[serde(alias = "okriging")]
    OKriging,
}

impl std::str::FromStr for BaselineKind {
    type Err = KitsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "knn" => Ok(Self::Knn),
            "okriging" | "ok" => Ok(Self::OKriging),
            other => Err(KitsError::Config(format!("unknown baseline {:?}", other))),
        }
    }
}

/// `γ(h) = nugget + sill·(1 − exp(−h²/range²))` for `h > 0`, and `γ(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub range: f64,
    pub sill: f64,
    pub nugget: f64,
}

impl Variogram {
    pub fn new(range: f64, sill: f64, nugget: f64) -> Result<Self> {
        if !(range > 0.0) || !(sill > 0.0) || !(nugget >= 0.0) {
            return Err(KitsError::Config(format!(
                "variogram needs range > 0, sill > 0, nugget >= 0 (got {}, {}, {})",
                range, sill, nugget
            )));
        }
        Ok(Self { range, sill, nugget })
    }

    /// Defaults: sill = variance of `values`, nugget = 1e-6·sill.
    pub fn fitted(values: &[f64], range: f64) -> Result<Self> {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(KitsError::Data("readings have zero variance; cannot fit a variogram".into()));
        }
        Self::new(range, var, 1e-6 * var)
    }

    pub fn gamma(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.nugget + self.sill * (1.0 - (-(h * h) / (self.range * self.range)).exp())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub k: usize,
    pub variogram: Option<Variogram>,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        Self { kind, k: 10, variogram: None }
    }
}

fn check_shape(x: &[f64], t: usize, n: usize, observed: &[usize], targets: &[usize]) -> Result<()> {
    if x.len() != t * n {
        return Err(KitsError::Dimension(format!("{} readings for {}×{}", x.len(), t, n)));
    }
    if let Some(&bad) = observed.iter().chain(targets).find(|&&i| i >= n) {
        return Err(KitsError::Index(format!("node {} out of range for {} nodes", bad, n)));
    }
    Ok(())
}

/// Every target receives the mean over observed nodes at the same interval.
pub fn mean_impute(x: &[f64], t: usize, n: usize, observed: &[usize], targets: &[usize]) -> Result<Vec<f64>> {
    check_shape(x, t, n, observed, targets)?;
    if observed.is_empty() {
        return Err(KitsError::Data("mean imputation needs at least one observed node".into()));
    }
    let mut out = Vec::with_capacity(t * targets.len());
    for row in x.chunks(n.max(1)).take(t) {
        let mean = observed.iter().map(|&j| row[j]).sum::<f64>() / observed.len() as f64;
        out.extend(std::iter::repeat_n(mean, targets.len()));
    }
    Ok(out)
}

/// The `k` observed nodes closest to `target` (ties by index), skipping
/// infinite distances.
pub fn nearest_observed(dist: &[f64], n: usize, observed: &[usize], target: usize, k: usize) -> Result<Vec<usize>> {
    let mut cand: Vec<usize> = observed.iter().copied().filter(|&j| dist[target * n + j].is_finite()).collect();
    if cand.is_empty() {
        return Err(KitsError::Data(format!("node {} has no observed node at finite distance", target)));
    }
    cand.sort_by(|&a, &b| dist[target * n + a].total_cmp(&dist[target * n + b]).then(a.cmp(&b)));
    cand.truncate(k);
    Ok(cand)
}

/// Unweighted mean of the `k` nearest observed nodes (all of them when fewer
/// are reachable).
pub fn knn_krige(
    x: &[f64],
    t: usize,
    n: usize,
    dist: &[f64],
    observed: &[usize],
    targets: &[usize],
    k: usize,
) -> Result<Vec<f64>> {
    check_shape(x, t, n, observed, targets)?;
    if k == 0 {
        return Err(KitsError::Config("knn needs k >= 1".into()));
    }
    if dist.len() != n * n {
        return Err(KitsError::Dimension(format!("{} distances for {} nodes", dist.len(), n)));
    }
    let neighbours: Vec<Vec<usize>> =
        targets.iter().map(|&u| nearest_observed(dist, n, observed, u, k)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t * targets.len());
    for row in x.chunks(n.max(1)).take(t) {
        for nb in &neighbours {
            out.push(nb.iter().map(|&j| row[j]).sum::<f64>() / nb.len() as f64);
        }
    }
    Ok(out)
}

/// Ordinary-kriging weights of the observed nodes for one target location.
///
/// Solves `[Γ 1; 1ᵀ 0] [w; μ] = [γ(d₀); 1]`; the weights sum to one.
pub fn okriging_weights(dist: &[f64], n: usize, observed: &[usize], target: usize, v: &Variogram) -> Result<Vec<f64>> {
    let k = observed.len();
    if k == 0 {
        return Err(KitsError::Data("ordinary kriging needs at least one observed node".into()));
    }
    let mut system = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (a, &i) in observed.iter().enumerate() {
        for (b, &j) in observed.iter().enumerate() {
            system[(a, b)] = if a == b { 0.0 } else { v.gamma(dist[i * n + j]) };
        }
        system[(a, k)] = 1.0;
        system[(k, a)] = 1.0;
        rhs[a] = v.gamma(dist[target * n + i]);
    }
    rhs[k] = 1.0;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| KitsError::Numerical(format!("ordinary-kriging system for node {} is singular", target)))?;
    if solution.iter().any(|w| !w.is_finite()) {
        return Err(KitsError::Numerical(format!("ordinary-kriging weights for node {} are not finite", target)));
    }
    Ok(solution.iter().take(k).copied().collect())
}

pub fn okriging(
    x: &[f64],
    t: usize,
    n: usize,
    dist: &[f64],
    observed: &[usize],
    targets: &[usize],
    variogram: &Variogram,
) -> Result<Vec<f64>> {
    check_shape(x, t, n, observed, targets)?;
    if dist.len() != n * n {
        return Err(KitsError::Dimension(format!("{} distances for {} nodes", dist.len(), n)));
    }
    let weights: Vec<Vec<f64>> =
        targets.iter().map(|&u| okriging_weights(dist, n, observed, u, variogram)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t * targets.len());
    for row in x.chunks(n.max(1)).take(t) {
        for w in &weights {
            out.push(observed.iter().zip(w).map(|(&j, wj)| wj * row[j]).sum());
        }
    }
    Ok(out)
}

/// Largest finite off-diagonal distance.
pub fn max_finite_distance(dist: &[f64], n: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let d = dist[i * n + j];
            if i != j && d.is_finite() {
                best = best.max(d);
            }
        }
    }
    best
}

/// Dispatches on `spec.kind`. Without an explicit variogram the ordinary
/// kriging baseline fits one with `default_range` on the observed readings.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline(
    spec: &BaselineSpec,
    x: &[f64],
    t: usize,
    n: usize,
    dist: &[f64],
    observed: &[usize],
    targets: &[usize],
    default_range: f64,
) -> Result<Vec<f64>> {
    match spec.kind {
        BaselineKind::Mean => mean_impute(x, t, n, observed, targets),
        BaselineKind::Knn => knn_krige(x, t, n, dist, observed, targets, spec.k),
        BaselineKind::OKriging => {
            let v = match spec.variogram {
                Some(v) => v,
                None => {
                    let values: Vec<f64> =
                        x.chunks(n.max(1)).take(t).flat_map(|row| observed.iter().map(move |&j| row[j])).collect();
                    Variogram::fitted(&values, default_range)?
                }
            };
            okriging(x, t, n, dist, observed, targets, &v)
        }
    }
}
