//! Error metrics over a held-out index set.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{KitsError, Result};

/// MAE, MAPE, MRE, RMSE and R2 over the index set Ω.
///
/// MAPE skips entries whose label is exactly zero; `n_mape_excluded` counts
/// them. R2 is NaN (serialised as `null`) when the labels over Ω are constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mape: f64,
    pub mre: f64,
    pub rmse: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub r2: f64,
    pub n_points: usize,
    pub n_mape_excluded: usize,
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Evaluates `y_hat` against `y` on the entries listed in `omega`.
pub fn evaluate(y: &[f64], y_hat: &[f64], omega: &[usize]) -> Result<MetricsReport> {
    if y.len() != y_hat.len() {
        return Err(KitsError::Dimension(format!("{} labels vs {} estimates", y.len(), y_hat.len())));
    }
    if omega.is_empty() {
        return Err(KitsError::Contract("evaluation index set is empty".into()));
    }
    if let Some(&bad) = omega.iter().find(|&&i| i >= y.len()) {
        return Err(KitsError::Index(format!("evaluation index {} out of range for {} entries", bad, y.len())));
    }
    let n = omega.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut label_abs_sum = 0.0;
    let mut label_sum = 0.0;
    let mut ape_sum = 0.0;
    let mut excluded = 0;
    for &i in omega {
        let r = y[i] - y_hat[i];
        abs_sum += r.abs();
        sq_sum += r * r;
        label_abs_sum += y[i].abs();
        label_sum += y[i];
        if y[i] == 0.0 {
            excluded += 1;
        } else {
            ape_sum += r.abs() / y[i].abs();
        }
    }
    if label_abs_sum == 0.0 {
        return Err(KitsError::Evaluation("all labels are zero; MAPE and MRE are undefined".into()));
    }
    let mean = label_sum / n;
    let total: f64 = omega.iter().map(|&i| (mean - y[i]) * (mean - y[i])).sum();
    let r2 = if total > 0.0 { 1.0 - sq_sum / total } else { f64::NAN };
    Ok(MetricsReport {
        mae: abs_sum / n,
        mape: ape_sum / (omega.len() - excluded) as f64,
        mre: abs_sum / label_abs_sum,
        rmse: (sq_sum / n).sqrt(),
        r2,
        n_points: omega.len(),
        n_mape_excluded: excluded,
    })
}

/// Evaluates over every entry.
pub fn evaluate_all(y: &[f64], y_hat: &[f64]) -> Result<MetricsReport> {
    let omega: Vec<usize> = (0..y.len()).collect();
    evaluate(y, y_hat, &omega)
}
