use serde::{Deserialize, Serialize};

use super::{LabeledDataset, ModelKind, ModelParams, PredictorModel, Standardizer, TrainingMetadata};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsConfig {
    /// Ridge penalty added when the normal equations are singular.
    pub ridge_fallback: f64,
}

impl Default for OlsConfig {
    fn default() -> Self {
        Self {
            ridge_fallback: 1e-6,
        }
    }
}

/// Least squares on standardized features with an intercept, regressing the
/// final accuracy.
pub fn train_ols(data: &LabeledDataset, config: &OlsConfig) -> Result<PredictorModel> {
    if data.is_empty() {
        return Err(Error::Empty("ols needs at least one row".into()));
    }
    let standardizer = Standardizer::fit(&data.rows);
    let p = data.width() + 1;
    // normal equations over [1, x_std]
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut row = vec![0.0; p];
    for sample in &data.rows {
        row[0] = 1.0;
        row[1..].copy_from_slice(&standardizer.transform(&sample.features));
        for i in 0..p {
            rhs[i] += row[i] * sample.accuracy;
            for j in 0..=i {
                gram[i * p + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j * p + i] = gram[i * p + j];
        }
    }

    let (beta, ridge_applied) = match cholesky_solve(&gram, &rhs, p) {
        Some(beta) => (beta, false),
        None => {
            let mut ridged = gram.clone();
            for i in 1..p {
                ridged[i * p + i] += config.ridge_fallback;
            }
            let beta = cholesky_solve(&ridged, &rhs, p).ok_or_else(|| {
                Error::Validation("normal equations singular even after ridge fallback".into())
            })?;
            log::debug!("ols: singular normal equations, ridge {} applied", config.ridge_fallback);
            (beta, true)
        }
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Validation("ols produced non-finite coefficients".into()));
    }
    Ok(PredictorModel {
        kind: ModelKind::OlsRegression,
        standardizer,
        params: ModelParams::Linear {
            weights: beta[1..].to_vec(),
            bias: beta[0],
        },
        metadata: TrainingMetadata {
            ridge_applied,
            l2: if ridge_applied { config.ridge_fallback } else { 0.0 },
            ..TrainingMetadata::default()
        },
    })
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, `n × n`).
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1.0);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-10 * scale {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}
