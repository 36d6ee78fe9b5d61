//! IsoScore: how uniformly a point cloud uses the dimensions of its space.
//!
//! The data are reoriented onto their principal axes, the per-axis variances
//! are rescaled to norm `sqrt(d)`, and the distance of that vector from the
//! all-ones vector is mapped onto `[0, 1]`. A score of 1 means every principal
//! direction carries the same variance; 0 means a single direction carries all
//! of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compute_covariance, sym_eig, EmbeddingMatrix, Normalization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoScoreReport {
    pub score: f64,
    /// Normalized distance between the variance profile and the isotropic one.
    pub defect: f64,
    pub n_dims: usize,
    pub n_points: usize,
}

pub fn isoscore(x: &EmbeddingMatrix) -> Result<IsoScoreReport> {
    let (n, d) = x.view().dim();
    if d < 2 {
        return Err(Error::invalid("isoscore needs at least two dimensions"));
    }
    if n < 2 {
        return Err(Error::invalid("isoscore needs at least two points"));
    }
    let cov = compute_covariance(x, Normalization::Population)?.values;
    let eig = sym_eig(&cov)?;
    // Variance along each principal axis: diag(U^T Sigma U).
    let u = &eig.eigenvectors;
    let variances: Vec<f64> = (0..d)
        .map(|k| {
            let col = u.column(k);
            col.dot(&cov.dot(&col)).max(0.0)
        })
        .collect();
    let (score, defect) = score_from_variances(&variances)?;
    Ok(IsoScoreReport {
        score,
        defect,
        n_dims: d,
        n_points: n,
    })
}

/// IsoScore of a principal-axis variance profile. Returns `(score, defect)`.
pub fn score_from_variances(variances: &[f64]) -> Result<(f64, f64)> {
    let d = variances.len();
    if d < 2 {
        return Err(Error::invalid("isoscore needs at least two dimensions"));
    }
    if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("variances must be finite and non-negative"));
    }
    let norm = variances.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateData("all variances are zero".into()));
    }
    let df = d as f64;
    let sqrt_d = df.sqrt();
    let dist = variances
        .iter()
        .map(|v| {
            let diff = sqrt_d * v / norm - 1.0;
            diff * diff
        })
        .sum::<f64>()
        .sqrt();
    let defect = (dist / (2.0 * (df - sqrt_d)).sqrt()).clamp(0.0, 1.0);
    let spread = df - defect * defect * (df - sqrt_d);
    let score = ((spread * spread - df) / (df * (df - 1.0))).clamp(0.0, 1.0);
    Ok((score, defect))
}
