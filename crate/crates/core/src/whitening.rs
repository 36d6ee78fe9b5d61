//! The five whitening transformations (PCA, ZCA, Cholesky, ZCA-Cor, PCA-Cor).
//!
//! All transforms use the row-vector convention `z = (x - mu) W`, so a fitted
//! model whitens by a single matrix product. For the correlation-based kinds
//! the per-dimension standardization `D^-1/2` is folded into `W`.
//!
//! Rank-deficient covariances (fewer sentences than dimensions is common for
//! LLM embeddings) are handled by flooring every eigenvalue at
//! `eps_relative * mean(eigenvalues)`. The floor actually applied is recorded
//! in [`WhiteningModel::eps_used`]; it is zero when no eigenvalue needed it.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    center, cholesky_spd, compute_covariance, compute_mean, correlation_from_covariance, invert,
    sym_eig, symmetrize, EmbeddingMatrix, MeanVector, Normalization,
};

pub const DEFAULT_EPS_RELATIVE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WhiteningKind {
    #[serde(rename = "pca")]
    Pca,
    #[serde(rename = "zca")]
    Zca,
    #[serde(rename = "chol")]
    Cholesky,
    #[serde(rename = "zca-cor")]
    ZcaCor,
    #[serde(rename = "pca-cor")]
    PcaCor,
}

impl WhiteningKind {
    pub const ALL: [WhiteningKind; 5] = [
        WhiteningKind::Pca,
        WhiteningKind::Zca,
        WhiteningKind::Cholesky,
        WhiteningKind::ZcaCor,
        WhiteningKind::PcaCor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WhiteningKind::Pca => "pca",
            WhiteningKind::Zca => "zca",
            WhiteningKind::Cholesky => "chol",
            WhiteningKind::ZcaCor => "zca-cor",
            WhiteningKind::PcaCor => "pca-cor",
        }
    }

    pub fn uses_correlation(self) -> bool {
        matches!(self, WhiteningKind::ZcaCor | WhiteningKind::PcaCor)
    }
}

impl fmt::Display for WhiteningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WhiteningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pca" => Ok(WhiteningKind::Pca),
            "zca" => Ok(WhiteningKind::Zca),
            "chol" | "cholesky" => Ok(WhiteningKind::Cholesky),
            "zca-cor" => Ok(WhiteningKind::ZcaCor),
            "pca-cor" => Ok(WhiteningKind::PcaCor),
            other => Err(Error::invalid(format!(
                "unknown whitening kind {other:?} (expected pca, zca, chol, zca-cor or pca-cor)"
            ))),
        }
    }
}

/// Which rows the whitening statistics are estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FitScope {
    #[serde(rename = "train")]
    TrainOnly,
    #[default]
    #[serde(rename = "all")]
    AllData,
}

impl FitScope {
    pub fn as_str(self) -> &'static str {
        match self {
            FitScope::TrainOnly => "train",
            FitScope::AllData => "all",
        }
    }
}

impl fmt::Display for FitScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "train-only" | "train_only" => Ok(FitScope::TrainOnly),
            "all" | "all-data" | "all_data" => Ok(FitScope::AllData),
            other => Err(Error::invalid(format!(
                "unknown fit scope {other:?} (expected train or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteningConfig {
    pub kind: WhiteningKind,
    /// Eigenvalue floor as a fraction of the mean eigenvalue.
    pub eps_relative: f64,
    pub fit_scope: FitScope,
}

impl WhiteningConfig {
    pub fn new(kind: WhiteningKind) -> Self {
        WhiteningConfig {
            kind,
            eps_relative: DEFAULT_EPS_RELATIVE,
            fit_scope: FitScope::default(),
        }
    }
}

/// A fitted whitening transform `z = (x - mean) w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    pub kind: WhiteningKind,
    pub mean: MeanVector,
    pub w: Array2<f64>,
    pub eps_used: f64,
    /// `(N, d)` of the data the model was fitted on.
    pub fit_dims: (usize, usize),
}

impl WhiteningModel {
    /// Reassembles a model from stored parts, validating shapes.
    pub fn from_parts(
        kind: WhiteningKind,
        mean: Array1<f64>,
        w: Array2<f64>,
        eps_used: f64,
        fit_dims: (usize, usize),
    ) -> Result<Self> {
        let d = mean.len();
        if w.dim() != (d, d) || fit_dims.1 != d {
            return Err(Error::Schema(format!(
                "whitening model shapes disagree: mean {d}, W {:?}, fit dims {fit_dims:?}",
                w.dim()
            )));
        }
        if !(eps_used >= 0.0) || w.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Schema("whitening model has non-finite values".into()));
        }
        Ok(WhiteningModel {
            kind,
            mean: MeanVector { values: mean },
            w,
            eps_used,
            fit_dims,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.values.len()
    }
}

// Eigenvalues below this fraction of max|x|^2 count as exactly zero.
const ABSOLUTE_FLOOR: f64 = 1e-24;

struct Floored {
    values: Array1<f64>,
    eps_used: f64,
}

fn floor_eigenvalues(eigenvalues: &Array1<f64>, eps_relative: f64) -> Result<Floored> {
    let mean = eigenvalues.mean().unwrap_or(0.0);
    let floor = eps_relative * mean;
    let triggered = eigenvalues.iter().any(|&l| l < floor);
    let values = eigenvalues.mapv(|l| l.max(floor));
    if values.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::DegenerateData(
            "covariance is singular; a positive eps is required".into(),
        ));
    }
    Ok(Floored {
        values,
        eps_used: if triggered { floor } else { 0.0 },
    })
}

/// Fits a whitening transform of the requested kind to `x`.
pub fn fit_whitening(x: &EmbeddingMatrix, cfg: &WhiteningConfig) -> Result<WhiteningModel> {
    let (n, d) = x.view().dim();
    if n < 2 {
        return Err(Error::invalid("whitening needs at least two rows"));
    }
    if !(cfg.eps_relative >= 0.0) || !cfg.eps_relative.is_finite() {
        return Err(Error::invalid(format!(
            "eps must be finite and non-negative, got {}",
            cfg.eps_relative
        )));
    }
    let mean = compute_mean(x);
    let cov = compute_covariance(x, Normalization::Population)?.values;

    let max_sq = x.view().fold(0.0_f64, |m, v| m.max(v * v));
    let max_var = cov.diag().fold(0.0_f64, |m, &v| m.max(v));
    if !(max_var > ABSOLUTE_FLOOR * max_sq) {
        return Err(Error::DegenerateData("input has no variance".into()));
    }

    let (w, eps_used) = match cfg.kind {
        WhiteningKind::Pca | WhiteningKind::Zca | WhiteningKind::Cholesky => {
            let eig = sym_eig(&cov)?;
            let floored = floor_eigenvalues(&eig.eigenvalues, cfg.eps_relative)?;
            let u = &eig.eigenvectors;
            let w = match cfg.kind {
                WhiteningKind::Pca => u * &floored.values.mapv(|l| 1.0 / l.sqrt()),
                WhiteningKind::Zca => {
                    let mut w = (u * &floored.values.mapv(|l| 1.0 / l.sqrt())).dot(&u.t());
                    symmetrize(&mut w);
                    w
                }
                _ => {
                    let mut precision = (u * &floored.values.mapv(|l| 1.0 / l)).dot(&u.t());
                    symmetrize(&mut precision);
                    cholesky_spd(&precision)?.lower
                }
            };
            (w, floored.eps_used)
        }
        WhiteningKind::ZcaCor | WhiteningKind::PcaCor => {
            let corr = correlation_from_covariance(&cov)?;
            let eig = sym_eig(&corr.values)?;
            let floored = floor_eigenvalues(&eig.eigenvalues, cfg.eps_relative)?;
            let v = &eig.eigenvectors;
            let mut core = v * &floored.values.mapv(|l| 1.0 / l.sqrt());
            if cfg.kind == WhiteningKind::ZcaCor {
                core = core.dot(&v.t());
                symmetrize(&mut core);
            }
            let inv_sd = corr.source_stddevs.mapv(|s| 1.0 / s);
            let w = &core * &inv_sd.insert_axis(Axis(1));
            (w, floored.eps_used)
        }
    };

    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(format!(
            "{} whitening produced non-finite entries",
            cfg.kind
        )));
    }
    Ok(WhiteningModel {
        kind: cfg.kind,
        mean,
        w,
        eps_used,
        fit_dims: (n, d),
    })
}

/// `Z = (X - mu) W`, preserving row order.
pub fn apply_whitening(model: &WhiteningModel, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if x.ncols() != model.dim() {
        return Err(Error::invalid(format!(
            "model expects {} columns, data has {}",
            model.dim(),
            x.ncols()
        )));
    }
    let z = center(x.view(), model.mean.values.view()).dot(&model.w);
    EmbeddingMatrix::new(z)
}

/// Inverse transform `Z W^-1 + mu`.
pub fn whitening_round_trip(model: &WhiteningModel, z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if z.ncols() != model.dim() {
        return Err(Error::invalid(format!(
            "model expects {} columns, data has {}",
            model.dim(),
            z.ncols()
        )));
    }
    let w_inv = invert(&model.w)?;
    let x = z.view().dot(&w_inv) + model.mean.values.view().insert_axis(Axis(0));
    EmbeddingMatrix::new(x)
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    fn correlated(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let z = gaussian(n, d, seed);
        let mix = gaussian(d, d, seed + 1000) * 0.5 + Array2::<f64>::eye(d);
        let shift = Array1::from_shape_fn(d, |j| j as f64 - 1.5);
        EmbeddingMatrix::new(z.dot(&mix) + &shift).unwrap()
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn pop_cov(z: &EmbeddingMatrix) -> Array2<f64> {
        compute_covariance(z, Normalization::Population).unwrap().values
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in WhiteningKind::ALL {
            assert_eq!(kind.as_str().parse::<WhiteningKind>().unwrap(), kind);
            assert_eq!(kind.to_string().parse::<WhiteningKind>().unwrap(), kind);
        }
        assert_eq!("Cholesky".parse::<WhiteningKind>().unwrap(), WhiteningKind::Cholesky);
        assert!("pcaa".parse::<WhiteningKind>().is_err());
        assert_eq!("train".parse::<FitScope>().unwrap(), FitScope::TrainOnly);
        assert!("both".parse::<FitScope>().is_err());
    }

    #[test]
    fn diagonal_covariance_whitens_for_every_kind() {
        // population covariance exactly diag(4, 1)
        let x = EmbeddingMatrix::from_rows(&[
            vec![2.0, 1.0],
            vec![-2.0, 1.0],
            vec![2.0, -1.0],
            vec![-2.0, -1.0],
        ])
        .unwrap();
        for kind in WhiteningKind::ALL {
            let model = fit_whitening(&x, &WhiteningConfig::new(kind)).unwrap();
            assert_eq!(model.eps_used, 0.0);
            let z = apply_whitening(&model, &x).unwrap();
            assert!(max_diff(&pop_cov(&z), &Array2::eye(2)) < 1e-8, "{kind}");
        }
    }

    #[test]
    fn cholesky_hand_case() {
        // rows y C^T with y in {+-1}^2 and C = chol([[1,-1],[-1,2]]) = [[1,0],[-1,1]]
        let x = EmbeddingMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, -2.0],
            vec![-1.0, 2.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let sigma = array![[1.0, -1.0], [-1.0, 2.0]];
        assert_eq!(pop_cov(&x), sigma);
        let model = fit_whitening(&x, &WhiteningConfig::new(WhiteningKind::Cholesky)).unwrap();
        let l = &model.w;
        let half = 0.5_f64.sqrt();
        let expected = array![[2.0_f64.sqrt(), 0.0], [half, half]];
        assert_eq!(l[[0, 1]], 0.0);
        assert!(max_diff(l, &expected) < 1e-12);
        assert!(max_diff(&l.t().dot(&sigma).dot(l), &Array2::eye(2)) < 1e-10);
    }

    #[test]
    fn apply_row_equal_to_mean_is_zero() {
        let x = correlated(200, 5, 1);
        for kind in WhiteningKind::ALL {
            let model = fit_whitening(&x, &WhiteningConfig::new(kind)).unwrap();
            let row = EmbeddingMatrix::new(model.mean.values.clone().insert_axis(Axis(0))).unwrap();
            let z = apply_whitening(&model, &row).unwrap();
            assert!(z.view().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn apply_checks_dimension() {
        let x = correlated(50, 4, 2);
        let model = fit_whitening(&x, &WhiteningConfig::new(WhiteningKind::Pca)).unwrap();
        let other = EmbeddingMatrix::new(gaussian(3, 5, 0)).unwrap();
        assert!(matches!(apply_whitening(&model, &other), Err(Error::InvalidInput(_))));
        assert!(matches!(whitening_round_trip(&model, &other), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fit_errors() {
        let one = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            fit_whitening(&one, &WhiteningConfig::new(WhiteningKind::Zca)),
            Err(Error::InvalidInput(_))
        ));
        let constant = EmbeddingMatrix::from_rows(&vec![vec![0.1, 0.7, 3.3]; 6]).unwrap();
        for kind in WhiteningKind::ALL {
            assert!(matches!(
                fit_whitening(&constant, &WhiteningConfig::new(kind)),
                Err(Error::DegenerateData(_))
            ));
        }
        let x = correlated(20, 3, 4);
        let mut cfg = WhiteningConfig::new(WhiteningKind::Pca);
        cfg.eps_relative = -1.0;
        assert!(fit_whitening(&x, &cfg).is_err());
    }

    #[test]
    fn singular_without_floor_is_degenerate() {
        let x = EmbeddingMatrix::new(gaussian(5, 10, 3)).unwrap();
        let mut cfg = WhiteningConfig::new(WhiteningKind::Pca);
        cfg.eps_relative = 0.0;
        assert!(matches!(fit_whitening(&x, &cfg), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn rank_deficient_uses_floor() {
        let x = EmbeddingMatrix::new(gaussian(100, 256, 12)).unwrap();
        let cov = pop_cov(&x);
        for kind in WhiteningKind::ALL {
            let model = fit_whitening(&x, &WhiteningConfig::new(kind)).unwrap();
            assert!(model.eps_used > 0.0, "{kind}");
            assert!(model.w.iter().all(|v| v.is_finite()));
            if !kind.uses_correlation() {
                // W^T Sigma~ W = I on the floored covariance
                let eig = sym_eig(&cov).unwrap();
                let floored = eig.eigenvalues.mapv(|l| l.max(model.eps_used));
                let cov_floored = (&eig.eigenvectors * &floored).dot(&eig.eigenvectors.t());
                let white = model.w.t().dot(&cov_floored).dot(&model.w);
                assert!(max_diff(&white, &Array2::eye(256)) < 1e-5, "{kind}");
            }
        }
    }

    #[test]
    fn zca_matrix_is_exactly_symmetric() {
        let x = correlated(300, 6, 8);
        let model = fit_whitening(&x, &WhiteningConfig::new(WhiteningKind::Zca)).unwrap();
        assert_eq!(model.w, model.w.t());
    }

    #[test]
    fn round_trip_examples() {
        let x = correlated(50, 8, 21);
        let pca = fit_whitening(&x, &WhiteningConfig::new(WhiteningKind::Pca)).unwrap();
        let zca = fit_whitening(&x, &WhiteningConfig::new(WhiteningKind::Zca)).unwrap();
        assert_eq!(pca.eps_used, 0.0);
        let back = whitening_round_trip(&pca, &apply_whitening(&pca, &x).unwrap()).unwrap();
        assert!(max_diff(back.as_array(), x.as_array()) < 1e-6);

        let back_zca = whitening_round_trip(&zca, &apply_whitening(&zca, &x).unwrap()).unwrap();
        assert!(max_diff(back.as_array(), back_zca.as_array()) < 1e-6);

        let zeros = EmbeddingMatrix::new(Array2::zeros((3, 8))).unwrap();
        let back = whitening_round_trip(&pca, &zeros).unwrap();
        for row in back.view().rows() {
            assert!(max_diff(
                &row.to_owned().insert_axis(Axis(0)),
                &pca.mean.values.clone().insert_axis(Axis(0))
            ) < 1e-12);
        }
    }

    #[test]
    fn from_parts_validates() {
        let err = WhiteningModel::from_parts(
            WhiteningKind::Pca,
            Array1::zeros(3),
            Array2::eye(2),
            0.0,
            (10, 3),
        );
        assert!(matches!(err, Err(Error::Schema(_))));
    }
}
