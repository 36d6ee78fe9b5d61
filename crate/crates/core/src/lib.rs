//! Whitening transforms for sentence embeddings and the tools to measure what
//! they do: IsoScore, a linear classification probe and an STS evaluator,
//! plus a small on-disk format for precomputed embedding datasets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod isoscore;
pub mod matrix;
pub mod probes;
pub mod report;
pub mod store;
pub mod sts;
pub mod whitening;

pub use error::{Error, Result};
pub use isoscore::{isoscore, IsoScoreReport};
pub use matrix::{
    cholesky_spd, compute_correlation, compute_covariance, compute_mean, pca_project, sym_eig,
    EmbeddingMatrix, Normalization,
};
pub use probes::{
    evaluate_classification, evaluate_classification_whitened, train_linear_probe,
    LabeledEmbeddingSet, ProbeConfig, ProbeResult, Protocol,
};
pub use sts::{cosine_scores, evaluate_sts, spearman, SentencePairSet, StsResult};
pub use whitening::{
    apply_whitening, fit_whitening, whitening_round_trip, FitScope, WhiteningConfig,
    WhiteningKind, WhiteningModel,
};
