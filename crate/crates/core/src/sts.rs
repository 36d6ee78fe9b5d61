//! Semantic textual similarity: cosine scores of sentence pairs ranked
//! against gold ratings with Spearman's correlation.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::whitening::{apply_whitening, fit_whitening, FitScope, WhiteningConfig, WhiteningKind, WhiteningModel};

/// Paired embeddings with one gold similarity rating per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePairSet {
    pub left: EmbeddingMatrix,
    pub right: EmbeddingMatrix,
    pub gold: Array1<f64>,
}

impl SentencePairSet {
    pub fn new(left: EmbeddingMatrix, right: EmbeddingMatrix, gold: Array1<f64>) -> Result<Self> {
        if left.view().dim() != right.view().dim() {
            return Err(Error::invalid(format!(
                "left is {:?} but right is {:?}",
                left.view().dim(),
                right.view().dim()
            )));
        }
        if gold.len() != left.nrows() {
            return Err(Error::invalid(format!(
                "{} gold scores for {} pairs",
                gold.len(),
                left.nrows()
            )));
        }
        if gold.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gold scores must be finite"));
        }
        Ok(SentencePairSet { left, right, gold })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.left.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StsWhitening {
    pub kind: WhiteningKind,
    pub fit_scope: FitScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StsResult {
    pub spearman_x100: f64,
    pub n_pairs: usize,
    pub whitening_applied: Option<StsWhitening>,
}

pub fn cosine_scores(pairs: &SentencePairSet) -> Result<Array1<f64>> {
    let mut scores = Array1::zeros(pairs.len());
    for (i, (l, r)) in pairs
        .left
        .view()
        .rows()
        .into_iter()
        .zip(pairs.right.view().rows())
        .enumerate()
    {
        let nl = l.dot(&l).sqrt();
        let nr = r.dot(&r).sqrt();
        if !(nl > 0.0 && nr > 0.0) {
            return Err(Error::DegenerateEmbedding { row: i });
        }
        scores[i] = (l.dot(&r) / (nl * nr)).clamp(-1.0, 1.0);
    }
    Ok(scores)
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    }
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least two observations"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| Error::UndefinedCorrelation("an input is constant".into()))
}

/// Fits one whitening model on the stacked left and right embeddings.
pub fn fit_pair_whitening(pairs: &SentencePairSet, cfg: &WhiteningConfig) -> Result<WhiteningModel> {
    fit_whitening(&pairs.left.stack(&pairs.right)?, cfg)
}

/// Spearman (x100) between cosine similarities and gold, optionally whitening
/// both sides with the same model first.
pub fn evaluate_sts(
    pairs: &SentencePairSet,
    whitening: Option<(&WhiteningModel, FitScope)>,
) -> Result<StsResult> {
    let scores = match whitening {
        None => cosine_scores(pairs)?,
        Some((model, _)) => {
            if model.dim() != pairs.dim() {
                return Err(Error::invalid(format!(
                    "whitening model has {} dims, pairs have {}",
                    model.dim(),
                    pairs.dim()
                )));
            }
            let white = SentencePairSet {
                left: apply_whitening(model, &pairs.left)?,
                right: apply_whitening(model, &pairs.right)?,
                gold: pairs.gold.clone(),
            };
            cosine_scores(&white)?
        }
    };
    let rho = spearman(&scores.to_vec(), &pairs.gold.to_vec())?;
    Ok(StsResult {
        spearman_x100: 100.0 * rho,
        n_pairs: pairs.len(),
        whitening_applied: whitening.map(|(m, fit_scope)| StsWhitening {
            kind: m.kind,
            fit_scope,
        }),
    })
}
