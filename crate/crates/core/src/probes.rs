//! Linear classification probe: a softmax classifier with no hidden layer,
//! trained by mini-batch RMSprop and scored by accuracy.
//!
//! Every source of randomness (fold assignment, inner dev split, batch order)
//! is drawn from a ChaCha stream seeded by [`ProbeConfig::seed`], so a fixed
//! seed reproduces a [`ProbeResult`] bit for bit. Fold and split assignment
//! depend only on the shuffled row order and on class membership, never on the
//! numeric value of a label.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::whitening::{apply_whitening, fit_whitening, FitScope, WhiteningConfig, WhiteningKind};

const RMSPROP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Schema(format!("unknown split tag {other:?}"))),
        }
    }
}

/// Embeddings with integer class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingSet {
    pub embeddings: EmbeddingMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub splits: Option<Vec<Split>>,
}

impl LabeledEmbeddingSet {
    /// Validates labels and splits. `n_classes` defaults to `max(label) + 1`.
    pub fn new(
        embeddings: EmbeddingMatrix,
        labels: Vec<usize>,
        n_classes: Option<usize>,
        splits: Option<Vec<Split>>,
    ) -> Result<Self> {
        let n = embeddings.nrows();
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {n} embeddings",
                labels.len()
            )));
        }
        let n_classes = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        if n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if n_classes > n {
            return Err(Error::invalid(format!(
                "{n_classes} classes but only {n} samples"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let counts = class_counts(&labels, n_classes);
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class {missing} has no samples")));
        }
        if let Some(s) = &splits {
            if s.len() != n {
                return Err(Error::invalid(format!(
                    "{} split tags for {n} embeddings",
                    s.len()
                )));
            }
        }
        Ok(LabeledEmbeddingSet {
            embeddings,
            labels,
            n_classes,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Row indices tagged with `split`, ascending.
    pub fn split_indices(&self, split: Split) -> Option<Vec<usize>> {
        self.splits.as_ref().map(|tags| {
            tags.iter()
                .enumerate()
                .filter(|(_, &t)| t == split)
                .map(|(i, _)| i)
                .collect()
        })
    }

    /// Same labels and splits with new embeddings of the same row count.
    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Result<Self> {
        if embeddings.nrows() != self.len() {
            return Err(Error::invalid("row count changed"));
        }
        Ok(LabeledEmbeddingSet {
            embeddings,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            splits: self.splits.clone(),
        })
    }
}

fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    RmsProp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub l2_grid: Vec<f64>,
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            optimizer: Optimizer::RmsProp,
            learning_rate: 1e-3,
            rmsprop_decay: 0.9,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            l2_grid: vec![0.0, 1e-4, 1e-3, 1e-2],
            n_folds: 10,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(Error::invalid("rmsprop decay must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.n_folds == 0 {
            return Err(Error::invalid(
                "batch size, epochs, patience and folds must be positive",
            ));
        }
        if self.l2_grid.is_empty() {
            return Err(Error::invalid("l2 grid must not be empty"));
        }
        if self.l2_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("l2 values must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Softmax classifier parameters: `logits = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `d x C`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearProbe {
    pub fn zeros(d: usize, n_classes: usize) -> Self {
        LinearProbe {
            weights: Array2::zeros((d, n_classes)),
            bias: Array1::zeros(n_classes),
        }
    }

    /// Arg-max class per row; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let logits = x.dot(&self.weights) + &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Fraction of rows predicted correctly.
    pub fn accuracy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / labels.len() as f64
    }

    /// Mean softmax cross-entropy, without any weight penalty.
    pub fn mean_cross_entropy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let logits = x.dot(&self.weights) + &self.bias;
        let total: f64 = logits
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &y)| {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                log_sum - row[y]
            })
            .sum();
        total / labels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub probe: LinearProbe,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Dev accuracy of the kept parameters, when a dev set was given.
    pub dev_accuracy: Option<f64>,
}

struct Samples<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
}

fn rmsprop_step(param: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64, decay: f64) {
    for ((p, a), &g) in param.iter_mut().zip(acc.iter_mut()).zip(grad) {
        *a = decay * *a + (1.0 - decay) * g * g;
        *p -= lr * g / (a.sqrt() + RMSPROP_EPS);
    }
}

// Runs RMSprop for at most `max_epochs`. With a dev set, stops after
// `patience` epochs without improvement and returns the best-dev parameters;
// without one, runs every epoch and returns the final parameters.
fn train_rmsprop(
    train: &Samples<'_>,
    dev: Option<&Samples<'_>>,
    n_classes: usize,
    l2: f64,
    cfg: &ProbeConfig,
    max_epochs: usize,
    seed: u64,
) -> TrainOutcome {
    let (n, d) = train.x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = LinearProbe::zeros(d, n_classes);
    let mut acc_w = Array2::<f64>::zeros((d, n_classes));
    let mut acc_b = Array1::<f64>::zeros(n_classes);
    let mut order: Vec<usize> = (0..n).collect();

    let mut best = probe.clone();
    let mut best_epoch = 0;
    let mut best_acc = dev.map(|s| probe.accuracy(s.x, s.y));
    let mut best_loss = dev.map_or(f64::INFINITY, |s| probe.mean_cross_entropy(s.x, s.y));
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), batch);
            let mut probs = xb.dot(&probe.weights) + &probe.bias;
            for (mut row, &i) in probs.rows_mut().into_iter().zip(batch) {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let total = row.sum();
                row.mapv_inplace(|v| v / total);
                row[train.y[i]] -= 1.0;
            }
            probs /= batch.len() as f64;
            let mut grad_w = xb.t().dot(&probs);
            if l2 > 0.0 {
                grad_w.scaled_add(l2, &probe.weights);
            }
            let grad_b = probs.sum_axis(Axis(0));
            rmsprop_step(
                probe.weights.as_slice_mut().expect("standard layout"),
                acc_w.as_slice_mut().expect("standard layout"),
                grad_w.as_slice().expect("standard layout"),
                cfg.learning_rate,
                cfg.rmsprop_decay,
            );
            rmsprop_step(
                probe.bias.as_slice_mut().expect("contiguous"),
                acc_b.as_slice_mut().expect("contiguous"),
                grad_b.as_slice().expect("contiguous"),
                cfg.learning_rate,
                cfg.rmsprop_decay,
            );
        }
        epochs_run = epoch;

        if let (Some(dev), Some(best_so_far)) = (dev, best_acc) {
            let acc = probe.accuracy(dev.x, dev.y);
            let loss = probe.mean_cross_entropy(dev.x, dev.y);
            // Once dev accuracy saturates, a lower dev loss still counts as progress.
            if acc > best_so_far || (acc == best_so_far && loss < best_loss) {
                best_acc = Some(acc);
                best_loss = loss;
                best = probe.clone();
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }

    if dev.is_none() {
        best = probe;
        best_epoch = epochs_run;
    }
    TrainOutcome {
        probe: best,
        best_epoch,
        epochs_run,
        dev_accuracy: best_acc,
    }
}

/// Trains one probe with a fixed `l2`, early-stopping on `dev` accuracy.
pub fn train_linear_probe(
    train: &LabeledEmbeddingSet,
    dev: &LabeledEmbeddingSet,
    l2: f64,
    cfg: &ProbeConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !(l2 >= 0.0) || !l2.is_finite() {
        return Err(Error::invalid("l2 must be finite and non-negative"));
    }
    if train.dim() != dev.dim() {
        return Err(Error::invalid(format!(
            "train has {} dims, dev has {}",
            train.dim(),
            dev.dim()
        )));
    }
    if dev.n_classes > train.n_classes {
        return Err(Error::invalid(format!(
            "dev contains class {} which is absent from train",
            train.n_classes
        )));
    }
    let tr = Samples {
        x: train.embeddings.view(),
        y: &train.labels,
    };
    let dv = Samples {
        x: dev.embeddings.view(),
        y: &dev.labels,
    };
    Ok(train_rmsprop(
        &tr,
        Some(&dv),
        train.n_classes,
        l2,
        cfg,
        cfg.max_epochs,
        cfg.seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Kfold,
    FixedSplit,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Kfold => "kfold",
            Protocol::FixedSplit => "fixed_split",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "kfold" | "cv" => Ok(Protocol::Kfold),
            "fixed_split" | "fixed" | "split" => Ok(Protocol::FixedSplit),
            other => Err(Error::invalid(format!(
                "unknown protocol {other:?} (expected kfold or fixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeWhitening {
    pub kind: WhiteningKind,
    pub fit_scope: FitScope,
    pub eps_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Mean test accuracy, in percent.
    pub accuracy: f64,
    /// Test accuracy of each fold (a single entry for a fixed split), in percent.
    pub per_fold_accuracies: Vec<f64>,
    /// Most frequently selected l2 across folds (smallest on ties).
    pub chosen_l2: f64,
    pub chosen_l2_per_fold: Vec<f64>,
    pub n_epochs_run: Vec<usize>,
    pub protocol: Protocol,
    pub config_echo: ProbeConfig,
    pub whitening_applied: Option<ProbeWhitening>,
}

struct FoldOutcome {
    accuracy: f64,
    l2: f64,
    epochs: usize,
}

/// Selects l2 on `dev` (ties to the smaller value). Returns the chosen value
/// and its training outcome.
fn select_l2(
    train: &Samples<'_>,
    dev: &Samples<'_>,
    n_classes: usize,
    cfg: &ProbeConfig,
    seed: u64,
) -> (f64, TrainOutcome) {
    let mut grid = cfg.l2_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best: Option<(f64, TrainOutcome)> = None;
    for l2 in grid {
        let outcome = train_rmsprop(train, Some(dev), n_classes, l2, cfg, cfg.max_epochs, seed);
        let better = match &best {
            None => true,
            Some((_, b)) => outcome.dev_accuracy > b.dev_accuracy,
        };
        if better {
            best = Some((l2, outcome));
        }
    }
    best.expect("grid is non-empty")
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Whitens `all` with a model fitted on `fit_rows` (or on every row).
fn whiten_rows(
    x: &EmbeddingMatrix,
    fit_rows: Option<&[usize]>,
    cfg: &WhiteningConfig,
) -> Result<EmbeddingMatrix> {
    let model = match fit_rows {
        Some(rows) => fit_whitening(&x.select_rows(rows)?, cfg)?,
        None => fit_whitening(x, cfg)?,
    };
    apply_whitening(&model, x)
}

/// Stratified fold id per row: rows are shuffled once, then each class's rows
/// are dealt round-robin across folds in shuffled order.
fn stratified_folds(labels: &[usize], n_classes: usize, n_folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    let mut seen = vec![0usize; n_classes];
    let mut fold = vec![0; labels.len()];
    for &i in &order {
        let c = labels[i];
        fold[i] = seen[c] % n_folds;
        seen[c] += 1;
    }
    fold
}

/// Splits `rows` (already in shuffled order) into (train, dev) with roughly
/// `dev_fraction` of each class in dev.
fn stratified_holdout(
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
    dev_fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut per_class = vec![0usize; n_classes];
    for &i in rows {
        per_class[labels[i]] += 1;
    }
    if let Some(c) = per_class.iter().position(|&n| n < 2) {
        return Err(Error::Stratification(format!(
            "class {c} has fewer than two training rows in a fold"
        )));
    }
    let quota: Vec<usize> = per_class
        .iter()
        .map(|&n| ((n as f64 * dev_fraction).ceil() as usize).clamp(1, n - 1))
        .collect();
    let mut taken = vec![0usize; n_classes];
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for &i in rows {
        let c = labels[i];
        if taken[c] < quota[c] {
            taken[c] += 1;
            dev.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, dev))
}

fn run_fold(
    data: &LabeledEmbeddingSet,
    shuffled: &[usize],
    folds: &[usize],
    fold: usize,
    cfg: &ProbeConfig,
    whitening: Option<&WhiteningConfig>,
) -> Result<FoldOutcome> {
    let train_rows: Vec<usize> = shuffled.iter().copied().filter(|&i| folds[i] != fold).collect();
    let mut test_rows: Vec<usize> = shuffled.iter().copied().filter(|&i| folds[i] == fold).collect();
    test_rows.sort_unstable();

    let x = match whitening {
        Some(w) if w.fit_scope == FitScope::TrainOnly => {
            whiten_rows(&data.embeddings, Some(&train_rows), w)?
        }
        _ => data.embeddings.clone(),
    };
    let seed = fold_seed(cfg.seed, fold);
    let (inner_train, inner_dev) =
        stratified_holdout(&train_rows, &data.labels, data.n_classes, 0.1)?;

    let gather = |rows: &[usize]| -> (Array2<f64>, Vec<usize>) {
        (
            x.view().select(Axis(0), rows),
            rows.iter().map(|&i| data.labels[i]).collect(),
        )
    };
    let (itx, ity) = gather(&inner_train);
    let (idx, idy) = gather(&inner_dev);
    let (l2, selected) = select_l2(
        &Samples { x: itx.view(), y: &ity },
        &Samples { x: idx.view(), y: &idy },
        data.n_classes,
        cfg,
        seed,
    );

    let mut sorted_train = train_rows;
    sorted_train.sort_unstable();
    let (tx, ty) = gather(&sorted_train);
    let epochs = selected.best_epoch.max(1);
    let final_fit = train_rmsprop(
        &Samples { x: tx.view(), y: &ty },
        None,
        data.n_classes,
        l2,
        cfg,
        epochs,
        seed,
    );
    let (sx, sy) = gather(&test_rows);
    Ok(FoldOutcome {
        accuracy: 100.0 * final_fit.probe.accuracy(sx.view(), &sy),
        l2,
        epochs: final_fit.epochs_run,
    })
}

fn kfold(
    data: &LabeledEmbeddingSet,
    cfg: &ProbeConfig,
    whitening: Option<&WhiteningConfig>,
) -> Result<Vec<FoldOutcome>> {
    let k = cfg.n_folds;
    if k < 2 {
        return Err(Error::invalid("k-fold needs at least two folds"));
    }
    let counts = class_counts(&data.labels, data.n_classes);
    if let Some(c) = counts.iter().position(|&n| n < k) {
        return Err(Error::Stratification(format!(
            "class {c} has {} samples, fewer than {k} folds",
            counts[c]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let folds = stratified_folds(&data.labels, data.n_classes, k, &mut rng);
    let mut shuffled: Vec<usize> = (0..data.len()).collect();
    shuffled.shuffle(&mut rng);

    let run = |f: usize| run_fold(data, &shuffled, &folds, f, cfg, whitening);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<FoldOutcome>> = {
        use rayon::prelude::*;
        (0..k).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<FoldOutcome>> = (0..k).map(run).collect();
    outcomes.into_iter().collect()
}

fn fixed_split(
    data: &LabeledEmbeddingSet,
    cfg: &ProbeConfig,
    whitening: Option<&WhiteningConfig>,
) -> Result<FoldOutcome> {
    let (train_rows, dev_rows, test_rows) = match (
        data.split_indices(Split::Train),
        data.split_indices(Split::Dev),
        data.split_indices(Split::Test),
    ) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::invalid(
                "fixed-split protocol requires split tags",
            ))
        }
    };
    if train_rows.is_empty() || dev_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::invalid(
            "fixed-split protocol needs non-empty train, dev and test splits",
        ));
    }
    let train_counts = class_counts(
        &train_rows.iter().map(|&i| data.labels[i]).collect::<Vec<_>>(),
        data.n_classes,
    );
    if let Some(c) = train_counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "class {c} is absent from the train split"
        )));
    }
    let x = match whitening {
        Some(w) if w.fit_scope == FitScope::TrainOnly => {
            whiten_rows(&data.embeddings, Some(&train_rows), w)?
        }
        _ => data.embeddings.clone(),
    };
    let gather = |rows: &[usize]| -> (Array2<f64>, Vec<usize>) {
        (
            x.view().select(Axis(0), rows),
            rows.iter().map(|&i| data.labels[i]).collect(),
        )
    };
    let (tx, ty) = gather(&train_rows);
    let (dx, dy) = gather(&dev_rows);
    let (sx, sy) = gather(&test_rows);
    let (l2, outcome) = select_l2(
        &Samples { x: tx.view(), y: &ty },
        &Samples { x: dx.view(), y: &dy },
        data.n_classes,
        cfg,
        cfg.seed,
    );
    Ok(FoldOutcome {
        accuracy: 100.0 * outcome.probe.accuracy(sx.view(), &sy),
        l2,
        epochs: outcome.epochs_run,
    })
}

fn evaluate(
    data: &LabeledEmbeddingSet,
    cfg: &ProbeConfig,
    protocol: Protocol,
    whitening: Option<&WhiteningConfig>,
) -> Result<ProbeResult> {
    cfg.validate()?;
    if data.n_classes > data.len() {
        return Err(Error::invalid("more classes than samples"));
    }
    // all-data whitening is fitted once up front
    let owned;
    let data = match whitening {
        Some(w) if w.fit_scope == FitScope::AllData => {
            owned = data.with_embeddings(whiten_rows(&data.embeddings, None, w)?)?;
            &owned
        }
        _ => data,
    };
    let outcomes = match protocol {
        Protocol::Kfold => kfold(data, cfg, whitening)?,
        Protocol::FixedSplit => vec![fixed_split(data, cfg, whitening)?],
    };
    let per_fold: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let l2s: Vec<f64> = outcomes.iter().map(|o| o.l2).collect();
    let accuracy = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(ProbeResult {
        accuracy,
        per_fold_accuracies: per_fold,
        chosen_l2: most_common(&l2s),
        chosen_l2_per_fold: l2s,
        n_epochs_run: outcomes.iter().map(|o| o.epochs).collect(),
        protocol,
        config_echo: cfg.clone(),
        whitening_applied: whitening.map(|w| ProbeWhitening {
            kind: w.kind,
            fit_scope: w.fit_scope,
            eps_relative: w.eps_relative,
        }),
    })
}

fn most_common(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], 0);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best.1 {
            best = (sorted[i], j);
        }
        i += j;
    }
    best.0
}

/// Accuracy (percent) of the linear probe under the chosen protocol.
pub fn evaluate_classification(
    data: &LabeledEmbeddingSet,
    cfg: &ProbeConfig,
    protocol: Protocol,
) -> Result<ProbeResult> {
    evaluate(data, cfg, protocol, None)
}

/// As [`evaluate_classification`], on whitened embeddings. With
/// [`FitScope::TrainOnly`] the transform is refitted on each training portion.
pub fn evaluate_classification_whitened(
    data: &LabeledEmbeddingSet,
    cfg: &ProbeConfig,
    protocol: Protocol,
    whitening: &WhiteningConfig,
) -> Result<ProbeResult> {
    evaluate(data, cfg, protocol, Some(whitening))
}
