//! Mini-batch AdamW training with a warmup-cosine schedule, best-validation
//! model selection, early stopping and low-data k-fold runs.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auc, ScoredSample};
use crate::models::{batch_loss_and_grad, mean_loss, predict_logits, BatchItem, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_peak: f64,
    pub lr_final: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Replaces the schedule with a fixed rate when set.
    pub constant_lr: Option<f64>,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 1024,
            lr_init: 1e-3,
            lr_peak: 5e-3,
            lr_final: 1e-3,
            warmup_epochs: 10,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            constant_lr: None,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::config(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        positive("lr_init", self.lr_init)?;
        positive("lr_peak", self.lr_peak)?;
        positive("lr_final", self.lr_final)?;
        positive("eps", self.eps)?;
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if let Some(lr) = self.constant_lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config("constant_lr must be non-negative"));
            }
        }
        if self.patience == Some(0) {
            return Err(Error::config("patience must be at least 1"));
        }
        Ok(())
    }
}

/// Learning rate at training fraction `t` (clamped to `[0, 1]`): linear
/// warmup from `lr_init` to `lr_peak`, then cosine decay to `lr_final`.
pub fn lr_at(t: f64, cfg: &TrainConfig) -> f64 {
    if let Some(lr) = cfg.constant_lr {
        return lr;
    }
    let t = t.clamp(0.0, 1.0);
    let warm = cfg.warmup_epochs as f64 / cfg.epochs as f64;
    if t < warm {
        cfg.lr_init + (cfg.lr_peak - cfg.lr_init) * t / warm
    } else {
        let u = (t - warm) / (1.0 - warm);
        cfg.lr_final + 0.5 * (cfg.lr_peak - cfg.lr_final) * (1.0 + (PI * u).cos())
    }
}

/// AdamW with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        AdamW {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// `theta *= 1 - lr * wd` (where `decay` is set), then the Adam update.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], decay: &[bool], lr: f64) {
        assert_eq!(theta.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            if decay[i] {
                theta[i] *= 1.0 - lr * self.weight_decay;
            }
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub input: T,
    pub label: u8,
    pub split: Split,
}

/// Labelled records, each tagged with exactly one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    records: Vec<Record<T>>,
}

impl<T> Dataset<T> {
    pub fn new(records: Vec<Record<T>>) -> Result<Self> {
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.label > 1) {
            return Err(Error::validation(format!("record {i}: label must be 0 or 1, got {}", r.label)));
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[Record<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split == split).collect()
    }

    /// `(background, signal)` counts of a split.
    pub fn class_counts(&self, split: Split) -> (usize, usize) {
        let signal = self
            .records
            .iter()
            .filter(|r| r.split == split && r.label == 1)
            .count();
        let total = self.records.iter().filter(|r| r.split == split).count();
        (total - signal, signal)
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Dataset<U> {
        Dataset {
            records: self
                .records
                .into_iter()
                .map(|r| Record {
                    input: f(r.input),
                    label: r.label,
                    split: r.split,
                })
                .collect(),
        }
    }
}

/// Stratified split assignment: within each class a seeded permutation puts
/// the first `train` fraction in train, the next `val` fraction in val and
/// the rest in test.
pub fn assign_splits(labels: &[u8], train: f64, val: f64, seed: u64) -> Result<Vec<Split>> {
    if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
        return Err(Error::config(format!(
            "split fractions must be positive with train + val < 1, got {train} and {val}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Test; labels.len()];
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_train = (train * idx.len() as f64).round() as usize;
        let n_val = (val * idx.len() as f64).round() as usize;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: f64,
    /// Rate used by the last optimizer step of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters from the epoch with the highest validation AUC.
    pub best: M,
    pub best_epoch: usize,
    /// Parameters after the last completed epoch.
    pub last: M,
    pub history: Vec<EpochRecord>,
    /// Set when early stopping ended the run before the epoch budget.
    pub stopped_at: Option<usize>,
}

fn require_both_classes<T>(data: &Dataset<T>, idx: &[usize], name: &str) -> Result<()> {
    let signal = idx.iter().filter(|&&i| data.records[i].label == 1).count();
    if signal == 0 || signal == idx.len() {
        return Err(Error::validation(format!(
            "{name} split needs both classes, has {} signal and {} background",
            signal,
            idx.len() - signal
        )));
    }
    Ok(())
}

/// AUC of `model` on the given records.
pub fn evaluate_auc<M: Model>(model: &M, data: &Dataset<M::Input>, idx: &[usize]) -> Result<f64> {
    let inputs: Vec<&M::Input> = idx.iter().map(|&i| &data.records[i].input).collect();
    let logits = predict_logits(model, &inputs)?;
    let samples: Vec<ScoredSample> = logits
        .iter()
        .zip(idx)
        .map(|(&s, &i)| ScoredSample::new(s, data.records[i].label))
        .collect();
    auc(&samples)
}

fn split_loss<M: Model>(model: &M, data: &Dataset<M::Input>, idx: &[usize]) -> Result<f64> {
    let inputs: Vec<&M::Input> = idx.iter().map(|&i| &data.records[i].input).collect();
    let labels: Vec<u8> = idx.iter().map(|&i| data.records[i].label).collect();
    mean_loss(model, &inputs, &labels)
}

/// Trains on the dataset's train split and selects on its val split.
pub fn train_model<M: Model + Clone>(model: M, data: &Dataset<M::Input>, cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    let train_idx = data.indices(Split::Train);
    let val_idx = data.indices(Split::Val);
    train_on(model, data, &train_idx, &val_idx, cfg)
}

/// Trains on arbitrary record subsets; `train_idx` and `val_idx` must be disjoint.
pub fn train_on<M: Model + Clone>(
    mut model: M,
    data: &Dataset<M::Input>,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    require_both_classes(data, train_idx, "train")?;
    require_both_classes(data, val_idx, "validation")?;

    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(model.params().len(), cfg);
    let decay = model.params().decay_mask().to_vec();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, M)> = None;
    let mut stopped_at = None;
    let mut order = train_idx.to_vec();
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut lr = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            lr = lr_at(step as f64 / total_steps, cfg);
            let batch: Vec<BatchItem<'_, M::Input>> = chunk
                .iter()
                .map(|&i| BatchItem {
                    key: i,
                    input: &data.records[i].input,
                    label: data.records[i].label,
                })
                .collect();
            let (loss, grad) = batch_loss_and_grad(&model, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    step: b + 1,
                    detail: format!("batch loss {loss}"),
                });
            }
            opt.step(model.params_mut().values_mut(), &grad, &decay, lr);
            step += 1;
        }

        let train_loss = split_loss(&model, data, train_idx)?;
        let val_loss = split_loss(&model, data, val_idx)?;
        let val_auc = evaluate_auc(&model, data, val_idx)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                step: steps_per_epoch,
                detail: format!("train loss {train_loss}, validation loss {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_auc,
            lr,
        });
        if best.as_ref().is_none_or(|(a, _, _)| val_auc > *a) {
            best = Some((val_auc, epoch, model.clone()));
        }
        if let Some(p) = cfg.patience {
            let losses: Vec<f64> = history.iter().map(|h| h.val_loss).collect();
            if early_stopping(&losses, p).stop_epoch.is_some() {
                stopped_at = Some(epoch);
                break;
            }
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        last: model,
        history,
        stopped_at,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    /// 1-based epoch with the lowest validation loss (earliest on ties).
    pub best_epoch: usize,
    /// 1-based epoch at which `patience` consecutive epochs failed to improve.
    pub stop_epoch: Option<usize>,
}

pub fn early_stopping(val_losses: &[f64], patience: usize) -> StopDecision {
    let patience = patience.max(1);
    let mut best_epoch = 0;
    let mut best = f64::INFINITY;
    for (k, &loss) in val_losses.iter().enumerate() {
        let epoch = k + 1;
        if loss < best {
            best = loss;
            best_epoch = epoch;
        } else if epoch - best_epoch >= patience {
            return StopDecision {
                best_epoch,
                stop_epoch: Some(epoch),
            };
        }
    }
    StopDecision {
        best_epoch,
        stop_epoch: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowDataPoint {
    /// Training events per class.
    pub size: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// Test AUC of every fold.
    pub fold_aucs: Vec<f64>,
}

/// Per-class train and validation record subsets of one fold.
///
/// Fold `f` shuffles each class with the seed `seed + f` and keeps the first
/// `size` training records; validation keeps the dataset's per-class
/// val:train ratio. Subsets are nested across sizes and returned sorted.
pub fn fold_indices<T>(data: &Dataset<T>, size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..=1u8 {
        let pick = |split| -> Vec<usize> {
            (0..data.records.len())
                .filter(|&i| data.records[i].split == split && data.records[i].label == class)
                .collect()
        };
        let mut t = pick(Split::Train);
        let mut v = pick(Split::Val);
        if size > t.len() {
            return Err(Error::validation(format!(
                "requested {size} training events for class {class}, only {} available",
                t.len()
            )));
        }
        let n_val = ((size as f64 * v.len() as f64 / t.len() as f64).round() as usize).clamp(1, v.len().max(1));
        t.shuffle(&mut rng);
        v.shuffle(&mut rng);
        train.extend_from_slice(&t[..size]);
        val.extend_from_slice(&v[..n_val.min(v.len())]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// k-fold low-data study: for each per-class training size, trains `k`
/// models on seeded subsamples and reports the test AUC mean and sample std.
/// `factory(seed)` builds a fresh model; fold `f` uses seed `cfg.seed + f`
/// both for the model and for training.
pub fn kfold_lowdata<M, F>(
    data: &Dataset<M::Input>,
    sizes: &[usize],
    k: usize,
    factory: F,
    cfg: &TrainConfig,
) -> Result<Vec<LowDataPoint>>
where
    M: Model + Clone,
    F: Fn(u64) -> Result<M>,
{
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let test_idx = data.indices(Split::Test);
    require_both_classes(data, &test_idx, "test")?;
    for &size in sizes {
        fold_indices(data, size, cfg.seed)?;
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut fold_aucs = Vec::with_capacity(k);
        for fold in 0..k as u64 {
            let seed = cfg.seed.wrapping_add(fold);
            let (train_idx, val_idx) = fold_indices(data, size, seed)?;
            let fold_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            let outcome = train_on(factory(seed)?, data, &train_idx, &val_idx, &fold_cfg)?;
            fold_aucs.push(evaluate_auc(&outcome.best, data, &test_idx)?);
        }
        let mean_auc = fold_aucs.iter().sum::<f64>() / k as f64;
        let std_auc = if k > 1 {
            (fold_aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        points.push(LowDataPoint {
            size,
            mean_auc,
            std_auc,
            fold_aucs,
        });
    }
    Ok(points)
}

fn csv_error(e: std::io::Error) -> Error {
    Error::io("writing CSV", e)
}

pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochRecord]) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_auc,lr").map_err(csv_error)?;
    for h in history {
        writeln!(out, "{},{},{},{},{}", h.epoch, h.train_loss, h.val_loss, h.val_auc, h.lr).map_err(csv_error)?;
    }
    Ok(())
}

pub fn write_lowdata_csv<W: Write>(mut out: W, points: &[LowDataPoint]) -> Result<()> {
    writeln!(out, "size,mean_auc,std_auc").map_err(csv_error)?;
    for p in points {
        writeln!(out, "{},{},{}", p.size, p.mean_auc, p.std_auc).map_err(csv_error)?;
    }
    Ok(())
}
