//! Classifier models, their parameter layouts and the shared loss machinery.

mod checkpoint;
mod mlp;
mod p1q;
mod params;
mod qttn;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{checkpoint_of, AnyModel, Checkpoint};
pub use mlp::{mlp_forward_backward, Mlp, MlpConfig, MlpOutput};
pub use p1q::{P1q, P1qConfig};
pub use params::ParameterSet;
pub use qttn::{default_edges, Qttn, QttnConfig, QttnOutput};

/// Standard deviation of the normal draw for freshly initialised gate angles.
pub const GATE_INIT_STD: f64 = 0.1;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qttn,
    P1q,
    Mlp,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Qttn => "qttn",
            ModelKind::P1q => "p1q",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qttn" => Ok(ModelKind::Qttn),
            "p1q" => Ok(ModelKind::P1q),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::usage(format!("unknown model '{other}'"))),
        }
    }
}

/// A model together with its configuration, as stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "config", rename_all = "lowercase")]
pub enum ModelSpec {
    Qttn(QttnConfig),
    P1q(P1qConfig),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Qttn(_) => ModelKind::Qttn,
            ModelSpec::P1q(_) => ModelKind::P1q,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Qttn(c) => c.validate(),
            ModelSpec::P1q(c) => c.validate(),
            ModelSpec::Mlp(c) => c.validate(),
        }
    }
}

/// Exact number of trainable scalars of a model configuration.
pub fn count_parameters(spec: &ModelSpec) -> Result<usize> {
    spec.validate()?;
    Ok(match spec {
        ModelSpec::Qttn(c) => c.parameter_count(),
        ModelSpec::P1q(c) => c.parameter_count(),
        ModelSpec::Mlp(c) => c.parameter_count(),
    })
}

/// A binary classifier producing one logit per input.
pub trait Model: Send + Sync {
    type Input: Send + Sync;

    fn spec(&self) -> ModelSpec;

    fn params(&self) -> &ParameterSet;

    fn params_mut(&mut self) -> &mut ParameterSet;

    fn logit(&self, input: &Self::Input) -> Result<f64>;

    /// The logit and its gradient with respect to every flat parameter.
    fn logit_and_grad(&self, input: &Self::Input) -> Result<(f64, Vec<f64>)>;
}

/// Numerically stable `-[y ln s(l) + (1 - y) ln(1 - s(l))]`.
pub fn bce_with_logit(logit: f64, label: u8) -> f64 {
    let y = f64::from(label);
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    crate::encodings::sigmoid(x)
}

fn check_label(label: u8) -> Result<()> {
    if label > 1 {
        return Err(Error::validation(format!("label must be 0 or 1, got {label}")));
    }
    Ok(())
}

/// One element of a mini-batch; `key` fixes the reduction order.
#[derive(Clone, Copy, Debug)]
pub struct BatchItem<'a, T> {
    pub key: usize,
    pub input: &'a T,
    pub label: u8,
}

/// Mean BCE over the batch and its gradient with respect to every parameter.
///
/// Per-sample work runs in parallel; the sums are taken sequentially in
/// ascending `key` order, so the result is bit-identical for any thread
/// count and any ordering of `batch`.
pub fn batch_loss_and_grad<M: Model>(model: &M, batch: &[BatchItem<'_, M::Input>]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut items: Vec<&BatchItem<'_, M::Input>> = batch.iter().collect();
    items.sort_by_key(|b| b.key);
    let per_sample: Vec<Result<(f64, Vec<f64>)>> = items
        .par_iter()
        .map(|item| {
            check_label(item.label)?;
            let (logit, mut grad) = model.logit_and_grad(item.input)?;
            let dloss = sigmoid(logit) - f64::from(item.label);
            for g in &mut grad {
                *g *= dloss;
            }
            Ok((bce_with_logit(logit, item.label), grad))
        })
        .collect();

    let n = model.params().len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for r in per_sample {
        let (l, g) = r?;
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((loss * scale, grad))
}

/// Logits for many inputs, in input order.
pub fn predict_logits<M: Model>(model: &M, inputs: &[&M::Input]) -> Result<Vec<f64>> {
    inputs.par_iter().map(|x| model.logit(x)).collect()
}

/// Mean BCE of a labelled set, summed in input order.
pub fn mean_loss<M: Model>(model: &M, inputs: &[&M::Input], labels: &[u8]) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::usage("mean_loss needs matching non-empty inputs and labels"));
    }
    let logits = predict_logits(model, inputs)?;
    let mut total = 0.0;
    for (&l, &y) in logits.iter().zip(labels) {
        check_label(y)?;
        total += bce_with_logit(l, y);
    }
    Ok(total / inputs.len() as f64)
}
