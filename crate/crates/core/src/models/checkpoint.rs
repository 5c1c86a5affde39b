use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, Model, ModelSpec, P1q, ParameterSet, Qttn};
use crate::error::{Error, Result};

/// Serialised model: configuration, named parameter blocks and provenance
/// of the training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub params: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
    /// 1-based epoch the parameters were taken from; 0 for an untrained model.
    pub epoch: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Any of the supported classifiers, for code that picks the model at run time.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Qttn(Qttn),
    P1q(P1q),
    Mlp(Mlp),
}

impl AnyModel {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Qttn(c) => AnyModel::Qttn(Qttn::new(c.clone(), seed)?),
            ModelSpec::P1q(c) => AnyModel::P1q(P1q::new(c.clone(), seed)?),
            ModelSpec::Mlp(c) => AnyModel::Mlp(Mlp::new(c.clone(), seed)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            AnyModel::Qttn(m) => m.spec(),
            AnyModel::P1q(m) => m.spec(),
            AnyModel::Mlp(m) => m.spec(),
        }
    }

    pub fn params(&self) -> &ParameterSet {
        match self {
            AnyModel::Qttn(m) => m.params(),
            AnyModel::P1q(m) => m.params(),
            AnyModel::Mlp(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        match self {
            AnyModel::Qttn(m) => m.params_mut(),
            AnyModel::P1q(m) => m.params_mut(),
            AnyModel::Mlp(m) => m.params_mut(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.spec.validate()?;
        let mut model = Self::new(&ckpt.spec, ckpt.seed)?;
        model.params_mut().fill_named(&ckpt.params)?;
        if let Some(bad) = model.params().values().iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("checkpoint holds non-finite parameter {bad}")));
        }
        Ok(model)
    }

    pub fn to_checkpoint(&self, seed: u64, epoch: usize) -> Checkpoint {
        Checkpoint {
            spec: self.spec(),
            params: self.params().to_named(),
            seed,
            epoch,
        }
    }
}

/// Checkpoint of a concrete model.
pub fn checkpoint_of<M: Model>(model: &M, seed: u64, epoch: usize) -> Checkpoint {
    Checkpoint {
        spec: model.spec(),
        params: model.params().to_named(),
        seed,
        epoch,
    }
}
