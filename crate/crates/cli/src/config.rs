//! Run configuration: a JSON file, overridden field by field from flags.

use std::path::{Path, PathBuf};

use qttn_core::jets::{node_count, LundConfig};
use qttn_core::models::{MlpConfig, ModelKind, ModelSpec, P1qConfig, QttnConfig};
use qttn_core::toy::ToyGenConfig;
use qttn_core::train::{Split, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliResult};

/// Which records a command looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl SplitChoice {
    pub fn matches(self, split: Split) -> bool {
        match self {
            SplitChoice::All => true,
            SplitChoice::Train => split == Split::Train,
            SplitChoice::Val => split == Split::Val,
            SplitChoice::Test => split == Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Informational; the subcommand decides what runs.
    pub task: Option<String>,
    pub model: ModelKind,
    /// QTTN variational layers.
    pub layers: usize,
    /// Lund-tree depth.
    pub depth: usize,
    /// MLP hidden layer widths.
    pub hidden: Vec<usize>,
    /// 1P1Q qubit count.
    pub n_qubits: usize,
    /// Anti-kt radius for jet finding.
    pub radius: f64,
    pub lnkt_cut: f64,
    pub mass_window: Option<(f64, f64)>,
    /// Seeds splits, model initialisation, training and toy generation.
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub train: TrainConfig,
    pub toy: ToyGenConfig,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<SplitChoice>,
    pub native_auc: Option<f64>,
    pub sizes: Vec<usize>,
    pub folds: usize,
    pub n_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            model: ModelKind::Qttn,
            layers: 3,
            depth: 3,
            hidden: vec![4, 3],
            n_qubits: 7,
            radius: 0.8,
            lnkt_cut: 1.0,
            mass_window: None,
            seed: 0,
            train_fraction: 0.7,
            val_fraction: 0.15,
            train: TrainConfig::default(),
            toy: ToyGenConfig::default(),
            input: None,
            output: None,
            checkpoint: None,
            split: None,
            native_auc: None,
            sizes: vec![100, 1000, 10_000],
            folds: 10,
            n_samples: 1024,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn lund(&self) -> LundConfig {
        LundConfig {
            radius: self.radius,
            depth: self.depth,
            ln_kt_cut: self.lnkt_cut,
            mass_window: self.mass_window,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::Qttn => ModelSpec::Qttn(QttnConfig::new(self.depth, self.layers)),
            ModelKind::P1q => ModelSpec::P1q(P1qConfig {
                n_qubits: self.n_qubits,
            }),
            ModelKind::Mlp => ModelSpec::Mlp(MlpConfig::new(2 * node_count(self.depth), self.hidden.clone())),
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn toy_config(&self) -> ToyGenConfig {
        ToyGenConfig {
            seed: self.seed,
            ..self.toy.clone()
        }
    }

    pub fn require_input(&self) -> CliResult<&Path> {
        self.input.as_deref().ok_or_else(|| usage("an input file is required (--input)"))
    }

    pub fn require_output(&self) -> CliResult<&Path> {
        self.output.as_deref().ok_or_else(|| usage("an output directory is required (--output)"))
    }

    pub fn require_checkpoint(&self) -> CliResult<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| usage("a checkpoint is required (--checkpoint)"))
    }

    pub fn validate_lund(&self) -> CliResult<()> {
        self.lund().validate().map_err(|e| usage(e.to_string()))
    }

    pub fn validate_fractions(&self) -> CliResult<()> {
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && v > 0.0 && t + v < 1.0) {
            return Err(usage(format!(
                "split fractions must be positive with train + val < 1, got {t} and {v}"
            )));
        }
        Ok(())
    }

    /// Everything a training run needs, checked before any file is touched.
    pub fn validate_training(&self) -> CliResult<()> {
        self.validate_lund()?;
        self.validate_fractions()?;
        self.model_spec().validate().map_err(|e| usage(e.to_string()))?;
        self.train_config().validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }
}
