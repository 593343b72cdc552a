//! Stacked recurrent classifiers trained with backpropagation through time.
//!
//! A model is: batch normalization of the input features, `layers` LSTM or
//! GRU layers (each optionally bidirectional), a dense layer on the sequence
//! summary and a softmax. The summary is the forward hidden state at the last
//! real time step, concatenated with the backward state at the first step
//! when bidirectional. Dropout masks are sampled once per sequence and cell
//! and held fixed over time.

mod adam;
mod cell;
mod io;
mod network;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use cell::{gru_cell, lstm_cell, CellMasks};
pub use io::{ModelBundle, FORMAT_VERSION};
pub use network::{
    batch_norm_inputs, forward, forward_eval, forward_with, loss_and_grads, loss_and_grads_with, predict, predict_many,
    sample_masks, Batch, FeatureStats, LossAndGrads, Mode, NormSource, SequenceMasks, BN_EPSILON, BN_MOMENTUM,
};
pub use params::{CellParams, Matrix, ParamSet};
pub use train::{clip_global_norm, train, train_with_callback, EpochStats};

#[derive(Debug, Error, PartialEq)]
pub enum RnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("batch normalization needs at least 2 unmasked positions, got {0}")]
    DegenerateBatch(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sequence {index} has {found} features, expected {expected}")]
    InconsistentFeatureDim { index: usize, expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value during training at epoch {epoch}")]
    NumericFailure { epoch: usize },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// The four architectures: LSTM, GRU and their bidirectional variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    Lstm,
    Gru,
    BiLstm,
    BiGru,
}

impl Architecture {
    pub const ALL: [Architecture; 4] =
        [Architecture::Lstm, Architecture::Gru, Architecture::BiLstm, Architecture::BiGru];

    pub fn cell(self) -> CellKind {
        match self {
            Architecture::Lstm | Architecture::BiLstm => CellKind::Lstm,
            Architecture::Gru | Architecture::BiGru => CellKind::Gru,
        }
    }

    pub fn bidirectional(self) -> bool {
        matches!(self, Architecture::BiLstm | Architecture::BiGru)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Lstm => "LSTM",
            Architecture::Gru => "GRU",
            Architecture::BiLstm => "BiLSTM",
            Architecture::BiGru => "BiGRU",
        })
    }
}

impl FromStr for Architecture {
    type Err = RnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RnnError::InvalidConfig(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub bidirectional: bool,
    pub layers: usize,
    /// Units per direction.
    pub hidden: usize,
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Lstm,
            bidirectional: false,
            layers: 2,
            hidden: 256,
            dropout: 0.4,
            recurrent_dropout: 0.4,
            n_classes: 2,
            n_features: 13,
        }
    }
}

impl ModelConfig {
    pub fn new(arch: Architecture, n_features: usize, n_classes: usize) -> Self {
        Self { cell: arch.cell(), bidirectional: arch.bidirectional(), n_features, n_classes, ..Self::default() }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Input width of layer `l`.
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.n_features
        } else {
            self.hidden * self.directions()
        }
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        let bad = |m: &str| Err(RnnError::InvalidConfig(m.to_string()));
        if self.layers == 0 || self.hidden == 0 {
            return bad("layers and hidden must be positive");
        }
        if self.n_features == 0 || self.n_classes < 2 {
            return bad("need n_features >= 1 and n_classes >= 2");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.recurrent_dropout) {
            return bad("dropout probabilities must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            learning_rate: 0.002,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RnnError> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(RnnError::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RnnError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl RnnModel {
    /// Freshly initialized model.
    pub fn new<R: rand::Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, RnnError> {
        config.validate()?;
        let params = ParamSet::init(&config, rng);
        Ok(Self::with_params(config, params))
    }

    /// All-zero weights with batch-norm scale 1.
    pub fn zeros(config: ModelConfig) -> Result<Self, RnnError> {
        config.validate()?;
        let mut params = ParamSet::zeros(&config);
        params.bn_gamma.iter_mut().for_each(|g| *g = 1.0);
        Ok(Self::with_params(config, params))
    }

    fn with_params(config: ModelConfig, params: ParamSet) -> Self {
        let n = config.n_features;
        Self { config, params, running_mean: vec![0.0; n], running_var: vec![1.0; n] }
    }

    pub fn cell(&self, layer: usize, direction: usize) -> &CellParams {
        &self.params.cells[layer * self.config.directions() + direction]
    }
}
