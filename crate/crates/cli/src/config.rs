//! Experiment configuration and its flat `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lungsound::frames::SettingId;
use lungsound::metrics::Task;
use lungsound::normalize::NormMethod;
use lungsound::rnn::{Architecture, ModelConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated cycles; one sequence per cycle, label from the generator.
    Synthetic { sequences: usize, seed: u64 },
    /// A directory of `<stem>.wav` + `<stem>.txt` pairs and a diagnosis table.
    Icbhi { audio_dir: PathBuf, diagnosis: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Stratified,
    Random,
    /// No patient appears on both sides.
    Patient,
}

/// Sequence unit for the pathology tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathologyUnit {
    /// All cycles of a recording concatenated in time order.
    Recording,
    Cycle,
}

macro_rules! keyword_enum {
    ($ty:ident, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = CliError;
            fn from_str(s: &str) -> Result<Self, CliError> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(CliError::Validation(format!("unknown value {s:?}"))),
                }
            }
        }
    };
}

keyword_enum!(SplitMode, Stratified => "stratified", Random => "random", Patient => "patient");
keyword_enum!(PathologyUnit, Recording => "recording", Cycle => "cycle");

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub setting: SettingId,
    pub norm: NormMethod,
    pub model: Architecture,
    /// Seeds model initialization, dropout and shuffling. Required to run.
    pub seed: Option<u64>,
    pub train: TrainConfig,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub data: DataSource,
    pub split: SplitMode,
    pub split_seed: u64,
    pub split_ratio: f64,
    pub pathology_unit: PathologyUnit,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            task: Task::Anomaly4,
            setting: SettingId::S3,
            norm: NormMethod::ZScore,
            model: Architecture::Lstm,
            seed: None,
            train: TrainConfig::default(),
            layers: m.layers,
            hidden: m.hidden,
            dropout: m.dropout,
            recurrent_dropout: m.recurrent_dropout,
            data: DataSource::Synthetic { sequences: 200, seed: 0 },
            split: SplitMode::Stratified,
            split_seed: 0,
            split_ratio: 0.8,
            pathology_unit: PathologyUnit::Recording,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Every key accepted in config files and as `--key value` flags.
pub const KEYS: &[&str] = &[
    "task",
    "setting",
    "norm",
    "model",
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "clip_norm",
    "layers",
    "hidden",
    "dropout",
    "recurrent_dropout",
    "data",
    "synth_sequences",
    "synth_seed",
    "audio_dir",
    "diagnosis_file",
    "split",
    "split_seed",
    "split_ratio",
    "pathology_unit",
    "out_dir",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Validation(format!("{key}: cannot parse {value:?}")))
}

fn invalid<E: fmt::Display>(key: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Validation(format!("{key}: {e}"))
}

impl ExperimentConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "task" => self.task = v.parse().map_err(invalid(key))?,
            "setting" => self.setting = v.parse().map_err(invalid(key))?,
            "norm" => self.norm = v.parse().map_err(invalid(key))?,
            "model" => self.model = v.parse().map_err(invalid(key))?,
            "seed" => self.seed = Some(num(key, v)?),
            "epochs" => self.train.epochs = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "learning_rate" => self.train.learning_rate = num(key, v)?,
            "clip_norm" => {
                self.train.clip_norm = if v.eq_ignore_ascii_case("none") { None } else { Some(num(key, v)?) }
            }
            "layers" => self.layers = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "dropout" => self.dropout = num(key, v)?,
            "recurrent_dropout" => self.recurrent_dropout = num(key, v)?,
            "data" => {
                // Switching kinds resets the source; naming the current kind keeps it.
                self.data = match (v.to_ascii_lowercase().as_str(), &self.data) {
                    ("synthetic", DataSource::Synthetic { .. }) | ("icbhi", DataSource::Icbhi { .. }) => {
                        self.data.clone()
                    }
                    ("synthetic", _) => DataSource::Synthetic { sequences: 200, seed: 0 },
                    ("icbhi", _) => DataSource::Icbhi { audio_dir: PathBuf::new(), diagnosis: PathBuf::new() },
                    _ => return Err(CliError::Validation(format!("data: expected synthetic or icbhi, got {v:?}"))),
                }
            }
            "synth_sequences" | "synth_seed" => match &mut self.data {
                DataSource::Synthetic { sequences, seed } => {
                    if key == "synth_sequences" {
                        *sequences = num(key, v)?;
                    } else {
                        *seed = num(key, v)?;
                    }
                }
                DataSource::Icbhi { .. } => return Err(CliError::Validation(format!("{key} needs data = synthetic"))),
            },
            "audio_dir" | "diagnosis_file" => {
                if let DataSource::Synthetic { .. } = self.data {
                    self.data = DataSource::Icbhi { audio_dir: PathBuf::new(), diagnosis: PathBuf::new() };
                }
                if let DataSource::Icbhi { audio_dir, diagnosis } = &mut self.data {
                    if key == "audio_dir" {
                        *audio_dir = PathBuf::from(v);
                    } else {
                        *diagnosis = PathBuf::from(v);
                    }
                }
            }
            "split" => self.split = v.parse()?,
            "split_seed" => self.split_seed = num(key, v)?,
            "split_ratio" => self.split_ratio = num(key, v)?,
            "pathology_unit" => self.pathology_unit = v.parse()?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(CliError::Validation(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Canonical text form; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("task = {}", self.task),
            format!("setting = {}", self.setting),
            format!("norm = {}", self.norm),
            format!("model = {}", self.model),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed = {seed}"));
        }
        let t = &self.train;
        lines.push(format!("epochs = {}", t.epochs));
        lines.push(format!("batch_size = {}", t.batch_size));
        lines.push(format!("learning_rate = {:?}", t.learning_rate));
        lines.push(format!("clip_norm = {}", t.clip_norm.map_or("none".to_string(), |c| format!("{c:?}"))));
        lines.push(format!("layers = {}", self.layers));
        lines.push(format!("hidden = {}", self.hidden));
        lines.push(format!("dropout = {:?}", self.dropout));
        lines.push(format!("recurrent_dropout = {:?}", self.recurrent_dropout));
        match &self.data {
            DataSource::Synthetic { sequences, seed } => {
                lines.push("data = synthetic".into());
                lines.push(format!("synth_sequences = {sequences}"));
                lines.push(format!("synth_seed = {seed}"));
            }
            DataSource::Icbhi { audio_dir, diagnosis } => {
                lines.push("data = icbhi".into());
                lines.push(format!("audio_dir = {}", audio_dir.display()));
                lines.push(format!("diagnosis_file = {}", diagnosis.display()));
            }
        }
        lines.push(format!("split = {}", self.split));
        lines.push(format!("split_seed = {}", self.split_seed));
        lines.push(format!("split_ratio = {:?}", self.split_ratio));
        lines.push(format!("pathology_unit = {}", self.pathology_unit));
        lines.push(format!("out_dir = {}", self.out_dir.display()));
        lines.join("\n") + "\n"
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            recurrent_dropout: self.recurrent_dropout,
            ..ModelConfig::new(self.model, self.setting.setting().n_features, self.task.n_classes())
        }
    }

    /// The seed, which must be given for training.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Validation("--seed is required".into()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.require_seed()?;
        self.model_config().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::Validation("split_ratio must lie strictly between 0 and 1".into()));
        }
        match &self.data {
            DataSource::Synthetic { sequences, .. } if *sequences < 2 => {
                Err(CliError::Validation("synth_sequences must be at least 2".into()))
            }
            DataSource::Icbhi { audio_dir, diagnosis } => {
                if !audio_dir.is_dir() {
                    return Err(CliError::Validation(format!("audio_dir {} is not a directory", audio_dir.display())));
                }
                if !diagnosis.is_file() {
                    return Err(CliError::Validation(format!("diagnosis_file {} not found", diagnosis.display())));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `<task>_<model>_<setting>_<norm>_<seed>`
    pub fn run_name(&self) -> String {
        let seed = self.seed.map_or("noseed".to_string(), |s| s.to_string());
        format!("{}_{}_{}_{}_{}", self.task, self.model, self.setting, self.norm, seed)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_name())
    }
}
