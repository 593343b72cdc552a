//! Cartesian sweeps over settings, models, normalizations and seeds.

use std::path::PathBuf;

use lungsound::frames::SettingId;
use lungsound::normalize::NormMethod;
use lungsound::rnn::Architecture;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{write, CliError};
use crate::experiment::{read_report, run_experiment, RunReport};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxes {
    pub settings: Vec<SettingId>,
    pub models: Vec<Architecture>,
    pub norms: Vec<NormMethod>,
    pub seeds: Vec<u64>,
}

impl SweepAxes {
    pub fn cells(&self) -> usize {
        self.settings.len() * self.models.len() * self.norms.len() * self.seeds.len()
    }
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub task: String,
    pub model: String,
    pub setting: String,
    pub norm: String,
    pub seed: u64,
    /// `done`, `skipped` (already finished earlier) or `failed`.
    pub status: String,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub icbhi_score: Option<f64>,
    pub macro_accuracy: Option<f64>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    pub error: String,
}

impl SweepRow {
    fn new(cfg: &ExperimentConfig, seed: u64, status: &str) -> Self {
        Self {
            task: cfg.task.to_string(),
            model: cfg.model.to_string(),
            setting: cfg.setting.to_string(),
            norm: cfg.norm.to_string(),
            seed,
            status: status.to_string(),
            sensitivity: None,
            specificity: None,
            icbhi_score: None,
            macro_accuracy: None,
            macro_precision: None,
            macro_recall: None,
            macro_f1: None,
            error: String::new(),
        }
    }

    fn with_report(mut self, r: &RunReport) -> Self {
        let m = &r.metrics;
        self.sensitivity = m.sensitivity;
        self.specificity = m.specificity;
        self.icbhi_score = m.icbhi_score;
        self.macro_accuracy = m.macro_accuracy;
        self.macro_precision = m.macro_precision;
        self.macro_recall = m.macro_recall;
        self.macro_f1 = m.macro_f1;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == "failed").count()
    }
}

/// Runs every cell in order, skipping cells with a finished `report.json`
/// and recording failures without stopping. Writes `<out_dir>/sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, axes: &SweepAxes) -> Result<SweepOutcome, CliError> {
    for (name, len) in [
        ("settings", axes.settings.len()),
        ("models", axes.models.len()),
        ("norms", axes.norms.len()),
        ("seeds", axes.seeds.len()),
    ] {
        if len == 0 {
            return Err(CliError::Validation(format!("sweep axis {name} is empty")));
        }
    }
    let mut rows = Vec::with_capacity(axes.cells());
    for &setting in &axes.settings {
        for &model in &axes.models {
            for &norm in &axes.norms {
                for &seed in &axes.seeds {
                    let cfg = ExperimentConfig { setting, model, norm, seed: Some(seed), ..base.clone() };
                    let dir = cfg.run_dir();
                    let row = if dir.join("report.json").is_file() {
                        match read_report(&dir) {
                            Ok(r) => SweepRow::new(&cfg, seed, "skipped").with_report(&r),
                            Err(e) => SweepRow { error: e.to_string(), ..SweepRow::new(&cfg, seed, "failed") },
                        }
                    } else {
                        match run_experiment(&cfg) {
                            Ok(out) => SweepRow::new(&cfg, seed, "done").with_report(&out.report),
                            Err(e) => {
                                log::error!("{}: {e}", cfg.run_name());
                                SweepRow { error: e.to_string(), ..SweepRow::new(&cfg, seed, "failed") }
                            }
                        }
                    };
                    rows.push(row);
                }
            }
        }
    }
    std::fs::create_dir_all(&base.out_dir).map_err(|e| CliError::io(&base.out_dir, e))?;
    let csv_path = base.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    write(&csv_path, w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?)?;
    Ok(SweepOutcome { rows, csv_path })
}
