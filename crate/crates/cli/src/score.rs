//! Scoring prediction files against truth files.

use std::collections::BTreeMap;
use std::path::Path;

use lungsound::metrics::{confusion, report, MetricsReport, Task};

use crate::error::{CliError, StageExt};

/// Reads an `id,label` CSV with a header; labels are class names or indices.
pub fn read_labels(path: &Path, task: Task) -> Result<BTreeMap<String, usize>, CliError> {
    let bad = |message: String| CliError::BadFile { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let (Some(id), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(bad(format!("line {line} needs id and label")));
        };
        let class = task.parse_label(label).ok_or_else(|| CliError::UnknownLabel { line, label: label.to_string() })?;
        if out.insert(id.to_string(), class).is_some() {
            return Err(bad(format!("duplicate id {id:?} on line {line}")));
        }
    }
    Ok(out)
}

/// Joins predictions and truths on id and scores them.
pub fn score_predictions(pred: &Path, truth: &Path, task: Task) -> Result<MetricsReport, CliError> {
    let p = read_labels(pred, task)?;
    let t = read_labels(truth, task)?;
    if let Some(id) = p.keys().find(|k| !t.contains_key(*k)).or_else(|| t.keys().find(|k| !p.contains_key(*k))) {
        return Err(CliError::IdMismatch(id.clone()));
    }
    let preds: Vec<usize> = p.values().copied().collect();
    let truths: Vec<usize> = t.values().copied().collect();
    let mut cm = confusion(&preds, &truths, task.n_classes()).stage("metrics")?;
    cm.class_names = task.class_names().iter().map(|s| s.to_string()).collect();
    report(&cm, task).stage("metrics")
}
