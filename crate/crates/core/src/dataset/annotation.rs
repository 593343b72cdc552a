use std::collections::HashMap;
use std::path::Path;

use super::{CycleAnnotation, DatasetError, Diagnosis, Disease, RecordingMetadata, MAX_CYCLE_SECONDS};

fn parse_flag(line: usize, field: &str) -> Result<bool, DatasetError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(DatasetError::FlagOutOfRange { line, value: other.to_string() }),
    }
}

fn parse_time(line: usize, field: &str) -> Result<f64, DatasetError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| DatasetError::NonNumericTime { line, field: field.to_string() })
}

/// Parses a cycle annotation file: `begin end crackles wheezes` per line.
pub fn parse_annotation(text: &str) -> Result<Vec<CycleAnnotation>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(DatasetError::BadFieldCount { line, found: fields.len() });
        }
        let begin = parse_time(line, fields[0])?;
        let end = parse_time(line, fields[1])?;
        let crackles = parse_flag(line, fields[2])?;
        let wheezes = parse_flag(line, fields[3])?;
        if end <= begin {
            return Err(DatasetError::InvertedInterval { line, begin, end });
        }
        if begin < 0.0 || end - begin > MAX_CYCLE_SECONDS {
            return Err(DatasetError::IntervalOutOfRange { line, begin, end });
        }
        out.push(CycleAnnotation { begin_s: begin, end_s: end, crackles, wheezes });
    }
    Ok(out)
}

/// Splits `<patient>_<index>_<location>_<mode>_<equipment>.<ext>` into its
/// five tokens. Any leading directories are ignored.
pub fn parse_filename_metadata(name: &str) -> Result<RecordingMetadata, DatasetError> {
    let base = Path::new(name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tokens: Vec<&str> = base.split('_').collect();
    if tokens.len() != 5 || tokens.iter().any(|t| t.is_empty()) {
        return Err(DatasetError::BadTokenCount { name: name.to_string(), found: tokens.len() });
    }
    Ok(RecordingMetadata {
        patient_id: tokens[0].to_string(),
        recording_index: tokens[1].to_string(),
        chest_location: tokens[2].to_string(),
        acquisition_mode: tokens[3].to_string(),
        equipment: tokens[4].to_string(),
    })
}

/// Parses `patient_id,diagnosis` lines (comma or tab separated).
pub fn parse_diagnosis_table(text: &str) -> Result<HashMap<String, Diagnosis>, DatasetError> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, name) = trimmed.split_once([',', '\t']).ok_or(DatasetError::MalformedDiagnosisLine { line })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(DatasetError::MalformedDiagnosisLine { line });
        }
        let disease = Disease::parse(name)
            .ok_or_else(|| DatasetError::UnknownDiagnosis { line, name: name.trim().to_string() })?;
        let diag = Diagnosis { patient_id: id.to_string(), disease };
        if out.insert(id.to_string(), diag).is_some() {
            return Err(DatasetError::DuplicatePatient(id.to_string()));
        }
    }
    Ok(out)
}
