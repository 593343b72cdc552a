//! Audio, annotation and diagnosis ingestion.
//!
//! File conventions follow the public ICBHI 2017 distribution: one WAV per
//! recording named `<patient>_<index>_<location>_<mode>_<equipment>.wav`, a
//! sibling `.txt` with one respiratory cycle per line, and a per-patient
//! diagnosis table.

mod annotation;
mod resample;
mod synth;
mod wav;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotation::{parse_annotation, parse_diagnosis_table, parse_filename_metadata};
pub use resample::resample;
pub use synth::{synth_dataset, LabeledCycle, SynthSpec};
pub use wav::{encode_wav_pcm16, parse_wav};

/// Longest admissible respiratory cycle, in seconds.
pub const MAX_CYCLE_SECONDS: f64 = 90.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("WAV data chunk declares {declared} bytes but only {available} are present")]
    TruncatedData { declared: usize, available: usize },
    #[error("line {line}: expected 4 fields, found {found}")]
    BadFieldCount { line: usize, found: usize },
    #[error("line {line}: time field {field:?} is not a number")]
    NonNumericTime { line: usize, field: String },
    #[error("line {line}: flag {value:?} is not 0 or 1")]
    FlagOutOfRange { line: usize, value: String },
    #[error("line {line}: end {end} is not after begin {begin}")]
    InvertedInterval { line: usize, begin: f64, end: f64 },
    #[error("line {line}: interval [{begin}, {end}] is negative or longer than 90 s")]
    IntervalOutOfRange { line: usize, begin: f64, end: f64 },
    #[error("file name {name:?} has {found} underscore-separated tokens, expected 5")]
    BadTokenCount { name: String, found: usize },
    #[error("line {line}: unknown diagnosis {name:?}")]
    UnknownDiagnosis { line: usize, name: String },
    #[error("line {line}: expected `patient_id,diagnosis`")]
    MalformedDiagnosisLine { line: usize },
    #[error("patient {0} listed twice in diagnosis table")]
    DuplicatePatient(String),
    #[error("patient {0} has no diagnosis")]
    MissingDiagnosis(String),
    #[error("cycle [{begin_s}, {end_s}] s exceeds clip duration {duration_s} s")]
    OutOfBoundsInterval { begin_s: f64, end_s: f64, duration_s: f64 },
    #[error("invalid synthetic dataset spec: {0}")]
    InvalidSynthSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mono sample buffer at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::InvalidClip("empty sample buffer".into()));
        }
        if sample_rate == 0 {
            return Err(DatasetError::InvalidClip("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DatasetError::InvalidClip(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One annotated respiratory cycle, times in seconds from the recording start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleAnnotation {
    pub begin_s: f64,
    pub end_s: f64,
    pub crackles: bool,
    pub wheezes: bool,
}

impl CycleAnnotation {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.begin_s
    }

    pub fn anomaly(&self) -> Anomaly {
        Anomaly::from_flags(self.crackles, self.wheezes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordingMetadata {
    pub patient_id: String,
    pub recording_index: String,
    pub chest_location: String,
    pub acquisition_mode: String,
    pub equipment: String,
}

impl RecordingMetadata {
    /// The file stem this metadata was parsed from.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_{}_{}_{}",
            self.patient_id, self.recording_index, self.chest_location, self.acquisition_mode, self.equipment
        )
    }
}

/// Adventitious sound content of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Anomaly {
    Normal,
    Crackles,
    Wheezes,
    Both,
}

impl Anomaly {
    pub const ALL: [Anomaly; 4] = [Anomaly::Normal, Anomaly::Crackles, Anomaly::Wheezes, Anomaly::Both];

    pub fn from_flags(crackles: bool, wheezes: bool) -> Self {
        match (crackles, wheezes) {
            (false, false) => Anomaly::Normal,
            (true, false) => Anomaly::Crackles,
            (false, true) => Anomaly::Wheezes,
            (true, true) => Anomaly::Both,
        }
    }

    pub fn flags(self) -> (bool, bool) {
        match self {
            Anomaly::Normal => (false, false),
            Anomaly::Crackles => (true, false),
            Anomaly::Wheezes => (false, true),
            Anomaly::Both => (true, true),
        }
    }

    /// Class index in the four-class anomaly task.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Diagnosis names of the closed ICBHI set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disease {
    Healthy,
    Copd,
    Bronchiectasis,
    Asthma,
    Urti,
    Lrti,
    Pneumonia,
    Bronchiolitis,
}

impl Disease {
    pub const ALL: [Disease; 8] = [
        Disease::Healthy,
        Disease::Copd,
        Disease::Bronchiectasis,
        Disease::Asthma,
        Disease::Urti,
        Disease::Lrti,
        Disease::Pneumonia,
        Disease::Bronchiolitis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Disease::Healthy => "Healthy",
            Disease::Copd => "COPD",
            Disease::Bronchiectasis => "Bronchiectasis",
            Disease::Asthma => "Asthma",
            Disease::Urti => "URTI",
            Disease::Lrti => "LRTI",
            Disease::Pneumonia => "Pneumonia",
            Disease::Bronchiolitis => "Bronchiolitis",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn parse(name: &str) -> Option<Self> {
        let name = name.trim();
        Self::ALL.into_iter().find(|d| d.name().eq_ignore_ascii_case(name))
    }

    pub fn is_chronic(self) -> bool {
        matches!(self, Disease::Copd | Disease::Bronchiectasis | Disease::Asthma)
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub patient_id: String,
    pub disease: Disease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathologyTask {
    Binary,
    Ternary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathologyClass {
    Healthy,
    Unhealthy,
    Chronic,
    NonChronic,
}

impl PathologyClass {
    /// Class index within its task: healthy is always 0.
    pub fn index(self) -> usize {
        match self {
            PathologyClass::Healthy => 0,
            PathologyClass::Unhealthy | PathologyClass::Chronic => 1,
            PathologyClass::NonChronic => 2,
        }
    }
}

/// Maps a diagnosis to the binary or ternary pathology class.
pub fn map_pathology_label(disease: Disease, task: PathologyTask) -> PathologyClass {
    match (task, disease) {
        (_, Disease::Healthy) => PathologyClass::Healthy,
        (PathologyTask::Binary, _) => PathologyClass::Unhealthy,
        (PathologyTask::Ternary, d) if d.is_chronic() => PathologyClass::Chronic,
        (PathologyTask::Ternary, _) => PathologyClass::NonChronic,
    }
}

/// A labeled segment of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RespiratoryCycle {
    pub clip: AudioClip,
    pub anomaly: Anomaly,
    pub diagnosis: Diagnosis,
    pub source: RecordingMetadata,
    /// Start of the cycle within its recording.
    pub begin_s: f64,
}

impl RespiratoryCycle {
    /// Identifier unique within a dataset: file stem plus cycle start.
    pub fn id(&self) -> String {
        format!("{}@{:.3}", self.source.stem(), self.begin_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub clip: AudioClip,
    cycles: Vec<CycleAnnotation>,
    pub diagnosis: Diagnosis,
    pub source: RecordingMetadata,
}

impl Recording {
    /// Builds a recording, ordering cycles by start time. Every cycle must
    /// lie within the clip.
    pub fn new(
        clip: AudioClip,
        mut cycles: Vec<CycleAnnotation>,
        diagnosis: Diagnosis,
        source: RecordingMetadata,
    ) -> Result<Self, DatasetError> {
        let duration_s = clip.duration_s();
        for c in &cycles {
            check_bounds(c, clip.len(), clip.sample_rate(), duration_s)?;
        }
        cycles.sort_by(|a, b| a.begin_s.total_cmp(&b.begin_s));
        Ok(Self { clip, cycles, diagnosis, source })
    }

    pub fn cycles(&self) -> &[CycleAnnotation] {
        &self.cycles
    }
}

/// Round-half-up conversion of a time to a sample index.
pub fn time_to_index(t_s: f64, rate: u32) -> usize {
    (t_s * f64::from(rate) + 0.5).floor().max(0.0) as usize
}

fn check_bounds(
    c: &CycleAnnotation,
    n_samples: usize,
    rate: u32,
    duration_s: f64,
) -> Result<(usize, usize), DatasetError> {
    let begin = time_to_index(c.begin_s, rate);
    let end = time_to_index(c.end_s, rate);
    if c.begin_s < 0.0 || end > n_samples || begin >= end {
        return Err(DatasetError::OutOfBoundsInterval { begin_s: c.begin_s, end_s: c.end_s, duration_s });
    }
    Ok((begin, end))
}

/// Slices every annotated cycle out of a recording.
pub fn extract_cycles(recording: &Recording) -> Result<Vec<RespiratoryCycle>, DatasetError> {
    let clip = &recording.clip;
    let rate = clip.sample_rate();
    recording
        .cycles
        .iter()
        .map(|c| {
            let (begin, end) = check_bounds(c, clip.len(), rate, clip.duration_s())?;
            Ok(RespiratoryCycle {
                clip: AudioClip::new(clip.samples()[begin..end].to_vec(), rate)?,
                anomaly: c.anomaly(),
                diagnosis: recording.diagnosis.clone(),
                source: recording.source.clone(),
                begin_s: c.begin_s,
            })
        })
        .collect()
}

/// Counts gathered while loading a directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub recordings: usize,
    pub cycles: usize,
    pub dropped_out_of_bounds: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

/// Loads every `<stem>.wav` + `<stem>.txt` pair in `dir`, resampled to
/// `target_rate`. Annotations reaching past the end of their audio are
/// dropped with a warning.
pub fn load_directory(
    dir: &Path,
    diagnosis_table: &Path,
    target_rate: u32,
) -> Result<(Vec<Recording>, LoadSummary), DatasetError> {
    let table_bytes = read_file(diagnosis_table)?;
    let diagnoses = parse_diagnosis_table(&String::from_utf8_lossy(&table_bytes))?;

    let entries = std::fs::read_dir(dir).map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
    let mut wavs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();

    let loaded = crate::par::map(&wavs, |path| load_one(path, &diagnoses, target_rate));
    let mut summary = LoadSummary::default();
    let mut recordings = Vec::with_capacity(loaded.len());
    for item in loaded {
        let (rec, dropped) = item?;
        summary.recordings += 1;
        summary.cycles += rec.cycles.len();
        summary.dropped_out_of_bounds += dropped;
        recordings.push(rec);
    }
    if summary.dropped_out_of_bounds > 0 {
        log::warn!("dropped {} annotations extending past the end of their recording", summary.dropped_out_of_bounds);
    }
    Ok((recordings, summary))
}

fn load_one(
    path: &Path,
    diagnoses: &HashMap<String, Diagnosis>,
    target_rate: u32,
) -> Result<(Recording, usize), DatasetError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let source = parse_filename_metadata(&name)?;
    let diagnosis = diagnoses
        .get(&source.patient_id)
        .cloned()
        .ok_or_else(|| DatasetError::MissingDiagnosis(source.patient_id.clone()))?;
    let clip = resample(&parse_wav(&read_file(path)?)?, target_rate);
    let text = read_file(&path.with_extension("txt"))?;
    let annotations = parse_annotation(&String::from_utf8_lossy(&text))?;
    let total = annotations.len();
    let kept: Vec<_> = annotations
        .into_iter()
        .filter(|c| check_bounds(c, clip.len(), clip.sample_rate(), clip.duration_s()).is_ok())
        .collect();
    let dropped = total - kept.len();
    Ok((Recording::new(clip, kept, diagnosis, source)?, dropped))
}
