//! Turning a data source into labelled frame sequences.

use std::collections::BTreeMap;
use std::path::Path;

use lungsound::dataset::{
    encode_wav_pcm16, extract_cycles, load_directory, map_pathology_label, synth_dataset, Anomaly, PathologyTask,
    RespiratoryCycle, SynthSpec,
};
use lungsound::dsp::MfccConfig;
use lungsound::frames::{FrameComposer, FrameError, FrameSequence};
use lungsound::metrics::Task;
use lungsound::CANONICAL_RATE;

use crate::config::{DataSource, ExperimentConfig, PathologyUnit};
use crate::error::{write, CliError, StageExt};

/// One classification unit and the patient it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub seq: FrameSequence,
    pub patient: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub items: Vec<Item>,
    /// Cycles too short for one frame of the setting.
    pub excluded_short: usize,
}

fn anomaly_label(task: Task, anomaly: Anomaly) -> usize {
    match task {
        Task::Anomaly2 => usize::from(anomaly != Anomaly::Normal),
        _ => anomaly.index(),
    }
}

fn pathology_label(task: Task, cycle: &RespiratoryCycle) -> usize {
    let kind = if task == Task::Patho2 { PathologyTask::Binary } else { PathologyTask::Ternary };
    map_pathology_label(cycle.diagnosis.disease, kind).index()
}

/// Frames of one cycle; `None` when the cycle is too short for the setting.
fn frames_of(composer: &FrameComposer, cycle: &RespiratoryCycle) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    match composer.compose(cycle.clip.samples()) {
        Ok(f) => Ok(Some(f)),
        Err(FrameError::CycleTooShort { .. } | FrameError::EmptyAfterGrouping { .. }) => Ok(None),
        Err(e) => Err(e).stage("frames"),
    }
}

fn patient_index(ids: &mut BTreeMap<String, u32>, id: &str) -> u32 {
    let next = ids.len() as u32;
    *ids.entry(id.to_string()).or_insert(next)
}

/// Loads, resamples and frames the configured data source.
pub fn prepare_items(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let composer = FrameComposer::new(cfg.setting.setting(), &MfccConfig::default(), CANONICAL_RATE).stage("frames")?;
    let mut patients = BTreeMap::new();
    let mut items = Vec::new();
    let mut excluded_short = 0;

    match &cfg.data {
        DataSource::Synthetic { sequences, seed } => {
            let cycles =
                synth_dataset(&SynthSpec::new(*sequences, cfg.task.n_classes(), *seed)).stage("synthetic data")?;
            let framed = lungsound::par::map(&cycles, |c| frames_of(&composer, &c.cycle));
            for (c, frames) in cycles.iter().zip(framed) {
                match frames? {
                    Some(frames) => items.push(Item {
                        seq: FrameSequence { frames, label: c.label, id: c.cycle.id() },
                        patient: patient_index(&mut patients, &c.cycle.source.patient_id),
                    }),
                    None => excluded_short += 1,
                }
            }
        }
        DataSource::Icbhi { audio_dir, diagnosis } => {
            let (recordings, summary) = load_directory(audio_dir, diagnosis, CANONICAL_RATE).stage("ingest")?;
            log::info!("loaded {} recordings with {} cycles", summary.recordings, summary.cycles);
            let per_recording = lungsound::par::map(&recordings, |rec| {
                let cycles = extract_cycles(rec).stage("cycle extraction")?;
                let frames: Vec<Option<Vec<Vec<f64>>>> =
                    cycles.iter().map(|c| frames_of(&composer, c)).collect::<Result<_, _>>()?;
                Ok::<_, CliError>((cycles, frames))
            });
            for (rec, result) in recordings.iter().zip(per_recording) {
                let (cycles, frames) = result?;
                let patient = patient_index(&mut patients, &rec.source.patient_id);
                excluded_short += frames.iter().filter(|f| f.is_none()).count();
                let whole_recording = cfg.task.is_pathology() && cfg.pathology_unit == PathologyUnit::Recording;
                if whole_recording {
                    let joined: Vec<Vec<f64>> = frames.into_iter().flatten().flatten().collect();
                    if let (false, Some(first)) = (joined.is_empty(), cycles.first()) {
                        let label = pathology_label(cfg.task, first);
                        items.push(Item {
                            seq: FrameSequence { frames: joined, label, id: rec.source.stem() },
                            patient,
                        });
                    }
                    continue;
                }
                for (cycle, frames) in cycles.iter().zip(frames) {
                    let Some(frames) = frames else { continue };
                    let label = if cfg.task.is_pathology() {
                        pathology_label(cfg.task, cycle)
                    } else {
                        anomaly_label(cfg.task, cycle.anomaly)
                    };
                    items.push(Item { seq: FrameSequence { frames, label, id: cycle.id() }, patient });
                }
            }
        }
    }
    if excluded_short > 0 {
        log::warn!("excluded {excluded_short} cycles shorter than one {} frame", cfg.setting);
    }
    Ok(Prepared { items, excluded_short })
}

/// Writes a synthetic corpus in the on-disk layout `load_directory` reads:
/// one recording per cycle, one annotation line covering it, and a
/// diagnosis table. Returns the number of recordings.
pub fn write_synthetic_corpus(dir: &Path, spec: &SynthSpec) -> Result<usize, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let cycles = synth_dataset(spec).stage("synthetic data")?;
    let mut table = String::new();
    for c in &cycles {
        let stem = c.cycle.source.stem();
        write(&dir.join(format!("{stem}.wav")), encode_wav_pcm16(&c.cycle.clip))?;
        let (crackles, wheezes) = c.cycle.anomaly.flags();
        let line = format!("0.0 {:?} {} {}\n", c.cycle.clip.duration_s(), u8::from(crackles), u8::from(wheezes));
        write(&dir.join(format!("{stem}.txt")), line)?;
        table.push_str(&format!("{},{}\n", c.cycle.diagnosis.patient_id, c.cycle.diagnosis.disease.name()));
    }
    write(&dir.join("diagnosis.txt"), table)?;
    Ok(cycles.len())
}
