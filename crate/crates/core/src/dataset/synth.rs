//! Seeded synthetic cycles for desk-scale runs.
//!
//! Every cycle is low-passed noise with a sequence of tone bursts. All
//! classes share the same set of burst frequencies; class `k` plays them
//! rotated by `k` positions, so only the order of the bursts tells the
//! classes apart.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Anomaly, AudioClip, DatasetError, Diagnosis, Disease, RecordingMetadata, RespiratoryCycle};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_sequences: usize,
    pub classes: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl SynthSpec {
    pub fn new(n_sequences: usize, classes: usize, seed: u64) -> Self {
        Self {
            n_sequences,
            classes,
            seed,
            sample_rate: crate::CANONICAL_RATE,
            min_duration_s: 1.5,
            max_duration_s: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCycle {
    pub cycle: RespiratoryCycle,
    pub label: usize,
}

fn burst_frequencies(n: usize) -> Vec<f64> {
    (0..n).map(|j| 250.0 + j as f64 * 1500.0 / (n - 1) as f64).collect()
}

/// Generates `n_sequences` cycles, class `i % classes` for the i-th one.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<LabeledCycle>, DatasetError> {
    if spec.n_sequences == 0 {
        return Err(DatasetError::InvalidSynthSpec("n_sequences must be positive".into()));
    }
    if spec.classes < 2 {
        return Err(DatasetError::InvalidSynthSpec("at least two classes are required".into()));
    }
    if !(spec.min_duration_s > 0.0 && spec.min_duration_s <= spec.max_duration_s) {
        return Err(DatasetError::InvalidSynthSpec("bad duration range".into()));
    }
    let n_bursts = spec.classes.max(2);
    let freqs = burst_frequencies(n_bursts);
    // Highest burst including the +5 % jitter must stay below Nyquist.
    if 2.0 * 1.05 * freqs[n_bursts - 1] >= f64::from(spec.sample_rate) {
        return Err(DatasetError::InvalidSynthSpec("sample rate too low for the burst band".into()));
    }
    let rate = f64::from(spec.sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    (0..spec.n_sequences)
        .map(|idx| {
            let label = idx % spec.classes;
            let duration = rng.random_range(spec.min_duration_s..=spec.max_duration_s);
            let n = (duration * rate).round() as usize;
            let noise_gain = rng.random_range(0.03..0.07);
            let mut lp = 0.0;
            let mut samples: Vec<f64> = (0..n)
                .map(|_| {
                    lp += 0.3 * (rng.random_range(-1.0..1.0) - lp);
                    noise_gain * lp
                })
                .collect();

            let seg = n / n_bursts;
            for j in 0..n_bursts {
                let f = freqs[(j + label) % n_bursts] * rng.random_range(0.95..1.05);
                let amp = rng.random_range(0.2..0.4);
                let phase = rng.random_range(0.0..2.0 * PI);
                let start = j * seg + seg * 15 / 100;
                let len = seg * 70 / 100;
                for t in 0..len {
                    let env = 0.5 - 0.5 * (2.0 * PI * t as f64 / len as f64).cos();
                    samples[start + t] += amp * env * (2.0 * PI * f * t as f64 / rate + phase).sin();
                }
            }

            let anomaly = Anomaly::from_index(label % 4).unwrap_or(Anomaly::Normal);
            let disease = if label == 0 { Disease::Healthy } else { Disease::ALL[1 + (label - 1) % 7] };
            let patient_id = format!("{}", 900 + idx);
            Ok(LabeledCycle {
                cycle: RespiratoryCycle {
                    clip: AudioClip::new(samples, spec.sample_rate)?,
                    anomaly,
                    diagnosis: Diagnosis { patient_id: patient_id.clone(), disease },
                    source: RecordingMetadata {
                        patient_id,
                        recording_index: "1s1".into(),
                        chest_location: "Tc".into(),
                        acquisition_mode: "sc".into(),
                        equipment: "Synth".into(),
                    },
                    begin_s: 0.0,
                },
                label,
            })
        })
        .collect()
}
