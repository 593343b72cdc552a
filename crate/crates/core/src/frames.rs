//! Frame composition: a cycle is cut into fixed windows, each window becomes
//! one MFCC vector, and consecutive disjoint groups of windows are
//! concatenated into the frames fed to the recurrent network.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RespiratoryCycle;
use crate::dsp::{DspError, MfccConfig, MfccExtractor};

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("cycle of {duration_ms} ms is shorter than the {window_ms} ms window")]
    CycleTooShort { duration_ms: f64, window_ms: u32 },
    #[error("{windows} windows cannot fill a group of {group}")]
    EmptyAfterGrouping { windows: usize, group: usize },
    #[error("unknown frame setting {0:?}")]
    UnknownSetting(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SettingId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
}

impl SettingId {
    pub const ALL: [SettingId; 7] =
        [SettingId::S1, SettingId::S2, SettingId::S3, SettingId::S4, SettingId::S5, SettingId::S6, SettingId::S7];

    pub fn setting(self) -> FrameSetting {
        builtin_settings()[self as usize]
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", *self as usize + 1)
    }
}

impl FromStr for SettingId {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FrameError::UnknownSetting(s.to_string()))
    }
}

/// One frame-composition configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSetting {
    pub id: SettingId,
    pub window_ms: u32,
    pub step_ms: u32,
    /// Windows concatenated per frame.
    pub group: usize,
    /// Time span of one frame; informative only.
    pub frame_ms: u32,
    pub n_features: usize,
}

const fn row(
    id: SettingId,
    window_ms: u32,
    step_ms: u32,
    group: usize,
    frame_ms: u32,
    n_features: usize,
) -> FrameSetting {
    FrameSetting { id, window_ms, step_ms, group, frame_ms, n_features }
}

const SETTINGS: [FrameSetting; 7] = [
    row(SettingId::S1, 500, 500, 1, 500, 13),
    row(SettingId::S2, 500, 250, 1, 500, 13),
    row(SettingId::S3, 250, 250, 1, 250, 13),
    row(SettingId::S4, 50, 50, 5, 250, 65),
    row(SettingId::S5, 50, 25, 5, 150, 65),
    row(SettingId::S6, 50, 50, 10, 500, 130),
    row(SettingId::S7, 50, 25, 10, 275, 130),
];

/// The seven settings S1..S7.
pub fn builtin_settings() -> [FrameSetting; 7] {
    SETTINGS
}

/// Round-half-up milliseconds to samples.
pub fn ms_to_samples(ms: u32, rate: u32) -> usize {
    ((u64::from(ms) * u64::from(rate) + 500) / 1000) as usize
}

/// Number of windows fitting in `n_samples`.
pub fn window_count(n_samples: usize, window: usize, step: usize) -> Option<usize> {
    (n_samples >= window && window > 0 && step > 0).then(|| (n_samples - window) / step + 1)
}

/// Number of windows a cycle of `duration_ms` yields under `s`.
pub fn window_starts(duration_ms: f64, s: &FrameSetting) -> Result<usize, FrameError> {
    let window = f64::from(s.window_ms);
    if duration_ms.is_nan() || duration_ms < window {
        return Err(FrameError::CycleTooShort { duration_ms, window_ms: s.window_ms });
    }
    Ok(((duration_ms - window) / f64::from(s.step_ms)).floor() as usize + 1)
}

/// RNN input: one feature vector per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub label: usize,
    pub id: String,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// A setting bound to an MFCC extractor at a given rate.
#[derive(Debug, Clone)]
pub struct FrameComposer {
    setting: FrameSetting,
    rate: u32,
    window: usize,
    step: usize,
    extractor: MfccExtractor,
}

impl FrameComposer {
    pub fn new(setting: FrameSetting, cfg: &MfccConfig, rate: u32) -> Result<Self, FrameError> {
        let window = ms_to_samples(setting.window_ms, rate);
        let step = ms_to_samples(setting.step_ms, rate);
        Ok(Self { setting, rate, window, step, extractor: MfccExtractor::new(cfg, rate, window)? })
    }

    pub fn setting(&self) -> &FrameSetting {
        &self.setting
    }

    pub fn window_samples(&self) -> usize {
        self.window
    }

    pub fn step_samples(&self) -> usize {
        self.step
    }

    /// Per-window MFCC vectors in time order.
    pub fn window_mfccs(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>, FrameError> {
        let n = window_count(samples.len(), self.window, self.step).ok_or(FrameError::CycleTooShort {
            duration_ms: samples.len() as f64 * 1000.0 / f64::from(self.rate),
            window_ms: self.setting.window_ms,
        })?;
        Ok((0..n).map(|i| self.extractor.extract(&samples[i * self.step..i * self.step + self.window])).collect())
    }

    /// Frames of `group` concatenated window vectors; trailing windows that
    /// cannot fill a group are dropped.
    pub fn compose(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>, FrameError> {
        let windows = self.window_mfccs(samples)?;
        let group = self.setting.group;
        if windows.len() < group {
            return Err(FrameError::EmptyAfterGrouping { windows: windows.len(), group });
        }
        Ok(windows.chunks_exact(group).map(|c| c.concat()).collect())
    }
}

/// Frames of one cycle, labeled with its four-class anomaly index.
pub fn compose_frames(
    cycle: &RespiratoryCycle,
    setting: &FrameSetting,
    cfg: &MfccConfig,
) -> Result<FrameSequence, FrameError> {
    let composer = FrameComposer::new(*setting, cfg, cycle.clip.sample_rate())?;
    Ok(FrameSequence { frames: composer.compose(cycle.clip.samples())?, label: cycle.anomaly.index(), id: cycle.id() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_dataset, SynthSpec};

    #[test]
    fn table_rows() {
        let s = builtin_settings();
        assert_eq!((s[3].window_ms, s[3].step_ms, s[3].group, s[3].frame_ms, s[3].n_features), (50, 50, 5, 250, 65));
        assert_eq!((s[5].window_ms, s[5].step_ms, s[5].group, s[5].frame_ms, s[5].n_features), (50, 50, 10, 500, 130));
        assert_eq!((s[6].window_ms, s[6].step_ms, s[6].group, s[6].frame_ms, s[6].n_features), (50, 25, 10, 275, 130));
        for r in s {
            assert_eq!(r.n_features, 13 * r.group);
            assert!(r.step_ms == r.window_ms || 2 * r.step_ms == r.window_ms);
        }
    }

    #[test]
    fn frame_span_consistent() {
        for r in builtin_settings() {
            assert_eq!(r.frame_ms, r.window_ms + (r.group as u32 - 1) * r.step_ms, "{}", r.id);
        }
    }

    #[test]
    fn setting_id_parse_and_display() {
        for id in SettingId::ALL {
            assert_eq!(id.to_string().parse::<SettingId>().unwrap(), id);
            assert_eq!(id.setting().id, id);
        }
        assert_eq!("s4".parse::<SettingId>().unwrap(), SettingId::S4);
        assert!("S8".parse::<SettingId>().is_err());
    }

    #[test]
    fn window_count_formula() {
        assert_eq!(window_starts(2500.0, &SettingId::S1.setting()), Ok(5));
        assert_eq!(window_starts(2500.0, &SettingId::S2.setting()), Ok(9));
        assert!(matches!(window_starts(200.0, &SettingId::S1.setting()), Err(FrameError::CycleTooShort { .. })));
        assert_eq!(ms_to_samples(50, 4000), 200);
    }

    #[test]
    fn compose_counts() {
        let cfg = MfccConfig::default();
        let samples: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.01).sin() * 0.2).collect();
        let s4 = FrameComposer::new(SettingId::S4.setting(), &cfg, 4000).unwrap();
        let frames = s4.compose(&samples).unwrap();
        assert_eq!((frames.len(), frames[0].len()), (10, 65));
        let s1 = FrameComposer::new(SettingId::S1.setting(), &cfg, 4000).unwrap();
        let frames = s1.compose(&samples).unwrap();
        assert_eq!((frames.len(), frames[0].len()), (5, 13));
    }

    #[test]
    fn short_cycles_rejected() {
        let cfg = MfccConfig::default();
        let s6 = FrameComposer::new(SettingId::S6.setting(), &cfg, 4000).unwrap();
        // 300 ms: six 50 ms windows, not enough for a group of ten.
        assert_eq!(s6.compose(&[0.1; 1200]), Err(FrameError::EmptyAfterGrouping { windows: 6, group: 10 }));
        let s1 = FrameComposer::new(SettingId::S1.setting(), &cfg, 4000).unwrap();
        assert!(matches!(s1.compose(&[0.1; 800]), Err(FrameError::CycleTooShort { .. })));
    }

    #[test]
    fn windows_tile_or_half_overlap() {
        let cfg = MfccConfig::default();
        for s in builtin_settings() {
            let c = FrameComposer::new(s, &cfg, 4000).unwrap();
            if s.step_ms == s.window_ms {
                assert_eq!(c.step_samples(), c.window_samples());
            } else {
                assert_eq!(2 * c.step_samples(), c.window_samples());
            }
        }
    }

    #[test]
    fn longer_cycles_never_fewer_frames() {
        let cfg = MfccConfig::default();
        let c = FrameComposer::new(SettingId::S5.setting(), &cfg, 4000).unwrap();
        let signal: Vec<f64> = (0..8000).map(|i| ((i * 13) % 7) as f64 * 0.01).collect();
        let mut last = 0;
        for len in (600..8000).step_by(137) {
            let n = c.compose(&signal[..len]).map_or(0, |f| f.len());
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn compose_frames_uses_anomaly_label() {
        let data = synth_dataset(&SynthSpec::new(4, 4, 9)).unwrap();
        for lc in &data {
            let seq = compose_frames(&lc.cycle, &SettingId::S3.setting(), &MfccConfig::default()).unwrap();
            assert_eq!(seq.label, lc.label);
            assert_eq!(seq.n_features(), 13);
            assert!(seq.frames.iter().flatten().all(|v| v.is_finite()));
        }
    }
}
