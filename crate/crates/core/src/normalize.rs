//! Per-feature Min-Max and Z-score normalization, fitted on training frames
//! and applied unchanged to every split.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameSequence;

/// Guard for constant features.
pub const EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("need at least 2 frame vectors to fit statistics, got {0}")]
    EmptyInput(usize),
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown normalization {0:?}")]
    UnknownMethod(String),
    #[error("malformed statistics file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    None,
    MinMax,
    ZScore,
}

impl fmt::Display for NormMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMethod::None => "none",
            NormMethod::MinMax => "minmax",
            NormMethod::ZScore => "zscore",
        })
    }
}

impl FromStr for NormMethod {
    type Err = NormalizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "none" => Ok(NormMethod::None),
            "minmax" => Ok(NormMethod::MinMax),
            "zscore" => Ok(NormMethod::ZScore),
            _ => Err(NormalizeError::UnknownMethod(s.to_string())),
        }
    }
}

/// Fitted per-feature statistics. Standard deviation is the population one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub method: NormMethod,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Fits statistics over every frame vector yielded by `frames`.
    pub fn fit<'a, I>(frames: I, method: NormMethod) -> Result<Self, NormalizeError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = frames.into_iter();
        let first = iter.next().ok_or(NormalizeError::EmptyInput(0))?;
        let dim = first.len();
        let mut count = 1usize;
        let mut sum = first.to_vec();
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        let mut rows = vec![first];
        for row in iter {
            if row.len() != dim {
                return Err(NormalizeError::DimensionMismatch { expected: dim, found: row.len() });
            }
            for j in 0..dim {
                sum[j] += row[j];
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
            rows.push(row);
            count += 1;
        }
        if count < 2 {
            return Err(NormalizeError::EmptyInput(count));
        }
        let n = count as f64;
        // A constant column's mean is the constant itself; sum / n can be off
        // by an ulp, which the epsilon floor would blow up.
        let mean: Vec<f64> = (0..dim).map(|j| if min[j] == max[j] { min[j] } else { sum[j] / n }).collect();
        // Two-pass variance.
        let mut sq = vec![0.0; dim];
        for row in &rows {
            for j in 0..dim {
                let d = row[j] - mean[j];
                sq[j] += d * d;
            }
        }
        let std = sq.iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { method, mean, std, min, max })
    }

    /// Fits over all frames of all sequences.
    pub fn fit_sequences(seqs: &[FrameSequence], method: NormMethod) -> Result<Self, NormalizeError> {
        Self::fit(seqs.iter().flat_map(|s| s.frames.iter().map(Vec::as_slice)), method)
    }

    /// Normalizes one frame vector in place. Out-of-range values are kept.
    pub fn apply_in_place(&self, frame: &mut [f64]) -> Result<(), NormalizeError> {
        if frame.len() != self.n_features() {
            return Err(NormalizeError::DimensionMismatch { expected: self.n_features(), found: frame.len() });
        }
        match self.method {
            NormMethod::None => {}
            NormMethod::ZScore => {
                for (j, x) in frame.iter_mut().enumerate() {
                    *x = (*x - self.mean[j]) / self.std[j].max(EPSILON);
                }
            }
            NormMethod::MinMax => {
                for (j, x) in frame.iter_mut().enumerate() {
                    *x = (*x - self.min[j]) / (self.max[j] - self.min[j]).max(EPSILON);
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NormalizeError> {
        frames
            .iter()
            .map(|f| {
                let mut f = f.clone();
                self.apply_in_place(&mut f)?;
                Ok(f)
            })
            .collect()
    }

    /// Applies to every sequence, in parallel when enabled.
    pub fn apply_sequences(&self, seqs: &[FrameSequence]) -> Result<Vec<FrameSequence>, NormalizeError> {
        crate::par::map(seqs, |s| {
            Ok(FrameSequence { frames: self.apply(&s.frames)?, label: s.label, id: s.id.clone() })
        })
        .into_iter()
        .collect()
    }

    /// Text container: `lungsound-normstats v1`, then method and the four
    /// vectors as whitespace-separated shortest round-trip decimals.
    pub fn to_bytes(&self) -> Vec<u8> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        format!(
            "lungsound-normstats v1\nmethod {}\nmean {}\nstd {}\nmin {}\nmax {}\n",
            self.method,
            join(&self.mean),
            join(&self.std),
            join(&self.min),
            join(&self.max)
        )
        .into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NormalizeError> {
        let bad = |m: &str| NormalizeError::Malformed(m.to_string());
        let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?;
        let mut lines = text.lines();
        if lines.next() != Some("lungsound-normstats v1") {
            return Err(bad("missing format tag"));
        }
        let mut field = |name: &str| -> Result<&str, NormalizeError> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let rest = line.strip_prefix(name).ok_or_else(|| bad(name))?;
            Ok(rest.trim())
        };
        let method: NormMethod = field("method")?.parse()?;
        let mut vector = |name: &str| -> Result<Vec<f64>, NormalizeError> {
            field(name)?.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad(name))).collect()
        };
        let (mean, std, min, max) = (vector("mean")?, vector("std")?, vector("min")?, vector("max")?);
        let n = mean.len();
        if std.len() != n || min.len() != n || max.len() != n {
            return Err(bad("vector lengths differ"));
        }
        Ok(Self { method, mean, std, min, max })
    }
}

/// Fits statistics over `training` frames.
pub fn fit(training: &[Vec<f64>], method: NormMethod) -> Result<NormStats, NormalizeError> {
    NormStats::fit(training.iter().map(Vec::as_slice), method)
}
