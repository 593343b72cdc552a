//! Spectral primitives and the MFCC chain.
//!
//! Each analysis window is Hamming weighted, zero-padded to a power of two
//! and transformed; the amplitude spectrum goes through a triangular mel
//! filterbank, a floored natural log and an orthonormal DCT-II. There is no
//! pre-emphasis, liftering or delta computation.

pub mod fft;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fft::{Complex, Fft};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("filters {index} and {next} share FFT bin {bin}; increase fft_size")]
    DegenerateFilter { index: usize, next: usize, bin: usize },
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
}

/// MFCC parameters. `fft_size = None` picks the next power of two at or above
/// the window length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub n_filters: usize,
    pub fft_size: Option<usize>,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self { n_coeffs: 13, n_filters: 26, fft_size: None, fmin: 50.0, fmax: 2000.0, log_floor: 1e-10 }
    }
}

impl MfccConfig {
    pub fn fft_size_for(&self, window_len: usize) -> usize {
        self.fft_size.unwrap_or_else(|| window_len.max(1).next_power_of_two())
    }

    /// Upper band edge after capping at Nyquist.
    pub fn effective_fmax(&self, rate: u32) -> f64 {
        self.fmax.min(f64::from(rate) / 2.0)
    }

    pub fn validate(&self, rate: u32, window_len: usize) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidConfig(m));
        if self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return bad(format!("need 1 <= n_coeffs ({}) <= n_filters ({})", self.n_coeffs, self.n_filters));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.effective_fmax(rate)) {
            return bad(format!("need 0 <= fmin < fmax, got {} and {}", self.fmin, self.effective_fmax(rate)));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive".into());
        }
        let n = self.fft_size_for(window_len);
        if !n.is_power_of_two() || n < window_len {
            return bad(format!("fft_size {n} must be a power of two >= window length {window_len}"));
        }
        Ok(())
    }
}

/// Symmetric Hamming window, w[i] = 0.54 - 0.46·cos(2πi/(n-1)).
pub fn hamming_window(n: usize) -> Vec<f64> {
    assert!(n >= 1, "window length must be positive");
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos()).collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Amplitude spectrum |X[k]|, k = 0..=fft_size/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
}

/// Hamming-windowed, zero-padded magnitude spectrum of one window.
pub fn magnitude_spectrum(window: &[f64], cfg: &MfccConfig) -> Result<Spectrum, DspError> {
    let n = cfg.fft_size_for(window.len());
    let fft = Fft::new(n).filter(|_| n >= window.len()).ok_or_else(|| {
        DspError::InvalidConfig(format!("fft_size {n} must be a power of two >= window length {}", window.len()))
    })?;
    let weighted: Vec<f64> = window.iter().zip(hamming_window(window.len().max(1))).map(|(x, w)| x * w).collect();
    Ok(Spectrum { magnitudes: fft.real_magnitudes(&weighted) })
}

/// Triangular filters over FFT bins, `n_filters × (fft_size/2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Vec<Vec<f64>>,
    /// The `n_filters + 2` breakpoint bins; filter j peaks at `bins[j + 1]`.
    pub bins: Vec<usize>,
}

impl MelFilterbank {
    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|row| row.iter().zip(magnitudes).map(|(w, m)| w * m).sum()).collect()
    }
}

/// Mel-equispaced breakpoint frequencies between fmin and the capped fmax.
pub fn mel_breakpoints(cfg: &MfccConfig, rate: u32) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.effective_fmax(rate));
    let n = cfg.n_filters + 1;
    (0..=n).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64)).collect()
}

pub fn build_filterbank(cfg: &MfccConfig, rate: u32, fft_size: usize) -> Result<MelFilterbank, DspError> {
    let n_bins = fft_size / 2 + 1;
    let bin_hz = f64::from(rate) / fft_size as f64;
    let bins: Vec<usize> =
        mel_breakpoints(cfg, rate).into_iter().map(|f| ((f / bin_hz + 0.5).floor() as usize).min(n_bins - 1)).collect();
    if let Some(i) = bins.windows(2).position(|w| w[0] == w[1]) {
        return Err(DspError::DegenerateFilter { index: i, next: i + 1, bin: bins[i] });
    }
    let weights = bins
        .windows(3)
        .map(|w| {
            let (left, center, right) = (w[0], w[1], w[2]);
            let mut row = vec![0.0; n_bins];
            for (k, v) in row.iter_mut().enumerate().take(right).skip(left + 1) {
                *v = if k <= center {
                    (k - left) as f64 / (center - left) as f64
                } else {
                    (right - k) as f64 / (right - center) as f64
                };
            }
            row
        })
        .collect();
    Ok(MelFilterbank { weights, bins })
}

/// Precomputed orthonormal DCT-II basis.
#[derive(Debug, Clone)]
pub struct Dct {
    basis: Vec<Vec<f64>>,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        assert!(n_out <= n_in && n_in > 0, "need 0 < n_out <= n_in");
        let n = n_in as f64;
        let basis = (0..n_out)
            .map(|k| {
                let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..n_in).map(|i| s * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()).collect()
            })
            .collect();
        Self { basis }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|row| row.iter().zip(v).map(|(b, x)| b * x).sum()).collect()
    }
}

/// First `n_out` orthonormal DCT-II coefficients of `v`.
pub fn dct2(v: &[f64], n_out: usize) -> Vec<f64> {
    Dct::new(v.len(), n_out).apply(v)
}

/// Reusable MFCC pipeline for a fixed window length and rate. Shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    window_len: usize,
    hamming: Vec<f64>,
    fft: Fft,
    filterbank: MelFilterbank,
    dct: Dct,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, rate: u32, window_len: usize) -> Result<Self, DspError> {
        if window_len == 0 {
            return Err(DspError::InvalidConfig("empty window".into()));
        }
        cfg.validate(rate, window_len)?;
        let fft_size = cfg.fft_size_for(window_len);
        Ok(Self {
            cfg: cfg.clone(),
            window_len,
            hamming: hamming_window(window_len),
            fft: Fft::new(fft_size).expect("validated power of two"),
            filterbank: build_filterbank(cfg, rate, fft_size)?,
            dct: Dct::new(cfg.n_filters, cfg.n_coeffs),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn n_coeffs(&self) -> usize {
        self.cfg.n_coeffs
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn extract(&self, window: &[f64]) -> Vec<f64> {
        assert_eq!(window.len(), self.window_len, "window length differs from the extractor's");
        let weighted: Vec<f64> = window.iter().zip(&self.hamming).map(|(x, w)| x * w).collect();
        let spectrum = self.fft.real_magnitudes(&weighted);
        let log_energies: Vec<f64> =
            self.filterbank.apply(&spectrum).into_iter().map(|e| e.max(self.cfg.log_floor).ln()).collect();
        self.dct.apply(&log_energies)
    }
}

/// MFCC vector of a single analysis window.
pub fn mfcc(window: &[f64], rate: u32, cfg: &MfccConfig) -> Result<Vec<f64>, DspError> {
    Ok(MfccExtractor::new(cfg, rate, window.len())?.extract(window))
}
