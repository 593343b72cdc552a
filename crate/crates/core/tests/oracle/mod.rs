//! Slow, straight-line reference implementations used as test oracles.
//! Nothing here calls into the library's numeric code.
#![allow(dead_code)]

use std::f64::consts::PI;

/// |X[k]|, k = 0..=n/2, of `x` zero-padded to `n`, by the O(n²) definition.
pub fn dft_magnitudes(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Thirteen MFCCs of one window with the default configuration: Hamming
/// window, amplitude spectrum at the next power of two, 26 triangles between
/// 50 Hz and min(2000 Hz, Nyquist), natural log floored at 1e-10, DCT-II
/// with orthonormal scaling.
pub fn mfcc(window: &[f64], rate: u32) -> Vec<f64> {
    let len = window.len();
    let mut n_fft = 1;
    while n_fft < len {
        n_fft *= 2;
    }
    let mut weighted = Vec::with_capacity(len);
    for (i, &x) in window.iter().enumerate() {
        let w = if len == 1 { 1.0 } else { 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos() };
        weighted.push(x * w);
    }
    let mags = dft_magnitudes(&weighted, n_fft);

    let rate = rate as f64;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = if 2000.0 < rate / 2.0 { 2000.0 } else { rate / 2.0 };
    let (m_lo, m_hi) = (mel(50.0), mel(top));
    let mut bins = Vec::new();
    for i in 0..28 {
        let f = hz(m_lo + (m_hi - m_lo) * i as f64 / 27.0);
        bins.push((f * n_fft as f64 / rate).round() as i64);
    }

    let mut log_e = Vec::new();
    for m in 1..=26 {
        let (l, c, r) = (bins[m - 1], bins[m], bins[m + 1]);
        let mut e = 0.0;
        for k in (l + 1)..r {
            let w = if k <= c { (k - l) as f64 / (c - l) as f64 } else { (r - k) as f64 / (r - c) as f64 };
            e += w * mags[k as usize];
        }
        log_e.push(if e > 1e-10 { e.ln() } else { (1e-10f64).ln() });
    }

    let n = 26.0;
    (0..13)
        .map(|k| {
            let mut s = 0.0;
            for (i, v) in log_e.iter().enumerate() {
                s += v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos();
            }
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

/// Window start offsets by stepping until the window no longer fits.
pub fn window_starts(n_samples: usize, window: usize, step: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + window <= n_samples {
        starts.push(s);
        s += step;
    }
    starts
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative error between two slices, with a floor `floor` on the
/// denominator.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}
