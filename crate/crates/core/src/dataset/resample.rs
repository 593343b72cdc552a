use std::f64::consts::PI;

use super::AudioClip;

/// Windowed-sinc low-pass taps with unit DC gain. `cutoff` is in cycles per
/// sample.
fn lowpass_taps(cutoff: f64, half_width: usize) -> Vec<f64> {
    let n = 2 * half_width + 1;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let k = i as f64 - half_width as f64;
            let sinc = if k == 0.0 { 2.0 * cutoff } else { (2.0 * PI * cutoff * k).sin() / (PI * k) };
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Converts a clip to `target_rate`: windowed-sinc low-pass at
/// 0.45 × target rate when downsampling, then linear interpolation.
///
/// Panics if `target_rate` is zero.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    let src_rate = clip.sample_rate();
    if src_rate == target_rate {
        return clip.clone();
    }
    let x = clip.samples();
    let ratio = f64::from(src_rate) / f64::from(target_rate);
    let n_out = ((x.len() as f64 / ratio).round() as usize).max(1);

    // Only the input positions the interpolator touches are filtered.
    let filter = (ratio > 1.0).then(|| {
        let half_width = (10.0 * ratio).ceil() as usize;
        (lowpass_taps(0.45 / ratio, half_width), half_width)
    });
    let at = |i: usize| -> f64 {
        match &filter {
            None => x[i],
            Some((taps, hw)) => {
                let lo = i.saturating_sub(*hw);
                let hi = (i + hw).min(x.len() - 1);
                (lo..=hi).map(|j| x[j] * taps[j + hw - i]).sum()
            }
        }
    };

    let last = x.len() - 1;
    let samples = (0..n_out)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = (pos.floor() as usize).min(last);
            let frac = pos - i as f64;
            if i == last || frac == 0.0 {
                at(i)
            } else {
                at(i) * (1.0 - frac) + at(i + 1) * frac
            }
        })
        .collect();
    AudioClip::new(samples, target_rate).expect("resampling preserves finiteness")
}
