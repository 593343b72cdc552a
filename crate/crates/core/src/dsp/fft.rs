//! Iterative radix-2 Cooley-Tukey FFT.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Precomputed twiddles and bit-reversal table for one transform size.
#[derive(Debug, Clone)]
pub struct Fft {
    size: usize,
    twiddles: Vec<Complex>,
    reversed: Vec<usize>,
}

impl Fft {
    /// Returns `None` unless `size` is a power of two.
    pub fn new(size: usize) -> Option<Self> {
        if !size.is_power_of_two() {
            return None;
        }
        let bits = size.trailing_zeros();
        let reversed =
            (0..size).map(|i| if size == 1 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }).collect();
        let twiddles = (0..size / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / size as f64;
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        Some(Self { size, twiddles, reversed })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Forward transform, X[k] = Σ x[n]·e^{-2πikn/N}, in place.
    pub fn forward(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.size, "buffer length must equal the plan size");
        for (i, &j) in self.reversed.iter().enumerate() {
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.size {
            let half = len / 2;
            let stride = self.size / len;
            for start in (0..self.size).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len *= 2;
        }
    }

    /// |X[k]| for k = 0..=N/2 of a real signal zero-padded to the plan size.
    pub fn real_magnitudes(&self, signal: &[f64]) -> Vec<f64> {
        assert!(signal.len() <= self.size, "signal longer than transform");
        let mut buf = vec![Complex::default(); self.size];
        for (b, &s) in buf.iter_mut().zip(signal) {
            b.re = s;
        }
        self.forward(&mut buf);
        buf[..=self.size / 2].iter().map(|c| c.norm()).collect()
    }
}
