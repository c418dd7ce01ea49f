//! Kaiser-windowed sinc interpolation for fractional delays and time scaling.

use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 31;
pub const DEFAULT_KAISER_BETA: f64 = 8.0;

/// Continuous-time reconstruction of a sampled signal from its nearest taps.
#[derive(Debug, Clone, Copy)]
pub struct SincInterpolator {
    half_width: f64,
    kaiser_beta: f64,
    i0_beta: f64,
}

impl Default for SincInterpolator {
    fn default() -> Self {
        Self::new(DEFAULT_TAPS, DEFAULT_KAISER_BETA).expect("default interpolator is valid")
    }
}

impl SincInterpolator {
    /// `taps` samples contribute to each output point.
    pub fn new(taps: usize, kaiser_beta: f64) -> Result<Self> {
        if taps < 2 {
            return Err(Error::param("interpolator needs at least two taps"));
        }
        if !(kaiser_beta >= 0.0) || !kaiser_beta.is_finite() {
            return Err(Error::param("Kaiser beta must be finite and non-negative"));
        }
        Ok(Self {
            half_width: taps as f64 / 2.0,
            kaiser_beta,
            i0_beta: bessel_i0(kaiser_beta),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Windowed sinc at offset `x` samples.
    pub fn kernel(&self, x: f64) -> f64 {
        let r = x / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let w = bessel_i0(self.kaiser_beta * (1.0 - r * r).sqrt()) / self.i0_beta;
        sinc(x) * w
    }

    /// Reconstructed value at fractional sample position `t`; zero outside the support.
    pub fn eval(&self, samples: &[f64], t: f64) -> f64 {
        let lo = (t - self.half_width).ceil().max(0.0);
        let hi = (t + self.half_width).floor().min(samples.len() as f64 - 1.0);
        if hi < lo {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in lo as usize..=hi as usize {
            acc += samples[j] * self.kernel(t - j as f64);
        }
        acc
    }

    /// `out[n] = x(scale·(n − delay))` for `n` in `0..n_out`, with `delay` in samples.
    pub fn render(&self, samples: &[f64], n_out: usize, scale: f64, delay: f64) -> Vec<f64> {
        (0..n_out)
            .map(|n| self.eval(samples, scale * (n as f64 - delay)))
            .collect()
    }

    /// Pure fractional delay keeping the input length.
    pub fn delay(&self, samples: &[f64], delay: f64) -> Vec<f64> {
        self.render(samples, samples.len(), 1.0, delay)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
