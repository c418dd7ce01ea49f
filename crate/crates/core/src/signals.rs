//! Transmitted waveform, its Doppler companion `u(t) = t·ṡ(t)`, and the
//! zero-padded convolution operators built from them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Linear frequency-modulated pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub pulse_s: f64,
    pub sample_hz: f64,
}

impl Default for WaveformSpec {
    /// 3 kHz carrier, 4 kHz sweep, 25 ms pulse sampled at 15 kHz.
    fn default() -> Self {
        Self {
            carrier_hz: 3000.0,
            bandwidth_hz: 4000.0,
            pulse_s: 0.025,
            sample_hz: 15_000.0,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.carrier_hz, self.bandwidth_hz, self.pulse_s, self.sample_hz]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("waveform fields must be finite"));
        }
        if self.sample_hz <= 0.0 || self.bandwidth_hz <= 0.0 || self.pulse_s <= 0.0 {
            return Err(Error::param(
                "sample_hz, bandwidth_hz and pulse_s must be positive",
            ));
        }
        if self.start_hz() < 0.0 {
            return Err(Error::param("carrier_hz - bandwidth_hz/2 must be >= 0"));
        }
        if self.is_empty() {
            return Err(Error::param("pulse shorter than half a sample"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_hz
    }

    /// Lowest swept frequency; the sweep runs upward from here.
    pub fn start_hz(&self) -> f64 {
        self.carrier_hz - 0.5 * self.bandwidth_hz
    }

    /// Number of pulse samples, `round(T/Δt)`.
    pub fn len(&self) -> usize {
        (self.pulse_s * self.sample_hz).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Instantaneous phase in radians at time `t` seconds.
    pub fn phase(&self, t: f64) -> f64 {
        2.0 * PI * (self.start_hz() * t + self.bandwidth_hz / (2.0 * self.pulse_s) * t * t)
    }

    /// `s(t)` evaluated in closed form (no support truncation).
    pub fn eval(&self, t: f64) -> f64 {
        self.phase(t).cos()
    }

    /// Analytic time derivative `ṡ(t)`.
    pub fn eval_derivative(&self, t: f64) -> f64 {
        let inst_freq = self.start_hz() + self.bandwidth_hz / self.pulse_s * t;
        -self.phase(t).sin() * 2.0 * PI * inst_freq
    }
}

/// A real discrete-time signal together with its sampling period.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform<T> {
    pub samples: Vec<T>,
    pub dt_s: f64,
}

impl<T: Real> SampledWaveform<T> {
    pub fn new(samples: Vec<T>, dt_s: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("waveform must contain at least one sample"));
        }
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(Error::param("sampling period must be positive"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("waveform samples must be finite"));
        }
        Ok(Self { samples, dt_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at signed index, zero outside the support.
    #[inline]
    pub fn at(&self, idx: isize) -> T {
        if idx < 0 {
            T::zero()
        } else {
            self.samples.get(idx as usize).copied().unwrap_or_else(T::zero)
        }
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn to_f64(&self) -> SampledWaveform<f64> {
        SampledWaveform {
            samples: self.samples.iter().map(|v| crate::scalar::to_f64(*v)).collect(),
            dt_s: self.dt_s,
        }
    }
}

/// Samples `s[n] = cos(2π(f0·t + BW/(2T)·t²))`, `t = nΔt`.
pub fn generate_lfm<T: Real>(spec: &WaveformSpec) -> Result<SampledWaveform<T>> {
    spec.validate()?;
    let dt = spec.dt();
    let samples = (0..spec.len())
        .map(|n| lit(spec.eval(n as f64 * dt)))
        .collect();
    SampledWaveform::new(samples, dt)
}

/// Samples `u[n] = nΔt·ṡ(nΔt)` using the analytic chirp derivative.
pub fn companion_waveform<T: Real>(spec: &WaveformSpec) -> Result<SampledWaveform<T>> {
    spec.validate()?;
    let dt = spec.dt();
    let samples = (0..spec.len())
        .map(|n| {
            let t = n as f64 * dt;
            lit(t * spec.eval_derivative(t))
        })
        .collect();
    SampledWaveform::new(samples, dt)
}

/// Zero-padded Toeplitz operator `[X]_{n,l} = x[n-l]` of size `n_rows × n_lags`.
///
/// Only the kernel is stored; products are evaluated as direct convolutions.
#[derive(Debug, Clone)]
pub struct ConvolutionOperator<T> {
    kernel: SampledWaveform<T>,
    n_rows: usize,
    n_lags: usize,
}

impl<T: Real> ConvolutionOperator<T> {
    pub fn new(kernel: SampledWaveform<T>, n_rows: usize, n_lags: usize) -> Result<Self> {
        if n_rows == 0 || n_lags == 0 {
            return Err(Error::param("operator dimensions must be positive"));
        }
        Ok(Self {
            kernel,
            n_rows,
            n_lags,
        })
    }

    pub fn kernel(&self) -> &SampledWaveform<T> {
        &self.kernel
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    /// `X·c`.
    pub fn apply(&self, coeffs: &DVector<T>) -> Result<DVector<T>> {
        if coeffs.len() != self.n_lags {
            return Err(Error::dim(format!(
                "expected {} lag coefficients, got {}",
                self.n_lags,
                coeffs.len()
            )));
        }
        let mut out = DVector::zeros(self.n_rows);
        let k = &self.kernel.samples;
        for (l, &c) in coeffs.iter().enumerate() {
            if c == T::zero() || l >= self.n_rows {
                continue;
            }
            let end = (l + k.len()).min(self.n_rows);
            for n in l..end {
                out[n] += k[n - l] * c;
            }
        }
        Ok(out)
    }

    /// `Xᵀ·v`, the lagged correlation of `v` against the kernel.
    pub fn apply_transpose(&self, v: &DVector<T>) -> Result<DVector<T>> {
        if v.len() != self.n_rows {
            return Err(Error::dim(format!(
                "expected {} samples, got {}",
                self.n_rows,
                v.len()
            )));
        }
        let k = &self.kernel.samples;
        let out = DVector::from_fn(self.n_lags, |l, _| {
            if l >= self.n_rows {
                return T::zero();
            }
            let end = (l + k.len()).min(self.n_rows);
            (l..end).fold(T::zero(), |acc, n| acc + k[n - l] * v[n])
        });
        Ok(out)
    }

    /// Column `l`: the kernel delayed by `l` samples and truncated to `n_rows`.
    pub fn column(&self, l: usize) -> DVector<T> {
        DVector::from_fn(self.n_rows, |n, _| self.kernel.at(n as isize - l as isize))
    }

    /// `Xᵀ·Y` for another operator with the same number of rows.
    pub fn cross_gram(&self, other: &ConvolutionOperator<T>) -> Result<DMatrix<T>> {
        if other.n_rows != self.n_rows {
            return Err(Error::dim("operators differ in row count"));
        }
        let cols: Vec<DVector<T>> = (0..other.n_lags).map(|l| other.column(l)).collect();
        let mut g = DMatrix::zeros(self.n_lags, other.n_lags);
        for (j, col) in cols.iter().enumerate() {
            let xt = self.apply_transpose(col)?;
            g.set_column(j, &xt);
        }
        Ok(g)
    }
}

/// Free-function form of [`ConvolutionOperator::apply`].
pub fn toeplitz_apply<T: Real>(op: &ConvolutionOperator<T>, coeffs: &DVector<T>) -> Result<DVector<T>> {
    op.apply(coeffs)
}

/// First-order wideband Doppler model of a delayed, time-scaled pulse:
/// `s[n-τ] + r·u[n-τ]`, output length `len(s) + τ`.
pub fn linearized_scale<T: Real>(
    s: &SampledWaveform<T>,
    u: &SampledWaveform<T>,
    r: T,
    tau_samples: usize,
) -> Result<Vec<T>> {
    if s.len() != u.len() {
        return Err(Error::dim("s and u must have equal length"));
    }
    if r.abs() > lit(0.05) {
        log::warn!(
            "log-scale {} outside the small-Doppler regime of the linearization",
            crate::scalar::to_f64(r)
        );
    }
    let mut out = vec![T::zero(); s.len() + tau_samples];
    for (n, (sv, uv)) in s.samples.iter().zip(&u.samples).enumerate() {
        out[n + tau_samples] = *sv + r * *uv;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> WaveformSpec {
        WaveformSpec::default()
    }

    #[test]
    fn table_chirp_length() {
        let s: SampledWaveform<f64> = generate_lfm(&spec()).unwrap();
        assert_eq!(s.len(), 375);
        assert_eq!(s.samples[0], 1.0);
    }

    #[test]
    fn lfm_sample_matches_phase_formula() {
        let s: SampledWaveform<f64> = generate_lfm(&spec()).unwrap();
        // independent evaluation: f0 = 1000 Hz, k = BW/(2T) = 80000 Hz/s
        let t = 187.0 / 15000.0;
        let expect = (2.0 * PI * (1000.0 * t + 80_000.0 * t * t)).cos();
        assert_relative_eq!(s.samples[187], expect, epsilon = 1e-12);
    }

    #[test]
    fn companion_starts_at_zero_and_matches_analytic_difference() {
        let sp = spec();
        let u: SampledWaveform<f64> = companion_waveform(&sp).unwrap();
        assert_eq!(u.samples[0], 0.0);
        assert_eq!(u.len(), sp.len());
        let h = 1e-7;
        for (n, v) in u.samples.iter().enumerate() {
            let t = n as f64 * sp.dt();
            let fd = t * (sp.eval(t + h) - sp.eval(t - h)) / (2.0 * h);
            assert!((v - fd).abs() <= 1e-5 * u.max_abs(), "n={n}");
        }
    }

    #[test]
    fn companion_tracks_sampled_central_difference_in_lower_sweep() {
        // The sampled difference attenuates by sin(ωΔt)/(ωΔt); at 15 kHz the
        // 5% bound only holds while the sweep stays below ~2.6 kHz.
        let sp = spec();
        let s: SampledWaveform<f64> = generate_lfm(&sp).unwrap();
        let u: SampledWaveform<f64> = companion_waveform(&sp).unwrap();
        let dt = sp.dt();
        let tol = 0.05 * u.max_abs();
        for n in 1..150 {
            let fd = n as f64 * dt * (s.samples[n + 1] - s.samples[n - 1]) / (2.0 * dt);
            assert!((u.samples[n] - fd).abs() <= tol, "n={n}");
        }
    }

    #[test]
    fn companion_of_pure_tone() {
        let sp = WaveformSpec {
            carrier_hz: 2000.0,
            bandwidth_hz: 1e-9,
            pulse_s: 0.01,
            sample_hz: 15_000.0,
        };
        let u: SampledWaveform<f64> = companion_waveform(&sp).unwrap();
        for (n, v) in u.samples.iter().enumerate() {
            let t = n as f64 / 15_000.0;
            let expect = -2.0 * PI * 2000.0 * t * (2.0 * PI * 2000.0 * t).sin();
            assert!((v - expect).abs() < 1e-6, "n={n}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut sp = spec();
        sp.bandwidth_hz = 0.0;
        assert!(generate_lfm::<f64>(&sp).is_err());
        let mut sp = spec();
        sp.carrier_hz = 1000.0;
        assert!(matches!(sp.validate(), Err(Error::Parameter(_))));
        let mut sp = spec();
        sp.sample_hz = -1.0;
        assert!(companion_waveform::<f64>(&sp).is_err());
    }

    #[test]
    fn unit_lag_coefficients_reproduce_shifted_kernel() {
        let k = SampledWaveform::new(vec![1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        let op = ConvolutionOperator::new(k, 6, 4).unwrap();
        let mut c = DVector::zeros(4);
        c[0] = 1.0;
        assert_eq!(op.apply(&c).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
        c[0] = 0.0;
        c[3] = 1.0;
        assert_eq!(op.apply(&c).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(op.apply(&DVector::zeros(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn transpose_is_adjoint() {
        let k = SampledWaveform::new(vec![0.5, -1.0, 2.0], 1.0).unwrap();
        let op = ConvolutionOperator::new(k, 7, 5).unwrap();
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.5]);
        let v = DVector::from_fn(7, |i, _| (i as f64).sin());
        let lhs = op.apply(&c).unwrap().dot(&v);
        let rhs = c.dot(&op.apply_transpose(&v).unwrap());
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn linearization_identity_and_shift() {
        let sp = spec();
        let s: SampledWaveform<f64> = generate_lfm(&sp).unwrap();
        let u: SampledWaveform<f64> = companion_waveform(&sp).unwrap();
        let zero = linearized_scale(&s, &u, 0.0, 0).unwrap();
        assert_eq!(zero, s.samples);
        let a = linearized_scale(&s, &u, 1e-3, 0).unwrap();
        let b = linearized_scale(&s, &u, 1e-3, 50).unwrap();
        assert!(b[..50].iter().all(|v| *v == 0.0));
        assert_eq!(&b[50..], &a[..]);
    }

    #[test]
    fn works_in_single_precision() {
        let s: SampledWaveform<f32> = generate_lfm(&spec()).unwrap();
        let op = ConvolutionOperator::new(s, 400, 8).unwrap();
        let mut c = DVector::<f32>::zeros(8);
        c[2] = 1.0;
        let y = op.apply(&c).unwrap();
        assert_eq!(y[2], 1.0);
    }
}
