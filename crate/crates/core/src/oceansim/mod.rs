//! Synthetic shallow-water multipath generator.
//!
//! Arrivals come from the image method in an iso-velocity waveguide. Each
//! ping perturbs the per-path log time-scales `r_i = c_i + d` and the path
//! amplitudes, and renders every arrival with the exact time-scaled pulse
//! `a_i·s(β_i(t − τ̄_i))`, `β_i = e^{r_i}`, through a windowed-sinc
//! interpolator. Window sample 0 sits `window_lead_samples` before the direct
//! arrival, and Doppler time scaling is referenced to the window start.

pub mod pingfile;
pub mod resample;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{generate_lfm, WaveformSpec};
use crate::tracker::PingRecord;

pub use resample::SincInterpolator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Time-invariant channel; only the ambient noise changes between pings.
    Static,
    SurfaceOnly,
    SurfaceAndDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Stationary,
    /// Moves along the perpendicular bisector of the baseline at node depth.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    /// Stationary target: bistatic delay in excess of the direct path.
    pub delay_excess_s: f64,
    pub speed_mps: f64,
    /// Crossing target: ping at which it sits on the baseline.
    pub crossing_ping: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            kind: TargetKind::Stationary,
            delay_excess_s: 2.8e-3,
            speed_mps: 10.0,
            crossing_ping: 70,
        }
    }
}

/// Environment, perturbation and power settings. The perturbation standard
/// deviations are calibration knobs of this generator, not measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub depth_m: f64,
    pub range_m: f64,
    pub node_depth_m: f64,
    pub sound_speed_mps: f64,
    pub n_paths: usize,
    pub bottom_loss: f64,
    /// Per-ping, per-path log time-scale std.
    pub surface_rate_std: f64,
    /// Per-ping common log time-scale std.
    pub drift_rate_std: f64,
    /// Per-ping amplitude random-walk std relative to each path's nominal amplitude.
    pub amp_walk_std: f64,
    pub n_pings: usize,
    pub pri_s: f64,
    pub inr_db: f64,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub window_lead_samples: usize,
    pub seed: u64,
    pub target: TargetConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::SurfaceAndDrift,
            depth_m: 50.0,
            range_m: 2000.0,
            node_depth_m: 2.0,
            sound_speed_mps: 1500.0,
            n_paths: 6,
            bottom_loss: 0.7,
            surface_rate_std: 2e-4,
            drift_rate_std: 5e-4,
            amp_walk_std: 0.01,
            n_pings: 100,
            pri_s: 0.12,
            inr_db: 30.0,
            snr_db: 10.0,
            sigma_e2: 1.0,
            window_lead_samples: 16,
            seed: 1,
            target: TargetConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("depth_m", self.depth_m),
            ("range_m", self.range_m),
            ("node_depth_m", self.node_depth_m),
            ("sound_speed_mps", self.sound_speed_mps),
            ("pri_s", self.pri_s),
            ("sigma_e2", self.sigma_e2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.node_depth_m >= self.depth_m {
            return Err(Error::Config("nodes must lie above the bottom".into()));
        }
        if self.n_paths == 0 || self.n_pings == 0 {
            return Err(Error::Config("n_paths and n_pings must be positive".into()));
        }
        if !(self.bottom_loss > 0.0 && self.bottom_loss <= 1.0) {
            return Err(Error::Config("bottom_loss must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("surface_rate_std", self.surface_rate_std),
            ("drift_rate_std", self.drift_rate_std),
            ("amp_walk_std", self.amp_walk_std),
            ("target.delay_excess_s", self.target.delay_excess_s),
            ("target.speed_mps", self.target.speed_mps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.inr_db.is_finite() {
            return Err(Error::Config("inr_db must be finite".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db must be a number".into()));
        }
        Ok(())
    }

    /// `(surface, drift, amplitude walk)` standard deviations after scenario gating.
    pub fn effective_stds(&self) -> (f64, f64, f64) {
        match self.scenario {
            Scenario::Static => (0.0, 0.0, 0.0),
            Scenario::SurfaceOnly => (self.surface_rate_std, 0.0, self.amp_walk_std),
            Scenario::SurfaceAndDrift => (self.surface_rate_std, self.drift_rate_std, self.amp_walk_std),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    /// Propagation delay from transmitter to receiver.
    pub delay_s: f64,
    pub amplitude: f64,
    pub nominal_amplitude: f64,
    /// `r_i = c_i + d` for the current ping.
    pub log_scale: f64,
    pub surface_bounces: u32,
    pub bottom_bounces: u32,
}

impl Arrival {
    pub fn time_scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSet {
    /// Sorted by ascending delay.
    pub arrivals: Vec<Arrival>,
    pub direct_delay_s: f64,
    /// Common component `d` of the current ping.
    pub common_log_scale: f64,
}

/// First `n_paths` image-method arrivals, ascending in delay.
pub fn image_method_arrivals(cfg: &ScenarioConfig) -> Result<ArrivalSet> {
    cfg.validate()?;
    let d = cfg.depth_m;
    let zs = cfg.node_depth_m;
    let zr = cfg.node_depth_m;
    let mut candidates = Vec::new();
    let orders = cfg.n_paths / 4 + 2;
    for m in 0..orders as u32 {
        let mf = f64::from(m);
        // (vertical separation, surface bounces, bottom bounces)
        candidates.push((2.0 * d * mf + zs - zr, m, m));
        candidates.push((2.0 * d * (mf + 1.0) - zs - zr, m, m + 1));
        candidates.push((2.0 * d * mf + zs + zr, m + 1, m));
        candidates.push((2.0 * d * (mf + 1.0) + zs - zr, m + 1, m + 1));
    }
    let mut arrivals: Vec<Arrival> = candidates
        .into_iter()
        .map(|(dz, ns, nb)| {
            let slant = (cfg.range_m * cfg.range_m + dz * dz).sqrt();
            let sign = if ns % 2 == 0 { 1.0 } else { -1.0 };
            let amp = sign * cfg.bottom_loss.powi(nb as i32) / slant;
            Arrival {
                delay_s: slant / cfg.sound_speed_mps,
                amplitude: amp,
                nominal_amplitude: amp,
                log_scale: 0.0,
                surface_bounces: ns,
                bottom_bounces: nb,
            }
        })
        .collect();
    arrivals.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    arrivals.truncate(cfg.n_paths);
    let direct_delay_s = arrivals[0].delay_s;
    Ok(ArrivalSet {
        arrivals,
        direct_delay_s,
        common_log_scale: 0.0,
    })
}

/// Draws the next ping's log time-scales and amplitude walk. The draw order is
/// `d`, then `c_i` per path, then the amplitude steps per path.
pub fn evolve_ping<R: Rng + ?Sized>(set: &ArrivalSet, cfg: &ScenarioConfig, rng: &mut R) -> ArrivalSet {
    let (surface, drift, walk) = cfg.effective_stds();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d = drift * std_normal.sample(rng);
    let mut next = set.clone();
    next.common_log_scale = d;
    for a in next.arrivals.iter_mut() {
        a.log_scale = surface * std_normal.sample(rng) + d;
    }
    for a in next.arrivals.iter_mut() {
        let step = walk * a.nominal_amplitude.abs() * std_normal.sample(rng);
        let moved = a.amplitude + step;
        a.amplitude = if moved * a.nominal_amplitude.signum() < 0.0 { 0.0 } else { moved };
    }
    next
}

/// `10·log10(‖x‖²/(N·σ_e²))`.
pub fn power_ratio_db(x: &[f64], sigma_e2: f64) -> f64 {
    let e: f64 = x.iter().map(|v| v * v).sum();
    10.0 * (e / (x.len() as f64 * sigma_e2)).log10()
}

/// Gain bringing `x` to `ratio_db` relative to the noise floor; `−∞` dB gives 0.
pub fn gain_for_ratio(x: &[f64], sigma_e2: f64, ratio_db: f64) -> Result<f64> {
    if ratio_db == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if !ratio_db.is_finite() {
        return Err(Error::param("power ratio must be finite or -inf"));
    }
    let e: f64 = x.iter().map(|v| v * v).sum();
    if !(e > 0.0) {
        return Err(Error::param("cannot scale a zero-energy signal to a finite power ratio"));
    }
    Ok((10f64.powf(ratio_db / 10.0) * x.len() as f64 * sigma_e2 / e).sqrt())
}

/// Background and target gains for the requested INR and SNR.
pub fn scale_to_inr_snr(x_b: &[f64], x_o: &[f64], sigma_e2: f64, inr_db: f64, snr_db: f64) -> Result<(f64, f64)> {
    Ok((gain_for_ratio(x_b, sigma_e2, inr_db)?, gain_for_ratio(x_o, sigma_e2, snr_db)?))
}

/// Independent stream `stream` of the generator seeded by `master_seed`.
pub fn trial_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Target waveforms per ping. `hypothesis_waveform` ignores the onset; the
/// received contribution is zero before it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub onset: usize,
    pub amplitudes: Vec<f64>,
    /// Window-referenced delays `τ̄_{o,k}`.
    pub delays_s: Vec<f64>,
    pub time_scales: Vec<f64>,
    waveforms: Vec<DVector<f64>>,
}

impl TargetTrack {
    pub fn from_parts(
        onset: usize,
        amplitudes: Vec<f64>,
        delays_s: Vec<f64>,
        time_scales: Vec<f64>,
        waveforms: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = waveforms.len();
        if amplitudes.len() != n || delays_s.len() != n || time_scales.len() != n {
            return Err(Error::dim("target track fields must have one entry per ping"));
        }
        if onset == 0 || onset > n.max(1) {
            return Err(Error::param("onset must lie within the ping horizon"));
        }
        Ok(Self {
            onset,
            amplitudes,
            delays_s,
            time_scales,
            waveforms,
        })
    }

    /// All-zero track (target absent).
    pub fn absent(n_pings: usize, n_samples: usize, onset: usize) -> Self {
        Self {
            onset,
            amplitudes: vec![0.0; n_pings],
            delays_s: vec![0.0; n_pings],
            time_scales: vec![1.0; n_pings],
            waveforms: vec![DVector::zeros(n_samples); n_pings],
        }
    }

    pub fn n_pings(&self) -> usize {
        self.waveforms.len()
    }

    /// `x_{o,k}` as it would appear if the target were present at ping `k` (1-based).
    pub fn hypothesis_waveform(&self, k: usize) -> &DVector<f64> {
        &self.waveforms[k - 1]
    }

    /// `x_{o,k}`, zero before the onset.
    pub fn waveform(&self, k: usize) -> DVector<f64> {
        if k < self.onset {
            DVector::zeros(self.waveforms[k - 1].len())
        } else {
            self.waveforms[k - 1].clone()
        }
    }

    /// Track with every amplitude and waveform multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            waveforms: self.waveforms.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }
}

/// Background generator for one scenario, pre-scaled to the configured INR.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ScenarioConfig,
    n_samples: usize,
    dt_s: f64,
    pulse: Vec<f64>,
    interp: SincInterpolator,
    nominal: ArrivalSet,
    window_start_s: f64,
    background_gain: f64,
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig, waveform: &WaveformSpec, n_samples: usize) -> Result<Self> {
        cfg.validate()?;
        waveform.validate()?;
        let pulse = generate_lfm::<f64>(waveform)?.samples;
        let dt_s = waveform.dt();
        let raw = image_method_arrivals(cfg)?;
        let window_start_s = raw.direct_delay_s - cfg.window_lead_samples as f64 * dt_s;
        let mut sim = Self {
            cfg: cfg.clone(),
            n_samples,
            dt_s,
            pulse,
            interp: SincInterpolator::default(),
            nominal: raw,
            window_start_s,
            background_gain: 1.0,
        };
        for a in &sim.nominal.arrivals {
            sim.check_in_window(a.delay_s - window_start_s, "arrival")?;
        }
        let x_b = sim.render_background(&sim.nominal);
        let g = gain_for_ratio(x_b.as_slice(), cfg.sigma_e2, cfg.inr_db)?;
        for a in sim.nominal.arrivals.iter_mut() {
            a.amplitude *= g;
            a.nominal_amplitude *= g;
        }
        sim.background_gain = g;
        Ok(sim)
    }

    fn check_in_window(&self, rel_delay_s: f64, what: &str) -> Result<()> {
        let start = rel_delay_s / self.dt_s;
        if !(start >= 0.0 && start < self.n_samples as f64) {
            return Err(Error::Config(format!(
                "{what} at window sample {start:.2} lies outside the {}-sample window",
                self.n_samples
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Arrivals at ping 0 (no perturbation), amplitudes scaled to the INR.
    pub fn nominal_arrivals(&self) -> &ArrivalSet {
        &self.nominal
    }

    pub fn background_gain(&self) -> f64 {
        self.background_gain
    }

    /// Window sample of an arrival with propagation delay `delay_s`.
    pub fn window_position(&self, delay_s: f64) -> f64 {
        (delay_s - self.window_start_s) / self.dt_s
    }

    /// `a·s(β(nΔt − τ̄))` with `τ̄ = τ/β`, `τ` in window samples.
    pub fn render_pulse(&self, amplitude: f64, rel_delay_samples: f64, time_scale: f64) -> DVector<f64> {
        let tau_bar = rel_delay_samples / time_scale;
        let v = self.interp.render(&self.pulse, self.n_samples, time_scale, tau_bar);
        DVector::from_vec(v) * amplitude
    }

    pub fn render_background(&self, set: &ArrivalSet) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_samples);
        for a in &set.arrivals {
            if a.amplitude != 0.0 {
                x += self.render_pulse(a.amplitude, self.window_position(a.delay_s), a.time_scale());
            }
        }
        x
    }

    /// Noise-free backgrounds and noise vectors for pings `1..=n_pings`.
    pub fn simulate_components<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let noise = Normal::new(0.0, self.cfg.sigma_e2.sqrt()).expect("positive noise variance");
        let mut set = self.nominal.clone();
        let mut bgs = Vec::with_capacity(self.cfg.n_pings);
        let mut es = Vec::with_capacity(self.cfg.n_pings);
        for _ in 0..self.cfg.n_pings {
            set = evolve_ping(&set, &self.cfg, rng);
            bgs.push(self.render_background(&set));
            es.push(DVector::from_fn(self.n_samples, |_, _| noise.sample(rng)));
        }
        (bgs, es)
    }

    /// Background plus noise for pings `1..=n_pings`.
    pub fn simulate_background<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PingRecord<f64>> {
        let (bgs, es) = self.simulate_components(rng);
        bgs.into_iter()
            .zip(es)
            .enumerate()
            .map(|(i, (b, e))| PingRecord::new(b + e, i + 1))
            .collect()
    }

    /// Bistatic delay excess over the direct path and time scale of the target at ping `k`.
    fn target_geometry(&self, k: usize) -> (f64, f64) {
        let t = &self.cfg.target;
        match t.kind {
            TargetKind::Stationary => (t.delay_excess_s, 1.0),
            TargetKind::Crossing => {
                let excess = |k: f64| {
                    let y = t.speed_mps * self.cfg.pri_s * (k - t.crossing_ping as f64);
                    let half = self.cfg.range_m / 2.0;
                    let path = 2.0 * (half * half + y * y).sqrt();
                    (path - self.cfg.range_m) / self.cfg.sound_speed_mps
                };
                let kf = k as f64;
                let slope = (excess(kf + 1.0) - excess(kf - 1.0)) / 2.0;
                (excess(kf), 1.0 - slope / self.cfg.pri_s)
            }
        }
    }

    /// Target track with per-ping gains setting the SNR of every ping to `snr_db`.
    pub fn make_target_track(&self, onset: usize, snr_db: f64) -> Result<TargetTrack> {
        let n = self.cfg.n_pings;
        if onset == 0 || onset > n {
            return Err(Error::param("onset must lie within the ping horizon"));
        }
        let lead = self.cfg.window_lead_samples as f64;
        let mut amplitudes = Vec::with_capacity(n);
        let mut delays = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        let mut waveforms = Vec::with_capacity(n);
        for k in 1..=n {
            let (excess, beta) = self.target_geometry(k);
            let rel = lead + excess / self.dt_s;
            self.check_in_window(rel * self.dt_s, "target")?;
            let unit = self.render_pulse(1.0, rel, beta);
            let g = gain_for_ratio(unit.as_slice(), self.cfg.sigma_e2, snr_db)?;
            amplitudes.push(g);
            delays.push(rel * self.dt_s / beta);
            scales.push(beta);
            waveforms.push(unit * g);
        }
        TargetTrack::from_parts(onset, amplitudes, delays, scales, waveforms)
    }
}

/// `background[k] + x_{o,k}` for every ping.
pub fn add_target(background: &[PingRecord<f64>], track: &TargetTrack) -> Result<Vec<PingRecord<f64>>> {
    if background.len() != track.n_pings() {
        return Err(Error::dim("track and background disagree on the number of pings"));
    }
    Ok(background
        .iter()
        .map(|r| PingRecord::new(&r.y + track.waveform(r.ping_index), r.ping_index))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{linearized_scale, SampledWaveform};

    fn cfg(scenario: Scenario) -> ScenarioConfig {
        ScenarioConfig {
            scenario,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn image_geometry() {
        let set = image_method_arrivals(&cfg(Scenario::Static)).unwrap();
        assert_eq!(set.arrivals.len(), 6);
        assert!((set.direct_delay_s - 2000.0 / 1500.0).abs() < 1e-12);
        let surface = &set.arrivals[1];
        assert_eq!((surface.surface_bounces, surface.bottom_bounces), (1, 0));
        let expect = ((2000f64.powi(2) + 16.0).sqrt() - 2000.0) / 1500.0;
        assert!((surface.delay_s - set.direct_delay_s - expect).abs() < 1e-12);
        assert!((expect - 2.667e-6).abs() < 1e-9);
        assert!(surface.amplitude < 0.0);
        assert!(set.arrivals.windows(2).all(|w| w[0].delay_s <= w[1].delay_s));
        let b = &set.arrivals[2];
        assert_eq!((b.surface_bounces, b.bottom_bounces), (0, 1));
        assert!((b.amplitude - 0.7 / (2000f64.powi(2) + 96f64.powi(2)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn surface_image_coincides_at_zero_depth_offset() {
        // Both nodes (almost) at the surface: the surface image collapses onto the direct path.
        let c = ScenarioConfig {
            node_depth_m: 1e-9,
            ..cfg(Scenario::Static)
        };
        let set = image_method_arrivals(&c).unwrap();
        assert!((set.arrivals[1].delay_s - set.arrivals[0].delay_s).abs() < 1e-15);
    }

    #[test]
    fn static_scenario_has_no_perturbation() {
        let c = cfg(Scenario::Static);
        let mut rng = trial_rng(3, 0);
        let mut set = image_method_arrivals(&c).unwrap();
        for _ in 0..20 {
            set = evolve_ping(&set, &c, &mut rng);
            assert!(set.arrivals.iter().all(|a| a.log_scale == 0.0 && a.amplitude == a.nominal_amplitude));
        }
    }

    #[test]
    fn pure_common_mode_gives_equal_scales() {
        let c = ScenarioConfig {
            surface_rate_std: 0.0,
            ..cfg(Scenario::SurfaceAndDrift)
        };
        let mut rng = trial_rng(3, 1);
        let set = evolve_ping(&image_method_arrivals(&c).unwrap(), &c, &mut rng);
        let r0 = set.arrivals[0].log_scale;
        assert!(r0 != 0.0);
        assert!(set.arrivals.iter().all(|a| a.log_scale == r0));
    }

    #[test]
    fn surface_only_scales_are_uncorrelated_across_paths() {
        let c = cfg(Scenario::SurfaceOnly);
        let mut rng = trial_rng(5, 0);
        let base = image_method_arrivals(&c).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..1000 {
            let s = evolve_ping(&base, &c, &mut rng);
            let (x, y) = (s.arrivals[0].log_scale, s.arrivals[3].log_scale);
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        assert!((sxy / (sxx * syy).sqrt()).abs() < 0.1);
    }

    #[test]
    fn amplitude_walk_preserves_sign() {
        let c = ScenarioConfig {
            amp_walk_std: 0.5,
            ..cfg(Scenario::SurfaceOnly)
        };
        let mut rng = trial_rng(9, 0);
        let mut set = image_method_arrivals(&c).unwrap();
        for _ in 0..200 {
            set = evolve_ping(&set, &c, &mut rng);
            for a in &set.arrivals {
                assert!(a.amplitude * a.nominal_amplitude >= 0.0);
            }
        }
    }

    #[test]
    fn gains() {
        let x = vec![1.0; 16];
        assert_eq!(gain_for_ratio(&x, 1.0, 0.0).unwrap(), 1.0);
        assert!((gain_for_ratio(&x, 1.0, 30.0).unwrap() - 1000f64.sqrt()).abs() < 1e-12);
        let g = gain_for_ratio(&[0.3, -2.0, 0.1], 0.7, 17.5).unwrap();
        let scaled: Vec<f64> = [0.3, -2.0, 0.1].iter().map(|v| v * g).collect();
        assert!((power_ratio_db(&scaled, 0.7) - 17.5).abs() < 1e-9);
        assert!(gain_for_ratio(&[0.0; 4], 1.0, 3.0).is_err());
        assert_eq!(gain_for_ratio(&[0.0; 4], 1.0, f64::NEG_INFINITY).unwrap(), 0.0);
        let (gb, go) = scale_to_inr_snr(&x, &[2.0; 16], 1.0, 0.0, f64::NEG_INFINITY).unwrap();
        assert_eq!((gb, go), (1.0, 0.0));
    }

    #[test]
    fn background_energy_matches_inr() {
        let c = cfg(Scenario::SurfaceAndDrift);
        let sim = Simulator::new(&c, &WaveformSpec::default(), 512).unwrap();
        let (bgs, _) = sim.simulate_components(&mut trial_rng(1, 0));
        let mean_inr: f64 = bgs.iter().map(|b| power_ratio_db(b.as_slice(), 1.0)).sum::<f64>() / bgs.len() as f64;
        assert!((mean_inr - 30.0).abs() < 0.5, "{mean_inr}");
        let nominal = sim.render_background(sim.nominal_arrivals());
        assert!((power_ratio_db(nominal.as_slice(), 1.0) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn noise_only_variance() {
        let c = ScenarioConfig {
            inr_db: -300.0,
            ..cfg(Scenario::Static)
        };
        let sim = Simulator::new(&c, &WaveformSpec::default(), 512).unwrap();
        let recs = sim.simulate_background(&mut trial_rng(2, 0));
        let var = recs[0].y.norm_squared() / 512.0;
        assert!((var - 1.0).abs() < 0.15);
    }

    #[test]
    fn integer_delay_render_is_exact_shift() {
        let sim = Simulator::new(&cfg(Scenario::Static), &WaveformSpec::default(), 512).unwrap();
        let x = sim.render_pulse(2.5, 7.0, 1.0);
        let s = generate_lfm::<f64>(&WaveformSpec::default()).unwrap();
        for n in 0..512 {
            let expect = if (7..7 + 375).contains(&n) { 2.5 * s.samples[n - 7] } else { 0.0 };
            assert!((x[n] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn small_time_scale_matches_linearization() {
        let sim = Simulator::new(&cfg(Scenario::Static), &WaveformSpec::default(), 512).unwrap();
        let spec = WaveformSpec::default();
        let s: SampledWaveform<f64> = generate_lfm(&spec).unwrap();
        let u: SampledWaveform<f64> = crate::signals::companion_waveform(&spec).unwrap();
        let r: f64 = 1e-3;
        let rendered = sim.render_pulse(1.0, 10.0, r.exp());
        let lin = linearized_scale(&s, &u, r, 10).unwrap();
        // Second-order remainder: ½r²·max|t²s̈| ≈ ½r²(ω_max T)².
        let omega_t = 2.0 * std::f64::consts::PI * 5000.0 * 0.025;
        let bound = 0.5 * r * r * omega_t * omega_t + 0.02;
        for n in 10..380 {
            assert!((rendered[n] - lin[n]).abs() < bound, "n = {n}");
        }
    }

    #[test]
    fn static_ping_differences_are_noise_only() {
        let sim = Simulator::new(&cfg(Scenario::Static), &WaveformSpec::default(), 512).unwrap();
        let recs = sim.simulate_background(&mut trial_rng(4, 0));
        for w in recs.windows(2) {
            let diff = (&w[1].y - &w[0].y).norm_squared();
            assert!(diff <= 2.0 * 512.0 * 1.25);
        }
    }

    #[test]
    fn determinism() {
        let sim = Simulator::new(&cfg(Scenario::SurfaceAndDrift), &WaveformSpec::default(), 512).unwrap();
        let a = sim.simulate_background(&mut trial_rng(11, 7));
        let b = sim.simulate_background(&mut trial_rng(11, 7));
        let c = sim.simulate_background(&mut trial_rng(11, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn target_tracks() {
        let c = cfg(Scenario::Static);
        let sim = Simulator::new(&c, &WaveformSpec::default(), 512).unwrap();
        let st = sim.make_target_track(41, 10.0).unwrap();
        assert!(st.delays_s.windows(2).all(|w| w[0] == w[1]));
        assert!(st.waveform(40).iter().all(|v| *v == 0.0));
        assert!((power_ratio_db(st.waveform(41).as_slice(), 1.0) - 10.0).abs() < 1e-9);
        assert!(st.hypothesis_waveform(10).norm() > 0.0);

        let cross = ScenarioConfig {
            target: TargetConfig {
                kind: TargetKind::Crossing,
                ..TargetConfig::default()
            },
            ..c
        };
        let sim = Simulator::new(&cross, &WaveformSpec::default(), 512).unwrap();
        let tr = sim.make_target_track(41, 10.0).unwrap();
        let (kmin, _) = tr
            .delays_s
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(kmin + 1, 70);
        let lead = 16.0 * sim.dt_s();
        assert!((tr.delays_s[69] - lead).abs() < 1e-12);
        assert!(tr.time_scales[50] > 1.0 && tr.time_scales[90] < 1.0);

        let bg = sim.simulate_background(&mut trial_rng(1, 1));
        let with = add_target(&bg, &tr).unwrap();
        assert_eq!(with[39], bg[39]);
        assert_ne!(with[40], bg[40]);
        let zero = tr.scaled(0.0);
        assert!(zero.hypothesis_waveform(50).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn arrivals_outside_window_are_rejected() {
        assert!(matches!(
            Simulator::new(&cfg(Scenario::Static), &WaveformSpec::default(), 30),
            Err(Error::Config(_))
        ));
        let c = ScenarioConfig {
            depth_m: -1.0,
            ..cfg(Scenario::Static)
        };
        assert!(c.validate().is_err());
    }
}
