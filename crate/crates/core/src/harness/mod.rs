//! Experiment configuration, Monte Carlo orchestration, metrics and outputs.

pub mod metrics;
pub mod plots;
pub mod significance;
pub mod sweep;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::{build_basis, CenterPlacement, CovarianceModelKind, Hyperparams};
use crate::detect::{slrt_run, DetectionOutcome, SlrtConfig};
use crate::error::{Error, Result};
use crate::learn::{fit_family, FitOptions, FitResult, SimplexOptions};
use crate::oceansim::{add_target, trial_rng, ScenarioConfig, Simulator, TargetTrack};
use crate::signals::{companion_waveform, generate_lfm, ConvolutionOperator, WaveformSpec};
use crate::tracker::{MeasurementModel, PingRecord};

pub use metrics::{CdfRow, MetricsSummary, MtdRow, PdRow, PfaRow};
pub use significance::{run_significance_sweep, SignificanceRow};
pub use sweep::{run_sweep, SweepOutput, ThresholdRow, TrialSignificanceRow};


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    /// Samples per ping window `N`.
    pub n_samples: usize,
    /// Delay grid length `N_l`.
    pub n_lags: usize,
    /// Gaussian basis size `M`.
    pub n_basis: usize,
    pub placement: CenterPlacement,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            n_samples: 512,
            n_lags: 64,
            n_basis: 64,
            placement: CenterPlacement::Midpoints,
        }
    }
}

/// Optimizer settings and the starting variances for every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Initial `σ_q²` relative to the mean squared warm-start coefficient.
    pub sigma_q2_rel: f64,
    pub sigma_c2: f64,
    pub sigma_d2: f64,
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub step_decades: f64,
    pub bound_decades: f64,
    pub start_multipliers: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sigma_q2_rel: 1e-4,
            sigma_c2: 1e-7,
            sigma_d2: 1e-7,
            max_evals: 120,
            f_tol: 1e-3,
            x_tol: 1e-2,
            step_decades: 1.0,
            bound_decades: 12.0,
            start_multipliers: vec![1.0, 10.0, 0.1],
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            simplex: SimplexOptions {
                f_tol: self.f_tol,
                x_tol: self.x_tol,
                max_evals: self.max_evals,
            },
            start_multipliers: self.start_multipliers.clone(),
            step_decades: self.step_decades,
            bound_decades: self.bound_decades,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceConfig {
    pub inr_grid_db: Vec<f64>,
    pub scenarios: Vec<crate::oceansim::Scenario>,
    pub replicates: usize,
    pub models: Vec<CovarianceModelKind>,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        use crate::oceansim::Scenario::*;
        Self {
            inr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            scenarios: vec![Static, SurfaceOnly, SurfaceAndDrift],
            replicates: 1,
            models: vec![CovarianceModelKind::Mc, CovarianceModelKind::Md, CovarianceModelKind::Mcd],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub waveform: WaveformSpec,
    pub dims: Dims,
    pub scenario: ScenarioConfig,
    pub models: Vec<CovarianceModelKind>,
    pub snr_grid_db: Vec<f64>,
    /// SNR of the delay CDF and of the false-alarm check.
    pub reference_snr_db: f64,
    /// Overrides `scenario.inr_db`.
    pub inr_db: f64,
    pub n_mc: usize,
    /// Fresh target-free trials for the threshold; defaults to `n_mc`.
    pub calibration_trials: Option<usize>,
    /// Detection backgrounds rerun without the target for the false-alarm
    /// check; defaults to `n_mc`, at most `n_mc`, 0 disables.
    pub validation_trials: Option<usize>,
    pub train_pings: usize,
    pub onset: usize,
    pub alpha: f64,
    pub pfa: f64,
    /// Lower SLRT threshold; 0 gives Page's test.
    pub h0: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub fit: FitConfig,
    pub significance: SignificanceConfig,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            waveform: WaveformSpec::default(),
            dims: Dims::default(),
            scenario: ScenarioConfig::default(),
            models: vec![CovarianceModelKind::M0, CovarianceModelKind::Md],
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            reference_snr_db: 10.0,
            inr_db: 30.0,
            n_mc: 200,
            calibration_trials: None,
            validation_trials: None,
            train_pings: 40,
            onset: 41,
            alpha: 0.05,
            pfa: 0.05,
            h0: 0.0,
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            fit: FitConfig::default(),
            significance: SignificanceConfig::default(),
            plots: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.scenario_config().validate()?;
        let d = &self.dims;
        if d.n_basis == 0 || d.n_basis > d.n_lags || d.n_lags > d.n_samples {
            return Err(Error::Config("dims must satisfy 1 <= n_basis <= n_lags <= n_samples".into()));
        }
        if self.models.is_empty() || self.snr_grid_db.is_empty() {
            return Err(Error::Config("models and snr_grid_db must be nonempty".into()));
        }
        if !(self.train_pings >= 2 && self.train_pings < self.onset && self.onset <= self.scenario.n_pings) {
            return Err(Error::Config("need 2 <= train_pings < onset <= scenario.n_pings".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be positive".into()));
        }
        if self.validation_trials() > self.n_mc {
            return Err(Error::Config("validation_trials cannot exceed n_mc".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.pfa > 0.0 && self.pfa <= 1.0) {
            return Err(Error::Config("alpha and pfa must lie in (0, 1]".into()));
        }
        if !(self.h0 <= 0.0) {
            return Err(Error::Config("h0 must be <= 0".into()));
        }
        if (self.calibration_trials() as f64) < (1.0 / self.pfa).round() {
            return Err(Error::Config("too few calibration trials for the requested pfa".into()));
        }
        if self.snr_grid_db.iter().chain([&self.reference_snr_db]).any(|s| s.is_nan()) {
            return Err(Error::Config("SNR values must be numbers".into()));
        }
        if self.fit.start_multipliers.is_empty() || self.fit.start_multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("fit.start_multipliers must be nonempty and positive".into()));
        }
        for (name, v) in [
            ("fit.sigma_q2_rel", self.fit.sigma_q2_rel),
            ("fit.sigma_c2", self.fit.sigma_c2),
            ("fit.sigma_d2", self.fit.sigma_d2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Scenario with the experiment-level INR applied.
    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            inr_db: self.inr_db,
            ..self.scenario.clone()
        }
    }

    pub fn calibration_trials(&self) -> usize {
        self.calibration_trials.unwrap_or(self.n_mc)
    }

    pub fn validation_trials(&self) -> usize {
        self.validation_trials.unwrap_or(self.n_mc)
    }

    /// Models fitted per trial: M0 (the significance null) plus the configured ones.
    pub fn fitted_models(&self) -> Vec<CovarianceModelKind> {
        let mut kinds = vec![CovarianceModelKind::M0];
        for k in &self.models {
            if !kinds.contains(k) {
                kinds.push(*k);
            }
        }
        kinds
    }
}

/// Random stream families; the trial index fills the low bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Calibration = 1,
    Detection = 2,
    Validation = 3,
    Significance = 4,
    Simulate = 5,
}

pub fn stream_id(purpose: StreamPurpose, cell: u64, trial: u64) -> u64 {
    ((purpose as u64) << 56) | ((cell & 0xff_ffff) << 32) | (trial & 0xffff_ffff)
}

/// Measurement model for the configured waveform and dimensions.
pub fn build_model(waveform: &WaveformSpec, dims: &Dims) -> Result<MeasurementModel<f64>> {
    let s = generate_lfm::<f64>(waveform)?;
    let u = companion_waveform::<f64>(waveform)?;
    let s_op = ConvolutionOperator::new(s, dims.n_samples, dims.n_lags)?;
    let u_op = ConvolutionOperator::new(u, dims.n_samples, dims.n_lags)?;
    let basis = build_basis(waveform.dt(), dims.n_lags, dims.n_basis, waveform.bandwidth_hz, &s_op, dims.placement)?;
    MeasurementModel::new(basis, u_op)
}

/// Shared, read-only state of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub cfg: ExperimentConfig,
    pub model: MeasurementModel<f64>,
    pub sim: Simulator,
}

/// One simulated background realization with the fits on its training pings.
#[derive(Debug, Clone)]
pub struct TrialFits {
    pub background: Vec<PingRecord<f64>>,
    pub fits: Vec<FitResult<f64>>,
}

impl TrialFits {
    pub fn fit_for(&self, kind: CovarianceModelKind) -> Option<&FitResult<f64>> {
        self.fits.iter().find(|f| f.kind == kind)
    }
}

impl ExperimentContext {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = build_model(&cfg.waveform, &cfg.dims)?;
        let sim = Simulator::new(&cfg.scenario_config(), &cfg.waveform, cfg.dims.n_samples)?;
        Ok(Self { cfg, model, sim })
    }

    /// Context for the same experiment under another scenario configuration.
    pub fn with_scenario(&self, scenario: ScenarioConfig, inr_db: f64) -> Result<Self> {
        let cfg = ExperimentConfig {
            scenario,
            inr_db,
            ..self.cfg.clone()
        };
        let sim = Simulator::new(&cfg.scenario_config(), &cfg.waveform, cfg.dims.n_samples)?;
        Ok(Self {
            cfg,
            model: self.model.clone(),
            sim,
        })
    }

    pub fn target_track(&self, snr_db: f64) -> Result<TargetTrack> {
        self.sim.make_target_track(self.cfg.onset, snr_db)
    }

    pub fn simulate(&self, stream: u64) -> Vec<PingRecord<f64>> {
        self.sim.simulate_background(&mut trial_rng(self.cfg.master_seed, stream))
    }

    /// Starting variances derived from the warm-start coefficients.
    pub fn initial_hyperparams(&self, theta0: &DVector<f64>) -> Result<Hyperparams<f64>> {
        let ms = theta0.norm_squared() / theta0.len().max(1) as f64;
        let q = self.cfg.fit.sigma_q2_rel * if ms > 0.0 { ms } else { 1.0 };
        Hyperparams::new(q, self.cfg.fit.sigma_c2, self.cfg.fit.sigma_d2, self.cfg.scenario.sigma_e2)
    }

    /// Fits `kinds` on the first `train_pings` records of `background`.
    pub fn fit_background(&self, background: &[PingRecord<f64>], kinds: &[CovarianceModelKind]) -> Result<Vec<FitResult<f64>>> {
        let train = &background[..self.cfg.train_pings];
        let init = self.model.warm_start(&train[0].y)?;
        let hp0 = self.initial_hyperparams(&init.mean)?;
        fit_family(
            &self.model,
            train,
            &init,
            self.cfg.scenario.sigma_e2,
            &hp0,
            kinds,
            &self.cfg.fit.options(),
        )
    }

    /// Simulates one background and fits every model the experiment needs.
    pub fn prepare_trial(&self, stream: u64) -> Result<TrialFits> {
        let background = self.simulate(stream);
        let fits = self.fit_background(&background, &self.cfg.fitted_models())?;
        Ok(TrialFits { background, fits })
    }

    /// Runs the sequential test from the first post-training ping with the
    /// filter carried over from training. The target is injected into the
    /// data only when `target_present`.
    pub fn detect(
        &self,
        trial: &TrialFits,
        kind: CovarianceModelKind,
        track: &TargetTrack,
        h1: f64,
        target_present: bool,
    ) -> Result<DetectionOutcome> {
        let fit = trial
            .fit_for(kind)
            .ok_or_else(|| Error::Usage(format!("model {kind} was not fitted")))?;
        let owned;
        let records: &[PingRecord<f64>] = if target_present {
            owned = add_target(&trial.background, track)?;
            &owned
        } else {
            &trial.background
        };
        let cfg = SlrtConfig {
            h0: self.cfg.h0,
            h1,
            restart_on_lower: true,
        };
        slrt_run(
            &self.model,
            records,
            &fit.hp_hat,
            kind,
            track,
            &cfg,
            self.cfg.train_pings + 1,
            &fit.final_state,
        )
    }
}
