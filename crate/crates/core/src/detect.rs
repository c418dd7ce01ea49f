//! Sequential likelihood-ratio test with restart for target onset.
//!
//! Two filters run side by side. The H0 filter tracks the background alone
//! over the whole history. The H1 filter additionally subtracts the known
//! target waveform, under the hypothesis that the target appeared at the
//! current restart ping `k_o`. The statistic `G` accumulates
//! `γ_k = ℓ_k(H1) − ℓ_k(H0)`. Reaching `h1` declares a detection. Reaching
//! `h0` restarts the test: `G = 0`, `k_o = k + 1`, and the H1 filter is
//! re-cloned from the H0 posterior. With `h0 = 0` this is Page's test.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::{CovarianceModelKind, Hyperparams};
use crate::error::{Error, Result};
use crate::oceansim::TargetTrack;
use crate::scalar::{lit, to_f64, Real};
use crate::tracker::{FilterState, MeasurementModel, PingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlrtConfig {
    pub h0: f64,
    pub h1: f64,
    pub restart_on_lower: bool,
}

impl Default for SlrtConfig {
    fn default() -> Self {
        Self {
            h0: 0.0,
            h1: f64::INFINITY,
            restart_on_lower: true,
        }
    }
}

impl SlrtConfig {
    pub fn page(h1: f64) -> Self {
        Self {
            h1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h0.is_nan() || self.h1.is_nan() || self.h0 > 0.0 || self.h1 < 0.0 {
            return Err(Error::param("thresholds must satisfy h0 <= 0 <= h1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Monitor,
    Restart,
    Detect,
}

/// Adds `gamma` to `g` and applies the stopping rule. Returns the new
/// statistic (before any restart) and the decision.
pub fn accumulate(g: f64, gamma: f64, cfg: &SlrtConfig) -> (f64, Decision) {
    let next = g + gamma;
    if next >= cfg.h1 {
        (next, Decision::Detect)
    } else if cfg.restart_on_lower && next <= cfg.h0 {
        (next, Decision::Restart)
    } else {
        (next, Decision::Monitor)
    }
}

#[derive(Debug, Clone)]
pub struct SlrtState<T: Real> {
    pub g: f64,
    /// Hypothesized onset `k_o` of the current test window.
    pub k_start: usize,
    pub h0_filter: FilterState<T>,
    pub h1_filter: FilterState<T>,
}

impl<T: Real> SlrtState<T> {
    /// Both filters start from `background`, the posterior before `k_start`.
    pub fn new(background: FilterState<T>, k_start: usize) -> Self {
        Self {
            g: 0.0,
            k_start,
            h1_filter: background.clone(),
            h0_filter: background,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlrtStep<T: Real> {
    pub state: SlrtState<T>,
    pub decision: Decision,
    pub gamma: f64,
    /// `G` after adding `γ_k`, before a restart zeroes it.
    pub g_before_restart: f64,
}

impl<T: Real> PartialEq for SlrtState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.g == other.g
            && self.k_start == other.k_start
            && self.h0_filter == other.h0_filter
            && self.h1_filter == other.h1_filter
    }
}

fn to_vector<T: Real>(x: &DVector<f64>) -> DVector<T> {
    x.map(|v| lit::<T>(v))
}

/// Advances both filters by one ping and applies the stopping rule.
#[allow(clippy::too_many_arguments)]
pub fn slrt_step<T: Real>(
    model: &MeasurementModel<T>,
    state: &SlrtState<T>,
    record: &PingRecord<T>,
    hp: &Hyperparams<T>,
    kind: CovarianceModelKind,
    track: &TargetTrack,
    cfg: &SlrtConfig,
) -> Result<SlrtStep<T>> {
    let k = record.ping_index;
    if k < state.k_start {
        return Err(Error::Usage(format!("ping {k} precedes the test start {}", state.k_start)));
    }
    if k == 0 || k > track.n_pings() {
        return Err(Error::dim(format!("ping {k} is outside the target track")));
    }
    let offset = to_vector::<T>(track.hypothesis_waveform(k));
    let h0 = model.step(&state.h0_filter, record, hp, kind, None)?;
    let h1 = model.step(&state.h1_filter, record, hp, kind, Some(&offset))?;
    let gamma = to_f64(h1.loglik_increment - h0.loglik_increment);
    let (g, decision) = accumulate(state.g, gamma, cfg);
    let next = match decision {
        Decision::Restart => SlrtState {
            g: 0.0,
            k_start: k + 1,
            h1_filter: h0.state.clone(),
            h0_filter: h0.state,
        },
        _ => SlrtState {
            g,
            k_start: state.k_start,
            h0_filter: h0.state,
            h1_filter: h1.state,
        },
    };
    Ok(SlrtStep {
        state: next,
        decision,
        gamma,
        g_before_restart: g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionOutcome {
    pub detected: bool,
    pub alarm_ping: Option<usize>,
    /// `alarm_ping − onset`; negative for alarms raised before the onset.
    pub delay: Option<i64>,
    /// Largest `G` reached over the pings processed, counting the initial 0.
    pub max_g: f64,
    pub n_restarts: usize,
}

/// Runs the test on every record with `ping_index ≥ start_ping`, starting both
/// filters from `background` (the posterior after ping `start_ping − 1`).
#[allow(clippy::too_many_arguments)]
pub fn slrt_run<T: Real>(
    model: &MeasurementModel<T>,
    records: &[PingRecord<T>],
    hp: &Hyperparams<T>,
    kind: CovarianceModelKind,
    track: &TargetTrack,
    cfg: &SlrtConfig,
    start_ping: usize,
    background: &FilterState<T>,
) -> Result<DetectionOutcome> {
    if start_ping == 0 {
        return Err(Error::Usage("start_ping is 1-based".into()));
    }
    cfg.validate()?;
    let mut state = SlrtState::new(background.clone(), start_ping);
    // G starts at 0, so a run whose every increment is negative records 0.
    let mut max_g = 0.0_f64;
    let mut n_restarts = 0;
    for rec in records.iter().filter(|r| r.ping_index >= start_ping) {
        let step = slrt_step(model, &state, rec, hp, kind, track, cfg)?;
        max_g = max_g.max(step.g_before_restart);
        match step.decision {
            Decision::Detect => {
                let k = rec.ping_index;
                return Ok(DetectionOutcome {
                    detected: true,
                    alarm_ping: Some(k),
                    delay: Some(k as i64 - track.onset as i64),
                    max_g,
                    n_restarts,
                });
            }
            Decision::Restart => n_restarts += 1,
            Decision::Monitor => {}
        }
        state = step.state;
    }
    Ok(DetectionOutcome {
        detected: false,
        alarm_ping: None,
        delay: None,
        max_g,
        n_restarts,
    })
}

/// Smallest recorded maximum `v` whose tail fraction `#{m ≥ v}/n` does not
/// exceed `pfa`. When no recorded value qualifies (ties at the top), the next
/// representable value above the largest maximum is returned.
pub fn threshold_from_maxima(maxima: &[f64], pfa: f64) -> Result<f64> {
    if !(pfa > 0.0 && pfa <= 1.0) {
        return Err(Error::param("false-alarm target must lie in (0, 1]"));
    }
    if maxima.is_empty() || maxima.iter().any(|m| m.is_nan()) {
        return Err(Error::param("calibration needs at least one non-NaN maximum"));
    }
    let n = maxima.len();
    if (n as f64) < (1.0 / pfa).round() {
        return Err(Error::param(format!("{n} trials cannot resolve a false-alarm rate of {pfa}")));
    }
    let mut sorted = maxima.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let allowed = pfa * n as f64 + 1e-9;
    for (i, v) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1] == *v {
            continue;
        }
        if (n - i) as f64 <= allowed {
            return Ok(*v);
        }
    }
    let top = sorted[n - 1];
    log::warn!("degenerate calibration: {} trials share the largest maximum {top}", sorted.iter().filter(|v| **v == top).count());
    Ok(top.next_up())
}

/// Runs `n_trials` target-free trials through `max_statistic` and calibrates
/// `h1` from the recorded maxima.
pub fn calibrate_h1<F>(n_trials: usize, pfa: f64, mut max_statistic: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let maxima = (0..n_trials).map(&mut max_statistic).collect::<Result<Vec<_>>>()?;
    threshold_from_maxima(&maxima, pfa)
}
