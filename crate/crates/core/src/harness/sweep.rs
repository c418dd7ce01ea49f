//! Monte Carlo detection sweep: threshold calibration, detection trials and
//! the false-alarm check.

use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cdf_rows, mtd_row, pd_row, pfa_row, write_csv, MetricsSummary};
use super::{plots, stream_id, ExperimentConfig, ExperimentContext, StreamPurpose, TrialFits};
use crate::channel::CovarianceModelKind;
use crate::detect::{threshold_from_maxima, DetectionOutcome};
use crate::error::{Error, Result};
use crate::learn::llr_statistic;
use crate::oceansim::TargetTrack;

pub const THRESHOLD_FILE: &str = "thresholds.csv";
pub const SIGNIFICANCE_FILE: &str = "significance.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub model: CovarianceModelKind,
    pub snr_db: f64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub h1: f64,
}

/// Significance of one model against M0 on one detection trial's training pings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSignificanceRow {
    pub trial: usize,
    pub model: CovarianceModelKind,
    pub statistic_2t: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub summary: MetricsSummary,
    pub thresholds: Vec<ThresholdRow>,
    pub significance: Vec<TrialSignificanceRow>,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

/// SNR cells of the sweep: the grid plus the reference SNR when it is off-grid.
pub fn sweep_snrs(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut snrs = cfg.snr_grid_db.clone();
    if !snrs.contains(&cfg.reference_snr_db) {
        snrs.push(cfg.reference_snr_db);
    }
    snrs
}

/// `cells[model][snr]` over trials.
type Grid<T> = Vec<Vec<Vec<T>>>;

fn transpose<T: Clone>(per_trial: Vec<Option<Vec<Vec<T>>>>, n_models: usize, n_snrs: usize) -> Grid<Option<T>> {
    let mut grid: Grid<Option<T>> = vec![vec![Vec::with_capacity(per_trial.len()); n_snrs]; n_models];
    for trial in per_trial {
        for (m, row) in grid.iter_mut().enumerate() {
            for (s, cell) in row.iter_mut().enumerate() {
                cell.push(trial.as_ref().map(|t| t[m][s].clone()));
            }
        }
    }
    grid
}

fn prepared(ctx: &ExperimentContext, purpose: StreamPurpose, trial: usize) -> Option<TrialFits> {
    match ctx.prepare_trial(stream_id(purpose, 0, trial as u64)) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("{purpose:?} trial {trial} failed: {e}");
            None
        }
    }
}

/// Runs the full protocol of `cfg`, writes its CSV files (and plots when
/// enabled) into `cfg.output_dir` and returns the aggregated results.
///
/// Backgrounds are shared across models and SNR cells. Detection trials use
/// backgrounds independent of the calibration set; the false-alarm check
/// reruns the first `validation_trials` of them without the target.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let ctx = ExperimentContext::new(cfg.clone())?;
    let models = cfg.models.clone();
    let snrs = sweep_snrs(cfg);
    let tracks: Vec<TargetTrack> = snrs.iter().map(|s| ctx.target_track(*s)).collect::<Result<_>>()?;
    let ref_idx = snrs.iter().position(|s| *s == cfg.reference_snr_db).expect("reference SNR is a cell");

    info!("calibrating thresholds on {} target-free trials", cfg.calibration_trials());
    let calib: Vec<Option<Vec<Vec<Option<f64>>>>> = (0..cfg.calibration_trials())
        .into_par_iter()
        .map(|t| {
            let trial = prepared(&ctx, StreamPurpose::Calibration, t)?;
            let cells = models
                .iter()
                .map(|m| {
                    tracks
                        .iter()
                        .map(|tr| ctx.detect(&trial, *m, tr, f64::INFINITY, false).ok().map(|o| o.max_g))
                        .collect()
                })
                .collect();
            Some(cells)
        })
        .collect();
    let calib = transpose(calib, models.len(), snrs.len());
    let mut thresholds = Vec::new();
    let mut h1 = vec![vec![f64::NAN; snrs.len()]; models.len()];
    for (mi, m) in models.iter().enumerate() {
        for (si, s) in snrs.iter().enumerate() {
            let cell = &calib[mi][si];
            let maxima: Vec<f64> = cell.iter().flatten().flatten().copied().collect();
            if maxima.is_empty() {
                return Err(Error::Fit {
                    model: m.to_string(),
                    reason: format!("every calibration trial failed at {s} dB"),
                });
            }
            h1[mi][si] = threshold_from_maxima(&maxima, cfg.pfa)?;
            thresholds.push(ThresholdRow {
                model: *m,
                snr_db: *s,
                n_trials: cell.len(),
                n_failed: cell.len() - maxima.len(),
                h1: h1[mi][si],
            });
        }
    }

    let n_val = cfg.validation_trials();
    info!("running {} detection trials", cfg.n_mc);
    type TrialResult = (Vec<Vec<Option<DetectionOutcome>>>, Vec<Option<DetectionOutcome>>, Vec<TrialSignificanceRow>);
    let detections: Vec<Option<TrialResult>> = (0..cfg.n_mc)
        .into_par_iter()
        .map(|t| {
            let trial = prepared(&ctx, StreamPurpose::Detection, t)?;
            let present = models
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    tracks
                        .iter()
                        .enumerate()
                        .map(|(si, tr)| ctx.detect(&trial, *m, tr, h1[mi][si], true).ok())
                        .collect()
                })
                .collect();
            let absent = if t < n_val {
                models
                    .iter()
                    .enumerate()
                    .map(|(mi, m)| ctx.detect(&trial, *m, &tracks[ref_idx], h1[mi][ref_idx], false).ok())
                    .collect()
            } else {
                Vec::new()
            };
            let null = trial.fit_for(CovarianceModelKind::M0).expect("M0 is always fitted");
            let sig = models
                .iter()
                .filter(|m| **m != CovarianceModelKind::M0)
                .filter_map(|m| llr_statistic(trial.fit_for(*m)?, null, cfg.alpha).ok())
                .map(|r| TrialSignificanceRow {
                    trial: t,
                    model: r.kind,
                    statistic_2t: r.statistic_2t,
                    dof: r.dof,
                    p_value: r.p_value,
                    significant: r.significant,
                })
                .collect();
            Some((present, absent, sig))
        })
        .collect();

    let mut present_trials = Vec::with_capacity(detections.len());
    let mut validation: Vec<Vec<Option<DetectionOutcome>>> = vec![Vec::new(); models.len()];
    let mut significance = Vec::new();
    for (t, d) in detections.into_iter().enumerate() {
        match d {
            Some((present, absent, sig)) => {
                present_trials.push(Some(present));
                if t < n_val {
                    for (mi, o) in absent.into_iter().enumerate() {
                        validation[mi].push(o);
                    }
                }
                significance.extend(sig);
            }
            None => {
                present_trials.push(None);
                if t < n_val {
                    validation.iter_mut().for_each(|v| v.push(None));
                }
            }
        }
    }
    let outcomes = transpose(present_trials, models.len(), snrs.len());
    let outcomes: Grid<Option<DetectionOutcome>> = outcomes
        .into_iter()
        .map(|row| row.into_iter().map(|cell| cell.into_iter().map(Option::flatten).collect()).collect())
        .collect();

    let max_delay = (cfg.scenario.n_pings - cfg.onset) as i64;
    let mut summary = MetricsSummary::default();
    for (mi, m) in models.iter().enumerate() {
        for (si, s) in snrs.iter().enumerate() {
            let cell = &outcomes[mi][si];
            summary.pd.push(pd_row(*m, *s, h1[mi][si], cell));
            summary.mtd.push(mtd_row(*m, *s, cell));
            if si == ref_idx {
                summary.cdf.extend(cdf_rows(*m, *s, max_delay, cell));
            }
        }
        if n_val > 0 {
            summary.pfa.push(pfa_row(*m, snrs[ref_idx], h1[mi][ref_idx], &validation[mi]));
        }
    }
    for r in &summary.pd {
        if r.n_failed > 0 {
            warn!("{} at {} dB: {} of {} trials failed", r.model, r.snr_db, r.n_failed, r.n_trials);
        }
    }

    let dir = &cfg.output_dir;
    summary.write_dir(dir)?;
    write_csv(&dir.join(THRESHOLD_FILE), &thresholds)?;
    write_csv(&dir.join(SIGNIFICANCE_FILE), &significance)?;
    let mut files: Vec<PathBuf> = [
        super::metrics::PD_FILE,
        super::metrics::MTD_FILE,
        super::metrics::CDF_FILE,
        super::metrics::PFA_FILE,
        THRESHOLD_FILE,
        SIGNIFICANCE_FILE,
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();
    if cfg.plots {
        files.extend(plots::write_detection_plots(&summary, dir)?);
    }
    Ok(SweepOutput {
        summary,
        thresholds,
        significance,
        files,
    })
}
