//! Model significance across scenarios and INR levels.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::write_csv;
use super::{stream_id, ExperimentConfig, ExperimentContext, StreamPurpose};
use crate::channel::CovarianceModelKind;
use crate::error::Result;
use crate::learn::llr_statistic;
use crate::oceansim::{Scenario, ScenarioConfig};

pub const SIGNIFICANCE_SWEEP_FILE: &str = "significance_inr.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub scenario: Scenario,
    pub inr_db: f64,
    pub replicate: usize,
    pub model: CovarianceModelKind,
    pub statistic_2t: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significant: bool,
}

/// For every scenario in `cfg.significance`, INR in `inr_grid_db` and
/// replicate, fits M0 and the configured extensions on the training pings of
/// a target-free run and tests each extension against M0 at `cfg.alpha`.
/// Rows are written to `cfg.output_dir` and returned in
/// (scenario, INR, replicate, model) order. Failed replicates are logged and
/// skipped.
pub fn run_significance_sweep(cfg: &ExperimentConfig, inr_grid_db: &[f64]) -> Result<Vec<SignificanceRow>> {
    let base = ExperimentContext::new(cfg.clone())?;
    let sig = &cfg.significance;
    let mut kinds = vec![CovarianceModelKind::M0];
    kinds.extend(sig.models.iter().copied().filter(|k| *k != CovarianceModelKind::M0));
    let mut contexts = Vec::new();
    let mut jobs = Vec::new();
    for scenario in &sig.scenarios {
        for (ii, inr) in inr_grid_db.iter().enumerate() {
            let ctx = base.with_scenario(
                ScenarioConfig {
                    scenario: *scenario,
                    ..cfg.scenario.clone()
                },
                *inr,
            )?;
            for r in 0..sig.replicates {
                jobs.push((contexts.len(), *scenario, *inr, (*scenario as u64) * 256 + ii as u64, r));
            }
            contexts.push(ctx);
        }
    }
    info!("significance sweep: {} fits of {} models", jobs.len(), kinds.len());
    let rows: Vec<Vec<SignificanceRow>> = jobs
        .par_iter()
        .map(|(ci, scenario, inr, cell, r)| {
            let ctx = &contexts[*ci];
            let bg = ctx.simulate(stream_id(StreamPurpose::Significance, *cell, *r as u64));
            let fits = match ctx.fit_background(&bg, &kinds) {
                Ok(f) => f,
                Err(e) => {
                    warn!("{scenario:?} at {inr} dB, replicate {r}: {e}");
                    return Vec::new();
                }
            };
            fits[1..]
                .iter()
                .filter_map(|f| llr_statistic(f, &fits[0], cfg.alpha).ok())
                .map(|s| SignificanceRow {
                    scenario: *scenario,
                    inr_db: *inr,
                    replicate: *r,
                    model: s.kind,
                    statistic_2t: s.statistic_2t,
                    dof: s.dof,
                    p_value: s.p_value,
                    significant: s.significant,
                })
                .collect()
        })
        .collect();
    let rows: Vec<SignificanceRow> = rows.into_iter().flatten().collect();
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_csv(&cfg.output_dir.join(SIGNIFICANCE_SWEEP_FILE), &rows)?;
    Ok(rows)
}
