//! Detection metrics per (model, SNR) cell and their CSV form.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::CovarianceModelKind;
use crate::detect::DetectionOutcome;
use crate::error::Result;

pub const PD_FILE: &str = "pd_vs_snr.csv";
pub const MTD_FILE: &str = "mtd_vs_snr.csv";
pub const CDF_FILE: &str = "cdf_delay.csv";
pub const PFA_FILE: &str = "pfa_check.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdRow {
    pub model: CovarianceModelKind,
    pub snr_db: f64,
    pub n_trials: usize,
    /// Trials whose fit or filter failed; excluded from `pd`.
    pub n_failed: usize,
    pub n_detected: usize,
    pub pd: f64,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdRow {
    pub model: CovarianceModelKind,
    pub snr_db: f64,
    pub n_detected: usize,
    /// Mean post-onset alarm delay in pings; empty without detections.
    pub mtd_pings: Option<f64>,
    pub delay_p10: Option<f64>,
    pub delay_p90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub model: CovarianceModelKind,
    pub snr_db: f64,
    pub delay: i64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaRow {
    pub model: CovarianceModelKind,
    pub snr_db: f64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub n_false_alarms: usize,
    pub pfa: f64,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSummary {
    pub pd: Vec<PdRow>,
    pub mtd: Vec<MtdRow>,
    pub cdf: Vec<CdfRow>,
    pub pfa: Vec<PfaRow>,
}

/// Outcome of one trial in one cell; `None` when the trial failed.
pub type CellOutcomes = [Option<DetectionOutcome>];

/// Whether an outcome counts as a detection of a target present from `onset`.
/// Alarms raised before the onset are false alarms, not detections.
pub fn is_detection(o: &DetectionOutcome) -> bool {
    o.detected && o.delay.is_some_and(|d| d >= 0)
}

/// Nearest-rank percentile of sorted data, `p` in `(0, 100]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn detection_delays(outcomes: &CellOutcomes) -> Vec<f64> {
    let mut delays: Vec<f64> = outcomes
        .iter()
        .flatten()
        .filter(|o| is_detection(o))
        .map(|o| o.delay.expect("detections carry a delay") as f64)
        .collect();
    delays.sort_by(f64::total_cmp);
    delays
}

pub fn pd_row(model: CovarianceModelKind, snr_db: f64, h1: f64, outcomes: &CellOutcomes) -> PdRow {
    let n_failed = outcomes.iter().filter(|o| o.is_none()).count();
    let n_detected = outcomes.iter().flatten().filter(|o| is_detection(o)).count();
    let n_ok = outcomes.len() - n_failed;
    PdRow {
        model,
        snr_db,
        n_trials: outcomes.len(),
        n_failed,
        n_detected,
        pd: if n_ok > 0 { n_detected as f64 / n_ok as f64 } else { f64::NAN },
        h1,
    }
}

pub fn mtd_row(model: CovarianceModelKind, snr_db: f64, outcomes: &CellOutcomes) -> MtdRow {
    let delays = detection_delays(outcomes);
    let mtd_pings = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64);
    MtdRow {
        model,
        snr_db,
        n_detected: delays.len(),
        mtd_pings,
        delay_p10: nearest_rank(&delays, 10.0),
        delay_p90: nearest_rank(&delays, 90.0),
    }
}

/// Empirical delay CDF over `0..=max_delay`, normalized by the successful
/// trials so that the final value equals the cell's Pd.
pub fn cdf_rows(model: CovarianceModelKind, snr_db: f64, max_delay: i64, outcomes: &CellOutcomes) -> Vec<CdfRow> {
    let n_ok = outcomes.iter().flatten().count();
    let delays = detection_delays(outcomes);
    (0..=max_delay)
        .map(|d| {
            let hits = delays.partition_point(|v| *v <= d as f64);
            CdfRow {
                model,
                snr_db,
                delay: d,
                cdf: if n_ok > 0 { hits as f64 / n_ok as f64 } else { f64::NAN },
            }
        })
        .collect()
}

/// False-alarm rate of target-free runs tested against `h1`.
pub fn pfa_row(model: CovarianceModelKind, snr_db: f64, h1: f64, outcomes: &CellOutcomes) -> PfaRow {
    let n_failed = outcomes.iter().filter(|o| o.is_none()).count();
    let n_false_alarms = outcomes.iter().flatten().filter(|o| o.detected).count();
    let n_ok = outcomes.len() - n_failed;
    PfaRow {
        model,
        snr_db,
        n_trials: outcomes.len(),
        n_failed,
        n_false_alarms,
        pfa: if n_ok > 0 { n_false_alarms as f64 / n_ok as f64 } else { f64::NAN },
        h1,
    }
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut rd = csv::Reader::from_path(path)?;
    let rows = rd.deserialize().collect::<std::result::Result<Vec<R>, _>>()?;
    Ok(rows)
}

impl MetricsSummary {
    /// Writes the four metric tables into `dir` under their standard names.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join(PD_FILE), &self.pd)?;
        write_csv(&dir.join(MTD_FILE), &self.mtd)?;
        write_csv(&dir.join(CDF_FILE), &self.cdf)?;
        write_csv(&dir.join(PFA_FILE), &self.pfa)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        Ok(Self {
            pd: read_csv(&dir.join(PD_FILE))?,
            mtd: read_csv(&dir.join(MTD_FILE))?,
            cdf: read_csv(&dir.join(CDF_FILE))?,
            pfa: read_csv(&dir.join(PFA_FILE))?,
        })
    }

    pub fn pd_for(&self, model: CovarianceModelKind, snr_db: f64) -> Option<&PdRow> {
        self.pd.iter().find(|r| r.model == model && r.snr_db == snr_db)
    }

    pub fn mtd_for(&self, model: CovarianceModelKind, snr_db: f64) -> Option<&MtdRow> {
        self.mtd.iter().find(|r| r.model == model && r.snr_db == snr_db)
    }

    pub fn cdf_for(&self, model: CovarianceModelKind) -> Vec<&CdfRow> {
        self.cdf.iter().filter(|r| r.model == model).collect()
    }

    pub fn pfa_for(&self, model: CovarianceModelKind) -> Option<&PfaRow> {
        self.pfa.iter().find(|r| r.model == model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CovarianceModelKind::*;

    fn hit(delay: i64) -> Option<DetectionOutcome> {
        Some(DetectionOutcome {
            detected: true,
            alarm_ping: Some((41 + delay) as usize),
            delay: Some(delay),
            max_g: 10.0,
            n_restarts: 0,
        })
    }

    fn miss() -> Option<DetectionOutcome> {
        Some(DetectionOutcome {
            detected: false,
            alarm_ping: None,
            delay: None,
            max_g: 1.0,
            n_restarts: 2,
        })
    }

    #[test]
    fn pd_mtd_and_cdf_agree() {
        let cell = vec![hit(0), hit(3), miss(), None, hit(-1), hit(5)];
        let pd = pd_row(Md, 10.0, 7.5, &cell);
        assert_eq!((pd.n_failed, pd.n_detected), (1, 3));
        assert!((pd.pd - 0.6).abs() < 1e-15);
        let mtd = mtd_row(Md, 10.0, &cell);
        assert_eq!(mtd.mtd_pings, Some(8.0 / 3.0));
        assert_eq!((mtd.delay_p10, mtd.delay_p90), (Some(0.0), Some(5.0)));
        let cdf = cdf_rows(Md, 10.0, 10, &cell);
        assert!(cdf.windows(2).all(|w| w[0].cdf <= w[1].cdf));
        assert_eq!(cdf.last().unwrap().cdf, pd.pd);
        assert_eq!(cdf[0].cdf, 0.2);
    }

    #[test]
    fn empty_cells_have_no_delay_statistics() {
        let cell = vec![miss(), miss()];
        let m = mtd_row(M0, 0.0, &cell);
        assert_eq!((m.mtd_pings, m.delay_p10), (None, None));
        assert_eq!(pd_row(M0, 0.0, 1.0, &cell).pd, 0.0);
    }

    #[test]
    fn nearest_rank_matches_definition() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 10.0), Some(1.0));
        assert_eq!(nearest_rank(&v, 90.0), Some(9.0));
        assert_eq!(nearest_rank(&v, 100.0), Some(10.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn false_alarms_count_every_alarm() {
        let cell = vec![hit(2), miss(), miss(), None];
        let r = pfa_row(M0, 10.0, 3.0, &cell);
        assert_eq!((r.n_false_alarms, r.n_failed), (1, 1));
        assert!((r.pfa - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cell = vec![hit(0), hit(7), miss(), hit(2)];
        let s = MetricsSummary {
            pd: vec![pd_row(M0, 0.1, f64::INFINITY, &cell), pd_row(Md, -3.3, 1.0 / 3.0, &cell)],
            mtd: vec![mtd_row(Md, 10.0, &cell), mtd_row(M0, 5.0, &[miss()])],
            cdf: cdf_rows(Md, 10.0, 4, &cell),
            pfa: vec![pfa_row(Md, 10.0, 0.1 + 0.2, &cell)],
        };
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path()).unwrap();
        assert_eq!(MetricsSummary::read_dir(dir.path()).unwrap(), s);
    }
}
