//! SVG figures drawn from the metric tables.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::metrics::MetricsSummary;
use crate::channel::CovarianceModelKind;
use crate::error::{Error, Result};

const PALETTE: [RGBColor; 4] = [BLUE, RED, GREEN, MAGENTA];

type Series = (CovarianceModelKind, Vec<(f64, f64)>);

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn models_of<'a>(models: impl Iterator<Item = &'a CovarianceModelKind>) -> Vec<CovarianceModelKind> {
    let mut out: Vec<CovarianceModelKind> = Vec::new();
    for m in models {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series], y_range: Option<(f64, f64)>) -> Result<()> {
    let points = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if let Some(r) = y_range {
        (y0, y1) = r;
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (model, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let finite: Vec<(f64, f64)> = pts.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(finite.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(model.to_string())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(finite.iter().map(|p| Circle::new(*p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Writes `pd_vs_snr.svg`, `mtd_vs_snr.svg` and `cdf_delay.svg` into `dir`.
pub fn write_detection_plots(summary: &MetricsSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    let models = models_of(summary.pd.iter().map(|r| &r.model));
    let pd: Vec<Series> = models
        .iter()
        .map(|m| {
            let mut p: Vec<(f64, f64)> = summary.pd.iter().filter(|r| r.model == *m).map(|r| (r.snr_db, r.pd)).collect();
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            (*m, p)
        })
        .collect();
    let mtd: Vec<Series> = models
        .iter()
        .map(|m| {
            let mut p: Vec<(f64, f64)> = summary
                .mtd
                .iter()
                .filter(|r| r.model == *m)
                .filter_map(|r| Some((r.snr_db, r.mtd_pings?)))
                .collect();
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            (*m, p)
        })
        .collect();
    let cdf: Vec<Series> = models_of(summary.cdf.iter().map(|r| &r.model))
        .into_iter()
        .map(|m| (m, summary.cdf.iter().filter(|r| r.model == m).map(|r| (r.delay as f64, r.cdf)).collect()))
        .collect();
    let cdf_snr = summary.cdf.first().map_or(f64::NAN, |r| r.snr_db);

    let files = [dir.join("pd_vs_snr.svg"), dir.join("mtd_vs_snr.svg"), dir.join("cdf_delay.svg")];
    line_chart(&files[0], "Probability of detection", "SNR [dB]", "Pd", &pd, Some((0.0, 1.0)))?;
    line_chart(&files[1], "Mean time to detection", "SNR [dB]", "MTD [pings]", &mtd, None)?;
    line_chart(
        &files[2],
        &format!("Detection delay CDF at {cdf_snr} dB"),
        "delay after onset [pings]",
        "CDF",
        &cdf,
        Some((0.0, 1.0)),
    )?;
    Ok(files.to_vec())
}
