//! Maximum marginal-likelihood hyperparameter fitting, likelihood-ratio
//! statistics between nested covariance models and their chi-square p-values.

pub mod simplex;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::channel::{CovarianceModelKind, Hyperparams};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::tracker::{FilterState, MeasurementModel, PingRecord};

pub use simplex::{SimplexOptions, SimplexResult};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    /// Each start scales the initial variances by one of these factors.
    pub start_multipliers: Vec<f64>,
    /// Initial simplex edge in decades of variance.
    pub step_decades: f64,
    /// Variances are confined to `init·10^(±bound_decades)`.
    pub bound_decades: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            simplex: SimplexOptions::default(),
            start_multipliers: vec![1.0, 10.0, 0.1],
            step_decades: 1.0,
            bound_decades: 12.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub kind: CovarianceModelKind,
    pub hp_hat: Hyperparams<T>,
    pub loglik: T,
    pub n_evals: usize,
    pub converged: bool,
    /// Filter posterior after the last record at `hp_hat`.
    pub final_state: FilterState<T>,
    records_digest: u64,
}

impl<T: Real> FitResult<T> {
    pub fn records_digest(&self) -> u64 {
        self.records_digest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub kind: CovarianceModelKind,
    /// `2(L_ext − L_null)` before flooring.
    pub statistic_2t: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone)]
pub struct SignificanceReport<T: Real> {
    pub null: FitResult<T>,
    pub fits: Vec<FitResult<T>>,
    pub results: Vec<SignificanceResult>,
}

/// Upper tail `Pr(χ²_dof ≥ x)` for one or two degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::param(format!("chi-square statistic must be non-negative, got {x}")));
    }
    match dof {
        _ if x == 0.0 && (dof == 1 || dof == 2) => Ok(1.0),
        1 => Ok(statrs::function::gamma::gamma_ur(0.5, x / 2.0)),
        2 => Ok((-x / 2.0).exp()),
        _ => Err(Error::param(format!("unsupported chi-square degrees of freedom {dof}"))),
    }
}

fn digest<T: Real>(records: &[PingRecord<T>], init: &FilterState<T>) -> u64 {
    let mut h = DefaultHasher::new();
    records.len().hash(&mut h);
    for r in records {
        r.ping_index.hash(&mut h);
        for v in r.y.iter() {
            to_f64(*v).to_bits().hash(&mut h);
        }
    }
    for v in init.mean.iter().chain(init.cov.iter()) {
        to_f64(*v).to_bits().hash(&mut h);
    }
    h.finish()
}

fn free_values<T: Real>(kind: CovarianceModelKind, hp: &Hyperparams<T>) -> Vec<f64> {
    let mut v = vec![to_f64(hp.sigma_q2)];
    if kind.has_path_doppler() {
        v.push(to_f64(hp.sigma_c2));
    }
    if kind.has_common_doppler() {
        v.push(to_f64(hp.sigma_d2));
    }
    v
}

fn assemble<T: Real>(kind: CovarianceModelKind, vals: &[f64], sigma_e2: T) -> Hyperparams<T> {
    let mut it = vals.iter().copied();
    let q = it.next().unwrap_or(0.0);
    let c = if kind.has_path_doppler() { it.next().unwrap_or(0.0) } else { 0.0 };
    let d = if kind.has_common_doppler() { it.next().unwrap_or(0.0) } else { 0.0 };
    Hyperparams {
        sigma_q2: lit(q),
        sigma_c2: lit(c),
        sigma_d2: lit(d),
        sigma_e2,
    }
}

/// Maximizes the filter's log marginal likelihood over the variances `kind`
/// uses, with `sigma_e2` held fixed.
///
/// Nelder–Mead runs in natural-log variance coordinates from `init_hp` scaled
/// by each of `opts.start_multipliers`, then from each of `extra_starts`; the
/// best end point wins. Variances at zero in an extra start are placed on the
/// lower bound.
#[allow(clippy::too_many_arguments)]
pub fn fit<T: Real>(
    model: &MeasurementModel<T>,
    records: &[PingRecord<T>],
    init: &FilterState<T>,
    kind: CovarianceModelKind,
    sigma_e2: T,
    init_hp: &Hyperparams<T>,
    extra_starts: &[Hyperparams<T>],
    opts: &FitOptions,
) -> Result<FitResult<T>> {
    if records.len() < 2 {
        return Err(Error::Usage("fitting needs at least two records".into()));
    }
    if !(sigma_e2 > T::zero()) {
        return Err(Error::param("sigma_e2 must be positive"));
    }
    let base = free_values(kind, init_hp);
    if base.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::param("initial variances for the fitted parameters must be positive"));
    }
    let bound = opts.bound_decades * std::f64::consts::LN_10;
    let lower: Vec<f64> = base.iter().map(|v| v.ln() - bound).collect();
    let upper: Vec<f64> = base.iter().map(|v| v.ln() + bound).collect();

    let mut starts: Vec<Vec<f64>> = opts
        .start_multipliers
        .iter()
        .map(|m| base.iter().map(|v| (v * m).ln()).collect())
        .collect();
    for hp in extra_starts {
        let vals = free_values(kind, hp);
        starts.push(
            vals.iter()
                .enumerate()
                .map(|(i, v)| if *v > 0.0 { v.ln() } else { lower[i] })
                .collect(),
        );
    }

    let mut last_err: Option<Error> = None;
    let mut cost = |x: &[f64]| -> f64 {
        let vals: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let hp = assemble(kind, &vals, sigma_e2);
        match model.log_likelihood(records, &hp, kind, init) {
            Ok((ll, _)) => -to_f64(ll),
            Err(e) => {
                last_err = Some(e);
                f64::INFINITY
            }
        }
    };

    let step = opts.step_decades * std::f64::consts::LN_10;
    let mut best: Option<SimplexResult> = None;
    let mut n_evals = 0;
    let mut any_converged = false;
    for x0 in &starts {
        let r = simplex::minimize(&mut cost, x0, step, &lower, &upper, &opts.simplex);
        n_evals += r.n_evals;
        if r.f.is_finite() {
            any_converged |= r.converged;
        }
        if best.as_ref().is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Fit {
        model: kind.to_string(),
        reason: "no starting points".into(),
    })?;
    if !best.f.is_finite() {
        let reason = last_err.map_or_else(|| "likelihood not finite".to_string(), |e| e.to_string());
        return Err(Error::Fit {
            model: kind.to_string(),
            reason,
        });
    }
    let vals: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let hp_hat = assemble(kind, &vals, sigma_e2);
    let (loglik, final_state) = model
        .log_likelihood(records, &hp_hat, kind, init)
        .map_err(|e| Error::Fit {
            model: kind.to_string(),
            reason: e.to_string(),
        })?;
    log::debug!("fit {kind}: L = {:.4}, {n_evals} evaluations", to_f64(loglik));
    Ok(FitResult {
        kind,
        hp_hat,
        loglik,
        n_evals,
        converged: any_converged,
        final_state,
        records_digest: digest(records, init),
    })
}

/// `2T = 2(L_ext − L_null)` with its Wilks p-value; significant when `p ≤ alpha`.
pub fn llr_statistic<T: Real>(ext: &FitResult<T>, null: &FitResult<T>, alpha: f64) -> Result<SignificanceResult> {
    if null.kind != CovarianceModelKind::M0 {
        return Err(Error::Usage("the null fit must use M0".into()));
    }
    if ext.records_digest != null.records_digest {
        return Err(Error::Usage("fits were computed on different records".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha must lie in (0, 1]"));
    }
    let statistic_2t = 2.0 * (to_f64(ext.loglik) - to_f64(null.loglik));
    let dof = ext.kind.extra_params();
    let p_value = if dof == 0 {
        1.0
    } else {
        chi2_sf(statistic_2t.max(0.0), dof)?
    };
    Ok(SignificanceResult {
        kind: ext.kind,
        statistic_2t,
        dof,
        p_value,
        significant: p_value <= alpha,
    })
}

/// Fits `kinds` in order, seeding each extension from earlier optima so that
/// a nesting model starts no worse than the models it nests.
#[allow(clippy::too_many_arguments)]
pub fn fit_family<T: Real>(
    model: &MeasurementModel<T>,
    records: &[PingRecord<T>],
    init: &FilterState<T>,
    sigma_e2: T,
    init_hp: &Hyperparams<T>,
    kinds: &[CovarianceModelKind],
    opts: &FitOptions,
) -> Result<Vec<FitResult<T>>> {
    use CovarianceModelKind::*;
    let mut done: Vec<FitResult<T>> = Vec::with_capacity(kinds.len());
    let mut order: Vec<CovarianceModelKind> = kinds.to_vec();
    order.sort_by_key(|k| k.extra_params());
    for kind in order {
        let mut seeds = Vec::new();
        for prev in &done {
            let p = prev.hp_hat;
            let nested = matches!((prev.kind, kind), (M0, Mc | Md | Mcd) | (Mc | Md, Mcd));
            if nested {
                seeds.push(Hyperparams {
                    sigma_c2: if prev.kind.has_path_doppler() { p.sigma_c2 } else { init_hp.sigma_c2 },
                    sigma_d2: if prev.kind.has_common_doppler() { p.sigma_d2 } else { init_hp.sigma_d2 },
                    ..p
                });
                if prev.kind != M0 {
                    seeds.push(p);
                }
            }
        }
        let r = fit(model, records, init, kind, sigma_e2, init_hp, &seeds, opts)?;
        done.push(r);
    }
    let mut out = Vec::with_capacity(kinds.len());
    for k in kinds {
        let pos = done.iter().position(|f| f.kind == *k).expect("every kind was fitted");
        out.push(done[pos].clone());
    }
    Ok(out)
}

/// Fits M0 and every extension on the same records and tests each extension
/// against M0 at level `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn significance_test<T: Real>(
    model: &MeasurementModel<T>,
    records: &[PingRecord<T>],
    init: &FilterState<T>,
    sigma_e2: T,
    init_hp: &Hyperparams<T>,
    alpha: f64,
    extensions: &[CovarianceModelKind],
    opts: &FitOptions,
) -> Result<SignificanceReport<T>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha must lie in (0, 1]"));
    }
    let mut kinds = vec![CovarianceModelKind::M0];
    kinds.extend(extensions.iter().copied().filter(|k| *k != CovarianceModelKind::M0));
    let mut fits = fit_family(model, records, init, sigma_e2, init_hp, &kinds, opts)?;
    let null = fits.remove(0);
    let results = fits
        .iter()
        .map(|f| llr_statistic(f, &null, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(SignificanceReport { null, fits, results })
}
