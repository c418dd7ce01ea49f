//! Low-dimensional background parameterization (`a = Bθ`, `H = SB`) and the
//! four state-dependent measurement covariance models.
//!
//! Every model has the form `R = σ_e²·I + U·Ψ·Ψᵀ·Uᵀ` where `Ψ` is a thin
//! lag-domain factor built from the amplitudes `a`:
//!
//! * per-path Doppler: one column `σ_c·a_l·e_l` per active lag,
//! * common Doppler: a single column `σ_d·a`.
//!
//! The tracker works with `Ψ` directly; [`covariance`] materializes the full
//! `N × N` matrix for callers that need it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::signals::ConvolutionOperator;

/// Relative amplitude below which a lag is dropped from the per-path term.
const ACTIVE_LAG_REL: f64 = 1e-12;

/// Gaussian length scale factor: `σ_m = 0.42 / BW`.
pub const BASIS_SCALE_BW_PRODUCT: f64 = 0.42;

/// Which heteroscedastic terms enter the measurement covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceModelKind {
    M0,
    Mc,
    Md,
    Mcd,
}

impl CovarianceModelKind {
    pub const ALL: [CovarianceModelKind; 4] = [Self::M0, Self::Mc, Self::Md, Self::Mcd];

    /// Number of variances beyond σ_q² (the Wilks degrees of freedom against M0).
    pub fn extra_params(self) -> usize {
        match self {
            Self::M0 => 0,
            Self::Mc | Self::Md => 1,
            Self::Mcd => 2,
        }
    }

    pub fn has_path_doppler(self) -> bool {
        matches!(self, Self::Mc | Self::Mcd)
    }

    pub fn has_common_doppler(self) -> bool {
        matches!(self, Self::Md | Self::Mcd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::M0 => "m0",
            Self::Mc => "mc",
            Self::Md => "md",
            Self::Mcd => "mcd",
        }
    }
}

impl fmt::Display for CovarianceModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovarianceModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(Self::M0),
            "mc" => Ok(Self::Mc),
            "md" => Ok(Self::Md),
            "mcd" => Ok(Self::Mcd),
            other => Err(Error::Usage(format!("unknown model '{other}'"))),
        }
    }
}

/// Process, per-path Doppler, common Doppler and ambient noise variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<T> {
    pub sigma_q2: T,
    pub sigma_c2: T,
    pub sigma_d2: T,
    /// Known ambient noise variance; never learned.
    pub sigma_e2: T,
}

impl<T: Real> Hyperparams<T> {
    pub fn new(sigma_q2: T, sigma_c2: T, sigma_d2: T, sigma_e2: T) -> Result<Self> {
        let hp = Self {
            sigma_q2,
            sigma_c2,
            sigma_d2,
            sigma_e2,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.sigma_q2, self.sigma_c2, self.sigma_d2, self.sigma_e2];
        if vals.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::param("variances must be finite and non-negative"));
        }
        if self.sigma_e2 <= T::zero() {
            return Err(Error::param("ambient noise variance must be positive"));
        }
        Ok(())
    }

    /// Copy with the variances the model does not use set to zero.
    pub fn restricted_to(&self, kind: CovarianceModelKind) -> Self {
        Self {
            sigma_c2: if kind.has_path_doppler() { self.sigma_c2 } else { T::zero() },
            sigma_d2: if kind.has_common_doppler() { self.sigma_d2 } else { T::zero() },
            ..*self
        }
    }
}

/// How the Gaussian centers are laid over the delay grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterPlacement {
    /// `μ_m = (m + ½)·N_l·Δt/M`.
    #[default]
    Midpoints,
    /// `μ_m = m·(N_l − 1)·Δt/(M − 1)`, first and last lag included.
    Endpoints,
}

/// Gaussian delay dictionary `B` and measurement matrix `H = S·B`.
#[derive(Debug, Clone)]
pub struct ChannelBasis<T> {
    pub dt_s: f64,
    pub n_lags: usize,
    pub n_basis: usize,
    pub centers_s: Vec<f64>,
    pub scale_s: f64,
    pub b: DMatrix<T>,
    pub h: DMatrix<T>,
}

impl<T: Real> ChannelBasis<T> {
    pub fn n_samples(&self) -> usize {
        self.h.nrows()
    }

    /// `a = B·θ`.
    pub fn amplitudes(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        if theta.len() != self.n_basis {
            return Err(Error::dim(format!(
                "state has {} entries, basis has {}",
                theta.len(),
                self.n_basis
            )));
        }
        Ok(&self.b * theta)
    }
}

pub fn build_basis<T: Real>(
    dt_s: f64,
    n_lags: usize,
    n_basis: usize,
    bandwidth_hz: f64,
    s_op: &ConvolutionOperator<T>,
    placement: CenterPlacement,
) -> Result<ChannelBasis<T>> {
    if n_basis == 0 || n_basis > n_lags {
        return Err(Error::param(format!(
            "need 1 <= basis count ({n_basis}) <= lag count ({n_lags})"
        )));
    }
    if !(bandwidth_hz > 0.0) || !(dt_s > 0.0) {
        return Err(Error::param("bandwidth and sampling period must be positive"));
    }
    if s_op.n_lags() != n_lags {
        return Err(Error::dim("convolution operator lag count differs from basis"));
    }
    let scale_s = BASIS_SCALE_BW_PRODUCT / bandwidth_hz;
    let span = n_lags as f64 * dt_s;
    let centers_s: Vec<f64> = match placement {
        CenterPlacement::Midpoints => (0..n_basis)
            .map(|m| (m as f64 + 0.5) * span / n_basis as f64)
            .collect(),
        CenterPlacement::Endpoints if n_basis == 1 => vec![0.5 * (n_lags - 1) as f64 * dt_s],
        CenterPlacement::Endpoints => (0..n_basis)
            .map(|m| m as f64 * (n_lags - 1) as f64 * dt_s / (n_basis - 1) as f64)
            .collect(),
    };
    let b = DMatrix::from_fn(n_lags, n_basis, |l, m| {
        let d = l as f64 * dt_s - centers_s[m];
        lit((-d * d / (2.0 * scale_s * scale_s)).exp())
    });
    let mut h = DMatrix::zeros(s_op.n_rows(), n_basis);
    for m in 0..n_basis {
        let col = s_op.apply(&b.column(m).into_owned())?;
        h.set_column(m, &col);
    }
    Ok(ChannelBasis {
        dt_s,
        n_lags,
        n_basis,
        centers_s,
        scale_s,
        b,
        h,
    })
}

/// Free-function form of [`ChannelBasis::amplitudes`].
pub fn amplitudes_from_state<T: Real>(basis: &ChannelBasis<T>, theta: &DVector<T>) -> Result<DVector<T>> {
    basis.amplitudes(theta)
}

/// Lag-domain factor `Ψ` (`N_l × r`) with `R = σ_e²·I + U·Ψ·Ψᵀ·Uᵀ`.
///
/// `r` is zero for M0, one for Md, the number of active lags for Mc, and
/// active lags + 1 for Mcd (common-Doppler column last).
pub fn covariance_factor<T: Real>(
    kind: CovarianceModelKind,
    hp: &Hyperparams<T>,
    amplitudes: &DVector<T>,
) -> Result<DMatrix<T>> {
    hp.validate()?;
    let n_lags = amplitudes.len();
    let mut cols: Vec<DVector<T>> = Vec::new();
    if kind.has_path_doppler() && hp.sigma_c2 > T::zero() {
        let sc = hp.sigma_c2.sqrt();
        let amax = amplitudes.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let floor = amax * lit(ACTIVE_LAG_REL);
        for (l, &a) in amplitudes.iter().enumerate() {
            if a.abs() > floor && a != T::zero() {
                let mut c = DVector::zeros(n_lags);
                c[l] = sc * a;
                cols.push(c);
            }
        }
    }
    if kind.has_common_doppler() && hp.sigma_d2 > T::zero() {
        cols.push(amplitudes * hp.sigma_d2.sqrt());
    }
    Ok(if cols.is_empty() {
        DMatrix::zeros(n_lags, 0)
    } else {
        DMatrix::from_columns(&cols)
    })
}

/// Dense `N × N` measurement covariance `R(θ)` for the given model.
pub fn covariance<T: Real>(
    kind: CovarianceModelKind,
    hp: &Hyperparams<T>,
    basis: &ChannelBasis<T>,
    u_op: &ConvolutionOperator<T>,
    theta: &DVector<T>,
) -> Result<DMatrix<T>> {
    let a = basis.amplitudes(theta)?;
    let psi = covariance_factor(kind, hp, &a)?;
    let n = u_op.n_rows();
    let mut r = DMatrix::identity(n, n) * hp.sigma_e2;
    if psi.ncols() > 0 {
        let mut v = DMatrix::zeros(n, psi.ncols());
        for j in 0..psi.ncols() {
            v.set_column(j, &u_op.apply(&psi.column(j).into_owned())?);
        }
        r.gemm(T::one(), &v, &v.transpose(), T::one());
    }
    Ok(r)
}
