//! Extended Kalman filter for the basis coefficients with the measurement
//! covariance evaluated at the predicted state, plus the log marginal
//! likelihood accumulated from the innovations.
//!
//! Two numerically equivalent measurement updates are provided:
//!
//! * [`Backend::Structured`] (default) never forms an `N × N` matrix. It
//!   exploits `Σ_k = σ_e²I + UΨΨᵀUᵀ + HPHᵀ` and applies the Woodbury identity
//!   twice, first in the lag domain (rank of `Ψ`) and then in the state
//!   domain (rank `M`), using Gram matrices precomputed once per model.
//! * [`Backend::Dense`] builds `Σ_k` explicitly and takes its Cholesky
//!   factor. It is the reference the structured path is tested against.
//!
//! The log-likelihood increment omits the `−(N/2)·log 2π` constant.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::channel::{covariance, covariance_factor, ChannelBasis, CovarianceModelKind, Hyperparams};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::signals::ConvolutionOperator;

/// Posterior mean and covariance of the basis coefficients after ping `ping_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    pub ping_index: usize,
}

impl<T: Real> FilterState<T> {
    /// Prior `N(prior_mean, prior_var·I)` at ping 0.
    pub fn new(prior_mean: DVector<T>, prior_var: T) -> Result<Self> {
        if !(prior_var > T::zero()) || !prior_var.is_finite() {
            return Err(Error::param("prior variance must be positive"));
        }
        let m = prior_mean.len();
        Ok(Self {
            mean: prior_mean,
            cov: DMatrix::identity(m, m) * prior_var,
            ping_index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One received ping window.
#[derive(Debug, Clone, PartialEq)]
pub struct PingRecord<T: Real> {
    pub y: DVector<T>,
    pub ping_index: usize,
}

impl<T: Real> PingRecord<T> {
    pub fn new(y: DVector<T>, ping_index: usize) -> Self {
        Self { y, ping_index }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput<T: Real> {
    pub state: FilterState<T>,
    pub predicted_mean: DVector<T>,
    /// `ν_k = y_k − Hθ̂_{k|k−1} − offset`.
    pub innovation: DVector<T>,
    /// `ν_kᵀ Σ_k⁻¹ ν_k`.
    pub quad_form: T,
    /// `log|Σ_k|`.
    pub log_det: T,
    /// `−½(quad_form + log_det)`.
    pub loglik_increment: T,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T: Real> {
    pub steps: Vec<StepOutput<T>>,
    pub total_loglik: T,
}

impl<T: Real> RunOutput<T> {
    pub fn final_state(&self) -> &FilterState<T> {
        &self.steps.last().expect("run output is never empty").state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Structured,
    Dense,
}

/// `H`, `U` and the Gram matrices the structured update needs.
#[derive(Debug, Clone)]
pub struct MeasurementModel<T: Real> {
    basis: ChannelBasis<T>,
    u_op: ConvolutionOperator<T>,
    hth: DMatrix<T>,
    htu: DMatrix<T>,
    utu: DMatrix<T>,
    backend: Backend,
}

impl<T: Real> MeasurementModel<T> {
    pub fn new(basis: ChannelBasis<T>, u_op: ConvolutionOperator<T>) -> Result<Self> {
        if basis.h.nrows() != u_op.n_rows() {
            return Err(Error::dim("H and U disagree on the number of samples"));
        }
        if basis.b.nrows() != u_op.n_lags() || basis.b.ncols() != basis.h.ncols() {
            return Err(Error::dim("B must be n_lags × n_basis and match H"));
        }
        let hth = basis.h.tr_mul(&basis.h);
        let mut htu = DMatrix::zeros(basis.h.ncols(), u_op.n_lags());
        for l in 0..u_op.n_lags() {
            htu.set_column(l, &basis.h.tr_mul(&u_op.column(l)));
        }
        let utu = u_op.cross_gram(&u_op)?;
        Ok(Self {
            basis,
            u_op,
            hth,
            htu,
            utu,
            backend: Backend::Structured,
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn basis(&self) -> &ChannelBasis<T> {
        &self.basis
    }

    pub fn u_op(&self) -> &ConvolutionOperator<T> {
        &self.u_op
    }

    pub fn n_samples(&self) -> usize {
        self.basis.h.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.h.ncols()
    }

    /// Regularized least-squares start from a single ping:
    /// `θ̂ = (HᵀH + εI)⁻¹Hᵀy` with `ε = 10⁻⁶·tr(HᵀH)/M` and prior variance
    /// `10·(max|θ̂| + 1)²`.
    pub fn warm_start(&self, y: &DVector<T>) -> Result<FilterState<T>> {
        self.check_len(y, 0)?;
        let m = self.n_basis();
        let eps = self.hth.trace() * lit(1e-6) / lit(m as f64);
        let mut a = self.hth.clone();
        for i in 0..m {
            a[(i, i)] += eps;
        }
        let chol = Cholesky::new(a).ok_or_else(|| Error::numerical(0, "warm start normal equations"))?;
        let mean = chol.solve(&self.basis.h.tr_mul(y));
        let peak = mean.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let var = lit::<T>(10.0) * (peak + T::one()) * (peak + T::one());
        FilterState::new(mean, var)
    }

    fn check_len(&self, y: &DVector<T>, ping: usize) -> Result<()> {
        if y.len() != self.n_samples() {
            return Err(Error::dim(format!(
                "ping {ping}: expected {} samples, got {}",
                self.n_samples(),
                y.len()
            )));
        }
        Ok(())
    }

    /// Dense `Σ_k = H·P_{k|k−1}·Hᵀ + R(θ̂_{k|k−1})` for a predicted state.
    pub fn innovation_covariance(
        &self,
        pred_mean: &DVector<T>,
        pred_cov: &DMatrix<T>,
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
    ) -> Result<DMatrix<T>> {
        let r = covariance(kind, hp, &self.basis, &self.u_op, pred_mean)?;
        let hp_ = &self.basis.h * pred_cov;
        let mut sigma = r;
        sigma.gemm(T::one(), &hp_, &self.basis.h.transpose(), T::one());
        Ok(symmetrized(sigma))
    }

    /// One time update followed by one measurement update.
    pub fn step(
        &self,
        state: &FilterState<T>,
        record: &PingRecord<T>,
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
        offset: Option<&DVector<T>>,
    ) -> Result<StepOutput<T>> {
        let ping = record.ping_index;
        self.check_len(&record.y, ping)?;
        if state.dim() != self.n_basis() {
            return Err(Error::dim("filter state dimension differs from basis"));
        }
        hp.validate()?;
        let m = self.n_basis();
        let pred_mean = state.mean.clone();
        let mut pred_cov = state.cov.clone();
        for i in 0..m {
            pred_cov[(i, i)] += hp.sigma_q2;
        }

        let mut innovation = &record.y - &self.basis.h * &pred_mean;
        if let Some(off) = offset {
            self.check_len(off, ping)?;
            innovation -= off;
        }

        let upd = match self.backend {
            Backend::Structured => self.update_structured(&pred_mean, &pred_cov, &innovation, hp, kind, ping)?,
            Backend::Dense => self.update_dense(&pred_mean, &pred_cov, &innovation, hp, kind, ping)?,
        };
        if !upd.quad.is_finite() || !upd.log_det.is_finite() {
            return Err(Error::numerical(ping, "non-finite likelihood terms"));
        }
        let loglik_increment = -(upd.quad + upd.log_det) * lit(0.5);
        Ok(StepOutput {
            state: FilterState {
                mean: upd.mean,
                cov: upd.cov,
                ping_index: ping,
            },
            predicted_mean: pred_mean,
            innovation,
            quad_form: upd.quad,
            log_det: upd.log_det,
            loglik_increment,
        })
    }

    fn update_dense(
        &self,
        pred_mean: &DVector<T>,
        pred_cov: &DMatrix<T>,
        nu: &DVector<T>,
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
        ping: usize,
    ) -> Result<Update<T>> {
        let h = &self.basis.h;
        let r = covariance(kind, hp, &self.basis, &self.u_op, pred_mean)?;
        let hp_ = h * pred_cov;
        let mut sigma = r.clone();
        sigma.gemm(T::one(), &hp_, &h.transpose(), T::one());
        let chol = Cholesky::new(symmetrized(sigma))
            .ok_or_else(|| Error::numerical(ping, "innovation covariance not positive definite"))?;
        let sinv_nu = chol.solve(nu);
        let quad = nu.dot(&sinv_nu);
        let log_det = chol_log_det(&chol);
        // K = P Hᵀ Σ⁻¹
        let gain = chol.solve(&hp_).transpose();
        let mean = pred_mean + &gain * nu;
        let m = pred_mean.len();
        let ikh = DMatrix::identity(m, m) - &gain * h;
        let cov = &ikh * pred_cov * ikh.transpose() + &gain * r * gain.transpose();
        Ok(Update {
            mean,
            cov: symmetrized(cov),
            quad,
            log_det,
        })
    }

    fn update_structured(
        &self,
        pred_mean: &DVector<T>,
        pred_cov: &DMatrix<T>,
        nu: &DVector<T>,
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
        ping: usize,
    ) -> Result<Update<T>> {
        let h = &self.basis.h;
        let n = self.n_samples();
        let m = self.n_basis();
        let se2 = hp.sigma_e2;
        let a = &self.basis.b * pred_mean;
        let psi = covariance_factor(kind, hp, &a)?;
        let rank = psi.ncols();

        // C = HᵀR⁻¹H, b = HᵀR⁻¹ν, q = νᵀR⁻¹ν
        let h_nu = h.tr_mul(nu);
        let nu_nu = nu.dot(nu);
        let (c, b, q, log_det_r) = if rank == 0 {
            (
                &self.hth / se2,
                h_nu / se2,
                nu_nu / se2,
                se2.ln() * lit(n as f64),
            )
        } else {
            let u_nu = self.u_op.apply_transpose(nu)?;
            let mut z = psi.tr_mul(&(&self.utu * &psi));
            for i in 0..rank {
                z[(i, i)] += se2;
            }
            let zc = Cholesky::new(symmetrized(z))
                .ok_or_else(|| Error::numerical(ping, "lag-domain covariance factor not positive definite"))?;
            let f_psi = &self.htu * &psi;
            let w_nu = psi.tr_mul(&u_nu);
            let zinv_ft = zc.solve(&f_psi.transpose());
            let zinv_w = zc.solve(&w_nu);
            let c = (&self.hth - &f_psi * zinv_ft) / se2;
            let b = (h_nu - &f_psi * zinv_w.clone()) / se2;
            let q = (nu_nu - w_nu.dot(&zinv_w)) / se2;
            let log_det_r = se2.ln() * lit((n - rank) as f64) + chol_log_det(&zc);
            (symmetrized(c), b, q, log_det_r)
        };

        let pc = cholesky_with_jitter(pred_cov)
            .ok_or_else(|| Error::numerical(ping, "predicted covariance not positive definite"))?;
        let l = pc.l();
        let cl = &c * &l;
        let mut s = l.tr_mul(&cl);
        for i in 0..m {
            s[(i, i)] += T::one();
        }
        let sc = Cholesky::new(symmetrized(s))
            .ok_or_else(|| Error::numerical(ping, "innovation covariance not positive definite"))?;
        let lb = l.tr_mul(&b);
        let sinv_lb = sc.solve(&lb);
        let quad = q - lb.dot(&sinv_lb);
        let log_det = log_det_r + chol_log_det(&sc);

        // With P = LLᵀ and S = I + LᵀCL: (I − KH)L = L·S⁻¹ and Kν = L·S⁻¹·Lᵀb,
        // so both Joseph terms are congruences of L·S⁻¹ and stay PSD.
        let x = sc.solve(&l.transpose()).transpose();
        let mean = pred_mean + &x * lb;
        let krk = &x * l.tr_mul(&cl) * x.transpose();
        let cov = &x * x.transpose() + krk;
        Ok(Update {
            mean,
            cov: symmetrized(cov),
            quad,
            log_det,
        })
    }

    /// Filters every record in order and sums the log-likelihood increments.
    pub fn run(
        &self,
        records: &[PingRecord<T>],
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
        init: &FilterState<T>,
        offsets: Option<&[DVector<T>]>,
    ) -> Result<RunOutput<T>> {
        if records.is_empty() {
            return Err(Error::Usage("cannot filter an empty ping sequence".into()));
        }
        if let Some(offs) = offsets {
            if offs.len() != records.len() {
                return Err(Error::dim("one offset per record required"));
            }
        }
        let mut steps = Vec::with_capacity(records.len());
        let mut total = T::zero();
        let mut state = init.clone();
        for (i, rec) in records.iter().enumerate() {
            let out = self.step(&state, rec, hp, kind, offsets.map(|o| &o[i]))?;
            total += out.loglik_increment;
            state = out.state.clone();
            steps.push(out);
        }
        Ok(RunOutput {
            steps,
            total_loglik: total,
        })
    }

    /// Like [`run`](Self::run) without offsets, keeping only the final state.
    pub fn log_likelihood(
        &self,
        records: &[PingRecord<T>],
        hp: &Hyperparams<T>,
        kind: CovarianceModelKind,
        init: &FilterState<T>,
    ) -> Result<(T, FilterState<T>)> {
        if records.is_empty() {
            return Err(Error::Usage("cannot filter an empty ping sequence".into()));
        }
        let mut total = T::zero();
        let mut state = init.clone();
        for rec in records {
            let out = self.step(&state, rec, hp, kind, None)?;
            total += out.loglik_increment;
            state = out.state;
        }
        Ok((total, state))
    }
}

struct Update<T: Real> {
    mean: DVector<T>,
    cov: DMatrix<T>,
    quad: T,
    log_det: T,
}

pub(crate) fn symmetrized<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let t = m.transpose();
    (m + t) * lit::<T>(0.5)
}

pub(crate) fn chol_log_det<T: Real>(c: &Cholesky<T, Dyn>) -> T {
    let l = c.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * lit(2.0)
}

fn cholesky_with_jitter<T: Real>(p: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    if let Some(c) = Cholesky::new(p.clone()) {
        return Some(c);
    }
    let n = p.nrows();
    let scale = (p.trace() / lit(n.max(1) as f64)).abs().max(lit(1e-300));
    let mut jitter = scale * lit(1e-14);
    for _ in 0..6 {
        let mut q = p.clone();
        for i in 0..n {
            q[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(q) {
            return Some(c);
        }
        jitter *= lit(100.0);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_basis, CenterPlacement};
    use crate::signals::SampledWaveform;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_model() -> MeasurementModel<f64> {
        let one = SampledWaveform::new(vec![1.0], 1.0).unwrap();
        let s = ConvolutionOperator::new(one.clone(), 1, 1).unwrap();
        let u = ConvolutionOperator::new(one, 1, 1).unwrap();
        let basis = ChannelBasis {
            dt_s: 1.0,
            n_lags: 1,
            n_basis: 1,
            centers_s: vec![0.0],
            scale_s: 1.0,
            b: DMatrix::from_element(1, 1, 1.0),
            h: s.apply(&DVector::from_element(1, 1.0)).map(|c| DMatrix::from_column_slice(1, 1, c.as_slice())).unwrap(),
        };
        MeasurementModel::new(basis, u).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, n_lags: usize, m: usize) -> MeasurementModel<f64> {
        let k: Vec<f64> = (0..n / 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let uk: Vec<f64> = (0..n / 2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = ConvolutionOperator::new(SampledWaveform::new(k, 1e-4).unwrap(), n, n_lags).unwrap();
        let u = ConvolutionOperator::new(SampledWaveform::new(uk, 1e-4).unwrap(), n, n_lags).unwrap();
        let basis = build_basis(1e-4, n_lags, m, 4000.0, &s, CenterPlacement::Midpoints).unwrap();
        MeasurementModel::new(basis, u).unwrap()
    }

    #[test]
    fn scalar_kalman_hand_computation() {
        let model = scalar_model();
        let hp = Hyperparams::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let init = FilterState::new(DVector::zeros(1), 1.0).unwrap();
        let rec = PingRecord::new(DVector::from_element(1, 2.0), 1);
        for backend in [Backend::Structured, Backend::Dense] {
            let model = model.clone().with_backend(backend);
            let out = model.step(&init, &rec, &hp, CovarianceModelKind::M0, None).unwrap();
            assert_relative_eq!(out.state.mean[0], 1.0, epsilon = 1e-14);
            assert_relative_eq!(out.state.cov[(0, 0)], 0.5, epsilon = 1e-14);
            let expect = -0.5 * (4.0 / 2.0 + 2f64.ln());
            assert_relative_eq!(out.loglik_increment, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_innovation_leaves_mean_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 24, 8, 3);
        let init = FilterState::new(DVector::from_vec(vec![0.5, -1.0, 2.0]), 2.0).unwrap();
        let hp = Hyperparams::new(0.1, 1e-3, 2e-3, 0.5).unwrap();
        let pred = &model.basis().h * &init.mean;
        let rec = PingRecord::new(pred.clone(), 1);
        let out = model.step(&init, &rec, &hp, CovarianceModelKind::Mcd, Some(&DVector::zeros(24))).unwrap();
        assert!((out.state.mean.clone() - init.mean.clone()).amax() < 1e-12);
        assert!(out.innovation.amax() < 1e-12);
    }

    #[test]
    fn structured_matches_dense_for_every_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..8 {
            let model = random_model(&mut rng, 32, 12, 4);
            let dense = model.clone().with_backend(Backend::Dense);
            let hp = Hyperparams::new(0.05, 0.3, 0.2, 0.8).unwrap();
            let mean = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let init = FilterState::new(mean, 1.5).unwrap();
            let y = DVector::from_fn(32, |_, _| rng.random_range(-3.0..3.0));
            let off = DVector::from_fn(32, |_, _| rng.random_range(-0.5..0.5));
            let rec = PingRecord::new(y, trial + 1);
            for kind in CovarianceModelKind::ALL {
                let a = model.step(&init, &rec, &hp, kind, Some(&off)).unwrap();
                let b = dense.step(&init, &rec, &hp, kind, Some(&off)).unwrap();
                assert!((a.state.mean.clone() - b.state.mean.clone()).amax() < 1e-9, "{kind}");
                assert!((a.state.cov.clone() - b.state.cov.clone()).amax() < 1e-9, "{kind}");
                assert_relative_eq!(a.quad_form, b.quad_form, max_relative = 1e-9);
                assert_relative_eq!(a.log_det, b.log_det, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn loglik_matches_dense_factor_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_model(&mut rng, 20, 6, 3);
        let hp = Hyperparams::new(0.01, 0.2, 0.1, 1.0).unwrap();
        let init = FilterState::new(DVector::from_vec(vec![1.0, 0.0, -1.0]), 1.0).unwrap();
        let rec = PingRecord::new(DVector::from_fn(20, |i, _| (i as f64 * 0.3).cos()), 1);
        let out = model.step(&init, &rec, &hp, CovarianceModelKind::Mcd, None).unwrap();
        let mut pred_cov = init.cov.clone();
        for i in 0..3 {
            pred_cov[(i, i)] += hp.sigma_q2;
        }
        let sigma = model
            .innovation_covariance(&out.predicted_mean, &pred_cov, &hp, CovarianceModelKind::Mcd)
            .unwrap();
        let chol = Cholesky::new(sigma).unwrap();
        let quad = out.innovation.dot(&chol.solve(&out.innovation));
        let logdet = chol_log_det(&chol);
        assert_relative_eq!(out.quad_form, quad, max_relative = 1e-10);
        assert_relative_eq!(out.log_det, logdet, max_relative = 1e-10);
        assert_eq!(out.loglik_increment, -0.5 * (out.quad_form + out.log_det));
    }

    #[test]
    fn posterior_trace_shrinks_and_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = random_model(&mut rng, 40, 10, 5);
        let hp = Hyperparams::new(0.02, 0.1, 0.1, 0.3).unwrap();
        let mut state = FilterState::new(DVector::from_element(5, 0.3), 3.0).unwrap();
        for k in 1..=15 {
            let rec = PingRecord::new(DVector::from_fn(40, |_, _| rng.random_range(-2.0..2.0)), k);
            let prior_trace = state.cov.trace() + 5.0 * hp.sigma_q2;
            let out = model.step(&state, &rec, &hp, CovarianceModelKind::Mcd, None).unwrap();
            assert!(out.state.cov.trace() <= prior_trace + 1e-12);
            let asym = (out.state.cov.clone() - out.state.cov.transpose()).amax();
            assert!(asym <= 1e-12 * out.state.cov.amax());
            state = out.state;
        }
    }

    #[test]
    fn run_sums_increments_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 16, 6, 2);
        let hp = Hyperparams::new(0.01, 0.0, 0.0, 1.0).unwrap();
        let recs: Vec<_> = (1..=6)
            .map(|k| PingRecord::new(DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0)), k))
            .collect();
        let init = FilterState::new(DVector::zeros(2), 10.0).unwrap();
        let a = model.run(&recs, &hp, CovarianceModelKind::M0, &init, None).unwrap();
        let b = model.run(&recs, &hp, CovarianceModelKind::M0, &init, None).unwrap();
        assert_eq!(a.total_loglik.to_bits(), b.total_loglik.to_bits());
        let sum: f64 = a.steps.iter().map(|s| s.loglik_increment).sum();
        assert_relative_eq!(a.total_loglik, sum, epsilon = 1e-12);
        let single = model.run(&recs[..1], &hp, CovarianceModelKind::M0, &init, None).unwrap();
        assert_eq!(single.total_loglik, single.steps[0].loglik_increment);
        let (ll, last) = model.log_likelihood(&recs, &hp, CovarianceModelKind::M0, &init).unwrap();
        assert_eq!(ll, a.total_loglik);
        assert_eq!(&last, a.final_state());
    }

    #[test]
    fn errors_carry_ping_index_and_validate_inputs() {
        let model = scalar_model();
        assert!(matches!(FilterState::<f64>::new(DVector::zeros(1), 0.0), Err(Error::Parameter(_))));
        let hp = Hyperparams::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let init = FilterState::new(DVector::zeros(1), 1.0).unwrap();
        let bad = PingRecord::new(DVector::zeros(2), 4);
        assert!(matches!(
            model.step(&init, &bad, &hp, CovarianceModelKind::M0, None),
            Err(Error::Dimension(_))
        ));
        assert!(model.run(&[], &hp, CovarianceModelKind::M0, &init, None).is_err());
        let rec = PingRecord::new(DVector::from_element(1, f64::INFINITY), 9);
        match model.step(&init, &rec, &hp, CovarianceModelKind::M0, None) {
            Err(Error::Numerical { ping, .. }) => assert_eq!(ping, 9),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_solves_regularized_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_model(&mut rng, 30, 10, 4);
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let st = model.warm_start(&y).unwrap();
        let h = &model.basis().h;
        let hth = h.tr_mul(h);
        let eps = 1e-6 * hth.trace() / 4.0;
        let a = hth + DMatrix::identity(4, 4) * eps;
        let resid = a * &st.mean - h.tr_mul(&y);
        assert!(resid.amax() < 1e-9);
        let peak = st.mean.amax();
        assert_relative_eq!(st.cov[(0, 0)], 10.0 * (peak + 1.0).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn single_precision_step() {
        let one = SampledWaveform::new(vec![1.0f32], 1.0).unwrap();
        let s = ConvolutionOperator::new(one.clone(), 1, 1).unwrap();
        let u = ConvolutionOperator::new(one, 1, 1).unwrap();
        let basis = ChannelBasis {
            dt_s: 1.0,
            n_lags: 1,
            n_basis: 1,
            centers_s: vec![0.0],
            scale_s: 1.0,
            b: DMatrix::from_element(1, 1, 1.0f32),
            h: DMatrix::from_element(1, 1, 1.0f32),
        };
        let _ = s;
        let model = MeasurementModel::new(basis, u).unwrap();
        let hp = Hyperparams::new(0.0f32, 0.0, 0.0, 1.0).unwrap();
        let init = FilterState::new(DVector::zeros(1), 1.0f32).unwrap();
        let out = model
            .step(&init, &PingRecord::new(DVector::from_element(1, 2.0f32), 1), &hp, CovarianceModelKind::M0, None)
            .unwrap();
        assert!((out.state.mean[0] - 1.0).abs() < 1e-6);
    }
}
