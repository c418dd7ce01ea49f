//! Independent reference implementations used by the integration tests.
//! Everything here is dense and straightforward; none of it calls into the
//! structured code paths under test.

#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};

/// Dense `N × N_l` Toeplitz matrix `[X]_{n,l} = x[n − l]`, zero outside the kernel.
pub fn dense_toeplitz(kernel: &[f64], n_rows: usize, n_lags: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_rows, n_lags, |n, l| {
        if n >= l && n - l < kernel.len() {
            kernel[n - l]
        } else {
            0.0
        }
    })
}

/// Gaussian dictionary with cell-midpoint centers.
pub fn dense_basis(n_lags: usize, n_basis: usize, dt: f64, bw: f64) -> DMatrix<f64> {
    let sigma = 0.42 / bw;
    let span = n_lags as f64 * dt;
    DMatrix::from_fn(n_lags, n_basis, |l, m| {
        let mu = (m as f64 + 0.5) * span / n_basis as f64;
        let d = l as f64 * dt - mu;
        (-d * d / (2.0 * sigma * sigma)).exp()
    })
}

/// `R = σ_e² I + σ_c² U diag(a)² Uᵀ + σ_d² U a aᵀ Uᵀ`, `a = Bθ`, built term by term.
pub fn dense_covariance(u: &DMatrix<f64>, b: &DMatrix<f64>, theta: &DVector<f64>, c2: f64, d2: f64, e2: f64) -> DMatrix<f64> {
    let n = u.nrows();
    let a = b * theta;
    let mut r = DMatrix::identity(n, n) * e2;
    let diag = DMatrix::from_diagonal(&a.map(|v| v * v));
    r += u * diag * u.transpose() * c2;
    let ua = u * &a;
    r += &ua * ua.transpose() * d2;
    r
}

/// Textbook linear Kalman filter for a random-walk state with `R = σ_e² I`.
pub struct KfStep {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub loglik: f64,
}

pub fn kalman_m0(
    h: &DMatrix<f64>,
    ys: &[DVector<f64>],
    m0: &DVector<f64>,
    p0: &DMatrix<f64>,
    q: f64,
    e2: f64,
) -> Vec<KfStep> {
    let m = h.ncols();
    let n = h.nrows();
    let mut mean = m0.clone();
    let mut cov = p0.clone();
    let mut out = Vec::new();
    for y in ys {
        let p_pred = &cov + DMatrix::identity(m, m) * q;
        let s = h * &p_pred * h.transpose() + DMatrix::identity(n, n) * e2;
        let s_inv = s.clone().try_inverse().expect("innovation covariance invertible");
        let k = &p_pred * h.transpose() * &s_inv;
        let nu = y - h * &mean;
        let quad = (nu.transpose() * &s_inv * &nu)[(0, 0)];
        let log_det = s.determinant().ln();
        mean = &mean + &k * &nu;
        cov = (DMatrix::identity(m, m) - &k * h) * &p_pred;
        out.push(KfStep {
            mean: mean.clone(),
            cov: cov.clone(),
            loglik: -0.5 * (quad + log_det),
        });
    }
    out
}

/// Joint Gaussian log-density (without the 2π term) of stacked pings under a
/// random walk started from `N(m0, p0)`:
/// `Cov(y_i, y_j) = H (P0 + min(i, j)·q I) Hᵀ + δ_ij σ_e² I`, pings counted from 1.
pub fn batch_loglik(h: &DMatrix<f64>, ys: &[DVector<f64>], m0: &DVector<f64>, p0: &DMatrix<f64>, q: f64, e2: f64) -> f64 {
    let n = h.nrows();
    let m = h.ncols();
    let k = ys.len();
    let mut cov = DMatrix::zeros(n * k, n * k);
    let mut mean = DVector::zeros(n * k);
    let mut y = DVector::zeros(n * k);
    for i in 0..k {
        mean.rows_mut(i * n, n).copy_from(&(h * m0));
        y.rows_mut(i * n, n).copy_from(&ys[i]);
        for j in 0..k {
            let steps = (i.min(j) + 1) as f64;
            let mut block = h * (p0 + DMatrix::identity(m, m) * (steps * q)) * h.transpose();
            if i == j {
                block += DMatrix::identity(n, n) * e2;
            }
            cov.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
    }
    let chol = Cholesky::new(cov).expect("joint covariance positive definite");
    let r = &y - &mean;
    let quad = r.dot(&chol.solve(&r));
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (quad + log_det)
}

/// `P(χ²_k > x)` by composite Simpson integration of the density on `[0, x]`
/// (with the substitution `t = s²` to remove the `k = 1` singularity).
pub fn chi2_sf_numeric(x: f64, dof: usize) -> f64 {
    let k = dof as f64;
    let norm = 2f64.powf(k / 2.0) * gamma(k / 2.0);
    // ∫_0^x t^{k/2-1} e^{-t/2} dt = ∫_0^{√x} 2 s^{k-1} e^{-s²/2} ds
    let f = |s: f64| 2.0 * s.powf(k - 1.0) * (-s * s / 2.0).exp();
    let b = x.sqrt();
    let n = 20_000;
    let h = b / n as f64;
    let mut acc = f(0.0) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    1.0 - acc * h / 3.0 / norm
}

/// Lanczos approximation of Γ(z) for z > 0.
pub fn gamma(z: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * z).sin() * gamma(1.0 - z));
    }
    let z = z - 1.0;
    let mut x = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        x += g / (z + i as f64);
    }
    let t = z + 7.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * x
}

/// Band-limited reconstruction of `x` at fractional sample position `t`,
/// Hann-windowed sinc with half-width `half` samples.
pub fn sinc_interp(x: &[f64], t: f64, half: usize) -> f64 {
    let c = t.floor() as isize;
    let mut acc = 0.0;
    for j in (c - half as isize + 1)..=(c + half as isize) {
        if j < 0 || j as usize >= x.len() {
            continue;
        }
        let d = t - j as f64;
        if d.abs() >= half as f64 {
            continue;
        }
        let sinc = if d == 0.0 { 1.0 } else { (std::f64::consts::PI * d).sin() / (std::f64::consts::PI * d) };
        let w = 0.5 * (1.0 + (std::f64::consts::PI * d / half as f64).cos());
        acc += x[j as usize] * sinc * w;
    }
    acc
}

/// `s(β·nΔt)` for `n = 0..len` from a 16× oversampled copy of `s`, reconstructed
/// by windowed-sinc interpolation on the fine grid. `s_fine[j] = s(jΔt/16)`.
pub fn time_scaled_oracle(s_fine: &[f64], beta: f64, len: usize) -> Vec<f64> {
    (0..len).map(|n| sinc_interp(s_fine, 16.0 * beta * n as f64, 64)).collect()
}

/// Deterministic pseudo-random stream for building test systems.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(1e-300);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
