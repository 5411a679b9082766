//! Spectral factorization.
//!
//! * [`scalar_spectral_factor`]: minimum-phase FIR g with |g(e^{jω})|² ≈ s(ω)
//!   by the cepstral (Kolmogorov) method.
//! * [`fit_rational_magnitude`]: all-pole fit by Yule–Walker equations on the
//!   autocorrelation implied by s.
//! * [`matrix_canonical_factor`]: P(e^{jω}) = L(e^{jω}) Pe L(e^{jω})* with L
//!   causal, monic and causally invertible, from the multivariate innovations
//!   recursion on the banded autocovariance sequence of P.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, fft, ifft, trapezoid_weights, CMat, RMat, J};
use crate::lti::{RationalFilter, SpectrumGrid, TransferMatrix};

/// Relative floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Largest zero radius allowed in a returned minimum-phase factor.
pub const MAX_ZERO_RADIUS: f64 = 1.0 - 1e-6;
/// Default FIR order for scalar factors.
pub const DEFAULT_FACTOR_ORDER: usize = 40;

/// Nonnegative samples s(ω_q) on ω_q = qπ/N, q = 0..=N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSpectrum {
    samples: Vec<f64>,
}

impl ScalarSpectrum {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::Config("a spectrum needs at least three grid samples".into()));
        }
        if let Some((q, v)) = samples.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NotFactorizable {
                column: None,
                reason: format!("sample {q} is {v}; spectra must be finite and nonnegative"),
            });
        }
        Ok(Self { samples })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new((0..=n).map(|q| f(q as f64 * std::f64::consts::PI / n as f64)).collect())
    }

    /// |h(e^{jω})|² of a scalar filter.
    pub fn of_filter(h: &RationalFilter, n: usize) -> Self {
        Self::from_fn(n, |w| h.response(w).norm_sqr()).expect("squared magnitudes are valid")
    }

    pub fn n(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    pub fn trapezoid_mean(&self) -> f64 {
        crate::linalg::trapezoid_mean(&self.samples)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * c).collect(),
        }
    }

    /// Samples on all 2N points of the circle, even extension.
    fn full_circle(&self) -> Vec<f64> {
        let n = self.n();
        (0..2 * n)
            .map(|k| if k <= n { self.samples[k] } else { self.samples[2 * n - k] })
            .collect()
    }

    /// Relative L∞ mismatch max_q ||h(e^{jω_q})|² − s_q| / max s.
    pub fn relative_error(&self, h: &RationalFilter) -> f64 {
        let n = self.n();
        let scale = self.max().max(f64::MIN_POSITIVE);
        self.samples
            .iter()
            .enumerate()
            .map(|(q, s)| (h.response(q as f64 * std::f64::consts::PI / n as f64).norm_sqr() - s).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Log-integrability test: the share of samples below the log floor must
/// stay under 1% and the trapezoidal mean of ln max(s, floor) must be finite.
pub fn paley_wiener_check(s: &ScalarSpectrum) -> bool {
    let max = s.max();
    if !(max > 0.0) {
        return false;
    }
    let floor = LOG_FLOOR * max;
    let below = s.samples.iter().filter(|&&v| v < floor).count();
    if below as f64 >= 0.01 * s.samples.len() as f64 {
        return false;
    }
    let logs: Vec<f64> = s.samples.iter().map(|v| v.max(floor).ln()).collect();
    crate::linalg::trapezoid_mean(&logs).is_finite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFactor {
    pub filter: RationalFilter,
    /// Relative L∞ error of |g|² against the target on its grid.
    pub relative_error: f64,
}

/// Minimum-phase FIR factor of the given order.
///
/// The log-spectrum is transformed to the cepstrum, folded onto
/// nonnegative quefrencies and exponentiated back, which yields the
/// minimum-phase impulse response; it is truncated to `order + 1` taps. Any
/// zero the truncation leaves on or outside the unit circle is reflected to
/// 1/z̄ (with the matching gain correction) and kept at radius ≤ 1 − 10⁻⁶.
pub fn scalar_spectral_factor(s: &ScalarSpectrum, order: usize) -> Result<ScalarFactor> {
    if order == 0 {
        return Err(Error::Config("factor order must be at least 1".into()));
    }
    if !paley_wiener_check(s) {
        return Err(Error::NotFactorizable {
            column: None,
            reason: "the spectrum is not log-integrable".into(),
        });
    }
    let n = s.n();
    let m = 2 * n;
    let floor = LOG_FLOOR * s.max();
    let log_s: Vec<Complex64> = s
        .full_circle()
        .iter()
        .map(|v| Complex64::new(v.max(floor).ln(), 0.0))
        .collect();
    let ceps = ifft(&log_s);
    let mut folded = vec![Complex64::new(0.0, 0.0); m];
    folded[0] = Complex64::new(ceps[0].re / 2.0, 0.0);
    for k in 1..n {
        folded[k] = Complex64::new(ceps[k].re, 0.0);
    }
    folded[n] = Complex64::new(ceps[n].re / 2.0, 0.0);
    let log_g = fft(&folded);
    let g_freq: Vec<Complex64> = log_g.iter().map(|v| v.exp()).collect();
    let g = ifft(&g_freq);
    let taps: Vec<f64> = (0..=order.min(m - 1)).map(|k| g[k].re).collect();
    let filter = enforce_minimum_phase(&taps);
    let relative_error = s.relative_error(&filter);
    Ok(ScalarFactor {
        filter,
        relative_error,
    })
}

/// Reflects zeros of Σ b_k z^{-k} that lie on or outside the unit circle.
fn enforce_minimum_phase(taps: &[f64]) -> RationalFilter {
    let fir = RationalFilter::fir(taps.to_vec());
    let b = fir.numerator().to_vec();
    if b.len() <= 1 || fir.zero_radius() <= MAX_ZERO_RADIUS {
        return fir;
    }
    // Σ b_k z^{-k} = b_0 Π (1 − r_i z^{-1}).
    let roots = crate::linalg::poly_roots(&b);
    let mut gain = b[0];
    let mut adjusted = Vec::with_capacity(roots.len());
    for r in roots {
        let rad = r.norm();
        if rad > MAX_ZERO_RADIUS {
            // |1 − r e^{-jω}| = |r| |1 − (1/r̄) e^{-jω}|.
            gain *= rad;
            let reflected = 1.0 / r.conj();
            let new_rad = reflected.norm().min(MAX_ZERO_RADIUS);
            adjusted.push(reflected / reflected.norm() * new_rad);
        } else {
            adjusted.push(r);
        }
    }
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for r in adjusted {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (k, c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * r;
        }
        poly = next;
    }
    RationalFilter::fir(poly.iter().map(|c| gain * c.re).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFit {
    pub filter: RationalFilter,
    /// Relative RMS mismatch of |h|² against the target.
    pub residual: f64,
}

/// All-pole fit √E / A(z) of the given order by the Levinson–Durbin
/// recursion on the autocorrelation (inverse transform) of s.
pub fn fit_rational_magnitude(s: &ScalarSpectrum, order: usize) -> Result<RationalFit> {
    if let Some(q) = s.samples.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::FitFailed {
            condition: f64::INFINITY,
            reason: format!("target must be strictly positive; sample {q} is {}", s.samples[q]),
        });
    }
    let n = s.n();
    if order >= n {
        return Err(Error::FitFailed {
            condition: f64::INFINITY,
            reason: format!("order {order} needs a grid with more than {order} intervals"),
        });
    }
    let full: Vec<Complex64> = s.full_circle().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let r: Vec<f64> = ifft(&full).iter().take(order + 1).map(|c| c.re).collect();
    let (a, err) = levinson(&r, order)?;
    let filter = RationalFilter::new(vec![err.sqrt()], a)?;
    let w = trapezoid_weights(n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (q, sv) in s.samples.iter().enumerate() {
        let h2 = filter.response(q as f64 * std::f64::consts::PI / n as f64).norm_sqr();
        num += w[q] * (h2 - sv).powi(2);
        den += w[q] * sv * sv;
    }
    Ok(RationalFit {
        filter,
        residual: (num / den).sqrt(),
    })
}

/// Returns (1, a_1, …, a_p) with Σ a_k r_{|i−k|} = 0 for i = 1..p and the
/// final prediction error. Failures carry r_0 / error as the condition
/// diagnostic.
fn levinson(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    let r0 = r[0];
    if !(r0 > 0.0) {
        return Err(Error::FitFailed {
            condition: f64::INFINITY,
            reason: "zero-lag autocorrelation is not positive".into(),
        });
    }
    let mut a = vec![1.0];
    let mut err = r0;
    for p in 1..=order {
        let acc: f64 = (0..p).map(|k| a[k] * r[p - k]).sum();
        let refl = -acc / err;
        if !(refl.abs() < 1.0) {
            return Err(Error::FitFailed {
                condition: r0 / err,
                reason: format!("reflection coefficient {refl} at order {p}"),
            });
        }
        let mut next = a.clone();
        next.push(0.0);
        for k in 1..=p {
            next[k] += refl * a[p - k];
        }
        a = next;
        err *= 1.0 - refl * refl;
        if err <= 1e-14 * r0 {
            return Err(Error::FitFailed {
                condition: r0 / err.max(f64::MIN_POSITIVE),
                reason: format!("prediction error vanished at order {p}"),
            });
        }
    }
    Ok((a, err))
}

/// Canonical factor L(z) = Σ_j L_j z^{-j} with L_0 = I, and Pe ≻ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFactorization {
    pub coefficients: Vec<RMat>,
    pub pe: RMat,
    /// Relative Frobenius reconstruction error on the input grid.
    pub residual: f64,
    /// Largest zero radius of det L, from the block companion matrix.
    pub max_zero_radius: f64,
    /// Autocovariance lags kept.
    pub bandwidth: usize,
    pub iterations: usize,
}

impl MatrixFactorization {
    pub fn dim(&self) -> usize {
        self.pe.nrows()
    }

    pub fn response(&self, omega: f64) -> CMat {
        matrix_fir_response(&self.coefficients, omega)
    }

    pub fn to_transfer_matrix(&self) -> TransferMatrix {
        let m = self.dim();
        TransferMatrix::from_fn(m, m, |i, j| {
            RationalFilter::fir(self.coefficients.iter().map(|c| c[(i, j)]).collect())
        })
    }

    pub fn reconstruct(&self, omega: f64) -> CMat {
        let l = self.response(omega);
        let pe = self.pe.map(|v| Complex64::new(v, 0.0));
        &l * pe * l.adjoint()
    }
}

/// Σ_j C_j e^{-jωj}.
pub fn matrix_fir_response(coefficients: &[RMat], omega: f64) -> CMat {
    let (r, c) = coefficients[0].shape();
    let mut out = CMat::zeros(r, c);
    for (j, cj) in coefficients.iter().enumerate() {
        let z = (-J * omega * j as f64).exp();
        out += cj.map(|v| Complex64::new(v, 0.0)) * z;
    }
    out
}

/// Largest root modulus of det(Σ_j C_j z^{-j}) for monic C_0 = I, via the
/// block companion matrix.
pub fn matrix_polynomial_zero_radius(coefficients: &[RMat]) -> f64 {
    let k = coefficients.len() - 1;
    if k == 0 {
        return 0.0;
    }
    let m = coefficients[0].nrows();
    let mut comp = RMat::zeros(k * m, k * m);
    for j in 0..k {
        comp.view_mut((0, j * m), (m, m)).copy_from(&(-&coefficients[j + 1]));
    }
    for j in 1..k {
        comp.view_mut((j * m, (j - 1) * m), (m, m)).copy_from(&RMat::identity(m, m));
    }
    eigenvalues(&comp).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Autocovariance R[k] = (1/2π)∫ P(e^{jω}) e^{jωk} dω for k = 0..N−1.
pub fn autocovariance(p: &SpectrumGrid) -> Vec<RMat> {
    let n = p.n();
    let (rows, cols) = (p.rows(), p.cols());
    let mut out = vec![RMat::zeros(rows, cols); n];
    for i in 0..rows {
        for j in 0..cols {
            let half = p.entry(i, j);
            let full = crate::linalg::full_circle_scalar(&half);
            let r = ifft(&full);
            for (k, o) in out.iter_mut().enumerate() {
                o[(i, j)] = r[k].re;
            }
        }
    }
    out
}

/// Relative tail tolerance for choosing the autocovariance bandwidth.
pub const BANDWIDTH_TOL: f64 = 1e-10;
/// Convergence tolerance (relative, on Pe and the coefficients).
pub const INNOVATIONS_TOL: f64 = 1e-13;

/// Canonical factorization of a Hermitian positive-definite spectrum.
pub fn matrix_canonical_factor(p: &SpectrumGrid) -> Result<MatrixFactorization> {
    if p.rows() != p.cols() {
        return Err(Error::DimensionMismatch {
            what: "square spectrum",
            expected: p.rows(),
            found: p.cols(),
        });
    }
    let scale = p.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
    p.ensure_positive_definite(1e-13 * scale)?;
    let gamma = autocovariance(p);
    let r0 = gamma[0].norm();
    // Bandwidth: smallest K whose discarded tail Σ_{k>K} ‖R[k]‖ is small.
    let mut tail: f64 = gamma.iter().skip(1).map(|g| g.norm()).sum();
    let mut band = 0;
    while band + 1 < gamma.len() && tail >= BANDWIDTH_TOL * r0 {
        band += 1;
        tail -= gamma[band].norm();
    }
    let gamma: Vec<RMat> = gamma.into_iter().take(band + 1).collect();
    let fac = innovations(&gamma, band)?;
    let m = p.rows();
    let mut coefficients = fac.0;
    // Trim negligible trailing coefficients.
    while coefficients.len() > 1 && coefficients.last().expect("nonempty").norm() <= 1e-15 * (1.0 + r0) {
        coefficients.pop();
    }
    debug_assert_eq!(coefficients[0], RMat::identity(m, m));
    let mut out = MatrixFactorization {
        max_zero_radius: matrix_polynomial_zero_radius(&coefficients),
        coefficients,
        pe: fac.1,
        residual: 0.0,
        bandwidth: band,
        iterations: fac.2,
    };
    let w = p.weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for q in 0..=p.n() {
        let diff = out.reconstruct(p.omega(q)) - p.sample(q);
        num += w[q] * diff.norm_squared();
        den += w[q] * p.sample(q).norm_squared();
    }
    out.residual = (num / den).sqrt();
    Ok(out)
}

/// Multivariate innovations recursion for a covariance sequence with
/// Γ(h) = 0 for h > K. Returns (L_0..L_K, Pe, iterations).
fn innovations(gamma: &[RMat], band: usize) -> Result<(Vec<RMat>, RMat, usize)> {
    let m = gamma[0].nrows();
    let max_iter = 4000 + 40 * band;
    let inv = |v: &RMat, index: usize| -> Result<RMat> {
        let chol = v.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            index,
            min_eigenvalue: v.clone().symmetric_eigenvalues().min(),
        })?;
        Ok(chol.inverse())
    };
    // theta[n][l] = Θ_{n,l} for l = 1..=min(n, K); index 0 unused.
    let mut theta: Vec<Vec<RMat>> = vec![vec![]];
    let mut v: Vec<RMat> = vec![gamma[0].clone()];
    let mut v_inv: Vec<RMat> = vec![inv(&gamma[0], 0)?];
    if band == 0 {
        return Ok((vec![RMat::identity(m, m)], gamma[0].clone(), 0));
    }
    let get = |theta: &Vec<Vec<RMat>>, n: usize, l: usize| -> Option<RMat> {
        if l == 0 || l > band || l > n {
            None
        } else {
            Some(theta[n][l].clone())
        }
    };
    let mut last_change = f64::INFINITY;
    for n in 1..=max_iter {
        let mut row = vec![RMat::zeros(m, m); band.min(n) + 1];
        let k_start = n.saturating_sub(band);
        for k in k_start..n {
            // Θ_{n,n−k} = (Γ(n−k) − Σ_{j} Θ_{n,n−j} V_j Θ_{k,k−j}ᵀ) V_k⁻¹
            let mut acc = gamma[n - k].clone();
            for j in k_start..k {
                let a = &row[n - j];
                if let Some(b) = get(&theta, k, k - j) {
                    acc -= a * &v[j] * b.transpose();
                }
            }
            row[n - k] = acc * &v_inv[k];
        }
        let mut vn = gamma[0].clone();
        for j in k_start..n {
            let t = &row[n - j];
            vn -= t * &v[j] * t.transpose();
        }
        vn = (&vn + vn.transpose()) * 0.5;
        let vn_inv = inv(&vn, n)?;
        let change = if n > band {
            let dv = (&vn - &v[n - 1]).norm() / v[n - 1].norm();
            let dt = (1..=band)
                .map(|l| (&row[l] - &theta[n - 1][l]).norm())
                .fold(0.0, f64::max);
            dv.max(dt)
        } else {
            f64::INFINITY
        };
        theta.push(row);
        v.push(vn);
        v_inv.push(vn_inv);
        last_change = change;
        if change < INNOVATIONS_TOL {
            let mut coeffs = vec![RMat::identity(m, m)];
            coeffs.extend(theta[n][1..=band].iter().cloned());
            return Ok((coeffs, v[n].clone(), n));
        }
    }
    Err(Error::FactorizationStalled {
        iterations: max_iter,
        change: last_change,
    })
}
