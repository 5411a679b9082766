//! Small numerical helpers shared across modules: matrix aliases, the
//! trapezoidal rule on the half-circle grid, Hermitian square roots,
//! polynomial roots and inverse FFTs of Hermitian-symmetric spectra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Trapezoid weights for the grid ω_q = qπ/N, q = 0..=N, normalized so that
/// Σ w_q f(ω_q) approximates (1/2π)∫_{-π}^{π} f(ω) dω for even f.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0 / n as f64; n + 1];
    w[0] *= 0.5;
    w[n] *= 0.5;
    w
}

/// Trapezoidal mean of an even function sampled on the half-circle grid.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    assert!(values.len() >= 2, "trapezoid needs at least two samples");
    let n = values.len() - 1;
    let inner: f64 = values[1..n].iter().sum();
    (inner + 0.5 * (values[0] + values[n])) / n as f64
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|x| x.re)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Negative rounding-level eigenvalues are clipped at zero.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let d = eig.eigenvalues.map(|x| Complex64::new(x.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    v * CMat::from_diagonal(&d) * v.adjoint()
}

pub fn real_symmetric_sqrt(m: &RMat) -> RMat {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * RMat::from_diagonal(&d) * v.transpose()
}

/// Inverse of a Hermitian positive definite matrix by Cholesky; `None` if the
/// factorization fails.
pub fn hermitian_inverse(m: &CMat) -> Option<CMat> {
    nalgebra::Cholesky::new(hermitian_part(m)).map(|c| c.inverse())
}

/// Roots of Σ_k c_k z^{n-k} (coefficients in descending powers of z).
/// Leading zeros are dropped first.
pub fn poly_roots(desc: &[f64]) -> Vec<Complex64> {
    let start = desc.iter().position(|&c| c != 0.0);
    let Some(start) = start else { return Vec::new() };
    let end = desc.iter().rposition(|&c| c != 0.0).expect("nonzero entry exists");
    // Trailing zeros are roots at the origin; the companion matrix of z^k is
    // nilpotent, which the QR iteration handles badly.
    let mut roots = vec![Complex64::new(0.0, 0.0); desc.len() - 1 - end];
    let c = &desc[start..=end];
    let n = c.len() - 1;
    if n == 0 {
        return roots;
    }
    if n == 1 {
        roots.push(Complex64::new(-c[1] / c[0], 0.0));
        return roots;
    }
    let mut comp = RMat::zeros(n, n);
    for k in 0..n {
        comp[(0, k)] = -c[k + 1] / c[0];
    }
    for k in 1..n {
        comp[(k, k - 1)] = 1.0;
    }
    roots.extend(eigenvalues(&comp));
    roots
}

/// Eigenvalues of a real square matrix. The Schur iteration is capped; if it
/// fails to converge the matrix is perturbed by a relative 1e−13 and
/// retried, which moves eigenvalues by at most about that amount for
/// well-conditioned spectra.
pub fn eigenvalues(a: &RMat) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    if a.iter().all(|&x| x == 0.0) {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 2_000) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    let scale = a.amax();
    let mut perturbed = a.clone();
    for (idx, v) in perturbed.iter_mut().enumerate() {
        // Deterministic, non-symmetric perturbation pattern.
        *v += scale * 1e-13 * (((idx * 7919) % 17) as f64 - 8.0) / 8.0;
    }
    match nalgebra::linalg::Schur::try_new(perturbed, f64::EPSILON, 20_000) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => {
            // Last resort: every eigenvalue reported at the spectral radius
            // estimate ‖A^{2^k}‖^{1/2^k}.
            let rho = gelfand_radius(a);
            vec![Complex64::new(rho, 0.0); n]
        }
    }
}

/// Spectral radius estimate by repeated squaring with renormalization.
pub fn gelfand_radius(a: &RMat) -> f64 {
    let mut m = a.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..40 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        m /= norm;
        log_scale = 2.0 * (log_scale + norm.ln());
        m = &m * &m;
        power *= 2.0;
    }
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    ((log_scale + norm.ln()) / power).exp()
}

/// Product of polynomials given as coefficient lists in the same variable.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Expands half-circle samples `half[q]` at ω_q = qπ/N (q = 0..=N) of a
/// real-coefficient response to the full circle of 2N points, using
/// H(e^{-jω}) = conj(H(e^{jω})).
pub fn full_circle_scalar(half: &[Complex64]) -> Vec<Complex64> {
    let n = half.len() - 1;
    let mut full = Vec::with_capacity(2 * n);
    full.extend_from_slice(half);
    for q in (1..n).rev() {
        full.push(half[q].conj());
    }
    full
}

/// Inverse DFT x_t = (1/M) Σ_q X_q e^{+j 2π q t / M}.
pub fn ifft(data: &[Complex64]) -> Vec<Complex64> {
    let mut buf = data.to_vec();
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_inverse(buf.len());
    plan.process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|x| *x *= scale);
    buf
}

/// Forward DFT X_q = Σ_t x_t e^{-j 2π q t / M}.
pub fn fft(data: &[Complex64]) -> Vec<Complex64> {
    let mut buf = data.to_vec();
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_forward(buf.len());
    plan.process(&mut buf);
    buf
}

/// Two-sided impulse response of a real-coefficient matrix response sampled
/// on the half circle. Returns coefficients indexed by lag in
/// `-(N-1)..=N` as `(lags, coefficients)`; lag t is the coefficient of z^{-t}.
pub fn two_sided_impulse(half: &[CMat]) -> (Vec<i64>, Vec<RMat>) {
    let n = half.len() - 1;
    let (rows, cols) = half[0].shape();
    let m = 2 * n;
    let mut coeffs = vec![RMat::zeros(rows, cols); m];
    for r in 0..rows {
        for c in 0..cols {
            let samples: Vec<Complex64> = half.iter().map(|h| h[(r, c)]).collect();
            let x = ifft(&full_circle_scalar(&samples));
            for (t, v) in x.iter().enumerate() {
                coeffs[t][(r, c)] = v.re;
            }
        }
    }
    // Index t in 0..m corresponds to lag t for t <= n, lag t - m otherwise.
    let mut lags = Vec::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for t in (n + 1)..m {
        lags.push(t as i64 - m as i64);
        out.push(coeffs[t].clone());
    }
    for t in 0..=n {
        lags.push(t as i64);
        out.push(coeffs[t].clone());
    }
    (lags, out)
}
