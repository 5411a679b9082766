//! Linear mean-square mechanisms: the postfilter is a Wiener estimator of
//! y = Fu from v = Gu + w, and the diagonal prefilter G is chosen to
//! minimize the resulting error given the public input spectrum P_u.
//!
//! Design works with normalized quantities F̃ = κFK, P̃ = κ⁻²K⁻¹P_uK⁻¹ and
//! x_i(ω) = |g̃_ii(e^{jω})|² with G̃ = GK/‖GK‖₂, so the smoother MSE is
//!
//! ```text
//! e(x) = (1/2π)∫ Tr[F̃ (P̃⁻¹ + X)⁻¹ F̃*] dω,   (1/2π)∫ Σ_i x_i dω = 1.
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_inverse, to_complex, trace_re, CMat, RMat};
use crate::lti::{RationalFilter, SpectrumGrid, TransferMatrix};
use crate::mechanism::{MechanismDesign, MechanismKind, Postfilter, TwoSidedFir};
use crate::privacy::PrivacySpec;
use crate::spectral::{matrix_canonical_factor, scalar_spectral_factor, ScalarSpectrum, DEFAULT_FACTOR_ORDER};

/// Allocation x_{iq} = |g̃_ii(e^{jω_q})|² on the design grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProfile {
    /// `x[q][i]`, q = 0..=N.
    pub x: Vec<Vec<f64>>,
    /// Multiplier of the normalization constraint, when known.
    pub lambda: Option<f64>,
}

impl AllocationProfile {
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn channels(&self) -> usize {
        self.x[0].len()
    }

    /// Trapezoidal mean of Σ_i x_{iq}; 1 for a feasible profile.
    pub fn budget(&self) -> f64 {
        let totals: Vec<f64> = self.x.iter().map(|r| r.iter().sum()).collect();
        crate::linalg::trapezoid_mean(&totals)
    }

    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|r| r[i]).collect()
    }

    fn normalized(mut self) -> Self {
        let b = self.budget();
        self.x.iter_mut().flatten().for_each(|v| *v /= b);
        self
    }
}

/// Per-frequency data of the normalized problem.
struct Problem {
    /// F̃*F̃ (m×m).
    a: Vec<CMat>,
    /// P̃ = K⁻¹P_uK⁻¹/κ²; only its inverse enters the objective, but P_u may
    /// be singular at isolated frequencies.
    pt: Vec<CMat>,
    /// P̃^{1/2}.
    roots: Vec<CMat>,
    weights: Vec<f64>,
    m: usize,
}

impl Problem {
    fn new(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec) -> Result<Self> {
        privacy.validate()?;
        let m = f.cols();
        if p_u.rows() != m || p_u.cols() != m {
            return Err(Error::DimensionMismatch {
                what: "input spectrum size",
                expected: m,
                found: p_u.rows(),
            });
        }
        if privacy.channels() != m {
            return Err(Error::DimensionMismatch {
                what: "adjacency weights",
                expected: m,
                found: privacy.channels(),
            });
        }
        let kappa = privacy.kappa();
        let kmat = to_complex(&RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&privacy.k)));
        let mut a = Vec::with_capacity(p_u.n() + 1);
        let mut pt = Vec::with_capacity(p_u.n() + 1);
        let kinv = to_complex(&RMat::from_diagonal(&nalgebra::DVector::from_iterator(
            m,
            privacy.k.iter().map(|k| 1.0 / k),
        )));
        for q in 0..=p_u.n() {
            let ft = f.response(p_u.omega(q)) * &kmat * Complex64::new(kappa, 0.0);
            a.push(ft.adjoint() * ft);
            let pu = p_u.sample(q);
            let min_eig = crate::linalg::min_hermitian_eigenvalue(pu);
            if min_eig < -1e-9 * pu.norm() {
                return Err(Error::NotPositiveDefinite {
                    index: q,
                    min_eigenvalue: min_eig,
                });
            }
            pt.push(crate::linalg::hermitian_part(&(&kinv * pu * &kinv)) / Complex64::new(kappa * kappa, 0.0));
        }
        let roots = pt.iter().map(crate::linalg::hermitian_sqrt).collect();
        Ok(Self {
            a,
            pt,
            roots,
            weights: p_u.weights(),
            m,
        })
    }

    /// (P̃⁻¹ + X)⁻¹ = P̃^{1/2}(I + P̃^{1/2}XP̃^{1/2})⁻¹P̃^{1/2}, which stays
    /// defined where P̃ is singular.
    fn resolvent(&self, q: usize, x: &[f64]) -> CMat {
        let root = &self.roots[q];
        let mut inner = root * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.m,
            x.iter().map(|&v| Complex64::new(v, 0.0)),
        )) * root;
        for i in 0..self.m {
            inner[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let inv = hermitian_inverse(&inner).expect("I + P̃^{1/2}XP̃^{1/2} is positive definite for x ≥ 0");
        crate::linalg::hermitian_part(&(root * inv * root))
    }

    fn term(&self, q: usize, x: &[f64]) -> f64 {
        trace_re(&(&self.a[q] * self.resolvent(q, x)))
    }

    fn objective(&self, profile: &AllocationProfile) -> f64 {
        (0..self.a.len()).map(|q| self.weights[q] * self.term(q, &profile.x[q])).sum()
    }

    /// d_i = [S A S]_ii with S = (P̃⁻¹ + X)⁻¹; the objective's gradient is
    /// −w_q d.
    fn descent(&self, q: usize, x: &[f64]) -> Vec<f64> {
        let s = self.resolvent(q, x);
        let sas = &s * &self.a[q] * &s;
        (0..self.m).map(|i| sas[(i, i)].re).collect()
    }

    /// Minimizes Tr[A S] + λ Σx over x ≥ 0 at one frequency, S = (P̃⁻¹ + X)⁻¹,
    /// by projected Newton on the free coordinates. With B = SAS the
    /// gradient is λ − B_ii and the Hessian 2 Re(S_ij B_ji).
    fn solve_frequency(&self, q: usize, lambda: f64, x: &mut [f64]) -> Result<()> {
        const MAX_ITER: usize = 200;
        const TOL: f64 = 1e-11;
        // Accepted when progress stops, e.g. along directions that P̃
        // (nearly) annihilates.
        const LOOSE_TOL: f64 = 1e-7;
        let a = &self.a[q];
        let value = |x: &[f64]| self.term(q, x) + lambda * x.iter().sum::<f64>();
        let mut worst = f64::INFINITY;
        for _ in 0..MAX_ITER {
            let s = self.resolvent(q, x);
            let b = &s * a * &s;
            let g: Vec<f64> = (0..self.m).map(|i| lambda - b[(i, i)].re).collect();
            // Coordinates pinned at zero with an outward gradient stay put.
            let free: Vec<usize> = (0..self.m).filter(|&i| x[i] > 0.0 || g[i] < 0.0).collect();
            worst = free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max) / lambda;
            if worst <= TOL {
                return Ok(());
            }
            let k = free.len();
            let mut h = RMat::from_fn(k, k, |r, c| 2.0 * (s[(free[r], free[c])] * b[(free[c], free[r])]).re);
            let ridge = 1e-14 * h.diagonal().amax().max(f64::MIN_POSITIVE);
            for r in 0..k {
                h[(r, r)] += ridge;
            }
            let rhs = nalgebra::DVector::from_iterator(k, free.iter().map(|&i| -g[i]));
            let d = match h.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => rhs.map(|v| v / h.diagonal().amax().max(f64::MIN_POSITIVE)),
            };
            let f0 = value(x);
            let slope: f64 = free.iter().zip(d.iter()).map(|(&i, di)| g[i] * di).sum();
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut trial = x.to_vec();
                for (&i, di) in free.iter().zip(d.iter()) {
                    trial[i] = (x[i] + step * di).max(0.0);
                }
                let f1 = value(&trial);
                if f1 <= f0 + 1e-4 * step * slope.min(0.0) {
                    moved = trial != x;
                    x.copy_from_slice(&trial);
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                // No representable improvement left.
                return if worst <= LOOSE_TOL {
                    Ok(())
                } else {
                    Err(Error::OptimizerStalled {
                        iterations: MAX_ITER,
                        residual: worst,
                        best_objective: self.term(q, x),
                    })
                };
            }
        }
        if worst <= LOOSE_TOL {
            return Ok(());
        }
        Err(Error::OptimizerStalled {
            iterations: MAX_ITER,
            residual: worst,
            best_objective: self.term(q, x),
        })
    }

    fn check_nondegenerate(&self) -> Result<()> {
        if self.a.iter().all(|a| trace_re(a) <= 0.0) {
            return Err(Error::DegenerateObjective("desired filter F is identically zero".into()));
        }
        Ok(())
    }
}

/// Smoother MSE (1/2π)∫Tr[F̃(P̃⁻¹ + X)⁻¹F̃*]dω of a profile, trapezoidal on
/// the grid of P_u.
pub fn lms_objective(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec, profile: &AllocationProfile) -> Result<f64> {
    let prob = Problem::new(f, p_u, privacy)?;
    check_profile(&prob, profile)?;
    Ok(prob.objective(profile))
}

/// ∂e/∂x_{iq} = −w_q[(P̃⁻¹+X)⁻¹F̃*F̃(P̃⁻¹+X)⁻¹]_ii, indexed `[q][i]`.
pub fn lms_gradient(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec, profile: &AllocationProfile) -> Result<Vec<Vec<f64>>> {
    let prob = Problem::new(f, p_u, privacy)?;
    check_profile(&prob, profile)?;
    Ok((0..=p_u.n())
        .map(|q| prob.descent(q, &profile.x[q]).iter().map(|d| -prob.weights[q] * d).collect())
        .collect())
}

/// Largest violation of the optimality conditions [SAS]_ii = λ where
/// x_{iq} > 0 and [SAS]_ii ≤ λ where x_{iq} = 0, relative to λ.
pub fn kkt_residual(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec, profile: &AllocationProfile) -> Result<f64> {
    let prob = Problem::new(f, p_u, privacy)?;
    check_profile(&prob, profile)?;
    let lambda = profile
        .lambda
        .ok_or_else(|| Error::Config("profile carries no multiplier".into()))?;
    let mut worst: f64 = 0.0;
    for q in 0..=p_u.n() {
        for (i, d) in prob.descent(q, &profile.x[q]).iter().enumerate() {
            let r = d / lambda - 1.0;
            worst = worst.max(if profile.x[q][i] > 0.0 { r.abs() } else { r.max(0.0) });
        }
    }
    Ok(worst)
}

fn check_profile(prob: &Problem, profile: &AllocationProfile) -> Result<()> {
    if profile.x.len() != prob.a.len() || profile.x.iter().any(|r| r.len() != prob.m) {
        return Err(Error::DimensionMismatch {
            what: "allocation profile",
            expected: prob.a.len() * prob.m,
            found: profile.x.iter().map(Vec::len).sum(),
        });
    }
    if profile.x.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::Config("allocation must be nonnegative".into()));
    }
    Ok(())
}

/// Finds λ with budget(x(λ)) = 1 by bisection in log λ, where x(λ) is
/// produced by `solve`; the budget is nonincreasing in λ.
fn bisect_multiplier(
    n_freq: usize,
    m: usize,
    weights: &[f64],
    lambda_hi: f64,
    solve: impl Fn(f64, &mut [Vec<f64>]) -> Result<()>,
) -> Result<AllocationProfile> {
    let budget = |x: &[Vec<f64>]| -> f64 { x.iter().zip(weights).map(|(r, w)| w * r.iter().sum::<f64>()).sum() };
    let mut x = vec![vec![0.0; m]; n_freq];
    let mut hi = lambda_hi;
    let mut lo = hi;
    loop {
        lo /= 4.0;
        solve(lo, &mut x)?;
        if budget(&x) >= 1.0 {
            break;
        }
        if lo < 1e-300 {
            return Err(Error::DegenerateObjective("no multiplier reaches the budget".into()));
        }
    }
    let mut best = x.clone();
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        solve(mid, &mut x)?;
        let b = budget(&x);
        if b >= 1.0 {
            lo = mid;
            best.clone_from(&x);
        } else {
            hi = mid;
        }
        if (b - 1.0).abs() < 1e-13 || hi / lo - 1.0 < 1e-15 {
            best.clone_from(&x);
            lo = mid;
            break;
        }
    }
    Ok(AllocationProfile {
        x: best,
        lambda: Some(lo),
    }
    .normalized())
}

/// Closed-form allocation for a diagonal input spectrum:
/// x_i = max(0, √(|F̃_i|₂²/λ) − 1/p̃_i), λ by bisection.
pub fn waterfill_diagonal(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec) -> Result<AllocationProfile> {
    let prob = Problem::new(f, p_u, privacy)?;
    prob.check_nondegenerate()?;
    let scale = p_u.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
    for s in p_u.samples() {
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                if i != j && s[(i, j)].norm() > 1e-12 * scale {
                    return Err(Error::Config("waterfilling needs a diagonal input spectrum".into()));
                }
            }
        }
    }
    // a_i = |F̃_i|₂², b_i = 1/p̃_i (infinite where p̃_i = 0: x_i stays 0).
    let coef: Vec<Vec<(f64, f64)>> = (0..=p_u.n())
        .map(|q| {
            (0..prob.m)
                .map(|i| {
                    let p = prob.pt[q][(i, i)].re;
                    (prob.a[q][(i, i)].re, if p > 0.0 { 1.0 / p } else { f64::INFINITY })
                })
                .collect()
        })
        .collect();
    let lambda_hi = coef.iter().flatten().map(|(a, b)| a / (b * b)).fold(0.0, f64::max);
    bisect_multiplier(p_u.n() + 1, prob.m, &prob.weights, lambda_hi * 1.01, |lambda, x| {
        for (row, c) in x.iter_mut().zip(&coef) {
            for (xi, (a, b)) in row.iter_mut().zip(c) {
                *xi = ((a / lambda).sqrt() - b).max(0.0);
            }
        }
        Ok(())
    })
}

/// Minimizes the LMS objective over all feasible diagonal profiles for a
/// general (possibly coupled) input spectrum. The problem separates over
/// frequency is solved by projected Newton for a given λ,
/// frequency is solved exactly by coordinate minimization for a given λ,
/// and λ is found by bisection on the budget.
pub fn optimize_prefilter_general(f: &TransferMatrix, p_u: &SpectrumGrid, privacy: &PrivacySpec) -> Result<AllocationProfile> {
    let prob = Problem::new(f, p_u, privacy)?;
    prob.check_nondegenerate()?;
    // At x = 0 the scaled descent directions are [P̃AP̃]_ii; any λ above
    // their maximum keeps x = 0 optimal.
    let lambda_hi = (0..=p_u.n())
        .flat_map(|q| prob.descent(q, &vec![0.0; prob.m]))
        .fold(0.0, f64::max);
    bisect_multiplier(p_u.n() + 1, prob.m, &prob.weights, lambda_hi * 1.01, |lambda, x| {
        x.par_iter_mut()
            .enumerate()
            .try_for_each(|(q, row)| prob.solve_frequency(q, lambda, row))
    })
}

/// The ZFE rule k_i|G_ii|² ∝ |F_i|₂ written as a feasible profile:
/// x_i ∝ k_i|F_i|₂.
pub fn zfe_profile(f: &TransferMatrix, privacy: &PrivacySpec, n: usize) -> Result<AllocationProfile> {
    privacy.validate()?;
    let x: Vec<Vec<f64>> = (0..=n)
        .map(|q| {
            let r = f.response(q as f64 * std::f64::consts::PI / n as f64);
            (0..f.cols()).map(|j| privacy.k[j] * r.column(j).norm()).collect()
        })
        .collect();
    let profile = AllocationProfile { x, lambda: None };
    if !(profile.budget() > 0.0) {
        return Err(Error::DegenerateObjective("desired filter F is identically zero".into()));
    }
    Ok(profile.normalized())
}

fn diag_response(g: &TransferMatrix, omega: f64) -> CMat {
    g.response(omega)
}

/// Non-causal Wiener smoother H = F P_u G*(G P_u G* + σ²I)⁻¹ on the grid.
pub fn wiener_smoother(f: &TransferMatrix, p_u: &SpectrumGrid, g: &TransferMatrix, sigma: f64) -> Result<SpectrumGrid> {
    let sigma2 = Complex64::new(sigma * sigma, 0.0);
    let mut out = Vec::with_capacity(p_u.n() + 1);
    for q in 0..=p_u.n() {
        let w = p_u.omega(q);
        let gq = diag_response(g, w);
        let pu = p_u.sample(q);
        let pv = &gq * pu * gq.adjoint() + CMat::identity(gq.nrows(), gq.nrows()) * sigma2;
        let inv = hermitian_inverse(&pv).ok_or_else(|| Error::NotPositiveDefinite {
            index: q,
            min_eigenvalue: crate::linalg::min_hermitian_eigenvalue(&pv),
        })?;
        out.push(f.response(w) * pu * gq.adjoint() * inv);
    }
    SpectrumGrid::new(out)
}

/// MSE of ŷ = Hv for any linear postfilter given on the grid: the error
/// (F − HG)u − Hw has spectrum (F−HG)P_u(F−HG)* + σ²HH*.
pub fn linear_postfilter_mse(
    f: &TransferMatrix,
    p_u: &SpectrumGrid,
    g: &TransferMatrix,
    sigma: f64,
    h: &SpectrumGrid,
) -> Result<f64> {
    if h.n() != p_u.n() {
        return Err(Error::DimensionMismatch {
            what: "postfilter grid size",
            expected: p_u.n(),
            found: h.n(),
        });
    }
    let w = p_u.weights();
    Ok((0..=p_u.n())
        .map(|q| {
            let om = p_u.omega(q);
            let hq = h.sample(q);
            let e = f.response(om) - hq * diag_response(g, om);
            let spec = &e * p_u.sample(q) * e.adjoint() + hq * hq.adjoint() * Complex64::new(sigma * sigma, 0.0);
            w[q] * trace_re(&spec)
        })
        .sum())
}

/// Power (1/2π)∫Tr[F P_u F*] of the desired output.
pub fn output_power(f: &TransferMatrix, p_u: &SpectrumGrid) -> f64 {
    let w = p_u.weights();
    (0..=p_u.n())
        .map(|q| {
            let fq = f.response(p_u.omega(q));
            w[q] * trace_re(&(&fq * p_u.sample(q) * fq.adjoint()))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalWiener {
    pub h: TwoSidedFir,
    /// H on the grid, after truncation to lags ≥ 0.
    pub grid: SpectrumGrid,
    pub factor_residual: f64,
}

/// Causal Wiener filter H = [P_yv L^{-*}]₊ Pe⁻¹ L⁻¹ with P_v = L Pe L* the
/// canonical factorization; [·]₊ keeps lags ≥ 0 of the two-sided impulse
/// response.
pub fn causal_wiener(f: &TransferMatrix, p_u: &SpectrumGrid, g: &TransferMatrix, sigma: f64) -> Result<CausalWiener> {
    let m = g.rows();
    let sigma2 = Complex64::new(sigma * sigma, 0.0);
    let mut pv = Vec::with_capacity(p_u.n() + 1);
    let mut pyv = Vec::with_capacity(p_u.n() + 1);
    for q in 0..=p_u.n() {
        let w = p_u.omega(q);
        let gq = diag_response(g, w);
        pv.push(&gq * p_u.sample(q) * gq.adjoint() + CMat::identity(m, m) * sigma2);
        pyv.push(f.response(w) * p_u.sample(q) * gq.adjoint());
    }
    let fac = matrix_canonical_factor(&SpectrumGrid::new(pv)?)?;
    let pe_inv = to_complex(
        &fac.pe
            .clone()
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite { index: 0, min_eigenvalue: 0.0 })?,
    );
    let mut linv = Vec::with_capacity(p_u.n() + 1);
    let mut psi = Vec::with_capacity(p_u.n() + 1);
    for (q, pyv_q) in pyv.iter().enumerate() {
        let l = fac.response(p_u.omega(q));
        let li = l.try_inverse().ok_or(Error::UnstableInverse {
            radius: fac.max_zero_radius,
        })?;
        psi.push(pyv_q * li.adjoint());
        linv.push(li);
    }
    let causal = causal_part(&SpectrumGrid::new(psi)?);
    let h_grid: Vec<CMat> = (0..=p_u.n())
        .map(|q| causal.response(p_u.omega(q)) * &pe_inv * &linv[q])
        .collect();
    let h_grid = SpectrumGrid::new(h_grid)?;
    let h = causal_part(&h_grid);
    let grid = SpectrumGrid::from_fn(p_u.n(), h.rows(), h.cols(), |w| h.response(w));
    Ok(CausalWiener {
        h,
        grid,
        factor_residual: fac.residual,
    })
}

/// Lags ≥ 0 of the inverse transform of a grid response.
fn causal_part(grid: &SpectrumGrid) -> TwoSidedFir {
    let (lags, coeffs) = crate::linalg::two_sided_impulse(grid.samples());
    let mut taps: Vec<RMat> = lags
        .iter()
        .zip(coeffs)
        .filter(|(l, _)| **l >= 0)
        .map(|(_, c)| c)
        .collect();
    let total: f64 = taps.iter().map(|t| t.norm_squared()).sum();
    let mut tail = 0.0;
    while taps.len() > 1 {
        let e = taps.last().expect("nonempty").norm_squared();
        if tail + e > 1e-16 * total {
            break;
        }
        tail += e;
        taps.pop();
    }
    TwoSidedFir::causal(taps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmsMode {
    Smoother,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmsSettings {
    /// FIR order of each prefilter factor.
    pub order: usize,
    /// Allocation values below this fraction of a channel's peak are
    /// raised to it before factoring, so that the factor exists.
    pub allocation_floor: f64,
    /// Energy fraction dropped when truncating the smoother's impulse
    /// response.
    pub fir_tail: f64,
}

impl Default for LmsSettings {
    fn default() -> Self {
        Self {
            order: DEFAULT_FACTOR_ORDER,
            allocation_floor: 1e-6,
            fir_tail: 1e-12,
        }
    }
}

/// Diagonal prefilter G with |G_ii|² = x_i/k_i², i.e. G̃ = GK realizes the
/// profile and ‖GK‖₂ ≈ 1. Returns G and per-channel fit errors.
pub fn prefilter_from_profile(profile: &AllocationProfile, k: &[f64], settings: &LmsSettings) -> Result<(TransferMatrix, Vec<f64>)> {
    let parts: Vec<(RationalFilter, f64)> = (0..profile.channels())
        .into_par_iter()
        .map(|i| {
            let xi = profile.channel(i);
            let peak = xi.iter().copied().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Ok((RationalFilter::zero(), 0.0));
            }
            let floor = settings.allocation_floor * peak;
            let s = ScalarSpectrum::new(xi.iter().map(|v| v.max(floor) / (k[i] * k[i])).collect())?;
            let fac = scalar_spectral_factor(&s, settings.order).map_err(|e| match e {
                Error::NotFactorizable { reason, .. } => Error::NotFactorizable { column: Some(i), reason },
                other => other,
            })?;
            Ok((fac.filter, fac.relative_error))
        })
        .collect::<Result<_>>()?;
    let errors = parts.iter().map(|p| p.1).collect();
    Ok((TransferMatrix::diagonal(parts.into_iter().map(|p| p.0).collect()), errors))
}

/// LMS mechanism: optimized diagonal prefilter, noise κ‖GK‖₂ and a Wiener
/// smoother (off-line) or causal Wiener filter (real time).
pub fn assemble_lms(
    f: &TransferMatrix,
    p_u: &SpectrumGrid,
    input_mean: &[f64],
    privacy: &PrivacySpec,
    mode: LmsMode,
    settings: &LmsSettings,
) -> Result<MechanismDesign> {
    if input_mean.len() != f.cols() {
        return Err(Error::DimensionMismatch {
            what: "input mean",
            expected: f.cols(),
            found: input_mean.len(),
        });
    }
    let profile = optimize_prefilter_general(f, p_u, privacy)?;
    let optimum = lms_objective(f, p_u, privacy, &profile)?;
    let (g, fit_errors) = prefilter_from_profile(&profile, &privacy.k, settings)?;
    let sensitivity = crate::sensitivity::diagonal_sensitivity(&g, &privacy.k)?;
    let sigma = privacy.kappa() * sensitivity;
    let smoother = wiener_smoother(f, p_u, &g, sigma)?;
    let smoother_mse = linear_postfilter_mse(f, p_u, &g, sigma, &smoother)?;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("optimal_objective".to_string(), optimum);
    diagnostics.insert("smoother_mse".to_string(), smoother_mse);
    diagnostics.insert("output_power".to_string(), output_power(f, p_u));
    diagnostics.insert("max_fit_error".to_string(), fit_errors.iter().copied().fold(0.0, f64::max));
    if let Some(l) = profile.lambda {
        diagnostics.insert("lambda".to_string(), l);
    }
    let (kind, postfilter, theory) = match mode {
        LmsMode::Smoother => (
            MechanismKind::LmsSmoother,
            Postfilter::Fir {
                h: TwoSidedFir::from_grid(&smoother, settings.fir_tail),
            },
            Some(smoother_mse),
        ),
        LmsMode::Causal => {
            let cw = causal_wiener(f, p_u, &g, sigma)?;
            let causal_mse = linear_postfilter_mse(f, p_u, &g, sigma, &cw.grid)?;
            diagnostics.insert("causal_mse".to_string(), causal_mse);
            diagnostics.insert("factor_residual".to_string(), cw.factor_residual);
            (MechanismKind::LmsCausal, Postfilter::Fir { h: cw.h }, None)
        }
    };
    Ok(MechanismDesign {
        kind,
        desired: f.clone(),
        prefilter: g,
        noise_sigma: sigma,
        sensitivity,
        privacy: privacy.clone(),
        postfilter,
        theory_mse: theory,
        input_mean: input_mean.to_vec(),
        grid_n: p_u.n(),
        allocation: Some(profile),
        diagnostics,
    })
}
