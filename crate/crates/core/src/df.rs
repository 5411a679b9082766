//! Decision-feedback mechanisms.
//!
//! The postfilter forms ũ = H₁v − H₂û, quantizes ũ to the known input
//! domain, and publishes ŷ = Fû. With B = I + H₂ monic and past decisions
//! assumed correct, the pre-decision error F(u − ũ) = F(Bu − H₁v) is
//! minimized by B = S⁻¹Q⁻¹, where
//!
//! ```text
//! K(P̃⁻¹ + G̃*G̃)⁻¹K = Q R Q*,   F*F = S* T S,
//! ```
//!
//! and its MSE is κ²Tr(TR).

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_inverse, real_symmetric_sqrt, trace_re, CMat, RMat};
use crate::lms::{optimize_prefilter_general, prefilter_from_profile, wiener_smoother, LmsSettings};
use crate::lti::{SpectrumGrid, TransferMatrix};
use crate::mechanism::{DfPostfilter, MechanismDesign, MechanismKind, Postfilter, TwoSidedFir};
use crate::privacy::PrivacySpec;
use crate::spectral::{matrix_canonical_factor, matrix_fir_response, matrix_polynomial_zero_radius};

/// Publication delay used when none is given.
pub const DEFAULT_LOOKAHEAD: usize = 2;

/// Known input alphabet used by the decision device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// {0, 1, 2, ...}: round to nearest, clamp at 0.
    Integers,
    /// {0, 1} (event indicators): threshold at 1/2.
    Binary,
    /// No alphabet: the device is the identity.
    Reals,
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integers" => Ok(Domain::Integers),
            "binary" => Ok(Domain::Binary),
            "reals" => Ok(Domain::Reals),
            other => Err(Error::Config(format!("unknown input domain `{other}` (integers, binary, reals)"))),
        }
    }
}

pub fn decide(x: f64, domain: Domain) -> f64 {
    match domain {
        Domain::Integers => x.round().max(0.0),
        Domain::Binary => {
            if x >= 0.5 {
                1.0
            } else {
                0.0
            }
        }
        Domain::Reals => x,
    }
}

pub fn decision_device(x: &[f64], domain: Domain) -> Vec<f64> {
    x.iter().map(|&v| decide(v, domain)).collect()
}

/// Q, R, S, T with Q, S monic causal FIR and R, T positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfFactors {
    pub q: Vec<RMat>,
    pub r: RMat,
    pub s: Vec<RMat>,
    pub t: RMat,
    pub q_residual: f64,
    pub s_residual: f64,
}

/// Error spectrum (P_u⁻¹ + G*G/σ²)⁻¹ = P_u − P_uG*(GP_uG* + σ²I)⁻¹GP_u of
/// the linear estimate of u, at every grid point.
pub fn estimation_error_spectrum(p_u: &SpectrumGrid, g: &TransferMatrix, sigma: f64) -> Result<SpectrumGrid> {
    let m = g.rows();
    let sigma2 = Complex64::new(sigma * sigma, 0.0);
    let mut out = Vec::with_capacity(p_u.n() + 1);
    for q in 0..=p_u.n() {
        let gq = g.response(p_u.omega(q));
        let pu = p_u.sample(q);
        let pv = &gq * pu * gq.adjoint() + CMat::identity(m, m) * sigma2;
        let inv = hermitian_inverse(&pv).ok_or_else(|| Error::NotPositiveDefinite {
            index: q,
            min_eigenvalue: crate::linalg::min_hermitian_eigenvalue(&pv),
        })?;
        let e = pu - pu * gq.adjoint() * inv * &gq * pu;
        out.push(crate::linalg::hermitian_part(&e));
    }
    SpectrumGrid::new(out)
}

/// Both spectral factorizations. The bracket spectrum is
/// K(P̃⁻¹ + G̃*G̃)⁻¹K = κ⁻²(P_u⁻¹ + G*G/σ²)⁻¹ when σ = κ‖GK‖₂; F*F is
/// factored as S*TS by factoring its transpose L Pe L* and taking S = Lᵀ.
pub fn df_factorizations(
    f: &TransferMatrix,
    p_u: &SpectrumGrid,
    g: &TransferMatrix,
    sigma: f64,
    privacy: &PrivacySpec,
) -> Result<DfFactors> {
    let kappa2 = privacy.kappa().powi(2);
    let bracket = estimation_error_spectrum(p_u, g, sigma)?.map(|s| s / Complex64::new(kappa2, 0.0));
    let qf = matrix_canonical_factor(&bracket)?;
    let ftf_t = SpectrumGrid::from_fn(p_u.n(), f.cols(), f.cols(), |w| {
        let fw = f.response(w);
        (fw.adjoint() * fw).transpose()
    });
    let sf = matrix_canonical_factor(&ftf_t).map_err(|e| match e {
        Error::NotPositiveDefinite { index, min_eigenvalue } => Error::NotPositiveDefinite { index, min_eigenvalue },
        other => other,
    })?;
    Ok(DfFactors {
        q: qf.coefficients,
        r: qf.pe,
        s: sf.coefficients.iter().map(|c| c.transpose()).collect(),
        t: sf.pe,
        q_residual: qf.residual,
        s_residual: sf.residual,
    })
}

fn matrix_poly_mul(a: &[RMat], b: &[RMat]) -> Vec<RMat> {
    let m = a[0].nrows();
    let mut out = vec![RMat::zeros(m, b[0].ncols()); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Power-series inverse of a monic matrix polynomial W, truncated once the
/// remaining coefficients carry less than `tail` of the energy (checked
/// over a window of the polynomial's length).
fn monic_series_inverse(w: &[RMat], tail: f64, max_len: usize) -> Vec<RMat> {
    let m = w[0].nrows();
    let mut b = vec![RMat::identity(m, m)];
    let mut energy = m as f64;
    let window = w.len().max(2);
    while b.len() < max_len {
        let n = b.len();
        let mut next = RMat::zeros(m, m);
        for k in 1..w.len().min(n + 1) {
            next -= &w[k] * &b[n - k];
        }
        energy += next.norm_squared();
        b.push(next);
        if b.len() > window {
            let recent: f64 = b[b.len() - window..].iter().map(|c| c.norm_squared()).sum();
            if recent <= tail * energy {
                break;
            }
        }
    }
    while b.len() > 1 && b.last().expect("nonempty").norm_squared() <= tail * energy {
        b.pop();
    }
    b
}

/// B = S⁻¹Q⁻¹ = (QS)⁻¹ as a causal series with B₀ = I.
pub fn optimal_feedback(q: &[RMat], s: &[RMat]) -> Result<Vec<RMat>> {
    let w = matrix_poly_mul(q, s);
    let radius = matrix_polynomial_zero_radius(&w);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::UnstableInverse { radius });
    }
    Ok(monic_series_inverse(&w, 1e-24, 1 << 16))
}

/// κ²Tr(TR).
pub fn df_theory_mse(t: &RMat, r: &RMat, privacy: &PrivacySpec) -> f64 {
    privacy.kappa().powi(2) * (t * r).trace()
}

/// ‖T^{1/2} W R^{1/2}‖₂² = Σ_k Tr(T^{1/2}W_k R W_kᵀT^{1/2}) for a causal
/// FIR W.
pub fn weighted_filter_energy(t: &RMat, r: &RMat, w: &[RMat]) -> f64 {
    let th = real_symmetric_sqrt(t);
    let rh = real_symmetric_sqrt(r);
    w.iter().map(|wk| (&th * wk * &rh).norm_squared()).sum()
}

/// Pre-decision MSE under correct past decisions for a monic B given on the
/// grid: (1/2π)∫Tr[F B (P_u⁻¹+G*G/σ²)⁻¹ B* F*]dω.
pub fn df_mse_for_feedback(f: &TransferMatrix, error_spectrum: &SpectrumGrid, b: &SpectrumGrid) -> f64 {
    let w = error_spectrum.weights();
    (0..=error_spectrum.n())
        .map(|q| {
            let fb = f.response(error_spectrum.omega(q)) * b.sample(q);
            w[q] * trace_re(&(&fb * error_spectrum.sample(q) * fb.adjoint()))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfDesign {
    pub factors: DfFactors,
    /// B₀ = I, B₁, ...; H₂ = B − I.
    pub feedback: Vec<RMat>,
    /// H₁ = B P_u G*(G P_u G* + σ²I)⁻¹ restricted to lags ≥ −lookahead.
    pub forward: TwoSidedFir,
    pub lookahead: usize,
    /// κ²Tr(TR), pre-decision, assuming correct past decisions.
    pub theory_mse: f64,
    /// Same quantity by direct integration with B = (QS)⁻¹ on the grid.
    pub theory_mse_direct: f64,
    /// Assumed-correct MSE once H₁ is cut to the allowed lookahead.
    pub theory_mse_truncated: f64,
}

/// Synthesizes H₁ and B for a given prefilter and noise level.
pub fn design_df(
    f: &TransferMatrix,
    p_u: &SpectrumGrid,
    g: &TransferMatrix,
    sigma: f64,
    privacy: &PrivacySpec,
    lookahead: usize,
) -> Result<DfDesign> {
    let factors = df_factorizations(f, p_u, g, sigma, privacy)?;
    let feedback = optimal_feedback(&factors.q, &factors.s)?;
    let w = matrix_poly_mul(&factors.q, &factors.s);
    let b_grid = SpectrumGrid::from_fn(p_u.n(), g.rows(), g.rows(), |om| {
        matrix_fir_response(&w, om).try_inverse().expect("QS is invertible on the circle")
    });
    let smoother = wiener_smoother(&TransferMatrix::identity(g.rows()), p_u, g, sigma)?;
    let h1_grid = b_grid.zip_map(&smoother, |b, h| b * h)?;
    let full = TwoSidedFir::from_grid(&h1_grid, 1e-14);
    let forward = restrict_lookahead(&full, lookahead);
    let err = estimation_error_spectrum(p_u, g, sigma)?;
    let theory_direct = df_mse_for_feedback(f, &err, &b_grid);

    // Truncated H₁: error F(Bu − H₁v) = F[(B − H₁G)u − H₁w].
    let sigma2 = Complex64::new(sigma * sigma, 0.0);
    let weights = p_u.weights();
    let truncated: f64 = (0..=p_u.n())
        .map(|q| {
            let om = p_u.omega(q);
            let h1 = forward.response(om);
            let fq = f.response(om);
            let e = &fq * (b_grid.sample(q) - &h1 * g.response(om));
            let fh = &fq * &h1;
            weights[q] * trace_re(&(&e * p_u.sample(q) * e.adjoint() + &fh * fh.adjoint() * sigma2))
        })
        .sum();
    Ok(DfDesign {
        theory_mse: df_theory_mse(&factors.t, &factors.r, privacy),
        theory_mse_direct: theory_direct,
        theory_mse_truncated: truncated,
        factors,
        feedback,
        forward,
        lookahead,
    })
}

fn restrict_lookahead(h: &TwoSidedFir, lookahead: usize) -> TwoSidedFir {
    let first = -(lookahead as i64);
    if h.start >= first {
        return h.clone();
    }
    let skip = (first - h.start) as usize;
    if skip >= h.taps.len() {
        return TwoSidedFir {
            start: first,
            taps: vec![RMat::zeros(h.rows(), h.cols())],
        };
    }
    TwoSidedFir {
        start: first,
        taps: h.taps[skip..].to_vec(),
    }
}

/// Closed loop on a centered private stream: returns (û, ũ) in absolute
/// units. ũ_t = (H₁v)_t + μ − Σ_{k≥1} B_k(û_{t−k} − μ), û_t = decide(ũ_t).
pub fn run_df_loop(df: &DfPostfilter, v_centered: &[Vec<f64>], mu: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let m = df.forward.rows();
    if v_centered.len() != df.forward.cols() || mu.len() != m {
        return Err(Error::DimensionMismatch {
            what: "decision-feedback channels",
            expected: m,
            found: v_centered.len(),
        });
    }
    let len = v_centered.first().map_or(0, Vec::len);
    let a = df.forward.apply(v_centered);
    let mut uhat = vec![vec![0.0; len]; m];
    let mut utilde = vec![vec![0.0; len]; m];
    // Centered past decisions, newest first, for the feedback sum.
    for t in 0..len {
        for i in 0..m {
            let mut acc = a[i][t] + mu[i];
            for (k, bk) in df.feedback.iter().enumerate().skip(1).take(t) {
                for j in 0..m {
                    let c = bk[(i, j)];
                    if c != 0.0 {
                        acc -= c * (uhat[j][t - k] - mu[j]);
                    }
                }
            }
            utilde[i][t] = acc;
            uhat[i][t] = decide(acc, df.domain);
        }
    }
    Ok((uhat, utilde))
}

/// The loop's pre-decision signal when every past decision is replaced by
/// the true input: ũ_t = (H₁v)_t + μ − Σ_{k≥1} B_k(u_{t−k} − μ). This is the
/// situation the closed-form MSE describes.
pub fn genie_pre_decision(df: &DfPostfilter, v_centered: &[Vec<f64>], mu: &[f64], u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = df.forward.rows();
    if u.len() != m || v_centered.len() != df.forward.cols() || mu.len() != m {
        return Err(Error::DimensionMismatch {
            what: "decision-feedback channels",
            expected: m,
            found: u.len(),
        });
    }
    let centered: Vec<Vec<f64>> = u
        .iter()
        .zip(mu)
        .map(|(c, m)| c.iter().map(|x| x - m).collect())
        .collect();
    let a = df.forward.apply(v_centered);
    let fb = TwoSidedFir {
        start: 1,
        taps: df.feedback[1..].to_vec(),
    };
    let past = if fb.taps.is_empty() {
        vec![vec![0.0; a[0].len()]; m]
    } else {
        fb.apply(&centered)
    };
    Ok(a.iter()
        .zip(&past)
        .zip(mu)
        .map(|((ai, pi), mi)| ai.iter().zip(pi).map(|(x, y)| x + mi - y).collect())
        .collect())
}

/// DF mechanism on the LMS-optimized prefilter.
pub fn assemble_df(
    f: &TransferMatrix,
    p_u: &SpectrumGrid,
    input_mean: &[f64],
    privacy: &PrivacySpec,
    domain: Domain,
    lookahead: usize,
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
    let (g, fit_errors) = prefilter_from_profile(&profile, &privacy.k, settings)?;
    let sensitivity = crate::sensitivity::diagonal_sensitivity(&g, &privacy.k)?;
    let sigma = privacy.kappa() * sensitivity;
    let d = design_df(f, p_u, &g, sigma, privacy, lookahead)?;
    let lms_mse = {
        let h = wiener_smoother(f, p_u, &g, sigma)?;
        crate::lms::linear_postfilter_mse(f, p_u, &g, sigma, &h)?
    };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("theory_mse_direct".to_string(), d.theory_mse_direct);
    diagnostics.insert("theory_mse_truncated".to_string(), d.theory_mse_truncated);
    diagnostics.insert("lms_smoother_mse".to_string(), lms_mse);
    diagnostics.insert("q_residual".to_string(), d.factors.q_residual);
    diagnostics.insert("s_residual".to_string(), d.factors.s_residual);
    diagnostics.insert("feedback_length".to_string(), d.feedback.len() as f64);
    diagnostics.insert("max_fit_error".to_string(), fit_errors.iter().copied().fold(0.0, f64::max));
    Ok(MechanismDesign {
        kind: MechanismKind::DecisionFeedback,
        desired: f.clone(),
        prefilter: g,
        noise_sigma: sigma,
        sensitivity,
        privacy: privacy.clone(),
        postfilter: Postfilter::DecisionFeedback(DfPostfilter {
            forward: d.forward,
            feedback: d.feedback,
            lookahead,
            domain,
        }),
        theory_mse: Some(d.theory_mse),
        input_mean: input_mean.to_vec(),
        grid_n: p_u.n(),
        allocation: Some(profile),
        diagnostics,
    })
}

/// Geometric mean exp((1/2π)∫ ln s dω) of a positive scalar spectrum.
pub fn geometric_mean(samples: &[f64]) -> f64 {
    let logs: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    crate::linalg::trapezoid_mean(&logs).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use crate::lti::RationalFilter;

    fn identity_response(m: usize) -> CMat {
        to_complex(&RMat::identity(m, m))
    }

    fn white(n: usize, m: usize, level: f64) -> SpectrumGrid {
        SpectrumGrid::from_fn(n, m, m, |_| identity_response(m) * Complex64::new(level, 0.0))
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(2.4, Domain::Integers), 2.0);
        assert_eq!(decide(-0.3, Domain::Integers), 0.0);
        assert_eq!(decide(0.6, Domain::Binary), 1.0);
        assert_eq!(decide(0.4, Domain::Binary), 0.0);
        assert_eq!(decide(-3.0, Domain::Binary), 0.0);
        assert_eq!(decide(0.37, Domain::Reals), 0.37);
        assert_eq!("binary".parse::<Domain>().unwrap(), Domain::Binary);
        assert!("ternary".parse::<Domain>().is_err());
    }

    #[test]
    fn white_case_has_trivial_factors() {
        let p = PrivacySpec::uniform(1.0, 0.1, 1.0, 2).unwrap();
        let eye = TransferMatrix::identity(2);
        let fac = df_factorizations(&eye, &white(64, 2, 1.0), &eye, 1.0, &p).unwrap();
        assert_eq!(fac.q.len(), 1);
        assert_eq!(fac.s.len(), 1);
        let b = optimal_feedback(&fac.q, &fac.s).unwrap();
        assert_eq!(b.len(), 1);
        // (1 + 1/σ²)⁻¹ = 1/2 per channel, scaled by κ⁻².
        let k2 = p.kappa().powi(2);
        assert!((fac.r[(0, 0)] - 0.5 / k2).abs() < 1e-12);
        assert!((fac.t[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_feedback_series() {
        let q = vec![RMat::identity(1, 1), RMat::from_element(1, 1, 0.5)];
        let s = vec![RMat::identity(1, 1)];
        let b = optimal_feedback(&q, &s).unwrap();
        for (n, c) in b.iter().take(30).enumerate() {
            assert!((c[(0, 0)] - (-0.5f64).powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_factors_match_geometric_means() {
        let f = TransferMatrix::scalar(RationalFilter::fir(vec![1.0, 0.6]));
        let pu = SpectrumGrid::from_fn(512, 1, 1, |w| {
            CMat::from_element(1, 1, Complex64::new(1.0 / (1.0 - 1.2 * w.cos() + 0.36), 0.0))
        });
        let g = TransferMatrix::scalar(RationalFilter::fir(vec![1.0, 0.2]));
        let p = PrivacySpec::uniform(1.0, 0.1, 1.0, 1).unwrap();
        let sigma = 0.8;
        let fac = df_factorizations(&f, &pu, &g, sigma, &p).unwrap();
        let fs: Vec<f64> = (0..=512).map(|q| f.response(pu.omega(q))[(0, 0)].norm_sqr()).collect();
        let err = estimation_error_spectrum(&pu, &g, sigma).unwrap();
        let es: Vec<f64> = err.samples().iter().map(|s| s[(0, 0)].re / p.kappa().powi(2)).collect();
        assert!((fac.t[(0, 0)] - geometric_mean(&fs)).abs() < 1e-8);
        assert!((fac.r[(0, 0)] - geometric_mean(&es)).abs() < 1e-8 * geometric_mean(&es));
        let d = design_df(&f, &pu, &g, sigma, &p, 2).unwrap();
        assert!((d.theory_mse - d.theory_mse_direct).abs() < 1e-8 * d.theory_mse);
        assert!(d.theory_mse_truncated >= d.theory_mse * (1.0 - 1e-9));
        assert_eq!(d.feedback[0], RMat::identity(1, 1));
    }

    #[test]
    fn noiseless_loop_reproduces_integer_input() {
        let df = DfPostfilter {
            forward: TwoSidedFir::causal(vec![RMat::identity(1, 1)]),
            feedback: vec![RMat::identity(1, 1), RMat::from_element(1, 1, 0.0)],
            lookahead: 0,
            domain: Domain::Integers,
        };
        let v = vec![vec![0.0, 1.0, 3.0, 2.0]];
        let (uhat, _) = run_df_loop(&df, &v, &[1.0]).unwrap();
        assert_eq!(uhat[0], vec![1.0, 2.0, 4.0, 3.0]);
    }
}
