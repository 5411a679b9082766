//! Zero-forcing equalization: publish v = Gu + w and reconstruct
//! ŷ = F G⁻¹ v, so the error F G⁻¹ w is filtered noise only.
//!
//! With a diagonal prefilter the MSE is κ²‖GK‖₂²‖FG⁻¹‖₂², minimized by
//! k_i|G_ii|² = |F_i|₂ (column Euclidean norm), which reaches
//! κ²((1/2π)∫Σ k_i|F_i|₂ dω)².

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{to_complex, trapezoid_mean};
use crate::lti::{RationalFilter, TransferMatrix, DEFAULT_GRID_N};
use crate::mechanism::{MechanismDesign, MechanismKind, Postfilter};
use crate::privacy::PrivacySpec;
use crate::spectral::{paley_wiener_check, scalar_spectral_factor, ScalarSpectrum, DEFAULT_FACTOR_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZfeSettings {
    pub grid_n: usize,
    /// FIR order of each prefilter factor.
    pub order: usize,
}

impl Default for ZfeSettings {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_GRID_N,
            order: DEFAULT_FACTOR_ORDER,
        }
    }
}

/// ω ↦ |F_j(e^{jω})|₂ on the half-circle grid.
pub fn column_norm_spectrum(f: &TransferMatrix, j: usize, n: usize) -> ScalarSpectrum {
    let col = f.column(j);
    ScalarSpectrum::from_fn(n, |w| col.response(w).norm()).expect("norms are finite and nonnegative")
}

fn factor_column(s: &ScalarSpectrum, column: Option<usize>, order: usize) -> Result<crate::spectral::ScalarFactor> {
    if !paley_wiener_check(s) {
        return Err(Error::NotFactorizable {
            column,
            reason: "log-integrability fails (spectrum vanishes on a set of positive measure)".into(),
        });
    }
    scalar_spectral_factor(s, order).map_err(|e| match e {
        Error::NotFactorizable { reason, .. } => Error::NotFactorizable { column, reason },
        other => other,
    })
}

/// SISO prefilter G for a single-input F with |G|² = |F|₂. The weight k₁
/// scales the MSE but not the optimal shape, so it only gets validated.
pub fn design_simo_prefilter(f: &TransferMatrix, k1: f64, settings: ZfeSettings) -> Result<crate::spectral::ScalarFactor> {
    if f.cols() != 1 {
        return Err(Error::DimensionMismatch {
            what: "SIMO filter inputs",
            expected: 1,
            found: f.cols(),
        });
    }
    if !(k1 > 0.0 && k1.is_finite()) {
        return Err(Error::InvalidPrivacy(format!("k must be positive, got {k1}")));
    }
    factor_column(&column_norm_spectrum(f, 0, settings.grid_n), None, settings.order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalPrefilter {
    pub g: TransferMatrix,
    /// Relative L∞ error of |G_ii|² against |F_i|₂/k_i, per column.
    pub fit_errors: Vec<f64>,
}

/// Optimal diagonal prefilter: k_i|G_ii|² = |F_i|₂, one factorization per
/// column (run in parallel).
pub fn design_diag_prefilter(f: &TransferMatrix, k: &[f64], settings: ZfeSettings) -> Result<DiagonalPrefilter> {
    if k.len() != f.cols() {
        return Err(Error::DimensionMismatch {
            what: "adjacency weights",
            expected: f.cols(),
            found: k.len(),
        });
    }
    if let Some(bad) = k.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidPrivacy(format!("k must be positive, got {bad}")));
    }
    let factors: Vec<_> = (0..f.cols())
        .into_par_iter()
        .map(|j| {
            let s = column_norm_spectrum(f, j, settings.grid_n).scale(1.0 / k[j]);
            factor_column(&s, Some(j), settings.order)
        })
        .collect::<Result<_>>()?;
    Ok(DiagonalPrefilter {
        fit_errors: factors.iter().map(|f| f.relative_error).collect(),
        g: TransferMatrix::diagonal(factors.into_iter().map(|f| f.filter).collect()),
    })
}

/// κ²((1/2π)∫ Σ_i k_i|F_i(e^{jω})|₂ dω)², trapezoidal on N points.
pub fn zfe_mse_diag_bound(f: &TransferMatrix, privacy: &PrivacySpec, n: usize) -> Result<f64> {
    check_weights(f, privacy)?;
    let vals: Vec<f64> = (0..=n)
        .map(|q| {
            let r = f.response(q as f64 * std::f64::consts::PI / n as f64);
            (0..f.cols()).map(|j| privacy.k[j] * r.column(j).norm()).sum()
        })
        .collect();
    let mean = trapezoid_mean(&vals);
    Ok(privacy.kappa().powi(2) * mean * mean)
}

/// κ²((1/2π)∫‖F(e^{jω})K‖_* dω)²: no ZFE mechanism, diagonal or not,
/// can do better than this under the sensitivity lower bound.
pub fn zfe_general_lower_bound(f: &TransferMatrix, privacy: &PrivacySpec, n: usize) -> Result<f64> {
    check_weights(f, privacy)?;
    let kmat = to_complex(&crate::linalg::RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&privacy.k)));
    let vals: Vec<f64> = (0..=n)
        .map(|q| {
            let fk = f.response(q as f64 * std::f64::consts::PI / n as f64) * &kmat;
            fk.singular_values().iter().sum()
        })
        .collect();
    let mean = trapezoid_mean(&vals);
    Ok(privacy.kappa().powi(2) * mean * mean)
}

fn check_weights(f: &TransferMatrix, privacy: &PrivacySpec) -> Result<()> {
    privacy.validate()?;
    if privacy.channels() != f.cols() {
        return Err(Error::DimensionMismatch {
            what: "adjacency weights",
            expected: f.cols(),
            found: privacy.channels(),
        });
    }
    Ok(())
}

fn check_invertible(g: &TransferMatrix) -> Result<Vec<RationalFilter>> {
    let diag = g.diagonal_entries()?;
    for e in &diag {
        if !e.is_stable() {
            return Err(Error::UnstableSystem { radius: e.pole_radius() });
        }
        if !e.is_minimum_phase() {
            let radius = if e.numerator()[0] == 0.0 { f64::INFINITY } else { e.zero_radius() };
            return Err(Error::UnstableInverse { radius });
        }
    }
    Ok(diag)
}

/// H = F·G⁻¹, column j divided by G_jj.
pub fn zero_forcing_postfilter(f: &TransferMatrix, g: &TransferMatrix) -> Result<TransferMatrix> {
    if g.rows() != f.cols() {
        return Err(Error::DimensionMismatch {
            what: "prefilter size",
            expected: f.cols(),
            found: g.rows(),
        });
    }
    let inv: Vec<RationalFilter> = check_invertible(g)?
        .iter()
        .map(RationalFilter::inverse)
        .collect::<Result<_>>()?;
    f.scale_columns(&inv)
}

/// κ²‖GK‖₂²‖FG⁻¹‖₂² for a diagonal, minimum-phase G.
pub fn zfe_mse(f: &TransferMatrix, g: &TransferMatrix, privacy: &PrivacySpec) -> Result<f64> {
    check_weights(f, privacy)?;
    let h = zero_forcing_postfilter(f, g)?;
    let gk = crate::sensitivity::diagonal_sensitivity(g, &privacy.k)?;
    let fl: f64 = h
        .entries()
        .par_iter()
        .map(|e| if e.is_zero() { Ok(0.0) } else { e.h2_norm_squared() })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(privacy.kappa().powi(2) * gk * gk * fl)
}

/// Mechanism with prefilter G, noise κ‖GK‖₂ and postfilter F·G⁻¹.
pub fn assemble_zfe(f: &TransferMatrix, g: &TransferMatrix, privacy: &PrivacySpec, grid_n: usize) -> Result<MechanismDesign> {
    check_weights(f, privacy)?;
    let h = zero_forcing_postfilter(f, g)?;
    let sensitivity = crate::sensitivity::diagonal_sensitivity(g, &privacy.k)?;
    let theory = zfe_mse(f, g, privacy)?;
    let diag_bound = zfe_mse_diag_bound(f, privacy, grid_n)?;
    let nuclear = zfe_general_lower_bound(f, privacy, grid_n)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("diag_bound".to_string(), diag_bound);
    diagnostics.insert("nuclear_lower_bound".to_string(), nuclear);
    diagnostics.insert("bound_ratio".to_string(), theory / diag_bound);
    diagnostics.insert("nuclear_gap_ratio".to_string(), diag_bound / nuclear);
    Ok(MechanismDesign {
        kind: MechanismKind::Zfe,
        desired: f.clone(),
        prefilter: g.clone(),
        noise_sigma: privacy.kappa() * sensitivity,
        sensitivity,
        privacy: privacy.clone(),
        postfilter: Postfilter::Rational { h },
        theory_mse: Some(theory),
        input_mean: vec![0.0; f.cols()],
        grid_n,
        allocation: None,
        diagnostics,
    })
}

/// Optimal diagonal ZFE mechanism for F.
pub fn design_zfe(f: &TransferMatrix, privacy: &PrivacySpec, settings: ZfeSettings) -> Result<MechanismDesign> {
    check_weights(f, privacy)?;
    let pre = design_diag_prefilter(f, &privacy.k, settings)?;
    let mut design = assemble_zfe(f, &pre.g, privacy, settings.grid_n)?;
    let worst = pre.fit_errors.iter().copied().fold(0.0, f64::max);
    design.diagnostics.insert("max_fit_error".into(), worst);
    design.diagnostics.insert("factor_order".into(), settings.order as f64);
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::LtiSystem;

    fn privacy(k: Vec<f64>) -> PrivacySpec {
        PrivacySpec::new(5f64.ln(), 0.05, k).unwrap()
    }

    #[test]
    fn constant_column_gives_constant_factor() {
        let f = TransferMatrix::new(2, 1, vec![RationalFilter::gain(3.0), RationalFilter::gain(4.0)]).unwrap();
        let g = design_simo_prefilter(&f, 2.0, ZfeSettings { grid_n: 64, order: 4 }).unwrap();
        assert!((g.filter.numerator()[0] - 5f64.sqrt()).abs() < 1e-10);
        assert!(g.filter.numerator()[1..].iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn moving_average_factor_has_unit_dc() {
        let f = TransferMatrix::scalar(RationalFilter::moving_average(20, 1));
        let g = design_simo_prefilter(&f, 1.0, ZfeSettings::default()).unwrap();
        let dc = g.filter.response(0.0).norm_sqr();
        assert!((dc - 1.0).abs() < 0.05, "{dc}");
        assert!(g.filter.is_minimum_phase());
    }

    #[test]
    fn single_column_diag_matches_simo() {
        let f = TransferMatrix::new(2, 1, vec![RationalFilter::fir(vec![1.0, 0.5]), RationalFilter::fir(vec![0.2, -0.3, 0.1])]).unwrap();
        let s = ZfeSettings { grid_n: 256, order: 30 };
        let simo = design_simo_prefilter(&f, 4.0, s).unwrap();
        let diag = design_diag_prefilter(&f, &[4.0], s).unwrap();
        for (a, b) in simo.filter.numerator().iter().zip(diag.g.get(0, 0).numerator()) {
            assert!((a / 2.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_for_constant_filters() {
        let p = privacy(vec![1.0]);
        let eye = TransferMatrix::identity(1);
        let k2 = p.kappa().powi(2);
        assert!((zfe_mse_diag_bound(&eye, &p, 32).unwrap() - k2).abs() < 1e-12 * k2);
        let f = TransferMatrix::diagonal(vec![RationalFilter::gain(2.0), RationalFilter::gain(-3.0)]);
        let p2 = privacy(vec![1.0, 2.0]);
        let expect = p2.kappa().powi(2) * (2.0 + 6.0f64).powi(2);
        assert!((zfe_mse_diag_bound(&f, &p2, 32).unwrap() - expect).abs() < 1e-10 * expect);
        let eye3 = TransferMatrix::identity(3);
        let p3 = privacy(vec![1.0; 3]);
        let a = zfe_mse_diag_bound(&eye3, &p3, 32).unwrap();
        let b = zfe_general_lower_bound(&eye3, &p3, 32).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn identity_prefilter_is_output_perturbation() {
        let f = TransferMatrix::scalar(RationalFilter::gain(1.0));
        let p = privacy(vec![1.0]);
        let d = assemble_zfe(&f, &TransferMatrix::identity(1), &p, 64).unwrap();
        assert!((d.noise_sigma - p.kappa()).abs() < 1e-15);
        assert!((d.theory_mse.unwrap() - p.kappa().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn non_minimum_phase_prefilter_rejected() {
        let f = TransferMatrix::scalar(RationalFilter::gain(1.0));
        let g = TransferMatrix::scalar(RationalFilter::fir(vec![1.0, 2.0]));
        let err = assemble_zfe(&f, &g, &privacy(vec![1.0]), 64).unwrap_err();
        assert!(matches!(err, Error::UnstableInverse { .. }));
    }

    #[test]
    fn zero_forcing_identity_on_grid() {
        let f = TransferMatrix::new(
            2,
            2,
            vec![
                RationalFilter::moving_average(4, 0),
                RationalFilter::zero(),
                RationalFilter::new(vec![0.5], vec![1.0, -0.7]).unwrap(),
                RationalFilter::fir(vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        let p = privacy(vec![1.0, 2.0]);
        let d = design_zfe(&f, &p, ZfeSettings { grid_n: 256, order: 30 }).unwrap();
        let Postfilter::Rational { h } = &d.postfilter else { panic!() };
        for q in 0..=64 {
            let w = q as f64 * std::f64::consts::PI / 64.0;
            let diff = h.response(w) * d.prefilter.response(w) - f.response(w);
            assert!(diff.norm() < 1e-6, "ω = {w}: {}", diff.norm());
        }
        let ratio = d.diagnostics["bound_ratio"];
        assert!((1.0 - 1e-9..1.05).contains(&ratio), "{ratio}");
        assert!(d.diagnostics["nuclear_lower_bound"] <= d.diagnostics["diag_bound"] * (1.0 + 1e-12));
        assert!(h.is_stable());
    }

    #[test]
    fn column_mismatch_reports_dimension() {
        let f = TransferMatrix::identity(2);
        assert!(matches!(design_diag_prefilter(&f, &[1.0], ZfeSettings::default()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vanishing_column_is_not_factorizable() {
        let f = TransferMatrix::diagonal(vec![RationalFilter::gain(1.0), RationalFilter::zero()]);
        match design_diag_prefilter(&f, &[1.0, 1.0], ZfeSettings { grid_n: 64, order: 8 }) {
            Err(Error::NotFactorizable { column, .. }) => assert_eq!(column, Some(1)),
            other => panic!("{other:?}"),
        }
    }
}
