use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, min_hermitian_eigenvalue, trapezoid_weights, CMat};

/// Matrix-valued samples on ω_q = qπ/N, q = 0..=N. Values at −ω are the
/// complex conjugates of the values at ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    n: usize,
    rows: usize,
    cols: usize,
    samples: Vec<CMat>,
}

impl SpectrumGrid {
    pub fn new(samples: Vec<CMat>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("a spectrum grid needs at least two samples".into()));
        }
        let (rows, cols) = samples[0].shape();
        if let Some(bad) = samples.iter().find(|s| s.shape() != (rows, cols)) {
            return Err(Error::DimensionMismatch {
                what: "grid sample shape",
                expected: rows * cols,
                found: bad.len(),
            });
        }
        Ok(Self {
            n: samples.len() - 1,
            rows,
            cols,
            samples,
        })
    }

    pub fn from_fn(n: usize, rows: usize, cols: usize, mut f: impl FnMut(f64) -> CMat) -> Self {
        let samples = (0..=n)
            .map(|q| {
                let s = f(q as f64 * PI / n as f64);
                debug_assert_eq!(s.shape(), (rows, cols));
                s
            })
            .collect();
        Self {
            n,
            rows,
            cols,
            samples,
        }
    }

    /// Diagonal grid from scalar samples per channel.
    pub fn from_diagonal(channels: &[Vec<f64>]) -> Result<Self> {
        let m = channels.len();
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                what: "diagonal channel length",
                expected: len,
                found: channels.iter().map(Vec::len).find(|&l| l != len).unwrap_or(0),
            });
        }
        Self::new(
            (0..len)
                .map(|q| CMat::from_fn(m, m, |i, j| if i == j { Complex64::new(channels[i][q], 0.0) } else { Complex64::new(0.0, 0.0) }))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn omega(&self, q: usize) -> f64 {
        q as f64 * PI / self.n as f64
    }

    pub fn sample(&self, q: usize) -> &CMat {
        &self.samples[q]
    }

    pub fn samples(&self) -> &[CMat] {
        &self.samples
    }

    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n)
    }

    /// Trapezoidal approximation of (1/2π)∫_{-π}^{π} f(G(e^{jω})) dω for an
    /// even integrand.
    pub fn trapezoid_mean(&self, mut f: impl FnMut(&CMat) -> f64) -> f64 {
        self.weights()
            .iter()
            .zip(&self.samples)
            .map(|(w, s)| w * f(s))
            .sum()
    }

    pub fn map(&self, f: impl FnMut(&CMat) -> CMat) -> SpectrumGrid {
        SpectrumGrid::new(self.samples.iter().map(f).collect()).expect("mapped grid is consistent")
    }

    /// Pointwise combination of two grids of equal size.
    pub fn zip_map(&self, other: &SpectrumGrid, mut f: impl FnMut(&CMat, &CMat) -> CMat) -> Result<SpectrumGrid> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                what: "grid size",
                expected: self.n,
                found: other.n,
            });
        }
        SpectrumGrid::new(self.samples.iter().zip(&other.samples).map(|(a, b)| f(a, b)).collect())
    }

    /// Entry (i, j) across the grid.
    pub fn entry(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.samples.iter().map(|s| s[(i, j)]).collect()
    }

    /// Largest deviation from Hermitian symmetry and the smallest eigenvalue
    /// over all samples.
    pub fn hermitian_psd_report(&self) -> (f64, f64) {
        let mut asym: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        for s in &self.samples {
            asym = asym.max((s - s.adjoint()).norm());
            min_eig = min_eig.min(min_hermitian_eigenvalue(&hermitian_part(s)));
        }
        (asym, min_eig)
    }

    /// Fails with `NotPositiveDefinite` at the first sample whose smallest
    /// eigenvalue is not above `floor`.
    pub fn ensure_positive_definite(&self, floor: f64) -> Result<()> {
        for (index, s) in self.samples.iter().enumerate() {
            let min_eigenvalue = min_hermitian_eigenvalue(s);
            if !(min_eigenvalue > floor) {
                return Err(Error::NotPositiveDefinite {
                    index,
                    min_eigenvalue,
                });
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &SpectrumGrid) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
