//! File formats: filter definitions and input-model (spectrum) files, both
//! TOML.
//!
//! A filter file holds a transfer matrix with row-major entries:
//!
//! ```toml
//! rows = 1
//! cols = 2
//!
//! [[entries]]
//! num = [0.5, 0.5]
//!
//! [[entries]]
//! num = [1.0]
//! den = [1.0, -0.5]
//! ```
//!
//! A spectrum file describes the public second-order statistics of the
//! input, selected by `kind`:
//!
//! * `autocovariance` — `mean` and `lags[k][i][j]` = E[ũ_{i,t} ũ_{j,t−k}]
//!   for k = 0..L (zero beyond L);
//! * `rational` — `mean`, a shaping matrix `filter` and white-noise
//!   `variance`: P = variance · H H*;
//! * `markov` — `transition` and `selectors` of a Markov source; mean and
//!   spectrum follow from the chain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, J};
use crate::lti::{SpectrumGrid, TransferMatrix};
use crate::markov::{self, MarkovSource, RawSource};

/// Public input statistics consumed by the LMS and DF designs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputModel {
    pub mean: Vec<f64>,
    pub spectrum: SpectrumGrid,
}

impl InputModel {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Autocovariance {
        mean: Vec<f64>,
        lags: Vec<Vec<Vec<f64>>>,
    },
    Rational {
        mean: Vec<f64>,
        filter: TransferMatrix,
        #[serde(default = "unit")]
        variance: f64,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        selectors: Vec<usize>,
    },
}

fn unit() -> f64 {
    1.0
}

impl SpectrumSpec {
    pub fn from_markov(src: &MarkovSource) -> Self {
        let raw = RawSource::from(src.clone());
        SpectrumSpec::Markov {
            transition: raw.transition,
            selectors: raw.selectors,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SpectrumSpec::Autocovariance { mean, .. } | SpectrumSpec::Rational { mean, .. } => mean.len(),
            SpectrumSpec::Markov { selectors, .. } => selectors.len(),
        }
    }

    /// Samples the spectrum on ω_q = qπ/n.
    pub fn input_model(&self, n: usize) -> Result<InputModel> {
        if n == 0 {
            return Err(Error::Config("grid size must be positive".into()));
        }
        match self {
            SpectrumSpec::Autocovariance { mean, lags } => {
                let m = mean.len();
                if lags.is_empty() {
                    return Err(Error::Config("autocovariance needs at least the lag-0 matrix".into()));
                }
                let mats = lags
                    .iter()
                    .enumerate()
                    .map(|(k, rows)| {
                        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                            return Err(Error::Config(format!("lag {k} must be a {m}×{m} matrix")));
                        }
                        Ok(crate::linalg::RMat::from_fn(m, m, |i, j| rows[i][j]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let r0 = &mats[0];
                if (r0 - r0.transpose()).amax() > 1e-12 * r0.amax().max(1.0) {
                    return Err(Error::Config("lag-0 covariance must be symmetric".into()));
                }
                let spectrum = SpectrumGrid::from_fn(n, m, m, |w| {
                    let mut p = crate::linalg::to_complex(r0);
                    for (k, rk) in mats.iter().enumerate().skip(1) {
                        let e = (-J * (w * k as f64)).exp();
                        let term = crate::linalg::to_complex(rk) * e;
                        p += &term + term.adjoint();
                    }
                    p
                });
                let (_, min_eig) = spectrum.hermitian_psd_report();
                if min_eig < -1e-9 * r0.amax().max(1e-300) {
                    return Err(Error::Config(format!(
                        "autocovariance sequence is not positive semidefinite (spectrum eigenvalue {min_eig:.3e})"
                    )));
                }
                Ok(InputModel {
                    mean: mean.clone(),
                    spectrum,
                })
            }
            SpectrumSpec::Rational { mean, filter, variance } => {
                if filter.rows() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        what: "shaping filter rows",
                        expected: mean.len(),
                        found: filter.rows(),
                    });
                }
                if !(*variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::Config(format!("noise variance must be nonnegative, got {variance}")));
                }
                if filter.max_pole_radius() >= 1.0 - crate::lti::STABILITY_MARGIN {
                    return Err(Error::UnstableSystem {
                        radius: filter.max_pole_radius(),
                    });
                }
                let m = mean.len();
                let spectrum = SpectrumGrid::from_fn(n, m, m, |w| {
                    let h: CMat = filter.response(w);
                    &h * h.adjoint() * num_complex::Complex64::new(*variance, 0.0)
                });
                Ok(InputModel {
                    mean: mean.clone(),
                    spectrum,
                })
            }
            SpectrumSpec::Markov { transition, selectors } => {
                let src = MarkovSource::try_from(RawSource {
                    transition: transition.clone(),
                    selectors: selectors.clone(),
                })?;
                let (mean, spectrum) = markov::input_model(&src, n)?;
                Ok(InputModel { mean, spectrum })
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn parse_filter(text: &str) -> Result<TransferMatrix> {
    parse_toml(text, "filter file")
}

pub fn load_filter(path: impl AsRef<Path>) -> Result<TransferMatrix> {
    parse_filter(&read(path.as_ref())?)
}

pub fn filter_to_toml(f: &TransferMatrix) -> Result<String> {
    toml::to_string(f).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_spectrum(text: &str) -> Result<SpectrumSpec> {
    parse_toml(text, "spectrum file")
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<SpectrumSpec> {
    parse_spectrum(&read(path.as_ref())?)
}

pub fn spectrum_to_toml(s: &SpectrumSpec) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_markov(text: &str) -> Result<MarkovSource> {
    parse_toml(text, "Markov source file")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::RationalFilter;

    #[test]
    fn filter_round_trip() {
        let f = TransferMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                RationalFilter::new(vec![1.0, 0.5], vec![1.0, -0.25]).unwrap()
            } else {
                RationalFilter::zero()
            }
        });
        let text = filter_to_toml(&f).unwrap();
        assert_eq!(parse_filter(&text).unwrap(), f);
    }

    #[test]
    fn filter_shape_is_checked() {
        let bad = "rows = 2\ncols = 2\n[[entries]]\nnum = [1.0]\n";
        assert!(parse_filter(bad).is_err());
        let noncausal = "rows = 1\ncols = 1\n[[entries]]\nnum = [1.0]\nden = [0.0, 1.0]\n";
        assert!(parse_filter(noncausal).is_err());
        let typo = "rows = 1\ncols = 1\n[[entries]]\nnumer = [1.0]\n";
        assert!(parse_filter(typo).is_err());
    }

    #[test]
    fn ar1_autocovariance_matches_rational_form() {
        let a: f64 = 0.6;
        let lags: Vec<Vec<Vec<f64>>> = (0..200).map(|k| vec![vec![a.powi(k) / (1.0 - a * a)]]).collect();
        let acv = SpectrumSpec::Autocovariance { mean: vec![0.0], lags }.input_model(64).unwrap();
        let rat = SpectrumSpec::Rational {
            mean: vec![0.0],
            filter: TransferMatrix::scalar(RationalFilter::new(vec![1.0], vec![1.0, -a]).unwrap()),
            variance: 1.0,
        }
        .input_model(64)
        .unwrap();
        assert!(acv.spectrum.max_abs_diff(&rat.spectrum) < 1e-12);
    }

    #[test]
    fn spectrum_file_kinds_parse() {
        let text = "kind = \"markov\"\ntransition = [[0.9, 0.2], [0.1, 0.8]]\nselectors = [1]\n";
        let spec = parse_spectrum(text).unwrap();
        let model = spec.input_model(32).unwrap();
        assert!((model.mean[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!(parse_spectrum("kind = \"markov\"\ntransition = [[1.0]]\nselectors = [0]\nextra = 1\n").is_err());
        let bad = "kind = \"autocovariance\"\nmean = [0.0]\nlags = [[[1.0]], [[2.0]]]\n";
        assert!(parse_spectrum(bad).unwrap().input_model(32).is_err());
        let src = markov::server_example(0.3, 0.6).unwrap();
        let back = parse_spectrum(&spectrum_to_toml(&SpectrumSpec::from_markov(&src)).unwrap()).unwrap();
        assert_eq!(back, SpectrumSpec::from_markov(&src));
    }
}
