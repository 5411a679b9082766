//! Assembled mechanisms: prefilter G, white noise of standard deviation σ on
//! every prefilter output, and a postfilter that turns the private signal
//! v = Gu + w into the estimate ŷ of y = Fu.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::df::Domain;
use crate::error::{Error, Result};
use crate::linalg::{two_sided_impulse, RMat};
use crate::lms::AllocationProfile;
use crate::lti::{LtiSystem, SpectrumGrid, TransferMatrix};
use crate::privacy::{gaussian_noise, PrivacySpec};
use crate::stream::EventStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    /// G = F, H = I: noise added directly to the desired outputs.
    OutputPerturbation,
    Zfe,
    LmsSmoother,
    LmsCausal,
    DecisionFeedback,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::OutputPerturbation => "output_perturbation",
            MechanismKind::Zfe => "zfe",
            MechanismKind::LmsSmoother => "lms_smoother",
            MechanismKind::LmsCausal => "lms_causal",
            MechanismKind::DecisionFeedback => "decision_feedback",
        }
    }
}

/// Matrix FIR filter Σ_l C_l z^{-(start + l)}; a negative `start` makes it
/// non-causal (it then reads future samples, which is fine off-line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedFir {
    pub start: i64,
    pub taps: Vec<RMat>,
}

impl TwoSidedFir {
    pub fn rows(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.taps[0].ncols()
    }

    /// Inverse transform of half-circle samples, trimmed to the shortest
    /// lag window holding all but a `tail` fraction of the energy.
    pub fn from_grid(grid: &SpectrumGrid, tail: f64) -> Self {
        let (lags, coeffs) = two_sided_impulse(grid.samples());
        let energy: Vec<f64> = coeffs.iter().map(|c| c.norm_squared()).collect();
        let total: f64 = energy.iter().sum();
        let budget = tail * total;
        let (mut lo, mut hi) = (0, energy.len());
        let mut dropped = 0.0;
        while lo + 1 < hi {
            let (a, b) = (energy[lo], energy[hi - 1]);
            let cheaper = a.min(b);
            if dropped + cheaper > budget {
                break;
            }
            dropped += cheaper;
            if a <= b {
                lo += 1;
            } else {
                hi -= 1;
            }
        }
        Self {
            start: lags[lo],
            taps: coeffs[lo..hi].to_vec(),
        }
    }

    /// Causal filter from impulse-response coefficients C_0, C_1, ...
    pub fn causal(taps: Vec<RMat>) -> Self {
        Self { start: 0, taps }
    }

    pub fn lags(&self) -> std::ops::Range<i64> {
        self.start..self.start + self.taps.len() as i64
    }

    pub fn response(&self, omega: f64) -> crate::linalg::CMat {
        let mut out = crate::linalg::CMat::zeros(self.rows(), self.cols());
        for (lag, c) in self.lags().zip(&self.taps) {
            out += crate::linalg::to_complex(c) * (-crate::linalg::J * omega * lag as f64).exp();
        }
        out
    }

    /// y_t = Σ_l C_l x_{t − lag_l}, with x = 0 outside the record.
    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let len = x.first().map_or(0, Vec::len) as i64;
        let mut y = vec![vec![0.0; len as usize]; self.rows()];
        for (lag, c) in self.lags().zip(&self.taps) {
            for i in 0..self.rows() {
                for (j, xj) in x.iter().enumerate() {
                    let w = c[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    let t0 = lag.max(0);
                    let t1 = (len + lag).min(len);
                    for t in t0..t1 {
                        y[i][t as usize] += w * xj[(t - lag) as usize];
                    }
                }
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfPostfilter {
    /// Forward filter H₁ acting on v; lags ≥ −lookahead.
    pub forward: TwoSidedFir,
    /// Monic B = I + H₂, coefficients B_0 = I, B_1, ...
    pub feedback: Vec<RMat>,
    pub lookahead: usize,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Postfilter {
    Rational { h: TransferMatrix },
    Fir { h: TwoSidedFir },
    DecisionFeedback(DfPostfilter),
}

/// Signals produced by one mechanism run, aligned in time.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismRun {
    pub y: EventStream,
    pub v: EventStream,
    pub yhat: EventStream,
    /// Decision-feedback only: Fũ, the estimate before the decision device.
    pub pre_decision: Option<EventStream>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismDesign {
    pub kind: MechanismKind,
    pub desired: TransferMatrix,
    pub prefilter: TransferMatrix,
    pub noise_sigma: f64,
    /// ℓ₂-sensitivity of the prefilter used for the calibration.
    pub sensitivity: f64,
    pub privacy: PrivacySpec,
    pub postfilter: Postfilter,
    /// Theoretical MSE lim (1/T) Σ E|y_t − ŷ_t|²; for the DF mechanism this
    /// assumes correct past decisions; absent when no closed form applies.
    pub theory_mse: Option<f64>,
    /// Public input mean μ; the mechanism works on u − μ and adds F(1)μ back.
    pub input_mean: Vec<f64>,
    pub grid_n: usize,
    #[serde(default)]
    pub allocation: Option<AllocationProfile>,
    /// Named scalar diagnostics (fit residuals, bounds, gaps).
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl MechanismDesign {
    pub fn inputs(&self) -> usize {
        self.desired.cols()
    }

    pub fn outputs(&self) -> usize {
        self.desired.rows()
    }

    /// Publication delay introduced by the postfilter.
    pub fn delay(&self) -> usize {
        match &self.postfilter {
            Postfilter::DecisionFeedback(df) => df.lookahead,
            _ => 0,
        }
    }

    /// Impulse-response length after which every filter on the error path
    /// has shed all but `tail` of its energy.
    pub fn memory(&self, tail: f64) -> usize {
        let rational = |tm: &TransferMatrix| -> usize {
            let probe = tm.effective_memory(tail).clamp(1, 1 << 20);
            // Refine the pole-radius estimate with the actual energy decay.
            let mut worst = 0;
            for e in tm.entries().iter().filter(|e| !e.is_zero()) {
                if e.is_fir() {
                    worst = worst.max(e.numerator().len());
                    continue;
                }
                let h = e.impulse_response(probe);
                let total: f64 = h.iter().map(|v| v * v).sum();
                let mut acc = total;
                let mut cut = h.len();
                for (t, v) in h.iter().enumerate() {
                    if acc <= tail * total {
                        cut = t;
                        break;
                    }
                    acc -= v * v;
                }
                worst = worst.max(cut);
            }
            worst.max(1)
        };
        let post = match &self.postfilter {
            Postfilter::Rational { h } => rational(h),
            Postfilter::Fir { h } => h.taps.len(),
            Postfilter::DecisionFeedback(df) => df.forward.taps.len() + df.feedback.len(),
        };
        rational(&self.desired).max(rational(&self.prefilter)).max(post)
    }

    /// Runs the mechanism on `u` with noise drawn from `seed`.
    pub fn run(&self, u: &EventStream, seed: u64) -> Result<MechanismRun> {
        if u.channel_count() != self.inputs() {
            return Err(Error::DimensionMismatch {
                what: "input channels",
                expected: self.inputs(),
                found: u.channel_count(),
            });
        }
        let len = u.len();
        let y = self.desired.simulate(u)?;
        let gu = self.prefilter.simulate(u)?;
        let noise = gaussian_noise(gu.channel_count(), len, self.noise_sigma, seed);
        let mut v_channels = gu.into_channels();
        for (vc, nc) in v_channels.iter_mut().zip(&noise) {
            for (a, b) in vc.iter_mut().zip(nc) {
                *a += b;
            }
        }
        let v = EventStream::from_channels("v", v_channels)?;

        let mu = &self.input_mean;
        let centered = mu.iter().any(|&m| m != 0.0);
        let g_mu = self.prefilter.response(0.0).map(|c| c.re) * nalgebra::DVector::from_column_slice(mu);
        let f_mu = self.desired.response(0.0).map(|c| c.re) * nalgebra::DVector::from_column_slice(mu);
        let v_centered: Vec<Vec<f64>> = v
            .channels()
            .iter()
            .enumerate()
            .map(|(i, c)| c.iter().map(|x| x - if centered { g_mu[i] } else { 0.0 }).collect())
            .collect();

        let mut yhat = match &self.postfilter {
            Postfilter::Rational { h } => h
                .simulate(&EventStream::from_channels("v", v_centered)?)?
                .into_channels(),
            Postfilter::Fir { h } => h.apply(&v_centered),
            Postfilter::DecisionFeedback(df) => {
                // Decisions are in absolute units already; no mean to add back.
                let (uhat, utilde) = crate::df::run_df_loop(df, &v_centered, mu)?;
                let yhat = self.desired.simulate(&EventStream::from_channels("u", uhat)?)?;
                let pre = self.desired.simulate(&EventStream::from_channels("u", utilde)?)?;
                return Ok(MechanismRun {
                    y,
                    v,
                    yhat: EventStream::from_channels("yhat", yhat.into_channels())?,
                    pre_decision: Some(EventStream::from_channels("ytilde", pre.into_channels())?),
                });
            }
        };
        if centered {
            for (i, c) in yhat.iter_mut().enumerate() {
                c.iter_mut().for_each(|x| *x += f_mu[i]);
            }
        }
        Ok(MechanismRun {
            y,
            v,
            yhat: EventStream::from_channels("yhat", yhat)?,
            pre_decision: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Output perturbation: noise calibrated to the upper sensitivity bound
/// |k|₂‖F‖₂ added to y directly; MSE = p·σ².
pub fn output_perturbation(f: &TransferMatrix, privacy: &PrivacySpec, grid_n: usize) -> Result<MechanismDesign> {
    privacy.validate()?;
    let (_, upper) = crate::sensitivity::mimo_bounds(f, &privacy.k)?;
    let sigma = privacy.kappa() * upper;
    Ok(MechanismDesign {
        kind: MechanismKind::OutputPerturbation,
        desired: f.clone(),
        prefilter: f.clone(),
        noise_sigma: sigma,
        sensitivity: upper,
        privacy: privacy.clone(),
        postfilter: Postfilter::Rational {
            h: TransferMatrix::identity(f.rows()),
        },
        theory_mse: Some(f.rows() as f64 * sigma * sigma),
        input_mean: vec![0.0; f.cols()],
        grid_n,
        allocation: None,
        diagnostics: BTreeMap::new(),
    })
}
