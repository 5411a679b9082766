//! Markov-chain event sources.
//!
//! The state x_t ∈ {e_1, …, e_N} evolves with a column-stochastic Π
//! (Π_ij = P(x_{t+1} = e_i | x_t = e_j)); each event channel is an indicator
//! u_{i,t} = e_{s_i}ᵀ x_t.
//!
//! Spectra are computed for the centered indicators. With D = diag(p) and
//! the deflated matrix Π̃ = Π − p𝟏ᵀ (which drops the unit eigenvalue),
//!
//! ```text
//! R[0] = D − ppᵀ,   R[k] = Π̃ᵏD  (k ≥ 1),
//! P(z) = D − ppᵀ + (zI − Π̃)⁻¹Π̃D + [(zI − Π̃)⁻¹Π̃D]*,
//! ```
//!
//! which agrees with ppᵀ + H(z)CH(z⁻¹)ᵀ, H = (zI − Π)⁻¹, C = D − ΠDΠᵀ, away
//! from ω = 0 and stays finite at ω = 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, to_complex, CMat, RMat, J};
use crate::lti::{RationalFilter, SpectrumGrid, TransferMatrix};
use crate::stream::EventStream;

const STOCHASTIC_TOL: f64 = 1e-12;
/// Second-eigenvalue modulus at or above 1 − this counts as non-ergodic.
const ERGODIC_GAP: f64 = 1e-10;

/// Transition matrix plus the states that emit events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSource", into = "RawSource")]
pub struct MarkovSource {
    pi: RMat,
    selectors: Vec<usize>,
}

/// File form: `transition[i][j]` = P(next = i | current = j), 0-based
/// selector indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSource {
    pub transition: Vec<Vec<f64>>,
    pub selectors: Vec<usize>,
}

impl TryFrom<RawSource> for MarkovSource {
    type Error = Error;
    fn try_from(raw: RawSource) -> Result<Self> {
        let n = raw.transition.len();
        if raw.transition.iter().any(|r| r.len() != n) {
            return Err(Error::Config("transition matrix must be square".into()));
        }
        let pi = RMat::from_fn(n, n, |i, j| raw.transition[i][j]);
        MarkovSource::new(pi, raw.selectors)
    }
}

impl From<MarkovSource> for RawSource {
    fn from(s: MarkovSource) -> Self {
        let n = s.pi.nrows();
        RawSource {
            transition: (0..n).map(|i| (0..n).map(|j| s.pi[(i, j)]).collect()).collect(),
            selectors: s.selectors,
        }
    }
}

impl MarkovSource {
    /// Validates stochasticity, selector range and ergodicity.
    pub fn new(pi: RMat, selectors: Vec<usize>) -> Result<Self> {
        let n = pi.nrows();
        if n == 0 || pi.ncols() != n {
            return Err(Error::Config("transition matrix must be square and nonempty".into()));
        }
        if pi.iter().any(|v| !(*v >= -STOCHASTIC_TOL && *v <= 1.0 + STOCHASTIC_TOL)) {
            return Err(Error::Config("transition probabilities must lie in [0, 1]".into()));
        }
        for j in 0..n {
            let s: f64 = pi.column(j).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("column {j} of the transition matrix sums to {s}, not 1")));
            }
        }
        if selectors.is_empty() {
            return Err(Error::Config("at least one selector state is needed".into()));
        }
        if let Some(bad) = selectors.iter().find(|&&s| s >= n) {
            return Err(Error::Config(format!("selector {bad} is out of range for {n} states")));
        }
        let src = Self { pi, selectors };
        src.check_ergodic()?;
        Ok(src)
    }

    pub fn transition(&self) -> &RMat {
        &self.pi
    }

    pub fn selectors(&self) -> &[usize] {
        &self.selectors
    }

    pub fn states(&self) -> usize {
        self.pi.nrows()
    }

    pub fn channels(&self) -> usize {
        self.selectors.len()
    }

    /// Irreducible and aperiodic ⇔ 1 is a simple eigenvalue and every other
    /// eigenvalue lies strictly inside the unit circle.
    fn check_ergodic(&self) -> Result<()> {
        let mut mods: Vec<f64> = eigenvalues(&self.pi).iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.partial_cmp(a).expect("finite moduli"));
        if mods.len() > 1 && mods[1] >= 1.0 - ERGODIC_GAP {
            return Err(Error::NotErgodic(format!(
                "second eigenvalue modulus {:.12} (reducible or periodic chain)",
                mods[1]
            )));
        }
        Ok(())
    }

    /// Largest modulus among the non-unit eigenvalues.
    pub fn second_eigenvalue_modulus(&self) -> f64 {
        let mut mods: Vec<f64> = eigenvalues(&self.pi).iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.partial_cmp(a).expect("finite moduli"));
        mods.get(1).copied().unwrap_or(0.0)
    }

    /// Stationary means p_{s_i} of the event channels.
    pub fn channel_means(&self) -> Result<Vec<f64>> {
        let p = stationary_distribution(self)?;
        Ok(self.selectors.iter().map(|&s| p[s]).collect())
    }

    fn select(&self, m: &RMat) -> RMat {
        let c = self.channels();
        RMat::from_fn(c, c, |a, b| m[(self.selectors[a], self.selectors[b])])
    }
}

/// Solves (Π − I)p = 0 with Σp = 1 (one balance equation replaced by the
/// normalization).
pub fn stationary_distribution(src: &MarkovSource) -> Result<Vec<f64>> {
    let n = src.states();
    let mut a = &src.pi - RMat::identity(n, n);
    let mut b = nalgebra::DVector::zeros(n);
    a.row_mut(n - 1).fill(1.0);
    b[n - 1] = 1.0;
    let p = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NotErgodic("stationary equations are singular".into()))?;
    Ok(p.iter().copied().collect())
}

/// Stationary distribution by power iteration from the uniform vector;
/// an independent check on [`stationary_distribution`].
pub fn stationary_by_power(src: &MarkovSource, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = src.states();
    let mut p = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        let next = &src.pi * &p;
        let change = (&next - &p).amax();
        p = next;
        if change < tol {
            return Ok(p.iter().copied().collect());
        }
    }
    Err(Error::NotErgodic(format!("power iteration did not settle in {max_iter} steps")))
}

fn deflated(src: &MarkovSource, p: &[f64]) -> RMat {
    let n = src.states();
    RMat::from_fn(n, n, |i, j| src.pi[(i, j)] - p[i])
}

/// Centered spectrum of the selected indicator channels on ω_q = qπ/N.
pub fn chain_spectrum(src: &MarkovSource, n: usize) -> Result<SpectrumGrid> {
    let p = stationary_distribution(src)?;
    let states = src.states();
    let d = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&p));
    let pp = nalgebra::DVector::from_column_slice(&p);
    let r0 = to_complex(&(&d - &pp * pp.transpose()));
    let pt = deflated(src, &p);
    let ptd = to_complex(&(&pt * &d));
    let ptc = to_complex(&pt);
    let mut samples = Vec::with_capacity(n + 1);
    for q in 0..=n {
        let z = (J * (q as f64 * std::f64::consts::PI / n as f64)).exp();
        let m = CMat::identity(states, states) * z - &ptc;
        let causal = m
            .lu()
            .solve(&ptd)
            .ok_or_else(|| Error::NotErgodic("zI − Π̃ is singular on the unit circle".into()))?;
        let full = &r0 + &causal + causal.adjoint();
        let c = src.channels();
        samples.push(CMat::from_fn(c, c, |a, b| full[(src.selectors[a], src.selectors[b])]));
    }
    SpectrumGrid::new(samples)
}

/// The textbook form ppᵀ + H(z)CH(z)* with H = (zI − Π)⁻¹ at one ω ≠ 0,
/// restricted to the selectors but with the mean term dropped.
pub fn chain_spectrum_textbook(src: &MarkovSource, omega: f64) -> Result<CMat> {
    let p = stationary_distribution(src)?;
    let n = src.states();
    let d = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&p));
    let c = to_complex(&(&d - &src.pi * &d * src.pi.transpose()));
    let z = (J * omega).exp();
    let h = (CMat::identity(n, n) * z - to_complex(&src.pi))
        .try_inverse()
        .ok_or_else(|| Error::Config("ω must avoid the unit eigenvalue of Π".into()))?;
    let full = &h * c * h.adjoint();
    let k = src.channels();
    Ok(CMat::from_fn(k, k, |a, b| full[(src.selectors[a], src.selectors[b])]))
}

/// Centered autocovariance E[ũ_t ũ_{t−k}ᵀ] = sel(Πᵏ D − ppᵀ)selᵀ by matrix
/// powers.
pub fn autocovariance_by_powers(src: &MarkovSource, max_lag: usize) -> Result<Vec<RMat>> {
    let p = stationary_distribution(src)?;
    let d = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(&p));
    let pp = nalgebra::DVector::from_column_slice(&p);
    let ppt = &pp * pp.transpose();
    let mut power = RMat::identity(src.states(), src.states());
    let mut out = Vec::with_capacity(max_lag + 1);
    for _ in 0..=max_lag {
        out.push(src.select(&(&power * &d - &ppt)));
        power = &src.pi * power;
    }
    Ok(out)
}

/// Simulates T steps from a stationary start; channel i is the indicator
/// of state s_i.
pub fn sample_chain(src: &MarkovSource, steps: usize, seed: u64) -> Result<EventStream> {
    let p = stationary_distribution(src)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = src.states();
    let draw = |probs: &mut dyn Iterator<Item = f64>, rng: &mut ChaCha8Rng| -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, pr) in probs.enumerate() {
            acc += pr;
            last = i;
            if r < acc {
                return i;
            }
        }
        last
    };
    let mut state = draw(&mut p.iter().copied(), &mut rng);
    let mut channels = vec![vec![0.0; steps]; src.channels()];
    for t in 0..steps {
        for (c, &s) in src.selectors.iter().enumerate() {
            if state == s {
                channels[c][t] = 1.0;
            }
        }
        let col = state;
        state = draw(&mut (0..n).map(|i| src.pi[(i, col)]), &mut rng);
    }
    EventStream::from_channels("u", channels)
}

/// Four-state server: idle → s₁ with probability α, s₁ → busy, busy → s₂
/// with probability β, s₂ → idle. Events are emitted in s₁ and s₂.
pub fn server_example(alpha: f64, beta: f64) -> Result<MarkovSource> {
    server_chain(alpha, beta, vec![1, 3])
}

/// The server chain with arbitrary selected states (0 idle, 1 s₁, 2 busy,
/// 3 s₂).
///
/// With the default selectors the two event counts can never drift apart
/// by more than one, so the spectrum is singular at ω = 0; selecting s₁
/// and busy instead gives a spectrum that is positive definite everywhere,
/// as decision-feedback designs require.
pub fn server_chain(alpha: f64, beta: f64, selectors: Vec<usize>) -> Result<MarkovSource> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::NotErgodic(format!(
            "server chain needs α, β in (0, 1); got α = {alpha}, β = {beta}"
        )));
    }
    let mut pi = RMat::zeros(4, 4);
    pi[(0, 0)] = 1.0 - alpha;
    pi[(1, 0)] = alpha;
    pi[(2, 1)] = 1.0;
    pi[(2, 2)] = 1.0 - beta;
    pi[(3, 2)] = beta;
    pi[(0, 3)] = 1.0;
    MarkovSource::new(pi, selectors)
}

/// Closed-form stationary vector of the server chain:
/// (β, αβ, α, αβ)/(α + β + 2αβ).
pub fn server_stationary(alpha: f64, beta: f64) -> [f64; 4] {
    let q = alpha + beta + 2.0 * alpha * beta;
    [beta / q, alpha * beta / q, alpha / q, alpha * beta / q]
}

/// Demonstration query for two-channel chains (a toolkit choice): an
/// exponentially weighted average (1/8)/(1 − (7/8)z⁻¹) of each channel. Its
/// response has no zeros on the unit circle, so F*F is positive definite.
pub fn demo_filter() -> TransferMatrix {
    let ewma = RationalFilter::new(vec![0.125], vec![1.0, -0.875]).expect("valid coefficients");
    TransferMatrix::diagonal(vec![ewma; 2])
}

/// Mean vector and spectrum of a source, as consumed by LMS and DF designs.
pub fn input_model(src: &MarkovSource, n: usize) -> Result<(Vec<f64>, SpectrumGrid)> {
    Ok((src.channel_means()?, chain_spectrum(src, n)?))
}
