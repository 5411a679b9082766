//! ℓ₂-sensitivity under the one-event-per-channel adjacency relation.
//!
//! Two input sets are adjacent when they differ by a single impulse of
//! magnitude at most k_i on each channel i, at arbitrary times t_i. The
//! sensitivity of G is the largest output energy ‖G(u − u′)‖₂ such a
//! difference can produce.
//!
//! SIMO and diagonal systems have closed forms. For general MIMO systems the
//! sensitivity lies between ‖GK‖₂ and |k|₂‖G‖₂; the exact value adds to
//! ‖GK‖₂² the pairwise cross terms k_i k_j sup_τ |c_ij(τ)|, where
//! c_ij(τ) = Σ_s h_i[s]ᵀ h_j[s + τ] is the cross-correlation of the impulse
//! responses of columns i and j. For a state-space model,
//!
//! c_ij(0) = D_iᵀD_j + B_iᵀP₀B_j,
//! c_ij(τ) = D_iᵀCA^{τ−1}B_j + B_iᵀP₀A^τB_j  (τ > 0),
//! c_ij(−τ) = c_ji(τ),
//!
//! with P₀ the observability Gramian.
//!
//! The suprema are taken independently per pair. With two channels this is
//! exactly the sensitivity. With three or more it is an upper bound that
//! can be strict: one choice of event times fixes every pairwise offset at
//! once, so the per-pair maxima need not be reachable together.
//! [`brute_force_sensitivity`] is the arbiter on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::lti::{observability_gramian, LtiSystem, StateSpace, TransferMatrix};

/// Default tolerance on the certified tail of the cross-term scan.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
/// Longest offset |τ| scanned before giving up.
pub const DEFAULT_MAX_HORIZON: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// ‖GK‖₂.
    pub lower: f64,
    /// |k|₂‖G‖₂.
    pub upper: f64,
    pub exact: Option<f64>,
    pub horizon_used: Option<usize>,
    /// `exact` coincides with `lower` (relative 1e−9).
    pub lower_tight: bool,
    /// `exact` coincides with `upper` (relative 1e−9).
    pub upper_tight: bool,
}

impl SensitivityReport {
    fn new(lower: f64, upper: f64, exact: Option<f64>, horizon_used: Option<usize>) -> Self {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
        Self {
            lower,
            upper,
            exact,
            horizon_used,
            lower_tight: exact.is_some_and(|e| close(e, lower)),
            upper_tight: exact.is_some_and(|e| close(e, upper)),
        }
    }

    /// The value used to calibrate noise: the exact sensitivity when known,
    /// otherwise the upper bound.
    pub fn calibration_value(&self) -> f64 {
        self.exact.unwrap_or(self.upper)
    }
}

fn check_k(sys: &dyn LtiSystem, k: &[f64]) -> Result<()> {
    if k.len() != sys.inputs() {
        return Err(Error::DimensionMismatch {
            what: "k entries",
            expected: sys.inputs(),
            found: k.len(),
        });
    }
    Ok(())
}

/// k₁‖G‖₂ for a single-input system.
pub fn simo_sensitivity(g: &dyn LtiSystem, k1: f64) -> Result<f64> {
    if g.inputs() != 1 {
        return Err(Error::DimensionMismatch {
            what: "inputs of a SIMO system",
            expected: 1,
            found: g.inputs(),
        });
    }
    Ok(k1 * g.h2_norm()?)
}

/// ‖GK‖₂ = (Σ k_i²‖G_ii‖₂²)^{1/2} for a diagonal system.
pub fn diagonal_sensitivity(g: &TransferMatrix, k: &[f64]) -> Result<f64> {
    let diag = g.diagonal_entries()?;
    check_k(g, k)?;
    g.ensure_stable()?;
    let mut acc = 0.0;
    for (e, ki) in diag.iter().zip(k) {
        acc += ki * ki * e.h2_norm_squared()?;
    }
    Ok(acc.sqrt())
}

/// (‖GK‖₂, |k|₂‖G‖₂).
pub fn mimo_bounds(g: &dyn LtiSystem, k: &[f64]) -> Result<(f64, f64)> {
    check_k(g, k)?;
    let cols = g.column_h2_squared()?;
    let lower = cols.iter().zip(k).map(|(c, ki)| ki * ki * c).sum::<f64>().sqrt();
    let k_norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let upper = k_norm * cols.iter().sum::<f64>().sqrt();
    Ok((lower, upper))
}

/// Geometric envelope of ‖A^t‖: with c = ‖A^{T₀}‖ < 1 and
/// M = max_{r<T₀} ‖A^r‖, every ‖A^t‖ ≤ M·c^{⌊t/T₀⌋}.
struct PowerEnvelope {
    period: usize,
    contraction: f64,
    peak: f64,
}

impl PowerEnvelope {
    fn new(a: &RMat, max_period: usize) -> Option<Self> {
        let n = a.nrows();
        let mut power = RMat::identity(n, n);
        let mut peak: f64 = 1.0;
        for period in 1..=max_period {
            power = &power * a;
            let norm = power.norm();
            if norm < 1.0 {
                return Some(Self {
                    period,
                    contraction: norm,
                    peak,
                });
            }
            peak = peak.max(norm);
        }
        None
    }

    /// Bound on sup_{t ≥ from} ‖A^t‖.
    fn tail(&self, from: usize) -> f64 {
        self.peak * self.contraction.powi((from / self.period) as i32)
    }
}

/// Exact sensitivity of a state-space system by scanning the pairwise cross
/// terms over offsets |τ| ≤ T. T grows until a certified bound on every
/// remaining |c_ij(τ)| is below `tol` or below the pair's running maximum.
pub fn mimo_exact(ss: &StateSpace, k: &[f64], tol: f64) -> Result<SensitivityReport> {
    mimo_exact_with_horizon(ss, k, tol, DEFAULT_MAX_HORIZON)
}

pub fn mimo_exact_with_horizon(
    ss: &StateSpace,
    k: &[f64],
    tol: f64,
    max_horizon: usize,
) -> Result<SensitivityReport> {
    let (lower, upper) = mimo_bounds(ss, k)?;
    let m = ss.inputs();
    if m == 1 {
        return Ok(SensitivityReport::new(lower, upper, Some(lower), Some(0)));
    }
    let p0 = observability_gramian(ss)?;
    let n = ss.order();
    let col = |mat: &RMat, i: usize| mat.column(i).into_owned();
    let b: Vec<_> = (0..m).map(|i| col(&ss.b, i)).collect();
    let d: Vec<_> = (0..m).map(|i| col(&ss.d, i)).collect();
    let pb: Vec<_> = b.iter().map(|bi| &p0 * bi).collect();

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let mut sup = vec![0.0f64; pairs.len()];
    for (s, &(i, j)) in sup.iter_mut().zip(&pairs) {
        *s = (d[i].dot(&d[j]) + b[i].dot(&pb[j])).abs();
    }

    // Tail bound per pair, in terms of sup_{t ≥ τ−1} ‖A^t‖ and sup_{t ≥ τ} ‖A^t‖.
    let c_norm = ss.c.norm();
    let p0_norm = p0.norm();
    let weights: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(i, j)| {
            let w_d = (d[i].norm() * b[j].norm()).max(d[j].norm() * b[i].norm()) * c_norm;
            let w_p = b[i].norm() * b[j].norm() * p0_norm;
            (w_d, w_p)
        })
        .collect();
    let envelope = if n == 0 {
        None
    } else {
        Some(PowerEnvelope::new(&ss.a, max_horizon.max(1)).ok_or(Error::HorizonExceeded {
            max_horizon,
            bound: f64::INFINITY,
        })?)
    };

    // ca = C A^{τ−1}, a_pow = A^τ, starting at τ = 1.
    let mut ca = ss.c.clone();
    let mut a_pow = ss.a.clone();
    let mut horizon = 0usize;
    if n > 0 {
        let env = envelope.as_ref().expect("order > 0");
        let mut tau = 1usize;
        loop {
            let done = weights.iter().zip(&sup).all(|(&(w_d, w_p), &s)| {
                let bound = w_d * env.tail(tau - 1) + w_p * env.tail(tau);
                bound < tol || bound <= s
            });
            if done {
                break;
            }
            if tau > max_horizon {
                let bound = weights
                    .iter()
                    .map(|&(w_d, w_p)| w_d * env.tail(tau - 1) + w_p * env.tail(tau))
                    .fold(0.0, f64::max);
                return Err(Error::HorizonExceeded { max_horizon, bound });
            }
            let cab: Vec<_> = b.iter().map(|bj| &ca * bj).collect();
            let ab: Vec<_> = b.iter().map(|bj| &a_pow * bj).collect();
            for (s, &(i, j)) in sup.iter_mut().zip(&pairs) {
                let fwd = d[i].dot(&cab[j]) + pb[i].dot(&ab[j]);
                let bwd = d[j].dot(&cab[i]) + pb[j].dot(&ab[i]);
                *s = s.max(fwd.abs()).max(bwd.abs());
            }
            horizon = tau;
            ca = &ca * &ss.a;
            a_pow = &a_pow * &ss.a;
            tau += 1;
        }
    }

    let cross: f64 = pairs
        .iter()
        .zip(&sup)
        .map(|(&(i, j), s)| 2.0 * k[i] * k[j] * s)
        .sum();
    let exact = (lower * lower + cross).max(0.0).sqrt();
    Ok(SensitivityReport::new(lower, upper, Some(exact), Some(horizon)))
}

/// Sensitivity report for any system: closed form when G is a diagonal
/// transfer matrix, cross-term scan otherwise.
pub fn sensitivity_report(g: &TransferMatrix, k: &[f64], tol: f64) -> Result<SensitivityReport> {
    if g.is_diagonal() && g.rows() == g.cols() {
        let (lower, upper) = mimo_bounds(g, k)?;
        let exact = diagonal_sensitivity(g, k)?;
        return Ok(SensitivityReport::new(lower, upper, Some(exact), None));
    }
    mimo_exact(&crate::lti::realize_state_space(g)?, k, tol)
}

/// Enumerates every event-time vector t ∈ {0..T}^m and sign pattern and
/// returns the largest output energy. Limited to m ≤ 3, T ≤ 10 and FIR
/// entries of length at most T + 1.
pub fn brute_force_sensitivity(g: &TransferMatrix, k: &[f64], horizon: usize) -> Result<f64> {
    let m = g.cols();
    check_k(g, k)?;
    if m > 3 || horizon > 10 {
        return Err(Error::OracleTooLarge(format!(
            "m = {m}, T = {horizon}; the oracle allows m ≤ 3 and T ≤ 10"
        )));
    }
    if !g.is_fir() {
        return Err(Error::OracleTooLarge("the oracle needs FIR entries".into()));
    }
    let taps = g
        .entries()
        .iter()
        .map(|e| e.numerator().len())
        .max()
        .unwrap_or(1);
    if taps > horizon + 1 {
        return Err(Error::OracleTooLarge(format!(
            "FIR length {taps} exceeds the horizon T + 1 = {}",
            horizon + 1
        )));
    }
    let len = horizon + taps;
    let p = g.rows();
    let coef = |i: usize, j: usize, t: usize| g.get(i, j).numerator().get(t).copied().unwrap_or(0.0);

    let mut best: f64 = 0.0;
    let mut times = vec![0usize; m];
    let mut out = vec![0.0; p * len];
    loop {
        for signs in 0..(1u32 << m) {
            out.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..m {
                let alpha = if signs >> j & 1 == 1 { -k[j] } else { k[j] };
                for i in 0..p {
                    for t in 0..taps {
                        out[i * len + times[j] + t] += alpha * coef(i, j, t);
                    }
                }
            }
            best = best.max(out.iter().map(|v| v * v).sum());
        }
        // Odometer over event times.
        let mut pos = 0;
        loop {
            if pos == m {
                return Ok(best.sqrt());
            }
            times[pos] += 1;
            if times[pos] <= horizon {
                break;
            }
            times[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{realize_state_space, RationalFilter};

    fn delays(d: &[usize]) -> TransferMatrix {
        TransferMatrix::new(1, d.len(), d.iter().map(|&t| RationalFilter::delay(t)).collect()).unwrap()
    }

    #[test]
    fn simo_identity() {
        assert!((simo_sensitivity(&TransferMatrix::identity(1), 1.0).unwrap() - 1.0).abs() < 1e-15);
        let f1 = TransferMatrix::scalar(RationalFilter::moving_average(20, 1));
        let v = simo_sensitivity(&f1, 4.0).unwrap();
        assert!((v - 4.0 / 20f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn simo_rejects_multi_input() {
        assert!(matches!(
            simo_sensitivity(&TransferMatrix::identity(2), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diagonal_examples() {
        let v = diagonal_sensitivity(&TransferMatrix::identity(2), &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        let g = TransferMatrix::diagonal(vec![RationalFilter::identity(), RationalFilter::delay(1)]);
        assert!((diagonal_sensitivity(&g, &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-14);
        let mut coupled = TransferMatrix::identity(2);
        coupled.set(0, 1, RationalFilter::delay(1));
        assert!(matches!(
            diagonal_sensitivity(&coupled, &[1.0, 1.0]),
            Err(Error::NotDiagonal { row: 0, col: 1 })
        ));
    }

    #[test]
    fn aligned_delays_reach_upper_bound() {
        for m in 2..5 {
            let g = delays(&(0..m).collect::<Vec<_>>());
            let k = vec![1.0; m];
            let (lo, up) = mimo_bounds(&g, &k).unwrap();
            assert!((lo - (m as f64).sqrt()).abs() < 1e-14);
            assert!((up - m as f64).abs() < 1e-14);
            let rep = mimo_exact(&realize_state_space(&g).unwrap(), &k, DEFAULT_TAIL_TOL).unwrap();
            assert!((rep.exact.unwrap() - m as f64).abs() < 1e-12);
            assert!(rep.upper_tight);
        }
    }

    #[test]
    fn diagonal_has_no_cross_terms() {
        let g = TransferMatrix::diagonal(vec![
            RationalFilter::new(vec![1.0], vec![1.0, -0.5]).unwrap(),
            RationalFilter::fir(vec![1.0, 0.5, 0.25]),
        ]);
        let k = [2.0, 3.0];
        let rep = mimo_exact(&realize_state_space(&g).unwrap(), &k, 1e-12).unwrap();
        let diag = diagonal_sensitivity(&g, &k).unwrap();
        assert!((rep.exact.unwrap() - diag).abs() < 1e-10);
        assert!(rep.lower_tight);
    }

    #[test]
    fn zero_k_gives_zero() {
        let g = delays(&[0, 3]);
        let (lo, up) = mimo_bounds(&g, &[0.0, 0.0]).unwrap();
        assert_eq!((lo, up), (0.0, 0.0));
    }

    #[test]
    fn oracle_single_channel_is_simo() {
        let g = TransferMatrix::scalar(RationalFilter::fir(vec![1.0, -2.0, 0.5]));
        let v = brute_force_sensitivity(&g, &[1.5], 4).unwrap();
        assert!((v - simo_sensitivity(&g, 1.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_limits() {
        assert!(matches!(
            brute_force_sensitivity(&TransferMatrix::identity(4), &[1.0; 4], 2),
            Err(Error::OracleTooLarge(_))
        ));
        assert!(brute_force_sensitivity(&TransferMatrix::identity(1), &[1.0], 11).is_err());
        let long = TransferMatrix::scalar(RationalFilter::moving_average(6, 0));
        assert!(brute_force_sensitivity(&long, &[1.0], 3).is_err());
    }

    #[test]
    fn unstable_system_rejected() {
        let g = TransferMatrix::scalar(RationalFilter::new(vec![1.0], vec![1.0, -1.0]).unwrap());
        assert!(matches!(mimo_bounds(&g, &[1.0]), Err(Error::UnstableSystem { .. })));
    }
}
