use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::rational::{TransferMatrix, STABILITY_MARGIN};
use crate::error::{Error, Result};
use crate::linalg::{to_complex, CMat, RMat, J};

/// x_{t+1} = A x_t + B u_t, y_t = C x_t + D u_t, x₀ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

impl StateSpace {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat) -> Result<Self> {
        let n = a.nrows();
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                })
            }
        };
        check("A columns", n, a.ncols())?;
        check("B rows", n, b.nrows())?;
        check("C columns", n, c.ncols())?;
        check("D rows", c.nrows(), d.nrows())?;
        check("D columns", b.ncols(), d.ncols())?;
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        crate::linalg::eigenvalues(&self.a)
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0 - STABILITY_MARGIN
    }

    pub(crate) fn ensure_stable(&self) -> Result<()> {
        let radius = self.spectral_radius();
        if radius < 1.0 - STABILITY_MARGIN {
            Ok(())
        } else {
            Err(Error::UnstableSystem { radius })
        }
    }

    /// D + C (e^{jω} I − A)⁻¹ B.
    pub fn response(&self, omega: f64) -> CMat {
        let n = self.order();
        let mut out = to_complex(&self.d);
        if n == 0 {
            return out;
        }
        let z = (J * omega).exp();
        let mut m = -to_complex(&self.a);
        for i in 0..n {
            m[(i, i)] += z;
        }
        let x = m
            .lu()
            .solve(&to_complex(&self.b))
            .expect("zI - A is invertible on the unit circle for stable A");
        out += to_complex(&self.c) * x;
        out
    }

    /// Markov parameters D, CB, CAB, ...
    pub fn impulse_response(&self, len: usize) -> Vec<RMat> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ab = self.b.clone();
        for _ in 1..len {
            out.push(&self.c * &ab);
            ab = &self.a * ab;
        }
        out
    }

    /// Runs the state recursion over an input sequence of m-vectors.
    pub fn run(&self, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut x = DVector::zeros(self.order());
        inputs
            .iter()
            .map(|u| {
                let y = &self.c * &x + &self.d * u;
                x = &self.a * &x + &self.b * u;
                y
            })
            .collect()
    }
}

/// Solves Aᵀ P A − P + Q = 0 by the doubling iteration
/// P ← P + A_kᵀ P A_k, A_k ← A_k², starting from P = Q.
pub fn discrete_lyapunov(a: &RMat, q: &RMat) -> Result<RMat> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 200;
    let mut p = q.clone();
    let mut ak = a.clone();
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let inc = ak.transpose() * &p * &ak;
        let inc_norm = inc.norm();
        p += inc;
        ak = &ak * &ak;
        if !ak.iter().all(|x| x.is_finite()) || !p.iter().all(|x| x.is_finite()) {
            break;
        }
        if inc_norm <= TOL * p.norm().max(f64::MIN_POSITIVE) && ak.norm() < 1.0 {
            converged = true;
            break;
        }
    }
    let p = (&p + p.transpose()) * 0.5;
    let residual = (a.transpose() * &p * a - &p + q).norm();
    let scale = 1.0 + p.norm() + q.norm();
    if !converged || !residual.is_finite() || residual > 1e-8 * scale {
        return Err(Error::LyapunovFailure { residual });
    }
    Ok(p)
}

/// Observability Gramian P₀ with Aᵀ P₀ A − P₀ + Cᵀ C = 0.
pub fn observability_gramian(ss: &StateSpace) -> Result<RMat> {
    ss.ensure_stable()?;
    let q = ss.c.transpose() * &ss.c;
    discrete_lyapunov(&ss.a, &q)
}

/// H₂ norm via trace(Bᵀ P₀ B + Dᵀ D).
pub fn h2_norm_gramian(ss: &StateSpace) -> Result<f64> {
    let p0 = observability_gramian(ss)?;
    let val = (ss.b.transpose() * p0 * &ss.b + ss.d.transpose() * &ss.d).trace();
    Ok(val.max(0.0).sqrt())
}

/// State-space realization of a transfer matrix: for each column, the
/// controllable canonical form of the column over the product of its
/// distinct denominators; the column realizations are stacked
/// block-diagonally. The result need not be minimal.
pub fn realize_state_space(tm: &TransferMatrix) -> Result<StateSpace> {
    let p = tm.rows();
    let m = tm.cols();
    let mut blocks: Vec<(RMat, RMat, RMat)> = Vec::with_capacity(m); // (A_j, C_j, D_j)
    for j in 0..m {
        let mut dens: Vec<Vec<f64>> = Vec::new();
        for i in 0..p {
            let e = tm.get(i, j);
            if e.is_zero() || e.is_fir() {
                continue;
            }
            if !dens.iter().any(|d| d.as_slice() == e.denominator()) {
                dens.push(e.denominator().to_vec());
            }
        }
        let common = dens
            .iter()
            .fold(vec![1.0], |acc, d| crate::linalg::poly_mul(&acc, d));
        let nums: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let e = tm.get(i, j);
                if e.is_zero() {
                    return vec![0.0];
                }
                let others = dens
                    .iter()
                    .filter(|d| d.as_slice() != e.denominator())
                    .fold(vec![1.0], |acc, d| crate::linalg::poly_mul(&acc, d));
                crate::linalg::poly_mul(e.numerator(), &others)
            })
            .collect();
        let n = nums
            .iter()
            .map(|b| b.len() - 1)
            .chain(std::iter::once(common.len() - 1))
            .max()
            .unwrap_or(0);
        let coef = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        let mut a = RMat::zeros(n, n);
        for k in 0..n {
            a[(0, k)] = -coef(&common, k + 1);
        }
        for k in 1..n {
            a[(k, k - 1)] = 1.0;
        }
        let mut c = RMat::zeros(p, n);
        let mut d = RMat::zeros(p, 1);
        for (i, b) in nums.iter().enumerate() {
            let b0 = coef(b, 0);
            d[(i, 0)] = b0;
            for k in 0..n {
                c[(i, k)] = coef(b, k + 1) - b0 * coef(&common, k + 1);
            }
        }
        blocks.push((a, c, d));
    }
    let total: usize = blocks.iter().map(|b| b.0.nrows()).sum();
    let mut a = RMat::zeros(total, total);
    let mut b = RMat::zeros(total, m);
    let mut c = RMat::zeros(p, total);
    let mut d = RMat::zeros(p, m);
    let mut off = 0;
    for (j, (aj, cj, dj)) in blocks.iter().enumerate() {
        let n = aj.nrows();
        a.view_mut((off, off), (n, n)).copy_from(aj);
        if n > 0 {
            b[(off, j)] = 1.0;
        }
        c.view_mut((0, off), (p, n)).copy_from(cj);
        d.view_mut((0, j), (p, 1)).copy_from(dj);
        off += n;
    }
    StateSpace::new(a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::RationalFilter;

    #[test]
    fn gramian_of_zero_dynamics_is_ctc() {
        let ss = StateSpace::new(
            RMat::zeros(2, 2),
            RMat::identity(2, 1),
            RMat::from_row_slice(1, 2, &[1.0, 2.0]),
            RMat::zeros(1, 1),
        )
        .unwrap();
        let p0 = observability_gramian(&ss).unwrap();
        assert!((p0 - ss.c.transpose() * &ss.c).norm() < 1e-15);
    }

    #[test]
    fn scalar_gramian_is_geometric_sum() {
        let ss = StateSpace::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
        )
        .unwrap();
        let p0 = observability_gramian(&ss).unwrap();
        assert!((p0[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn unstable_gramian_rejected() {
        let ss = StateSpace::new(
            RMat::from_element(1, 1, 1.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(observability_gramian(&ss), Err(Error::UnstableSystem { .. })));
    }

    #[test]
    fn first_order_realization() {
        let tm = TransferMatrix::scalar(RationalFilter::new(vec![1.0], vec![1.0, -0.5]).unwrap());
        let ss = realize_state_space(&tm).unwrap();
        assert_eq!(ss.order(), 1);
        assert_eq!(ss.a[(0, 0)], 0.5);
        assert_eq!(ss.b[(0, 0)], 1.0);
        assert_eq!(ss.c[(0, 0)], 0.5);
        assert_eq!(ss.d[(0, 0)], 1.0);
    }

    #[test]
    fn fir_realization_is_shift_register() {
        let tm = TransferMatrix::scalar(RationalFilter::fir(vec![1.0, 2.0]));
        let ss = realize_state_space(&tm).unwrap();
        let h: Vec<f64> = ss.impulse_response(4).iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(h, vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_checks() {
        let err = StateSpace::new(
            RMat::zeros(2, 2),
            RMat::zeros(3, 1),
            RMat::zeros(1, 2),
            RMat::zeros(1, 1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { what: "B rows", .. }));
    }
}
