use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{poly_mul, poly_roots, CMat, J};

/// Root magnitudes at or above `1 - STABILITY_MARGIN` count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Scalar causal filter b(z⁻¹)/a(z⁻¹) with coefficients in ascending powers
/// of z⁻¹ and a₀ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRational", into = "RawRational")]
pub struct RationalFilter {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRational {
    num: Vec<f64>,
    #[serde(default = "one")]
    den: Vec<f64>,
}

fn one() -> Vec<f64> {
    vec![1.0]
}

impl TryFrom<RawRational> for RationalFilter {
    type Error = Error;
    fn try_from(raw: RawRational) -> Result<Self> {
        RationalFilter::new(raw.num, raw.den)
    }
}

impl From<RationalFilter> for RawRational {
    fn from(f: RationalFilter) -> Self {
        RawRational {
            num: f.num,
            den: f.den,
        }
    }
}

fn trim_trailing(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && *v.last().unwrap() == 0.0 {
        v.pop();
    }
    v
}

impl RationalFilter {
    /// Builds b/a and normalizes a₀ to one. A zero leading denominator
    /// coefficient would make the filter non-causal.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let den = trim_trailing(den);
        let num = if num.is_empty() { vec![0.0] } else { trim_trailing(num) };
        if num.iter().chain(&den).any(|x| !x.is_finite()) {
            return Err(Error::ImproperTransferFunction("non-finite coefficient".into()));
        }
        let a0 = den.first().copied().unwrap_or(0.0);
        if a0 == 0.0 {
            return Err(Error::ImproperTransferFunction(format!(
                "leading denominator coefficient is zero in {den:?}"
            )));
        }
        Ok(Self {
            num: num.iter().map(|x| x / a0).collect(),
            den: den.iter().map(|x| x / a0).collect(),
        })
    }

    pub fn fir(taps: Vec<f64>) -> Self {
        Self::new(taps, vec![1.0]).expect("FIR filter is always proper")
    }

    pub fn gain(c: f64) -> Self {
        Self::fir(vec![c])
    }

    pub fn zero() -> Self {
        Self::gain(0.0)
    }

    pub fn identity() -> Self {
        Self::gain(1.0)
    }

    /// Pure delay z^{-k}.
    pub fn delay(k: usize) -> Self {
        let mut taps = vec![0.0; k + 1];
        taps[k] = 1.0;
        Self::fir(taps)
    }

    /// Moving average (1/len) Σ_{k=offset}^{offset+len-1} z^{-k}.
    pub fn moving_average(len: usize, offset: usize) -> Self {
        let mut taps = vec![0.0; offset + len];
        for t in &mut taps[offset..] {
            *t = 1.0 / len as f64;
        }
        Self::fir(taps)
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn is_fir(&self) -> bool {
        self.den.len() == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&x| x == 0.0)
    }

    /// Value at a given z⁻¹.
    pub fn eval_zinv(&self, zinv: Complex64) -> Complex64 {
        horner(&self.num, zinv) / horner(&self.den, zinv)
    }

    /// Frequency response at e^{jω}.
    pub fn response(&self, omega: f64) -> Complex64 {
        self.eval_zinv((-J * omega).exp())
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }

    /// Finite zeros. Leading zero numerator coefficients (pure delays) do
    /// not contribute finite zeros.
    pub fn zeros(&self) -> Vec<Complex64> {
        poly_roots(&self.num)
    }

    pub fn pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn zero_radius(&self) -> f64 {
        self.zeros().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.is_fir() || self.pole_radius() < 1.0 - STABILITY_MARGIN
    }

    /// Stable, with nonzero lag-0 gain and all zeros strictly inside the unit
    /// circle, so that the inverse is causal and stable.
    pub fn is_minimum_phase(&self) -> bool {
        self.is_stable() && self.num[0] != 0.0 && self.zero_radius() < 1.0 - STABILITY_MARGIN
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            num: self.num.iter().map(|x| x * c).collect(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &RationalFilter) -> Self {
        Self::new(poly_mul(&self.num, &other.num), poly_mul(&self.den, &other.den))
            .expect("product of proper filters is proper")
    }

    /// a/b. Requires a nonzero lag-0 numerator coefficient.
    pub fn inverse(&self) -> Result<Self> {
        if self.num[0] == 0.0 {
            return Err(Error::ImproperTransferFunction(
                "inverse of a filter with zero lag-0 gain is not causal".into(),
            ));
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    /// Direct-form II transposed filtering with zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let order = self.num.len().max(self.den.len());
        let b: Vec<f64> = (0..order).map(|k| self.num.get(k).copied().unwrap_or(0.0)).collect();
        let a: Vec<f64> = (0..order).map(|k| self.den.get(k).copied().unwrap_or(0.0)).collect();
        if order == 1 {
            return x.iter().map(|v| b[0] * v).collect();
        }
        let mut state = vec![0.0; order - 1];
        let mut y = Vec::with_capacity(x.len());
        for &xn in x {
            let yn = b[0] * xn + state[0];
            for k in 0..order - 2 {
                state[k] = state[k + 1] + b[k + 1] * xn - a[k + 1] * yn;
            }
            state[order - 2] = b[order - 1] * xn - a[order - 1] * yn;
            y.push(yn);
        }
        y
    }

    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        if len > 0 {
            x[0] = 1.0;
        }
        self.filter(&x)
    }

    /// Squared H₂ norm. Exact coefficient sum for FIR filters; otherwise the
    /// trapezoidal rule on successively doubled grids until the value settles
    /// to 1e-13 relative (the rule converges geometrically for rational,
    /// pole-free integrands).
    pub fn h2_norm_squared(&self) -> Result<f64> {
        if self.is_fir() {
            return Ok(self.num.iter().map(|x| x * x).sum());
        }
        if !self.is_stable() {
            return Err(Error::UnstableSystem {
                radius: self.pole_radius(),
            });
        }
        let mut n = 256usize;
        let mut prev = self.trapezoid_energy(n);
        while n < (1 << 24) {
            n *= 2;
            let cur = self.trapezoid_energy(n);
            if (cur - prev).abs() <= 1e-13 * cur.abs().max(f64::MIN_POSITIVE) {
                return Ok(cur);
            }
            prev = cur;
        }
        Ok(prev)
    }

    fn trapezoid_energy(&self, n: usize) -> f64 {
        let vals: Vec<f64> = (0..=n)
            .map(|q| self.response(q as f64 * std::f64::consts::PI / n as f64).norm_sqr())
            .collect();
        crate::linalg::trapezoid_mean(&vals)
    }
}

fn horner(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// p×m grid of scalar filters with a common unit-delay convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransferMatrix", into = "RawTransferMatrix")]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    entries: Vec<RationalFilter>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<RationalFilter>,
}

impl TryFrom<RawTransferMatrix> for TransferMatrix {
    type Error = Error;
    fn try_from(raw: RawTransferMatrix) -> Result<Self> {
        TransferMatrix::new(raw.rows, raw.cols, raw.entries)
    }
}

impl From<TransferMatrix> for RawTransferMatrix {
    fn from(t: TransferMatrix) -> Self {
        RawTransferMatrix {
            rows: t.rows,
            cols: t.cols,
            entries: t.entries,
        }
    }
}

impl TransferMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<RationalFilter>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "transfer matrix entries",
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> RationalFilter) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| RationalFilter::zero())
    }

    pub fn identity(m: usize) -> Self {
        Self::diagonal(vec![RationalFilter::identity(); m])
    }

    pub fn diagonal(diag: Vec<RationalFilter>) -> Self {
        let m = diag.len();
        Self::from_fn(m, m, |i, j| {
            if i == j {
                diag[i].clone()
            } else {
                RationalFilter::zero()
            }
        })
    }

    pub fn scalar(f: RationalFilter) -> Self {
        Self::diagonal(vec![f])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &RationalFilter {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, f: RationalFilter) {
        self.entries[i * self.cols + j] = f;
    }

    pub fn entries(&self) -> &[RationalFilter] {
        &self.entries
    }

    /// The p×1 column F_j.
    pub fn column(&self, j: usize) -> TransferMatrix {
        TransferMatrix::from_fn(self.rows, 1, |i, _| self.get(i, j).clone())
    }

    pub fn is_fir(&self) -> bool {
        self.entries.iter().all(RationalFilter::is_fir)
    }

    /// First nonzero off-diagonal entry, if any.
    pub fn off_diagonal_entry(&self) -> Option<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && !self.get(i, j).is_zero())
    }

    pub fn is_diagonal(&self) -> bool {
        self.rows == self.cols && self.off_diagonal_entry().is_none()
    }

    /// Diagonal entries of a square matrix.
    pub fn diagonal_entries(&self) -> Result<Vec<RationalFilter>> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                what: "square system",
                expected: self.rows,
                found: self.cols,
            });
        }
        if let Some((row, col)) = self.off_diagonal_entry() {
            return Err(Error::NotDiagonal { row, col });
        }
        Ok((0..self.rows).map(|i| self.get(i, i).clone()).collect())
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.is_fir())
            .map(RationalFilter::pole_radius)
            .fold(0.0, f64::max)
    }

    pub fn response(&self, omega: f64) -> CMat {
        let zinv = (-J * omega).exp();
        CMat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_zinv(zinv))
    }

    /// F·diag(d): column j multiplied by d_j.
    pub fn scale_columns(&self, d: &[RationalFilter]) -> Result<TransferMatrix> {
        if d.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "column scaling",
                expected: self.cols,
                found: d.len(),
            });
        }
        Ok(TransferMatrix::from_fn(self.rows, self.cols, |i, j| {
            let e = self.get(i, j);
            if e.is_zero() {
                RationalFilter::zero()
            } else {
                e.mul(&d[j])
            }
        }))
    }

    /// Squared H₂ norm of each entry.
    pub fn entry_h2_squared(&self) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| if e.is_zero() { Ok(0.0) } else { e.h2_norm_squared() })
            .collect()
    }

    /// ‖F_j‖₂² for every column.
    pub fn column_h2_squared(&self) -> Result<Vec<f64>> {
        let e = self.entry_h2_squared()?;
        Ok((0..self.cols)
            .map(|j| (0..self.rows).map(|i| e[i * self.cols + j]).sum())
            .collect())
    }

    /// Longest impulse-response memory over all entries: FIR length, or for
    /// IIR entries the lag after which the envelope radius^t falls below
    /// `tail`.
    pub fn effective_memory(&self, tail: f64) -> usize {
        self.entries
            .iter()
            .filter(|e| !e.is_zero())
            .map(|e| {
                let fir_len = e.numerator().len();
                if e.is_fir() {
                    fir_len
                } else {
                    let r = e.pole_radius().max(1e-3);
                    if r >= 1.0 {
                        usize::MAX / 4
                    } else {
                        fir_len + (tail.ln() / r.ln()).ceil() as usize
                    }
                }
            })
            .max()
            .unwrap_or(1)
    }
}
