#![allow(dead_code)]

use dpfilter::linalg::RMat;
use dpfilter::lti::{RationalFilter, TransferMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable entry with up to two real poles of radius ≤ `max_pole`.
pub fn random_entry(rng: &mut ChaCha8Rng, max_pole: f64, max_taps: usize) -> RationalFilter {
    let taps = rng.random_range(1..=max_taps);
    let num: Vec<f64> = (0..taps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut den = vec![1.0];
    for _ in 0..rng.random_range(0..=2usize) {
        let p = rng.random_range(-max_pole..max_pole);
        den = dpfilter::linalg::poly_mul(&den, &[1.0, -p]);
    }
    RationalFilter::new(num, den).unwrap()
}

pub fn random_transfer_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max_pole: f64) -> TransferMatrix {
    TransferMatrix::from_fn(rows, cols, |_, _| random_entry(rng, max_pole, 3))
}

pub fn random_fir_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max_len: usize) -> TransferMatrix {
    TransferMatrix::from_fn(rows, cols, |_, _| {
        let len = rng.random_range(1..=max_len);
        RationalFilter::fir((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    })
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RMat {
    RMat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random symmetric positive definite matrix with eigenvalues ≥ `floor`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, floor: f64) -> RMat {
    let a = random_matrix(rng, m, m);
    &a * a.transpose() + RMat::identity(m, m) * floor
}

/// Random column-stochastic matrix with all entries ≥ `floor`.
pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> RMat {
    let mut p = RMat::from_fn(n, n, |_, _| floor + rng.random::<f64>());
    for j in 0..n {
        let s: f64 = p.column(j).sum();
        p.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    p
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
