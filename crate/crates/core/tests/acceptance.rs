//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::*;
use dpfilter::df;
use dpfilter::linalg::{to_complex, RMat};
use dpfilter::lms::{self, LmsMode, LmsSettings};
use dpfilter::lti::{realize_state_space, RationalFilter, SpectrumGrid, TransferMatrix};
use dpfilter::markov;
use dpfilter::privacy::{self, PrivacySpec};
use dpfilter::sensitivity::{brute_force_sensitivity, mimo_exact, sensitivity_report, DEFAULT_TAIL_TOL};
use dpfilter::sim::{self, ForecastModel, OccupancySource};
use dpfilter::spectral::{matrix_canonical_factor, matrix_fir_response, scalar_spectral_factor, ScalarSpectrum};
use dpfilter::stream::EventStream;
use dpfilter::zfe::{self, ZfeSettings};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let f = sim::occupancy_filter_bank(15, Some(&ForecastModel::toolkit_default())).unwrap();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 4.0, 15).unwrap();
    let d = zfe::design_zfe(&f, &privacy, ZfeSettings::default()).unwrap();
    let ratio = d.theory_mse.unwrap() / zfe::zfe_mse_diag_bound(&f, &privacy, 1024).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (1.0..=1.05).contains(&ratio) && secs < 30.0,
        format!("3x15 bank ZFE theory/bound = {ratio:.5} (need [1, 1.05]), {secs:.1} s (< 30 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let f = sim::occupancy_filter_bank(15, Some(&ForecastModel::toolkit_default())).unwrap();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 4.0, 15).unwrap();
    let d = zfe::design_zfe(&f, &privacy, ZfeSettings::default()).unwrap();
    let theory = d.theory_mse.unwrap();
    let building = OccupancySource::building(15);
    let flat = OccupancySource::new(vec![0.3; 15]).unwrap();
    let a = sim::empirical_mse(&d, &building, 10, 20_000, 1).unwrap();
    let b = sim::empirical_mse(&d, &flat, 10, 20_000, 2).unwrap();
    let joint = (a.mean - b.mean).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        a.z_score(theory) < 3.0 && b.z_score(theory) < 3.0 && joint < 3.0 && secs < 120.0,
        format!(
            "theory {theory:.4}; building {:.4}±{:.4} (z={:.2}), flat {:.4}±{:.4} (z={:.2}), between sources z={joint:.2}; {secs:.1} s (< 120 s)",
            a.mean,
            a.stderr,
            a.z_score(theory),
            b.mean,
            b.stderr,
            b.z_score(theory)
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut sandwich_ok = 0;
    for _ in 0..100 {
        let rows = r.random_range(1..=3);
        let cols = r.random_range(1..=3);
        let g = random_transfer_matrix(&mut r, rows, cols, 0.85);
        let k: Vec<f64> = (0..cols).map(|_| r.random_range(0.2..4.0)).collect();
        let rep = sensitivity_report(&g, &k, DEFAULT_TAIL_TOL).unwrap();
        let e = rep.exact.unwrap();
        if rep.lower <= e * (1.0 + 1e-12) && e <= rep.upper * (1.0 + 1e-12) {
            sandwich_ok += 1;
        }
    }
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..50 {
        let g = random_fir_matrix(&mut r, 2, 2, 4);
        let k = vec![r.random_range(0.2..4.0), r.random_range(0.2..4.0)];
        let exact = sensitivity_report(&g, &k, DEFAULT_TAIL_TOL).unwrap().exact.unwrap();
        let brute = brute_force_sensitivity(&g, &k, 8).unwrap();
        worst_oracle = worst_oracle.max((exact - brute).abs());
    }
    let m = 4;
    let aligned = TransferMatrix::new(1, m, (0..m).map(RationalFilter::delay).collect()).unwrap();
    let rep = mimo_exact(&realize_state_space(&aligned).unwrap(), &vec![1.0; m], DEFAULT_TAIL_TOL).unwrap();
    let exact_sq = rep.exact.unwrap().powi(2);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        sandwich_ok == 100 && worst_oracle < 1e-9 && rep.upper_tight && (exact_sq - (m * m) as f64).abs() < 1e-9 && secs < 120.0,
        format!(
            "sandwich {sandwich_ok}/100; max |exact - brute| = {worst_oracle:.1e} (< 1e-9); aligned delays exact^2 = {exact_sq:.12} (m^2 = {}), upper tight = {}; {secs:.1} s",
            m * m,
            rep.upper_tight
        ),
    )
}

fn criterion_4() -> Outcome {
    let smooth = [
        RationalFilter::new(vec![1.0], vec![1.0, -0.9]).unwrap(),
        RationalFilter::fir(vec![1.0, 0.5]),
        RationalFilter::new(vec![1.0, -0.4, 0.1], vec![1.0, 0.5]).unwrap(),
        RationalFilter::new(vec![2.0, 0.3], vec![1.0, -0.3, 0.2]).unwrap(),
    ];
    let mut worst_scalar: f64 = 0.0;
    let mut min_phase = true;
    for h in &smooth {
        let fac = scalar_spectral_factor(&ScalarSpectrum::of_filter(h, 1024), 100).unwrap();
        worst_scalar = worst_scalar.max(fac.relative_error);
        min_phase &= fac.filter.zero_radius() < 1.0 && fac.filter.is_minimum_phase();
    }
    let mut r = rng(4);
    let mut worst_matrix: f64 = 0.0;
    for m in 1..=3 {
        for _ in 0..5 {
            let coeffs = vec![
                RMat::identity(m, m),
                random_matrix(&mut r, m, m) * (0.4 / m as f64),
                random_matrix(&mut r, m, m) * (0.2 / m as f64),
            ];
            let pe = to_complex(&random_spd(&mut r, m, 0.2));
            let grid = SpectrumGrid::from_fn(1024, m, m, |w| {
                let l = matrix_fir_response(&coeffs, w);
                &l * &pe * l.adjoint()
            });
            let fac = matrix_canonical_factor(&grid).unwrap();
            worst_matrix = worst_matrix.max(fac.residual);
            min_phase &= fac.max_zero_radius < 1.0;
        }
    }
    outcome(
        worst_scalar < 1e-4 && worst_matrix < 1e-5 && min_phase,
        format!("scalar L∞ error {worst_scalar:.1e} (< 1e-4), matrix residual {worst_matrix:.1e} (< 1e-5), minimum phase = {min_phase}"),
    )
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let n = 256;
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..20 {
        let m = r.random_range(1..=3);
        let rows = r.random_range(1..=3);
        let f = random_transfer_matrix(&mut r, rows, m, 0.7);
        let channels: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let a = r.random_range(-0.8..0.8);
                let level = r.random_range(0.2..5.0);
                (0..=n)
                    .map(|q| {
                        let w = q as f64 * std::f64::consts::PI / n as f64;
                        level / (1.0 + a * a - 2.0 * a * w.cos())
                    })
                    .collect()
            })
            .collect();
        let p_u = SpectrumGrid::from_diagonal(&channels).unwrap();
        let k: Vec<f64> = (0..m).map(|_| r.random_range(0.5..3.0)).collect();
        let privacy = PrivacySpec::new(r.random_range(0.3..5.0), 0.05, k).unwrap();
        let wf = lms::waterfill_diagonal(&f, &p_u, &privacy).unwrap();
        let gen = lms::optimize_prefilter_general(&f, &p_u, &privacy).unwrap();
        let a = lms::lms_objective(&f, &p_u, &privacy, &wf).unwrap();
        let b = lms::lms_objective(&f, &p_u, &privacy, &gen).unwrap();
        worst_gap = worst_gap.max(rel(b, a));
        worst_kkt = worst_kkt.max(lms::kkt_residual(&f, &p_u, &privacy, &gen).unwrap());
    }
    outcome(
        worst_gap < 1e-4 && worst_kkt < 1e-6,
        format!("20 diagonal instances: max relative objective gap {worst_gap:.1e} (< 1e-4), max KKT residual {worst_kkt:.1e} (< 1e-6)"),
    )
}

fn criterion_6() -> Outcome {
    let f = markov::demo_filter();
    let n = 1024;
    let mut ok = true;
    let mut lines = Vec::new();
    for (alpha, beta, sel) in [(0.3, 0.6, vec![1, 2]), (0.3, 0.6, vec![1, 3]), (0.5, 0.2, vec![1, 2])] {
        let src = markov::server_chain(alpha, beta, sel.clone()).unwrap();
        let (mean, p_u) = markov::input_model(&src, n).unwrap();
        let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
        let opt = lms::optimize_prefilter_general(&f, &p_u, &privacy).unwrap();
        let lms_opt = lms::lms_objective(&f, &p_u, &privacy, &opt).unwrap();
        let lms_zfe = lms::lms_objective(&f, &p_u, &privacy, &lms::zfe_profile(&f, &privacy, n).unwrap()).unwrap();
        let zfe_mse = zfe::zfe_mse_diag_bound(&f, &privacy, n).unwrap();
        let causal = lms::assemble_lms(&f, &p_u, &mean, &privacy, LmsMode::Causal, &LmsSettings::default()).unwrap();
        let (c, s) = (causal.diagnostics["causal_mse"], causal.diagnostics["smoother_mse"]);
        ok &= lms_opt <= lms_zfe * (1.0 + 1e-10) && lms_zfe <= zfe_mse && c >= s;
        lines.push(format!("({alpha},{beta}){sel:?}: {lms_opt:.5} <= {lms_zfe:.5} <= {zfe_mse:.5}, causal {c:.5} >= {s:.5}"));
    }
    let src = markov::server_chain(0.3, 0.6, vec![1, 2]).unwrap();
    let (_, p_u) = markov::input_model(&src, n).unwrap();
    let loud = p_u.map(|s| s * num_complex::Complex64::new(1e8, 0.0));
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
    let opt = lms::optimize_prefilter_general(&f, &loud, &privacy).unwrap();
    let limit = lms::lms_objective(&f, &loud, &privacy, &opt).unwrap() / zfe::zfe_mse_diag_bound(&f, &privacy, n).unwrap();
    ok &= (limit - 1.0).abs() < 0.01;
    outcome(ok, format!("{}; P_u x 1e8 gives LMS/ZFE = {limit:.5} (within 1%)", lines.join("; ")))
}

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let mut lemma_ok = 0;
    let mut worst_identity: f64 = 0.0;
    for _ in 0..100 {
        let m = r.random_range(1..=3);
        let t = random_spd(&mut r, m, 0.05);
        let rr = random_spd(&mut r, m, 0.05);
        let len = r.random_range(2..=6);
        let mut w = vec![RMat::identity(m, m)];
        w.extend((1..len).map(|_| random_matrix(&mut r, m, m)));
        let bound = (&t * &rr).trace();
        if df::weighted_filter_energy(&t, &rr, &w) >= bound {
            lemma_ok += 1;
        }
        worst_identity = worst_identity.max(rel(df::weighted_filter_energy(&t, &rr, &[RMat::identity(m, m)]), bound));
    }
    let src = markov::server_chain(0.3, 0.6, vec![1, 2]).unwrap();
    let (mean, p_u) = markov::input_model(&src, 1024).unwrap();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
    let d = df::assemble_df(&markov::demo_filter(), &p_u, &mean, &privacy, df::Domain::Binary, 2, &LmsSettings::default()).unwrap();
    let (trace, direct) = (d.theory_mse.unwrap(), d.diagnostics["theory_mse_direct"]);
    let two_ways = (trace - direct).abs();
    outcome(
        lemma_ok == 100 && worst_identity < 1e-12 && two_ways < 1e-8,
        format!(
            "lemma {lemma_ok}/100, W = I relative gap {worst_identity:.1e}; κ²Tr(TR) = {trace:.8} vs direct {direct:.8} (|diff| {two_ways:.1e} < 1e-8)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut worst_p: f64 = 0.0;
    for (a, b) in [(0.3, 0.6), (0.9, 0.1)] {
        let p = markov::stationary_distribution(&markov::server_example(a, b).unwrap()).unwrap();
        let q = a + b + a * b * 2.0;
        let expect = [b / q, a * b / q, a / q, a * b / q];
        for (x, y) in p.iter().zip(expect) {
            worst_p = worst_p.max((x - y).abs());
        }
    }
    let src = markov::server_example(0.3, 0.6).unwrap();
    let spec = dpfilter::spectral::autocovariance(&markov::chain_spectrum(&src, 1024).unwrap());
    let powers = markov::autocovariance_by_powers(&src, 20).unwrap();
    let worst_acv = spec.iter().zip(&powers).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);

    // Batch means over 100 blocks give the standard error of the sample
    // covariances of the correlated chain.
    let steps = 1_000_000;
    let blocks = 100;
    let x = markov::sample_chain(&src, steps, 8).unwrap();
    let p = markov::stationary_distribution(&src).unwrap();
    let mu: Vec<f64> = src.selectors().iter().map(|&s| p[s]).collect();
    let mut worst_z: f64 = 0.0;
    for lag in 0..=5 {
        for i in 0..2 {
            for j in 0..2 {
                let per_block: Vec<f64> = (0..blocks)
                    .map(|b| {
                        let lo = (b * steps / blocks).max(lag);
                        let hi = (b + 1) * steps / blocks;
                        (lo..hi).map(|t| (x.channel(i)[t] - mu[i]) * (x.channel(j)[t - lag] - mu[j])).sum::<f64>() / (hi - lo) as f64
                    })
                    .collect();
                let n = blocks as f64;
                let mean = per_block.iter().sum::<f64>() / n;
                let se = (per_block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
                worst_z = worst_z.max((mean - powers[lag][(i, j)]).abs() / se);
            }
        }
    }
    outcome(
        worst_p < 1e-12 && worst_acv < 1e-10 && worst_z < 3.0,
        format!("stationary error {worst_p:.1e} (< 1e-12), spectrum vs Π^k {worst_acv:.1e} (< 1e-10), Monte Carlo max z = {worst_z:.2} (< 3)"),
    )
}

fn criterion_9() -> Outcome {
    let mut worst_rt: f64 = 0.0;
    for i in 1..200 {
        let delta = i as f64 / 200.0;
        for d in [delta, delta.powi(8)] {
            let x = privacy::q_inverse(d).unwrap();
            worst_rt = worst_rt.max((privacy::q_function(x) - d).abs() / d);
        }
    }
    let mut kappa_exact = true;
    for eps in [0.1, 5f64.ln(), 1.0, 10.0] {
        kappa_exact &= privacy::kappa(eps, 0.5) == 1.0 / (2.0 * eps).sqrt();
    }
    let sigma = 1.7;
    let n = 1_000_000;
    let zero = EventStream::zeros("u", 1, n);
    let noisy = privacy::add_noise(&zero, sigma, 99);
    let var = noisy.channel(0).iter().map(|v| v * v).sum::<f64>() / n as f64;
    let var_err = rel(var, sigma * sigma);
    outcome(
        worst_rt < 1e-10 && kappa_exact && var_err < 0.02,
        format!("Q(Q⁻¹(δ)) relative error {worst_rt:.1e} (< 1e-10), κ(δ=0.5) = 1/√(2ε) exactly: {kappa_exact}, noise variance off by {:.2}% (< 2%)", 100.0 * var_err),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("ZFE bound attainment", criterion_1),
        ("Monte Carlo consistency", criterion_2),
        ("sensitivity sandwich and oracle", criterion_3),
        ("spectral factorization round trips", criterion_4),
        ("waterfilling vs general optimizer", criterion_5),
        ("mechanism ordering", criterion_6),
        ("DF lemma and formula", criterion_7),
        ("Markov analytics", criterion_8),
        ("privacy calibration", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {}: {} — {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
