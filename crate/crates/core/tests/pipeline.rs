//! End-to-end checks that design, simulate and compare mechanisms.

use dpfilter::df::{self, Domain};
use dpfilter::io::InputModel;
use dpfilter::markov;
use dpfilter::mechanism::{MechanismKind, Postfilter};
use dpfilter::privacy::{split_seed, PrivacySpec};
use dpfilter::sim::{self, CompareSettings, DesignSettings, ForecastModel, OccupancySource, SourceGenerator};
use dpfilter::stream::EventStream;
use dpfilter::lti::LtiSystem;

fn server_model() -> (markov::MarkovSource, InputModel) {
    let src = markov::server_chain(0.3, 0.6, vec![1, 2]).unwrap();
    let (mean, spectrum) = markov::input_model(&src, 1024).unwrap();
    (src, InputModel { mean, spectrum })
}

fn joint_z(a: &sim::MseEstimate, b: &sim::MseEstimate) -> f64 {
    (a.mean - b.mean).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

#[test]
fn forecast_refit_reproduces_fixture() {
    let (fit, frozen) = ForecastModel::default_fixture();
    let u = OccupancySource::building(frozen.channels()).generate(fit.steps, fit.seed).unwrap();
    let refit = sim::fit_forecast_model(&u, frozen.a.len(), fit.window_start, fit.window_len).unwrap();
    for (a, b) in refit.a.iter().chain(&refit.b0).chain(&refit.b1).zip(frozen.a.iter().chain(&frozen.b0).chain(&frozen.b1)) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn zfe_error_does_not_depend_on_the_source() {
    let f = markov::demo_filter();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
    let d = sim::design_mechanism(MechanismKind::Zfe, &f, None, &privacy, &DesignSettings::default()).unwrap();
    let theory = d.theory_mse.unwrap();
    let (chain, _) = server_model();
    let poisson = OccupancySource::new(vec![2.0, 0.5]).unwrap();
    let a = sim::empirical_mse(&d, &chain, 6, 10_000, 3).unwrap();
    let b = sim::empirical_mse(&d, &poisson, 6, 10_000, 3).unwrap();
    assert!(a.z_score(theory) < 3.0 && b.z_score(theory) < 3.0);
    assert!(joint_z(&a, &b) < 3.0);
}

#[test]
fn mechanisms_are_ordered_and_reports_reproducible() {
    let (src, model) = server_model();
    let f = markov::demo_filter();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
    let kinds = [MechanismKind::OutputPerturbation, MechanismKind::Zfe, MechanismKind::LmsSmoother];
    let settings = CompareSettings {
        trials: 4,
        steps: 6000,
        seed: 9,
        plot_steps: 200,
        ..Default::default()
    };
    let (report, plots) = sim::compare_mechanisms(&f, Some(&model), &src, &privacy, &kinds, &settings).unwrap();
    let get = |k| report.result(k).unwrap();
    let (op, zfe, lms) = (get(kinds[0]), get(kinds[1]), get(kinds[2]));
    assert!(lms.theory_mse.unwrap() < zfe.theory_mse.unwrap());
    assert!(zfe.theory_mse.unwrap() < op.theory_mse.unwrap());
    for (lo, hi) in [(lms, zfe), (zfe, op)] {
        let gap = hi.empirical.mean - lo.empirical.mean;
        assert!(gap > -3.0 * (lo.empirical.stderr.powi(2) + hi.empirical.stderr.powi(2)).sqrt());
    }
    assert!(report.bounds.nuclear_lower_bound <= report.bounds.zfe_diag_bound);

    let (again, plots_again) = sim::compare_mechanisms(&f, Some(&model), &src, &privacy, &kinds, &settings).unwrap();
    assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
    for (p, q) in plots.iter().zip(&plots_again) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        p.write_csv(&mut a).unwrap();
        q.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

/// The smoother error is uncorrelated with the observations at every lag.
#[test]
fn wiener_error_is_orthogonal_to_observations() {
    let (src, model) = server_model();
    let f = markov::demo_filter();
    let privacy = PrivacySpec::uniform(1.0, 0.05, 1.0, 2).unwrap();
    let d = sim::design_mechanism(MechanismKind::LmsSmoother, &f, Some(&model), &privacy, &DesignSettings::default()).unwrap();
    let steps = 20_000;
    let burn = sim::burn_in(&d, steps);
    let trials = 20u64;
    let max_lag = 10i64;
    // stats[o][i][lag] holds one cross-correlation per trial.
    let mut stats = vec![vec![vec![Vec::new(); (2 * max_lag + 1) as usize]; 2]; 2];
    for trial in 0..trials {
        let u = src.generate(steps, split_seed(77, 2 * trial)).unwrap();
        let run = d.run(&u, split_seed(77, 2 * trial + 1)).unwrap();
        let v: Vec<Vec<f64>> = run
            .v
            .channels()
            .iter()
            .map(|c| {
                let m = c[burn..].iter().sum::<f64>() / (steps - burn) as f64;
                c.iter().map(|x| x - m).collect()
            })
            .collect();
        for o in 0..2 {
            let e: Vec<f64> = run.y.channel(o).iter().zip(run.yhat.channel(o)).map(|(a, b)| a - b).collect();
            for (i, vi) in v.iter().enumerate() {
                for lag in -max_lag..=max_lag {
                    let range = (burn as i64 + max_lag) as usize..(steps as i64 - max_lag) as usize;
                    let n = range.len() as f64;
                    let c = range.map(|t| e[t] * vi[(t as i64 - lag) as usize]).sum::<f64>() / n;
                    stats[o][i][(lag + max_lag) as usize].push(c);
                }
            }
        }
    }
    for per_lag in stats.iter().flatten() {
        for xs in per_lag {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            assert!(mean.abs() <= 3.0 * se, "cross-correlation {mean:.3e} vs stderr {se:.3e}");
        }
    }
}

/// With the true past input fed back, the pre-decision DF estimate has the
/// closed-form MSE of the truncated design.
#[test]
fn df_with_correct_feedback_matches_theory() {
    let (src, model) = server_model();
    let f = markov::demo_filter();
    let privacy = PrivacySpec::uniform(50.0, 0.05, 1.0, 2).unwrap();
    let settings = DesignSettings {
        domain: Domain::Binary,
        ..Default::default()
    };
    let d = sim::design_mechanism(MechanismKind::DecisionFeedback, &f, Some(&model), &privacy, &settings).unwrap();
    let Postfilter::DecisionFeedback(post) = &d.postfilter else {
        panic!("expected a decision-feedback postfilter")
    };
    assert!((d.theory_mse.unwrap() - d.diagnostics["theory_mse_direct"]).abs() < 1e-8 * d.theory_mse.unwrap());
    assert!(d.theory_mse.unwrap() <= d.diagnostics["lms_smoother_mse"]);
    let steps = 20_000;
    let burn = sim::burn_in(&d, steps);
    let g_mu = d.prefilter.response(0.0).map(|c| c.re) * nalgebra::DVector::from_column_slice(&model.mean);
    let mut mses = Vec::new();
    for trial in 0..6 {
        let u = src.generate(steps, split_seed(5, 2 * trial)).unwrap();
        let run = d.run(&u, split_seed(5, 2 * trial + 1)).unwrap();
        let vc: Vec<Vec<f64>> = run.v.channels().iter().enumerate().map(|(i, c)| c.iter().map(|x| x - g_mu[i]).collect()).collect();
        let est = df::genie_pre_decision(post, &vc, &model.mean, u.channels()).unwrap();
        let y_est = f.simulate(&EventStream::from_channels("u", est).unwrap()).unwrap();
        mses.push(run.y.mean_squared_distance(&y_est, burn).unwrap());
        assert!(run.yhat.channels().iter().flatten().all(|v| v.is_finite()));
    }
    let n = mses.len() as f64;
    let mean = mses.iter().sum::<f64>() / n;
    let se = (mses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let theory = d.diagnostics["theory_mse_truncated"];
    assert!((mean - theory).abs() < 3.0 * se, "{mean} ± {se} vs {theory}");
}

/// Real-valued decisions make the loop linear: ũ − μ = B⁻¹H₁v, which can do
/// no better than the Wiener smoother.
#[test]
fn df_with_identity_decisions_is_a_linear_estimator() {
    let (src, model) = server_model();
    let f = markov::demo_filter();
    let privacy = PrivacySpec::uniform(5f64.ln(), 0.05, 1.0, 2).unwrap();
    let settings = DesignSettings {
        domain: Domain::Reals,
        ..Default::default()
    };
    let d = sim::design_mechanism(MechanismKind::DecisionFeedback, &f, Some(&model), &privacy, &settings).unwrap();
    let est = sim::empirical_mse(&d, &src, 4, 10_000, 1).unwrap();
    let lms = d.diagnostics["lms_smoother_mse"];
    assert!(est.mean > lms - 3.0 * est.stderr, "{} ± {} vs smoother {lms}", est.mean, est.stderr);
    assert_eq!(est.pre_decision_mean, Some(est.mean));
}
