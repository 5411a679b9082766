//! Experiment harness: the occupancy filter bank, synthetic sources,
//! Monte Carlo MSE estimates and mechanism comparisons.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::df::{self, Domain};
use crate::error::{Error, Result};
use crate::io::InputModel;
use crate::lms::{self, LmsMode, LmsSettings};
use crate::lti::{RationalFilter, TransferMatrix};
use crate::markov::{self, MarkovSource};
use crate::mechanism::{output_perturbation, MechanismDesign, MechanismKind};
use crate::privacy::{split_seed, PrivacySpec};
use crate::stream::EventStream;
use crate::zfe::{self, ZfeSettings};

/// Steps per day at the 3-minute sampling period.
pub const DAY: usize = 480;
/// Burn-in is this multiple of the design's memory.
pub const BURN_IN_FACTOR: usize = 10;
/// Tail-energy fraction defining the memory used for burn-in.
pub const MEMORY_TAIL: f64 = 1e-8;

const F2_FIXTURE: &str = include_str!("../data/f2_taps.txt");
const FORECAST_FIXTURE: &str = include_str!("../data/forecast_default.toml");

/// Moving sum of the last hour: (1/20) Σ_{k=1}^{20} z^{-k}.
pub fn f1() -> RationalFilter {
    RationalFilter::moving_average(20, 1)
}

/// Gaussian low-pass of length 20 whose 3 dB bandwidth matches BT = 0.5 at
/// 10 samples per symbol, sampled at half-integer offsets around its centre
/// and normalized to unit DC gain.
pub fn gaussian_taps() -> Vec<f64> {
    let sd = (2f64.ln()).sqrt() / (2.0 * std::f64::consts::PI * 0.5) * 10.0;
    let raw: Vec<f64> = (0..20)
        .map(|k| {
            let t = k as f64 - 9.5;
            (-t * t / (2.0 * sd * sd)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// f₂ with the frozen taps.
pub fn f2() -> RationalFilter {
    let taps = F2_FIXTURE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().expect("fixture taps are numbers"))
        .collect();
    RationalFilter::fir(taps)
}

/// Forecast filter f₃: y_t = Σ a_i y_{t−i} + b₀ u_t + b₁ u_{t−2}, with
/// row vectors b₀, b₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastModel {
    pub a: Vec<f64>,
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// How the shipped defaults were produced; the refit test replays this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastFit {
    pub seed: u64,
    pub steps: usize,
    /// Target window (in steps ahead) whose mean total is forecast.
    pub window_start: usize,
    pub window_len: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastFixture {
    fit: ForecastFit,
    model: ForecastModel,
}

impl ForecastModel {
    /// Toolkit-fitted defaults (least squares on the synthetic source).
    pub fn toolkit_default() -> Self {
        Self::default_fixture().1
    }

    pub fn default_fixture() -> (ForecastFit, ForecastModel) {
        let f: ForecastFixture = toml::from_str(FORECAST_FIXTURE).expect("forecast fixture parses");
        (f.fit, f.model)
    }

    pub fn channels(&self) -> usize {
        self.b0.len()
    }

    /// The 1×m row f₃.
    pub fn filter(&self) -> Result<TransferMatrix> {
        if self.b0.len() != self.b1.len() {
            return Err(Error::DimensionMismatch {
                what: "forecast b1 length",
                expected: self.b0.len(),
                found: self.b1.len(),
            });
        }
        let mut den = vec![1.0];
        den.extend(self.a.iter().map(|a| -a));
        let row = (0..self.channels())
            .map(|j| RationalFilter::new(vec![self.b0[j], 0.0, self.b1[j]], den.clone()))
            .collect::<Result<Vec<_>>>()?;
        let tm = TransferMatrix::new(1, self.channels(), row)?;
        let r = tm.max_pole_radius();
        if r >= 1.0 - crate::lti::STABILITY_MARGIN {
            return Err(Error::UnstableSystem { radius: r });
        }
        Ok(tm)
    }
}

/// Equation-error least squares for the forecast model: the target at t is
/// the mean of Σ_i u_i over steps t + start .. t + start + len − 1.
pub fn fit_forecast_model(u: &EventStream, ar_order: usize, window_start: usize, window_len: usize) -> Result<ForecastModel> {
    let m = u.channel_count();
    let len = u.len();
    let total: Vec<f64> = (0..len).map(|t| u.channels().iter().map(|c| c[t]).sum()).collect();
    let horizon = window_start + window_len;
    if window_len == 0 || len <= horizon + ar_order.max(2) + 1 {
        return Err(Error::Config("stream too short for the forecast window".into()));
    }
    let target: Vec<f64> = (0..len - horizon + 1)
        .map(|t| total[t + window_start..t + horizon].iter().sum::<f64>() / window_len as f64)
        .collect();
    let first = ar_order.max(2);
    let rows = target.len() - first;
    let cols = ar_order + 2 * m;
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (r, t) in (first..target.len()).enumerate() {
        for i in 0..ar_order {
            x[(r, i)] = target[t - 1 - i];
        }
        for j in 0..m {
            x[(r, ar_order + j)] = u.channel(j)[t];
            x[(r, ar_order + m + j)] = u.channel(j)[t - 2];
        }
        y[r] = target[t];
    }
    let svd = (x.transpose() * &x).svd(true, true);
    let theta = svd
        .solve(&(x.transpose() * y), 1e-12)
        .map_err(|e| Error::FitFailed {
            condition: f64::INFINITY,
            reason: e.to_string(),
        })?;
    let model = ForecastModel {
        a: theta.as_slice()[..ar_order].to_vec(),
        b0: theta.as_slice()[ar_order..ar_order + m].to_vec(),
        b1: theta.as_slice()[ar_order + m..].to_vec(),
        label: Some("toolkit-fitted on synthetic occupancy data".into()),
    };
    model.filter()?;
    Ok(model)
}

/// The 3×m bank: zone-1–5 hourly average, Gaussian smoothing of zones
/// 5–12, and the building-wide forecast.
pub fn occupancy_filter_bank(m: usize, forecast: Option<&ForecastModel>) -> Result<TransferMatrix> {
    if m < 12 {
        return Err(Error::Config(format!("the occupancy bank needs at least 12 zones, got {m}")));
    }
    let forecast = forecast.ok_or_else(|| {
        Error::MissingForecastModel("supply a1..a4, b0 and b1 (or use the toolkit defaults)".into())
    })?;
    if forecast.channels() != m {
        return Err(Error::DimensionMismatch {
            what: "forecast model channels",
            expected: m,
            found: forecast.channels(),
        });
    }
    let f3 = forecast.filter()?;
    let (a, b) = (f1(), f2());
    Ok(TransferMatrix::from_fn(3, m, |i, j| match i {
        0 if j < 5 => a.clone(),
        1 if (4..12).contains(&j) => b.clone(),
        2 => f3.get(0, j).clone(),
        _ => RationalFilter::zero(),
    }))
}

/// Two-state busy/quiet regime shared by all zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulator {
    /// P(quiet → busy) per step.
    pub p_up: f64,
    /// P(busy → quiet) per step.
    pub p_down: f64,
    /// Rate multiplier while busy.
    pub busy_gain: f64,
}

/// Poisson event counts per zone with a daily cycle.
///
/// Zone i has rate r_i · (1 + A sin(2π t / period)) · g_t, where g_t is
/// the modulator gain (1 when quiet or absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySource {
    pub rates: Vec<f64>,
    #[serde(default = "default_amplitude")]
    pub daily_amplitude: f64,
    #[serde(default = "default_period")]
    pub period: usize,
    #[serde(default)]
    pub modulator: Option<Modulator>,
}

fn default_amplitude() -> f64 {
    0.8
}

fn default_period() -> usize {
    DAY
}

impl OccupancySource {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        let s = Self {
            rates,
            daily_amplitude: default_amplitude(),
            period: DAY,
            modulator: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Default building: m zones with rates 1.0, 1.2, … and a shared
    /// busy regime (mean sojourns 60 and 30 steps, gain 2).
    pub fn building(m: usize) -> Self {
        Self {
            rates: (0..m).map(|i| 1.0 + 0.2 * (i % 6) as f64).collect(),
            daily_amplitude: default_amplitude(),
            period: DAY,
            modulator: Some(Modulator {
                p_up: 1.0 / 60.0,
                p_down: 1.0 / 30.0,
                busy_gain: 2.0,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("zone rates must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.daily_amplitude) {
            return Err(Error::Config("daily amplitude must lie in [0, 1]".into()));
        }
        if self.period == 0 {
            return Err(Error::Config("period must be positive".into()));
        }
        if let Some(md) = &self.modulator {
            let ok = |p: f64| p > 0.0 && p <= 1.0;
            if !ok(md.p_up) || !ok(md.p_down) || !(md.busy_gain >= 0.0 && md.busy_gain.is_finite()) {
                return Err(Error::Config("modulator probabilities must lie in (0, 1] and the gain be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Long-run mean count of each zone (the daily cycle averages out over
    /// whole periods).
    pub fn mean_rates(&self) -> Vec<f64> {
        let g = match &self.modulator {
            Some(md) => {
                let busy = md.p_up / (md.p_up + md.p_down);
                1.0 - busy + busy * md.busy_gain
            }
            None => 1.0,
        };
        self.rates.iter().map(|r| r * g).collect()
    }
}

/// Anything that can produce a fresh input record per trial.
pub trait SourceGenerator: Sync {
    fn channels(&self) -> usize;
    fn generate(&self, steps: usize, seed: u64) -> Result<EventStream>;
}

impl SourceGenerator for OccupancySource {
    fn channels(&self) -> usize {
        self.rates.len()
    }

    fn generate(&self, steps: usize, seed: u64) -> Result<EventStream> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut busy = match &self.modulator {
            Some(md) => rng.random::<f64>() < md.p_up / (md.p_up + md.p_down),
            None => false,
        };
        let mut channels = vec![vec![0.0; steps]; self.rates.len()];
        for t in 0..steps {
            let phase = 2.0 * std::f64::consts::PI * (t % self.period) as f64 / self.period as f64;
            let mut level = 1.0 + self.daily_amplitude * phase.sin();
            if let Some(md) = &self.modulator {
                if busy {
                    level *= md.busy_gain;
                }
                let flip = if busy { md.p_down } else { md.p_up };
                if rng.random::<f64>() < flip {
                    busy = !busy;
                }
            }
            for (c, r) in channels.iter_mut().zip(&self.rates) {
                let lambda = r * level;
                if lambda > 0.0 {
                    let p = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
                    c[t] = p.sample(&mut rng);
                }
            }
        }
        Ok(EventStream::from_channels("zone", channels)?.with_dt_label("3 min"))
    }
}

impl SourceGenerator for MarkovSource {
    fn channels(&self) -> usize {
        MarkovSource::channels(self)
    }

    fn generate(&self, steps: usize, seed: u64) -> Result<EventStream> {
        markov::sample_chain(self, steps, seed)
    }
}

/// A fixed record replayed in every trial (only the noise varies).
#[derive(Debug, Clone)]
pub struct RecordedSource(pub EventStream);

impl SourceGenerator for RecordedSource {
    fn channels(&self) -> usize {
        self.0.channel_count()
    }

    fn generate(&self, steps: usize, _seed: u64) -> Result<EventStream> {
        if steps > self.0.len() {
            return Err(Error::Config(format!(
                "recorded source has {} steps, {steps} requested",
                self.0.len()
            )));
        }
        let channels = self.0.channels().iter().map(|c| c[..steps].to_vec()).collect();
        EventStream::new(self.0.names().to_vec(), channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mean: f64,
    /// Standard error of the mean across trials.
    pub stderr: f64,
    pub trials: usize,
    pub steps: usize,
    pub burn_in: usize,
    /// For decision feedback: the same statistics before the decision
    /// device, which is what the closed-form MSE describes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_decision_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_decision_stderr: Option<f64>,
}

impl MseEstimate {
    /// |mean − x| in units of the standard error.
    pub fn z_score(&self, x: f64) -> f64 {
        (self.mean - x).abs() / self.stderr
    }
}

/// Burn-in for a design: ten times its memory, capped at half the record.
pub fn burn_in(design: &MechanismDesign, steps: usize) -> usize {
    (BURN_IN_FACTOR * (design.memory(MEMORY_TAIL) + design.delay())).min(steps / 2)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of lim (1/T) Σ E|y_t − ŷ_t|². Trial i draws its
/// input from `split_seed(seed, 2i)` and its noise from
/// `split_seed(seed, 2i + 1)`.
pub fn empirical_mse(
    design: &MechanismDesign,
    source: &dyn SourceGenerator,
    trials: usize,
    steps: usize,
    seed: u64,
) -> Result<MseEstimate> {
    let b = burn_in(design, steps);
    empirical_mse_with_burn_in(design, source, trials, steps, seed, b)
}

pub fn empirical_mse_with_burn_in(
    design: &MechanismDesign,
    source: &dyn SourceGenerator,
    trials: usize,
    steps: usize,
    seed: u64,
    burn_in: usize,
) -> Result<MseEstimate> {
    if trials < 2 {
        return Err(Error::Config("at least two trials are needed for a standard error".into()));
    }
    if source.channels() != design.inputs() {
        return Err(Error::DimensionMismatch {
            what: "source channels",
            expected: design.inputs(),
            found: source.channels(),
        });
    }
    let per_trial: Vec<(f64, Option<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let u = source.generate(steps, split_seed(seed, 2 * i))?;
            let run = design.run(&u, split_seed(seed, 2 * i + 1))?;
            let mse = run.y.mean_squared_distance(&run.yhat, burn_in)?;
            let pre = match &run.pre_decision {
                Some(p) => Some(run.y.mean_squared_distance(p, burn_in)?),
                None => None,
            };
            Ok((mse, pre))
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&per_trial.iter().map(|p| p.0).collect::<Vec<_>>());
    let pre: Option<Vec<f64>> = per_trial.iter().map(|p| p.1).collect();
    let pre_stats = pre.map(|v| mean_stderr(&v));
    Ok(MseEstimate {
        mean,
        stderr,
        trials,
        steps,
        burn_in,
        pre_decision_mean: pre_stats.map(|s| s.0),
        pre_decision_stderr: pre_stats.map(|s| s.1),
    })
}

/// Knobs shared by every mechanism design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSettings {
    pub grid_n: usize,
    pub zfe_order: usize,
    pub lms: LmsSettings,
    pub lookahead: usize,
    pub domain: Domain,
}

impl Default for DesignSettings {
    fn default() -> Self {
        let z = ZfeSettings::default();
        Self {
            grid_n: z.grid_n,
            zfe_order: z.order,
            lms: LmsSettings::default(),
            lookahead: df::DEFAULT_LOOKAHEAD,
            domain: Domain::Integers,
        }
    }
}

/// Designs one mechanism. LMS and DF need the public input model.
pub fn design_mechanism(
    kind: MechanismKind,
    f: &TransferMatrix,
    input: Option<&InputModel>,
    privacy: &PrivacySpec,
    settings: &DesignSettings,
) -> Result<MechanismDesign> {
    let need_input = || {
        input.ok_or_else(|| Error::Config(format!("the {} mechanism needs an input spectrum", kind.name())))
    };
    let check = |m: &InputModel| -> Result<()> {
        if m.channels() != f.cols() || m.spectrum.n() != settings.grid_n {
            return Err(Error::DimensionMismatch {
                what: "input model channels",
                expected: f.cols(),
                found: m.channels(),
            });
        }
        Ok(())
    };
    match kind {
        MechanismKind::OutputPerturbation => output_perturbation(f, privacy, settings.grid_n),
        MechanismKind::Zfe => zfe::design_zfe(
            f,
            privacy,
            ZfeSettings {
                grid_n: settings.grid_n,
                order: settings.zfe_order,
            },
        ),
        MechanismKind::LmsSmoother | MechanismKind::LmsCausal => {
            let m = need_input()?;
            check(m)?;
            let mode = if kind == MechanismKind::LmsSmoother {
                LmsMode::Smoother
            } else {
                LmsMode::Causal
            };
            lms::assemble_lms(f, &m.spectrum, &m.mean, privacy, mode, &settings.lms)
        }
        MechanismKind::DecisionFeedback => {
            let m = need_input()?;
            check(m)?;
            df::assemble_df(f, &m.spectrum, &m.mean, privacy, settings.domain, settings.lookahead, &settings.lms)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportBounds {
    /// κ²(mean Σ k_i|F_i|₂)², attained by the diagonal ZFE.
    pub zfe_diag_bound: f64,
    /// κ²(mean ‖FK‖_*)², below every ZFE design.
    pub nuclear_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismResult {
    pub kind: MechanismKind,
    pub theory_mse: Option<f64>,
    pub empirical: MseEstimate,
    pub noise_sigma: f64,
    pub sensitivity: f64,
    pub delay: usize,
    /// Wall-clock seconds for design plus simulation; omitted unless
    /// requested so that reports are reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
    /// Caveat attached to `theory_mse`, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_note: Option<String>,
}

impl MechanismResult {
    pub fn new(design: &MechanismDesign, empirical: MseEstimate, runtime_s: Option<f64>) -> Self {
        let theory_note = match design.kind {
            MechanismKind::DecisionFeedback => Some("pre-decision MSE assuming correct past decisions".to_string()),
            MechanismKind::LmsCausal => Some("no closed form; see the design's causal_mse diagnostic".to_string()),
            _ => None,
        };
        Self {
            kind: design.kind,
            theory_mse: design.theory_mse,
            empirical,
            noise_sigma: design.noise_sigma,
            sensitivity: design.sensitivity,
            delay: design.delay(),
            runtime_s,
            theory_note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub privacy: PrivacySpec,
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub bounds: ReportBounds,
    pub mechanisms: Vec<MechanismResult>,
    /// Free-form echo of the configuration that produced the report.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn result(&self, kind: MechanismKind) -> Option<&MechanismResult> {
        self.mechanisms.iter().find(|r| r.kind == kind)
    }
}

/// y and ŷ of the first trial, for plotting.
#[derive(Debug, Clone)]
pub struct PlotData {
    pub kind: MechanismKind,
    pub y: EventStream,
    pub yhat: EventStream,
}

impl PlotData {
    /// CSV with columns t, y_1, yhat_1, y_2, yhat_2, …
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_plot_csv(writer, &self.y, &self.yhat)
    }
}

pub fn write_plot_csv<W: Write>(writer: W, y: &EventStream, yhat: &EventStream) -> Result<()> {
    if y.channel_count() != yhat.channel_count() || y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            what: "plot streams",
            expected: y.channel_count() * y.len(),
            found: yhat.channel_count() * yhat.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    for i in 1..=y.channel_count() {
        header.push(format!("y_{i}"));
        header.push(format!("yhat_{i}"));
    }
    w.write_record(&header)?;
    for t in 0..y.len() {
        let mut row = vec![t.to_string()];
        for i in 0..y.channel_count() {
            row.push(y.channel(i)[t].to_string());
            row.push(yhat.channel(i)[t].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSettings {
    pub design: DesignSettings,
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    /// Length of the plotted excerpt (first trial, from t = 0).
    pub plot_steps: usize,
    pub record_runtime: bool,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            design: DesignSettings::default(),
            trials: 10,
            steps: 20_000,
            seed: 0,
            plot_steps: 3 * DAY,
            record_runtime: false,
        }
    }
}

/// Designs and simulates each requested mechanism on the same source and
/// collects theory, bounds and Monte Carlo results.
pub fn compare_mechanisms(
    f: &TransferMatrix,
    input: Option<&InputModel>,
    source: &dyn SourceGenerator,
    privacy: &PrivacySpec,
    kinds: &[MechanismKind],
    settings: &CompareSettings,
) -> Result<(ExperimentReport, Vec<PlotData>)> {
    let n = settings.design.grid_n;
    let bounds = ReportBounds {
        zfe_diag_bound: zfe::zfe_mse_diag_bound(f, privacy, n)?,
        nuclear_lower_bound: zfe::zfe_general_lower_bound(f, privacy, n)?,
    };
    let mut results = Vec::with_capacity(kinds.len());
    let mut plots = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let start = Instant::now();
        let design = design_mechanism(kind, f, input, privacy, &settings.design)?;
        let empirical = empirical_mse(&design, source, settings.trials, settings.steps, settings.seed)?;
        let runtime = start.elapsed().as_secs_f64();
        let plot_len = settings.plot_steps.min(settings.steps);
        let u = source.generate(plot_len, split_seed(settings.seed, 0))?;
        let run = design.run(&u, split_seed(settings.seed, 1))?;
        plots.push(PlotData {
            kind,
            y: run.y,
            yhat: run.yhat,
        });
        results.push(MechanismResult::new(&design, empirical, settings.record_runtime.then_some(runtime)));
    }
    let report = ExperimentReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: None,
        privacy: privacy.clone(),
        trials: settings.trials,
        steps: settings.steps,
        seed: settings.seed,
        bounds,
        mechanisms: results,
        config: serde_json::to_value(settings)?,
    };
    Ok((report, plots))
}
