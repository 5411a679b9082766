//! Run configuration. Every key is optional; unknown keys are rejected.
//!
//! ```toml
//! seed = 0                      # top-level seed; children via split_seed
//!
//! [filter]
//! builtin = "occupancy-bank"    # or "markov-demo"; alternatively path = "..."
//! channels = 15                 # width of the occupancy bank
//! # forecast = "forecast.toml"  # forecast model; default: shipped fit
//!
//! [privacy]
//! epsilon = 1.6094379124341003  # ln 5
//! delta = 0.05
//! k = [1.0]                     # one per input, or a single shared value
//!
//! [design]
//! mechanism = "zfe"             # zfe | lms | lms-causal | df | output
//! grid_n = 1024
//! factor_order = 40
//! allocation_floor = 1e-6
//! fir_tail = 1e-12
//! lookahead = 2
//! domain = "integers"           # integers | binary | reals
//!
//! [spectrum]
//! # path = "spectrum.toml"
//!
//! [sensitivity]
//! tail_tol = 1e-10
//!
//! [simulation]
//! # source = "source.toml"      # or a recorded stream.csv
//! trials = 10
//! steps = 20000
//! plot_steps = 1440
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use dpfilter::df::Domain;
use dpfilter::lti::DEFAULT_GRID_N;
use dpfilter::mechanism::MechanismKind;
use dpfilter::privacy::PrivacySpec;
use dpfilter::spectral::DEFAULT_FACTOR_ORDER;
use dpfilter::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub filter: FilterConfig,
    pub privacy: PrivacyConfig,
    pub design: DesignConfig,
    pub spectrum: SpectrumConfig,
    pub sensitivity: SensitivityConfig,
    pub simulation: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub path: Option<PathBuf>,
    pub builtin: Option<Builtin>,
    pub channels: usize,
    pub forecast: Option<PathBuf>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            path: None,
            builtin: None,
            channels: 15,
            forecast: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    OccupancyBank,
    MarkovDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub k: Vec<f64>,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            epsilon: 5f64.ln(),
            delta: 0.05,
            k: vec![1.0],
        }
    }
}

impl PrivacyConfig {
    /// The privacy spec for `m` inputs; a single k is shared by all.
    pub fn spec(&self, m: usize) -> Result<PrivacySpec> {
        let k = match self.k.as_slice() {
            [one] => vec![*one; m],
            many if many.len() == m => many.to_vec(),
            many => {
                return Err(Error::Config(format!(
                    "privacy.k has {} entries but the filter has {m} inputs",
                    many.len()
                )))
            }
        };
        PrivacySpec::new(self.epsilon, self.delta, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Zfe,
    Lms,
    LmsCausal,
    Df,
    Output,
}

impl Mechanism {
    pub fn kind(self) -> MechanismKind {
        match self {
            Mechanism::Zfe => MechanismKind::Zfe,
            Mechanism::Lms => MechanismKind::LmsSmoother,
            Mechanism::LmsCausal => MechanismKind::LmsCausal,
            Mechanism::Df => MechanismKind::DecisionFeedback,
            Mechanism::Output => MechanismKind::OutputPerturbation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub mechanism: Mechanism,
    pub grid_n: usize,
    pub factor_order: usize,
    pub allocation_floor: f64,
    pub fir_tail: f64,
    pub lookahead: usize,
    pub domain: Domain,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let lms = dpfilter::lms::LmsSettings::default();
        Self {
            mechanism: Mechanism::Zfe,
            grid_n: DEFAULT_GRID_N,
            factor_order: DEFAULT_FACTOR_ORDER,
            allocation_floor: lms.allocation_floor,
            fir_tail: lms.fir_tail,
            lookahead: dpfilter::df::DEFAULT_LOOKAHEAD,
            domain: Domain::Integers,
        }
    }
}

impl DesignConfig {
    pub fn settings(&self) -> dpfilter::sim::DesignSettings {
        dpfilter::sim::DesignSettings {
            grid_n: self.grid_n,
            zfe_order: self.factor_order,
            lms: dpfilter::lms::LmsSettings {
                order: self.factor_order,
                allocation_floor: self.allocation_floor,
                fir_tail: self.fir_tail,
            },
            lookahead: self.lookahead,
            domain: self.domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub tail_tol: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            tail_tol: dpfilter::sensitivity::DEFAULT_TAIL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub source: Option<PathBuf>,
    pub trials: usize,
    pub steps: usize,
    pub plot_steps: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let c = dpfilter::sim::CompareSettings::default();
        Self {
            source: None,
            trials: c.trials,
            steps: c.steps,
            plot_steps: c.plot_steps,
        }
    }
}

impl Config {
    /// Reads a config file; relative paths inside become relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.filter.path,
            &mut cfg.filter.forecast,
            &mut cfg.spectrum.path,
            &mut cfg.simulation.source,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter.path.is_some() && self.filter.builtin.is_some() {
            return Err(Error::Config("set either filter.path or filter.builtin, not both".into()));
        }
        if self.design.grid_n < 8 {
            return Err(Error::Config(format!("design.grid_n must be at least 8, got {}", self.design.grid_n)));
        }
        if self.design.factor_order == 0 {
            return Err(Error::Config("design.factor_order must be positive".into()));
        }
        if self.simulation.trials < 2 {
            return Err(Error::Config("simulation.trials must be at least 2".into()));
        }
        Ok(())
    }
}

/// SHA-256 over the effective configuration and the bytes of every input
/// file, in the order they were read.
#[derive(Clone)]
pub struct ConfigHash(Sha256);

impl ConfigHash {
    pub fn new(cfg: &Config) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(cfg)?);
        Ok(Self(h))
    }

    pub fn add_input(&mut self, label: &str, bytes: &[u8]) {
        self.0.update((label.len() as u64).to_le_bytes());
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    pub fn hex(&self) -> String {
        self.0.clone().finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
