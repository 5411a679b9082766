//! JSON documents written by the tool. Each carries the tool version and
//! the hash of the configuration and inputs that produced it; the schemas
//! live in `schemas/` at the repository root.

use dpfilter::mechanism::{MechanismDesign, MechanismKind};
use dpfilter::sensitivity::SensitivityReport;
use dpfilter::sim::{ExperimentReport, ReportBounds};
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub bounds: ReportBounds,
    pub design: MechanismDesign,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityDocument {
    pub tool_version: String,
    pub config_hash: String,
    pub k: Vec<f64>,
    pub report: SensitivityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// File the row came from.
    pub input: String,
    pub input_config_hash: Option<String>,
    pub kind: MechanismKind,
    pub theory_mse: Option<f64>,
    pub empirical_mean: Option<f64>,
    pub empirical_stderr: Option<f64>,
    pub noise_sigma: f64,
    pub sensitivity: f64,
    pub delay: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub tool_version: String,
    pub config_hash: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonRow {
    pub fn from_design(input: &str, doc: &DesignDocument) -> Self {
        let d = &doc.design;
        Self {
            input: input.to_string(),
            input_config_hash: Some(doc.config_hash.clone()),
            kind: d.kind,
            theory_mse: d.theory_mse,
            empirical_mean: None,
            empirical_stderr: None,
            noise_sigma: d.noise_sigma,
            sensitivity: d.sensitivity,
            delay: d.delay(),
            theory_note: None,
        }
    }

    pub fn from_report(input: &str, report: &ExperimentReport) -> Vec<Self> {
        report
            .mechanisms
            .iter()
            .map(|m| Self {
                input: input.to_string(),
                input_config_hash: report.config_hash.clone(),
                kind: m.kind,
                theory_mse: m.theory_mse,
                empirical_mean: Some(m.empirical.mean),
                empirical_stderr: Some(m.empirical.stderr),
                noise_sigma: m.noise_sigma,
                sensitivity: m.sensitivity,
                delay: m.delay,
                theory_note: m.theory_note.clone(),
            })
            .collect()
    }
}

impl ComparisonDocument {
    pub fn markdown(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or("–".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("| input | mechanism | theory MSE | empirical MSE | stderr | σ | delay |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {:.6} | {} |\n",
                r.input,
                r.kind.name(),
                fmt(r.theory_mse),
                fmt(r.empirical_mean),
                fmt(r.empirical_stderr),
                r.noise_sigma,
                r.delay
            ));
        }
        out
    }
}
