use std::path::{Path, PathBuf};

use dpfilter::io::{self, InputModel};
use dpfilter::lti::TransferMatrix;
use dpfilter::markov::{self, MarkovSource, RawSource};
use dpfilter::mechanism::{MechanismDesign, Postfilter};
use dpfilter::privacy::split_seed;
use dpfilter::sensitivity::sensitivity_report;
use dpfilter::sim::{self, ExperimentReport, ForecastModel, MechanismResult, OccupancySource, RecordedSource, ReportBounds, SourceGenerator};
use dpfilter::stream::EventStream;
use dpfilter::{zfe, Error, Result};
use log::{info, warn};
use serde::Deserialize;

use crate::config::{Builtin, Config, ConfigHash};
use crate::documents::{ComparisonDocument, ComparisonRow, DesignDocument, SensitivityDocument, TOOL_VERSION};
use crate::{Cli, Command};

/// Simulation source file, selected by `kind`.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SourceFile {
    Markov(RawSource),
    /// The four-state server chain.
    Server {
        alpha: f64,
        beta: f64,
        #[serde(default = "server_selectors")]
        selectors: Vec<usize>,
    },
    Occupancy(OccupancySource),
}

fn server_selectors() -> Vec<usize> {
    vec![1, 3]
}

fn read_input(path: &Path, label: &str, hash: &mut ConfigHash) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {label} {}: {e}", path.display())))?;
    hash.add_input(label, text.as_bytes());
    Ok(text)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?;
            info!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_filter(cfg: &Config, hash: &mut ConfigHash) -> Result<TransferMatrix> {
    if let Some(p) = &cfg.filter.path {
        return io::parse_filter(&read_input(p, "filter", hash)?);
    }
    match cfg.filter.builtin.unwrap_or(Builtin::OccupancyBank) {
        Builtin::MarkovDemo => Ok(markov::demo_filter()),
        Builtin::OccupancyBank => {
            let model = match &cfg.filter.forecast {
                Some(p) => toml::from_str::<ForecastModel>(&read_input(p, "forecast", hash)?)
                    .map_err(|e| Error::Parse(format!("forecast model: {e}")))?,
                None => {
                    warn!("using the toolkit-fitted forecast model; set filter.forecast to supply identified coefficients");
                    ForecastModel::toolkit_default()
                }
            };
            sim::occupancy_filter_bank(cfg.filter.channels, Some(&model))
        }
    }
}

fn load_input_model(cfg: &Config, hash: &mut ConfigHash) -> Result<Option<InputModel>> {
    match &cfg.spectrum.path {
        Some(p) => Ok(Some(io::parse_spectrum(&read_input(p, "spectrum", hash)?)?.input_model(cfg.design.grid_n)?)),
        None => Ok(None),
    }
}

fn bounds(design: &MechanismDesign) -> Result<ReportBounds> {
    Ok(ReportBounds {
        zfe_diag_bound: zfe::zfe_mse_diag_bound(&design.desired, &design.privacy, design.grid_n)?,
        nuclear_lower_bound: zfe::zfe_general_lower_bound(&design.desired, &design.privacy, design.grid_n)?,
    })
}

fn design_from_config(cfg: &Config, hash: &mut ConfigHash) -> Result<MechanismDesign> {
    let f = load_filter(cfg, hash)?;
    let privacy = cfg.privacy.spec(f.cols())?;
    let input = load_input_model(cfg, hash)?;
    info!("designing {} for a {}x{} filter", cfg.design.mechanism.kind().name(), f.rows(), f.cols());
    sim::design_mechanism(cfg.design.mechanism.kind(), &f, input.as_ref(), &privacy, &cfg.design.settings())
}

fn load_source(path: &Path, hash: &mut ConfigHash) -> Result<Box<dyn SourceGenerator>> {
    let text = read_input(path, "source", hash)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Ok(Box::new(RecordedSource(EventStream::read_csv(text.as_bytes())?)));
    }
    let spec: SourceFile = toml::from_str(&text).map_err(|e| Error::Parse(format!("source file: {e}")))?;
    Ok(match spec {
        SourceFile::Markov(raw) => Box::new(MarkovSource::try_from(raw)?),
        SourceFile::Server { alpha, beta, selectors } => Box::new(markov::server_chain(alpha, beta, selectors)?),
        SourceFile::Occupancy(s) => {
            s.validate()?;
            Box::new(s)
        }
    })
}

fn markov_from_file(path: &Path, hash: &mut ConfigHash) -> Result<MarkovSource> {
    let spec: SourceFile =
        toml::from_str(&read_input(path, "source", hash)?).map_err(|e| Error::Parse(format!("source file: {e}")))?;
    match spec {
        SourceFile::Markov(raw) => MarkovSource::try_from(raw),
        SourceFile::Server { alpha, beta, selectors } => markov::server_chain(alpha, beta, selectors),
        SourceFile::Occupancy(_) => Err(Error::Config("markov-gen needs a markov or server source".into())),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.grid_n {
        cfg.design.grid_n = n;
    }
    let set_filter = |cfg: &mut Config, p: Option<PathBuf>| {
        if let Some(p) = p {
            cfg.filter.path = Some(p);
            cfg.filter.builtin = None;
        }
    };
    match cli.command {
        Command::Design {
            mechanism,
            filter,
            spectrum,
            domain,
            lookahead,
        } => {
            set_filter(&mut cfg, filter);
            cfg.spectrum.path = spectrum.or(cfg.spectrum.path);
            cfg.design.mechanism = mechanism.unwrap_or(cfg.design.mechanism);
            cfg.design.domain = domain.unwrap_or(cfg.design.domain);
            cfg.design.lookahead = lookahead.unwrap_or(cfg.design.lookahead);
            cfg.validate()?;
            let mut hash = ConfigHash::new(&cfg)?;
            let design = design_from_config(&cfg, &mut hash)?;
            let doc = DesignDocument {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: hash.hex(),
                seed: cfg.seed,
                bounds: bounds(&design)?,
                design,
            };
            write_output(g.out.as_deref(), &to_json(&doc)?)
        }
        Command::Sensitivity { filter, k } => {
            set_filter(&mut cfg, filter);
            if let Some(k) = k {
                cfg.privacy.k = k;
            }
            cfg.validate()?;
            let mut hash = ConfigHash::new(&cfg)?;
            let f = load_filter(&cfg, &mut hash)?;
            let k = cfg.privacy.spec(f.cols())?.k;
            let report = sensitivity_report(&f, &k, cfg.sensitivity.tail_tol)?;
            let doc = SensitivityDocument {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: hash.hex(),
                k,
                report,
            };
            write_output(g.out.as_deref(), &to_json(&doc)?)
        }
        Command::Simulate {
            design,
            mechanism,
            source,
            trials,
            steps,
            domain,
            report,
            plots,
        } => {
            cfg.design.mechanism = mechanism.unwrap_or(cfg.design.mechanism);
            cfg.design.domain = domain.unwrap_or(cfg.design.domain);
            cfg.simulation.source = source.or(cfg.simulation.source);
            cfg.simulation.trials = trials.unwrap_or(cfg.simulation.trials);
            let steps_given = steps.is_some();
            cfg.simulation.steps = steps.unwrap_or(cfg.simulation.steps);
            cfg.validate()?;
            let mut hash = ConfigHash::new(&cfg)?;
            let mut design = match &design {
                Some(p) => {
                    let doc: DesignDocument = serde_json::from_str(&read_input(p, "design", &mut hash)?)
                        .map_err(|e| Error::Parse(format!("design file: {e}")))?;
                    doc.design
                }
                None => design_from_config(&cfg, &mut hash)?,
            };
            if let (Some(d), Postfilter::DecisionFeedback(df)) = (domain, &mut design.postfilter) {
                df.domain = d;
            }
            let src_path = cfg
                .simulation
                .source
                .clone()
                .ok_or_else(|| Error::Config("simulate needs a source (--source or simulation.source)".into()))?;
            let source = load_source(&src_path, &mut hash)?;
            let mut steps = cfg.simulation.steps;
            if let Some(rec) = source_len(&src_path) {
                if !steps_given && rec < steps {
                    info!("recorded source has {rec} steps; simulating that many");
                    steps = rec;
                }
            }
            info!("simulating {} trials x {steps} steps", cfg.simulation.trials);
            let empirical = sim::empirical_mse(&design, source.as_ref(), cfg.simulation.trials, steps, cfg.seed)?;
            let result = MechanismResult::new(&design, empirical, None);
            let doc = ExperimentReport {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: Some(hash.hex()),
                privacy: design.privacy.clone(),
                trials: cfg.simulation.trials,
                steps,
                seed: cfg.seed,
                bounds: bounds(&design)?,
                mechanisms: vec![result],
                config: serde_json::to_value(&cfg)?,
            };
            if let Some(dir) = &plots {
                std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
                let len = cfg.simulation.plot_steps.min(steps);
                let u = source.generate(len, split_seed(cfg.seed, 0))?;
                let run = design.run(&u, split_seed(cfg.seed, 1))?;
                let path = dir.join(format!("{}.csv", design.kind.name()));
                let file = std::fs::File::create(&path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
                sim::write_plot_csv(std::io::BufWriter::new(file), &run.y, &run.yhat)?;
                info!("wrote {}", path.display());
            }
            write_output(report.as_deref().or(g.out.as_deref()), &doc.to_json()?)
        }
        Command::MarkovGen {
            alpha,
            beta,
            selectors,
            source,
            steps,
            spectrum_out,
        } => {
            let mut hash = ConfigHash::new(&cfg)?;
            let src = match (&source, alpha, beta) {
                (Some(p), _, _) => markov_from_file(p, &mut hash)?,
                (None, Some(a), Some(b)) => markov::server_chain(a, b, selectors)?,
                _ => return Err(Error::Config("markov-gen needs --alpha and --beta, or --source".into())),
            };
            let stream = markov::sample_chain(&src, steps, split_seed(cfg.seed, 0))?;
            let mut buf = Vec::new();
            stream.write_csv(&mut buf)?;
            write_output(g.out.as_deref(), &String::from_utf8(buf).expect("CSV output is UTF-8"))?;
            if let Some(p) = spectrum_out {
                let text = io::spectrum_to_toml(&io::SpectrumSpec::from_markov(&src))?;
                write_output(Some(&p), &text)?;
            }
            Ok(())
        }
        Command::Report { inputs, table } => {
            let mut hash = ConfigHash::new(&cfg)?;
            let mut rows = Vec::new();
            for p in &inputs {
                let text = read_input(p, "report input", &mut hash)?;
                let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                if value.get("design").is_some() {
                    let doc: DesignDocument = serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                    rows.push(ComparisonRow::from_design(&name, &doc));
                } else if value.get("mechanisms").is_some() {
                    let rep: ExperimentReport = serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                    rows.extend(ComparisonRow::from_report(&name, &rep));
                } else {
                    return Err(Error::Parse(format!("{} is neither a design nor a simulation report", p.display())));
                }
            }
            let doc = ComparisonDocument {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: hash.hex(),
                rows,
            };
            let text = if table { doc.markdown() } else { to_json(&doc)? };
            write_output(g.out.as_deref(), &text)
        }
    }
}

/// Length of a recorded CSV source, if `path` is one.
fn source_len(path: &Path) -> Option<usize> {
    if !path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return None;
    }
    EventStream::load(path).ok().map(|s| s.len())
}
