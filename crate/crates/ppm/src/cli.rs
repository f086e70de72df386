//! Command-line interface. Every flag can also come from a JSON file given
//! with `--config`; flags on the command line win.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ppm_core::declare::Family;
use ppm_core::dtree::Hyperparameters;
use ppm_core::log::{LabelKind, LabelSpec, SplitConfig};
use serde::Deserialize;
use thiserror::Error;

use crate::bundle::ModelBundle;
use crate::datafile;
use crate::io::{read_log, ColumnMap};
use crate::pipeline::{self, Partition, TrainConfig};
use crate::report::emit_report;
use crate::service;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or input data; exit code 2.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ppm", version, about = "Prescriptive process monitoring with DECLARE rules")]
pub struct Cli {
    /// JSON file supplying any flag (command-line flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a labeled log.
    Train(TrainArgs),
    /// Run the what-if evaluation of a model on a log.
    Evaluate(EvaluateArgs),
    /// Print recommendations for a prefix.
    Recommend(RecommendArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Default)]
pub struct CsvArgs {
    #[arg(long)]
    pub case_col: Option<String>,
    #[arg(long)]
    pub activity_col: Option<String>,
    #[arg(long)]
    pub timestamp_col: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long)]
    pub delimiter: Option<char>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// `attribute:NAME[=POSITIVE]`, `ltlf_violation:FORMULA`,
    /// `ltlf_satisfaction:FORMULA`, inline JSON or a JSON file.
    #[arg(long)]
    pub label: Option<String>,
    /// Template families: any of E, C, PR, NR separated by `,` or `|`, or A
    /// for all.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset name, used for the prefix length cap.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum fraction of training traces an activity (pair) must occur in.
    #[arg(long)]
    pub support: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_prefix: Option<usize>,
    /// Recorded in the model metadata.
    #[arg(long)]
    pub trained_at: Option<String>,
    /// Also write the universe and the encoded training set here.
    #[arg(long)]
    pub export_dir: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args, Default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Evaluate on the chronological test partition or on every trace.
    #[arg(long, value_enum)]
    pub partition: Option<Partition>,
    /// Evaluate prefixes one at a time.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args, Default)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated activities.
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Allowed browser origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Restore sessions from this file and save them on shutdown.
    #[arg(long)]
    pub sessions_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LabelArg {
    Spec(LabelSpec),
    Text(String),
}

/// Contents of a `--config` file. Keys are the flag names with `_` for
/// `-`; `grid`, `existence_ns`, `lambda_steps`, `th_fit_grid`,
/// `min_path_samples` and `split` are only available here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub log: Option<PathBuf>,
    pub label: Option<LabelArg>,
    pub families: Option<String>,
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
    pub seed: Option<u64>,
    pub support: Option<f64>,
    pub folds: Option<usize>,
    pub max_prefix: Option<usize>,
    pub trained_at: Option<String>,
    pub export_dir: Option<PathBuf>,
    pub columns: Option<ColumnMap>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub partition: Option<Partition>,
    pub sequential: Option<bool>,
    pub prefix: Option<String>,
    pub port: Option<u16>,
    pub host: Option<String>,
    pub cors_origin: Option<String>,
    pub sessions_file: Option<PathBuf>,
    pub grid: Option<Vec<Hyperparameters>>,
    pub existence_ns: Option<Vec<u32>>,
    pub lambda_steps: Option<u32>,
    pub th_fit_grid: Option<Vec<f64>>,
    pub min_path_samples: Option<usize>,
    pub split: Option<SplitConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }
}

/// Parses the compact `--label` forms, inline JSON or a JSON file.
pub fn parse_label(text: &str) -> Result<LabelSpec, CliError> {
    let t = text.trim();
    let spec = if t.starts_with('{') {
        serde_json::from_str(t).map_err(|e| invalid(format!("label spec: {e}")))?
    } else if let Some((kind, rest)) = t.split_once(':') {
        match kind.trim() {
            "attribute" => {
                let (name, positive) = match rest.split_once('=') {
                    Some((n, p)) => (n, Some(p.to_string())),
                    None => (rest, None),
                };
                let mut s = LabelSpec::attribute(name.trim());
                s.positive_value = positive;
                s
            }
            "ltlf_violation" => LabelSpec::ltlf(LabelKind::LtlfViolation, rest),
            "ltlf_satisfaction" => LabelSpec::ltlf(LabelKind::LtlfSatisfaction, rest),
            other => return Err(invalid(format!("unknown label kind {other:?}"))),
        }
    } else if Path::new(t).is_file() {
        let body = std::fs::read_to_string(t).map_err(invalid)?;
        serde_json::from_str(&body).map_err(|e| invalid(format!("label spec {t}: {e}")))?
    } else {
        return Err(invalid(format!(
            "cannot read label spec {t:?}; use attribute:NAME, ltlf_violation:FORMULA, \
             ltlf_satisfaction:FORMULA, JSON or a JSON file"
        )));
    };
    spec.validate().map_err(invalid)?;
    Ok(spec)
}

pub fn parse_families(text: &str) -> Result<BTreeSet<Family>, CliError> {
    let mut out = BTreeSet::new();
    for part in text.split([',', '|', ' ']).map(str::trim).filter(|p| !p.is_empty()) {
        match part.to_ascii_uppercase().as_str() {
            "A" | "ALL" => out.extend(Family::ALL),
            "E" => {
                out.insert(Family::E);
            }
            "C" => {
                out.insert(Family::C);
            }
            "PR" => {
                out.insert(Family::PR);
            }
            "NR" => {
                out.insert(Family::NR);
            }
            other => return Err(invalid(format!("unknown template family {other:?}"))),
        }
    }
    if out.is_empty() {
        return Err(invalid("no template family given"));
    }
    Ok(out)
}

fn columns(csv: &CsvArgs, file: &FileConfig) -> ColumnMap {
    let mut c = file.columns.clone().unwrap_or_default();
    if let Some(v) = &csv.case_col {
        c.case_id = v.clone();
    }
    if let Some(v) = &csv.activity_col {
        c.activity = v.clone();
    }
    if let Some(v) = &csv.timestamp_col {
        c.timestamp = v.clone();
    }
    if let Some(v) = &csv.label_col {
        c.label = Some(v.clone());
    }
    if csv.delimiter.is_some() {
        c.delimiter = csv.delimiter;
    }
    c
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| invalid(format!("missing --{flag}")))
}

/// Builds the training configuration from flags and the config file.
pub fn train_config(a: &TrainArgs, f: &FileConfig) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    let label = match (&a.label, &f.label) {
        (Some(text), _) => parse_label(text)?,
        (None, Some(LabelArg::Spec(s))) => {
            s.validate().map_err(invalid)?;
            s.clone()
        }
        (None, Some(LabelArg::Text(t))) => parse_label(t)?,
        (None, None) => return Err(invalid("missing --label")),
    };
    cfg.label = label;
    if let Some(fam) = a.families.as_ref().or(f.families.as_ref()) {
        cfg.families = parse_families(fam)?;
    }
    if let Some(d) = a.dataset.clone().or_else(|| f.dataset.clone()) {
        cfg.dataset_name = d;
    } else if let Some(stem) = a.log.as_ref().or(f.log.as_ref()).and_then(|p| p.file_stem()) {
        cfg.dataset_name = stem.to_string_lossy().into_owned();
    }
    if let Some(v) = a.seed.or(f.seed) {
        cfg.seed = v;
    }
    if let Some(v) = a.support.or(f.support) {
        cfg.apriori_support = v;
    }
    if let Some(v) = a.folds.or(f.folds) {
        cfg.folds = v;
    }
    cfg.max_prefix = a.max_prefix.or(f.max_prefix);
    cfg.trained_at = a.trained_at.clone().or_else(|| f.trained_at.clone());
    if let Some(g) = &f.grid {
        cfg.grid = Some(g.clone());
    }
    if let Some(v) = &f.existence_ns {
        cfg.existence_ns = v.clone();
    }
    if let Some(v) = f.lambda_steps {
        cfg.lambda_steps = v;
    }
    if let Some(v) = &f.th_fit_grid {
        cfg.th_fit_grid = v.clone();
    }
    if let Some(v) = f.min_path_samples {
        cfg.min_path_samples = v;
    }
    if let Some(v) = f.split {
        cfg.split = v;
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<ModelBundle, CliError> {
    ModelBundle::load(path).map_err(invalid)
}

fn run_train(a: &TrainArgs, f: &FileConfig) -> Result<(), CliError> {
    let cfg = train_config(a, f)?;
    let log_path = required(a.log.clone().or_else(|| f.log.clone()), "log")?;
    let out = required(a.out.clone().or_else(|| f.out.clone()), "out")?;
    let log = read_log(&log_path, &columns(&a.csv, f)).map_err(invalid)?;
    let (bundle, parts) = pipeline::train(&log, &cfg).map_err(invalid)?;
    bundle.save(&out).map_err(runtime)?;
    if let Some(dir) = a.export_dir.clone().or_else(|| f.export_dir.clone()) {
        export(&dir, &bundle, &parts, &cfg)?;
    }
    eprintln!(
        "trained on {} traces: {} leaves, depth {}, cv F {:.4}, lambda ({}, {}, {}), th_fit {}",
        bundle.metadata.n_train,
        bundle.tree.n_leaves(),
        bundle.tree.depth(),
        bundle.metadata.cv_f_score,
        bundle.lambda.l1,
        bundle.lambda.l2,
        bundle.lambda.l3,
        bundle.th_fit
    );
    Ok(())
}

fn export(
    dir: &Path,
    bundle: &ModelBundle,
    parts: &pipeline::Partitions,
    cfg: &TrainConfig,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let full = ppm_core::encoder::build_universe(&parts.train.alphabet, &cfg.families, &cfg.existence_ns);
    let filtered =
        ppm_core::encoder::apriori_filter(&full, &parts.train, cfg.apriori_support).map_err(runtime)?;
    std::fs::write(dir.join("universe.json"), datafile::universe_to_json(&filtered).map_err(runtime)?)
        .map_err(runtime)?;
    std::fs::write(
        dir.join("tree_universe.json"),
        datafile::universe_to_json(&bundle.universe).map_err(runtime)?,
    )
    .map_err(runtime)?;
    let data = ppm_core::encoder::encode_log(&parts.train, &filtered, true).map_err(runtime)?;
    let csv = std::fs::File::create(dir.join("train_encoded.csv")).map_err(runtime)?;
    datafile::write_dataset_csv(&data, std::io::BufWriter::new(csv)).map_err(runtime)?;
    let bin = std::fs::File::create(dir.join("train_encoded.bin")).map_err(runtime)?;
    datafile::write_dataset_cache(&data, std::io::BufWriter::new(bin)).map_err(runtime)?;
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs, f: &FileConfig) -> Result<(), CliError> {
    let model = load_model(&required(a.model.clone().or_else(|| f.model.clone()), "model")?)?;
    let log_path = required(a.log.clone().or_else(|| f.log.clone()), "log")?;
    let dir = required(a.report.clone().or_else(|| f.report.clone()), "report")?;
    let partition = a.partition.or(f.partition).unwrap_or_default();
    let sequential = a.sequential || f.sequential.unwrap_or(false);
    let log = read_log(&log_path, &columns(&a.csv, f)).map_err(invalid)?;
    let report = pipeline::evaluate(&model, &log, partition, !sequential).map_err(invalid)?;
    emit_report(&report, &dir).map_err(runtime)?;
    eprintln!(
        "{} prefixes, average cumulative F-score {:.2}",
        report.n_prefixes,
        100.0 * report.average_f_score
    );
    Ok(())
}

fn run_recommend(a: &RecommendArgs, f: &FileConfig) -> Result<String, CliError> {
    let model = load_model(&required(a.model.clone().or_else(|| f.model.clone()), "model")?)?;
    let prefix_text = required(a.prefix.clone().or_else(|| f.prefix.clone()), "prefix")?;
    let prefix: Vec<&str> = prefix_text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let unknown = model.unknown_activities(&prefix);
    if !unknown.is_empty() {
        log::warn!("activities outside the model alphabet: {}", unknown.join(", "));
    }
    let result = model.recommend(&prefix).map_err(runtime)?;
    serde_json::to_string_pretty(&result).map_err(runtime)
}

fn run_serve(a: &ServeArgs, f: &FileConfig) -> Result<(), CliError> {
    let model = load_model(&required(a.model.clone().or_else(|| f.model.clone()), "model")?)?;
    let cors_origin = match a.cors_origin.clone().or_else(|| f.cors_origin.clone()) {
        Some(o) => Some(axum::http::HeaderValue::from_str(&o).map_err(invalid)?),
        None => None,
    };
    let opts = service::ServeOptions {
        port: a.port.or(f.port).unwrap_or(8080),
        host: a.host.clone().or_else(|| f.host.clone()).unwrap_or_else(|| "127.0.0.1".into()),
        cors_origin,
        sessions_file: a.sessions_file.clone().or_else(|| f.sessions_file.clone()),
    };
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(service::serve(service::AppState::new(Some(model)), opts)).map_err(runtime)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Train(a) => run_train(a, &file),
        Command::Evaluate(a) => run_evaluate(a, &file),
        Command::Recommend(a) => {
            println!("{}", run_recommend(a, &file)?);
            Ok(())
        }
        Command::Serve(a) => run_serve(a, &file),
    }
}
