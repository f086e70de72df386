//! Training and what-if evaluation over an event log.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ppm_core::declare::Family;
use ppm_core::dtree::{argmax_first, GridData, GridResult, Hyperparameters, TreeError};
use ppm_core::encoder::{apriori_filter, build_universe, encode_log, EncodeError};
use ppm_core::log::{
    chronological_split, make_prefix_log, prefix_cap_for, EventLog, LabelSpec, LogError, PrefixLog,
    SplitConfig, Trace,
};
use ppm_core::recommend::{positive_paths, LambdaWeights, DEFAULT_MIN_PATH_SAMPLES};
use ppm_core::whatif::{
    aggregate, prepare_cases, tune_thresholds, whatif_classify, MetricsReport, Outcome, TH_FIT_GRID,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{ModelBundle, ModelMetadata, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset_name: String,
    pub label: LabelSpec,
    pub families: BTreeSet<Family>,
    pub existence_ns: Vec<u32>,
    pub apriori_support: f64,
    pub split: SplitConfig,
    pub folds: usize,
    pub seed: u64,
    /// `None` uses the full tuning grid.
    pub grid: Option<Vec<Hyperparameters>>,
    /// Steps per unit of the weight simplex (10 gives 0.1 spacing).
    pub lambda_steps: u32,
    pub th_fit_grid: Vec<f64>,
    pub min_path_samples: usize,
    /// Overrides the per-dataset prefix length cap.
    pub max_prefix: Option<usize>,
    pub trained_at: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset_name: "log".into(),
            label: LabelSpec::attribute("label"),
            families: Family::ALL.into_iter().collect(),
            existence_ns: vec![1],
            apriori_support: 0.05,
            split: SplitConfig::default(),
            folds: 5,
            seed: 42,
            grid: None,
            lambda_steps: 10,
            th_fit_grid: TH_FIT_GRID.to_vec(),
            min_path_samples: DEFAULT_MIN_PATH_SAMPLES,
            max_prefix: None,
            trained_at: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.label.validate()?;
        self.split.validate()?;
        if self.families.is_empty() {
            return bad("at least one template family is required".into());
        }
        if self.existence_ns.is_empty() || self.existence_ns.contains(&0) {
            return bad("existence_ns must hold positive counts".into());
        }
        if !(self.apriori_support > 0.0 && self.apriori_support <= 1.0) {
            return bad(format!("apriori_support must lie in (0, 1], got {}", self.apriori_support));
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if self.lambda_steps == 0 {
            return bad("lambda_steps must be positive".into());
        }
        if self.th_fit_grid.is_empty() || self.th_fit_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return bad("th_fit_grid values must lie in (0, 1]".into());
        }
        if self.grid.as_ref().is_some_and(|g| g.is_empty()) {
            return bad("the hyperparameter grid is empty".into());
        }
        if self.max_prefix == Some(0) {
            return bad("max_prefix must be positive".into());
        }
        Ok(())
    }
}

/// The three chronological partitions of a labeled log.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: EventLog,
    pub validation: EventLog,
    pub test: EventLog,
    pub prefix_cap: usize,
}

/// Labels (and cuts) the log, drops empty traces and splits it.
pub fn prepare(log: &EventLog, cfg: &TrainConfig) -> Result<Partitions, PipelineError> {
    let labeled = cfg.label.apply(log)?.drop_empty();
    let lengths = labeled.lengths();
    let prefix_cap = cfg.max_prefix.unwrap_or_else(|| prefix_cap_for(&cfg.dataset_name, &lengths));
    let (train, validation, test) = chronological_split(&labeled, &cfg.split)?;
    Ok(Partitions { train, validation, test, prefix_cap })
}

/// Cross-validated grid search with grid points scored in parallel. The
/// winner is the first best point in grid order.
pub fn parallel_grid_search(
    data: &ppm_core::EncodedDataset,
    grid: &[Hyperparameters],
    folds: usize,
    seed: u64,
) -> Result<(GridResult, ppm_core::DecisionTree), TreeError> {
    if grid.is_empty() {
        return Err(TreeError::EmptyGrid);
    }
    if data.n_rows == 0 {
        return Err(TreeError::EmptyData);
    }
    let prepared = GridData::new(data, grid, folds, seed);
    let scores: Vec<f64> = grid.par_iter().map(|hp| prepared.cv_score(hp)).collect();
    let best = argmax_first(&scores).unwrap_or(0);
    let tree = prepared.fit(&grid[best]);
    Ok((GridResult { hyperparameters: grid[best], cv_f_score: scores[best] }, tree))
}

/// Trains the tree on the training partition and tunes the score weights
/// and fitness threshold on the validation prefixes.
pub fn train(log: &EventLog, cfg: &TrainConfig) -> Result<(ModelBundle, Partitions), PipelineError> {
    cfg.validate()?;
    let parts = prepare(log, cfg)?;
    let full = build_universe(&parts.train.alphabet, &cfg.families, &cfg.existence_ns);
    let universe = apriori_filter(&full, &parts.train, cfg.apriori_support)?;
    log::info!(
        "{} training traces, {} constraints ({} before support filtering)",
        parts.train.len(),
        universe.len(),
        full.len()
    );
    let data = encode_log(&parts.train, &universe, true)?;
    let grid = cfg.grid.clone().unwrap_or_else(Hyperparameters::default_grid);
    let (best, tree) = parallel_grid_search(&data, &grid, cfg.folds, cfg.seed)?;
    log::info!("selected {:?} (cv F = {:.4})", best.hyperparameters, best.cv_f_score);

    let candidates = positive_paths(&tree, cfg.min_path_samples);
    let val_prefixes = make_prefix_log(&parts.validation, parts.prefix_cap)?;
    let full_val: BTreeMap<&str, &Trace> =
        parts.validation.traces.iter().map(|t| (t.case_id.as_str(), t)).collect();
    let cases = prepare_cases(&val_prefixes.entries, &full_val, &candidates);
    let lambdas = LambdaWeights::simplex_grid(cfg.lambda_steps);
    let tuned = if candidates.is_empty() {
        log::warn!("the tree has no positive path with enough samples");
        None
    } else {
        tune_thresholds(&cases, &candidates, &lambdas, &cfg.th_fit_grid)
    };
    let (lambda, th_fit, validation_f_score) = match tuned {
        Some(t) => (t.lambda, t.th_fit, t.average_f_score),
        None => {
            log::warn!("no validation prefixes to tune on; keeping default weights and threshold");
            let mut ths = cfg.th_fit_grid.clone();
            ths.sort_by(f64::total_cmp);
            (LambdaWeights::default(), ths[0], 0.0)
        }
    };

    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        universe: tree.column_index.clone(),
        alphabet: parts.train.alphabet.clone(),
        families: cfg.families.clone(),
        tree,
        lambda,
        th_fit,
        min_path_samples: cfg.min_path_samples,
        prefix_cap: parts.prefix_cap,
        label: cfg.label.clone(),
        split: cfg.split,
        metadata: ModelMetadata {
            dataset: cfg.dataset_name.clone(),
            trained_at: cfg.trained_at.clone(),
            seed: cfg.seed,
            cv_f_score: best.cv_f_score,
            validation_f_score,
            universe_size: universe.len(),
            n_train: parts.train.len(),
            n_validation: parts.validation.len(),
            n_test: parts.test.len(),
        },
    };
    Ok((bundle, parts))
}

/// Which traces of a log to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// The chronological test partition, as in training.
    #[default]
    Test,
    /// Every trace.
    All,
}

/// Labels `log` with the model's spec and returns the traces to evaluate.
pub fn evaluation_log(
    bundle: &ModelBundle,
    log: &EventLog,
    partition: Partition,
) -> Result<EventLog, PipelineError> {
    let labeled = bundle.label.apply(log)?.drop_empty();
    Ok(match partition {
        Partition::All => labeled,
        Partition::Test => chronological_split(&labeled, &bundle.split)?.2,
    })
}

/// Generates recommendations for every prefix, times each generation and
/// classifies the completed trace against the chosen path. Prefixes whose
/// case has no positive path count with fitness 0.
pub fn run_evaluation(
    prefixes: &PrefixLog,
    full: &EventLog,
    bundle: &ModelBundle,
    parallel: bool,
) -> MetricsReport {
    let by_id: BTreeMap<&str, &Trace> = full.traces.iter().map(|t| (t.case_id.as_str(), t)).collect();
    let one = |e: &ppm_core::log::PrefixEntry| -> Option<(usize, Outcome, f64)> {
        let Some(trace) = by_id.get(e.case_id.as_str()) else {
            log::warn!("prefix of unknown case {}", e.case_id);
            return None;
        };
        let acts = e.prefix.activities();
        let start = Instant::now();
        let result = bundle.recommend(&acts);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let chosen = result.as_ref().ok().map(|r| &r.chosen_path);
        Some((e.k, whatif_classify(trace, chosen, bundle.th_fit), ms))
    };
    let rows: Vec<(usize, Outcome, f64)> = if parallel {
        prefixes.entries.par_iter().filter_map(one).collect()
    } else {
        prefixes.entries.iter().filter_map(one).collect()
    };
    let mut report = aggregate(rows.iter().map(|(k, o, _)| (*k, *o)));
    report.timings = rows.iter().map(|(k, _, ms)| (*k, *ms)).collect();
    report
}

/// Evaluates `bundle` on the chosen partition of `log`.
pub fn evaluate(
    bundle: &ModelBundle,
    log: &EventLog,
    partition: Partition,
    parallel: bool,
) -> Result<MetricsReport, PipelineError> {
    let test = evaluation_log(bundle, log, partition)?;
    let prefixes = make_prefix_log(&test, bundle.prefix_cap)?;
    Ok(run_evaluation(&prefixes, &test, bundle, parallel))
}

/// Trains and evaluates on the test partition of the same log.
pub fn train_and_evaluate(
    log: &EventLog,
    cfg: &TrainConfig,
) -> Result<(ModelBundle, MetricsReport), PipelineError> {
    let (bundle, parts) = train(log, cfg)?;
    let prefixes = make_prefix_log(&parts.test, bundle.prefix_cap)?;
    let report = run_evaluation(&prefixes, &parts.test, &bundle, true);
    Ok((bundle, report))
}
