//! The trained model as saved to disk and served over HTTP.

use std::collections::BTreeSet;
use std::path::Path;

use ppm_core::declare::Family;
use ppm_core::dtree::DecisionTree;
use ppm_core::encoder::ConstraintUniverse;
use ppm_core::log::{LabelSpec, SplitConfig};
use ppm_core::recommend::{self, LambdaWeights, RecError, RecommendationResult};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("model universe does not match the tree columns")]
    UniverseMismatch,
    #[error(transparent)]
    Lambda(#[from] RecError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub dataset: String,
    /// Set only when supplied by the caller, so that retraining on the same
    /// data reproduces the file byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
    pub seed: u64,
    pub cv_f_score: f64,
    pub validation_f_score: f64,
    pub universe_size: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub tree: DecisionTree,
    /// The constraints behind the tree's columns, in column order.
    pub universe: ConstraintUniverse,
    pub lambda: LambdaWeights,
    pub th_fit: f64,
    pub alphabet: BTreeSet<String>,
    pub families: BTreeSet<Family>,
    pub min_path_samples: usize,
    pub prefix_cap: usize,
    pub label: LabelSpec,
    pub split: SplitConfig,
    pub metadata: ModelMetadata,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<(), BundleError> {
        if self.format_version != FORMAT_VERSION {
            return Err(BundleError::Version(self.format_version));
        }
        if self.universe.constraints != self.tree.column_index.constraints {
            return Err(BundleError::UniverseMismatch);
        }
        self.lambda.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, BundleError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, BundleError> {
        let b: ModelBundle = serde_json::from_str(s)?;
        b.validate()?;
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|source| BundleError::Io { path: path.display().to_string(), source })
    }

    /// Recommendations for an ongoing case.
    pub fn recommend<S: AsRef<str>>(&self, prefix: &[S]) -> Result<RecommendationResult, RecError> {
        recommend::generate(prefix, &self.tree, &self.lambda, self.min_path_samples)
    }

    /// Activities of `prefix` outside the training alphabet, deduplicated in
    /// order of appearance.
    pub fn unknown_activities<S: AsRef<str>>(&self, prefix: &[S]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in prefix {
            let a = a.as_ref();
            if !self.alphabet.contains(a) && !out.iter().any(|x| x == a) {
                out.push(a.to_string());
            }
        }
        out
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            dataset: self.metadata.dataset.clone(),
            alphabet: self.alphabet.iter().cloned().collect(),
            families: self.families.iter().map(|f| f.to_string()).collect(),
            lambda: self.lambda,
            th_fit: self.th_fit,
            tree_depth: self.tree.depth(),
            path_count: self.tree.n_leaves(),
            positive_path_count: recommend::positive_paths(&self.tree, self.min_path_samples).len(),
            n_features: self.universe.len(),
        }
    }
}

/// Model metadata as reported by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dataset: String,
    pub alphabet: Vec<String>,
    pub families: Vec<String>,
    pub lambda: LambdaWeights,
    pub th_fit: f64,
    pub tree_depth: usize,
    pub path_count: usize,
    pub positive_path_count: usize,
    pub n_features: usize,
}

/// A bundle around the walkthrough tree, for demos and service tests.
pub fn sepsis_fixture_bundle() -> ModelBundle {
    let tree = ppm_core::sample::sepsis_tree();
    ModelBundle {
        format_version: FORMAT_VERSION,
        universe: tree.column_index.clone(),
        alphabet: tree.column_index.source_alphabet.clone(),
        tree,
        lambda: LambdaWeights::default(),
        th_fit: 0.75,
        families: [Family::E].into(),
        min_path_samples: recommend::DEFAULT_MIN_PATH_SAMPLES,
        prefix_cap: 40,
        label: LabelSpec::attribute("label"),
        split: SplitConfig::default(),
        metadata: ModelMetadata {
            dataset: "sepsis_fixture".into(),
            trained_at: None,
            seed: 0,
            cv_f_score: 0.0,
            validation_f_score: 0.0,
            universe_size: 4,
            n_train: 605,
            n_validation: 0,
            n_test: 0,
        },
    }
}
