//! The four classifiers: multinomial naive Bayes (natively multiclass)
//! and one-vs-rest logistic regression, linear-kernel SVM and RBF-kernel
//! SVM. Class weights compensate for label imbalance the same way sample
//! replication would; linear and kernel models consume L2-normalized
//! copies of the count vectors while naive Bayes keeps raw counts.

mod linear;
mod naive_bayes;
mod rbf_svm;

pub use linear::{train_linear_ovr, LinearLoss, WeightedLossObjective};
pub use naive_bayes::train_naive_bayes;
pub use rbf_svm::{solve_binary_with_trace, train_rbf_svm_ovr, BinaryKernelProblem, BinarySolution};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CoarseLabel;
use crate::error::{Error, Result};
use crate::features::{Bigram, FeatureVector, Vocabulary};
use crate::ioutil::atomic_write;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-class positive weights, `w_c = N / (C * n_c)` in the balanced
/// scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: BTreeMap<CoarseLabel, f64>,
}

impl ClassWeights {
    pub fn get(&self, class: CoarseLabel) -> Option<f64> {
        self.weights.get(&class).copied()
    }

    /// Unit weight for every class present in `labels`.
    pub fn uniform(labels: &[CoarseLabel]) -> Self {
        let weights = labels.iter().map(|l| (*l, 1.0)).collect();
        ClassWeights { weights }
    }
}

/// Balanced class weights from the label distribution.
pub fn compute_class_weights(labels: &[CoarseLabel]) -> Result<ClassWeights> {
    let mut counts: BTreeMap<CoarseLabel, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_insert(0) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::TooFewClasses { found: counts.len() });
    }
    let n = labels.len() as f64;
    let c = counts.len() as f64;
    let weights = counts
        .into_iter()
        .map(|(class, count)| (class, n / (c * count as f64)))
        .collect();
    Ok(ClassWeights { weights })
}

/// Whether training derives balanced weights from the training labels or
/// keeps every class at weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Additive smoothing for naive Bayes.
    pub alpha: f64,
    /// L2 regularization strength for the linear models.
    pub lambda: f64,
    /// Full-batch descent steps for the linear models.
    pub epochs: usize,
    /// Convergence tolerance for the linear models.
    pub tolerance: f64,
    pub seed: u64,
    /// Soft-margin C for the RBF SVM.
    pub svm_c: f64,
    /// RBF kernel width; `None` means 1 / vocabulary size.
    pub gamma: Option<f64>,
    pub smo_tolerance: f64,
    pub smo_max_passes: usize,
    /// L2-normalize inputs for the linear and RBF models (naive Bayes
    /// always consumes raw counts).
    pub l2_normalize_inputs: bool,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            lambda: 1e-4,
            epochs: 400,
            tolerance: 1e-3,
            seed: 0,
            svm_c: 1.0,
            gamma: None,
            smo_tolerance: 1e-3,
            smo_max_passes: 5,
            l2_normalize_inputs: true,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    NaiveBayes,
    LogisticRegressionOvR,
    LinearSvmOvR,
    RbfSvmOvR,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::NaiveBayes => "nb",
            ModelKind::LogisticRegressionOvR => "logreg",
            ModelKind::LinearSvmOvR => "linsvm",
            ModelKind::RbfSvmOvR => "rbfsvm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(ModelKind::NaiveBayes),
            "logreg" => Ok(ModelKind::LogisticRegressionOvR),
            "linsvm" => Ok(ModelKind::LinearSvmOvR),
            "rbfsvm" => Ok(ModelKind::RbfSvmOvR),
            other => Err(Error::InvalidConfig(format!(
                "unknown model kind {other:?} (expected nb|logreg|linsvm|rbfsvm)"
            ))),
        }
    }
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::NaiveBayes,
        ModelKind::RbfSvmOvR,
        ModelKind::LinearSvmOvR,
        ModelKind::LogisticRegressionOvR,
    ];
}

/// Dimensionality and provenance of the feature columns a model trains
/// against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub dim: usize,
    pub fingerprint: String,
}

impl FeatureSpace {
    /// A bare space for hand-built vectors (tests, toys).
    pub fn raw(dim: usize) -> Self {
        FeatureSpace {
            dim,
            fingerprint: format!("raw-{dim}"),
        }
    }
}

impl From<&Vocabulary> for FeatureSpace {
    fn from(v: &Vocabulary) -> Self {
        FeatureSpace {
            dim: v.len(),
            fingerprint: v.fingerprint().to_string(),
        }
    }
}

/// One class's RBF decision function: `sum(coeff_s * K(sv_s, x)) + bias`
/// with `coeff = alpha * y` over the support vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBinary {
    pub support: Vec<Vec<(usize, f64)>>,
    pub coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes {
        log_priors: Vec<f64>,
        /// Per class, per feature column; each row's exponentials sum to 1.
        log_likelihoods: Vec<Vec<f64>>,
    },
    LinearOvr {
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    RbfOvr {
        per_class: Vec<RbfBinary>,
    },
}

/// A trained classifier with everything needed to predict and persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub vocabulary_fingerprint: String,
    pub dim: usize,
    /// Classes in tie-break order (rarest first).
    pub classes: Vec<CoarseLabel>,
    pub params: ModelParams,
    pub train_config: TrainConfig,
    pub convergence_warning: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format_version: u32,
    model: TrainedModel,
}

/// Persist a model as a versioned JSON envelope (written atomically).
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let envelope = ModelEnvelope {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string_pretty(&envelope).expect("model serializes");
    atomic_write(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelFormat("missing format_version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::ModelFormat(format!(
            "unsupported format_version {version}, this build reads {MODEL_FORMAT_VERSION}"
        )));
    }
    let envelope: ModelEnvelope =
        serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(envelope.model)
}

/// Predict one vector: the winning class plus per-class decision scores
/// (posterior probabilities for naive Bayes, margins for the rest). Ties
/// break toward the rarer class, i.e. the earlier entry of
/// [`CoarseLabel::ALL`].
pub fn predict(
    model: &TrainedModel,
    vector: &FeatureVector,
) -> Result<(CoarseLabel, Vec<(CoarseLabel, f64)>)> {
    if vector.fingerprint != model.vocabulary_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: model.vocabulary_fingerprint.clone(),
            found: vector.fingerprint.clone(),
        });
    }
    if let Some((col, _)) = vector.counts.iter().find(|(col, _)| *col >= model.dim) {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: *col + 1,
        });
    }
    let scores = decision_scores(model, vector);
    let mut best = 0usize;
    for i in 1..scores.len() {
        if scores[i].1 > scores[best].1 {
            best = i;
        }
    }
    Ok((scores[best].0, scores))
}

fn decision_scores(model: &TrainedModel, vector: &FeatureVector) -> Vec<(CoarseLabel, f64)> {
    match &model.params {
        ModelParams::NaiveBayes {
            log_priors,
            log_likelihoods,
        } => {
            let joint: Vec<f64> = model
                .classes
                .iter()
                .enumerate()
                .map(|(ci, _)| {
                    let mut s = log_priors[ci];
                    for (col, count) in &vector.counts {
                        s += *count as f64 * log_likelihoods[ci][*col];
                    }
                    s
                })
                .collect();
            let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_norm = max + joint.iter().map(|j| (j - max).exp()).sum::<f64>().ln();
            model
                .classes
                .iter()
                .zip(&joint)
                .map(|(c, j)| (*c, (j - log_norm).exp()))
                .collect()
        }
        ModelParams::LinearOvr { weights, biases } => {
            let x = to_input(vector, model.train_config.l2_normalize_inputs);
            model
                .classes
                .iter()
                .enumerate()
                .map(|(ci, c)| (*c, sparse_dot_dense(&x, &weights[ci]) + biases[ci]))
                .collect()
        }
        ModelParams::RbfOvr { per_class } => {
            let x = to_input(vector, model.train_config.l2_normalize_inputs);
            let x_norm2 = sparse_norm2(&x);
            model
                .classes
                .iter()
                .enumerate()
                .map(|(ci, c)| {
                    let bin = &per_class[ci];
                    let mut f = bin.bias;
                    for (sv, coeff) in bin.support.iter().zip(&bin.coeffs) {
                        let d2 = x_norm2 + sparse_norm2(sv) - 2.0 * sparse_dot_sparse(&x, sv);
                        f += coeff * (-bin.gamma * d2.max(0.0)).exp();
                    }
                    (*c, f)
                })
                .collect()
        }
    }
}

/// Train a model of the requested kind.
pub fn train_model(
    kind: ModelKind,
    space: &FeatureSpace,
    matrix: &[FeatureVector],
    labels: &[CoarseLabel],
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    match kind {
        ModelKind::NaiveBayes => train_naive_bayes(space, matrix, labels, weights, config),
        ModelKind::LogisticRegressionOvR => {
            train_linear_ovr(space, matrix, labels, weights, config, LinearLoss::Logistic)
        }
        ModelKind::LinearSvmOvR => {
            train_linear_ovr(space, matrix, labels, weights, config, LinearLoss::Hinge)
        }
        ModelKind::RbfSvmOvR => train_rbf_svm_ovr(space, matrix, labels, weights, config),
    }
}

/// Top-k bigrams per class by absolute weight, linear models only.
pub fn top_features(
    model: &TrainedModel,
    vocabulary: &Vocabulary,
    k: usize,
) -> Result<Vec<(CoarseLabel, Vec<(Bigram, f64)>)>> {
    let weights = match (&model.kind, &model.params) {
        (
            ModelKind::LinearSvmOvR | ModelKind::LogisticRegressionOvR,
            ModelParams::LinearOvr { weights, .. },
        ) => weights,
        _ => {
            return Err(Error::UnsupportedModel(format!(
                "top_features requires a linear model, got {}",
                model.kind
            )))
        }
    };
    if vocabulary.fingerprint() != model.vocabulary_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: model.vocabulary_fingerprint.clone(),
            found: vocabulary.fingerprint().to_string(),
        });
    }
    Ok(model
        .classes
        .iter()
        .enumerate()
        .map(|(ci, class)| {
            let mut cols: Vec<usize> = (0..vocabulary.len()).collect();
            cols.sort_by(|&a, &b| {
                weights[ci][b]
                    .abs()
                    .partial_cmp(&weights[ci][a].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let ranked = cols
                .into_iter()
                .take(k)
                .map(|col| (vocabulary.bigram(col).clone(), weights[ci][col]))
                .collect();
            (*class, ranked)
        })
        .collect())
}

// ---- shared sparse helpers -------------------------------------------------

/// Counts as f64, optionally L2-normalized. The zero vector stays zero.
pub(crate) fn to_input(vector: &FeatureVector, normalize: bool) -> Vec<(usize, f64)> {
    let mut x: Vec<(usize, f64)> = vector
        .counts
        .iter()
        .map(|(col, count)| (*col, *count as f64))
        .collect();
    if normalize {
        let norm = x.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut x {
                *v /= norm;
            }
        }
    }
    x
}

pub(crate) fn sparse_dot_dense(x: &[(usize, f64)], w: &[f64]) -> f64 {
    x.iter().map(|(col, v)| v * w[*col]).sum()
}

pub(crate) fn sparse_dot_sparse(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let mut i = 0;
    let mut j = 0;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub(crate) fn sparse_norm2(x: &[(usize, f64)]) -> f64 {
    x.iter().map(|(_, v)| v * v).sum()
}

/// Shared validation for the train entry points: aligned lengths, matching
/// fingerprints, in-range columns, a weight for every observed class.
/// Returns the distinct classes in tie-break order.
pub(crate) fn check_training_inputs(
    space: &FeatureSpace,
    matrix: &[FeatureVector],
    labels: &[CoarseLabel],
    weights: &ClassWeights,
) -> Result<Vec<CoarseLabel>> {
    if matrix.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: matrix.len(),
            right: labels.len(),
        });
    }
    if matrix.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for v in matrix {
        if v.fingerprint != space.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: space.fingerprint.clone(),
                found: v.fingerprint.clone(),
            });
        }
        if let Some((col, _)) = v.counts.iter().find(|(col, _)| *col >= space.dim) {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                found: *col + 1,
            });
        }
    }
    let classes: BTreeSet<CoarseLabel> = labels.iter().copied().collect();
    for class in &classes {
        if weights.get(*class).is_none() {
            return Err(Error::InvalidConfig(format!(
                "no class weight provided for {class}"
            )));
        }
    }
    Ok(classes.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_weights_follow_the_formula() {
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat(CoarseLabel::Other).take(823));
        labels.extend(std::iter::repeat(CoarseLabel::Orange).take(116));
        labels.extend(std::iter::repeat(CoarseLabel::Green).take(61));
        let w = compute_class_weights(&labels).unwrap();
        assert!((w.get(CoarseLabel::Green).unwrap() - 1000.0 / (3.0 * 61.0)).abs() < 1e-12);
        assert!((w.get(CoarseLabel::Green).unwrap() - 5.464).abs() < 1e-3);
        assert!((w.get(CoarseLabel::Other).unwrap() - 0.405).abs() < 1e-3);
    }

    #[test]
    fn balanced_classes_get_unit_weights() {
        let labels = vec![
            CoarseLabel::Green,
            CoarseLabel::Orange,
            CoarseLabel::Other,
            CoarseLabel::Green,
            CoarseLabel::Orange,
            CoarseLabel::Other,
        ];
        let w = compute_class_weights(&labels).unwrap();
        for c in CoarseLabel::ALL {
            assert!((w.get(c).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_singleton_classes_get_unit_weights() {
        let labels = vec![CoarseLabel::Green, CoarseLabel::Other];
        let w = compute_class_weights(&labels).unwrap();
        assert!((w.get(CoarseLabel::Green).unwrap() - 1.0).abs() < 1e-12);
        assert!((w.get(CoarseLabel::Other).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_an_error() {
        let labels = vec![CoarseLabel::Other; 5];
        assert!(matches!(
            compute_class_weights(&labels),
            Err(Error::TooFewClasses { found: 1 })
        ));
    }

    #[test]
    fn model_kind_strings_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn tie_breaks_toward_rarer_class() {
        let model = TrainedModel {
            kind: ModelKind::LinearSvmOvR,
            vocabulary_fingerprint: "raw-2".into(),
            dim: 2,
            classes: vec![CoarseLabel::Green, CoarseLabel::Orange, CoarseLabel::Other],
            params: ModelParams::LinearOvr {
                weights: vec![vec![0.0, 0.0]; 3],
                biases: vec![0.3, 0.3, -1.0],
            },
            train_config: TrainConfig::default(),
            convergence_warning: false,
        };
        let v = FeatureVector {
            fingerprint: "raw-2".into(),
            counts: vec![],
        };
        let (winner, scores) = predict(&model, &v).unwrap();
        assert_eq!(winner, CoarseLabel::Green);
        assert_eq!(scores.len(), 3);
    }

    #[test]
    fn fingerprint_mismatch_rejected_at_predict() {
        let model = TrainedModel {
            kind: ModelKind::LinearSvmOvR,
            vocabulary_fingerprint: "raw-2".into(),
            dim: 2,
            classes: vec![CoarseLabel::Green, CoarseLabel::Other],
            params: ModelParams::LinearOvr {
                weights: vec![vec![0.0, 0.0]; 2],
                biases: vec![0.0; 2],
            },
            train_config: TrainConfig::default(),
            convergence_warning: false,
        };
        let v = FeatureVector {
            fingerprint: "raw-3".into(),
            counts: vec![],
        };
        assert!(matches!(
            predict(&model, &v),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn top_features_ranks_by_absolute_weight() {
        use crate::corpus::{ClinicalNote, Corpus, PatientProfile, Provenance};
        use crate::features::{build_vocabulary, FeaturizerConfig};

        let corpus = Corpus::new(
            vec![PatientProfile {
                patient_id: "P0".into(),
                notes: vec![ClinicalNote {
                    note_id: "n0".into(),
                    patient_id: "P0".into(),
                    note_type: None,
                    timestamp: None,
                    text: "alpha beta gamma delta".into(),
                }],
                gold_label: None,
            }],
            Provenance::InMemory,
        );
        let cfg = FeaturizerConfig {
            min_df: 0.0,
            max_df: 1.0,
            ..FeaturizerConfig::default()
        };
        let vocab = build_vocabulary(&corpus, &cfg).unwrap();
        assert_eq!(vocab.len(), 3);
        let model = TrainedModel {
            kind: ModelKind::LinearSvmOvR,
            vocabulary_fingerprint: vocab.fingerprint().to_string(),
            dim: 3,
            classes: vec![CoarseLabel::Green, CoarseLabel::Other],
            params: ModelParams::LinearOvr {
                weights: vec![vec![2.0, -3.0, 0.5], vec![0.0, 0.0, 0.0]],
                biases: vec![0.0, 0.0],
            },
            train_config: TrainConfig::default(),
            convergence_warning: false,
        };
        let top = top_features(&model, &vocab, 1).unwrap();
        assert_eq!(top[0].1.len(), 1);
        assert!((top[0].1[0].1 - -3.0).abs() < 1e-12);
        // k larger than the vocabulary returns the full ranking
        let full = top_features(&model, &vocab, 100).unwrap();
        assert_eq!(full[0].1.len(), 3);
    }

    #[test]
    fn top_features_rejects_naive_bayes() {
        use crate::corpus::{Corpus, Provenance};
        use crate::features::{build_vocabulary, FeaturizerConfig};
        let corpus = Corpus::new(
            vec![crate::corpus::PatientProfile {
                patient_id: "P0".into(),
                notes: vec![crate::corpus::ClinicalNote {
                    note_id: "n0".into(),
                    patient_id: "P0".into(),
                    note_type: None,
                    timestamp: None,
                    text: "alpha beta".into(),
                }],
                gold_label: None,
            }],
            Provenance::InMemory,
        );
        let cfg = FeaturizerConfig {
            min_df: 0.0,
            max_df: 1.0,
            ..FeaturizerConfig::default()
        };
        let vocab = build_vocabulary(&corpus, &cfg).unwrap();
        let model = TrainedModel {
            kind: ModelKind::NaiveBayes,
            vocabulary_fingerprint: vocab.fingerprint().to_string(),
            dim: 1,
            classes: vec![CoarseLabel::Green, CoarseLabel::Other],
            params: ModelParams::NaiveBayes {
                log_priors: vec![0.5f64.ln(), 0.5f64.ln()],
                log_likelihoods: vec![vec![0.0], vec![0.0]],
            },
            train_config: TrainConfig::default(),
            convergence_warning: false,
        };
        assert!(matches!(
            top_features(&model, &vocab, 3),
            Err(Error::UnsupportedModel(_))
        ));
    }
}
