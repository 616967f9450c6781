//! Evaluation: stratified k-fold cross-validation, one-vs-rest confusion
//! counts, per-class precision/recall/F1, support-weighted averages and
//! standard accuracy. Fold predictions are pooled and scored once at the
//! patient level.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CoarseLabel, Corpus};
use crate::error::{Error, Result};
use crate::features::{
    build_documents, build_vocabulary_from_documents, featurize_document, FeaturizerConfig,
};
use crate::models::{
    compute_class_weights, predict, train_model, ClassWeighting, ClassWeights, FeatureSpace,
    ModelKind, TrainConfig,
};

/// One-vs-rest counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Gold support of the class.
    pub fn support(&self) -> usize {
        self.true_pos + self.false_neg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: BTreeMap<CoarseLabel, ClassCounts>,
    pub n_samples: usize,
}

/// Per-class one-vs-rest confusion counts over aligned label sequences.
pub fn confusion_counts(
    gold: &[CoarseLabel],
    predicted: &[CoarseLabel],
) -> Result<ConfusionCounts> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: predicted.len(),
        });
    }
    let mut per_class = BTreeMap::new();
    for class in CoarseLabel::ALL {
        let mut counts = ClassCounts {
            true_pos: 0,
            false_pos: 0,
            false_neg: 0,
            true_neg: 0,
        };
        for (g, p) in gold.iter().zip(predicted) {
            match (*g == class, *p == class) {
                (true, true) => counts.true_pos += 1,
                (false, true) => counts.false_pos += 1,
                (true, false) => counts.false_neg += 1,
                (false, false) => counts.true_neg += 1,
            }
        }
        per_class.insert(class, counts);
    }
    Ok(ConfusionCounts {
        per_class,
        n_samples: gold.len(),
    })
}

/// F1 as the harmonic mean of precision and recall; undefined when both
/// are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let denom = precision + recall;
    if denom == 0.0 {
        None
    } else {
        Some(2.0 * precision * recall / denom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<CoarseLabel, ClassMetrics>,
    pub weighted: WeightedMetrics,
    pub accuracy: f64,
    pub folds: Vec<FoldMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-class precision/recall/F1, support-weighted averages, and
/// accuracy = correct / n. Zero-denominator metrics are reported as
/// undefined and drop out of the weighted averages together with their
/// support.
pub fn compute_metrics(counts: &ConfusionCounts) -> MetricsReport {
    let mut per_class = BTreeMap::new();
    for (class, c) in &counts.per_class {
        let precision = if c.true_pos + c.false_pos > 0 {
            Some(c.true_pos as f64 / (c.true_pos + c.false_pos) as f64)
        } else {
            None
        };
        let recall = if c.true_pos + c.false_neg > 0 {
            Some(c.true_pos as f64 / (c.true_pos + c.false_neg) as f64)
        } else {
            None
        };
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => f1_score(p, r),
            _ => None,
        };
        per_class.insert(
            *class,
            ClassMetrics {
                precision,
                recall,
                f1,
                support: c.support(),
            },
        );
    }

    let weighted_of = |pick: &dyn Fn(&ClassMetrics) -> Option<f64>| -> Option<f64> {
        let mut num = 0.0;
        let mut denom = 0usize;
        for m in per_class.values() {
            if let Some(v) = pick(m) {
                num += v * m.support as f64;
                denom += m.support;
            }
        }
        if denom == 0 {
            None
        } else {
            Some(num / denom as f64)
        }
    };
    let weighted = WeightedMetrics {
        precision: weighted_of(&|m| m.precision),
        recall: weighted_of(&|m| m.recall),
        f1: weighted_of(&|m| m.f1),
    };

    let correct: usize = counts.per_class.values().map(|c| c.true_pos).sum();
    let accuracy = if counts.n_samples > 0 {
        correct as f64 / counts.n_samples as f64
    } else {
        0.0
    };

    MetricsReport {
        per_class,
        weighted,
        accuracy,
        folds: Vec::new(),
    }
}

/// A stratified partition of sample indices into k folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub k: usize,
    pub seed: u64,
}

/// Shuffle each class's members by the seed and deal them round-robin, so
/// per-class counts across folds differ by at most one.
pub fn stratified_folds(labels: &[CoarseLabel], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    let mut by_class: BTreeMap<CoarseLabel, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    for (class, members) in &by_class {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: class.to_string(),
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for (_, mut members) in by_class {
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for idx in members {
            folds[cursor % k].push(idx);
            cursor += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, k, seed })
}

/// Stratified k-fold cross-validation with pooled scoring. For each fold
/// the vocabulary and class weights are rebuilt from the training folds
/// only; all test-fold predictions are pooled and scored once, with a
/// per-fold accuracy breakdown retained.
pub fn cross_validate(
    corpus: &Corpus,
    featurizer_config: &FeaturizerConfig,
    train_config: &TrainConfig,
    model_kind: ModelKind,
    k: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let labels = corpus.gold_coarse_labels()?;
    let documents = build_documents(corpus, &featurizer_config.preprocess);
    let plan = stratified_folds(&labels, k, seed)?;

    let mut predictions: Vec<Option<CoarseLabel>> = vec![None; labels.len()];
    let mut folds = Vec::with_capacity(k);
    for (fold_index, test_idx) in plan.folds.iter().enumerate() {
        let in_test: Vec<bool> = {
            let mut mask = vec![false; labels.len()];
            for &i in test_idx {
                mask[i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..labels.len()).filter(|i| !in_test[*i]).collect();

        let train_docs: Vec<&crate::features::PatientDocument> =
            train_idx.iter().map(|&i| &documents[i]).collect();
        let vocabulary = build_vocabulary_from_documents(&train_docs, featurizer_config)?;
        let space = FeatureSpace::from(&vocabulary);

        let train_labels: Vec<CoarseLabel> = train_idx.iter().map(|&i| labels[i]).collect();
        let weights = match train_config.class_weighting {
            ClassWeighting::Balanced => compute_class_weights(&train_labels)?,
            ClassWeighting::Uniform => ClassWeights::uniform(&train_labels),
        };
        let train_matrix: Vec<_> = train_idx
            .iter()
            .map(|&i| featurize_document(&documents[i], &vocabulary))
            .collect();
        let model = train_model(
            model_kind,
            &space,
            &train_matrix,
            &train_labels,
            &weights,
            train_config,
        )?;

        let mut correct = 0usize;
        for &i in test_idx {
            let vector = featurize_document(&documents[i], &vocabulary);
            let (winner, _) = predict(&model, &vector)?;
            if winner == labels[i] {
                correct += 1;
            }
            predictions[i] = Some(winner);
        }
        folds.push(FoldMetrics {
            fold: fold_index,
            n_test: test_idx.len(),
            correct,
            accuracy: correct as f64 / test_idx.len().max(1) as f64,
        });
    }

    let predicted: Vec<CoarseLabel> = predictions
        .into_iter()
        .map(|p| p.expect("folds partition the corpus"))
        .collect();
    let counts = confusion_counts(&labels, &predicted)?;
    let mut report = compute_metrics(&counts);
    report.folds = folds;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_correct_prediction() {
        let counts = confusion_counts(&[CoarseLabel::Green], &[CoarseLabel::Green]).unwrap();
        assert_eq!(counts.per_class[&CoarseLabel::Green].true_pos, 1);
        assert_eq!(counts.per_class[&CoarseLabel::Orange].true_neg, 1);
        assert_eq!(counts.per_class[&CoarseLabel::Other].true_neg, 1);
    }

    #[test]
    fn single_wrong_prediction() {
        let counts = confusion_counts(&[CoarseLabel::Green], &[CoarseLabel::Orange]).unwrap();
        assert_eq!(counts.per_class[&CoarseLabel::Green].false_neg, 1);
        assert_eq!(counts.per_class[&CoarseLabel::Orange].false_pos, 1);
        assert_eq!(counts.per_class[&CoarseLabel::Other].true_neg, 1);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            confusion_counts(&[CoarseLabel::Green], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn f1_matches_reference_pairs() {
        assert!((f1_score(0.162, 0.513).unwrap() - 0.246).abs() < 1e-3);
        assert!((f1_score(0.405, 0.689).unwrap() - 0.510).abs() < 1e-3);
        assert!((f1_score(0.54, 0.77).unwrap() - 0.63).abs() < 5e-3);
        assert_eq!(f1_score(0.0, 0.0), None);
    }

    #[test]
    fn perfect_class_gets_unit_metrics() {
        let counts = confusion_counts(
            &[CoarseLabel::Green, CoarseLabel::Other],
            &[CoarseLabel::Green, CoarseLabel::Other],
        )
        .unwrap();
        let report = compute_metrics(&counts);
        let g = &report.per_class[&CoarseLabel::Green];
        assert_eq!(g.precision, Some(1.0));
        assert_eq!(g.recall, Some(1.0));
        assert_eq!(g.f1, Some(1.0));
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn undefined_metrics_are_excluded_from_weighted_averages() {
        // nothing predicted orange and no orange gold: precision and
        // recall undefined for orange
        let gold = vec![CoarseLabel::Green, CoarseLabel::Other, CoarseLabel::Other];
        let pred = vec![CoarseLabel::Green, CoarseLabel::Other, CoarseLabel::Green];
        let report = compute_metrics(&confusion_counts(&gold, &pred).unwrap());
        let orange = &report.per_class[&CoarseLabel::Orange];
        assert_eq!(orange.precision, None);
        assert_eq!(orange.recall, None);
        assert_eq!(orange.support, 0);
        // weighted precision over green (support 1, p=0.5) and other (support 2, p=1.0)
        let expected = (0.5 * 1.0 + 1.0 * 2.0) / 3.0;
        assert!((report.weighted.precision.unwrap() - expected).abs() < 1e-12);
        assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn micro_average_identity_holds() {
        let gold = vec![
            CoarseLabel::Green,
            CoarseLabel::Orange,
            CoarseLabel::Other,
            CoarseLabel::Other,
            CoarseLabel::Green,
        ];
        let pred = vec![
            CoarseLabel::Green,
            CoarseLabel::Other,
            CoarseLabel::Other,
            CoarseLabel::Orange,
            CoarseLabel::Orange,
        ];
        let counts = confusion_counts(&gold, &pred).unwrap();
        let tp_sum: usize = counts.per_class.values().map(|c| c.true_pos).sum();
        let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        assert_eq!(tp_sum, correct);
        for c in counts.per_class.values() {
            assert_eq!(c.total(), counts.n_samples);
        }
    }

    #[test]
    fn small_class_fails_fold_planning_naming_the_class() {
        let mut labels = vec![CoarseLabel::Other; 82];
        labels.extend(vec![CoarseLabel::Orange; 12]);
        labels.extend(vec![CoarseLabel::Green; 6]);
        match stratified_folds(&labels, 10, 0) {
            Err(Error::ClassTooSmall { class, count, k }) => {
                assert_eq!(class, "green");
                assert_eq!(count, 6);
                assert_eq!(k, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn folds_partition_and_stratify() {
        let mut labels = vec![CoarseLabel::Other; 823];
        labels.extend(vec![CoarseLabel::Orange; 116]);
        labels.extend(vec![CoarseLabel::Green; 61]);
        let plan = stratified_folds(&labels, 10, 42).unwrap();
        let mut seen = vec![false; labels.len()];
        for fold in &plan.folds {
            for &i in fold {
                assert!(!seen[i], "index {i} in two folds");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
        for class in CoarseLabel::ALL {
            let counts: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "{class}: {counts:?}");
        }
    }

    #[test]
    fn two_balanced_folds() {
        let labels = vec![
            CoarseLabel::Green,
            CoarseLabel::Green,
            CoarseLabel::Other,
            CoarseLabel::Other,
        ];
        let plan = stratified_folds(&labels, 2, 0).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.len(), 2);
            assert_eq!(fold.iter().filter(|&&i| labels[i] == CoarseLabel::Green).count(), 1);
        }
    }

    #[test]
    fn fold_plans_are_seed_deterministic() {
        let labels = vec![CoarseLabel::Green; 8]
            .into_iter()
            .chain(vec![CoarseLabel::Other; 12])
            .collect::<Vec<_>>();
        assert_eq!(
            stratified_folds(&labels, 4, 9).unwrap(),
            stratified_folds(&labels, 4, 9).unwrap()
        );
        assert_ne!(
            stratified_folds(&labels, 4, 9).unwrap(),
            stratified_folds(&labels, 4, 10).unwrap()
        );
    }

    proptest! {
        // per-class metrics equal a brute-force recount on random label pairs
        #[test]
        fn confusion_matches_brute_force(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 50;
            let draw = |rng: &mut ChaCha8Rng| CoarseLabel::ALL[rng.gen_range(0..3)];
            let gold: Vec<CoarseLabel> = (0..n).map(|_| draw(&mut rng)).collect();
            let pred: Vec<CoarseLabel> = (0..n).map(|_| draw(&mut rng)).collect();
            let counts = confusion_counts(&gold, &pred).unwrap();
            for class in CoarseLabel::ALL {
                let mut tp = 0; let mut fp = 0; let mut fne = 0; let mut tn = 0;
                for i in 0..n {
                    let is_gold = gold[i] == class;
                    let is_pred = pred[i] == class;
                    if is_gold && is_pred { tp += 1; }
                    if !is_gold && is_pred { fp += 1; }
                    if is_gold && !is_pred { fne += 1; }
                    if !is_gold && !is_pred { tn += 1; }
                }
                let c = &counts.per_class[&class];
                prop_assert_eq!((c.true_pos, c.false_pos, c.false_neg, c.true_neg), (tp, fp, fne, tn));
            }
            let report = compute_metrics(&counts);
            let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
            prop_assert!((report.accuracy - correct as f64 / n as f64).abs() < 1e-12);
            for (class, m) in &report.per_class {
                let c = &counts.per_class[class];
                if let Some(p) = m.precision {
                    prop_assert!((p - c.true_pos as f64 / (c.true_pos + c.false_pos) as f64).abs() < 1e-12);
                }
                if let Some(r) = m.recall {
                    prop_assert!((r - c.true_pos as f64 / (c.true_pos + c.false_neg) as f64).abs() < 1e-12);
                }
            }
        }
    }
}
