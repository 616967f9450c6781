//! Multinomial naive Bayes with additive smoothing. Class weights scale
//! each sample's contribution to both the prior mass and the feature
//! counts, which makes integer weights exactly equivalent to replicating
//! the weighted samples.

use crate::corpus::CoarseLabel;
use crate::error::Result;
use crate::features::FeatureVector;

use super::{
    check_training_inputs, ClassWeights, FeatureSpace, ModelKind, ModelParams, TrainConfig,
    TrainedModel,
};

pub fn train_naive_bayes(
    space: &FeatureSpace,
    matrix: &[FeatureVector],
    labels: &[CoarseLabel],
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let classes = check_training_inputs(space, matrix, labels, weights)?;
    let dim = space.dim;
    let alpha = config.alpha;

    let mut prior_mass = vec![0.0f64; classes.len()];
    let mut feature_mass = vec![vec![0.0f64; dim]; classes.len()];
    for (vector, label) in matrix.iter().zip(labels) {
        let ci = classes.iter().position(|c| c == label).unwrap();
        let w = weights.get(*label).unwrap();
        prior_mass[ci] += w;
        for (col, count) in &vector.counts {
            feature_mass[ci][*col] += w * *count as f64;
        }
    }

    let total_mass: f64 = prior_mass.iter().sum();
    let log_priors: Vec<f64> = prior_mass.iter().map(|m| (m / total_mass).ln()).collect();
    let log_likelihoods: Vec<Vec<f64>> = feature_mass
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            let denom = total + alpha * dim as f64;
            row.iter().map(|m| ((m + alpha) / denom).ln()).collect()
        })
        .collect();

    Ok(TrainedModel {
        kind: ModelKind::NaiveBayes,
        vocabulary_fingerprint: space.fingerprint.clone(),
        dim,
        classes,
        params: ModelParams::NaiveBayes {
            log_priors,
            log_likelihoods,
        },
        train_config: config.clone(),
        convergence_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::predict;

    fn vec_of(fingerprint: &str, counts: &[(usize, u32)]) -> FeatureVector {
        FeatureVector {
            fingerprint: fingerprint.into(),
            counts: counts.to_vec(),
        }
    }

    /// doc1 = [a a b] class Green, doc2 = [b b] class Other, alpha = 1.
    fn hand_example() -> (FeatureSpace, Vec<FeatureVector>, Vec<CoarseLabel>) {
        let space = FeatureSpace::raw(2);
        let matrix = vec![
            vec_of(&space.fingerprint, &[(0, 2), (1, 1)]),
            vec_of(&space.fingerprint, &[(1, 2)]),
        ];
        let labels = vec![CoarseLabel::Green, CoarseLabel::Other];
        (space, matrix, labels)
    }

    #[test]
    fn smoothed_estimates_match_hand_computation() {
        let (space, matrix, labels) = hand_example();
        let weights = ClassWeights::uniform(&labels);
        let model =
            train_naive_bayes(&space, &matrix, &labels, &weights, &TrainConfig::default())
                .unwrap();
        let (log_priors, log_likelihoods) = match &model.params {
            ModelParams::NaiveBayes {
                log_priors,
                log_likelihoods,
            } => (log_priors, log_likelihoods),
            _ => unreachable!(),
        };
        // P(a|Green) = (2+1)/(3+2), P(b|Green) = (1+1)/(3+2)
        assert!((log_likelihoods[0][0].exp() - 0.6).abs() < 1e-12);
        assert!((log_likelihoods[0][1].exp() - 0.4).abs() < 1e-12);
        // P(a|Other) = (0+1)/(2+2), P(b|Other) = (2+1)/(2+2)
        assert!((log_likelihoods[1][0].exp() - 0.25).abs() < 1e-12);
        assert!((log_likelihoods[1][1].exp() - 0.75).abs() < 1e-12);
        assert!((log_priors[0].exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn likelihood_rows_are_probability_distributions() {
        let (space, matrix, labels) = hand_example();
        let weights = ClassWeights::uniform(&labels);
        let model =
            train_naive_bayes(&space, &matrix, &labels, &weights, &TrainConfig::default())
                .unwrap();
        if let ModelParams::NaiveBayes {
            log_likelihoods, ..
        } = &model.params
        {
            for row in log_likelihoods {
                let sum: f64 = row.iter().map(|l| l.exp()).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posterior_matches_brute_force_and_sums_to_one() {
        let (space, matrix, labels) = hand_example();
        let weights = ClassWeights::uniform(&labels);
        let model =
            train_naive_bayes(&space, &matrix, &labels, &weights, &TrainConfig::default())
                .unwrap();
        // test doc [a b]: joint(Green) = 0.5*0.6*0.4, joint(Other) = 0.5*0.25*0.75
        let v = vec_of(&space.fingerprint, &[(0, 1), (1, 1)]);
        let (winner, scores) = predict(&model, &v).unwrap();
        let jg = 0.5 * 0.6 * 0.4;
        let jo = 0.5 * 0.25 * 0.75;
        assert_eq!(winner, CoarseLabel::Green);
        assert!((scores[0].1 - jg / (jg + jo)).abs() < 1e-9);
        assert!((scores[1].1 - jo / (jg + jo)).abs() < 1e-9);
        let total: f64 = scores.iter().map(|(_, s)| s).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_prediction_follows_weighted_priors() {
        let space = FeatureSpace::raw(2);
        let matrix = vec![
            vec_of(&space.fingerprint, &[(0, 1)]),
            vec_of(&space.fingerprint, &[(1, 1)]),
            vec_of(&space.fingerprint, &[(1, 1)]),
        ];
        let labels = vec![CoarseLabel::Green, CoarseLabel::Other, CoarseLabel::Other];
        let weights = ClassWeights::uniform(&labels);
        let model =
            train_naive_bayes(&space, &matrix, &labels, &weights, &TrainConfig::default())
                .unwrap();
        let (winner, scores) = predict(&model, &vec_of(&space.fingerprint, &[])).unwrap();
        assert_eq!(winner, CoarseLabel::Other);
        assert!((scores[1].1 - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn integer_weights_equal_physical_oversampling_exactly() {
        let space = FeatureSpace::raw(3);
        let base_matrix = vec![
            vec_of(&space.fingerprint, &[(0, 2), (2, 1)]),
            vec_of(&space.fingerprint, &[(1, 3)]),
            vec_of(&space.fingerprint, &[(1, 1), (2, 2)]),
        ];
        let base_labels = vec![CoarseLabel::Green, CoarseLabel::Other, CoarseLabel::Other];

        // weight Green 3x vs. physically replicating its sample 3 times
        let mut weights = ClassWeights::uniform(&base_labels);
        weights.weights.insert(CoarseLabel::Green, 3.0);
        let weighted = train_naive_bayes(
            &space,
            &base_matrix,
            &base_labels,
            &weights,
            &TrainConfig::default(),
        )
        .unwrap();

        let mut rep_matrix = base_matrix.clone();
        let mut rep_labels = base_labels.clone();
        for _ in 0..2 {
            rep_matrix.push(base_matrix[0].clone());
            rep_labels.push(CoarseLabel::Green);
        }
        let uniform = ClassWeights::uniform(&rep_labels);
        let replicated = train_naive_bayes(
            &space,
            &rep_matrix,
            &rep_labels,
            &uniform,
            &TrainConfig::default(),
        )
        .unwrap();

        assert_eq!(weighted.params, replicated.params);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let space = FeatureSpace::raw(2);
        let matrix = vec![vec_of(&space.fingerprint, &[(0, 1)])];
        let labels = vec![CoarseLabel::Green, CoarseLabel::Other];
        let weights = ClassWeights::uniform(&labels);
        assert!(train_naive_bayes(&space, &matrix, &labels, &weights, &TrainConfig::default())
            .is_err());
    }
}
