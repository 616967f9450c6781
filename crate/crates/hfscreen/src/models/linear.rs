//! One-vs-rest linear models trained by deterministic full-batch
//! (sub)gradient descent on the weighted objective
//!
//! ```text
//! J(w, b) = (lambda/2) (|w|^2 + b^2) + sum_i c_i * loss(y_i (w.x_i + b))
//! ```
//!
//! with hinge loss for the linear SVM and log loss for logistic
//! regression. The loss term is an unnormalized weighted sum, so training
//! with integer class weights follows the same trajectory as physically
//! replicating the weighted samples, and scaling all weights by k is
//! equivalent to scaling lambda by k. The step size decays as
//! 1 / (lambda * t).

use serde::{Deserialize, Serialize};

use crate::corpus::CoarseLabel;
use crate::error::Result;
use crate::features::FeatureVector;

use super::{
    check_training_inputs, sparse_dot_dense, to_input, ClassWeights, FeatureSpace, ModelKind,
    ModelParams, TrainConfig, TrainedModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearLoss {
    Hinge,
    Logistic,
}

impl LinearLoss {
    /// loss(m) for margin m = y * (w.x + b)
    fn value(&self, margin: f64) -> f64 {
        match self {
            LinearLoss::Hinge => (1.0 - margin).max(0.0),
            // softplus(-m), numerically stable on both tails
            LinearLoss::Logistic => {
                let z = -margin;
                z.max(0.0) + (-z.abs()).exp().ln_1p()
            }
        }
    }

    /// d loss / d margin (a subgradient at the hinge kink)
    fn slope(&self, margin: f64) -> f64 {
        match self {
            LinearLoss::Hinge => {
                if margin < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LinearLoss::Logistic => {
                // -sigmoid(-m), stable for large |m|
                if margin >= 0.0 {
                    -(-margin).exp() / (1.0 + (-margin).exp())
                } else {
                    -1.0 / (1.0 + margin.exp())
                }
            }
        }
    }
}

/// The weighted binary objective over a fixed sample set; exposed so the
/// analytic gradient can be checked against finite differences.
pub struct WeightedLossObjective {
    samples: Vec<Vec<(usize, f64)>>,
    /// +1 / -1 targets.
    targets: Vec<f64>,
    sample_weights: Vec<f64>,
    lambda: f64,
    loss: LinearLoss,
    dim: usize,
}

impl WeightedLossObjective {
    pub fn new(
        samples: Vec<Vec<(usize, f64)>>,
        targets: Vec<f64>,
        sample_weights: Vec<f64>,
        lambda: f64,
        loss: LinearLoss,
        dim: usize,
    ) -> Self {
        assert_eq!(samples.len(), targets.len());
        assert_eq!(samples.len(), sample_weights.len());
        WeightedLossObjective {
            samples,
            targets,
            sample_weights,
            lambda,
            loss,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.samples
            .iter()
            .zip(&self.targets)
            .map(|(x, y)| y * (sparse_dot_dense(x, w) + b))
            .collect()
    }

    pub fn value(&self, w: &[f64], b: f64) -> f64 {
        let reg = 0.5 * self.lambda * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
        let loss: f64 = self
            .margins(w, b)
            .iter()
            .zip(&self.sample_weights)
            .map(|(m, c)| c * self.loss.value(*m))
            .sum();
        reg + loss
    }

    /// Analytic gradient (dJ/dw, dJ/db).
    pub fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let (_, gw, gb) = self.evaluate(w, b);
        (gw, gb)
    }

    /// Upper bound on the gradient's Lipschitz constant for smooth losses
    /// (logistic curvature is at most 1/4); `None` for hinge.
    fn smoothness_bound(&self) -> Option<f64> {
        match self.loss {
            LinearLoss::Hinge => None,
            LinearLoss::Logistic => {
                let quad: f64 = self
                    .samples
                    .iter()
                    .zip(&self.sample_weights)
                    .map(|(x, c)| {
                        let norm2: f64 = x.iter().map(|(_, v)| v * v).sum::<f64>() + 1.0;
                        c * norm2
                    })
                    .sum();
                Some(self.lambda + 0.25 * quad)
            }
        }
    }

    /// Objective value and gradient in one pass over the samples.
    pub fn evaluate(&self, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let mut value =
            0.5 * self.lambda * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
        let mut gw: Vec<f64> = w.iter().map(|v| self.lambda * v).collect();
        let mut gb = self.lambda * b;
        for ((x, y), c) in self.samples.iter().zip(&self.targets).zip(&self.sample_weights) {
            let margin = y * (sparse_dot_dense(x, w) + b);
            value += c * self.loss.value(margin);
            let slope = self.loss.slope(margin);
            if slope != 0.0 {
                let k = c * slope * y;
                for (col, v) in x {
                    gw[*col] += k * v;
                }
                gb += k;
            }
        }
        (value, gw, gb)
    }
}

pub(crate) struct DescentOutcome {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

/// Full-batch subgradient descent with step 1/(lambda*t), returning the
/// suffix average (mean of the second half of the iterates), which damps
/// the oscillation the decaying schedule leaves in the last iterate. For
/// the smooth logistic loss the step is additionally capped at 1/L (L =
/// gradient Lipschitz bound), which keeps plain gradient descent in its
/// contractive regime.
///
/// The loop always runs the full epoch budget so the trajectory depends
/// only on the objective, never on data-dependent stopping; this keeps
/// integer-weighted training and physically replicated training on the
/// same path. Converged means the loss subgradient vanished at some step
/// (no sample constrains the parameters) or the objective stopped
/// improving by more than the tolerance over the last ten steps.
pub(crate) fn descend(objective: &WeightedLossObjective, config: &TrainConfig) -> DescentOutcome {
    const STALL_WINDOW: usize = 10;
    let mut w = vec![0.0f64; objective.dim()];
    let mut b = 0.0f64;
    let total_weight: f64 = objective.sample_weights.iter().sum();
    let step_cap = objective.smoothness_bound().map(|l| 1.0 / l);
    let mut best_value = f64::INFINITY;
    let mut last_improvement = 0usize;
    let mut satisfied = false;
    let epochs = config.epochs.max(1);
    let suffix_start = epochs / 2 + 1;
    let mut avg_w = vec![0.0f64; objective.dim()];
    let mut avg_b = 0.0f64;
    let mut averaged = 0usize;
    for t in 1..=epochs {
        let (value, gw, gb) = objective.evaluate(&w, b);
        if value < best_value - config.tolerance * best_value.abs().min(1e300).max(1.0) {
            best_value = value;
            last_improvement = t;
        }
        // loss subgradient = full gradient minus the regularization term
        let loss_norm2 = gw
            .iter()
            .zip(w.iter())
            .map(|(g, v)| {
                let l = g - config.lambda * v;
                l * l
            })
            .sum::<f64>()
            + (gb - config.lambda * b).powi(2);
        if loss_norm2.sqrt() <= config.tolerance * total_weight.max(1.0) {
            satisfied = true;
        }
        let mut eta = 1.0 / (config.lambda * t as f64);
        if let Some(cap) = step_cap {
            eta = eta.min(cap);
        }
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= eta * gi;
        }
        b -= eta * gb;
        if t >= suffix_start {
            averaged += 1;
            let frac = 1.0 / averaged as f64;
            for (ai, wi) in avg_w.iter_mut().zip(&w) {
                *ai += frac * (*wi - *ai);
            }
            avg_b += frac * (b - avg_b);
        }
    }
    if averaged == 0 {
        avg_w = w;
        avg_b = b;
    }
    let stalled = epochs.saturating_sub(last_improvement) >= STALL_WINDOW;
    DescentOutcome {
        weights: avg_w,
        bias: avg_b,
        converged: satisfied || stalled,
    }
}

/// Train one-vs-rest linear models, one binary problem per observed
/// class, each weighted by the true (multiclass) label's class weight.
pub fn train_linear_ovr(
    space: &FeatureSpace,
    matrix: &[FeatureVector],
    labels: &[CoarseLabel],
    weights: &ClassWeights,
    config: &TrainConfig,
    loss: LinearLoss,
) -> Result<TrainedModel> {
    let classes = check_training_inputs(space, matrix, labels, weights)?;
    let inputs: Vec<Vec<(usize, f64)>> = matrix
        .iter()
        .map(|v| to_input(v, config.l2_normalize_inputs))
        .collect();
    let sample_weights: Vec<f64> = labels.iter().map(|l| weights.get(*l).unwrap()).collect();

    let mut per_class_weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    let mut convergence_warning = false;
    for class in &classes {
        let targets: Vec<f64> = labels
            .iter()
            .map(|l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let objective = WeightedLossObjective::new(
            inputs.clone(),
            targets,
            sample_weights.clone(),
            config.lambda,
            loss,
            space.dim,
        );
        let outcome = descend(&objective, config);
        convergence_warning |= !outcome.converged;
        per_class_weights.push(outcome.weights);
        biases.push(outcome.bias);
    }

    Ok(TrainedModel {
        kind: match loss {
            LinearLoss::Hinge => ModelKind::LinearSvmOvR,
            LinearLoss::Logistic => ModelKind::LogisticRegressionOvR,
        },
        vocabulary_fingerprint: space.fingerprint.clone(),
        dim: space.dim,
        classes,
        params: ModelParams::LinearOvr {
            weights: per_class_weights,
            biases,
        },
        train_config: config.clone(),
        convergence_warning,
    })
}
