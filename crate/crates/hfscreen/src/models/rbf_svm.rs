//! Soft-margin RBF-kernel SVM solved by simplified sequential minimal
//! optimization: repeatedly pick a KKT-violating multiplier, pair it with
//! a random partner, and solve the two-variable subproblem analytically.
//! Class weights enter through per-sample box constraints
//! `C_i = C * weight(class_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CoarseLabel;
use crate::error::Result;
use crate::features::FeatureVector;

use super::{
    check_training_inputs, sparse_dot_sparse, sparse_norm2, to_input, ClassWeights, FeatureSpace,
    ModelKind, ModelParams, RbfBinary, TrainConfig, TrainedModel,
};

/// One binary soft-margin problem over a precomputed kernel matrix.
pub struct BinaryKernelProblem<'a> {
    /// Gram matrix, n x n.
    pub kernel: &'a [Vec<f64>],
    /// +1 / -1 targets.
    pub targets: &'a [f64],
    /// Per-sample box constraints.
    pub box_limits: &'a [f64],
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
}

/// Solver output: multipliers, bias, and (when recorded) the dual
/// objective after each successful pair update.
pub struct BinarySolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub dual_objective_trace: Vec<f64>,
}

fn dual_objective(alphas: &[f64], targets: &[f64], kernel: &[Vec<f64>]) -> f64 {
    let n = alphas.len();
    let mut linear = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        linear += alphas[i];
        for j in 0..n {
            if alphas[j] != 0.0 {
                quad += alphas[i] * alphas[j] * targets[i] * targets[j] * kernel[i][j];
            }
        }
    }
    linear - 0.5 * quad
}

/// Simplified SMO. `record_trace` additionally evaluates the dual
/// objective after every accepted update (quadratic cost; test-sized
/// problems only).
pub fn solve_binary_with_trace(
    problem: &BinaryKernelProblem<'_>,
    record_trace: bool,
) -> BinarySolution {
    let n = problem.targets.len();
    let k = problem.kernel;
    let y = problem.targets;
    let c = problem.box_limits;
    let tol = problem.tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);

    let mut alphas = vec![0.0f64; n];
    let mut bias = 0.0f64;
    let mut trace = Vec::new();

    let decision = |alphas: &[f64], bias: f64, i: usize| -> f64 {
        let mut f = bias;
        for j in 0..n {
            if alphas[j] != 0.0 {
                f += alphas[j] * y[j] * k[j][i];
            }
        }
        f
    };

    let mut quiet_passes = 0usize;
    let mut total_passes = 0usize;
    // hard cap keeps degenerate kernels from cycling forever
    let max_total = 200 + 50 * problem.max_passes;
    while quiet_passes < problem.max_passes && total_passes < max_total {
        let mut changed = 0usize;
        for i in 0..n {
            let err_i = decision(&alphas, bias, i) - y[i];
            let violates = (y[i] * err_i < -tol && alphas[i] < c[i])
                || (y[i] * err_i > tol && alphas[i] > 0.0);
            if !violates || n < 2 {
                continue;
            }
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let err_j = decision(&alphas, bias, j) - y[j];
            let (alpha_i_old, alpha_j_old) = (alphas[i], alphas[j]);
            let (low, high) = if (y[i] - y[j]).abs() > f64::EPSILON {
                (
                    (alpha_j_old - alpha_i_old).max(0.0),
                    (c[i] + alpha_j_old - alpha_i_old).min(c[j]),
                )
            } else {
                (
                    (alpha_i_old + alpha_j_old - c[i]).max(0.0),
                    (alpha_i_old + alpha_j_old).min(c[j]),
                )
            };
            if low >= high {
                continue;
            }
            let eta = 2.0 * k[i][j] - k[i][i] - k[j][j];
            if eta >= 0.0 {
                continue;
            }
            let mut alpha_j_new = alpha_j_old - y[j] * (err_i - err_j) / eta;
            alpha_j_new = alpha_j_new.clamp(low, high);
            if (alpha_j_new - alpha_j_old).abs() < 1e-7 {
                continue;
            }
            let alpha_i_new = alpha_i_old + y[i] * y[j] * (alpha_j_old - alpha_j_new);
            alphas[i] = alpha_i_new;
            alphas[j] = alpha_j_new;

            let b1 = bias
                - err_i
                - y[i] * (alpha_i_new - alpha_i_old) * k[i][i]
                - y[j] * (alpha_j_new - alpha_j_old) * k[i][j];
            let b2 = bias
                - err_j
                - y[i] * (alpha_i_new - alpha_i_old) * k[i][j]
                - y[j] * (alpha_j_new - alpha_j_old) * k[j][j];
            bias = if alpha_i_new > 0.0 && alpha_i_new < c[i] {
                b1
            } else if alpha_j_new > 0.0 && alpha_j_new < c[j] {
                b2
            } else {
                0.5 * (b1 + b2)
            };
            changed += 1;
            if record_trace {
                trace.push(dual_objective(&alphas, y, k));
            }
        }
        if changed == 0 {
            quiet_passes += 1;
        } else {
            quiet_passes = 0;
        }
        total_passes += 1;
    }

    BinarySolution {
        alphas,
        bias,
        dual_objective_trace: trace,
    }
}

/// RBF kernel matrix over sparse inputs.
pub(crate) fn rbf_gram(inputs: &[Vec<(usize, f64)>], gamma: f64) -> Vec<Vec<f64>> {
    let n = inputs.len();
    let norms: Vec<f64> = inputs.iter().map(|x| sparse_norm2(x)).collect();
    let mut gram = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        gram[i][i] = 1.0;
        for j in 0..i {
            let d2 = (norms[i] + norms[j] - 2.0 * sparse_dot_sparse(&inputs[i], &inputs[j])).max(0.0);
            let k = (-gamma * d2).exp();
            gram[i][j] = k;
            gram[j][i] = k;
        }
    }
    gram
}

/// Train one-vs-rest RBF SVMs. The kernel matrix is computed once and
/// shared by the per-class binary problems.
pub fn train_rbf_svm_ovr(
    space: &FeatureSpace,
    matrix: &[FeatureVector],
    labels: &[CoarseLabel],
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let classes = check_training_inputs(space, matrix, labels, weights)?;
    let gamma = config.gamma.unwrap_or(1.0 / space.dim.max(1) as f64);
    let inputs: Vec<Vec<(usize, f64)>> = matrix
        .iter()
        .map(|v| to_input(v, config.l2_normalize_inputs))
        .collect();
    let gram = rbf_gram(&inputs, gamma);
    let box_limits: Vec<f64> = labels
        .iter()
        .map(|l| config.svm_c * weights.get(*l).unwrap())
        .collect();

    let mut per_class = Vec::with_capacity(classes.len());
    for (ci, class) in classes.iter().enumerate() {
        let targets: Vec<f64> = labels
            .iter()
            .map(|l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let problem = BinaryKernelProblem {
            kernel: &gram,
            targets: &targets,
            box_limits: &box_limits,
            tolerance: config.smo_tolerance,
            max_passes: config.smo_max_passes,
            seed: config.seed.wrapping_add(ci as u64),
        };
        let solution = solve_binary_with_trace(&problem, false);
        let mut support = Vec::new();
        let mut coeffs = Vec::new();
        for (i, alpha) in solution.alphas.iter().enumerate() {
            if *alpha > 0.0 {
                support.push(inputs[i].clone());
                coeffs.push(alpha * targets[i]);
            }
        }
        per_class.push(RbfBinary {
            support,
            coeffs,
            bias: solution.bias,
            gamma,
        });
    }

    Ok(TrainedModel {
        kind: ModelKind::RbfSvmOvR,
        vocabulary_fingerprint: space.fingerprint.clone(),
        dim: space.dim,
        classes,
        params: ModelParams::RbfOvr { per_class },
        train_config: config.clone(),
        convergence_warning: false,
    })
}
