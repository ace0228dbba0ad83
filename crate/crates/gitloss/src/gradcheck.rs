//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Central differences with step `h = 1e-5` on 64-bit floats give roughly
//! `h^2 = 1e-10` truncation error, far below the `1e-5`/`1e-6` acceptance
//! thresholds, so a disagreement here means a wrong derivative rather than
//! numerical noise. The comparison uses the loss *values* only, never the
//! gradient code under test.

use crate::error::{Error, Result};
use crate::loss::{
    center_loss, git_term, joint_loss, softmax_cross_entropy, CenterBank, LossWeights,
};
use crate::network::{Activation, MlpConfig, MlpState};
use crate::tensor::Matrix;

/// Central-difference step used by all checks in this module.
pub const STEP: f64 = 1e-5;

/// Largest batch (in perturbed coordinates) the checker will accept.
const MAX_COORDS: usize = 10_000;

/// Which part of the objective to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Softmax,
    Center,
    Git,
    Joint,
}

impl LossTerm {
    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Softmax => "softmax",
            LossTerm::Center => "center",
            LossTerm::Git => "git",
            LossTerm::Joint => "joint",
        }
    }
}

/// Relative disagreement between an analytic and a numeric gradient:
/// max over coordinates of `|a - n| / max(1, |a|, |n|)`.
pub fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> Result<f64> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::dimension(
            "max_rel_error",
            analytic.shape(),
            numeric.shape(),
        ));
    }
    Ok(analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| (a - n).abs() / 1.0_f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max))
}

fn term_value(
    term: LossTerm,
    features: &Matrix,
    labels: &[usize],
    logits: &Matrix,
    bank: &CenterBank,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(match term {
        LossTerm::Softmax => softmax_cross_entropy(logits, labels)?.value,
        LossTerm::Center => center_loss(features, labels, bank)?.value,
        LossTerm::Git => git_term(features, labels, bank)?.value,
        LossTerm::Joint => joint_loss(features, labels, logits, bank, weights)?.value,
    })
}

/// Central-difference gradient of `f` with respect to `at`, one coordinate
/// at a time.
fn numeric_gradient(
    at: &Matrix,
    mut f: impl FnMut(&Matrix) -> Result<f64>,
) -> Result<Matrix> {
    let mut probe = at.clone();
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    for idx in 0..at.as_slice().len() {
        let original = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = original + STEP;
        let plus = f(&probe)?;
        probe.as_mut_slice()[idx] = original - STEP;
        let minus = f(&probe)?;
        probe.as_mut_slice()[idx] = original;
        grad.as_mut_slice()[idx] = (plus - minus) / (2.0 * STEP);
    }
    Ok(grad)
}

/// Verifies the analytic gradient of one loss term against central
/// differences and returns the worst relative error over all coordinates.
///
/// The softmax term is perturbed in the logits, the center and repulsion
/// terms in the features, and the joint objective in both.
pub fn finite_diff_check(
    term: LossTerm,
    features: &Matrix,
    labels: &[usize],
    logits: &Matrix,
    bank: &CenterBank,
    weights: &LossWeights,
) -> Result<f64> {
    let coords = features.rows() * features.cols() + logits.rows() * logits.cols();
    if coords > MAX_COORDS {
        return Err(Error::Parameter(format!(
            "finite-difference check over {coords} coordinates exceeds the {MAX_COORDS} limit"
        )));
    }

    let mut worst: f64 = 0.0;
    if matches!(term, LossTerm::Center | LossTerm::Git | LossTerm::Joint) {
        let analytic = match term {
            LossTerm::Center => center_loss(features, labels, bank)?.grad,
            LossTerm::Git => git_term(features, labels, bank)?.grad,
            LossTerm::Joint => joint_loss(features, labels, logits, bank, weights)?.grad_features,
            LossTerm::Softmax => unreachable!(),
        };
        let numeric = numeric_gradient(features, |f| {
            term_value(term, f, labels, logits, bank, weights)
        })?;
        worst = worst.max(max_rel_error(&analytic, &numeric)?);
    }
    if matches!(term, LossTerm::Softmax | LossTerm::Joint) {
        let analytic = match term {
            LossTerm::Softmax => softmax_cross_entropy(logits, labels)?.grad,
            LossTerm::Joint => joint_loss(features, labels, logits, bank, weights)?.grad_logits,
            _ => unreachable!(),
        };
        let numeric = numeric_gradient(logits, |l| {
            term_value(term, features, labels, l, bank, weights)
        })?;
        worst = worst.max(max_rel_error(&analytic, &numeric)?);
    }
    Ok(worst)
}

/// End-to-end check: the joint objective differentiated through every
/// network parameter, against central differences on a perturbed copy of
/// the state. Returns the worst relative error.
pub fn network_finite_diff_check(
    activation: Activation,
    state: &MlpState,
    input: &Matrix,
    labels: &[usize],
    bank: &CenterBank,
    weights: &LossWeights,
) -> Result<f64> {
    let loss_of = |s: &MlpState| -> Result<f64> {
        let cache = s.forward(activation, input)?;
        Ok(joint_loss(&cache.features, labels, &cache.logits, bank, weights)?.value)
    };

    let cache = state.forward(activation, input)?;
    let joint = joint_loss(&cache.features, labels, &cache.logits, bank, weights)?;
    let analytic = state.backward(activation, &cache, &joint.grad_logits, &joint.grad_features)?;

    let mut probe = state.clone();
    let mut worst: f64 = 0.0;
    let n_params = state.params().len();
    for p in 0..n_params {
        let len = state.params()[p].as_slice().len();
        let mut numeric = Matrix::zeros(
            state.params()[p].rows(),
            state.params()[p].cols(),
        );
        for idx in 0..len {
            let original = probe.params()[p].as_slice()[idx];
            probe.params_mut()[p].as_mut_slice()[idx] = original + STEP;
            let plus = loss_of(&probe)?;
            probe.params_mut()[p].as_mut_slice()[idx] = original - STEP;
            let minus = loss_of(&probe)?;
            probe.params_mut()[p].as_mut_slice()[idx] = original;
            numeric.as_mut_slice()[idx] = (plus - minus) / (2.0 * STEP);
        }
        worst = worst.max(max_rel_error(&analytic.grads[p], &numeric)?);
    }
    Ok(worst)
}

/// A small, deterministic scene for the standard checks: random features and
/// logits, distinct-heavy labels, random centers.
pub fn standard_scene(
    seed: u64,
    batch: usize,
    feature_dim: usize,
    n_classes: usize,
) -> (Matrix, Vec<usize>, Matrix, CenterBank) {
    let mut rng = crate::rng::SeededRng::new(seed);
    let features = rng
        .gaussian_matrix(batch, feature_dim, 0.0, 1.5)
        .expect("valid shape");
    let logits = rng
        .gaussian_matrix(batch, n_classes, 0.0, 2.0)
        .expect("valid shape");
    // Cycle through the classes so divergent pairs always exist.
    let labels: Vec<usize> = (0..batch).map(|i| i % n_classes).collect();
    let centers = rng
        .gaussian_matrix(n_classes, feature_dim, 0.0, 1.0)
        .expect("valid shape");
    let bank = CenterBank::from_matrix(centers).expect("finite centers");
    (features, labels, logits, bank)
}

/// Default network check scene: a tiny architecture the checker can afford
/// to perturb parameter by parameter.
pub fn standard_network_scene(seed: u64) -> (MlpConfig, MlpState, Matrix, Vec<usize>) {
    let config = MlpConfig {
        input_dim: 784,
        hidden_dims: vec![8],
        feature_dim: 2,
        n_classes: 10,
        activation: Activation::Relu,
    };
    let mut rng = crate::rng::SeededRng::new(seed);
    let state = crate::network::init(&config, &mut rng).expect("valid config");
    let input = rng.gaussian_matrix(4, 784, 0.0, 1.0).expect("valid shape");
    let labels = vec![0, 3, 7, 9];
    (config, state, input, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOLERANCE: f64 = 1e-6;

    #[test]
    fn center_gradient_survives_finite_differences() {
        let (features, labels, logits, bank) = standard_scene(0, 8, 2, 10);
        let weights = LossWeights::new(0.1, 0.1, 0.5).unwrap();
        let err =
            finite_diff_check(LossTerm::Center, &features, &labels, &logits, &bank, &weights)
                .unwrap();
        assert!(err < TOLERANCE, "center error {err}");
    }

    #[test]
    fn git_gradient_survives_finite_differences() {
        let (features, labels, logits, bank) = standard_scene(1, 8, 2, 10);
        let weights = LossWeights::new(0.1, 0.1, 0.5).unwrap();
        let err = finite_diff_check(LossTerm::Git, &features, &labels, &logits, &bank, &weights)
            .unwrap();
        assert!(err < TOLERANCE, "git error {err}");
    }

    #[test]
    fn softmax_gradient_survives_finite_differences() {
        let (features, labels, logits, bank) = standard_scene(2, 8, 2, 10);
        let weights = LossWeights::softmax_only();
        let err =
            finite_diff_check(LossTerm::Softmax, &features, &labels, &logits, &bank, &weights)
                .unwrap();
        assert!(err < TOLERANCE, "softmax error {err}");
    }

    #[test]
    fn joint_gradient_survives_finite_differences() {
        let (features, labels, logits, bank) = standard_scene(3, 8, 2, 10);
        let weights = LossWeights::new(0.1, 0.1, 0.5).unwrap();
        let err = finite_diff_check(LossTerm::Joint, &features, &labels, &logits, &bank, &weights)
            .unwrap();
        assert!(err < TOLERANCE, "joint error {err}");
    }

    #[test]
    fn all_terms_pass_across_ten_seeds() {
        let weights = LossWeights::new(0.1, 0.1, 0.5).unwrap();
        for seed in 0..10 {
            let (features, labels, logits, bank) = standard_scene(seed, 8, 2, 10);
            for term in [
                LossTerm::Softmax,
                LossTerm::Center,
                LossTerm::Git,
                LossTerm::Joint,
            ] {
                let err =
                    finite_diff_check(term, &features, &labels, &logits, &bank, &weights)
                        .unwrap();
                assert!(err < TOLERANCE, "{} error {err} at seed {seed}", term.name());
            }
        }
    }

    #[test]
    fn a_sign_flipped_gradient_is_caught() {
        // Negative control: the checker must reject a corrupted gradient.
        let (features, labels, _, bank) = standard_scene(4, 8, 2, 10);
        let good = git_term(&features, &labels, &bank).unwrap();
        let corrupted = good.grad.scale(-1.0);
        let numeric = numeric_gradient(&features, |f| {
            Ok(git_term(f, &labels, &bank)?.value)
        })
        .unwrap();
        let honest = max_rel_error(&good.grad, &numeric).unwrap();
        let flipped = max_rel_error(&corrupted, &numeric).unwrap();
        assert!(honest < TOLERANCE);
        assert!(flipped > 1e-3, "sign flip went unnoticed: {flipped}");
    }

    #[test]
    fn git_gradient_vanishes_exactly_on_the_other_centers() {
        // Every qualifying pair at distance zero: analytic gradient is
        // exactly zero, not merely small.
        let centers = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 4.0]]).unwrap();
        let bank = CenterBank::from_matrix(centers).unwrap();
        let features = Matrix::from_rows(&[vec![-3.0, 4.0], vec![1.0, 2.0]]).unwrap();
        let out = git_term(&features, &[0, 1], &bank).unwrap();
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn end_to_end_network_gradient_survives_finite_differences() {
        for seed in 0..5 {
            let (config, state, input, labels) = standard_network_scene(seed);
            let bank = CenterBank::zeros(10, 2);
            let weights = LossWeights::new(0.1, 0.1, 0.5).unwrap();
            let err = network_finite_diff_check(
                config.activation,
                &state,
                &input,
                &labels,
                &bank,
                &weights,
            )
            .unwrap();
            assert!(err < 1e-5, "network error {err} at seed {seed}");
        }
    }

    #[test]
    fn oversized_batches_are_rejected() {
        let (features, labels, logits, bank) = standard_scene(0, 8, 2, 10);
        let big = Matrix::zeros(2000, 6);
        let big_labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
        let weights = LossWeights::softmax_only();
        let err = finite_diff_check(
            LossTerm::Center,
            &big,
            &big_labels,
            &Matrix::zeros(2000, 10),
            &CenterBank::zeros(10, 6),
            &weights,
        );
        assert!(err.is_err());
        // The standard scene stays within bounds.
        assert!(finite_diff_check(
            LossTerm::Center,
            &features,
            &labels,
            &logits,
            &bank,
            &weights
        )
        .is_ok());
    }
}
