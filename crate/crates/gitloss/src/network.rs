//! The embedding network: a plain MLP whose second-to-last layer is a linear
//! low-dimensional feature layer, followed by the final affine classifier.
//!
//! Hidden layers use a relu-family activation. The feature layer is linear on
//! purpose: the distance-based loss terms assume unconstrained Euclidean
//! features, and with two feature dimensions the layer output can be plotted
//! directly.
//!
//! Forward and backward passes are written out by hand; there is no autodiff
//! graph anywhere in this crate. The backward pass accepts two upstream
//! gradients that merge at the feature layer: the softmax gradient arriving
//! through the classifier, and the center/repulsion gradient applied to the
//! features themselves.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky relu with the given negative-side slope.
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative as a function of the pre-activation (zero at the kink).
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if pre > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Dimension of the feature (embedding) layer.
    pub feature_dim: usize,
    pub n_classes: usize,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            input_dim: 784,
            hidden_dims: vec![512, 256],
            feature_dim: 128,
            n_classes: 10,
            activation: Activation::Relu,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.feature_dim == 0
            || self.n_classes == 0
            || self.hidden_dims.iter().any(|&d| d == 0)
        {
            return Err(Error::Parameter(
                "every layer dimension must be at least 1".into(),
            ));
        }
        if let Activation::LeakyRelu(slope) = self.activation {
            if !slope.is_finite() {
                return Err(Error::Parameter("leaky relu slope must be finite".into()));
            }
        }
        Ok(())
    }

    /// Shapes of all parameter tensors in canonical order: for each layer
    /// (hidden..., feature, classifier) its weight, then its 1-row bias.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            shapes.push((fan_in, h));
            shapes.push((1, h));
            fan_in = h;
        }
        shapes.push((fan_in, self.feature_dim));
        shapes.push((1, self.feature_dim));
        shapes.push((self.feature_dim, self.n_classes));
        shapes.push((1, self.n_classes));
        shapes
    }
}

/// One affine layer. Weights are `in_dim x out_dim`, so a batch maps forward
/// as `input . weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    fn init(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Result<Layer> {
        // He initialization: variance 2 / fan_in suits relu-family layers.
        let stddev = (2.0 / in_dim as f64).sqrt();
        Ok(Layer {
            weight: rng.gaussian_matrix(in_dim, out_dim, 0.0, stddev)?,
            bias: Matrix::zeros(1, out_dim),
        })
    }

    fn affine(&self, input: &Matrix) -> Result<Matrix> {
        input.affine(&self.weight, self.bias.row(0))
    }
}

/// All parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    pub hidden: Vec<Layer>,
    pub feature: Layer,
    pub classifier: Layer,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub hidden_pre: Vec<Matrix>,
    pub hidden_act: Vec<Matrix>,
    /// Output of the linear feature layer, `batch x feature_dim`.
    pub features: Matrix,
    /// Classifier output, `batch x n_classes`.
    pub logits: Matrix,
}

/// Parameter gradients in the same canonical order as [`MlpState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Matrix>,
}

/// Fresh parameters: He-scheme weights, zero biases, deterministic per seed.
pub fn init(config: &MlpConfig, rng: &mut SeededRng) -> Result<MlpState> {
    config.validate()?;
    let mut hidden = Vec::with_capacity(config.hidden_dims.len());
    let mut fan_in = config.input_dim;
    for &h in &config.hidden_dims {
        hidden.push(Layer::init(fan_in, h, rng)?);
        fan_in = h;
    }
    let feature = Layer::init(fan_in, config.feature_dim, rng)?;
    let classifier = Layer::init(config.feature_dim, config.n_classes, rng)?;
    Ok(MlpState {
        hidden,
        feature,
        classifier,
    })
}

impl MlpState {
    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map(|l| l.weight.rows())
            .unwrap_or_else(|| self.feature.weight.rows())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature.weight.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.weight.cols()
    }

    /// Parameters in canonical order (matching [`MlpConfig::param_shapes`]).
    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = Vec::new();
        for layer in &self.hidden {
            v.push(&layer.weight);
            v.push(&layer.bias);
        }
        v.push(&self.feature.weight);
        v.push(&self.feature.bias);
        v.push(&self.classifier.weight);
        v.push(&self.classifier.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::new();
        for layer in &mut self.hidden {
            v.push(&mut layer.weight);
            v.push(&mut layer.bias);
        }
        v.push(&mut self.feature.weight);
        v.push(&mut self.feature.bias);
        v.push(&mut self.classifier.weight);
        v.push(&mut self.classifier.bias);
        v
    }

    /// Runs the batch through the network, keeping per-layer intermediates.
    ///
    /// Pure: the same state and input always produce the same cache.
    pub fn forward(&self, activation: Activation, input: &Matrix) -> Result<ForwardCache> {
        if input.cols() != self.input_dim() {
            return Err(Error::dimension(
                "forward input",
                input.shape(),
                (self.input_dim(), 0),
            ));
        }
        let mut hidden_pre = Vec::with_capacity(self.hidden.len());
        let mut hidden_act = Vec::with_capacity(self.hidden.len());
        let mut current = input.clone();
        for layer in &self.hidden {
            let pre = layer.affine(&current)?;
            let act = pre.map(|x| activation.apply(x));
            hidden_pre.push(pre);
            current = act.clone();
            hidden_act.push(act);
        }
        // The feature layer stays linear; no activation follows it.
        let features = self.feature.affine(&current)?;
        let logits = self.classifier.affine(&features)?;
        Ok(ForwardCache {
            input: input.clone(),
            hidden_pre,
            hidden_act,
            features,
            logits,
        })
    }

    /// Backpropagates the two upstream loss gradients to every parameter.
    ///
    /// `grad_logits` is the softmax gradient, `grad_features` the weighted
    /// center/repulsion gradient; both loss paths merge at the feature layer
    /// as `grad_features + grad_logits . W_classifier^T`.
    pub fn backward(
        &self,
        activation: Activation,
        cache: &ForwardCache,
        grad_logits: &Matrix,
        grad_features: &Matrix,
    ) -> Result<ParamGrads> {
        if grad_logits.shape() != cache.logits.shape() {
            return Err(Error::dimension(
                "backward grad_logits",
                grad_logits.shape(),
                cache.logits.shape(),
            ));
        }
        if grad_features.shape() != cache.features.shape() {
            return Err(Error::dimension(
                "backward grad_features",
                grad_features.shape(),
                cache.features.shape(),
            ));
        }

        let n_hidden = self.hidden.len();
        // Classifier.
        let d_w_classifier = cache.features.matmul_transpose_left(grad_logits)?;
        let d_b_classifier = grad_logits.col_sums();
        let mut d_upstream =
            grad_features.add(&grad_logits.matmul_transpose_right(&self.classifier.weight)?)?;

        // Feature layer (linear).
        let feature_input = if n_hidden > 0 {
            &cache.hidden_act[n_hidden - 1]
        } else {
            &cache.input
        };
        let d_w_feature = feature_input.matmul_transpose_left(&d_upstream)?;
        let d_b_feature = d_upstream.col_sums();
        if n_hidden > 0 {
            d_upstream = d_upstream.matmul_transpose_right(&self.feature.weight)?;
        }

        // Hidden layers, last to first. The input gradient of the first
        // layer has no consumer, so it is never formed.
        let mut hidden_grads: Vec<(Matrix, Matrix)> = Vec::with_capacity(n_hidden);
        for l in (0..n_hidden).rev() {
            let dz = d_upstream.hadamard(&cache.hidden_pre[l].map(|x| activation.derivative(x)))?;
            let layer_input = if l > 0 {
                &cache.hidden_act[l - 1]
            } else {
                &cache.input
            };
            let d_w = layer_input.matmul_transpose_left(&dz)?;
            let d_b = dz.col_sums();
            if l > 0 {
                d_upstream = dz.matmul_transpose_right(&self.hidden[l].weight)?;
            }
            hidden_grads.push((d_w, d_b));
        }
        hidden_grads.reverse();

        let mut grads = Vec::with_capacity(2 * (n_hidden + 2));
        for (d_w, d_b) in hidden_grads {
            grads.push(d_w);
            grads.push(d_b);
        }
        grads.push(d_w_feature);
        grads.push(d_b_feature);
        grads.push(d_w_classifier);
        grads.push(d_b_classifier);
        Ok(ParamGrads { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{joint_loss, softmax_cross_entropy, CenterBank, LossWeights};

    fn tiny_config() -> MlpConfig {
        MlpConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            feature_dim: 2,
            n_classes: 3,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let config = tiny_config();
        let a = init(&config, &mut SeededRng::new(5)).unwrap();
        let b = init(&config, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        for layer in a.hidden.iter().chain([&a.feature, &a.classifier]) {
            assert!(layer.bias.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_weight_spread_follows_the_he_scheme() {
        let config = MlpConfig {
            input_dim: 100,
            hidden_dims: vec![200],
            feature_dim: 2,
            n_classes: 10,
            activation: Activation::Relu,
        };
        let state = init(&config, &mut SeededRng::new(0)).unwrap();
        let w = &state.hidden[0].weight;
        let n = (w.rows() * w.cols()) as f64;
        let mean = w.as_slice().iter().sum::<f64>() / n;
        let var = w.as_slice().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = (2.0 / 100.0_f64).sqrt();
        assert!(
            (var.sqrt() - expected).abs() / expected < 0.15,
            "stddev {} vs expected {expected}",
            var.sqrt()
        );
    }

    #[test]
    fn zero_input_through_a_fresh_state_gives_zero_outputs() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(1)).unwrap();
        let cache = state
            .forward(config.activation, &Matrix::zeros(2, 3))
            .unwrap();
        assert!(cache.features.as_slice().iter().all(|&v| v == 0.0));
        assert!(cache.logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logits_shape_matches_the_batch_and_class_count() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(2)).unwrap();
        let input = SeededRng::new(3).gaussian_matrix(7, 3, 0.0, 1.0).unwrap();
        let cache = state.forward(config.activation, &input).unwrap();
        assert_eq!(cache.logits.shape(), (7, 3));
        assert_eq!(cache.features.shape(), (7, 2));
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(2)).unwrap();
        assert!(state
            .forward(config.activation, &Matrix::zeros(1, 5))
            .is_err());
    }

    #[test]
    fn hand_traced_single_unit_network() {
        // 1 -> [1 hidden] -> 1 feature -> 1 class, every weight 1, biases 0,
        // relu hidden. Input 2 flows through unchanged at every stage.
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let state = MlpState {
            hidden: vec![Layer {
                weight: one.clone(),
                bias: Matrix::zeros(1, 1),
            }],
            feature: Layer {
                weight: one.clone(),
                bias: Matrix::zeros(1, 1),
            },
            classifier: Layer {
                weight: one,
                bias: Matrix::zeros(1, 1),
            },
        };
        let input = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let cache = state.forward(Activation::Relu, &input).unwrap();
        assert_eq!(cache.hidden_pre[0].get(0, 0), 2.0);
        assert_eq!(cache.hidden_act[0].get(0, 0), 2.0);
        assert_eq!(cache.features.get(0, 0), 2.0);
        assert_eq!(cache.logits.get(0, 0), 2.0);
    }

    #[test]
    fn forward_is_pure_and_repeatable() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(4)).unwrap();
        let input = SeededRng::new(5).gaussian_matrix(4, 3, 0.0, 1.0).unwrap();
        let a = state.forward(config.activation, &input).unwrap();
        let b = state.forward(config.activation, &input).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn zero_upstream_gradients_give_zero_parameter_gradients() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(6)).unwrap();
        let input = SeededRng::new(7).gaussian_matrix(4, 3, 0.0, 1.0).unwrap();
        let cache = state.forward(config.activation, &input).unwrap();
        let grads = state
            .backward(
                config.activation,
                &cache,
                &Matrix::zeros(4, 3),
                &Matrix::zeros(4, 2),
            )
            .unwrap();
        for g in &grads.grads {
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn classifier_gradients_match_their_closed_form() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(8)).unwrap();
        let mut rng = SeededRng::new(9);
        let input = rng.gaussian_matrix(5, 3, 0.0, 1.0).unwrap();
        let cache = state.forward(config.activation, &input).unwrap();
        let grad_logits = rng.gaussian_matrix(5, 3, 0.0, 1.0).unwrap();
        let grads = state
            .backward(
                config.activation,
                &cache,
                &grad_logits,
                &Matrix::zeros(5, 2),
            )
            .unwrap();
        let n = grads.grads.len();
        let expected_w = cache.features.transpose().matmul(&grad_logits).unwrap();
        let expected_b = grad_logits.col_sums();
        assert!(grads.grads[n - 2].max_abs_diff(&expected_w).unwrap() < 1e-12);
        assert!(grads.grads[n - 1].max_abs_diff(&expected_b).unwrap() < 1e-12);
    }

    #[test]
    fn zeroed_feature_gradient_reproduces_plain_softmax_backprop() {
        // The merge rule at the feature layer: with grad_features = 0 the
        // parameter gradients must equal those of a softmax-only loss.
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(10)).unwrap();
        let input = SeededRng::new(11).gaussian_matrix(6, 3, 0.0, 1.0).unwrap();
        let labels = vec![0, 1, 2, 0, 1, 2];
        let cache = state.forward(config.activation, &input).unwrap();

        let softmax = softmax_cross_entropy(&cache.logits, &labels).unwrap();
        let via_softmax = state
            .backward(
                config.activation,
                &cache,
                &softmax.grad,
                &Matrix::zeros(6, 2),
            )
            .unwrap();

        let bank = CenterBank::zeros(3, 2);
        let joint = joint_loss(
            &cache.features,
            &labels,
            &cache.logits,
            &bank,
            &LossWeights::softmax_only(),
        )
        .unwrap();
        let via_joint = state
            .backward(
                config.activation,
                &cache,
                &joint.grad_logits,
                &joint.grad_features,
            )
            .unwrap();
        assert_eq!(via_softmax, via_joint);
    }

    #[test]
    fn leaky_relu_propagates_negative_inputs() {
        let config = MlpConfig {
            activation: Activation::LeakyRelu(0.1),
            ..tiny_config()
        };
        let state = init(&config, &mut SeededRng::new(12)).unwrap();
        let input = Matrix::from_rows(&[vec![-1.0, -2.0, -3.0]]).unwrap();
        let cache = state.forward(config.activation, &input).unwrap();
        // At least one hidden pre-activation is negative and survives scaled.
        let any_negative = cache.hidden_pre[0]
            .as_slice()
            .iter()
            .zip(cache.hidden_act[0].as_slice())
            .any(|(&pre, &act)| pre < 0.0 && (act - 0.1 * pre).abs() < 1e-15);
        assert!(any_negative);
    }

    #[test]
    fn param_shapes_chain_through_the_architecture() {
        let config = tiny_config();
        let state = init(&config, &mut SeededRng::new(13)).unwrap();
        let shapes: Vec<(usize, usize)> =
            state.params().iter().map(|p| p.shape()).collect();
        assert_eq!(shapes, config.param_shapes());
        assert_eq!(
            shapes,
            vec![(3, 4), (1, 4), (4, 2), (1, 2), (2, 3), (1, 3)]
        );
    }
}
