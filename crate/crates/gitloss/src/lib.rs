//! A joint supervision objective for discriminative embeddings, built from
//! scratch: softmax cross-entropy plus a center-pulling term plus an
//! inter-class repulsion term, with hand-derived analytic gradients, a small
//! MLP to train under it, SGD/Adam update rules, MNIST ingestion, and the
//! evaluation protocol (accuracy, inter/intra-class distances, 10-fold
//! Euclidean verification).
//!
//! The objective over a batch of features `x_i` with labels `y_i`, class
//! centers `c_j`, and classifier logits is
//!
//! ```text
//! L = L_S + lambda_c * L_C + lambda_g * L_G
//! L_C = 1/2 sum_i ||x_i - c_{y_i}||^2
//! L_G = sum over pairs (i, j) with y_i != y_j of 1 / (1 + ||x_i - c_{y_j}||^2)
//! ```
//!
//! Minimizing `L_C` pulls features toward their own class center; minimizing
//! `L_G` pushes them away from every other class's center (each pair term
//! peaks at 1 when `x_i` sits exactly on the foreign center and decays to 0
//! with distance). With `lambda_g = 0` the objective reduces to the familiar
//! softmax-plus-center-loss composition, bit for bit.
//!
//! Every gradient in this crate is hand-derived and covered by central
//! finite-difference checks (see [`gradcheck`]); there is no autodiff.
//!
//! # Quick start
//!
//! ```
//! use gitloss::loss::{joint_loss, CenterBank, LossWeights};
//! use gitloss::rng::SeededRng;
//!
//! let mut rng = SeededRng::new(7);
//! let features = rng.gaussian_matrix(4, 2, 0.0, 1.0)?;
//! let logits = rng.gaussian_matrix(4, 10, 0.0, 1.0)?;
//! let labels = vec![0, 1, 2, 3];
//! let mut bank = CenterBank::zeros(10, 2);
//! let weights = LossWeights::new(0.1, 0.1, 0.5)?;
//!
//! let out = joint_loss(&features, &labels, &logits, &bank, &weights)?;
//! assert!(out.value.is_finite());
//! assert_eq!(out.grad_features.shape(), (4, 2));
//! assert_eq!(out.grad_logits.shape(), (4, 10));
//!
//! // Centers are maintained outside the optimizer.
//! bank.update_centers(&features, &labels, weights.alpha)?;
//! # Ok::<(), gitloss::Error>(())
//! ```

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Matrix;
