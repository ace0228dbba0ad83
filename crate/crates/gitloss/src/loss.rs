//! The joint training objective and its analytic gradients.
//!
//! The objective combines three terms over a batch of deep features
//! `x_1..x_m` with labels `y_i`, class centers `c_j`, and the classifier
//! logits:
//!
//! * softmax cross-entropy over the logits (classification),
//! * the center term `1/2 * sum_i ||x_i - c_{y_i}||^2` (pulls features
//!   toward their own class center),
//! * the repulsion term `sum_{(i,j): y_i != y_j} 1 / (1 + ||x_i - c_{y_j}||^2)`
//!   (pushes features away from every *other* class's center),
//!
//! totalled as `L = L_S + lambda_c * L_C + lambda_g * L_G`. All three terms
//! are batch sums, not means; callers that want batch-size-independent
//! numbers divide by `m` when reporting.
//!
//! Gradients are hand-derived. Centers are treated as constants when
//! differentiating with respect to features; they move only through
//! [`CenterBank::update_centers`], which runs outside the optimizer.
//!
//! The pair sum in the repulsion term ranges over ordered sample pairs with
//! *divergent* labels. Same-class pairs are excluded: including them would
//! push a feature away from its own center, the opposite of what the center
//! term works toward. Since the summand only depends on `j` through `c_{y_j}`,
//! the implementation folds the inner loop into per-class counts; this is an
//! algebraic regrouping of the same sum, not an approximation.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Balance knobs of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the center (compactness) term. Nonnegative.
    pub lambda_c: f64,
    /// Weight of the repulsion term. Nonnegative.
    pub lambda_g: f64,
    /// Center update rate, in `(0, 1]`.
    pub alpha: f64,
}

pub const DEFAULT_CENTER_UPDATE_RATE: f64 = 0.5;

impl LossWeights {
    pub fn new(lambda_c: f64, lambda_g: f64, alpha: f64) -> Result<Self> {
        if !(lambda_c >= 0.0) || !lambda_c.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda_c must be finite and nonnegative, got {lambda_c}"
            )));
        }
        if !(lambda_g >= 0.0) || !lambda_g.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda_g must be finite and nonnegative, got {lambda_g}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "center update rate alpha must be in (0, 1], got {alpha}"
            )));
        }
        Ok(LossWeights {
            lambda_c,
            lambda_g,
            alpha,
        })
    }

    /// Plain softmax: both auxiliary terms switched off.
    pub fn softmax_only() -> Self {
        LossWeights {
            lambda_c: 0.0,
            lambda_g: 0.0,
            alpha: DEFAULT_CENTER_UPDATE_RATE,
        }
    }
}

/// One maintained center vector per class, rows indexed by class.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank {
    centers: Matrix,
}

impl CenterBank {
    /// All-zero centers. They migrate to the feature mass within the first
    /// few update rounds.
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        CenterBank {
            centers: Matrix::zeros(n_classes, dim),
        }
    }

    pub fn from_matrix(centers: Matrix) -> Result<Self> {
        if !centers.is_finite() {
            return Err(Error::NonFinite("center bank".into()));
        }
        Ok(CenterBank { centers })
    }

    pub fn n_classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn center(&self, class: usize) -> &[f64] {
        self.centers.row(class)
    }

    /// Moves each center present in the batch toward its class's features:
    /// `c_j <- c_j - alpha * delta_j` with
    /// `delta_j = sum_{i: y_i = j} (c_j - x_i) / (1 + |{i: y_i = j}|)`.
    /// Classes absent from the batch are untouched.
    pub fn update_centers(
        &mut self,
        features: &Matrix,
        labels: &[usize],
        alpha: f64,
    ) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "center update rate alpha must be in (0, 1], got {alpha}"
            )));
        }
        check_features(features, labels, self)?;
        let dim = self.dim();
        let mut counts = vec![0usize; self.n_classes()];
        let mut residual = Matrix::zeros(self.n_classes(), dim);
        for (i, &y) in labels.iter().enumerate() {
            counts[y] += 1;
            let x = features.row(i);
            let r = residual.row_mut(y);
            let c = &self.centers.as_slice()[y * dim..(y + 1) * dim];
            for k in 0..dim {
                r[k] += c[k] - x[k];
            }
        }
        for (j, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let scale = alpha / (1.0 + count as f64);
            let r = residual.row(j).to_vec();
            let c = self.centers.row_mut(j);
            for k in 0..dim {
                c[k] -= scale * r[k];
            }
        }
        Ok(())
    }
}

/// Value and gradient of a single loss term with respect to its own input
/// (logits for the softmax term, features for the other two).
#[derive(Debug, Clone, PartialEq)]
pub struct TermLoss {
    pub value: f64,
    pub grad: Matrix,
}

/// Value and both gradients of the joint objective.
///
/// `grad_features` carries the weighted center and repulsion gradients; the
/// softmax contribution reaches the features through `grad_logits` and the
/// classifier's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub value: f64,
    pub grad_features: Matrix,
    pub grad_logits: Matrix,
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Parameter("batch must hold at least one sample".into()));
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::Label {
                row,
                label,
                n_classes,
            });
        }
    }
    Ok(())
}

fn check_features(features: &Matrix, labels: &[usize], bank: &CenterBank) -> Result<()> {
    if features.cols() != bank.dim() {
        return Err(Error::dimension(
            "features vs centers",
            features.shape(),
            (bank.n_classes(), bank.dim()),
        ));
    }
    if features.rows() != labels.len() {
        return Err(Error::dimension(
            "features vs labels",
            features.shape(),
            (labels.len(), 1),
        ));
    }
    check_labels(labels, bank.n_classes())
}

/// Batch softmax cross-entropy, summed over samples.
///
/// Each row is stabilized by subtracting its maximum before exponentiating.
/// The gradient with respect to the logits is `softmax(row) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<TermLoss> {
    if logits.rows() != labels.len() {
        return Err(Error::dimension(
            "logits vs labels",
            logits.shape(),
            (labels.len(), 1),
        ));
    }
    check_labels(labels, logits.cols())?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut grad = logits.clone();
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum_exp += *v;
        }
        // -log softmax[y] = log(sum_exp) - (logit_y - max)
        value += sum_exp.ln() - (logits.get(i, y) - max);
        let inv = 1.0 / sum_exp;
        for v in row.iter_mut() {
            *v *= inv;
        }
        row[y] -= 1.0;
    }
    Ok(TermLoss { value, grad })
}

/// Center term: `1/2 * sum_i ||x_i - c_{y_i}||^2`, unweighted.
///
/// The gradient row is `x_i - c_{y_i}`; centers are constants here.
pub fn center_loss(features: &Matrix, labels: &[usize], bank: &CenterBank) -> Result<TermLoss> {
    check_features(features, labels, bank)?;
    let mut grad = features.clone();
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let c = bank.center(y);
        let row = grad.row_mut(i);
        for (g, &ck) in row.iter_mut().zip(c) {
            *g -= ck;
        }
        value += row.iter().map(|&d| d * d).sum::<f64>();
    }
    Ok(TermLoss {
        value: 0.5 * value,
        grad,
    })
}

/// Repulsion term over ordered divergent-label sample pairs, unweighted:
/// `sum 1 / (1 + ||x_i - c_{y_j}||^2)` with gradient row
/// `sum -2 (x_i - c_{y_j}) / (1 + ||x_i - c_{y_j}||^2)^2`.
///
/// Each pair contributes a value in `(0, 1]`, maximal exactly when the
/// feature sits on the other class's center, and decaying toward zero as the
/// distance grows.
pub fn git_term(features: &Matrix, labels: &[usize], bank: &CenterBank) -> Result<TermLoss> {
    check_features(features, labels, bank)?;
    let dim = bank.dim();
    let mut counts = vec![0usize; bank.n_classes()];
    for &y in labels {
        counts[y] += 1;
    }
    let mut grad = Matrix::zeros(features.rows(), dim);
    let mut value = 0.0;
    let mut diff = vec![0.0; dim];
    for (i, &yi) in labels.iter().enumerate() {
        let x = features.row(i);
        let grow = grad.row_mut(i);
        for (class, &count) in counts.iter().enumerate() {
            if class == yi || count == 0 {
                continue;
            }
            let c = bank.center(class);
            let mut dist_sq = 0.0;
            for k in 0..dim {
                let d = x[k] - c[k];
                diff[k] = d;
                dist_sq += d * d;
            }
            let weight = count as f64;
            let denom = 1.0 + dist_sq;
            value += weight / denom;
            let coeff = weight * -2.0 / (denom * denom);
            for k in 0..dim {
                grow[k] += coeff * diff[k];
            }
        }
    }
    Ok(TermLoss { value, grad })
}

/// The full objective: `L = L_S + lambda_c * L_C + lambda_g * L_G`.
///
/// Terms with a zero weight are skipped outright, so e.g. `lambda_g = 0`
/// reproduces the softmax-plus-center composition bit for bit.
pub fn joint_loss(
    features: &Matrix,
    labels: &[usize],
    logits: &Matrix,
    bank: &CenterBank,
    weights: &LossWeights,
) -> Result<JointLoss> {
    let softmax = softmax_cross_entropy(logits, labels)?;
    let mut value = softmax.value;
    let mut grad_features = Matrix::zeros(features.rows(), features.cols());
    if weights.lambda_c != 0.0 {
        let center = center_loss(features, labels, bank)?;
        value += weights.lambda_c * center.value;
        grad_features = grad_features.add(&center.grad.scale(weights.lambda_c))?;
    }
    if weights.lambda_g != 0.0 {
        let git = git_term(features, labels, bank)?;
        value += weights.lambda_g * git.value;
        grad_features = grad_features.add(&git.grad.scale(weights.lambda_g))?;
    }
    // Shape agreement between features and bank is otherwise unchecked when
    // both auxiliary terms are off.
    if weights.lambda_c == 0.0 && weights.lambda_g == 0.0 {
        check_features(features, labels, bank)?;
    }
    Ok(JointLoss {
        value,
        grad_features,
        grad_logits: softmax.grad,
    })
}
