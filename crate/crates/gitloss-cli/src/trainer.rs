//! The training loop shared by `train` and `sweep`.
//!
//! Per batch, in order: forward pass, joint loss, backward pass, optimizer
//! step, center update. Centers live outside the optimizer. Everything is
//! deterministic given the run seed: initialization draws from one derived
//! stream, batch shuffling from another keyed by epoch.

use gitloss::data::{batches, BatchPlan, Dataset};
use gitloss::loss::{joint_loss, CenterBank, LossWeights};
use gitloss::metrics::{distance_report, EmbeddingSet};
use gitloss::network::{init, MlpConfig, MlpState};
use gitloss::optim::{Adam, AdamConfig, LrSchedule, Optimizer, Sgd, SgdConfig};
use gitloss::rng::SeededRng;
use gitloss::tensor::Matrix;
use gitloss::{Error, Result};

use crate::config::OptimizerKind;

/// Rows of the eval split processed per forward pass during evaluation.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub mlp: MlpConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// One line of the epoch log. Accuracies are percentages.
#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc_pct: f64,
    pub val_acc_pct: f64,
    pub inter_dist: f64,
    pub intra_dist: f64,
}

impl EpochRow {
    pub const CSV_HEADER: &'static str =
        "epoch,mean_loss,train_acc_pct,val_acc_pct,inter_dist,intra_dist";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.mean_loss,
            self.train_acc_pct,
            self.val_acc_pct,
            self.inter_dist,
            self.intra_dist
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<EpochRow>,
    pub state: MlpState,
    pub bank: CenterBank,
    /// Eval-split embeddings from the final model.
    pub embeddings: EmbeddingSet,
    /// Eval metrics of the final model, also valid when `epochs == 0`.
    pub final_val_acc_pct: f64,
    pub final_inter_dist: f64,
    pub final_intra_dist: f64,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0usize;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn correct_count(logits: &Matrix, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count()
}

struct EvalMetrics {
    acc_pct: f64,
    inter_dist: f64,
    intra_dist: f64,
    embeddings: EmbeddingSet,
}

/// Forward the eval split in chunks; returns accuracy, the distance report,
/// and the embedded features.
fn evaluate(settings: &TrainSettings, state: &MlpState, val: &Dataset) -> Result<EvalMetrics> {
    let n = val.len();
    let dim = settings.mlp.feature_dim;
    let mut features = Matrix::zeros(n, dim);
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let cols = val.images.cols();
        let chunk = Matrix::new(
            end - start,
            cols,
            val.images.as_slice()[start * cols..end * cols].to_vec(),
        )?;
        let cache = state.forward(settings.mlp.activation, &chunk)?;
        correct += correct_count(&cache.logits, &val.labels[start..end]);
        for (offset, i) in (start..end).enumerate() {
            features
                .row_mut(i)
                .copy_from_slice(cache.features.row(offset));
        }
        start = end;
    }
    let embeddings = EmbeddingSet::new(features, val.labels.clone())?;
    let report = distance_report(&embeddings)?;
    Ok(EvalMetrics {
        acc_pct: 100.0 * correct as f64 / n as f64,
        inter_dist: report.inter_dist,
        intra_dist: report.intra_dist,
        embeddings,
    })
}

/// Trains one model from scratch and evaluates it after every epoch.
///
/// `on_epoch` fires once per completed epoch with the fresh log row, so
/// callers can stream the CSV to disk.
pub fn train_run(
    train: &Dataset,
    val: &Dataset,
    settings: &TrainSettings,
    mut on_epoch: impl FnMut(&EpochRow),
) -> Result<TrainOutcome> {
    settings.mlp.validate()?;
    if train.images.cols() != settings.mlp.input_dim {
        return Err(Error::Parameter(format!(
            "training data has {} columns but the network expects {}",
            train.images.cols(),
            settings.mlp.input_dim
        )));
    }
    if settings.batch_size > train.len() {
        return Err(Error::Parameter(format!(
            "batch size {} exceeds the {}-sample training set",
            settings.batch_size,
            train.len()
        )));
    }

    let base_rng = SeededRng::new(settings.seed);
    let mut init_rng = base_rng.derive(0);
    let mut state = init(&settings.mlp, &mut init_rng)?;
    let mut bank = CenterBank::zeros(settings.mlp.n_classes, settings.mlp.feature_dim);

    let shapes = settings.mlp.param_shapes();
    let mut optimizer = match settings.optimizer {
        OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(
            SgdConfig {
                lr: settings.schedule.initial,
                momentum: settings.momentum,
            },
            &shapes,
        )?),
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(
            AdamConfig::with_lr(settings.schedule.initial),
            &shapes,
        )?),
    };

    let mut rows: Vec<EpochRow> = Vec::with_capacity(settings.epochs);
    let mut last_eval: Option<EvalMetrics> = None;
    for epoch in 0..settings.epochs {
        optimizer.set_lr(settings.schedule.lr_at(epoch));
        let plan = BatchPlan {
            batch_size: settings.batch_size,
            seed: settings.seed,
            epoch: epoch as u64,
        };
        let mut loss_sum = 0.0;
        let mut train_correct = 0usize;
        for (batch_idx, (images, labels)) in batches(train, &plan)?.enumerate() {
            let mut step = |state: &mut MlpState, bank: &mut CenterBank| -> Result<f64> {
                let cache = state.forward(settings.mlp.activation, &images)?;
                let joint = joint_loss(
                    &cache.features,
                    &labels,
                    &cache.logits,
                    bank,
                    &settings.weights,
                )?;
                if !joint.value.is_finite() {
                    return Err(Error::NonFinite("loss".into()));
                }
                train_correct += correct_count(&cache.logits, &labels);
                let grads = state.backward(
                    settings.mlp.activation,
                    &cache,
                    &joint.grad_logits,
                    &joint.grad_features,
                )?;
                let mut params = state.params_mut();
                let grad_refs: Vec<&Matrix> = grads.grads.iter().collect();
                optimizer.step(&mut params, &grad_refs)?;
                bank.update_centers(&cache.features, &labels, settings.weights.alpha)?;
                Ok(joint.value)
            };
            match step(&mut state, &mut bank) {
                Ok(value) => loss_sum += value,
                // Divergence shows up as a non-finite value somewhere in the
                // batch; name the batch so the run is diagnosable.
                Err(Error::NonFinite(what)) => {
                    return Err(Error::NonFinite(format!(
                        "{what} at epoch {epoch}, batch {batch_idx} (lambda_c={}, lambda_g={}, lr={})",
                        settings.weights.lambda_c,
                        settings.weights.lambda_g,
                        settings.schedule.lr_at(epoch)
                    )));
                }
                Err(other) => return Err(other),
            }
        }

        let eval = evaluate(settings, &state, val)?;
        let row = EpochRow {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            train_acc_pct: 100.0 * train_correct as f64 / train.len() as f64,
            val_acc_pct: eval.acc_pct,
            inter_dist: eval.inter_dist,
            intra_dist: eval.intra_dist,
        };
        on_epoch(&row);
        rows.push(row);
        last_eval = Some(eval);
    }

    // With zero epochs the final model is the untouched initialization.
    let eval = match last_eval {
        Some(eval) => eval,
        None => evaluate(settings, &state, val)?,
    };
    Ok(TrainOutcome {
        rows,
        state,
        bank,
        final_val_acc_pct: eval.acc_pct,
        final_inter_dist: eval.inter_dist,
        final_intra_dist: eval.intra_dist,
        embeddings: eval.embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gitloss::data::make_blobs;
    use gitloss::network::Activation;

    fn blob_settings(epochs: usize, seed: u64) -> TrainSettings {
        TrainSettings {
            mlp: MlpConfig {
                input_dim: 4,
                hidden_dims: vec![16],
                feature_dim: 2,
                n_classes: 10,
                activation: Activation::Relu,
            },
            weights: LossWeights::new(0.01, 0.01, 0.5).unwrap(),
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            schedule: LrSchedule::constant(0.01),
            epochs,
            batch_size: 20,
            seed,
        }
    }

    fn blob_data(seed: u64) -> (Dataset, Dataset) {
        // One blob draw split two ways, so both sides share class centers.
        let mut rng = SeededRng::new(seed);
        let (all, _) = make_blobs(&mut rng, 3, 90, 4, 0.8, 0.05).unwrap();
        let split = |keep_val: bool| -> Dataset {
            let indices: Vec<usize> = (0..all.len())
                .filter(|i| (i % 3 == 0) == keep_val)
                .collect();
            let cols = all.images.cols();
            let mut data = Vec::with_capacity(indices.len() * cols);
            let mut labels = Vec::with_capacity(indices.len());
            for &i in &indices {
                data.extend_from_slice(all.images.row(i));
                labels.push(all.labels[i]);
            }
            Dataset {
                images: gitloss::Matrix::new(indices.len(), cols, data).unwrap(),
                labels,
                n_classes: all.n_classes,
                image_shape: all.image_shape,
            }
        };
        (split(false), split(true))
    }

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        let (train, val) = blob_data(1);
        let outcome = train_run(&train, &val, &blob_settings(25, 7), |_| {}).unwrap();
        assert_eq!(outcome.rows.len(), 25);
        assert!(
            outcome.final_val_acc_pct > 90.0,
            "val acc {}",
            outcome.final_val_acc_pct
        );
    }

    #[test]
    fn zero_epochs_still_evaluates_the_init() {
        let (train, val) = blob_data(2);
        let outcome = train_run(&train, &val, &blob_settings(0, 7), |_| {}).unwrap();
        assert!(outcome.rows.is_empty());
        assert!(outcome.final_val_acc_pct.is_finite());
        assert_eq!(outcome.embeddings.len(), val.len());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (train, val) = blob_data(3);
        let settings = blob_settings(5, 11);
        let a = train_run(&train, &val, &settings, |_| {}).unwrap();
        let b = train_run(&train, &val, &settings, |_| {}).unwrap();
        assert_eq!(a.state, b.state);
        let rows_a: Vec<String> = a.rows.iter().map(|r| r.to_csv_line()).collect();
        let rows_b: Vec<String> = b.rows.iter().map(|r| r.to_csv_line()).collect();
        assert_eq!(rows_a, rows_b);
        let c = train_run(
            &train,
            &val,
            &TrainSettings {
                seed: 12,
                ..settings
            },
            |_| {},
        )
        .unwrap();
        assert_ne!(a.state, c.state, "different seeds should diverge");
    }

    #[test]
    fn oversized_batches_are_rejected() {
        let (train, val) = blob_data(4);
        let mut settings = blob_settings(1, 0);
        settings.batch_size = train.len() + 1;
        assert!(train_run(&train, &val, &settings, |_| {}).is_err());
    }

    #[test]
    fn diverging_losses_name_the_batch() {
        let (train, val) = blob_data(5);
        let mut settings = blob_settings(10, 0);
        // An absurd SGD rate forces an overflow (Adam's updates are bounded
        // by the rate, so it cannot blow up this way). Leaky relu keeps
        // units alive so the blow-up cannot stall in a dead-relu fixed point.
        settings.optimizer = OptimizerKind::Sgd;
        settings.mlp.activation = Activation::LeakyRelu(0.5);
        settings.schedule = LrSchedule::constant(1e8);
        let err = train_run(&train, &val, &settings, |_| {}).unwrap_err();
        match err {
            Error::NonFinite(msg) => {
                assert!(msg.contains("batch"), "diagnostic should name the batch: {msg}")
            }
            other => panic!("expected a non-finite diagnostic, got {other}"),
        }
    }
}
