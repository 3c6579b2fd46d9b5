//! Mini-batch training with a seeded validation split and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{forward, loss_grad_probs, ModelParams, NetworkTopology};
use super::optimizer::{optimizer_step, OptimizerState, TrainConfig};
use crate::features::FeatureBundle;
use crate::{Error, Result};

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Fraction of training examples whose argmax matched the gold label
    /// during the epoch's mini-batch passes.
    pub train_strict_acc: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub train_examples: usize,
    pub val_examples: usize,
}

/// Train a fresh model on labeled bundles.
///
/// The data is split once into train/validation by a shuffle seeded from
/// `config.seed` (initialization uses the same seed, so a (topology, data,
/// config) triple fully determines the returned parameters). Training runs
/// mini-batch epochs until `max_epochs` or until validation loss has not
/// improved for `patience` consecutive epochs, and returns the parameters
/// from the best-validation-loss epoch. Improvement means strictly lower.
pub fn train(
    topology: &NetworkTopology,
    bundles: &[FeatureBundle],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if bundles.is_empty() {
        return Err(Error::Config("no labeled training data".into()));
    }
    if bundles.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} bundles but {} labels",
            bundles.len(),
            labels.len()
        )));
    }

    let n = bundles.len();
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1).max(1);
    if n < 2 {
        return Err(Error::Config(
            "need at least 2 labeled examples to form a validation split".into(),
        ));
    }

    // The loop RNG is decorrelated from the initialization stream.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut params = ModelParams::init(topology.clone(), config.seed)?;
    let mut state = OptimizerState::new();

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        train_examples: train_idx.len(),
        val_examples: val_idx.len(),
    };
    let mut best_params = params.clone();
    let mut epochs_without_improvement = 0usize;

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<FeatureBundle> = chunk.iter().map(|&i| bundles[i].clone()).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();

            let (loss, grads, probs) =
                loss_grad_probs(&params, &batch, &batch_labels, true, &mut rng)?;
            loss_sum += loss;
            batches += 1;
            for (i, &label) in batch_labels.iter().enumerate() {
                let row = probs.row(i);
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                if best == label {
                    correct += 1;
                }
            }
            optimizer_step(&mut params, &grads, &mut state, config);
        }

        let val_loss = eval_loss(&params, bundles, labels, &val_idx, config.batch_size)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_strict_acc: correct as f64 / train_idx.len() as f64,
            val_loss,
        });

        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best_params = params.clone();
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    Ok((best_params, log))
}

fn eval_loss(
    params: &ModelParams,
    bundles: &[FeatureBundle],
    labels: &[usize],
    indices: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // never drawn from in eval mode
    let mut loss = 0.0;
    for chunk in indices.chunks(batch_size) {
        let batch: Vec<FeatureBundle> = chunk.iter().map(|&i| bundles[i].clone()).collect();
        let (probs, _) = forward(params, &batch, false, &mut rng)?;
        for (row, &i) in chunk.iter().enumerate() {
            let p = probs.get(row, labels[i]);
            loss -= p.ln();
        }
    }
    let loss = loss / indices.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Training("non-finite validation loss".into()));
    }
    Ok(loss)
}

/// Strict accuracy of `params` over the given bundles, for diagnostics.
pub fn strict_accuracy(
    params: &ModelParams,
    bundles: &[FeatureBundle],
    labels: &[usize],
) -> Result<f64> {
    let mut correct = 0usize;
    for (bundle, &label) in bundles.iter().zip(labels) {
        let (pred, _) = super::network::predict_index(params, bundle)?;
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / bundles.len() as f64)
}
