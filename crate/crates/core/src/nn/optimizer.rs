//! SGD, SGD with momentum, and Adam.

use super::matrix::Matrix;
use super::network::{Gradients, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd_momentum" | "momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (expected sgd|sgd_momentum|adam)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Training hyperparameters. The defaults are the best-performing setting:
/// plain SGD with learning rate 0.1 and no dropout, batches of 64, at most
/// 50 epochs with patience 5 on a 10% validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            validation_fraction: 0.1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return Err(Error::Config(
                "validation_fraction must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-layer optimizer slots; empty until the first step.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    velocity: Vec<(Matrix, Vec<f64>)>, // momentum, or Adam first moment
    second: Vec<(Matrix, Vec<f64>)>,   // Adam second moment
    t: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_slots(&mut self, params: &ModelParams, with_second: bool) {
        if self.velocity.is_empty() {
            self.velocity = params
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.weights.rows(), l.weights.cols()),
                        vec![0.0; l.bias.len()],
                    )
                })
                .collect();
        }
        if with_second && self.second.is_empty() {
            self.second = self.velocity.clone();
        }
    }
}

/// One parameter update in place.
///
/// * sgd: `θ ← θ − η·g`
/// * sgd_momentum: `v ← μ·v + g`, `θ ← θ − η·v`
/// * adam: bias-corrected first/second-moment update.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
) {
    debug_assert_eq!(grads.layers.len(), params.layers.len());
    let lr = config.learning_rate;
    match config.optimizer {
        OptimizerKind::Sgd => {
            for (layer, (gw, gb)) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.weights.data_mut().iter_mut().zip(gw.data()) {
                    *w -= lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
        }
        OptimizerKind::SgdMomentum => {
            state.ensure_slots(params, false);
            let mu = config.momentum;
            for ((layer, (gw, gb)), (vw, vb)) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut state.velocity)
            {
                for ((w, g), v) in layer
                    .weights
                    .data_mut()
                    .iter_mut()
                    .zip(gw.data())
                    .zip(vw.data_mut())
                {
                    *v = mu * *v + g;
                    *w -= lr * *v;
                }
                for ((b, g), v) in layer.bias.iter_mut().zip(gb).zip(vb) {
                    *v = mu * *v + g;
                    *b -= lr * *v;
                }
            }
        }
        OptimizerKind::Adam => {
            state.ensure_slots(params, true);
            state.t += 1;
            let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_epsilon);
            let c1 = 1.0 - b1.powi(state.t as i32);
            let c2 = 1.0 - b2.powi(state.t as i32);
            for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut state.velocity)
                .zip(&mut state.second)
            {
                for (((w, g), m), v) in layer
                    .weights
                    .data_mut()
                    .iter_mut()
                    .zip(gw.data())
                    .zip(mw.data_mut())
                    .zip(vw.data_mut())
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
                for (((b, g), m), v) in layer.bias.iter_mut().zip(gb).zip(mb).zip(vb) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *b -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}
