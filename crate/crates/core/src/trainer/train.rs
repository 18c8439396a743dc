//! Minibatch SGD, hyperparameter grids and the accuracy-preservation gate.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::trainer::config::{Technique, TrainConfig};
use crate::trainer::loss::{loss_and_grad, Sample};
use crate::trainer::mlp::{argmax, MlpModel};

/// Largest tolerated validation-accuracy drop versus baseline, in percentage points.
pub const ACCURACY_GATE_PP: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation set was supplied.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: Vec<EpochLog>,
}

/// Fraction of `samples` whose argmax prediction equals the label.
pub fn accuracy(model: &MlpModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    let mut correct = 0usize;
    for s in samples {
        if argmax(&model.forward(&s.features)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains a copy of `model_init`. Each epoch visits the training set in an order drawn from a
/// stream keyed on `(config.seed, epoch)`; the run is single-threaded and bit-reproducible.
pub fn train(model_init: &MlpModel, train_set: &[Sample], val_set: Option<&[Sample]>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = model_init.clone();
    let mut log = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, log });
    }
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let mut velocity = model.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = rng::substream(config.seed, &format!("shuffle/{epoch}"));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let step = loss_and_grad(&model, &batch, config).map_err(|e| match e {
                Error::NonFiniteLoss(m) => Error::NonFiniteLoss(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            loss_sum += step.loss * batch.len() as f64;
            for ((p, v), g) in model.params_mut().zip(velocity.params_mut()).zip(step.grad.params()) {
                *v = config.momentum * *v + g;
                *p -= config.lr * *v;
            }
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch {b}: parameters diverged (lr {})",
                    config.lr
                )));
            }
        }
        let val_accuracy = val_set.map(|v| accuracy(&model, v)).transpose()?;
        log.push(EpochLog { epoch: epoch + 1, train_loss: loss_sum / train_set.len() as f64, val_accuracy });
    }
    Ok(TrainOutcome { model, log })
}

pub fn write_log_csv(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_accuracy"])?;
    for e in log {
        let val = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), val])?;
    }
    w.flush()?;
    Ok(())
}

/// True when `technique_acc` is more than [`ACCURACY_GATE_PP`] points below `baseline_acc`.
/// Accuracies are fractions in `[0, 1]`.
pub fn accuracy_gate_flagged(baseline_acc: f64, technique_acc: f64) -> bool {
    (baseline_acc - technique_acc) * 100.0 > ACCURACY_GATE_PP + 1e-9
}

/// The five technique-strength values explored per technique. For `label_smoothing` these are
/// smoothing masses; for `baseline` and `sigmoid_multiclass`, which have no strength, they are
/// learning-rate multipliers.
pub fn strength_grid(technique: Technique) -> [f64; 5] {
    match technique {
        Technique::Baseline | Technique::SigmoidMulticlass => [0.5, 0.75, 1.0, 1.5, 2.0],
        Technique::WeightDecay => [1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
        Technique::LabelSmoothing => [0.05, 0.1, 0.15, 0.2, 0.3],
        Technique::CleanLogitPairing => [0.003, 0.01, 0.03, 0.1, 0.3],
        Technique::CleanLogitSqueezing => [0.001, 0.003, 0.01, 0.03, 0.1],
        Technique::AdversarialLogitPairing => [0.03, 0.1, 0.3, 1.0, 3.0],
    }
}

/// 25 configurations: 5 strengths × 5 seeds, derived from `base`.
pub fn default_grid(technique: Technique, base: &TrainConfig) -> Vec<TrainConfig> {
    let mut out = Vec::with_capacity(25);
    for strength in strength_grid(technique) {
        for s in 0..5u64 {
            let mut c = TrainConfig { technique, seed: base.seed.wrapping_add(s), ..base.clone() };
            match technique {
                Technique::Baseline | Technique::SigmoidMulticlass => {
                    c.lambda = 0.0;
                    c.lr = base.lr * strength;
                }
                Technique::LabelSmoothing => {
                    c.lambda = 0.0;
                    c.label_smoothing = strength;
                }
                _ => c.lambda = strength,
            }
            if technique == Technique::AdversarialLogitPairing {
                c.pgd = Some(base.pgd.unwrap_or_default());
            } else {
                c.pgd = None;
            }
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub config: TrainConfig,
    pub outcome: TrainOutcome,
    pub val_accuracy: f64,
}

/// Trains every configuration independently; runs execute in parallel and results keep the
/// order of `configs`. Each run initializes its model from its own seed.
pub fn run_grid(
    layer_sizes: &[usize],
    configs: &[TrainConfig],
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<Vec<GridRun>> {
    configs
        .par_iter()
        .map(|c| {
            let init = MlpModel::init(layer_sizes, c.seed)?;
            let outcome = train(&init, train_set, Some(val_set), c)?;
            let val_accuracy = accuracy(&outcome.model, val_set)?;
            Ok(GridRun { config: c.clone(), outcome, val_accuracy })
        })
        .collect()
}
