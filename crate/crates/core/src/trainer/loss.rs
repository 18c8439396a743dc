//! Training objectives and their exact gradients.

use crate::error::{Error, Result};
use crate::trainer::config::{Technique, TrainConfig};
use crate::trainer::mlp::MlpModel;
use crate::trainer::pgd::pgd_attack;

/// One featurized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Loss value split into its data term and the technique's extra term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Mean cross-entropy (smoothed, binary or clean+adversarial, depending on the technique).
    pub base: f64,
    /// Regularizer or pairing term; zero for techniques without one.
    pub technique_term: f64,
    pub grad: MlpModel,
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Softmax cross-entropy of one example.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

/// Cross-entropy and its gradient with respect to the logits, against `target` probabilities.
fn soft_ce(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let loss = lse - logits.iter().zip(target).map(|(z, t)| z * t).sum::<f64>();
    let d = logits.iter().zip(target).map(|(z, t)| (z - lse).exp() - t).collect();
    (loss, d)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_batch(model: &MlpModel, batch: &[&Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let k = model.num_classes();
    for s in batch {
        if s.label >= k {
            return Err(Error::LabelOutOfRange { label: s.label, num_classes: k });
        }
        if s.features.len() != model.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} features, model expects {}",
                s.features.len(),
                model.input_len()
            )));
        }
    }
    Ok(())
}

/// Loss and gradient for `batch`; adversarial inputs are generated with PGD when the
/// technique needs them.
pub fn loss_and_grad(model: &MlpModel, batch: &[&Sample], config: &TrainConfig) -> Result<LossGrad> {
    check_batch(model, batch)?;
    let adv = match (config.technique, &config.pgd) {
        (Technique::AdversarialLogitPairing, Some(pgd)) => batch
            .iter()
            .map(|s| pgd_attack(model, &s.features, s.label, pgd))
            .collect::<Result<Vec<_>>>()?,
        (Technique::AdversarialLogitPairing, None) => {
            return Err(Error::Config("adversarial_logit_pairing requires pgd parameters".into()))
        }
        _ => Vec::new(),
    };
    loss_and_grad_with_adversarial(model, batch, &adv, config)
}

/// Like [`loss_and_grad`] but with caller-supplied adversarial inputs, treated as constants.
pub fn loss_and_grad_with_adversarial(
    model: &MlpModel,
    batch: &[&Sample],
    adversarial: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<LossGrad> {
    check_batch(model, batch)?;
    let n = batch.len() as f64;
    let k = model.num_classes();
    let lambda = config.lambda;
    let mut grad = model.zeros_like();
    let mut base = 0.0;
    let mut term = 0.0;

    match config.technique {
        Technique::Baseline | Technique::WeightDecay | Technique::LabelSmoothing | Technique::CleanLogitSqueezing => {
            let eps = if config.technique == Technique::LabelSmoothing { config.label_smoothing } else { 0.0 };
            for s in batch {
                let cache = model.forward_cached(&s.features)?;
                let z = cache.logits();
                let target: Vec<f64> =
                    (0..k).map(|c| eps / k as f64 + if c == s.label { 1.0 - eps } else { 0.0 }).collect();
                let (ce, mut d) = soft_ce(z, &target);
                base += ce / n;
                d.iter_mut().for_each(|v| *v /= n);
                if config.technique == Technique::CleanLogitSqueezing {
                    term += lambda * z.iter().map(|v| v * v).sum::<f64>() / n;
                    for (dv, zv) in d.iter_mut().zip(z) {
                        *dv += 2.0 * lambda * zv / n;
                    }
                }
                model.backward(&cache, &d, &mut grad);
            }
            if config.technique == Technique::WeightDecay {
                for (layer, g) in model.layers.iter().zip(grad.layers.iter_mut()) {
                    term += 0.5 * lambda * layer.weights.iter().map(|w| w * w).sum::<f64>();
                    for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
                        *gw += lambda * w;
                    }
                }
            }
        }
        Technique::CleanLogitPairing => {
            let caches = batch.iter().map(|s| model.forward_cached(&s.features)).collect::<Result<Vec<_>>>()?;
            let mut dz: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
            for (s, cache) in batch.iter().zip(&caches) {
                let z = cache.logits();
                let ce = cross_entropy(z, s.label);
                base += ce / n;
                let mut d = softmax(z);
                d[s.label] -= 1.0;
                d.iter_mut().for_each(|v| *v /= n);
                dz.push(d);
            }
            let pairs = batch.len() / 2;
            for p in 0..pairs {
                let (a, b) = (2 * p, 2 * p + 1);
                let za = caches[a].logits();
                let zb = caches[b].logits();
                let diff: Vec<f64> = za.iter().zip(zb).map(|(x, y)| x - y).collect();
                term += lambda * diff.iter().map(|v| v * v).sum::<f64>() / pairs as f64;
                for (c, dv) in diff.iter().enumerate() {
                    let g = 2.0 * lambda * dv / pairs as f64;
                    dz[a][c] += g;
                    dz[b][c] -= g;
                }
            }
            for (cache, d) in caches.iter().zip(&dz) {
                model.backward(cache, d, &mut grad);
            }
        }
        Technique::AdversarialLogitPairing => {
            if adversarial.len() != batch.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} adversarial inputs for a batch of {}",
                    adversarial.len(),
                    batch.len()
                )));
            }
            for (s, x_adv) in batch.iter().zip(adversarial) {
                let clean = model.forward_cached(&s.features)?;
                let adv = model.forward_cached(x_adv)?;
                let (zc, za) = (clean.logits(), adv.logits());
                base += (cross_entropy(zc, s.label) + cross_entropy(za, s.label)) / n;
                let diff: Vec<f64> = zc.iter().zip(za).map(|(x, y)| x - y).collect();
                term += lambda * diff.iter().map(|v| v * v).sum::<f64>() / n;
                let mut dc = softmax(zc);
                dc[s.label] -= 1.0;
                let mut da = softmax(za);
                da[s.label] -= 1.0;
                for c in 0..k {
                    let pair = 2.0 * lambda * diff[c];
                    dc[c] = (dc[c] + pair) / n;
                    da[c] = (da[c] - pair) / n;
                }
                model.backward(&clean, &dc, &mut grad);
                model.backward(&adv, &da, &mut grad);
            }
        }
        Technique::SigmoidMulticlass => {
            for s in batch {
                let cache = model.forward_cached(&s.features)?;
                let z = cache.logits();
                let mut d = vec![0.0; k];
                for c in 0..k {
                    let y = if c == s.label { 1.0 } else { 0.0 };
                    base += (softplus(z[c]) - y * z[c]) / n;
                    d[c] = (sigmoid(z[c]) - y) / n;
                }
                model.backward(&cache, &d, &mut grad);
            }
        }
    }

    let loss = base + term;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("loss = {loss} (base {base}, technique term {term})")));
    }
    Ok(LossGrad { loss, base, technique_term: term, grad })
}

/// Mean softmax cross-entropy over `batch`.
pub fn mean_cross_entropy(model: &MlpModel, batch: &[&Sample]) -> Result<f64> {
    check_batch(model, batch)?;
    let mut total = 0.0;
    for s in batch {
        total += cross_entropy(&model.forward(&s.features)?, s.label);
    }
    Ok(total / batch.len() as f64)
}
