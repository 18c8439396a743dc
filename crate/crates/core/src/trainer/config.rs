//! Training technique and hyperparameter configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Baseline,
    WeightDecay,
    LabelSmoothing,
    CleanLogitPairing,
    CleanLogitSqueezing,
    AdversarialLogitPairing,
    SigmoidMulticlass,
}

impl Technique {
    pub const ALL: [Technique; 7] = [
        Technique::Baseline,
        Technique::WeightDecay,
        Technique::LabelSmoothing,
        Technique::CleanLogitPairing,
        Technique::CleanLogitSqueezing,
        Technique::AdversarialLogitPairing,
        Technique::SigmoidMulticlass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Baseline => "baseline",
            Technique::WeightDecay => "weight_decay",
            Technique::LabelSmoothing => "label_smoothing",
            Technique::CleanLogitPairing => "clean_logit_pairing",
            Technique::CleanLogitSqueezing => "clean_logit_squeezing",
            Technique::AdversarialLogitPairing => "adversarial_logit_pairing",
            Technique::SigmoidMulticlass => "sigmoid_multiclass",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown technique `{s}`")))
    }
}

/// Projected-gradient attack settings; `epsilon` and `step_size` are in unit-interval units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdParams {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
}

impl Default for PgdParams {
    fn default() -> Self {
        Self { epsilon: 8.0 / 255.0, steps: 5, step_size: 2.5 / 255.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub technique: Technique,
    /// Weight of the technique's extra term.
    pub lambda: f64,
    /// Label-smoothing mass, used only by `label_smoothing`.
    pub label_smoothing: f64,
    /// Required for, and only for, `adversarial_logit_pairing`.
    pub pgd: Option<PgdParams>,
    pub lr: f64,
    /// Heavy-ball momentum coefficient; 0 gives plain SGD.
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            technique: Technique::Baseline,
            lambda: 0.0,
            label_smoothing: 0.0,
            pgd: None,
            lr: 0.02,
            momentum: 0.9,
            epochs: 40,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return bad("lr must be positive and momentum in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        match (self.technique, &self.pgd) {
            (Technique::AdversarialLogitPairing, None) => return bad("adversarial_logit_pairing requires pgd"),
            (Technique::AdversarialLogitPairing, Some(p)) => {
                if !(p.epsilon >= 0.0 && p.step_size >= 0.0) {
                    return bad("pgd epsilon and step_size must be >= 0");
                }
            }
            (_, Some(_)) => return bad("pgd is only valid for adversarial_logit_pairing"),
            (_, None) => {}
        }
        Ok(())
    }
}
