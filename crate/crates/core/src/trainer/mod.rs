//! Reference classifier: a small MLP over 16×16 RGB features, trained with one of several
//! robustness-oriented techniques.

mod config;
mod loss;
mod mlp;
mod pgd;
mod train;

pub use config::{PgdParams, Technique, TrainConfig};
pub use loss::{cross_entropy, log_sum_exp, loss_and_grad, loss_and_grad_with_adversarial, mean_cross_entropy, softmax, LossGrad, Sample};
pub use mlp::{argmax, ForwardCache, Layer, MlpModel};
pub use pgd::{input_gradient, pgd_attack};
pub use train::{
    accuracy, accuracy_gate_flagged, default_grid, run_grid, strength_grid, train, write_log_csv, EpochLog,
    GridRun, TrainOutcome, ACCURACY_GATE_PP,
};

/// Hidden width of the default reference architecture.
pub const DEFAULT_HIDDEN: usize = 64;

/// Default layer sizes: features → hidden → classes.
pub fn default_layer_sizes(num_classes: usize) -> Vec<usize> {
    vec![crate::preprocess::FEATURE_LEN, DEFAULT_HIDDEN, num_classes]
}
