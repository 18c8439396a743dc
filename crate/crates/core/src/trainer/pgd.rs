//! L∞ projected gradient ascent on cross-entropy.

use crate::error::Result;
use crate::trainer::config::PgdParams;
use crate::trainer::loss::{cross_entropy, softmax};
use crate::trainer::mlp::MlpModel;

/// Gradient of the softmax cross-entropy with respect to the input.
pub fn input_gradient(model: &MlpModel, x: &[f64], label: usize) -> Result<Vec<f64>> {
    let cache = model.forward_cached(x)?;
    let mut d = softmax(cache.logits());
    d[label] -= 1.0;
    let mut scratch = model.zeros_like();
    Ok(model.backward(&cache, &d, &mut scratch))
}

/// Signed-gradient ascent from `x`, projected onto the ε-ball around `x` intersected with
/// `[0, 1]`. Returns the iterate with the highest cross-entropy seen, so the result never
/// scores below `x` itself.
pub fn pgd_attack(model: &MlpModel, x: &[f64], label: usize, params: &PgdParams) -> Result<Vec<f64>> {
    let ce = |v: &[f64]| -> Result<f64> { Ok(cross_entropy(&model.forward(v)?, label)) };
    let mut best_ce = ce(x)?;
    if params.epsilon == 0.0 || params.steps == 0 {
        return Ok(x.to_vec());
    }
    let lo: Vec<f64> = x.iter().map(|v| (v - params.epsilon).max(0.0)).collect();
    let hi: Vec<f64> = x.iter().map(|v| (v + params.epsilon).min(1.0)).collect();
    let mut cur = x.to_vec();
    let mut best = cur.clone();
    for _ in 0..params.steps {
        let g = input_gradient(model, &cur, label)?;
        for (i, v) in cur.iter_mut().enumerate() {
            let step = if g[i] > 0.0 {
                params.step_size
            } else if g[i] < 0.0 {
                -params.step_size
            } else {
                0.0
            };
            *v = (*v + step).clamp(lo[i], hi[i]);
        }
        let c = ce(&cur)?;
        if c > best_ce {
            best_ce = c;
            best.clone_from(&cur);
        }
    }
    Ok(best)
}
