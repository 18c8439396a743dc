//! Pearson correlation and the model-population correlation matrix between robustness types.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pearson {
    pub r: f64,
    pub r_squared: f64,
}

/// Sample Pearson correlation. Fails with `DegenerateVariance` when either series is constant,
/// since the coefficient is undefined there.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<Pearson> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::WrongArity { expected: 2, got: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(Pearson { r, r_squared: r * r })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub transform_a: String,
    pub transform_b: String,
    /// `None` when fewer than two models cover both transforms or a vector is constant.
    pub pearson_r: Option<f64>,
    pub n_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub transforms: Vec<String>,
    /// Row-major, `transforms.len()²` cells.
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<&CorrelationCell> {
        let i = self.transforms.iter().position(|t| t == a)?;
        let j = self.transforms.iter().position(|t| t == b)?;
        self.cells.get(i * self.transforms.len() + j)
    }
}

/// Pearson correlation between per-model robustness vectors for every transform pair.
/// `per_model` maps model id → transform name → robustness scalar.
pub fn correlation_matrix(per_model: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<CorrelationMatrix> {
    if per_model.len() < 2 {
        return Err(Error::WrongArity { expected: 2, got: per_model.len() });
    }
    let transforms: Vec<String> =
        per_model.values().flat_map(|m| m.keys().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut cells = Vec::with_capacity(transforms.len() * transforms.len());
    for a in &transforms {
        for b in &transforms {
            let (xs, ys): (Vec<f64>, Vec<f64>) = per_model
                .values()
                .filter_map(|m| Some((*m.get(a)?, *m.get(b)?)))
                .unzip();
            let pearson_r = match pearson_r(&xs, &ys) {
                Ok(p) => Some(p.r),
                Err(Error::DegenerateVariance | Error::WrongArity { .. }) => None,
                Err(e) => return Err(e),
            };
            cells.push(CorrelationCell { transform_a: a.clone(), transform_b: b.clone(), pearson_r, n_models: xs.len() });
        }
    }
    Ok(CorrelationMatrix { transforms, cells })
}
