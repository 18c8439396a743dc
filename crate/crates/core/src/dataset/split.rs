//! Video-level train/val/test assignment.

use std::collections::BTreeMap;

use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Assigns each video id to a split with probabilities `fractions` (train, val, test).
///
/// The assignment depends only on `(seed, video_id)`, so every shot of a video lands in the
/// same split and adding videos never moves existing ones.
pub fn split_by_video<S: AsRef<str>>(
    video_ids: &[S],
    fractions: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::BadFractions(format!("{fractions:?} must each lie in [0, 1]")));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(format!("{fractions:?} must sum to 1")));
    }
    let cut_train = fractions[0];
    let cut_val = fractions[0] + fractions[1];
    Ok(video_ids
        .iter()
        .map(|id| {
            let id = id.as_ref();
            let h = derive_seed(&[b"split", &seed.to_le_bytes(), id.as_bytes()]);
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            let split = if u < cut_train {
                Split::Train
            } else if u < cut_val {
                Split::Val
            } else {
                Split::Test
            };
            (id.to_string(), split)
        })
        .collect())
}
