//! Frame manifests, video-level splits, and the synthetic video generator.

mod manifest;
mod split;
pub mod synth;

pub use manifest::{FrameManifest, FramePair, ManifestEntry, Offset, Split, FRAME_RATE_HZ, MAX_OFFSET};
pub use split::split_by_video;
pub use synth::{generate_synthetic, render_shot, synthetic_manifest, SynthVideoConfig};
