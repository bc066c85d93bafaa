//! Pseudo-label generation: dense-scorer contract, tiling, multi-scale
//! probability fusion, temperature softmax and best-versus-second-best
//! confidence.

mod maps;
mod ops;
pub mod resample;
mod scorer;
mod tiling;

pub use maps::{ClassVocabulary, ConfidenceMap, LabelMap, ProbMap, ScaleSet, ScoreMap, IGNORE};
pub use ops::{argmax_labels, bvsb, softmax_temperature};
pub use resample::{bicubic_resample, catmull_rom, resample_to};
pub use scorer::{
    make_synthetic_scorer, scale_file_name, DenseScorer, FileScorer, PatchView, SyntheticScorer,
};
pub use tiling::{fused_score, tile_offsets, tiled_score, tiled_score_at};

/// Default softmax temperature, equivalent to a logit scale of 100.
pub const DEFAULT_TAU: f32 = 0.01;
