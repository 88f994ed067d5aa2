//! Greenness-aware recommender benchmarking.
//!
//! The crate covers the whole pipeline: ingesting rating data, turning
//! ingredient-level CO₂-eq into item greenness, filtering and splitting
//! interactions without strict cold start, training eight collaborative
//! filtering baselines, scoring ranked lists for accuracy (NDCG) and greenness
//! (GNDCG), and reranking lists with a tunable accuracy/greenness utility.

pub mod data;
pub mod error;
pub mod eval;
pub mod footprint;
pub mod models;
pub mod prep;
pub mod rerank;
pub mod synth;

mod numeric;

pub use data::{Dataset, IdIndex, Interaction, SparseRatingMatrix};
pub use error::{Error, Result};
pub use eval::{EvalReport, RankedList};
pub use footprint::{GreennessCalibration, GreennessTable};
pub use models::{Algorithm, Predict, Predictor};
pub use prep::SplitResult;
pub use rerank::TradeoffPoint;

/// Upper end of the rating and greenness scales.
pub const SCALE_MAX: f64 = 5.0;

/// Clamps a score onto the shared `[0, 5]` scale.
pub fn clip_score(x: f64) -> f64 {
    x.clamp(0.0, SCALE_MAX)
}
