//! Random and global-mean baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FitReport, Hyper, Model, Predictor, TrainStats};
use crate::data::SparseRatingMatrix;
use crate::error::Result;
use crate::SCALE_MAX;

/// Uniform `[0, 5]` draw that depends only on `(seed, user, item)`.
pub fn random_score(seed: u64, user: usize, item: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((user as u64) << 32) ^ item as u64);
    rng.random_range(0.0..=SCALE_MAX)
}

/// Random predictions. Training statistics are still recorded so the model
/// reports the same index space as every other predictor; an empty training
/// set is tolerated.
pub fn fit_random(train: &SparseRatingMatrix, seed: u64) -> Result<Predictor> {
    let stats = TrainStats {
        global_mean: train.global_mean().unwrap_or(SCALE_MAX / 2.0),
        user_means: train.user_means(),
        item_means: train.item_means(),
    };
    Ok(Predictor {
        hyper: Hyper::Random,
        seed,
        stats,
        model: Model::Random,
        report: FitReport::default(),
    })
}

pub fn fit_global_mean(train: &SparseRatingMatrix) -> Result<Predictor> {
    let stats = TrainStats::from_matrix(train)?;
    Ok(Predictor {
        hyper: Hyper::GlobalMean,
        seed: 0,
        stats,
        model: Model::GlobalMean,
        report: FitReport::default(),
    })
}
