//! Seeded synthetic rating data with long-tailed activity, skewed ratings and
//! a greenness distribution centered on a chosen mode.
//!
//! Users and items are drawn from independent Zipf laws over seeded random
//! rank permutations, duplicate pairs are rejected. Ratings follow the
//! configured pmf exactly in distribution. With `rating_signal = 0` they are
//! i.i.d.; a positive value correlates them through latent user and item
//! effects (a Gaussian copula), which gives models something to learn while
//! keeping the same marginal. Greenness is independent of ratings.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatsNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::footprint::{calibrate, raw_greenness, GreennessCalibration, GreennessScale, GreennessTable};

/// Placeholder date attached to every generated interaction (2020-01-01).
pub const PLACEHOLDER_TIMESTAMP: i64 = 1_577_836_800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub item_popularity_exponent: f64,
    pub user_activity_exponent: f64,
    /// Probabilities of ratings 0, 1, …, 5.
    pub rating_pmf: [f64; 6],
    /// Correlation carried by latent user/item effects, in `[0, 1)`.
    pub rating_signal: f64,
    pub greenness_mode: f64,
    pub greenness_spread: f64,
    /// Log-space mean and standard deviation of CO₂-eq (kg); item footprints
    /// span the `±3σ` band of this lognormal.
    pub co2_lognormal: (f64, f64),
    pub seed: u64,
    /// Rejection attempts allowed per requested interaction.
    pub max_attempts_per_interaction: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self::recipe_like(7)
    }
}

impl SynthParams {
    /// 2,000 users, 400 items, 20,000 ratings with 77% fives.
    pub fn recipe_like(seed: u64) -> Self {
        Self {
            n_users: 2000,
            n_items: 400,
            n_interactions: 20_000,
            item_popularity_exponent: 1.1,
            user_activity_exponent: 1.6,
            rating_pmf: [0.01, 0.01, 0.02, 0.04, 0.15, 0.77],
            rating_signal: 0.5,
            greenness_mode: 3.0,
            greenness_spread: 1.3,
            co2_lognormal: (-0.5, 0.8),
            seed,
            max_attempts_per_interaction: 50,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "recipe-like" | "recipe_like" | "default" => Ok(Self::recipe_like(seed)),
            "tiny" => Ok(Self {
                n_users: 200,
                n_items: 60,
                n_interactions: 2000,
                ..Self::recipe_like(seed)
            }),
            other => Err(Error::InvalidParameter(format!("unknown synth preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_users == 0 || self.n_items == 0 || self.n_interactions == 0 {
            return bad("n_users, n_items and n_interactions must be positive".into());
        }
        if self.n_interactions as u128 > self.n_users as u128 * self.n_items as u128 {
            return bad(format!(
                "n_interactions {} exceeds n_users * n_items = {}",
                self.n_interactions,
                self.n_users * self.n_items
            ));
        }
        if !(self.item_popularity_exponent > 0.0 && self.user_activity_exponent > 0.0) {
            return bad("Zipf exponents must be > 0".into());
        }
        if self.rating_pmf.iter().any(|&p| !(p >= 0.0)) || (self.rating_pmf.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("rating_pmf must be non-negative and sum to 1, got {:?}", self.rating_pmf));
        }
        if !(0.0..1.0).contains(&self.rating_signal) {
            return bad("rating_signal must lie in [0, 1)".into());
        }
        if !(0.0..=5.0).contains(&self.greenness_mode) || !(self.greenness_spread > 0.0) {
            return bad("greenness_mode must lie in [0,5] and greenness_spread be > 0".into());
        }
        if !(self.co2_lognormal.1 > 0.0 && self.co2_lognormal.0.is_finite()) {
            return bad("co2_lognormal sigma must be > 0".into());
        }
        if self.max_attempts_per_interaction == 0 {
            return bad("max_attempts_per_interaction must be >= 1".into());
        }
        Ok(())
    }
}

fn zipf_ranks(n: usize, exponent: f64) -> Result<Zipf<f64>> {
    Zipf::new(n as f64, exponent).map_err(|e| Error::InvalidParameter(format!("zipf: {e}")))
}

/// Smallest rating whose cumulative probability reaches `u`.
fn pmf_quantile(cdf: &[f64; 6], u: f64) -> f64 {
    cdf.iter().position(|&c| u <= c).unwrap_or(5) as f64
}

/// Generates interactions and the matching greenness table.
pub fn generate(params: &SynthParams) -> Result<(Dataset, GreennessTable)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut user_of_rank: Vec<usize> = (0..params.n_users).collect();
    let mut item_of_rank: Vec<usize> = (0..params.n_items).collect();
    user_of_rank.shuffle(&mut rng);
    item_of_rank.shuffle(&mut rng);
    let user_zipf = zipf_ranks(params.n_users, params.user_activity_exponent)?;
    let item_zipf = zipf_ranks(params.n_items, params.item_popularity_exponent)?;

    let mut seen = HashSet::with_capacity(params.n_interactions);
    let mut pairs = Vec::with_capacity(params.n_interactions);
    let budget = params.n_interactions.saturating_mul(params.max_attempts_per_interaction);
    let mut attempts = 0usize;
    while pairs.len() < params.n_interactions {
        if attempts == budget {
            return Err(Error::Generation(format!(
                "only {} distinct pairs after {attempts} draws; request fewer interactions than {}",
                pairs.len(),
                params.n_interactions
            )));
        }
        attempts += 1;
        let u = user_of_rank[user_zipf.sample(&mut rng) as usize - 1];
        let i = item_of_rank[item_zipf.sample(&mut rng) as usize - 1];
        if seen.insert((u, i)) {
            pairs.push((u, i));
        }
    }

    let user_effect: Vec<f64> = (0..params.n_users).map(|_| StandardNormal.sample(&mut rng)).collect();
    let item_effect: Vec<f64> = (0..params.n_items).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut cdf = [0.0; 6];
    let mut acc = 0.0;
    for (c, p) in cdf.iter_mut().zip(params.rating_pmf) {
        acc += p;
        *c = acc;
    }
    cdf[5] = 1.0;
    let phi = StatsNormal::standard();
    let (shared, own) = ((params.rating_signal / 2.0).sqrt(), (1.0 - params.rating_signal).sqrt());
    let rows: Vec<(String, String, f64, Option<i64>)> = pairs
        .iter()
        .map(|&(u, i)| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let z = shared * (user_effect[u] + item_effect[i]) + own * eps;
            let rating = pmf_quantile(&cdf, phi.cdf(z));
            (format!("u{u:05}"), format!("i{i:05}"), rating, Some(PLACEHOLDER_TIMESTAMP))
        })
        .collect();
    let (dataset, _) = Dataset::from_raw(rows)?;

    // greenness targets are mapped to CO₂-eq inside the lognormal's ±3σ band,
    // then rescored by min-max calibration over every generated item
    let (mu, sigma) = params.co2_lognormal;
    let raw_hi = raw_greenness((mu - 3.0 * sigma).exp())?;
    let raw_lo = raw_greenness((mu + 3.0 * sigma).exp())?;
    let target = Normal::new(params.greenness_mode, params.greenness_spread).expect("validated spread");
    let co2_by_item: Vec<f64> = (0..params.n_items)
        .map(|_| {
            let g = target.sample(&mut rng).clamp(0.0, 5.0);
            let raw = raw_lo + g / 5.0 * (raw_hi - raw_lo);
            1.0 / raw.exp_m1()
        })
        .collect();
    let co2: Vec<Option<f64>> = dataset
        .items()
        .ids()
        .iter()
        .map(|id| {
            let ix: usize = id[1..].parse().expect("generated id");
            Some(co2_by_item[ix])
        })
        .collect();
    // a single generated value cannot span a range; fall back to the band
    let calibration = calibrate(&co2_by_item).or_else(|_| GreennessCalibration::new(raw_lo, raw_hi))?;
    let table = GreennessTable::from_co2_with(&co2, GreennessScale::Calibrated(calibration))?;
    Ok((dataset, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthParams {
        SynthParams::preset("tiny", 3).unwrap()
    }

    #[test]
    fn deterministic() {
        let (a, ga) = generate(&tiny()).unwrap();
        let (b, gb) = generate(&tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = generate(&SynthParams { seed: 4, ..tiny() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pmf_quantile_edges() {
        let cdf = [0.1, 0.1, 0.3, 0.3, 0.5, 1.0];
        assert_eq!(pmf_quantile(&cdf, 0.0), 0.0);
        assert_eq!(pmf_quantile(&cdf, 0.1), 0.0);
        assert_eq!(pmf_quantile(&cdf, 0.2), 2.0);
        assert_eq!(pmf_quantile(&cdf, 0.99), 5.0);
    }

    #[test]
    fn too_dense_request_fails() {
        let p = SynthParams {
            n_users: 5,
            n_items: 5,
            n_interactions: 25,
            max_attempts_per_interaction: 2,
            ..tiny()
        };
        assert!(matches!(generate(&p), Err(Error::Generation(_))));
        let p = SynthParams {
            n_interactions: 26,
            ..p
        };
        assert!(matches!(generate(&p), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn invalid_pmf_rejected() {
        let p = SynthParams {
            rating_pmf: [0.5, 0.5, 0.5, 0.0, 0.0, 0.0],
            ..tiny()
        };
        assert!(generate(&p).is_err());
    }
}
