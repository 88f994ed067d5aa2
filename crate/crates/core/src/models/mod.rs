//! The benchmarked recommenders behind one [`Predictor`] type.
//!
//! Every predictor is total over the training index space. When a user or
//! item has no training ratings the prediction falls back to the item mean,
//! then the user mean, then the global mean. The neighborhood models use the
//! same chain for cells without usable neighbors, with the roles of user and
//! item swapped for UserNN so that it stays the exact transpose of ItemNN.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};

pub mod artifact;
pub mod baseline;
pub mod cocluster;
pub mod grid;
pub mod knn;
pub mod slim;
pub mod svd;

pub use artifact::ModelArtifact;
pub use cocluster::{CoClusterModel, CoClusterParams};
pub use grid::{grid_search, grid_search_with, GridSearchResult, HyperGrid, Trial};
pub use knn::{KnnModel, KnnParams};
pub use slim::{SlimModel, SlimParams, SlimReport};
pub use svd::{SgdParams, SvdModel, SvdPpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Random,
    GlobalMean,
    #[serde(rename = "itemnn")]
    ItemNN,
    #[serde(rename = "usernn")]
    UserNN,
    Svd,
    #[serde(rename = "svdpp")]
    SvdPp,
    #[serde(rename = "coclustering")]
    CoClustering,
    Slim,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Random,
        Algorithm::GlobalMean,
        Algorithm::ItemNN,
        Algorithm::UserNN,
        Algorithm::Svd,
        Algorithm::SvdPp,
        Algorithm::CoClustering,
        Algorithm::Slim,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::GlobalMean => "global_mean",
            Algorithm::ItemNN => "itemnn",
            Algorithm::UserNN => "usernn",
            Algorithm::Svd => "svd",
            Algorithm::SvdPp => "svdpp",
            Algorithm::CoClustering => "coclustering",
            Algorithm::Slim => "slim",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace("++", "pp").replace('-', "_");
        let algo = match norm.as_str() {
            "random" => Algorithm::Random,
            "global_mean" | "globalmean" | "mean" => Algorithm::GlobalMean,
            "itemnn" | "item_nn" | "itemknn" => Algorithm::ItemNN,
            "usernn" | "user_nn" | "userknn" => Algorithm::UserNN,
            "svd" => Algorithm::Svd,
            "svdpp" | "svd_pp" => Algorithm::SvdPp,
            "coclustering" | "cocluster" | "co_clustering" => Algorithm::CoClustering,
            "slim" => Algorithm::Slim,
            _ => return Err(Error::InvalidParameter(format!("unknown algorithm {s:?}"))),
        };
        Ok(algo)
    }
}

/// One point of an algorithm's hyperparameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum Hyper {
    Random,
    GlobalMean,
    #[serde(rename = "itemnn")]
    ItemNN(KnnParams),
    #[serde(rename = "usernn")]
    UserNN(KnnParams),
    Svd(SgdParams),
    #[serde(rename = "svdpp")]
    SvdPp(SgdParams),
    #[serde(rename = "coclustering")]
    CoClustering(CoClusterParams),
    Slim(SlimParams),
}

impl Hyper {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyper::Random => Algorithm::Random,
            Hyper::GlobalMean => Algorithm::GlobalMean,
            Hyper::ItemNN(_) => Algorithm::ItemNN,
            Hyper::UserNN(_) => Algorithm::UserNN,
            Hyper::Svd(_) => Algorithm::Svd,
            Hyper::SvdPp(_) => Algorithm::SvdPp,
            Hyper::CoClustering(_) => Algorithm::CoClustering,
            Hyper::Slim(_) => Algorithm::Slim,
        }
    }

    /// Compact `key=value;...` form used in reports.
    pub fn describe(&self) -> String {
        match self {
            Hyper::Random | Hyper::GlobalMean => String::new(),
            Hyper::ItemNN(p) | Hyper::UserNN(p) => format!("k={};min_sim={}", p.k, p.min_sim),
            Hyper::Svd(p) | Hyper::SvdPp(p) => format!(
                "factors={};lr={};reg={};epochs={}{}",
                p.factors,
                p.lr,
                p.reg,
                p.epochs,
                if p.add_global_mean { ";with_mean" } else { "" }
            ),
            Hyper::CoClustering(p) => format!(
                "user_clusters={};item_clusters={};epochs={}",
                p.user_clusters, p.item_clusters, p.epochs
            ),
            Hyper::Slim(p) => format!("beta={};lambda={}", p.beta, p.lambda),
        }
    }
}

/// Anything that scores a `(user, item)` cell.
pub trait Predict: Sync {
    fn predict(&self, user: usize, item: usize) -> f64;
}

impl<P: Predict + ?Sized> Predict for &P {
    fn predict(&self, user: usize, item: usize) -> f64 {
        (**self).predict(user, item)
    }
}

impl<P: Predict + ?Sized> Predict for Box<P> {
    fn predict(&self, user: usize, item: usize) -> f64 {
        (**self).predict(user, item)
    }
}

/// Adapts a scoring closure to [`Predict`].
pub struct FnPredict<F>(pub F);

impl<F: Fn(usize, usize) -> f64 + Sync> Predict for FnPredict<F> {
    fn predict(&self, user: usize, item: usize) -> f64 {
        (self.0)(user, item)
    }
}

/// Training-set means used by the fallback chain and by CoClustering.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub global_mean: f64,
    pub user_means: Vec<Option<f64>>,
    pub item_means: Vec<Option<f64>>,
}

impl TrainStats {
    pub fn from_matrix(train: &SparseRatingMatrix) -> Result<Self> {
        let global_mean = train.global_mean().ok_or(Error::EmptyTrain)?;
        Ok(Self {
            global_mean,
            user_means: train.user_means(),
            item_means: train.item_means(),
        })
    }

    pub fn user_mean(&self, user: usize) -> Option<f64> {
        self.user_means.get(user).copied().flatten()
    }

    pub fn item_mean(&self, item: usize) -> Option<f64> {
        self.item_means.get(item).copied().flatten()
    }

    /// Item mean, else user mean, else global mean.
    pub fn fallback(&self, user: usize, item: usize) -> f64 {
        self.item_mean(item)
            .or_else(|| self.user_mean(user))
            .unwrap_or(self.global_mean)
    }

    /// User mean, else item mean, else global mean.
    pub fn fallback_user_first(&self, user: usize, item: usize) -> f64 {
        self.user_mean(user)
            .or_else(|| self.item_mean(item))
            .unwrap_or(self.global_mean)
    }

    pub fn transpose(&self) -> Self {
        Self {
            global_mean: self.global_mean,
            user_means: self.item_means.clone(),
            item_means: self.user_means.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Random,
    GlobalMean,
    ItemNN(KnnModel),
    UserNN(KnnModel),
    Svd(SvdModel),
    SvdPp(SvdPpModel),
    CoClustering(CoClusterModel),
    Slim(SlimModel),
}

/// Diagnostics collected while fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Per-epoch (or per-pass) training objective, where the model has one.
    pub history: Vec<f64>,
    pub train_rmse: Option<f64>,
    pub converged: Option<bool>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub hyper: Hyper,
    pub seed: u64,
    pub stats: TrainStats,
    pub model: Model,
    pub report: FitReport,
}

impl Predictor {
    pub fn algorithm(&self) -> Algorithm {
        self.hyper.algorithm()
    }

    pub fn n_users(&self) -> usize {
        self.stats.user_means.len()
    }

    pub fn n_items(&self) -> usize {
        self.stats.item_means.len()
    }

    fn seen(&self, user: usize, item: usize) -> bool {
        self.stats.user_mean(user).is_some() && self.stats.item_mean(item).is_some()
    }
}

impl Predict for Predictor {
    fn predict(&self, user: usize, item: usize) -> f64 {
        match &self.model {
            Model::Random => baseline::random_score(self.seed, user, item),
            Model::GlobalMean => self.stats.global_mean,
            Model::UserNN(m) => {
                if self.seen(user, item) {
                    if let Some(p) = m.predict_oriented(item, user) {
                        return p;
                    }
                }
                self.stats.fallback_user_first(user, item)
            }
            model => {
                if !self.seen(user, item) {
                    return self.stats.fallback(user, item);
                }
                let p = match model {
                    Model::ItemNN(m) => m.predict_oriented(user, item),
                    Model::Svd(m) => Some(m.predict(user, item)),
                    Model::SvdPp(m) => Some(m.predict(user, item)),
                    Model::CoClustering(m) => Some(m.predict(user, item, &self.stats)),
                    Model::Slim(m) => Some(m.predict(user, item)),
                    Model::Random | Model::GlobalMean | Model::UserNN(_) => unreachable!(),
                };
                p.unwrap_or_else(|| self.stats.fallback(user, item))
            }
        }
    }
}

/// Trains the algorithm described by `hyper`.
pub fn fit(hyper: &Hyper, train: &SparseRatingMatrix, seed: u64) -> Result<Predictor> {
    match *hyper {
        Hyper::Random => baseline::fit_random(train, seed),
        Hyper::GlobalMean => baseline::fit_global_mean(train),
        Hyper::ItemNN(p) => knn::fit_itemnn(train, p),
        Hyper::UserNN(p) => knn::fit_usernn(train, p),
        Hyper::Svd(p) => svd::fit_svd(train, p, seed),
        Hyper::SvdPp(p) => svd::fit_svdpp(train, p, seed),
        Hyper::CoClustering(p) => cocluster::fit_cocluster(train, p, seed),
        Hyper::Slim(p) => slim::fit_slim(train, p),
    }
}

/// Root mean squared error of `model` over `entries`.
pub fn rmse<P: Predict + ?Sized>(model: &P, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> f64 {
    let mut n = 0usize;
    let mut acc = crate::numeric::CompensatedSum::default();
    for (u, i, r) in entries {
        let e = r - model.predict(u, i);
        acc.add(e * e);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (acc.value() / n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_tags_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("SVD++".parse::<Algorithm>().unwrap(), Algorithm::SvdPp);
        assert!("gnn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn hyper_serde_is_tagged() {
        let h = Hyper::ItemNN(KnnParams { k: 20, min_sim: 0.0 });
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("\"algo\":\"itemnn\""), "{s}");
        assert_eq!(serde_json::from_str::<Hyper>(&s).unwrap(), h);
    }

    #[test]
    fn fallback_chain_order() {
        let stats = TrainStats {
            global_mean: 3.0,
            user_means: vec![Some(4.0), None],
            item_means: vec![Some(2.0), None],
        };
        assert_eq!(stats.fallback(0, 0), 2.0);
        assert_eq!(stats.fallback(0, 1), 4.0);
        assert_eq!(stats.fallback(1, 1), 3.0);
        assert_eq!(stats.fallback_user_first(0, 0), 4.0);
        assert_eq!(stats.fallback_user_first(1, 0), 2.0);
        // out of range indices fall through to the global mean
        assert_eq!(stats.fallback(9, 9), 3.0);
    }
}
