//! Hyperparameter grids and validation-driven grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, Algorithm, CoClusterParams, Hyper, KnnParams, Predict, Predictor, SgdParams, SlimParams};
use crate::data::{Dataset, SparseRatingMatrix};
use crate::error::{Error, Result};
use crate::eval::{ndcg_batched, RankedEntry, DEFAULT_BATCH_SIZE};

/// Value lists per algorithm family; every point is the cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub knn_k: Vec<usize>,
    pub factors: Vec<usize>,
    pub lr: Vec<f64>,
    pub reg: Vec<f64>,
    pub epochs: Vec<usize>,
    pub add_global_mean: bool,
    /// Used for both user and item clusters.
    pub clusters: Vec<usize>,
    pub cluster_epochs: Vec<usize>,
    pub slim_beta: Vec<f64>,
    pub slim_lambda: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            knn_k: vec![20, 40, 60],
            factors: vec![20, 50, 100, 150],
            lr: vec![0.1, 0.01, 0.001, 0.0001],
            reg: vec![0.1, 0.01, 0.001, 0.0001],
            epochs: vec![20, 50, 80],
            add_global_mean: false,
            clusters: vec![3, 6, 12, 24],
            cluster_epochs: vec![20, 50, 80],
            slim_beta: vec![0.005, 0.05, 0.5],
            slim_lambda: vec![0.005, 0.05, 0.5],
        }
    }
}

impl HyperGrid {
    /// A few points per family, for smoke runs.
    pub fn quick() -> Self {
        Self {
            knn_k: vec![40],
            factors: vec![20],
            lr: vec![0.01],
            reg: vec![0.01],
            epochs: vec![20],
            add_global_mean: false,
            clusters: vec![3],
            cluster_epochs: vec![20],
            slim_beta: vec![0.5],
            slim_lambda: vec![0.05],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "quick" => Ok(Self::quick()),
            other => Err(Error::InvalidParameter(format!("unknown grid preset {other:?}"))),
        }
    }

    /// All points for `algo`, in lexicographic order of the value lists.
    pub fn points(&self, algo: Algorithm) -> Result<Vec<Hyper>> {
        fn need<T>(name: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("grid list {name} is empty")));
            }
            Ok(())
        }
        let pts = match algo {
            Algorithm::Random => vec![Hyper::Random],
            Algorithm::GlobalMean => vec![Hyper::GlobalMean],
            Algorithm::ItemNN | Algorithm::UserNN => {
                need("knn_k", &self.knn_k)?;
                self.knn_k
                    .iter()
                    .map(|&k| {
                        let p = KnnParams::new(k);
                        if algo == Algorithm::ItemNN {
                            Hyper::ItemNN(p)
                        } else {
                            Hyper::UserNN(p)
                        }
                    })
                    .collect()
            }
            Algorithm::Svd | Algorithm::SvdPp => {
                need("factors", &self.factors)?;
                need("lr", &self.lr)?;
                need("reg", &self.reg)?;
                need("epochs", &self.epochs)?;
                let mut v = Vec::new();
                for &f in &self.factors {
                    for &lr in &self.lr {
                        for &reg in &self.reg {
                            for &e in &self.epochs {
                                let mut p = SgdParams::new(f, lr, reg, e);
                                p.add_global_mean = self.add_global_mean;
                                v.push(if algo == Algorithm::Svd { Hyper::Svd(p) } else { Hyper::SvdPp(p) });
                            }
                        }
                    }
                }
                v
            }
            Algorithm::CoClustering => {
                need("clusters", &self.clusters)?;
                need("cluster_epochs", &self.cluster_epochs)?;
                let mut v = Vec::new();
                for &c in &self.clusters {
                    for &e in &self.cluster_epochs {
                        v.push(Hyper::CoClustering(CoClusterParams::new(c, c, e)));
                    }
                }
                v
            }
            Algorithm::Slim => {
                need("slim_beta", &self.slim_beta)?;
                need("slim_lambda", &self.slim_lambda)?;
                let mut v = Vec::new();
                for &b in &self.slim_beta {
                    for &l in &self.slim_lambda {
                        v.push(Hyper::Slim(SlimParams::new(b, l)));
                    }
                }
                v
            }
        };
        Ok(pts)
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyper: Hyper,
    /// Validation NDCG@k, or `None` when training failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult<M> {
    pub best: Hyper,
    pub best_score: f64,
    pub model: M,
    pub trials: Vec<Trial>,
}

/// Batched NDCG@k of `model` on the validation interactions (clipped scores).
pub fn validation_ndcg(model: &(impl Predict + ?Sized), validation: &Dataset, k: usize, seed: u64) -> Result<f64> {
    let entries: Vec<RankedEntry> = validation
        .interactions()
        .iter()
        .map(|x| RankedEntry {
            user: x.user,
            item: x.item,
            score: crate::clip_score(model.predict(x.user, x.item)),
            rating: x.rating,
            greenness: 0.0,
        })
        .collect();
    ndcg_batched(&entries, k, DEFAULT_BATCH_SIZE, seed)
}

/// Grid search over arbitrary points with a caller-supplied trainer.
///
/// Points are trained and scored in parallel; the best validation score
/// wins, ties going to the earlier point. The winner is retrained so the
/// returned model does not depend on which worker produced it.
pub fn grid_search_with<H, M, F>(
    points: &[H],
    validation: &Dataset,
    metric_k: usize,
    seed: u64,
    train: F,
) -> Result<GridSearchResult<M>>
where
    H: Clone + Into<Hyper> + Sync,
    M: Predict + Send,
    F: Fn(&H) -> Result<M> + Sync,
{
    if points.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    let trials: Vec<Trial> = points
        .par_iter()
        .map(|h| {
            let outcome = train(h).and_then(|m| validation_ndcg(&m, validation, metric_k, seed));
            match outcome {
                Ok(s) => Trial {
                    hyper: h.clone().into(),
                    score: Some(s),
                    error: None,
                },
                Err(e) => {
                    log::warn!("grid point failed: {e}");
                    Trial {
                        hyper: h.clone().into(),
                        score: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (pos, t) in trials.iter().enumerate() {
        if let Some(s) = t.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((pos, s));
            }
        }
    }
    let (pos, best_score) = best.ok_or_else(|| {
        let first = trials.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        Error::InvalidParameter(format!("every grid point failed; first error: {first}"))
    })?;
    let model = train(&points[pos])?;
    Ok(GridSearchResult {
        best: trials[pos].hyper,
        best_score,
        model,
        trials,
    })
}

/// Trains every grid point of `algo` on `train` and keeps the one with the
/// highest validation batched NDCG@`metric_k`.
pub fn grid_search(
    algo: Algorithm,
    grid: &HyperGrid,
    train: &SparseRatingMatrix,
    validation: &Dataset,
    metric_k: usize,
    seed: u64,
) -> Result<GridSearchResult<Predictor>> {
    let points = grid.points(algo)?;
    grid_search_with(&points, validation, metric_k, seed, |h| fit(h, train, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        let g = HyperGrid::default();
        assert_eq!(g.points(Algorithm::Svd).unwrap().len(), 4 * 4 * 4 * 3);
        assert_eq!(g.points(Algorithm::SvdPp).unwrap().len(), 192);
        assert_eq!(g.points(Algorithm::ItemNN).unwrap().len(), 3);
        assert_eq!(g.points(Algorithm::CoClustering).unwrap().len(), 12);
        assert_eq!(g.points(Algorithm::Slim).unwrap().len(), 9);
        assert_eq!(g.points(Algorithm::GlobalMean).unwrap().len(), 1);
    }

    #[test]
    fn svd_points_are_distinct() {
        let pts = HyperGrid::default().points(Algorithm::Svd).unwrap();
        let set: std::collections::HashSet<String> = pts.iter().map(Hyper::describe).collect();
        assert_eq!(set.len(), 192);
    }

    #[test]
    fn empty_list_rejected() {
        let g = HyperGrid {
            knn_k: vec![],
            ..HyperGrid::default()
        };
        assert!(g.points(Algorithm::ItemNN).is_err());
        assert!(HyperGrid::preset("huge").is_err());
    }
}
