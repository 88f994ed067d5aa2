//! Co-clustering collaborative filtering.
//!
//! Users and items are each assigned to one cluster. A prediction is
//! `C̄_ab + (μ_u − C̄_a) + (μ_i − C̄_b)` where `a`, `b` are the clusters of
//! `u` and `i`, `C̄_ab` is the mean rating of the co-cluster and `C̄_a`,
//! `C̄_b` the mean ratings of the user and item clusters. Assignments are
//! found by alternating minimization of the squared training error: starting
//! from a seeded random assignment, means are recomputed, users reassigned,
//! means recomputed again, then items reassigned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FitReport, Hyper, Model, Predictor, TrainStats};
use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoClusterParams {
    pub user_clusters: usize,
    pub item_clusters: usize,
    pub epochs: usize,
}

impl CoClusterParams {
    pub fn new(user_clusters: usize, item_clusters: usize, epochs: usize) -> Self {
        Self {
            user_clusters,
            item_clusters,
            epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoClusterModel {
    pub user_assign: Vec<usize>,
    pub item_assign: Vec<usize>,
    pub n_user_clusters: usize,
    pub n_item_clusters: usize,
    /// Row-major `n_user_clusters x n_item_clusters`.
    pub cocluster_means: Vec<f64>,
    pub user_cluster_means: Vec<f64>,
    pub item_cluster_means: Vec<f64>,
}

impl CoClusterModel {
    fn cell(&self, a: usize, b: usize) -> f64 {
        self.cocluster_means[a * self.n_item_clusters + b]
    }

    fn score(&self, a: usize, b: usize, mu_u: f64, mu_i: f64) -> f64 {
        self.cell(a, b) + (mu_u - self.user_cluster_means[a]) + (mu_i - self.item_cluster_means[b])
    }

    pub fn predict(&self, user: usize, item: usize, stats: &TrainStats) -> f64 {
        let mu_u = stats.user_mean(user).unwrap_or(stats.global_mean);
        let mu_i = stats.item_mean(item).unwrap_or(stats.global_mean);
        self.score(self.user_assign[user], self.item_assign[item], mu_u, mu_i)
    }

    /// Recomputes all cluster means from the current assignments; empty
    /// clusters and co-clusters take the global mean.
    fn refresh_means(&mut self, train: &SparseRatingMatrix, global_mean: f64) {
        let (ku, ki) = (self.n_user_clusters, self.n_item_clusters);
        let mut cell = vec![(0.0, 0usize); ku * ki];
        let mut rows = vec![(0.0, 0usize); ku];
        let mut cols = vec![(0.0, 0usize); ki];
        for (u, i, r) in train.entries() {
            let (a, b) = (self.user_assign[u], self.item_assign[i]);
            for acc in [&mut cell[a * ki + b], &mut rows[a], &mut cols[b]] {
                acc.0 += r;
                acc.1 += 1;
            }
        }
        let mean = |(s, n): (f64, usize)| if n == 0 { global_mean } else { s / n as f64 };
        self.cocluster_means = cell.into_iter().map(mean).collect();
        self.user_cluster_means = rows.into_iter().map(mean).collect();
        self.item_cluster_means = cols.into_iter().map(mean).collect();
    }
}

/// Squared error of one entity's ratings under each candidate cluster.
fn entity_costs(
    model: &CoClusterModel,
    ratings: &[(usize, f64)],
    own_mean: f64,
    other_assign: &[usize],
    other_means: &[Option<f64>],
    global_mean: f64,
    users_side: bool,
    out: &mut [f64],
) {
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = ratings
            .iter()
            .map(|&(o, r)| {
                let mu_o = other_means[o].unwrap_or(global_mean);
                let pred = if users_side {
                    model.score(c, other_assign[o], own_mean, mu_o)
                } else {
                    model.score(other_assign[o], c, mu_o, own_mean)
                };
                (r - pred).powi(2)
            })
            .sum();
    }
}

fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in costs.iter().enumerate().skip(1) {
        if v < costs[best] {
            best = c;
        }
    }
    best
}

struct Side<'a> {
    matrix: &'a SparseRatingMatrix,
    users_side: bool,
}

impl Side<'_> {
    fn len(&self) -> usize {
        if self.users_side {
            self.matrix.n_users()
        } else {
            self.matrix.n_items()
        }
    }

    fn ratings(&self, e: usize) -> &[(usize, f64)] {
        if self.users_side {
            self.matrix.user_row(e)
        } else {
            self.matrix.item_col(e)
        }
    }
}

/// Reassigns every entity on one side; returns whether any assignment changed.
fn reassign(model: &mut CoClusterModel, side: &Side, stats: &TrainStats) -> bool {
    let k = if side.users_side { model.n_user_clusters } else { model.n_item_clusters };
    let mut costs = vec![0.0; k];
    let mut next = if side.users_side { model.user_assign.clone() } else { model.item_assign.clone() };
    let mut worst_fit = vec![0.0; side.len()];
    for (e, slot) in next.iter_mut().enumerate() {
        let ratings = side.ratings(e);
        if ratings.is_empty() {
            continue;
        }
        let (own, other_assign, other_means) = if side.users_side {
            (stats.user_mean(e), &model.item_assign, &stats.item_means)
        } else {
            (stats.item_mean(e), &model.user_assign, &stats.user_means)
        };
        entity_costs(
            model,
            ratings,
            own.unwrap_or(stats.global_mean),
            other_assign,
            other_means,
            stats.global_mean,
            side.users_side,
            &mut costs,
        );
        *slot = argmin(&costs);
        worst_fit[e] = costs[*slot];
    }
    repair_empty(&mut next, k, &worst_fit);
    let assign = if side.users_side { &mut model.user_assign } else { &mut model.item_assign };
    let changed = *assign != next;
    *assign = next;
    changed
}

/// Moves the worst-fitting entity of a multi-member cluster into each empty
/// cluster, while such donors exist.
fn repair_empty(assign: &mut [usize], k: usize, fit: &[f64]) {
    let mut sizes = vec![0usize; k];
    for &c in assign.iter() {
        sizes[c] += 1;
    }
    let mut moved = vec![false; assign.len()];
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..assign.len())
            .filter(|&e| !moved[e] && sizes[assign[e]] >= 2)
            .max_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(b.cmp(&a)));
        let Some(e) = donor else { break };
        sizes[assign[e]] -= 1;
        assign[e] = empty;
        sizes[empty] += 1;
        moved[e] = true;
    }
}

pub fn fit_cocluster(train: &SparseRatingMatrix, params: CoClusterParams, seed: u64) -> Result<Predictor> {
    if params.user_clusters < 1 || params.item_clusters < 1 {
        return Err(Error::InvalidParameter("cluster counts must be >= 1".into()));
    }
    let stats = TrainStats::from_matrix(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ku, ki) = (params.user_clusters, params.item_clusters);
    let mut user_assign: Vec<usize> = (0..train.n_users()).map(|_| rng.random_range(0..ku)).collect();
    let mut item_assign: Vec<usize> = (0..train.n_items()).map(|_| rng.random_range(0..ki)).collect();
    let (nu, ni) = (user_assign.len(), item_assign.len());
    repair_empty(&mut user_assign, ku, &vec![0.0; nu]);
    repair_empty(&mut item_assign, ki, &vec![0.0; ni]);
    let mut model = CoClusterModel {
        user_assign,
        item_assign,
        n_user_clusters: ku,
        n_item_clusters: ki,
        cocluster_means: Vec::new(),
        user_cluster_means: Vec::new(),
        item_cluster_means: Vec::new(),
    };
    let users = Side { matrix: train, users_side: true };
    let items = Side { matrix: train, users_side: false };
    let mut converged = false;
    let mut epochs_run = 0;
    let mut history = Vec::new();
    for _ in 0..params.epochs {
        epochs_run += 1;
        model.refresh_means(train, stats.global_mean);
        let users_changed = reassign(&mut model, &users, &stats);
        model.refresh_means(train, stats.global_mean);
        let items_changed = reassign(&mut model, &items, &stats);
        model.refresh_means(train, stats.global_mean);
        history.push(train_sse(&model, train, &stats));
        if !users_changed && !items_changed {
            converged = true;
            break;
        }
    }
    model.refresh_means(train, stats.global_mean);
    let train_rmse = (train_sse(&model, train, &stats) / train.nnz() as f64).sqrt();
    Ok(Predictor {
        hyper: Hyper::CoClustering(params),
        seed,
        stats,
        model: Model::CoClustering(model),
        report: FitReport {
            history,
            train_rmse: Some(train_rmse),
            converged: Some(converged),
            epochs_run,
        },
    })
}

fn train_sse(model: &CoClusterModel, train: &SparseRatingMatrix, stats: &TrainStats) -> f64 {
    train.entries().map(|(u, i, r)| (r - model.predict(u, i, stats)).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Predict;

    fn dense(rows: &[&[f64]]) -> SparseRatingMatrix {
        let entries = rows
            .iter()
            .enumerate()
            .flat_map(|(u, r)| r.iter().enumerate().map(move |(i, &v)| (u, i, v)));
        SparseRatingMatrix::from_entries(rows.len(), rows[0].len(), entries)
    }

    #[test]
    fn single_cluster_collapses_to_mean_offsets() {
        let m = SparseRatingMatrix::from_entries(3, 3, [(0, 0, 5.0), (0, 1, 3.0), (1, 1, 4.0), (2, 2, 1.0), (1, 2, 2.0)]);
        let p = fit_cocluster(&m, CoClusterParams::new(1, 1, 10), 3).unwrap();
        let mu = 3.0;
        for (u, i) in [(0, 2), (1, 0), (2, 1)] {
            let expected = p.stats.user_mean(u).unwrap() + p.stats.item_mean(i).unwrap() - mu;
            assert!((p.predict(u, i) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_blocks_fit_exactly() {
        let m = dense(&[&[1.0, 1.0, 2.0, 2.0], &[1.0, 1.0, 2.0, 2.0], &[4.0, 4.0, 5.0, 5.0], &[4.0, 4.0, 5.0, 5.0]]);
        for seed in 0..5 {
            let p = fit_cocluster(&m, CoClusterParams::new(2, 2, 20), seed).unwrap();
            assert!(p.report.train_rmse.unwrap() < 1e-12);
        }
    }

    #[test]
    fn interaction_blocks_are_recovered() {
        // not additive: only the true 2x2 co-clustering fits exactly
        let m = dense(&[&[1.0, 1.0, 5.0, 5.0], &[1.0, 1.0, 5.0, 5.0], &[5.0, 5.0, 1.0, 1.0], &[5.0, 5.0, 1.0, 1.0]]);
        let p = fit_cocluster(&m, CoClusterParams::new(2, 2, 20), 1).unwrap();
        assert!(p.report.train_rmse.unwrap() < 1e-12, "{:?}", p.report);
        let Model::CoClustering(c) = &p.model else { unreachable!() };
        assert_eq!(c.user_assign[0], c.user_assign[1]);
        assert_ne!(c.user_assign[0], c.user_assign[2]);
    }

    #[test]
    fn unseen_user_and_item_use_global_mean() {
        let m = SparseRatingMatrix::from_entries(3, 3, [(0, 0, 5.0), (1, 1, 3.0)]);
        let p = fit_cocluster(&m, CoClusterParams::new(2, 2, 5), 0).unwrap();
        assert_eq!(p.predict(2, 2), 4.0);
    }

    #[test]
    fn empty_clusters_are_repaired() {
        let mut assign = vec![0, 0, 0, 1];
        repair_empty(&mut assign, 3, &[0.1, 0.9, 0.5, 2.0]);
        assert_eq!(assign, vec![0, 2, 0, 1]);
    }

    #[test]
    fn zero_clusters_rejected() {
        let m = SparseRatingMatrix::from_entries(1, 1, [(0, 0, 1.0)]);
        assert!(fit_cocluster(&m, CoClusterParams::new(0, 1, 1), 0).is_err());
    }
}
