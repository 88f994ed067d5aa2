//! Sparse linear method (SLIM).
//!
//! Learns a non-negative item-item matrix `W` with zero diagonal minimizing
//! `½‖R − RW‖²_F + (β/2)‖W‖²_F + λ‖W‖₁`. The problem separates by column;
//! each column is solved by cyclic coordinate descent with the update
//! `w_j ← max(0, (ρ_j − λ) / (‖r_j‖² + β))`. Only items co-rated with the
//! target can become non-zero, since ratings are non-negative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitReport, Hyper, Model, Predictor, TrainStats};
use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};

fn default_max_passes() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlimParams {
    pub beta: f64,
    pub lambda: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl SlimParams {
    pub fn new(beta: f64, lambda: f64) -> Self {
        Self {
            beta,
            lambda,
            max_passes: default_max_passes(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlimReport {
    pub column_converged: Vec<bool>,
    pub column_passes: Vec<usize>,
    /// Total objective before the first pass and after each pass.
    pub objective_history: Vec<f64>,
    pub nnz: usize,
}

/// Column-stored `W`: `columns[i]` lists the non-zero `(j, W_ji)`, sorted by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlimModel {
    pub columns: Vec<Vec<(usize, f64)>>,
    pub ratings: SparseRatingMatrix,
}

impl SlimModel {
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        let col = &self.columns[to];
        col.binary_search_by_key(&from, |&(j, _)| j).map_or(0.0, |p| col[p].1)
    }

    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.columns[item]
            .iter()
            .filter_map(|&(j, w)| self.ratings.get(user, j).map(|r| r * w))
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }
}

/// `½‖R − RW‖²_F + (β/2)‖W‖²_F + λ‖W‖₁` for column-stored `W`.
pub fn slim_objective(train: &SparseRatingMatrix, columns: &[Vec<(usize, f64)>], beta: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (i, col) in columns.iter().enumerate() {
        let mut resid: std::collections::BTreeMap<usize, f64> = train.item_col(i).iter().copied().collect();
        for &(j, w) in col {
            for &(u, r) in train.item_col(j) {
                *resid.entry(u).or_insert(0.0) -= r * w;
            }
            total += 0.5 * beta * w * w + lambda * w.abs();
        }
        total += 0.5 * resid.values().map(|e| e * e).sum::<f64>();
    }
    total
}

struct ColumnFit {
    weights: Vec<(usize, f64)>,
    converged: bool,
    passes: usize,
    objective: Vec<f64>,
}

fn fit_column(train: &SparseRatingMatrix, target: usize, p: &SlimParams, norms: &[f64], resid: &mut [f64]) -> ColumnFit {
    let mut cands: Vec<usize> = train
        .item_col(target)
        .iter()
        .flat_map(|&(u, _)| train.user_row(u).iter().map(|&(j, _)| j))
        .filter(|&j| j != target)
        .collect();
    cands.sort_unstable();
    cands.dedup();
    for &(u, r) in train.item_col(target) {
        resid[u] = r;
    }
    let mut w = vec![0.0; cands.len()];
    let mut users: Vec<usize> = train.item_col(target).iter().map(|&(u, _)| u).collect();
    for &j in &cands {
        users.extend(train.item_col(j).iter().map(|&(u, _)| u));
    }
    users.sort_unstable();
    users.dedup();
    let objective_of = |w: &[f64], resid: &[f64]| -> f64 {
        let fit: f64 = users.iter().map(|&u| resid[u] * resid[u]).sum();
        let pen: f64 = w.iter().map(|&x| 0.5 * p.beta * x * x + p.lambda * x).sum();
        0.5 * fit + pen
    };
    let mut objective = vec![objective_of(&w, resid)];
    let mut converged = cands.is_empty();
    let mut passes = 0;
    while !converged && passes < p.max_passes {
        passes += 1;
        let mut max_delta: f64 = 0.0;
        for (k, &j) in cands.iter().enumerate() {
            let col = train.item_col(j);
            let rho: f64 = col.iter().map(|&(u, r)| r * resid[u]).sum::<f64>() + norms[j] * w[k];
            let denom = norms[j] + p.beta;
            let next = if denom > 0.0 { ((rho - p.lambda) / denom).max(0.0) } else { 0.0 };
            let delta = next - w[k];
            if delta != 0.0 {
                for &(u, r) in col {
                    resid[u] -= r * delta;
                }
                w[k] = next;
            }
            max_delta = max_delta.max(delta.abs());
        }
        objective.push(objective_of(&w, resid));
        converged = max_delta < p.tol;
    }
    for &u in &users {
        resid[u] = 0.0;
    }
    let weights = cands.into_iter().zip(w).filter(|&(_, x)| x > 0.0).collect();
    ColumnFit {
        weights,
        converged,
        passes,
        objective,
    }
}

/// Solves for `W`; returns the columns and a convergence report.
pub fn fit_slim_weights(train: &SparseRatingMatrix, params: &SlimParams) -> Result<(Vec<Vec<(usize, f64)>>, SlimReport)> {
    if !(params.beta >= 0.0 && params.lambda >= 0.0 && params.beta.is_finite() && params.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta and lambda must be >= 0 (beta={}, lambda={})",
            params.beta, params.lambda
        )));
    }
    let norms: Vec<f64> = (0..train.n_items())
        .map(|j| train.item_col(j).iter().map(|&(_, r)| r * r).sum())
        .collect();
    let fits: Vec<ColumnFit> = (0..train.n_items())
        .into_par_iter()
        .map_init(|| vec![0.0; train.n_users()], |resid, i| fit_column(train, i, params, &norms, resid))
        .collect();
    let longest = fits.iter().map(|f| f.objective.len()).max().unwrap_or(1);
    let objective_history = (0..longest)
        .map(|p| {
            let mut acc = crate::numeric::CompensatedSum::default();
            for f in &fits {
                acc.add(f.objective[p.min(f.objective.len() - 1)]);
            }
            acc.value()
        })
        .collect();
    let report = SlimReport {
        column_converged: fits.iter().map(|f| f.converged).collect(),
        column_passes: fits.iter().map(|f| f.passes).collect(),
        objective_history,
        nnz: fits.iter().map(|f| f.weights.len()).sum(),
    };
    Ok((fits.into_iter().map(|f| f.weights).collect(), report))
}

pub fn fit_slim(train: &SparseRatingMatrix, params: SlimParams) -> Result<Predictor> {
    let stats = TrainStats::from_matrix(train)?;
    let (columns, report) = fit_slim_weights(train, &params)?;
    let model = SlimModel {
        columns,
        ratings: train.clone(),
    };
    let train_rmse = super::rmse(&super::FnPredict(|u, i| model.predict(u, i)), train.entries());
    let fit_report = FitReport {
        history: report.objective_history.clone(),
        train_rmse: Some(train_rmse),
        converged: Some(report.column_converged.iter().all(|&c| c)),
        epochs_run: report.column_passes.iter().copied().max().unwrap_or(0),
    };
    Ok(Predictor {
        hyper: Hyper::Slim(params),
        seed: 0,
        stats,
        model: Model::Slim(model),
        report: fit_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SparseRatingMatrix {
        SparseRatingMatrix::from_entries(
            4,
            3,
            [
                (0, 0, 5.0),
                (0, 1, 4.0),
                (1, 0, 3.0),
                (1, 2, 2.0),
                (2, 1, 1.0),
                (2, 2, 4.0),
                (3, 0, 2.0),
                (3, 1, 2.0),
                (3, 2, 5.0),
            ],
        )
    }

    #[test]
    fn incremental_objective_matches_direct() {
        let m = toy();
        let p = SlimParams::new(0.1, 0.2);
        let (cols, report) = fit_slim_weights(&m, &p).unwrap();
        let direct = slim_objective(&m, &cols, p.beta, p.lambda);
        let last = *report.objective_history.last().unwrap();
        assert!((direct - last).abs() < 1e-9 * direct.max(1.0), "{direct} vs {last}");
    }

    #[test]
    fn constraints_hold() {
        let (cols, _) = fit_slim_weights(&toy(), &SlimParams::new(0.01, 0.01)).unwrap();
        for (i, col) in cols.iter().enumerate() {
            for &(j, w) in col {
                assert_ne!(i, j);
                assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let m = toy();
        let p = fit_slim(&m, SlimParams::new(0.0, 1e6)).unwrap();
        let Model::Slim(s) = &p.model else { unreachable!() };
        assert_eq!(s.nnz(), 0);
        let half_norm: f64 = 0.5 * m.entries().map(|(_, _, r)| r * r).sum::<f64>();
        assert!(p.report.history.iter().all(|h| (h - half_norm).abs() < 1e-9));
        assert_eq!(s.predict(0, 2), 0.0);
    }

    #[test]
    fn duplicated_column_is_copied() {
        // items 0 and 1 identical; item 2 rated by disjoint users
        let m = SparseRatingMatrix::from_entries(
            4,
            3,
            [(0, 0, 4.0), (0, 1, 4.0), (1, 0, 2.0), (1, 1, 2.0), (2, 2, 3.0), (3, 2, 5.0)],
        );
        let p = fit_slim(&m, SlimParams::new(1e-4, 1e-4)).unwrap();
        let Model::Slim(s) = &p.model else { unreachable!() };
        assert!((s.weight(0, 1) - 1.0).abs() < 1e-3);
        assert_eq!(s.weight(2, 1), 0.0);
        assert!((s.predict(0, 1) - 4.0).abs() < 1e-2);
    }

    #[test]
    fn negative_penalty_rejected() {
        assert!(fit_slim(&toy(), SlimParams::new(-0.1, 0.0)).is_err());
    }
}
