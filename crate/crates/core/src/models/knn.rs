//! Item- and user-based nearest neighbors with cosine similarity.
//!
//! Similarities are cosine over the co-rated support of two rating vectors,
//! without mean-centering; pairs with no co-raters have similarity zero and
//! are not stored. A prediction for `(u, i)` averages `u`'s ratings on the
//! `k` items most similar to `i` among those `u` rated, weighted by
//! similarity. UserNN is the same computation on the transposed matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitReport, Hyper, Model, Predictor, TrainStats};
use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    /// Neighbors need a similarity strictly above this value.
    #[serde(default)]
    pub min_sim: f64,
}

impl KnnParams {
    pub fn new(k: usize) -> Self {
        Self { k, min_sim: 0.0 }
    }
}

/// Sparse symmetric similarity matrix stored by row, sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRows {
    pub(crate) rows: Vec<Vec<(usize, f64)>>,
}

impl SimilarityRows {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        let row = &self.rows[a];
        match row.binary_search_by_key(&b, |&(j, _)| j) {
            Ok(p) => row[p].1,
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, a: usize) -> &[(usize, f64)] {
        &self.rows[a]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cosine similarity between the columns of `m` over co-rated rows.
pub fn column_cosine(m: &SparseRatingMatrix) -> SimilarityRows {
    let n = m.n_items();
    let rows = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![[0.0f64; 3]; n], Vec::<usize>::new()),
            |(acc, touched), i| {
                for &(u, r_ui) in m.item_col(i) {
                    for &(j, r_uj) in m.user_row(u) {
                        if j == i {
                            continue;
                        }
                        let a = &mut acc[j];
                        if a[1] == 0.0 && a[2] == 0.0 && a[0] == 0.0 {
                            touched.push(j);
                        }
                        a[0] += r_ui * r_uj;
                        a[1] += r_ui * r_ui;
                        a[2] += r_uj * r_uj;
                    }
                }
                touched.sort_unstable();
                touched.dedup();
                let mut row = Vec::new();
                for &j in touched.iter() {
                    let [dot, ni, nj] = acc[j];
                    if ni > 0.0 && nj > 0.0 {
                        let s = dot / (ni.sqrt() * nj.sqrt());
                        if s != 0.0 {
                            row.push((j, s));
                        }
                    }
                    acc[j] = [0.0; 3];
                }
                touched.clear();
                row
            },
        )
        .collect();
    SimilarityRows { rows }
}

/// Neighborhood model over an oriented matrix: rows are the "context"
/// entities whose ratings are averaged, columns are the prediction targets.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub params: KnnParams,
    pub ratings: SparseRatingMatrix,
    pub sims: SimilarityRows,
}

impl KnnModel {
    pub fn fit(ratings: SparseRatingMatrix, params: KnnParams) -> Result<Self> {
        if params.k < 1 {
            return Err(Error::InvalidParameter("k_neighbors must be >= 1".into()));
        }
        let sims = column_cosine(&ratings);
        Ok(Self { params, ratings, sims })
    }

    /// Weighted neighbor average, or `None` when no neighbor qualifies.
    pub fn predict_oriented(&self, context: usize, target: usize) -> Option<f64> {
        if context >= self.ratings.n_users() || target >= self.ratings.n_items() {
            return None;
        }
        let mut cands: Vec<(f64, usize, f64)> = self
            .ratings
            .user_row(context)
            .iter()
            .filter(|&&(j, _)| j != target)
            .filter_map(|&(j, r)| {
                let s = self.sims.get(target, j);
                (s > self.params.min_sim).then_some((s, j, r))
            })
            .collect();
        if cands.is_empty() {
            return None;
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        cands.truncate(self.params.k);
        let (num, den) = cands.iter().fold((0.0, 0.0), |(n, d), &(s, _, r)| (n + s * r, d + s));
        (den > 0.0).then(|| num / den)
    }
}

pub fn fit_itemnn(train: &SparseRatingMatrix, params: KnnParams) -> Result<Predictor> {
    let stats = TrainStats::from_matrix(train)?;
    let model = KnnModel::fit(train.clone(), params)?;
    Ok(Predictor {
        hyper: Hyper::ItemNN(params),
        seed: 0,
        stats,
        model: Model::ItemNN(model),
        report: FitReport::default(),
    })
}

pub fn fit_usernn(train: &SparseRatingMatrix, params: KnnParams) -> Result<Predictor> {
    let stats = TrainStats::from_matrix(train)?;
    let model = KnnModel::fit(train.transpose(), params)?;
    Ok(Predictor {
        hyper: Hyper::UserNN(params),
        seed: 0,
        stats,
        model: Model::UserNN(model),
        report: FitReport::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Predict;

    fn m(nu: usize, ni: usize, e: &[(usize, usize, f64)]) -> SparseRatingMatrix {
        SparseRatingMatrix::from_entries(nu, ni, e.iter().copied())
    }

    fn brute_cosine(m: &SparseRatingMatrix, a: usize, b: usize) -> f64 {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for u in 0..m.n_users() {
            if let (Some(x), Some(y)) = (m.get(u, a), m.get(u, b)) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
        }
        if na > 0.0 && nb > 0.0 {
            dot / (na.sqrt() * nb.sqrt())
        } else {
            0.0
        }
    }

    #[test]
    fn cosine_matches_brute_force() {
        let mat = m(
            4,
            4,
            &[
                (0, 0, 5.0),
                (0, 1, 3.0),
                (1, 0, 4.0),
                (1, 2, 1.0),
                (2, 1, 2.0),
                (2, 2, 5.0),
                (2, 3, 4.0),
                (3, 0, 1.0),
                (3, 3, 0.0),
            ],
        );
        let sims = column_cosine(&mat);
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 0.0 } else { brute_cosine(&mat, a, b) };
                assert!((sims.get(a, b) - expected).abs() < 1e-12, "({a},{b})");
            }
        }
    }

    #[test]
    fn single_neighbor_ratio() {
        // items 0 and 1 share one rater with proportional ratings -> sim 1
        let mat = m(2, 2, &[(0, 0, 3.0), (0, 1, 3.0), (1, 1, 4.0)]);
        let p = fit_itemnn(&mat, KnnParams::new(20)).unwrap();
        assert_eq!(p.predict(1, 0), 4.0);
    }

    #[test]
    fn weighted_average_of_two_neighbors() {
        let model = KnnModel {
            params: KnnParams::new(5),
            ratings: m(1, 3, &[(0, 1, 4.0), (0, 2, 2.0)]),
            sims: SimilarityRows {
                rows: vec![vec![(1, 0.5), (2, 0.25)], vec![(0, 0.5)], vec![(0, 0.25)]],
            },
        };
        let p = model.predict_oriented(0, 0).unwrap();
        assert!((p - 10.0 / 3.0).abs() < 1e-12);
        let model = KnnModel {
            params: KnnParams::new(5),
            ratings: m(1, 3, &[(0, 1, 5.0), (0, 2, 0.0)]),
            sims: SimilarityRows {
                rows: vec![vec![(1, 0.8), (2, 0.2)], vec![(0, 0.8)], vec![(0, 0.2)]],
            },
        };
        assert!((model.predict_oriented(0, 0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn k_limits_neighbors() {
        let model = KnnModel {
            params: KnnParams::new(1),
            ratings: m(1, 3, &[(0, 1, 4.0), (0, 2, 2.0)]),
            sims: SimilarityRows {
                rows: vec![vec![(1, 0.5), (2, 0.25)], vec![(0, 0.5)], vec![(0, 0.25)]],
            },
        };
        assert_eq!(model.predict_oriented(0, 0), Some(4.0));
    }

    #[test]
    fn no_overlap_falls_back_to_item_mean() {
        // user 1 rated only item 2, which shares no rater with item 0
        let mat = m(3, 3, &[(0, 0, 2.0), (2, 0, 4.0), (1, 2, 5.0), (0, 1, 1.0)]);
        let p = fit_itemnn(&mat, KnnParams::new(20)).unwrap();
        assert_eq!(p.predict(1, 0), 3.0);
    }

    #[test]
    fn usernn_single_neighbor() {
        // users 0 and 1 co-rate item 0 proportionally; user 1 rated item 1 with 2
        let mat = m(2, 2, &[(0, 0, 4.0), (1, 0, 4.0), (1, 1, 2.0)]);
        let p = fit_usernn(&mat, KnnParams::new(20)).unwrap();
        assert_eq!(p.predict(0, 1), 2.0);
    }

    #[test]
    fn zero_k_rejected() {
        let mat = m(1, 1, &[(0, 0, 1.0)]);
        assert!(fit_itemnn(&mat, KnnParams::new(0)).is_err());
    }
}
