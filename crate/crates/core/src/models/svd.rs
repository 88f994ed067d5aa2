//! Biased matrix factorization (SVD) and its implicit-feedback extension
//! (SVD++), both trained by stochastic gradient descent.
//!
//! SVD predicts `b_u + b_i + p_u·q_i` (optionally plus the global mean).
//! SVD++ predicts `μ + b_u + b_i + q_i·(p_u + |N(u)|^-½ Σ_{j∈N(u)} y_j)`
//! where `N(u)` is the set of items `u` rated in training.
//!
//! Both minimize the per-observation objective
//! `Σ ½e² + ½·reg·‖θ_obs‖²`, where `θ_obs` are the parameters touched by
//! the observation. [`SvdModel::gradient`] and [`SvdPpModel::gradient`]
//! return its exact gradient; an SGD step on one observation moves the
//! parameters by `-lr` times that observation's gradient.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FitReport, Hyper, Model, Predictor, TrainStats};
use crate::data::SparseRatingMatrix;
use crate::error::{Error, Result};

fn default_init_std() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Adds the training mean to plain SVD predictions. Ignored by SVD++,
    /// which always includes it.
    #[serde(default)]
    pub add_global_mean: bool,
    /// Standard deviation of the normal latent-factor initialization.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl SgdParams {
    pub fn new(factors: usize, lr: f64, reg: f64, epochs: usize) -> Self {
        Self {
            factors,
            lr,
            reg,
            epochs,
            add_global_mean: false,
            init_std: default_init_std(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.factors < 1 {
            return Err(Error::InvalidParameter("factors must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate and regularization must be > 0 (lr={}, reg={})",
                self.lr, self.reg
            )));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::InvalidParameter("init_std must be >= 0".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn init_factors(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    pub factors: usize,
    /// Constant added to every prediction (0 unless the global mean is enabled).
    pub offset: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Row-major `n_users x factors`.
    pub user_factors: Vec<f64>,
    /// Row-major `n_items x factors`.
    pub item_factors: Vec<f64>,
}

impl SvdModel {
    pub fn init(n_users: usize, n_items: usize, factors: usize, init_std: f64, offset: f64, rng: &mut ChaCha8Rng) -> Self {
        let user_factors = init_factors(n_users * factors, init_std, rng);
        let item_factors = init_factors(n_items * factors, init_std, rng);
        Self {
            factors,
            offset,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors,
            item_factors,
        }
    }

    fn p(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.factors..(u + 1) * self.factors]
    }

    fn q(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.factors..(i + 1) * self.factors]
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.offset + self.user_bias[u] + self.item_bias[i] + dot(self.p(u), self.q(i))
    }

    /// One SGD update on a single observation; returns the pre-update error.
    pub fn sgd_step(&mut self, u: usize, i: usize, r: f64, lr: f64, reg: f64) -> f64 {
        let e = r - self.predict(u, i);
        let f = self.factors;
        self.user_bias[u] += lr * (e - reg * self.user_bias[u]);
        self.item_bias[i] += lr * (e - reg * self.item_bias[i]);
        let (pu, qi) = (&mut self.user_factors[u * f..(u + 1) * f], &mut self.item_factors[i * f..(i + 1) * f]);
        for (p, q) in pu.iter_mut().zip(qi.iter_mut()) {
            let (p0, q0) = (*p, *q);
            *p += lr * (e * q0 - reg * p0);
            *q += lr * (e * p0 - reg * q0);
        }
        e
    }

    pub fn objective(&self, entries: &[(usize, usize, f64)], reg: f64) -> f64 {
        entries
            .iter()
            .map(|&(u, i, r)| {
                let e = r - self.predict(u, i);
                let norm = self.user_bias[u].powi(2) + self.item_bias[i].powi(2) + dot(self.p(u), self.p(u)) + dot(self.q(i), self.q(i));
                0.5 * e * e + 0.5 * reg * norm
            })
            .sum()
    }

    /// Gradient of [`Self::objective`] in the layout of [`Self::flat_params`].
    pub fn gradient(&self, entries: &[(usize, usize, f64)], reg: f64) -> Vec<f64> {
        let (nu, ni, f) = (self.user_bias.len(), self.item_bias.len(), self.factors);
        let mut g = vec![0.0; self.n_params()];
        let (gbu, rest) = g.split_at_mut(nu);
        let (gbi, rest) = rest.split_at_mut(ni);
        let (gp, gq) = rest.split_at_mut(nu * f);
        for &(u, i, r) in entries {
            let e = r - self.predict(u, i);
            gbu[u] += -e + reg * self.user_bias[u];
            gbi[i] += -e + reg * self.item_bias[i];
            for k in 0..f {
                let (p, q) = (self.p(u)[k], self.q(i)[k]);
                gp[u * f + k] += -e * q + reg * p;
                gq[i * f + k] += -e * p + reg * q;
            }
        }
        g
    }

    pub fn n_params(&self) -> usize {
        self.user_bias.len() + self.item_bias.len() + self.user_factors.len() + self.item_factors.len()
    }

    /// `[user_bias, item_bias, user_factors, item_factors]`.
    pub fn flat_params(&self) -> Vec<f64> {
        [&self.user_bias[..], &self.item_bias, &self.user_factors, &self.item_factors].concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut rest = flat;
        for block in [
            &mut self.user_bias,
            &mut self.item_bias,
            &mut self.user_factors,
            &mut self.item_factors,
        ] {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
    }

    fn all_finite(&self) -> bool {
        self.flat_params().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdPpModel {
    pub factors: usize,
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    /// Row-major `n_items x factors` implicit-feedback factors `y_j`.
    pub implicit_factors: Vec<f64>,
    /// `N(u)`: items rated by each user in training.
    pub rated: Vec<Vec<usize>>,
    /// Cached `p_u + |N(u)|^-½ Σ y_j`, refreshed by [`Self::refresh_user_vectors`].
    user_vectors: Vec<f64>,
}

impl SvdPpModel {
    pub fn init(train: &SparseRatingMatrix, factors: usize, init_std: f64, global_mean: f64, rng: &mut ChaCha8Rng) -> Self {
        let (nu, ni) = (train.n_users(), train.n_items());
        let user_factors = init_factors(nu * factors, init_std, rng);
        let item_factors = init_factors(ni * factors, init_std, rng);
        let implicit_factors = init_factors(ni * factors, init_std, rng);
        let rated = (0..nu).map(|u| train.user_row(u).iter().map(|&(i, _)| i).collect()).collect();
        let mut m = Self {
            factors,
            global_mean,
            user_bias: vec![0.0; nu],
            item_bias: vec![0.0; ni],
            user_factors,
            item_factors,
            implicit_factors,
            rated,
            user_vectors: Vec::new(),
        };
        m.refresh_user_vectors();
        m
    }

    /// Rebuilds a model from stored parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        factors: usize,
        global_mean: f64,
        user_bias: Vec<f64>,
        item_bias: Vec<f64>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
        implicit_factors: Vec<f64>,
        rated: Vec<Vec<usize>>,
    ) -> Self {
        let mut m = Self {
            factors,
            global_mean,
            user_bias,
            item_bias,
            user_factors,
            item_factors,
            implicit_factors,
            rated,
            user_vectors: Vec::new(),
        };
        m.refresh_user_vectors();
        m
    }

    fn q(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.factors..(i + 1) * self.factors]
    }

    fn y(&self, j: usize) -> &[f64] {
        &self.implicit_factors[j * self.factors..(j + 1) * self.factors]
    }

    /// `p_u + |N(u)|^-½ Σ_{j∈N(u)} y_j`, computed from the current parameters.
    fn user_vector(&self, u: usize, out: &mut [f64]) {
        let f = self.factors;
        out.copy_from_slice(&self.user_factors[u * f..(u + 1) * f]);
        let n = self.rated[u].len();
        if n == 0 {
            return;
        }
        let norm = (n as f64).powf(-0.5);
        for &j in &self.rated[u] {
            for (o, y) in out.iter_mut().zip(self.y(j)) {
                *o += norm * y;
            }
        }
    }

    pub fn refresh_user_vectors(&mut self) {
        let f = self.factors;
        let mut uv = vec![0.0; self.user_bias.len() * f];
        for (u, chunk) in uv.chunks_mut(f.max(1)).enumerate().take(self.user_bias.len()) {
            self.user_vector(u, chunk);
        }
        self.user_vectors = uv;
    }

    /// Prediction from the cached user vectors.
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        self.global_mean + self.user_bias[u] + self.item_bias[i] + dot(self.q(i), &self.user_vectors[u * f..(u + 1) * f])
    }

    /// Prediction computed from scratch (does not rely on the cache).
    pub fn predict_exact(&self, u: usize, i: usize) -> f64 {
        let mut z = vec![0.0; self.factors];
        self.user_vector(u, &mut z);
        self.global_mean + self.user_bias[u] + self.item_bias[i] + dot(self.q(i), &z)
    }

    /// One SGD update on a single observation; returns the pre-update error.
    /// Leaves the user-vector cache stale.
    pub fn sgd_step(&mut self, u: usize, i: usize, r: f64, lr: f64, reg: f64, z: &mut [f64]) -> f64 {
        let f = self.factors;
        self.user_vector(u, z);
        let e = r - (self.global_mean + self.user_bias[u] + self.item_bias[i] + dot(self.q(i), z));
        self.user_bias[u] += lr * (e - reg * self.user_bias[u]);
        self.item_bias[i] += lr * (e - reg * self.item_bias[i]);
        let norm = (self.rated[u].len().max(1) as f64).powf(-0.5);
        let q_old: Vec<f64> = self.q(i).to_vec();
        for k in 0..f {
            let p = self.user_factors[u * f + k];
            self.user_factors[u * f + k] += lr * (e * q_old[k] - reg * p);
            self.item_factors[i * f + k] += lr * (e * z[k] - reg * q_old[k]);
        }
        for &j in &self.rated[u] {
            for k in 0..f {
                let y = self.implicit_factors[j * f + k];
                self.implicit_factors[j * f + k] += lr * (e * norm * q_old[k] - reg * y);
            }
        }
        e
    }

    pub fn objective(&self, entries: &[(usize, usize, f64)], reg: f64) -> f64 {
        let f = self.factors;
        entries
            .iter()
            .map(|&(u, i, r)| {
                let e = r - self.predict_exact(u, i);
                let p = &self.user_factors[u * f..(u + 1) * f];
                let ys: f64 = self.rated[u].iter().map(|&j| dot(self.y(j), self.y(j))).sum();
                let norm = self.user_bias[u].powi(2) + self.item_bias[i].powi(2) + dot(p, p) + dot(self.q(i), self.q(i)) + ys;
                0.5 * e * e + 0.5 * reg * norm
            })
            .sum()
    }

    /// Gradient of [`Self::objective`] in the layout of [`Self::flat_params`].
    pub fn gradient(&self, entries: &[(usize, usize, f64)], reg: f64) -> Vec<f64> {
        let (nu, ni, f) = (self.user_bias.len(), self.item_bias.len(), self.factors);
        let mut g = vec![0.0; self.n_params()];
        let (gbu, rest) = g.split_at_mut(nu);
        let (gbi, rest) = rest.split_at_mut(ni);
        let (gp, rest) = rest.split_at_mut(nu * f);
        let (gq, gy) = rest.split_at_mut(ni * f);
        let mut z = vec![0.0; f];
        for &(u, i, r) in entries {
            self.user_vector(u, &mut z);
            let e = r - (self.global_mean + self.user_bias[u] + self.item_bias[i] + dot(self.q(i), &z));
            gbu[u] += -e + reg * self.user_bias[u];
            gbi[i] += -e + reg * self.item_bias[i];
            let norm = (self.rated[u].len().max(1) as f64).powf(-0.5);
            for k in 0..f {
                let q = self.q(i)[k];
                gp[u * f + k] += -e * q + reg * self.user_factors[u * f + k];
                gq[i * f + k] += -e * z[k] + reg * q;
            }
            for &j in &self.rated[u] {
                for k in 0..f {
                    gy[j * f + k] += -e * norm * self.q(i)[k] + reg * self.y(j)[k];
                }
            }
        }
        g
    }

    pub fn n_params(&self) -> usize {
        self.user_bias.len()
            + self.item_bias.len()
            + self.user_factors.len()
            + self.item_factors.len()
            + self.implicit_factors.len()
    }

    /// `[user_bias, item_bias, user_factors, item_factors, implicit_factors]`.
    pub fn flat_params(&self) -> Vec<f64> {
        [
            &self.user_bias[..],
            &self.item_bias,
            &self.user_factors,
            &self.item_factors,
            &self.implicit_factors,
        ]
        .concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut rest = flat;
        for block in [
            &mut self.user_bias,
            &mut self.item_bias,
            &mut self.user_factors,
            &mut self.item_factors,
            &mut self.implicit_factors,
        ] {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        self.refresh_user_vectors();
    }

    fn all_finite(&self) -> bool {
        self.flat_params().iter().all(|x| x.is_finite())
    }
}

fn training_entries(train: &SparseRatingMatrix) -> Vec<(usize, usize, f64)> {
    train.entries().collect()
}

fn check_epoch(sq_err: f64, finite: bool, epoch: usize, lr: f64) -> Result<()> {
    if !sq_err.is_finite() || !finite {
        return Err(Error::Divergence { epoch, lr });
    }
    Ok(())
}

pub fn fit_svd(train: &SparseRatingMatrix, params: SgdParams, seed: u64) -> Result<Predictor> {
    fit_svd_observed(train, params, seed, |_, _| {})
}

/// Like [`fit_svd`], calling `observer(epoch, model)` after every epoch.
pub fn fit_svd_observed(
    train: &SparseRatingMatrix,
    params: SgdParams,
    seed: u64,
    mut observer: impl FnMut(usize, &SvdModel),
) -> Result<Predictor> {
    params.validate()?;
    let stats = TrainStats::from_matrix(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = if params.add_global_mean { stats.global_mean } else { 0.0 };
    let mut model = SvdModel::init(train.n_users(), train.n_items(), params.factors, params.init_std, offset, &mut rng);
    let mut entries = training_entries(train);
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        entries.shuffle(&mut rng);
        let mut sq = 0.0;
        for &(u, i, r) in &entries {
            let e = model.sgd_step(u, i, r, params.lr, params.reg);
            sq += e * e;
        }
        check_epoch(sq, model.all_finite(), epoch, params.lr)?;
        history.push(sq / entries.len() as f64);
        observer(epoch, &model);
    }
    let train_rmse = rmse_of(&entries, |u, i| model.predict(u, i));
    Ok(Predictor {
        hyper: Hyper::Svd(params),
        seed,
        stats,
        model: Model::Svd(model),
        report: FitReport {
            history,
            train_rmse: Some(train_rmse),
            converged: None,
            epochs_run: params.epochs,
        },
    })
}

pub fn fit_svdpp(train: &SparseRatingMatrix, params: SgdParams, seed: u64) -> Result<Predictor> {
    fit_svdpp_observed(train, params, seed, |_, _| {})
}

pub fn fit_svdpp_observed(
    train: &SparseRatingMatrix,
    params: SgdParams,
    seed: u64,
    mut observer: impl FnMut(usize, &SvdPpModel),
) -> Result<Predictor> {
    params.validate()?;
    let stats = TrainStats::from_matrix(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SvdPpModel::init(train, params.factors, params.init_std, stats.global_mean, &mut rng);
    let mut entries = training_entries(train);
    let mut z = vec![0.0; params.factors];
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        entries.shuffle(&mut rng);
        let mut sq = 0.0;
        for &(u, i, r) in &entries {
            let e = model.sgd_step(u, i, r, params.lr, params.reg, &mut z);
            sq += e * e;
        }
        check_epoch(sq, model.all_finite(), epoch, params.lr)?;
        model.refresh_user_vectors();
        history.push(sq / entries.len() as f64);
        observer(epoch, &model);
    }
    model.refresh_user_vectors();
    let train_rmse = rmse_of(&entries, |u, i| model.predict(u, i));
    Ok(Predictor {
        hyper: Hyper::SvdPp(params),
        seed,
        stats,
        model: Model::SvdPp(model),
        report: FitReport {
            history,
            train_rmse: Some(train_rmse),
            converged: None,
            epochs_run: params.epochs,
        },
    })
}

fn rmse_of(entries: &[(usize, usize, f64)], predict: impl Fn(usize, usize) -> f64) -> f64 {
    if entries.is_empty() {
        return f64::NAN;
    }
    let sq: f64 = entries.iter().map(|&(u, i, r)| (r - predict(u, i)).powi(2)).sum();
    (sq / entries.len() as f64).sqrt()
}
