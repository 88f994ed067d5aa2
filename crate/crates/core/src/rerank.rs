//! Accuracy/greenness reranking with the utility `α·r̂ + (1−α)·g`.
//!
//! Lists are reranked in full before truncation to `k`, with the usual tie
//! rule. At `α = 1` the utility equals the predicted score, so the order and
//! every metric match the unreranked evaluation bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{gndcg_at_k, mean_ndcg, score_test, EvalOptions, EvalReport, KMetrics, RankedEntry, RankedList, TestLists};
use crate::footprint::GreennessTable;
use crate::models::Predict;
use crate::numeric::{compensated_sum, mean_std};
use crate::prep::SplitResult;

/// `α` values `0, 0.1, …, 1`.
pub fn default_alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Parses `start:end:step` (inclusive) or a comma-separated list.
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("cannot parse alphas {spec:?}"));
    let alphas: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    for &a in &alphas {
        check_alpha(a)?;
    }
    Ok(alphas)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must be in [0,1], got {alpha}")));
    }
    Ok(())
}

pub fn utility(score: f64, greenness: f64, alpha: f64) -> f64 {
    alpha * score + (1.0 - alpha) * greenness
}

/// Reorders `list` by utility, which replaces each entry's score. Set
/// membership is unchanged.
pub fn rerank_list(list: &RankedList, alpha: f64) -> Result<RankedList> {
    check_alpha(alpha)?;
    let entries = list
        .entries()
        .iter()
        .map(|e| RankedEntry {
            score: utility(e.score, e.greenness, alpha),
            ..*e
        })
        .collect();
    Ok(RankedList::new(list.owner, entries))
}

fn rerank_all(lists: &[RankedList], alpha: f64) -> Result<Vec<RankedList>> {
    lists.par_iter().map(|l| rerank_list(l, alpha)).collect()
}

/// Metrics at one `(α, k)` with relative changes against `α = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub alpha: f64,
    pub k: usize,
    pub ndcg: f64,
    pub gndcg: f64,
    pub ndcg_rel: f64,
    pub gndcg_rel: f64,
}

fn relative(x: f64, base: f64) -> f64 {
    if x == base {
        0.0
    } else {
        (x - base) / base
    }
}

/// Reranked metrics for every `(α, k)`, α-major.
pub fn alpha_sweep(lists: &TestLists, alphas: &[f64], ks: &[usize]) -> Result<Vec<TradeoffPoint>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let base = lists.metrics(ks)?;
    let mut out = Vec::with_capacity(alphas.len() * ks.len());
    for &alpha in alphas {
        let metrics = if alpha == 1.0 {
            base.clone()
        } else {
            let batches = rerank_all(&lists.batches, alpha)?;
            let users = rerank_all(&lists.users, alpha)?;
            ks.iter()
                .map(|&k| {
                    Ok(KMetrics {
                        k,
                        ndcg: mean_ndcg(&batches, k)?,
                        gndcg: gndcg_at_k(&users, k)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        for (m, b) in metrics.iter().zip(&base) {
            out.push(TradeoffPoint {
                alpha,
                k: m.k,
                ndcg: m.ndcg,
                gndcg: m.gndcg,
                ndcg_rel: relative(m.ndcg, b.ndcg),
                gndcg_rel: relative(m.gndcg, b.gndcg),
            });
        }
    }
    Ok(out)
}

/// Scores one split's test partition and sweeps `α`.
pub fn sweep_split(
    predictor: &(impl Predict + ?Sized),
    split: &SplitResult,
    greenness: &GreennessTable,
    alphas: &[f64],
    ks: &[usize],
    options: &EvalOptions,
) -> Result<Vec<TradeoffPoint>> {
    sweep_dataset(predictor, &split.test, greenness, alphas, ks, options.batch_size, options.batch_seed.unwrap_or(split.seed))
}

pub fn sweep_dataset(
    predictor: &(impl Predict + ?Sized),
    test: &Dataset,
    greenness: &GreennessTable,
    alphas: &[f64],
    ks: &[usize],
    batch_size: usize,
    batch_seed: u64,
) -> Result<Vec<TradeoffPoint>> {
    let entries = score_test(predictor, test, greenness)?;
    alpha_sweep(&TestLists::build(entries, batch_size, batch_seed)?, alphas, ks)
}

/// Averages per-split sweeps. Relative changes are taken between the means
/// when the sweep includes `α = 1`, else the per-split changes are averaged.
pub fn mean_tradeoff(per_split: &[Vec<TradeoffPoint>]) -> Result<Vec<TradeoffPoint>> {
    let first = per_split.first().ok_or(Error::Empty("splits"))?;
    if per_split.iter().any(|s| s.len() != first.len()) {
        return Err(Error::InvalidParameter("sweeps have different shapes".into()));
    }
    let mean_at = |pos: usize, f: fn(&TradeoffPoint) -> f64| compensated_sum(per_split.iter().map(|s| f(&s[pos]))) / per_split.len() as f64;
    let mut out: Vec<TradeoffPoint> = (0..first.len())
        .map(|pos| TradeoffPoint {
            alpha: first[pos].alpha,
            k: first[pos].k,
            ndcg: mean_at(pos, |p| p.ndcg),
            gndcg: mean_at(pos, |p| p.gndcg),
            ndcg_rel: mean_at(pos, |p| p.ndcg_rel),
            gndcg_rel: mean_at(pos, |p| p.gndcg_rel),
        })
        .collect();
    let bases: Vec<TradeoffPoint> = out.iter().filter(|p| p.alpha == 1.0).copied().collect();
    for p in &mut out {
        if let Some(b) = bases.iter().find(|b| b.k == p.k) {
            p.ndcg_rel = relative(p.ndcg, b.ndcg);
            p.gndcg_rel = relative(p.gndcg, b.gndcg);
        }
    }
    Ok(out)
}

/// One [`EvalReport`] per `α` from per-split sweeps.
pub fn sweep_reports(algo: &str, per_split: &[Vec<TradeoffPoint>]) -> Result<Vec<EvalReport>> {
    let first = per_split.first().ok_or(Error::Empty("splits"))?;
    let mut alphas: Vec<f64> = first.iter().map(|p| p.alpha).collect();
    alphas.dedup();
    alphas
        .into_iter()
        .map(|alpha| {
            let per: Vec<Vec<KMetrics>> = per_split
                .iter()
                .map(|s| {
                    s.iter()
                        .filter(|p| p.alpha == alpha)
                        .map(|p| KMetrics {
                            k: p.k,
                            ndcg: p.ndcg,
                            gndcg: p.gndcg,
                        })
                        .collect()
                })
                .collect();
            EvalReport::from_splits(algo, alpha, &per)
        })
        .collect()
}

/// Standard deviation of a metric across splits at one `(α, k)`.
pub fn spread(per_split: &[Vec<TradeoffPoint>], pos: usize, f: fn(&TradeoffPoint) -> f64) -> f64 {
    let v: Vec<f64> = per_split.iter().map(|s| f(&s[pos])).collect();
    mean_std(&v).1
}
