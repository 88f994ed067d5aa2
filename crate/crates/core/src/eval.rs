//! Ranking metrics: batched NDCG@k on ratings and GDCG/GNDCG@k on greenness.
//!
//! Both use exponential gains `2^x − 1` and the discount `1 / log₂(rank + 1)`
//! with 1-based ranks. NDCG is measured on seeded random batches of test
//! interactions and averaged over batches. GNDCG ranks each user's test items
//! and divides the mean GDCG by the mean GDCG of the greenness-sorted lists.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::footprint::GreennessTable;
use crate::models::Predict;
use crate::numeric::{compensated_sum, mean_std};
use crate::prep::SplitResult;

pub const DEFAULT_KS: [usize; 3] = [10, 20, 50];
pub const DEFAULT_BATCH_SIZE: usize = 100;

/// One candidate in a ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub user: usize,
    pub item: usize,
    pub score: f64,
    pub rating: f64,
    pub greenness: f64,
}

/// Total order used for every ranking: key descending, then item, then user.
pub fn rank_order(a: &RankedEntry, b: &RankedEntry, key: impl Fn(&RankedEntry) -> f64) -> Ordering {
    key(b)
        .total_cmp(&key(a))
        .then(a.item.cmp(&b.item))
        .then(a.user.cmp(&b.user))
}

/// Entries ordered by non-increasing score, ties by ascending item id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub owner: usize,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(owner: usize, entries: Vec<RankedEntry>) -> Self {
        Self::ordered_by(owner, entries, |e| e.score)
    }

    /// Ranks by an arbitrary key with the same tie rule.
    pub fn ordered_by(owner: usize, mut entries: Vec<RankedEntry>, key: impl Fn(&RankedEntry) -> f64) -> Self {
        entries.sort_by(|a, b| rank_order(a, b, &key));
        Self { owner, entries }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The same items ordered by actual greenness.
    pub fn ideal_by_greenness(&self) -> Self {
        Self::ordered_by(self.owner, self.entries.clone(), |e| e.greenness)
    }

    /// The same items ordered by true rating.
    pub fn ideal_by_rating(&self) -> Self {
        Self::ordered_by(self.owner, self.entries.clone(), |e| e.rating)
    }
}

pub fn gain(x: f64) -> f64 {
    x.exp2() - 1.0
}

fn dcg(values: impl Iterator<Item = f64>, k: usize) -> f64 {
    values
        .take(k)
        .enumerate()
        .map(|(pos, v)| gain(v) / ((pos + 2) as f64).log2())
        .sum()
}

/// GDCG@k of one list.
pub fn list_gdcg(list: &RankedList, k: usize) -> f64 {
    dcg(list.entries.iter().map(|e| e.greenness), k)
}

/// DCG@k of one list on true ratings.
pub fn list_dcg(list: &RankedList, k: usize) -> f64 {
    dcg(list.entries.iter().map(|e| e.rating), k)
}

/// NDCG@k of one list; a list whose ideal DCG is zero scores 1.
pub fn list_ndcg(list: &RankedList, k: usize) -> f64 {
    let ideal = list_dcg(&list.ideal_by_rating(), k);
    if ideal == 0.0 {
        log::warn!("list {} has zero ideal DCG; NDCG defined as 1", list.owner);
        return 1.0;
    }
    list_dcg(list, k) / ideal
}

fn check_lists(lists: &[RankedList], k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if lists.is_empty() {
        return Err(Error::Empty("ranked lists"));
    }
    Ok(())
}

/// Mean GDCG@k over the given per-user lists.
pub fn gdcg_at_k(lists: &[RankedList], k: usize) -> Result<f64> {
    check_lists(lists, k)?;
    let per: Vec<f64> = lists.par_iter().map(|l| list_gdcg(l, k)).collect();
    Ok(compensated_sum(per) / lists.len() as f64)
}

/// GDCG@k divided by the GDCG@k of the greenness-sorted lists.
pub fn gndcg_at_k(lists: &[RankedList], k: usize) -> Result<f64> {
    check_lists(lists, k)?;
    let pairs: Vec<(f64, f64)> = lists
        .par_iter()
        .map(|l| (list_gdcg(l, k), list_gdcg(&l.ideal_by_greenness(), k)))
        .collect();
    let actual = compensated_sum(pairs.iter().map(|p| p.0));
    let ideal = compensated_sum(pairs.iter().map(|p| p.1));
    if ideal == 0.0 {
        log::warn!("ideal GDCG is zero (all greenness 0); GNDCG defined as 1");
        return Ok(1.0);
    }
    Ok((actual / ideal).min(1.0))
}

/// Mean NDCG@k over lists.
pub fn mean_ndcg(lists: &[RankedList], k: usize) -> Result<f64> {
    check_lists(lists, k)?;
    let per: Vec<f64> = lists.par_iter().map(|l| list_ndcg(l, k)).collect();
    Ok(compensated_sum(per) / lists.len() as f64)
}

/// Seeded random partition into ranked batches; the last batch may be short.
pub fn make_batches(mut entries: Vec<RankedEntry>, batch_size: usize, seed: u64) -> Result<Vec<RankedList>> {
    if batch_size < 1 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    if entries.is_empty() {
        return Err(Error::Empty("test interactions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    Ok(entries
        .chunks(batch_size)
        .enumerate()
        .map(|(b, chunk)| RankedList::new(b, chunk.to_vec()))
        .collect())
}

/// NDCG@k averaged over seeded batches of `batch_size` interactions.
pub fn ndcg_batched(scored: &[RankedEntry], k: usize, batch_size: usize, seed: u64) -> Result<f64> {
    mean_ndcg(&make_batches(scored.to_vec(), batch_size, seed)?, k)
}

/// Groups entries into one ranked list per user, in user order.
pub fn user_lists(entries: &[RankedEntry]) -> Vec<RankedList> {
    let mut by_user: std::collections::BTreeMap<usize, Vec<RankedEntry>> = Default::default();
    for e in entries {
        by_user.entry(e.user).or_default().push(*e);
    }
    by_user.into_iter().map(|(u, es)| RankedList::new(u, es)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Seed of the batch partition; `None` uses the split's seed.
    pub batch_seed: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            batch_seed: None,
        }
    }
}

/// Clipped predictions for every test interaction, with their greenness.
pub fn score_test(predictor: &(impl Predict + ?Sized), test: &Dataset, greenness: &GreennessTable) -> Result<Vec<RankedEntry>> {
    let mut missing: Vec<String> = test
        .interactions()
        .iter()
        .filter(|x| greenness.greenness(x.item).is_none())
        .map(|x| test.items().id(x.item).to_string())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingGreenness(missing));
    }
    Ok(test
        .interactions()
        .par_iter()
        .map(|x| RankedEntry {
            user: x.user,
            item: x.item,
            score: crate::clip_score(predictor.predict(x.user, x.item)),
            rating: x.rating,
            greenness: greenness.greenness(x.item).unwrap_or(0.0),
        })
        .collect())
}

/// The two list families every metric is computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct TestLists {
    pub batches: Vec<RankedList>,
    pub users: Vec<RankedList>,
}

impl TestLists {
    pub fn build(entries: Vec<RankedEntry>, batch_size: usize, batch_seed: u64) -> Result<Self> {
        let users = user_lists(&entries);
        let batches = make_batches(entries, batch_size, batch_seed)?;
        Ok(Self { batches, users })
    }

    pub fn metrics(&self, ks: &[usize]) -> Result<Vec<KMetrics>> {
        ks.iter()
            .map(|&k| {
                Ok(KMetrics {
                    k,
                    ndcg: mean_ndcg(&self.batches, k)?,
                    gndcg: gndcg_at_k(&self.users, k)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub ndcg: f64,
    pub gndcg: f64,
}

/// NDCG@k and GNDCG@k of `predictor` on one split's test partition.
pub fn evaluate(
    predictor: &(impl Predict + ?Sized),
    split: &SplitResult,
    greenness: &GreennessTable,
    ks: &[usize],
    options: &EvalOptions,
) -> Result<Vec<KMetrics>> {
    let entries = score_test(predictor, &split.test, greenness)?;
    TestLists::build(entries, options.batch_size, options.batch_seed.unwrap_or(split.seed))?.metrics(ks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Gndcg,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Gndcg => "gndcg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub k: usize,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation across splits (0 for a single split).
    pub std: f64,
    pub n_splits: usize,
}

/// Metrics aggregated across splits for one algorithm and α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algo: String,
    pub alpha: f64,
    pub summaries: Vec<MetricSummary>,
}

impl EvalReport {
    /// Aggregates per-split metrics; every split must cover the same ks.
    pub fn from_splits(algo: impl Into<String>, alpha: f64, per_split: &[Vec<KMetrics>]) -> Result<Self> {
        let first = per_split.first().ok_or(Error::Empty("splits"))?;
        let ks: Vec<usize> = first.iter().map(|m| m.k).collect();
        if per_split.iter().any(|s| s.iter().map(|m| m.k).ne(ks.iter().copied())) {
            return Err(Error::InvalidParameter("splits report different ks".into()));
        }
        let mut summaries = Vec::new();
        for metric in [Metric::Ndcg, Metric::Gndcg] {
            for (pos, &k) in ks.iter().enumerate() {
                let values: Vec<f64> = per_split
                    .iter()
                    .map(|s| match metric {
                        Metric::Ndcg => s[pos].ndcg,
                        Metric::Gndcg => s[pos].gndcg,
                    })
                    .collect();
                let (mean, std) = mean_std(&values);
                summaries.push(MetricSummary {
                    k,
                    metric,
                    mean,
                    std,
                    n_splits: values.len(),
                });
            }
        }
        Ok(Self {
            algo: algo.into(),
            alpha,
            summaries,
        })
    }

    pub fn get(&self, k: usize, metric: Metric) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.k == k && s.metric == metric)
    }

    pub const CSV_HEADER: [&'static str; 7] = ["algo", "alpha", "k", "metric", "mean", "std", "n_splits"];

    pub fn csv_rows(&self) -> impl Iterator<Item = [String; 7]> + '_ {
        self.summaries.iter().map(move |s| {
            [
                self.algo.clone(),
                format!("{:.1}", self.alpha),
                s.k.to_string(),
                s.metric.as_str().to_string(),
                s.mean.to_string(),
                s.std.to_string(),
                s.n_splits.to_string(),
            ]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(item: usize, score: f64, rating: f64, greenness: f64) -> RankedEntry {
        RankedEntry {
            user: 0,
            item,
            score,
            rating,
            greenness,
        }
    }

    fn by_rank(greens: &[f64]) -> RankedList {
        let n = greens.len();
        RankedList::new(0, greens.iter().enumerate().map(|(p, &g)| entry(p, (n - p) as f64, 0.0, g)).collect())
    }

    #[test]
    fn gdcg_single_item() {
        assert_eq!(gdcg_at_k(&[by_rank(&[5.0])], 10).unwrap(), 31.0);
    }

    #[test]
    fn gdcg_hand_example() {
        let v = gdcg_at_k(&[by_rank(&[3.0, 1.0, 2.0])], 3).unwrap();
        assert!((v - (7.0 + 1.0 / 3f64.log2() + 1.5)).abs() < 1e-12);
        assert!((v - 9.1309).abs() < 1e-4);
        let n = gndcg_at_k(&[by_rank(&[3.0, 1.0, 2.0])], 3).unwrap();
        assert!((n - 9.1309 / 9.3927).abs() < 1e-4);
    }

    #[test]
    fn zero_greenness() {
        let l = by_rank(&[0.0, 0.0]);
        assert_eq!(gdcg_at_k(&[l.clone()], 5).unwrap(), 0.0);
        assert_eq!(gndcg_at_k(&[l], 5).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_hand_example() {
        let es = vec![entry(0, 3.0, 1.0, 0.0), entry(1, 2.0, 5.0, 0.0), entry(2, 1.0, 0.0, 0.0)];
        let v = ndcg_batched(&es, 3, 100, 1).unwrap();
        let dcg = 1.0 + 31.0 / 3f64.log2();
        let idcg = 31.0 + 1.0 / 3f64.log2();
        assert!((v - dcg / idcg).abs() < 1e-12);
        assert!((v - 0.650).abs() < 1e-3);
    }

    #[test]
    fn perfect_and_reversed_ranking() {
        let ratings = [5.0, 4.0, 3.0, 1.0, 0.0];
        let good: Vec<_> = ratings.iter().enumerate().map(|(i, &r)| entry(i, r, r, 0.0)).collect();
        let bad: Vec<_> = ratings.iter().enumerate().map(|(i, &r)| entry(i, -r, r, 0.0)).collect();
        assert_eq!(ndcg_batched(&good, 5, 100, 0).unwrap(), 1.0);
        assert!(ndcg_batched(&bad, 5, 100, 0).unwrap() < 1.0);
    }

    #[test]
    fn ties_break_by_item() {
        let l = RankedList::new(0, vec![entry(3, 1.0, 0.0, 0.0), entry(1, 1.0, 0.0, 0.0), entry(2, 2.0, 0.0, 0.0)]);
        let items: Vec<_> = l.entries().iter().map(|e| e.item).collect();
        assert_eq!(items, vec![2, 1, 3]);
    }

    #[test]
    fn partial_batch_kept() {
        let es: Vec<_> = (0..250).map(|i| entry(i, 0.0, 1.0, 0.0)).collect();
        let b = make_batches(es, 100, 3).unwrap();
        assert_eq!(b.iter().map(RankedList::len).collect::<Vec<_>>(), vec![100, 100, 50]);
    }

    #[test]
    fn zero_ideal_batch_scores_one() {
        let es = vec![entry(0, 1.0, 0.0, 0.0), entry(1, 2.0, 0.0, 0.0)];
        assert_eq!(ndcg_batched(&es, 10, 100, 0).unwrap(), 1.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(gdcg_at_k(&[], 10).is_err());
        assert!(ndcg_batched(&[], 10, 100, 0).is_err());
        assert!(gdcg_at_k(&[by_rank(&[1.0])], 0).is_err());
    }

    #[test]
    fn report_aggregates_splits() {
        let s = |n: f64| vec![KMetrics { k: 10, ndcg: n, gndcg: 0.5 }];
        let r = EvalReport::from_splits("svd", 1.0, &[s(0.8), s(0.9)]).unwrap();
        let m = r.get(10, Metric::Ndcg).unwrap();
        assert!((m.mean - 0.85).abs() < 1e-12);
        assert!((m.std - (0.005f64).sqrt()).abs() < 1e-12);
        assert_eq!(r.get(10, Metric::Gndcg).unwrap().std, 0.0);
        assert_eq!(r.csv_rows().count(), 2);
    }
}
