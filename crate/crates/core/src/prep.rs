//! Pre-filtering of sparse users and items, and the no-cold-start
//! train/validation/test split.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefilterConfig {
    /// Items with fewer ratings are dropped.
    pub min_item_ratings: usize,
    /// Items whose raters average fewer total ratings are dropped.
    pub min_user_mean: f64,
}

impl Default for PrefilterConfig {
    fn default() -> Self {
        Self {
            min_item_ratings: 20,
            min_user_mean: 20.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StepRemoval {
    pub step: &'static str,
    pub interactions: usize,
    pub users: usize,
    pub items: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PrefilterReport {
    pub steps: Vec<StepRemoval>,
}

const STEP_NAMES: [&str; 6] = [
    "min-item-ratings",
    "item-predicate",
    "empty-users",
    "single-rating-users",
    "sparse-rater-items",
    "empty-users-final",
];

/// Applies the five pre-filtering steps in order and reindexes the result.
///
/// `keep_item` receives external item ids; items for which it returns false
/// are dropped in step 2.
pub fn prefilter(
    dataset: &Dataset,
    config: &PrefilterConfig,
    keep_item: Option<&(dyn Fn(&str) -> bool + Sync)>,
) -> Result<(Dataset, PrefilterReport)> {
    if config.min_item_ratings < 1 || !(config.min_user_mean >= 1.0) {
        return Err(Error::InvalidParameter("pre-filter thresholds must be >= 1".into()));
    }
    let ints = dataset.interactions();
    let mut alive = vec![true; ints.len()];
    let mut report = PrefilterReport::default();
    let mut census = Census::new(dataset, &alive);

    let mut record = |step: usize, alive: &[bool], census: &mut Census| -> Result<()> {
        let next = Census::new(dataset, alive);
        report.steps.push(StepRemoval {
            step: STEP_NAMES[step],
            interactions: census.interactions - next.interactions,
            users: census.users - next.users,
            items: census.items - next.items,
        });
        *census = next;
        if census.interactions == 0 {
            return Err(Error::FilteredToEmpty { step: STEP_NAMES[step] });
        }
        Ok(())
    };

    // 1) items with too few ratings
    let item_counts = counts(ints, &alive, |it| it.item, dataset.n_items());
    for (k, it) in ints.iter().enumerate() {
        if item_counts[it.item] < config.min_item_ratings {
            alive[k] = false;
        }
    }
    record(0, &alive, &mut census)?;

    // 2) items failing the availability predicate
    if let Some(keep) = keep_item {
        let keep_ix: Vec<bool> = dataset.items().ids().iter().map(|id| keep(id)).collect();
        for (k, it) in ints.iter().enumerate() {
            if !keep_ix[it.item] {
                alive[k] = false;
            }
        }
    }
    record(1, &alive, &mut census)?;

    // 3) users left without interactions disappear with them
    record(2, &alive, &mut census)?;

    // 4) single-rating users, as long as their item keeps enough ratings
    let user_counts = counts(ints, &alive, |it| it.user, dataset.n_users());
    let mut item_counts = counts(ints, &alive, |it| it.item, dataset.n_items());
    let mut singletons: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_items()];
    for (k, it) in ints.iter().enumerate() {
        if alive[k] && user_counts[it.user] == 1 {
            singletons[it.item].push(k);
        }
    }
    for (item, ks) in singletons.iter().enumerate() {
        for &k in ks {
            if item_counts[item] > config.min_item_ratings {
                alive[k] = false;
                item_counts[item] -= 1;
            }
        }
    }
    record(3, &alive, &mut census)?;

    // 5) items whose raters are, on average, light users
    let user_counts = counts(ints, &alive, |it| it.user, dataset.n_users());
    let mut rater_total = vec![0usize; dataset.n_items()];
    let mut rater_n = vec![0usize; dataset.n_items()];
    for (k, it) in ints.iter().enumerate() {
        if alive[k] {
            rater_total[it.item] += user_counts[it.user];
            rater_n[it.item] += 1;
        }
    }
    for (k, it) in ints.iter().enumerate() {
        if alive[k] {
            let mean = rater_total[it.item] as f64 / rater_n[it.item] as f64;
            if mean < config.min_user_mean {
                alive[k] = false;
            }
        }
    }
    record(4, &alive, &mut census)?;

    // 3) again
    record(5, &alive, &mut census)?;

    let mut k = 0;
    let out = dataset.retain_reindexed(|_| {
        let keep = alive[k];
        k += 1;
        keep
    });
    Ok((out, report))
}

struct Census {
    interactions: usize,
    users: usize,
    items: usize,
}

impl Census {
    fn new(dataset: &Dataset, alive: &[bool]) -> Self {
        let mut users = vec![false; dataset.n_users()];
        let mut items = vec![false; dataset.n_items()];
        let mut n = 0;
        for (it, &a) in dataset.interactions().iter().zip(alive) {
            if a {
                n += 1;
                users[it.user] = true;
                items[it.item] = true;
            }
        }
        Self {
            interactions: n,
            users: users.iter().filter(|&&x| x).count(),
            items: items.iter().filter(|&&x| x).count(),
        }
    }
}

fn counts(ints: &[Interaction], alive: &[bool], key: impl Fn(&Interaction) -> usize, n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for (it, &a) in ints.iter().zip(alive) {
        if a {
            c[key(it)] += 1;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        let sum: f64 = all.iter().sum();
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split ratios must be in [0,1] and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

/// Reported when the eligibility rule ran out of movable interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Underfilled {
    pub target_validation: usize,
    pub target_test: usize,
    pub achieved: SplitRatios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub underfilled: Option<Underfilled>,
}

impl SplitResult {
    pub fn achieved(&self) -> SplitRatios {
        let n = (self.train.len() + self.validation.len() + self.test.len()).max(1) as f64;
        SplitRatios {
            train: self.train.len() as f64 / n,
            validation: self.validation.len() as f64 / n,
            test: self.test.len() as f64 / n,
        }
    }
}

/// Set of candidate interaction indices with O(1) removal and indexed sampling.
struct EligibleSet {
    members: Vec<usize>,
    position: Vec<usize>,
}

impl EligibleSet {
    const ABSENT: usize = usize::MAX;

    fn new(universe: usize, members: Vec<usize>) -> Self {
        let mut position = vec![Self::ABSENT; universe];
        for (p, &m) in members.iter().enumerate() {
            position[m] = p;
        }
        Self { members, position }
    }

    fn remove(&mut self, m: usize) {
        let p = self.position[m];
        if p == Self::ABSENT {
            return;
        }
        self.members.swap_remove(p);
        if let Some(&moved) = self.members.get(p) {
            self.position[moved] = p;
        }
        self.position[m] = Self::ABSENT;
    }
}

struct Carver<'a> {
    ints: &'a [Interaction],
    in_train: Vec<bool>,
    user_count: Vec<usize>,
    item_count: Vec<usize>,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl<'a> Carver<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let ints = dataset.interactions();
        let mut by_user = vec![Vec::new(); dataset.n_users()];
        let mut by_item = vec![Vec::new(); dataset.n_items()];
        for (k, it) in ints.iter().enumerate() {
            by_user[it.user].push(k);
            by_item[it.item].push(k);
        }
        Self {
            ints,
            in_train: vec![true; ints.len()],
            user_count: by_user.iter().map(Vec::len).collect(),
            item_count: by_item.iter().map(Vec::len).collect(),
            by_user,
            by_item,
        }
    }

    /// Moves up to `target` randomly chosen interactions out of train. An
    /// interaction is eligible while both its user and item still have at
    /// least two training interactions, so each keeps at least one.
    fn carve(&mut self, target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let candidates = (0..self.ints.len())
            .filter(|&k| {
                let it = &self.ints[k];
                self.in_train[k] && self.user_count[it.user] >= 2 && self.item_count[it.item] >= 2
            })
            .collect();
        let mut eligible = EligibleSet::new(self.ints.len(), candidates);
        let mut moved = Vec::with_capacity(target);
        while moved.len() < target && !eligible.members.is_empty() {
            let pick = eligible.members[rng.random_range(0..eligible.members.len())];
            eligible.remove(pick);
            let it = self.ints[pick];
            self.in_train[pick] = false;
            self.user_count[it.user] -= 1;
            self.item_count[it.item] -= 1;
            moved.push(pick);
            if self.user_count[it.user] < 2 {
                for &k in &self.by_user[it.user] {
                    eligible.remove(k);
                }
            }
            if self.item_count[it.item] < 2 {
                for &k in &self.by_item[it.item] {
                    eligible.remove(k);
                }
            }
        }
        moved.sort_unstable();
        moved
    }
}

fn target_count(ratio: f64, n: usize) -> usize {
    // guard against 0.2 * n landing a hair above an integer
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Carves test, then validation, out of an all-train starting point.
pub fn split(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<SplitResult> {
    ratios.validate()?;
    let n = dataset.len();
    let target_test = target_count(ratios.test, n);
    let target_validation = target_count(ratios.validation, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carver = Carver::new(dataset);
    let test_ix = carver.carve(target_test, &mut rng);
    let val_ix = carver.carve(target_validation, &mut rng);

    let ints = dataset.interactions();
    let pick = |ix: &[usize]| ix.iter().map(|&k| ints[k]).collect::<Vec<_>>();
    let train: Vec<Interaction> = ints
        .iter()
        .zip(&carver.in_train)
        .filter(|(_, &t)| t)
        .map(|(it, _)| *it)
        .collect();
    let mut result = SplitResult {
        seed,
        ratios,
        train: dataset.view(train),
        validation: dataset.view(pick(&val_ix)),
        test: dataset.view(pick(&test_ix)),
        underfilled: None,
    };
    if test_ix.len() < target_test || val_ix.len() < target_validation {
        let achieved = result.achieved();
        log::warn!(
            "split seed {seed} underfilled: achieved train/val/test = {:.3}/{:.3}/{:.3}",
            achieved.train,
            achieved.validation,
            achieved.test
        );
        result.underfilled = Some(Underfilled {
            target_validation,
            target_test,
            achieved,
        });
    }
    Ok(result)
}

/// `n` splits seeded `base_seed, base_seed + 1, ...`.
pub fn make_splits(dataset: &Dataset, n: usize, base_seed: u64, ratios: SplitRatios) -> Result<Vec<SplitResult>> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of splits must be >= 1".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|k| split(dataset, ratios, base_seed + k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSidecar {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub achieved: SplitRatios,
    pub counts: [usize; 3],
    pub underfilled: Option<Underfilled>,
}

/// Writes `user_id,item_id,partition` rows plus a JSON sidecar next to it.
pub fn write_manifest(split: &SplitResult, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["user_id", "item_id", "partition"])?;
    for (part, ds) in [
        (Partition::Train, &split.train),
        (Partition::Validation, &split.validation),
        (Partition::Test, &split.test),
    ] {
        for it in ds.interactions() {
            w.write_record([ds.users().id(it.user), ds.items().id(it.item), part.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let sidecar = SplitSidecar {
        seed: split.seed,
        ratios: split.ratios,
        achieved: split.achieved(),
        counts: [split.train.len(), split.validation.len(), split.test.len()],
        underfilled: split.underfilled,
    };
    let json_path = json_path.as_ref();
    let file = File::create(json_path).map_err(|e| Error::io(json_path, e))?;
    serde_json::to_writer_pretty(file, &sidecar)?;
    Ok(())
}

/// Rebuilds a split of `dataset` from a manifest and its sidecar.
pub fn read_manifest(dataset: &Dataset, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<SplitResult> {
    let json_path = json_path.as_ref();
    let file = File::open(json_path).map_err(|e| Error::io(json_path, e))?;
    let sidecar: SplitSidecar = serde_json::from_reader(file)?;

    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(dataset.len());
    for (k, it) in dataset.interactions().iter().enumerate() {
        lookup.insert((it.user, it.item), k);
    }
    let csv_path = csv_path.as_ref();
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut seen = vec![false; dataset.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row { line, message };
        let (user, item, part) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""), rec.get(2).unwrap_or(""));
        let key = dataset
            .users()
            .get(user)
            .zip(dataset.items().get(item))
            .ok_or_else(|| row_err(format!("pair ({user}, {item}) not in dataset")))?;
        let k = *lookup
            .get(&key)
            .ok_or_else(|| row_err(format!("pair ({user}, {item}) not in dataset")))?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(row_err(format!("pair ({user}, {item}) listed twice")));
        }
        let slot = match part {
            "train" => 0,
            "validation" => 1,
            "test" => 2,
            other => return Err(row_err(format!("unknown partition {other:?}"))),
        };
        parts[slot].push(k);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Schema("manifest does not cover every interaction".into()));
    }
    let ints = dataset.interactions();
    let [train, validation, test] = parts.map(|mut ix| {
        ix.sort_unstable();
        dataset.view(ix.into_iter().map(|k| ints[k]).collect())
    });
    Ok(SplitResult {
        seed: sidecar.seed,
        ratios: sidecar.ratios,
        train,
        validation,
        test,
        underfilled: sidecar.underfilled,
    })
}
