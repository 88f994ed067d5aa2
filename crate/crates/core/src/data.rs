//! Interaction data: identifier indexing, CSV ingestion and the sparse rating
//! matrix every trainer consumes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SCALE_MAX;

/// Bijection between opaque external ids and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = Self::new();
        for id in ids {
            let id = id.into();
            if index.lookup.contains_key(&id) {
                return Err(Error::Schema(format!("duplicate id {id:?} in index")));
            }
            index.get_or_insert(&id);
        }
        Ok(index)
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.lookup.get(id) {
            return ix;
        }
        let ix = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), ix);
        ix
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One rating event, with user and item resolved to dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    /// Seconds since the Unix epoch, when the source provided a date.
    pub timestamp: Option<i64>,
}

/// Column names used when reading an interaction CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub user: String,
    pub item: String,
    pub rating: String,
    /// Optional; ignored with a warning when the file lacks the column.
    pub timestamp: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            user: "user_id".into(),
            item: "item_id".into(),
            rating: "rating".into(),
            timestamp: Some("date".into()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub schema: Schema,
    /// Skip malformed rows instead of failing on the first one.
    pub skip_bad_rows: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub duplicates_removed: usize,
}

/// Interactions plus the user and item id indices they resolve through.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: IdIndex,
    items: IdIndex,
}

impl Dataset {
    /// Builds a dataset from raw interactions with external ids, applying the
    /// same duplicate rule as CSV ingestion. Returns the number of duplicates
    /// dropped alongside the dataset.
    pub fn from_raw<I, S>(rows: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (S, S, f64, Option<i64>)>,
        S: AsRef<str>,
    {
        let mut builder = Builder::default();
        for (user, item, rating, ts) in rows {
            validate_rating(rating).map_err(Error::Domain)?;
            builder.push(user.as_ref(), item.as_ref(), rating, ts);
        }
        Ok(builder.finish())
    }

    /// Convenience constructor for `(user, item, rating)` triples without dates.
    pub fn from_triples<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: AsRef<str>,
    {
        Ok(Self::from_raw(rows.into_iter().map(|(u, i, r)| (u, i, r, None)))?.0)
    }

    /// Assembles a dataset from already-indexed parts.
    pub fn from_parts(interactions: Vec<Interaction>, users: IdIndex, items: IdIndex) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(interactions.len());
        for it in &interactions {
            if it.user >= users.len() || it.item >= items.len() {
                return Err(Error::Schema(format!(
                    "interaction ({}, {}) outside index space {}x{}",
                    it.user,
                    it.item,
                    users.len(),
                    items.len()
                )));
            }
            validate_rating(it.rating).map_err(Error::Domain)?;
            if !seen.insert((it.user, it.item)) {
                return Err(Error::Schema(format!(
                    "duplicate pair ({}, {})",
                    users.id(it.user),
                    items.id(it.item)
                )));
            }
        }
        Ok(Self {
            interactions,
            users,
            items,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn users(&self) -> &IdIndex {
        &self.users
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Same id space, different interaction subset. Used for split partitions
    /// so that every partition indexes users and items identically.
    pub fn view(&self, interactions: Vec<Interaction>) -> Self {
        Self {
            interactions,
            users: self.users.clone(),
            items: self.items.clone(),
        }
    }

    /// Keeps the interactions matching `keep` and rebuilds dense indices over
    /// the surviving ids, preserving their relative order.
    pub fn retain_reindexed(&self, mut keep: impl FnMut(&Interaction) -> bool) -> Self {
        let kept: Vec<Interaction> = self.interactions.iter().copied().filter(|it| keep(it)).collect();
        let mut user_alive = vec![false; self.n_users()];
        let mut item_alive = vec![false; self.n_items()];
        for it in &kept {
            user_alive[it.user] = true;
            item_alive[it.item] = true;
        }
        let (users, user_map) = compact(&self.users, &user_alive);
        let (items, item_map) = compact(&self.items, &item_alive);
        let interactions = kept
            .into_iter()
            .map(|it| Interaction {
                user: user_map[it.user],
                item: item_map[it.item],
                ..it
            })
            .collect();
        Self {
            interactions,
            users,
            items,
        }
    }

    pub fn matrix(&self) -> SparseRatingMatrix {
        build_matrix(self)
    }

    /// Writes `user_id,item_id,rating,date` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "item_id", "rating", "date"])?;
        for it in &self.interactions {
            w.write_record([
                self.users.id(it.user),
                self.items.id(it.item),
                &it.rating.to_string(),
                &it.timestamp.map(format_timestamp).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn compact(index: &IdIndex, alive: &[bool]) -> (IdIndex, Vec<usize>) {
    let mut out = IdIndex::new();
    let mut map = vec![usize::MAX; alive.len()];
    for (old, &a) in alive.iter().enumerate() {
        if a {
            map[old] = out.get_or_insert(index.id(old));
        }
    }
    (out, map)
}

fn validate_rating(rating: f64) -> std::result::Result<(), String> {
    if !rating.is_finite() || !(0.0..=SCALE_MAX).contains(&rating) {
        return Err(format!("rating out of range [0,5]: {rating}"));
    }
    Ok(())
}

/// Accumulates rows and resolves duplicate `(user, item)` pairs: the latest
/// timestamp wins, and the later row wins on ties or missing dates.
#[derive(Default)]
struct Builder {
    users: IdIndex,
    items: IdIndex,
    rows: Vec<Interaction>,
    slot: HashMap<(usize, usize), usize>,
    duplicates: usize,
}

impl Builder {
    fn push(&mut self, user: &str, item: &str, rating: f64, timestamp: Option<i64>) {
        let u = self.users.get_or_insert(user);
        let i = self.items.get_or_insert(item);
        let row = Interaction {
            user: u,
            item: i,
            rating,
            timestamp,
        };
        match self.slot.get(&(u, i)) {
            Some(&pos) => {
                self.duplicates += 1;
                let old = self.rows[pos];
                let replace = match (old.timestamp, timestamp) {
                    (Some(a), Some(b)) => b >= a,
                    _ => true,
                };
                if replace {
                    self.rows[pos] = row;
                }
            }
            None => {
                self.slot.insert((u, i), self.rows.len());
                self.rows.push(row);
            }
        }
    }

    fn finish(self) -> (Dataset, usize) {
        (
            Dataset {
                interactions: self.rows,
                users: self.users,
                items: self.items,
            },
            self.duplicates,
        )
    }
}

/// Parses ISO-8601 dates (`2008-01-20`) and date-times, with or without offset.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(ts: i64) -> String {
    match DateTime::from_timestamp(ts, 0) {
        Some(dt) if ts % 86_400 == 0 => dt.format("%Y-%m-%d").to_string(),
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => ts.to_string(),
    }
}

/// Reads an interaction CSV (header row required).
pub fn load_interactions(path: impl AsRef<Path>, options: &LoadOptions) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_interactions(BufReader::new(file), options)
}

pub fn read_interactions<R: std::io::Read>(reader: R, options: &LoadOptions) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let user_col = column(&options.schema.user)?;
    let item_col = column(&options.schema.item)?;
    let rating_col = column(&options.schema.rating)?;
    let ts_col = match &options.schema.timestamp {
        Some(name) => match column(name) {
            Ok(c) => Some(c),
            Err(_) => {
                log::debug!("timestamp column {name:?} absent; duplicates resolved by file order");
                None
            }
        },
        None => None,
    };

    let mut builder = Builder::default();
    let mut report = LoadReport::default();
    for record in rdr.records() {
        let record = record?;
        report.rows_read += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, user_col, item_col, rating_col, ts_col) {
            Ok((user, item, rating, ts)) => builder.push(user, item, rating, ts),
            Err(message) if options.skip_bad_rows => {
                log::warn!("skipping line {line}: {message}");
                report.rows_skipped += 1;
            }
            Err(message) => return Err(Error::Row { line, message }),
        }
    }
    let (dataset, duplicates) = builder.finish();
    report.duplicates_removed = duplicates;
    Ok((dataset, report))
}

fn parse_row(
    record: &csv::StringRecord,
    user_col: usize,
    item_col: usize,
    rating_col: usize,
    ts_col: Option<usize>,
) -> std::result::Result<(&str, &str, f64, Option<i64>), String> {
    let field = |c: usize| record.get(c).map(str::trim).ok_or_else(|| format!("missing field {c}"));
    let user = field(user_col)?;
    let item = field(item_col)?;
    if user.is_empty() || item.is_empty() {
        return Err("empty user or item id".into());
    }
    let raw = field(rating_col)?;
    let rating: f64 = raw.parse().map_err(|_| format!("unparsable rating {raw:?}"))?;
    validate_rating(rating)?;
    let ts = match ts_col {
        Some(c) => {
            let raw = field(c)?;
            if raw.is_empty() {
                None
            } else {
                Some(parse_timestamp(raw).ok_or_else(|| format!("unparsable date {raw:?}"))?)
            }
        }
        None => None,
    };
    Ok((user, item, rating, ts))
}

/// Ratings stored in both user-major and item-major orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatingMatrix {
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
    nnz: usize,
}

pub fn build_matrix(dataset: &Dataset) -> SparseRatingMatrix {
    SparseRatingMatrix::from_interactions(dataset.n_users(), dataset.n_items(), dataset.interactions())
}

impl SparseRatingMatrix {
    /// Builds the matrix over a fixed `n_users x n_items` index space. A
    /// repeated pair keeps the last value.
    pub fn from_interactions(n_users: usize, n_items: usize, interactions: &[Interaction]) -> Self {
        Self::from_entries(
            n_users,
            n_items,
            interactions.iter().map(|it| (it.user, it.item, it.rating)),
        )
    }

    pub fn from_entries<I>(n_users: usize, n_items: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut by_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_users];
        for (u, i, r) in entries {
            assert!(u < n_users && i < n_items, "entry ({u}, {i}) outside {n_users}x{n_items}");
            by_user[u].push((i, r));
        }
        let mut nnz = 0;
        for row in &mut by_user {
            // stable sort keeps insertion order among equal keys; keep the last one
            row.sort_by_key(|&(i, _)| i);
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(i, r) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == i => last.1 = r,
                    _ => dedup.push((i, r)),
                }
            }
            *row = dedup;
            nnz += row.len();
        }
        let mut by_item: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_items];
        for (u, row) in by_user.iter().enumerate() {
            for &(i, r) in row {
                by_item[i].push((u, r));
            }
        }
        Self { by_user, by_item, nnz }
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// `1 - nnz / (n_users * n_items)`; `None` for an empty index space.
    pub fn sparsity(&self) -> Option<f64> {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            None
        } else {
            Some(1.0 - self.nnz as f64 / cells)
        }
    }

    /// Items rated by `user`, sorted by item index.
    pub fn user_row(&self, user: usize) -> &[(usize, f64)] {
        &self.by_user[user]
    }

    /// Users who rated `item`, sorted by user index.
    pub fn item_col(&self, item: usize) -> &[(usize, f64)] {
        &self.by_item[item]
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.by_user[user];
        row.binary_search_by_key(&item, |&(i, _)| i).ok().map(|p| row[p].1)
    }

    /// All entries in user-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (u, i, r)))
    }

    /// All entries in item-major order, reported as `(user, item, rating)`.
    pub fn entries_by_item(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.by_item
            .iter()
            .enumerate()
            .flat_map(|(i, col)| col.iter().map(move |&(u, r)| (u, i, r)))
    }

    /// Swaps the roles of users and items.
    pub fn transpose(&self) -> Self {
        Self {
            by_user: self.by_item.clone(),
            by_item: self.by_user.clone(),
            nnz: self.nnz,
        }
    }

    pub fn global_mean(&self) -> Option<f64> {
        if self.nnz == 0 {
            return None;
        }
        Some(crate::numeric::compensated_sum(self.entries().map(|(_, _, r)| r)) / self.nnz as f64)
    }

    /// Mean rating per user; `None` for users without ratings.
    pub fn user_means(&self) -> Vec<Option<f64>> {
        self.by_user.iter().map(|row| mean_of(row)).collect()
    }

    pub fn item_means(&self) -> Vec<Option<f64>> {
        self.by_item.iter().map(|col| mean_of(col)).collect()
    }
}

fn mean_of(entries: &[(usize, f64)]) -> Option<f64> {
    if entries.is_empty() {
        None
    } else {
        Some(entries.iter().map(|&(_, r)| r).sum::<f64>() / entries.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(csv: &str) -> Result<(Dataset, LoadReport)> {
        read_interactions(csv.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn ingests_simple_csv() {
        let (ds, report) = load("user_id,item_id,rating\nu1,i1,5\nu1,i2,4\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.n_users(), 1);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(report.rows_read, 2);
        assert_eq!(report.duplicates_removed, 0);
    }

    #[test]
    fn duplicate_keeps_latest_timestamp() {
        let csv = "user_id,item_id,rating,date\nu1,i1,5,2010-05-02\nu1,i1,3,2009-01-01\n";
        let (ds, report) = load(csv).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.interactions()[0].rating, 5.0);
        assert_eq!(report.duplicates_removed, 1);

        let csv = "user_id,item_id,rating,date\nu1,i1,3,2009-01-01\nu1,i1,5,2010-05-02\n";
        let (ds, _) = load(csv).unwrap();
        assert_eq!(ds.interactions()[0].rating, 5.0);
    }

    #[test]
    fn duplicate_tie_keeps_last_occurrence() {
        let (ds, _) = load("user_id,item_id,rating\nu1,i1,3\nu1,i1,5\n").unwrap();
        assert_eq!(ds.interactions()[0].rating, 5.0);
        let (ds, _) = load("user_id,item_id,rating,date\nu1,i1,3,2009-01-01\nu1,i1,2,2009-01-01\n").unwrap();
        assert_eq!(ds.interactions()[0].rating, 2.0);
    }

    #[test]
    fn out_of_range_rating_is_a_row_error() {
        let err = load("user_id,item_id,rating\nu1,i1,7\n").unwrap_err();
        match err {
            Error::Row { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("rating out of range [0,5]"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparsable_rating_and_skip_mode() {
        let csv = "user_id,item_id,rating\nu1,i1,abc\nu2,i1,4\n";
        assert!(matches!(load(csv), Err(Error::Row { line: 2, .. })));
        let opts = LoadOptions {
            skip_bad_rows: true,
            ..Default::default()
        };
        let (ds, report) = read_interactions(csv.as_bytes(), &opts).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(report.rows_skipped, 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = load("user,item_id,rating\nu1,i1,4\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn custom_schema_and_quoting() {
        let opts = LoadOptions {
            schema: Schema {
                user: "uid".into(),
                item: "recipe id".into(),
                rating: "stars".into(),
                timestamp: None,
            },
            skip_bad_rows: false,
        };
        let csv = "uid,\"recipe id\",stars\n\"a,b\",r1,4.5\n";
        let (ds, _) = read_interactions(csv.as_bytes(), &opts).unwrap();
        assert_eq!(ds.users().id(0), "a,b");
        assert_eq!(ds.interactions()[0].rating, 4.5);
    }

    #[test]
    fn matrix_sparsity() {
        let ds = Dataset::from_triples([("a", "x", 1.0), ("a", "y", 2.0), ("b", "x", 3.0)]).unwrap();
        let m = ds.matrix();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.sparsity(), Some(0.25));
        assert_eq!(m.get(1, 0), Some(3.0));
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.item_col(0), &[(0, 1.0), (1, 3.0)]);
    }

    #[test]
    fn empty_matrix_has_undefined_sparsity() {
        let m = Dataset::default().matrix();
        assert_eq!((m.n_users(), m.n_items(), m.nnz()), (0, 0, 0));
        assert_eq!(m.sparsity(), None);
    }

    #[test]
    fn recipe_scale_sparsity() {
        // 32,090 x 5,595 with 247,219 ratings; only the counts matter here.
        let cells = 32_090f64 * 5_595f64;
        let s = 1.0 - 247_219f64 / cells;
        assert!((s - 0.9986).abs() < 5e-5);
    }

    #[test]
    fn retain_reindexed_compacts_ids() {
        let ds = Dataset::from_triples([("a", "x", 1.0), ("b", "y", 2.0), ("c", "x", 3.0)]).unwrap();
        let kept = ds.retain_reindexed(|it| it.rating != 2.0);
        assert_eq!(kept.users().ids(), &["a".to_string(), "c".to_string()]);
        assert_eq!(kept.items().ids(), &["x".to_string()]);
        assert_eq!(kept.interactions()[1].user, 1);
    }

    #[test]
    fn timestamps_round_trip() {
        let ts = parse_timestamp("2008-01-20").unwrap();
        assert_eq!(format_timestamp(ts), "2008-01-20");
        assert!(parse_timestamp("2008-01-20T10:00:00Z").is_some());
        assert!(parse_timestamp("yesterday").is_none());
    }
}
