//! The full pipeline: data → pre-filter → splits → grid search → evaluation
//! and α sweep, with every intermediate written under the output directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use greenrec::data::{load_interactions, LoadOptions};
use greenrec::eval::{score_test, TestLists};
use greenrec::footprint::{load_greenness, GreennessTable};
use greenrec::models::{grid_search, Hyper, ModelArtifact, Trial};
use greenrec::prep::{make_splits, prefilter, write_manifest, PrefilterReport};
use greenrec::rerank::{alpha_sweep, mean_tradeoff, sweep_reports};
use greenrec::synth::{generate, SynthParams};
use greenrec::{Dataset, EvalReport, IdIndex, TradeoffPoint};
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};

pub const TRADEOFF_HEADER: [&str; 7] = ["algo", "alpha", "k", "ndcg", "gndcg", "ndcg_rel", "gndcg_rel"];
const PER_SPLIT_HEADER: [&str; 10] = [
    "split_seed",
    "algo",
    "hyperparameters",
    "alpha",
    "k",
    "ndcg",
    "gndcg",
    "ndcg_rel",
    "gndcg_rel",
    "validation_ndcg",
];

#[derive(Debug, Serialize)]
struct SplitEntry {
    seed: u64,
    counts: [usize; 3],
    underfilled: bool,
    manifest: String,
    sidecar: String,
}

#[derive(Debug, Serialize)]
struct RunEntry {
    split_seed: u64,
    algo: String,
    best: Hyper,
    validation_ndcg: f64,
    model: Option<String>,
    trials: Vec<Trial>,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    users: usize,
    items: usize,
    interactions: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    dataset: DatasetSummary,
    prefilter: Option<PrefilterReport>,
    splits: Vec<SplitEntry>,
    runs: Vec<RunEntry>,
    outputs: Vec<&'static str>,
}

/// What the benchmark produced, for the caller's summary line.
pub struct BenchOutcome {
    pub reports: Vec<EvalReport>,
    pub tradeoff: Vec<(String, TradeoffPoint)>,
    pub output_dir: PathBuf,
}

/// Aligns a greenness table with a reindexed item space.
pub fn realign(table: &GreennessTable, from: &IdIndex, to: &IdIndex) -> anyhow::Result<GreennessTable> {
    let entries = to.ids().iter().map(|id| from.get(id).and_then(|ix| table.entry(ix))).collect();
    Ok(GreennessTable::from_entries(entries, table.scale().copied())?)
}

/// Item ids listed in a greenness CSV.
pub fn greenness_ids(path: &Path) -> anyhow::Result<HashSet<String>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "item_id")
        .ok_or_else(|| greenrec::Error::Schema(format!("{} has no item_id column", path.display())))?;
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        ids.insert(rec?.get(col).unwrap_or_default().trim().to_string());
    }
    Ok(ids)
}

fn load_data(config: &ExperimentConfig, seed: u64) -> anyhow::Result<(Dataset, GreennessTable, Option<PrefilterReport>)> {
    match &config.data {
        DataSource::Files {
            interactions,
            greenness,
            recompute_greenness,
            fixed_scale,
        } => {
            let (mut data, _) = load_interactions(interactions, &LoadOptions::default())?;
            let mut report = None;
            let known = if config.require_greenness { Some(greenness_ids(greenness)?) } else { None };
            if let Some(cfg) = &config.prefilter {
                let keep = |id: &str| known.as_ref().is_none_or(|k| k.contains(id));
                let (filtered, r) = prefilter(&data, cfg, Some(&keep))?;
                data = filtered;
                report = Some(r);
            } else if let Some(k) = &known {
                let items = data.items().clone();
                data = data.retain_reindexed(|x| k.contains(items.id(x.item)));
            }
            let (table, _) = load_greenness(greenness, data.items(), *recompute_greenness, *fixed_scale)?;
            Ok((data, table, report))
        }
        DataSource::Synth { preset, seed: data_seed } => {
            let params = SynthParams::preset(preset, data_seed.unwrap_or(seed))?;
            let (data, table) = generate(&params)?;
            match &config.prefilter {
                Some(cfg) => {
                    let (filtered, r) = prefilter(&data, cfg, None)?;
                    let table = realign(&table, data.items(), filtered.items())?;
                    Ok((filtered, table, Some(r)))
                }
                None => Ok((data, table, None)),
            }
        }
    }
}

fn write_csv<R: IntoIterator<Item = I>, I: IntoIterator<Item = String>>(path: &Path, header: &[&str], rows: R) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn tradeoff_row(algo: &str, p: &TradeoffPoint) -> [String; 7] {
    [
        algo.to_string(),
        format!("{:?}", p.alpha),
        p.k.to_string(),
        p.ndcg.to_string(),
        p.gndcg.to_string(),
        p.ndcg_rel.to_string(),
        p.gndcg_rel.to_string(),
    ]
}

pub fn run(config: &ExperimentConfig, seed: u64) -> anyhow::Result<BenchOutcome> {
    config.validate()?;
    let algos = config.algorithms()?;
    let grid = config.hyper_grid()?;
    let out = &config.output_dir;
    for sub in ["splits", "models"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }

    let (data, greenness, prefilter_report) = load_data(config, seed).context("stage data")?;
    log::info!("dataset: {} users, {} items, {} interactions", data.n_users(), data.n_items(), data.len());

    let base_seed = config.split.base_seed.unwrap_or(seed);
    let splits = make_splits(&data, config.split.n_splits, base_seed, config.split.ratios).context("stage split")?;
    let mut split_entries = Vec::new();
    for s in &splits {
        let (csv, json) = (format!("splits/split_{}.csv", s.seed), format!("splits/split_{}.json", s.seed));
        write_manifest(s, out.join(&csv), out.join(&json)).context("stage split")?;
        split_entries.push(SplitEntry {
            seed: s.seed,
            counts: [s.train.len(), s.validation.len(), s.test.len()],
            underfilled: s.underfilled.is_some(),
            manifest: csv,
            sidecar: json,
        });
    }

    let mut runs = Vec::new();
    let mut per_algo: Vec<Vec<Vec<TradeoffPoint>>> = vec![Vec::new(); algos.len()];
    let mut per_split_rows = Vec::new();
    for s in &splits {
        let train = s.train.matrix();
        for (a, algo) in algos.iter().enumerate() {
            let tag = algo.tag();
            let stage = || format!("stage train ({tag}, split {})", s.seed);
            let found = grid_search(*algo, &grid, &train, &s.validation, config.metric_k, seed).with_context(stage)?;
            let model_path = if config.save_models {
                let rel = format!("models/{tag}_split{}.json", s.seed);
                ModelArtifact::from_predictor(&found.model, s.train.users(), s.train.items())
                    .and_then(|m| m.save(out.join(&rel)))
                    .with_context(stage)?;
                Some(rel)
            } else {
                None
            };
            let stage = || format!("stage evaluate ({tag}, split {})", s.seed);
            let entries = score_test(&found.model, &s.test, &greenness).with_context(stage)?;
            let lists = TestLists::build(entries, config.batch_size, s.seed).with_context(stage)?;
            let sweep = alpha_sweep(&lists, &config.alphas, &config.ks).with_context(stage)?;
            for p in &sweep {
                per_split_rows.push([
                    s.seed.to_string(),
                    tag.to_string(),
                    found.best.describe(),
                    format!("{:?}", p.alpha),
                    p.k.to_string(),
                    p.ndcg.to_string(),
                    p.gndcg.to_string(),
                    p.ndcg_rel.to_string(),
                    p.gndcg_rel.to_string(),
                    found.best_score.to_string(),
                ]);
            }
            per_algo[a].push(sweep);
            runs.push(RunEntry {
                split_seed: s.seed,
                algo: tag.to_string(),
                best: found.best,
                validation_ndcg: found.best_score,
                model: model_path,
                trials: found.trials,
            });
        }
    }

    let mut reports = Vec::new();
    let mut tradeoff = Vec::new();
    for (algo, per_split) in algos.iter().zip(&per_algo) {
        reports.extend(sweep_reports(algo.tag(), per_split).context("stage report")?);
        for p in mean_tradeoff(per_split).context("stage report")? {
            tradeoff.push((algo.tag().to_string(), p));
        }
    }
    write_csv(&out.join("report.csv"), &EvalReport::CSV_HEADER, reports.iter().flat_map(|r| r.csv_rows()))?;
    write_csv(&out.join("tradeoff.csv"), &TRADEOFF_HEADER, tradeoff.iter().map(|(a, p)| tradeoff_row(a, p)))?;
    write_csv(&out.join("per_split.csv"), &PER_SPLIT_HEADER, per_split_rows)?;

    let manifest = Manifest {
        config,
        seed,
        dataset: DatasetSummary {
            users: data.n_users(),
            items: data.n_items(),
            interactions: data.len(),
        },
        prefilter: prefilter_report,
        splits: split_entries,
        runs,
        outputs: vec!["report.csv", "tradeoff.csv", "per_split.csv"],
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(BenchOutcome {
        reports,
        tradeoff,
        output_dir: out.clone(),
    })
}
