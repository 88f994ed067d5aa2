use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use greenrec::data::{load_interactions, LoadOptions, Schema};
use greenrec::eval::{score_test, TestLists};
use greenrec::footprint::{
    calibrate, conversion_table, load_emission_factors, load_greenness, recipe_co2, to_grams, Category, GreennessScale,
    GreennessTable, Unit,
};
use greenrec::models::{grid_search, Algorithm, FnPredict, HyperGrid, ModelArtifact};
use greenrec::prep::{make_splits, prefilter, read_manifest, write_manifest, PrefilterConfig, SplitRatios};
use greenrec::rerank::{alpha_sweep, parse_alphas};
use greenrec::synth::{generate, SynthParams};
use greenrec::{Dataset, Predict, Predictor, SplitResult};

use crate::bench::{self, greenness_ids, tradeoff_row, TRADEOFF_HEADER};
use crate::config::{parse_ks, DataSource, ExperimentConfig};
use crate::{BenchArgs, Cli, Command, FootprintCommand, GreennessInput, Invalid, SplitInput};

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(a) => {
            let schema = Schema {
                user: a.user_col.clone(),
                item: a.item_col.clone(),
                rating: a.rating_col.clone(),
                timestamp: (!a.date_col.is_empty()).then(|| a.date_col.clone()),
            };
            let options = LoadOptions {
                schema,
                skip_bad_rows: a.skip_bad_rows,
            };
            let (data, report) = load_interactions(&a.input, &options)?;
            ensure_parent(&a.out)?;
            data.write_csv(&a.out)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Prefilter(a) => {
            let config = PrefilterConfig {
                min_item_ratings: a.min_item_ratings,
                min_user_mean: a.min_user_mean,
            };
            if config.min_item_ratings < 1 || config.min_user_mean < 1.0 {
                anyhow::bail!(Invalid("pre-filter thresholds must be >= 1".into()));
            }
            let data = load_data(&a.data)?;
            let known = a.greenness.as_deref().map(greenness_ids).transpose()?;
            let keep = |id: &str| known.as_ref().is_none_or(|k| k.contains(id));
            let (filtered, report) = prefilter(&data, &config, Some(&keep))?;
            ensure_parent(&a.out)?;
            filtered.write_csv(&a.out)?;
            let json = serde_json::to_string_pretty(&report)?;
            match &a.report {
                Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Split(a) => {
            let ratios = parse_ratios(&a.ratios)?;
            let data = load_data(&a.data)?;
            let splits = make_splits(&data, a.n, cli.seed, ratios)?;
            fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
            for s in &splits {
                let csv = a.out_dir.join(format!("split_{}.csv", s.seed));
                write_manifest(s, &csv, csv.with_extension("json"))?;
                println!("{}", csv.display());
            }
        }
        Command::Synth(a) => {
            let params = match &a.params {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?
                }
                None => SynthParams::preset(&a.preset, cli.seed)?,
            };
            let (data, table) = generate(&params)?;
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            data.write_csv(a.out.join("interactions.csv"))?;
            table.write_csv(a.out.join("greenness.csv"), data.items())?;
            fs::write(a.out.join("params.json"), serde_json::to_string_pretty(&params)?)?;
        }
        Command::Train(a) => {
            let algo: Algorithm = a.algo.parse()?;
            let grid = load_grid(&a.grid)?;
            if a.metric_k == 0 {
                anyhow::bail!(Invalid("metric-k must be >= 1".into()));
            }
            let (_, split) = load_split(&a.input)?;
            let found = grid_search(algo, &grid, &split.train.matrix(), &split.validation, a.metric_k, cli.seed)?;
            ensure_parent(&a.out)?;
            ModelArtifact::from_predictor(&found.model, split.train.users(), split.train.items())?.save(&a.out)?;
            println!("{} validation ndcg@{} = {:.6} ({})", algo.tag(), a.metric_k, found.best_score, found.best.describe());
        }
        Command::Evaluate(a) => {
            let ks = parse_ks(&a.ks)?;
            let (algo, lists) = test_lists(&a.model, &a.input, &a.greenness, a.batch_size)?;
            let mut w = csv_sink(a.out.as_deref())?;
            w.write_record(["algo", "k", "ndcg", "gndcg"])?;
            for m in lists.metrics(&ks)? {
                w.write_record([algo.tag().to_string(), m.k.to_string(), m.ndcg.to_string(), m.gndcg.to_string()])?;
            }
            w.flush()?;
        }
        Command::Sweep(a) => {
            let ks = parse_ks(&a.ks)?;
            let alphas = parse_alphas(&a.alphas)?;
            let (algo, lists) = test_lists(&a.model, &a.input, &a.greenness, a.batch_size)?;
            let points = alpha_sweep(&lists, &alphas, &ks)?;
            let mut w = csv_sink(Some(&a.out))?;
            w.write_record(TRADEOFF_HEADER)?;
            for p in &points {
                w.write_record(tradeoff_row(algo.tag(), p))?;
            }
            w.flush()?;
        }
        Command::Bench(a) => {
            let config = bench_config(a, cli.seed)?;
            let seed = config.seed.unwrap_or(cli.seed);
            let outcome = bench::run(&config, seed)?;
            println!(
                "wrote {} report groups and {} trade-off points to {}",
                outcome.reports.len(),
                outcome.tradeoff.len(),
                outcome.output_dir.display()
            );
        }
        Command::Footprint(f) => footprint(f)?,
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    Ok(load_interactions(path, &LoadOptions::default())?.0)
}

fn parse_ratios(s: &str) -> anyhow::Result<SplitRatios> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Invalid(format!("cannot parse ratios {s:?}")))?;
    let [train, validation, test] = v[..] else {
        anyhow::bail!(Invalid(format!("ratios need three values, got {s:?}")));
    };
    let r = SplitRatios {
        train,
        validation,
        test,
    };
    r.validate()?;
    Ok(r)
}

fn load_grid(spec: &str) -> anyhow::Result<HyperGrid> {
    let path = Path::new(spec);
    if !path.exists() {
        return Ok(HyperGrid::preset(spec)?);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let grid = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
    };
    Ok(grid)
}

fn load_split(input: &SplitInput) -> anyhow::Result<(Dataset, SplitResult)> {
    let data = load_data(&input.data)?;
    let split = read_manifest(&data, &input.split, input.split.with_extension("json"))?;
    Ok((data, split))
}

fn csv_sink(path: Option<&Path>) -> anyhow::Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => {
            ensure_parent(p)?;
            Box::new(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

/// Scores the split's test interactions with a saved model. Ids the model
/// never saw resolve to indices past its tables, so they take the fallback.
fn test_lists(
    model: &Path,
    input: &SplitInput,
    greenness: &GreennessInput,
    batch_size: usize,
) -> anyhow::Result<(Algorithm, TestLists)> {
    if batch_size == 0 {
        anyhow::bail!(Invalid("batch-size must be >= 1".into()));
    }
    let (data, split) = load_split(input)?;
    let artifact = ModelArtifact::load(model)?;
    let (predictor, users, items): (Predictor, _, _) = artifact.to_predictor()?;
    let user_map: Vec<usize> = data.users().ids().iter().map(|id| users.get(id).unwrap_or(usize::MAX)).collect();
    let item_map: Vec<usize> = data.items().ids().iter().map(|id| items.get(id).unwrap_or(usize::MAX)).collect();
    let remapped = FnPredict(|u: usize, i: usize| predictor.predict(user_map[u], item_map[i]));
    let (table, _) = load_greenness(&greenness.greenness, data.items(), greenness.recompute, greenness.fixed_scale)?;
    let entries = score_test(&remapped, &split.test, &table)?;
    Ok((predictor.algorithm(), TestLists::build(entries, batch_size, split.seed)?))
}

fn bench_config(a: &BenchArgs, seed: u64) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &a.out_dir {
        config.output_dir = d.clone();
    }
    if let Some(s) = &a.algorithms {
        config.algorithms = s.split(',').map(|t| t.trim().to_string()).collect();
    }
    if let Some(n) = a.n_splits {
        config.split.n_splits = n;
    }
    if let Some(g) = &a.grid {
        config.grid_preset = Some(g.clone());
        config.grid = None;
    }
    if let Some(s) = &a.alphas {
        config.alphas = parse_alphas(s)?;
    }
    if let Some(s) = &a.ks {
        config.ks = parse_ks(s)?;
    }
    if let Some(p) = &a.synth {
        config.data = DataSource::Synth {
            preset: p.clone(),
            seed: Some(seed),
        };
    }
    Ok(config)
}

fn footprint(cmd: &FootprintCommand) -> anyhow::Result<()> {
    match cmd {
        FootprintCommand::Table => {
            let table = conversion_table();
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["category", "represented_by", "pint", "cup", "teaspoon", "tablespoon", "pinch"])?;
            for c in Category::ALL {
                let row = table.row(c);
                let cell = |u: Unit| table.rate(c, u).map_or("na.".to_string(), |r| r.to_string());
                w.write_record([
                    c.as_str().to_string(),
                    row.represented_by.clone(),
                    cell(Unit::Pint),
                    cell(Unit::Cup),
                    cell(Unit::Teaspoon),
                    cell(Unit::Tablespoon),
                    cell(Unit::Pinch),
                ])?;
            }
            w.flush()?;
        }
        FootprintCommand::Convert { category, unit, amount } => {
            println!("{}", to_grams(category.parse()?, unit.parse()?, *amount)?);
        }
        FootprintCommand::Greenness { co2_kg, fixed_scale } => {
            let scale = match fixed_scale {
                Some(s) => GreennessScale::fixed(*s)?,
                None => GreennessScale::Calibrated(calibrate(co2_kg)?),
            };
            let co2: Vec<Option<f64>> = co2_kg.iter().copied().map(Some).collect();
            let table = GreennessTable::from_co2_with(&co2, scale)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["co2_kg", "greenness"])?;
            for (c, g) in co2_kg.iter().zip(table.values()) {
                w.write_record([c.to_string(), g.unwrap_or(f64::NAN).to_string()])?;
            }
            w.flush()?;
        }
        FootprintCommand::Recipe {
            factors,
            ingredients,
            threshold_g,
        } => {
            let factors = load_emission_factors(factors)?;
            let mut rdr = csv::Reader::from_path(ingredients).with_context(|| format!("reading {}", ingredients.display()))?;
            let mut grams = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let field = |i: usize| rec.get(i).unwrap_or("").trim();
                let name = field(0);
                let amount: f64 = field(1)
                    .parse()
                    .map_err(|_| Invalid(format!("ingredient {name}: bad amount {:?}", field(1))))?;
                let g = to_grams(field(3).parse()?, field(2).parse()?, amount)?;
                let f = factors
                    .get(name)
                    .ok_or_else(|| Invalid(format!("no emission factor for {name:?}")))?;
                grams.push((g, f));
            }
            let r = recipe_co2(&grams, *threshold_g)?;
            println!(
                "{}",
                serde_json::json!({
                    "co2_kg": r.co2_kg,
                    "kept": r.kept,
                    "dropped": r.dropped,
                    "no_significant_ingredients": r.no_significant_ingredients,
                })
            );
        }
    }
    Ok(())
}
