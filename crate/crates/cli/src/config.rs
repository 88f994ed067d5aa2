//! Experiment configuration, read from JSON or TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use greenrec::eval::{DEFAULT_BATCH_SIZE, DEFAULT_KS};
use greenrec::models::{Algorithm, HyperGrid};
use greenrec::prep::{PrefilterConfig, SplitRatios};
use greenrec::rerank::{check_alpha, default_alphas};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Interaction CSV plus an `item_id,co2_kg[,greenness]` CSV.
    Files {
        interactions: PathBuf,
        greenness: PathBuf,
        #[serde(default)]
        recompute_greenness: bool,
        #[serde(default)]
        fixed_scale: Option<f64>,
    },
    Synth {
        #[serde(default = "default_preset")]
        preset: String,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_preset() -> String {
    "recipe-like".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    pub n_splits: usize,
    pub base_seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            n_splits: 5,
            base_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Skipped when absent.
    pub prefilter: Option<PrefilterConfig>,
    /// Drop items missing from the greenness file during pre-filtering.
    pub require_greenness: bool,
    pub split: SplitConfig,
    pub algorithms: Vec<String>,
    /// Named grid; `grid` overrides individual lists when both are given.
    pub grid_preset: Option<String>,
    pub grid: Option<HyperGrid>,
    pub metric_k: usize,
    pub ks: Vec<usize>,
    pub alphas: Vec<f64>,
    pub batch_size: usize,
    /// Seed for model initialisation; falls back to `GREENREC_SEED`, then 0.
    pub seed: Option<u64>,
    /// Relative to the config file when loaded from one.
    pub output_dir: PathBuf,
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synth {
                preset: default_preset(),
                seed: None,
            },
            prefilter: None,
            require_greenness: true,
            split: SplitConfig::default(),
            algorithms: Algorithm::ALL.iter().map(|a| a.tag().to_string()).collect(),
            grid_preset: None,
            grid: None,
            metric_k: 10,
            ks: DEFAULT_KS.to_vec(),
            alphas: default_alphas(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed: None,
            output_dir: PathBuf::from("results"),
            save_models: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(anyhow::Error::from),
            Some("toml") => toml::from_str(&text).map_err(anyhow::Error::from),
            _ => serde_json::from_str(&text)
                .map_err(anyhow::Error::from)
                .or_else(|_| toml::from_str(&text).map_err(anyhow::Error::from)),
        };
        let mut config: Self = parsed.map_err(|e| Invalid(format!("config {}: {e}", path.display())))?;
        // relative paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        let mut paths = vec![&mut config.output_dir];
        if let DataSource::Files {
            interactions, greenness, ..
        } = &mut config.data
        {
            paths.extend([interactions, greenness]);
        }
        for p in paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn algorithms(&self) -> anyhow::Result<Vec<Algorithm>> {
        self.algorithms
            .iter()
            .map(|a| a.parse::<Algorithm>().map_err(|e| Invalid(e.to_string()).into()))
            .collect()
    }

    pub fn hyper_grid(&self) -> anyhow::Result<HyperGrid> {
        if let Some(g) = &self.grid {
            return Ok(g.clone());
        }
        let name = self.grid_preset.as_deref().unwrap_or("default");
        HyperGrid::preset(name).map_err(|e| Invalid(e.to_string()).into())
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        let invalid = |m: String| -> anyhow::Result<()> { Err(Invalid(m).into()) };
        if self.algorithms.is_empty() {
            return invalid("no algorithms configured".into());
        }
        let algos = self.algorithms()?;
        let grid = self.hyper_grid()?;
        for a in &algos {
            grid.points(*a).map_err(|e| Invalid(e.to_string()))?;
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return invalid("ks must be non-empty and >= 1".into());
        }
        if self.alphas.is_empty() {
            return invalid("alphas must be non-empty".into());
        }
        for &a in &self.alphas {
            check_alpha(a).map_err(|e| Invalid(e.to_string()))?;
        }
        if self.metric_k == 0 || self.batch_size == 0 {
            return invalid("metric_k and batch_size must be >= 1".into());
        }
        if self.split.n_splits == 0 {
            return invalid("split.n_splits must be >= 1".into());
        }
        self.split.ratios.validate().map_err(|e| Invalid(e.to_string()))?;
        if let Some(p) = &self.prefilter {
            if p.min_item_ratings < 1 || p.min_user_mean < 1.0 {
                return invalid("pre-filter thresholds must be >= 1".into());
            }
        }
        match &self.data {
            DataSource::Files {
                interactions, greenness, ..
            } => {
                for p in [interactions, greenness] {
                    if !p.exists() {
                        return invalid(format!("{} does not exist", p.display()));
                    }
                }
            }
            DataSource::Synth { preset, .. } => {
                greenrec::synth::SynthParams::preset(preset, 0).map_err(|e| Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }
}

pub fn parse_ks(s: &str) -> anyhow::Result<Vec<usize>> {
    let ks: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Invalid(format!("cannot parse ks {s:?}")))?;
    if ks.is_empty() || ks.contains(&0) {
        bail!(Invalid(format!("ks must be >= 1, got {s:?}")));
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
    }

    #[test]
    fn shipped_configs_parse() {
        let quick = ExperimentConfig::load(&shipped("synth_quick.toml")).unwrap();
        assert_eq!(quick.algorithms, ["global_mean", "svd"]);
        assert_eq!(quick.split.n_splits, 2);
        assert!(quick.output_dir.ends_with("results/synth_quick"));
        quick.validate().unwrap();

        let full = ExperimentConfig::load(&shipped("recipe_emission.toml")).unwrap();
        assert_eq!(full.algorithms.len(), 8);
        assert_eq!(full.alphas.len(), 11);
        assert_eq!(full.prefilter.unwrap().min_item_ratings, 20);
        let DataSource::Files { interactions, .. } = &full.data else { panic!("expected files") };
        assert!(interactions.is_absolute() || interactions.starts_with(shipped("")));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            let err = c.validate().unwrap_err();
            assert!(err.is::<Invalid>(), "{err}");
        };
        bad(|c| c.algorithms = vec!["gnn".into()]);
        bad(|c| c.algorithms.clear());
        bad(|c| c.ks = vec![]);
        bad(|c| c.ks = vec![10, 0]);
        bad(|c| c.alphas = vec![1.5]);
        bad(|c| c.alphas.clear());
        bad(|c| c.split.n_splits = 0);
        bad(|c| c.split.ratios.test = 0.5);
        bad(|c| c.grid_preset = Some("huge".into()));
        bad(|c| {
            c.data = DataSource::Files {
                interactions: "/nonexistent/a.csv".into(),
                greenness: "/nonexistent/b.csv".into(),
                recompute_greenness: false,
                fixed_scale: None,
            }
        });
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_syntax_are_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        for text in ["ks = \"ten\"\n", "kz = [10]\n", "[split]\nn_split = 2\n"] {
            std::fs::write(&p, text).unwrap();
            assert!(ExperimentConfig::load(&p).unwrap_err().is::<Invalid>(), "{text}");
        }
    }

    #[test]
    fn ks_parsing() {
        assert_eq!(parse_ks("10, 20,50").unwrap(), [10, 20, 50]);
        assert!(parse_ks("0").is_err());
        assert!(parse_ks("a,b").is_err());
        assert!(parse_ks("").is_err());
    }
}
