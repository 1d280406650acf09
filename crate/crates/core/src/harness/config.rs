use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::baselines::{
    fit_bprmf, fit_ease, fit_itemknn, fit_multivae, fit_popularity, BprParams, EaseParams, ItemKnnParams, MultiVaeParams,
};
use crate::dataset::{
    generate_synthetic, ingest_canonical, ingest_ml1m, temporal_split, Dataset, SplitDataset, SplitRatios, SyntheticConfig,
};
use crate::diffusion::{fit_diffrec, DiffRecParams};
use crate::error::{Error, Result};
use crate::ldiffrec::{fit_ldiffrec, LDiffRecParams};
use crate::model::{ModelKind, TrainedModel};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "FAIRDIFF_SEED";

/// `FAIRDIFF_SEED` if set and parseable, else 42.
pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Directory holding `ratings.dat` and `users.dat`.
    Ml1m {
        dir: PathBuf,
    },
    Canonical {
        interactions: PathBuf,
        users: PathBuf,
    },
    Synthetic {
        config: SyntheticConfig,
    },
    /// A split written by `prepare`; filtering and splitting are skipped.
    Split {
        path: PathBuf,
    },
}

fn default_min_interactions() -> usize {
    20
}

fn default_head_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub source: DatasetSource,
    #[serde(default = "default_min_interactions")]
    pub min_interactions: usize,
    #[serde(default = "default_head_fraction")]
    pub head_fraction: f64,
}

impl DatasetSpec {
    /// Raw dataset before filtering (not available for `Split` sources).
    pub fn load_raw(&self) -> Result<Dataset> {
        match &self.source {
            DatasetSource::Ml1m { dir } => ingest_ml1m(&dir.join("ratings.dat"), &dir.join("users.dat")),
            DatasetSource::Canonical { interactions, users } => ingest_canonical(interactions, users),
            DatasetSource::Synthetic { config } => generate_synthetic(config),
            DatasetSource::Split { path } => Err(Error::Config(format!("{} is an already split dataset", path.display()))),
        }
    }

    /// Filtered, temporally split dataset with group partitions.
    pub fn load_split(&self) -> Result<SplitDataset> {
        if let DatasetSource::Split { path } = &self.source {
            return read_split(path);
        }
        let d = self.load_raw()?.filter_min_interactions(self.min_interactions)?;
        temporal_split(&d, SplitRatios::default(), self.head_fraction)
    }
}

pub fn read_split(path: &Path) -> Result<SplitDataset> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_split(split: &SplitDataset, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string(split)?)?;
    Ok(())
}

pub type Grid = IndexMap<String, Vec<Value>>;

fn default_k() -> usize {
    20
}

/// One sweep: a dataset, a model and its hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelKind,
    /// Fixed hyperparameters applied under every grid point.
    #[serde(default)]
    pub base: Map<String, Value>,
    /// Values per hyperparameter; missing means the model's default grid.
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// `None` falls back to [`default_seed`].
    #[serde(default)]
    pub seed: Option<u64>,
    /// Extra seeds for multi-seed runs; each is swept separately.
    #[serde(default)]
    pub extra_seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Persist the winning model of each run.
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds = vec![self.seed.unwrap_or_else(default_seed)];
        for s in &self.extra_seeds {
            if !seeds.contains(s) {
                seeds.push(*s);
            }
        }
        seeds
    }

    pub fn resolved_grid(&self) -> Grid {
        self.grid.clone().unwrap_or_else(|| default_grid(self.model))
    }
}

/// Grids used when a config names none.
pub fn default_grid(kind: ModelKind) -> Grid {
    let pairs: Vec<(&str, Value)> = match kind {
        ModelKind::ItemKnn => vec![("neighbors", json!([50, 100, 300]))],
        ModelKind::Ease => vec![("lambda", json!([1.0, 10.0, 100.0, 500.0]))],
        ModelKind::BprMf => vec![("dim", json!([64])), ("lr", json!([1e-3, 3e-3])), ("reg", json!([1e-4, 1e-3]))],
        ModelKind::MultiVae => vec![("latent_dim", json!([64, 200])), ("beta_max", json!([0.2, 0.5]))],
        ModelKind::DiffRec => vec![
            ("steps", json!([5, 20, 50])),
            ("noise_scale", json!([0.01, 0.1, 0.5])),
            ("infer_fraction", json!([0.0, 0.5])),
        ],
        ModelKind::LDiffRec => vec![("compression", json!([0.05, 0.1, 0.3])), ("clusters", json!([2, 5, 10]))],
        ModelKind::Popularity => vec![],
    };
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.as_array().expect("literal array").clone()))
        .collect()
}

/// Cartesian product in declaration order, last key varying fastest.
pub fn expand_grid(grid: &Grid) -> Result<Vec<Map<String, Value>>> {
    if let Some((key, _)) = grid.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Config(format!("grid entry {key:?} has no values")));
    }
    let mut points = vec![Map::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Defaults of `P`, overridden key by key; unknown keys are rejected.
pub fn overlay_params<P>(overrides: &Map<String, Value>) -> Result<P>
where
    P: Default + Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(P::default())?;
    let obj = value.as_object_mut().expect("parameter structs serialize to objects");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("hyperparameters {overrides:?}: {e}")))
}

/// Fully resolved hyperparameters as JSON, for records.
pub fn resolved_params(kind: ModelKind, overrides: &Map<String, Value>) -> Result<Value> {
    Ok(match kind {
        ModelKind::ItemKnn => serde_json::to_value(overlay_params::<ItemKnnParams>(overrides)?)?,
        ModelKind::Ease => serde_json::to_value(overlay_params::<EaseParams>(overrides)?)?,
        ModelKind::BprMf => serde_json::to_value(overlay_params::<BprParams>(overrides)?)?,
        ModelKind::MultiVae => serde_json::to_value(overlay_params::<MultiVaeParams>(overrides)?)?,
        ModelKind::DiffRec => serde_json::to_value(overlay_params::<DiffRecParams>(overrides)?)?,
        ModelKind::LDiffRec => serde_json::to_value(overlay_params::<LDiffRecParams>(overrides)?)?,
        ModelKind::Popularity => {
            if let Some(k) = overrides.keys().next() {
                return Err(Error::Config(format!("Pop takes no hyperparameters, got {k:?}")));
            }
            json!({})
        }
    })
}

/// Train `kind` on the split's training interactions.
pub fn fit_model(kind: ModelKind, overrides: &Map<String, Value>, split: &SplitDataset, seed: u64) -> Result<TrainedModel> {
    let (train, n) = (&split.train, split.n_items());
    Ok(match kind {
        ModelKind::ItemKnn => TrainedModel::ItemKnn(fit_itemknn(train, n, &overlay_params(overrides)?)?),
        ModelKind::Ease => TrainedModel::Ease(fit_ease(train, n, &overlay_params(overrides)?)?),
        ModelKind::BprMf => TrainedModel::BprMf(fit_bprmf(train, n, &overlay_params(overrides)?, seed)?),
        ModelKind::MultiVae => TrainedModel::MultiVae(fit_multivae(train, n, &overlay_params(overrides)?, seed)?),
        ModelKind::DiffRec => TrainedModel::DiffRec(fit_diffrec(train, n, &overlay_params(overrides)?, seed)?),
        ModelKind::LDiffRec => TrainedModel::LDiffRec(fit_ldiffrec(train, n, &overlay_params(overrides)?, seed)?),
        ModelKind::Popularity => {
            resolved_params(kind, overrides)?;
            TrainedModel::Popularity(fit_popularity(train, n)?)
        }
    })
}
