use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::config::{expand_grid, fit_model, resolved_params, ExperimentConfig};
use super::topk::recommend_topk;
use crate::dataset::{Phase, SplitDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, recall_at_k, MetricReport};
use crate::model::{ModelKind, TrainedModel};

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub params: Map<String, Value>,
    /// Mean validation Recall@k in percent; `None` if training or scoring failed.
    pub validation_recall: Option<f64>,
    pub error: Option<String>,
}

/// One finished (or failed) sweep, persisted as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub dataset: String,
    pub seed: u64,
    pub k: usize,
    /// Winning grid point as given in the grid.
    pub chosen: Map<String, Value>,
    /// Winning hyperparameters with defaults filled in.
    pub params: Value,
    pub validation_recall: Option<f64>,
    pub test: Option<MetricReport>,
    pub grid: Vec<GridPointResult>,
    pub seconds: f64,
    pub checkpoint: Option<PathBuf>,
    pub error: Option<String>,
}

/// Mean Recall@k (percent) over users with validation items.
pub fn validation_recall(model: &TrainedModel, split: &SplitDataset, k: usize) -> Result<f64> {
    let lists = recommend_topk(model, split, Phase::Validation, k)?;
    if lists.users.is_empty() {
        return Err(Error::Config("no user has validation interactions".into()));
    }
    let total: f64 = lists
        .users
        .iter()
        .zip(&lists.lists)
        .map(|(&u, l)| recall_at_k(l, &split.validation[u as usize], k))
        .sum();
    Ok(100.0 * total / lists.users.len() as f64)
}

/// Test-phase report for a trained model.
pub fn evaluate_model(model: &TrainedModel, split: &SplitDataset, phase: Phase, k: usize) -> Result<MetricReport> {
    let lists = recommend_topk(model, split, phase, k)?;
    let truth = match phase {
        Phase::Validation => &split.validation,
        Phase::Test => &split.test,
    };
    evaluate_run(&lists, truth, &split.user_groups, &split.item_groups)
}

/// Result of a sweep before persistence, including the winning model.
pub struct SearchOutcome {
    pub record: RunRecord,
    pub model: TrainedModel,
}

/// Train every grid point with `seed`, keep the best validation Recall@k
/// (earliest point wins ties) and evaluate it on the test phase.
pub fn grid_search(cfg: &ExperimentConfig, split: &SplitDataset, seed: u64) -> Result<SearchOutcome> {
    let start = Instant::now();
    let points = expand_grid(&cfg.resolved_grid())?;
    let mut grid = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64, TrainedModel)> = None;
    for (idx, point) in points.iter().enumerate() {
        let mut overrides = cfg.base.clone();
        overrides.extend(point.clone());
        let attempt = fit_model(cfg.model, &overrides, split, seed).and_then(|m| validation_recall(&m, split, cfg.k).map(|r| (m, r)));
        match attempt {
            Ok((model, recall)) => {
                tracing::info!(model = %cfg.model, point = ?point, recall, "grid point");
                grid.push(GridPointResult {
                    params: point.clone(),
                    validation_recall: Some(recall),
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, r, _)| recall > *r) {
                    best = Some((idx, recall, model));
                }
            }
            Err(e) => {
                tracing::warn!(model = %cfg.model, point = ?point, error = %e, "grid point failed");
                grid.push(GridPointResult {
                    params: point.clone(),
                    validation_recall: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (idx, recall, model) = best.ok_or_else(|| Error::AllGridPointsFailed {
        model: cfg.model.to_string(),
    })?;
    let mut overrides = cfg.base.clone();
    overrides.extend(points[idx].clone());
    let test = evaluate_model(&model, split, Phase::Test, cfg.k)?;
    Ok(SearchOutcome {
        record: RunRecord {
            model: cfg.model,
            dataset: cfg.dataset.name.clone(),
            seed,
            k: cfg.k,
            chosen: points[idx].clone(),
            params: resolved_params(cfg.model, &overrides)?,
            validation_recall: Some(recall),
            test: Some(test),
            grid,
            seconds: start.elapsed().as_secs_f64(),
            checkpoint: None,
            error: None,
        },
        model,
    })
}

/// Sweep every seed of `cfg`, persisting a record (failed or not) per seed
/// to `<output_dir>/runs.jsonl` and the winning checkpoints next to it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let split = cfg.dataset.load_split()?;
    let records_path = cfg.output_dir.join("runs.jsonl");
    let mut out = Vec::new();
    for seed in cfg.seeds() {
        let record = match grid_search(cfg, &split, seed) {
            Ok(SearchOutcome { mut record, model }) => {
                if cfg.save_checkpoints {
                    let path = cfg.output_dir.join(format!(
                        "{}_{}_{}.json",
                        sanitize(&cfg.dataset.name),
                        sanitize(cfg.model.label()),
                        seed
                    ));
                    save_checkpoint(&model, &path)?;
                    record.checkpoint = Some(path);
                }
                record
            }
            Err(e) => RunRecord {
                model: cfg.model,
                dataset: cfg.dataset.name.clone(),
                seed,
                k: cfg.k,
                chosen: Map::new(),
                params: Value::Null,
                validation_recall: None,
                test: None,
                grid: Vec::new(),
                seconds: 0.0,
                checkpoint: None,
                error: Some(e.to_string()),
            },
        };
        append_record(&records_path, &record)?;
        out.push(record);
    }
    Ok(out)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Append one record as a single JSON line.
pub fn append_record(path: &Path, record: &RunRecord) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, model)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}
