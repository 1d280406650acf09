//! Experiment orchestration: top-k lists, grid search on validation recall,
//! JSON-lines persistence, result tables and radar charts.

mod config;
mod report;
mod search;
mod topk;

pub use config::{
    default_grid, default_seed, expand_grid, fit_model, overlay_params, read_split, resolved_params, write_split, DatasetSource,
    DatasetSpec, ExperimentConfig, Grid, DEFAULT_SEED, SEED_ENV,
};
pub use report::{
    aggregate, emit_radar_svg, emit_table, format_percent, normalize_for_radar, radar_values, TableFormat, TableRow, RADAR_AXES,
};
pub use search::{
    append_record, evaluate_model, grid_search, load_checkpoint, read_records, run_experiment, save_checkpoint, validation_recall,
    GridPointResult, RunRecord, SearchOutcome,
};
pub use topk::{masked_violations, recommend_topk, top_k_unmasked};
