use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fairdiff::dataset::{
    generate_synthetic, ingest_canonical, ingest_ml1m, temporal_split, write_canonical, Dataset, Gender, Phase, SplitRatios,
    SyntheticConfig,
};
use fairdiff::harness::{
    emit_radar_svg, emit_table, evaluate_model, load_checkpoint, normalize_for_radar, radar_values, read_records, read_split,
    run_experiment, write_split, ExperimentConfig, TableFormat,
};
use fairdiff::metrics::METRIC_COLUMNS;

#[derive(Parser)]
#[command(name = "fairdiff", version, about = "Train and evaluate recommenders for accuracy and fairness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Ml1m,
    Canonical,
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, filter and split a dataset; writes canonical TSVs and split.json.
    Prepare {
        #[arg(long, value_enum)]
        dataset: SourceKind,
        /// ML1M directory, canonical directory (interactions.tsv, users.tsv) or synthetic config JSON.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        min_interactions: usize,
        #[arg(long, default_value_t = 0.2)]
        head_fraction: f64,
    },
    /// Grid-search one model on one dataset as described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a saved model on a prepared split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        phase: PhaseArg,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Also write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate run records.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw the nDCG / ΔnDCG / APLT trade-off chart for one dataset.
    Radar {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Required when the records cover several datasets.
        #[arg(long)]
        dataset: Option<String>,
    },
}

fn load_source(kind: SourceKind, input: &Path) -> Result<Dataset> {
    Ok(match kind {
        SourceKind::Ml1m => ingest_ml1m(&input.join("ratings.dat"), &input.join("users.dat"))?,
        SourceKind::Canonical => ingest_canonical(&input.join("interactions.tsv"), &input.join("users.tsv"))?,
        SourceKind::Synthetic => {
            let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let cfg: SyntheticConfig = serde_json::from_str(&text)?;
            generate_synthetic(&cfg)?
        }
    })
}

fn prepare(kind: SourceKind, input: &Path, out: &Path, min_interactions: usize, head_fraction: f64) -> Result<()> {
    let raw = load_source(kind, input)?;
    let d = raw.filter_min_interactions(min_interactions)?;
    let split = temporal_split(&d, SplitRatios::default(), head_fraction)?;
    std::fs::create_dir_all(out)?;
    write_canonical(&d, &out.join("interactions.tsv"), &out.join("users.tsv"))?;
    write_split(&split, &out.join("split.json"))?;
    println!(
        "raw:      {} users, {} items, {} interactions",
        raw.n_users(),
        raw.n_items(),
        raw.n_interactions()
    );
    println!(
        "filtered: {} users, {} items, {} interactions, sparsity {:.4}%, female share {:.2}%",
        d.n_users(),
        d.n_items(),
        d.n_interactions(),
        100.0 * d.sparsity(),
        100.0 * d.gender_share(Gender::F)
    );
    println!(
        "split:    {} train / {} validation / {} test",
        split.n_train(),
        split.validation.iter().map(Vec::len).sum::<usize>(),
        split.test.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare {
            dataset,
            input,
            out,
            min_interactions,
            head_fraction,
        } => prepare(dataset, &input, &out, min_interactions, head_fraction)?,
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            let records = run_experiment(&cfg)?;
            print!("{}", emit_table(&records, TableFormat::Csv)?);
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("seed {} failed: {}", r.seed, r.error.as_deref().unwrap_or_default());
            }
        }
        Command::Evaluate {
            checkpoint,
            split,
            phase,
            k,
            out,
        } => {
            let model = load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let split = read_split(&split)?;
            let phase = match phase {
                PhaseArg::Validation => Phase::Validation,
                PhaseArg::Test => Phase::Test,
            };
            let report = evaluate_model(&model, &split, phase, k)?;
            println!("{}", METRIC_COLUMNS.join(","));
            let cells: Vec<String> = report
                .values()
                .iter()
                .map(|v| fairdiff::harness::format_percent(v / 100.0))
                .collect();
            println!("{}", cells.join(","));
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Report { records, format, out } => {
            let records = read_records(&records)?;
            let format = match format {
                Format::Csv => TableFormat::Csv,
                Format::Md => TableFormat::Markdown,
            };
            let table = emit_table(&records, format)?;
            match out {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
        }
        Command::Radar { records, out, dataset } => {
            let records = read_records(&records)?;
            let mut names: Vec<&str> = records.iter().map(|r| r.dataset.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            let name = match (dataset, names.as_slice()) {
                (Some(d), _) => d,
                (None, [only]) => only.to_string(),
                (None, []) => bail!("no records in input"),
                (None, many) => bail!("records cover several datasets ({}); pass --dataset", many.join(", ")),
            };
            let values = radar_values(&records, &name);
            if values.is_empty() {
                bail!("no successful runs for dataset {name}");
            }
            std::fs::write(&out, emit_radar_svg(&name, &normalize_for_radar(&values)))?;
        }
    }
    Ok(())
}
