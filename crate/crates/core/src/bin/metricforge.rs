use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metricforge::config::{RunConfig, SEED_ENV};
use metricforge::dataset::{self, DatasetSplit, EmbeddingDataset};
use metricforge::metrics::MetricsReport;
use metricforge::par::ExecMode;
use metricforge::pipeline::{self, EvalOptions};
use metricforge::projviz;
use metricforge::{fsio, synth, triplet, Error, ProjectionHead, Result};

#[derive(Parser, Debug)]
#[command(name = "metricforge", version, about = "Triplet-loss metric learning for real/fake video classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Reference synthetic config: separable, hard or imbalanced.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Master seed; falls back to METRICFORGE_SEED, then the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<String>,
    #[arg(long, global = true, value_name = "F")]
    margin: Option<String>,
    #[arg(long = "out-dim", global = true, value_name = "N")]
    out_dim: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    epochs: Option<String>,
    #[arg(long = "batch-size", global = true, value_name = "N")]
    batch_size: Option<String>,
    /// sgd, rf or centroid.
    #[arg(long, global = true, value_name = "KIND")]
    classifier: Option<String>,
    /// Odd number of bagged models.
    #[arg(long, global = true, value_name = "N")]
    bags: Option<String>,
    #[arg(long = "max-frames", global = true, value_name = "N")]
    max_frames: Option<String>,
    /// semihard or random.
    #[arg(long, global = true, value_name = "KIND")]
    mining: Option<String>,
    /// table or csv.
    #[arg(long, global = true, value_name = "FMT", default_value = "table")]
    format: String,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic embedding file.
    Synth {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Easy / semi-hard / hard counts over a whole file.
    MineStats {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        head: Option<PathBuf>,
    },
    /// Train a projection head on the train side of the split.
    Train {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long = "out-head", value_name = "PATH")]
        out_head: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
    },
    /// Fit classifiers on the train side, report on the test side.
    Eval {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        head: Option<PathBuf>,
        /// Per-frame test predictions CSV.
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
        /// Trained classifier or ensemble file.
        #[arg(long = "out-model", value_name = "PATH")]
        out_model: Option<PathBuf>,
    },
    /// PCA scatter CSVs before and (with --head) after projection.
    Project {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        head: Option<PathBuf>,
        /// Scatter of the raw embeddings.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Scatter after the head; requires --head.
        #[arg(long = "out-after", value_name = "PATH")]
        out_after: Option<PathBuf>,
    },
    /// synth, split, train, eval and project from one seed.
    Pipeline {
        #[arg(long = "out-dir", value_name = "DIR")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum OutFormat {
    Table,
    Csv,
}

fn build_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(name) = &c.preset {
        cfg.set("preset", name)?;
    }
    if let Some(path) = &c.config {
        cfg.apply_file(path)?;
    }
    if c.seed.is_none() {
        cfg.apply_env_seed(std::env::var(SEED_ENV).ok().as_deref())?;
    }
    let flags = [
        ("seed", &c.seed),
        ("margin", &c.margin),
        ("out_dim", &c.out_dim),
        ("epochs", &c.epochs),
        ("batch_size", &c.batch_size),
        ("classifier", &c.classifier),
        ("bags", &c.bags),
        ("max_frames", &c.max_frames),
        ("mining", &c.mining),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.resolve_seeds();
    cfg.validate()?;
    Ok(cfg)
}

fn exec_mode(jobs: Option<usize>) -> Result<ExecMode> {
    match jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(1) => Ok(ExecMode::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(ExecMode::Parallel)
        }
        _ => Ok(ExecMode::default()),
    }
}

fn read_dataset(path: &Path) -> Result<EmbeddingDataset> {
    let ds = dataset::read_path(path)?;
    let report = ds.validate();
    if !report.is_valid() {
        return Err(Error::Validation(format!("{}: {report}", path.display())));
    }
    Ok(ds)
}

fn read_head(path: Option<&PathBuf>, ds: &EmbeddingDataset) -> Result<Option<ProjectionHead>> {
    let Some(p) = path else { return Ok(None) };
    let head = ProjectionHead::read_path(p)?;
    if head.in_dim() != ds.dim {
        return Err(Error::Shape(format!(
            "head expects dimension {}, embeddings have {}",
            head.in_dim(),
            ds.dim
        )));
    }
    Ok(Some(head))
}

fn print_reports(rows: &[(String, MetricsReport)], fmt: OutFormat) {
    match fmt {
        OutFormat::Table => print!("{}", MetricsReport::table(rows)),
        OutFormat::Csv => print!("{}", pipeline::reports_csv(rows)),
    }
}

fn split_for(ds: &EmbeddingDataset, cfg: &RunConfig) -> Result<DatasetSplit> {
    pipeline::make_split(ds, cfg)
}

fn run(cli: Cli) -> Result<()> {
    let fmt = match cli.common.format.as_str() {
        "table" => OutFormat::Table,
        "csv" => OutFormat::Csv,
        other => return Err(Error::Usage(format!("--format must be table or csv, got {other:?}"))),
    };
    let cfg = build_config(&cli.common)?;
    let mode = exec_mode(cli.common.jobs)?;

    match cli.command {
        Command::Synth { out } => {
            let ds = synth::generate(&cfg.synth)?;
            dataset::write_path(&ds, &out)?;
            if fmt == OutFormat::Table {
                println!("wrote {} records of dimension {} to {}", ds.len(), ds.dim, out.display());
            }
        }
        Command::MineStats { input, head } => {
            let ds = read_dataset(&input)?;
            let head = read_head(head.as_ref(), &ds)?;
            let stats = pipeline::mine_report(
                &ds,
                head.as_ref(),
                cfg.train.margin,
                cfg.stats_sample_cap,
                cfg.stats_seed(),
                mode,
            )?;
            match fmt {
                OutFormat::Table => print!("{}", pipeline::mining_stats_table(&stats)),
                OutFormat::Csv => print!("{}", pipeline::mining_stats_csv(&stats)),
            }
        }
        Command::Train { input, out_head, report } => {
            let ds = read_dataset(&input)?;
            let split = split_for(&ds, &cfg)?;
            let (head, rep) = triplet::fit(&ds, &split.train_indices, &cfg.train)?;
            let head_bytes = head.to_bytes()?;
            fsio::write_atomic(&out_head, &head_bytes)?;
            fsio::write_atomic(&report, rep.to_csv().as_bytes())?;
            match fmt {
                OutFormat::Table => {
                    if let (Some(first), Some(last)) = (rep.mean_loss.first(), rep.mean_loss.last()) {
                        println!(
                            "trained {} -> {} head for {} epochs; mean loss {first:.6} -> {last:.6}",
                            head.in_dim(),
                            head.out_dim(),
                            rep.epochs()
                        );
                    }
                }
                OutFormat::Csv => print!("{}", rep.to_csv()),
            }
        }
        Command::Eval {
            input,
            head,
            predictions,
            out_model,
        } => {
            let ds = read_dataset(&input)?;
            let head = read_head(head.as_ref(), &ds)?;
            let split = split_for(&ds, &cfg)?;
            let (features, name) = match &head {
                Some(h) => (h.project_dataset(&ds)?, "triplet"),
                None => (ds, "raw"),
            };
            let opts = EvalOptions::from_config(&cfg, mode);
            let (model, outcome) = pipeline::evaluate(&features, &split, &opts, cfg.classifier_seed())?;
            let pred_bytes = predictions.as_ref().map(|_| pipeline::predictions_csv(&outcome)).transpose()?;
            let model_bytes = out_model.as_ref().map(|_| model.to_bytes()).transpose()?;
            if let (Some(p), Some(b)) = (&predictions, &pred_bytes) {
                fsio::write_atomic(p, b)?;
            }
            if let (Some(p), Some(b)) = (&out_model, &model_bytes) {
                fsio::write_atomic(p, b)?;
            }
            print_reports(&pipeline::outcome_rows(name, &outcome), fmt);
        }
        Command::Project {
            input,
            head,
            out,
            out_after,
        } => {
            let ds = read_dataset(&input)?;
            let head = read_head(head.as_ref(), &ds)?;
            if out_after.is_some() && head.is_none() {
                return Err(Error::Usage("--out-after requires --head".into()));
            }
            let before = pipeline::project(&ds, None, mode)?;
            let after = match (&head, &out_after) {
                (Some(h), Some(_)) => Some(pipeline::project(&ds, Some(h), mode)?),
                _ => None,
            };
            projviz::export_scatter(&before, &out)?;
            if let (Some(p), Some(path)) = (&after, &out_after) {
                projviz::export_scatter(p, path)?;
            }
            if fmt == OutFormat::Table {
                println!("explained fraction before: {:.4}", before.explained_fraction);
                if let Some(p) = &after {
                    println!("explained fraction after:  {:.4}", p.explained_fraction);
                }
            }
        }
        Command::Pipeline { out_dir } => {
            let result = pipeline::run_pipeline(&cfg, mode)?;
            pipeline::write_pipeline(&cfg, &result, &out_dir)?;
            print_reports(&result.metric_rows(), fmt);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
