//! Experiment drivers behind the command-line tool: evaluation of a feature
//! space, mining reports and the one-seed end-to-end pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::classify::{
    aggregate_video, group_by_video, write_predictions_csv, AggregationRule, BagEnsemble, ClassifierParams,
    FrameScore, VideoScore,
};
use crate::config::RunConfig;
use crate::dataset::{self, DatasetSplit, EmbeddingDataset, Label};
use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::{full_report, MetricsReport, REPORT_COLUMNS};
use crate::metricspace::{self, MiningStats};
use crate::par::ExecMode;
use crate::projviz::{self, Projection2D};
use crate::synth;
use crate::triplet::{self, ProjectionHead, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub classifier: ClassifierParams,
    pub bags: usize,
    pub max_frames: usize,
    pub aggregation: AggregationRule,
    pub mode: ExecMode,
}

impl EvalOptions {
    pub fn from_config(cfg: &RunConfig, mode: ExecMode) -> Self {
        Self {
            classifier: cfg.classifier.clone(),
            bags: cfg.bags,
            max_frames: cfg.max_frames,
            aggregation: cfg.aggregation,
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub frame: MetricsReport,
    pub video: MetricsReport,
    /// Test frames in ascending row order with predicted labels.
    pub frames: Vec<(FrameScore, Label)>,
    pub videos: Vec<VideoScore>,
    pub video_truth: Vec<Label>,
}

/// Fits the configured classifier (or bag ensemble) on the train rows and
/// reports frame and video level metrics on the test rows.
pub fn evaluate(
    features: &EmbeddingDataset,
    split: &DatasetSplit,
    opts: &EvalOptions,
    seed: u64,
) -> Result<(BagEnsemble, EvalOutcome)> {
    if split.test_indices.is_empty() {
        return Err(Error::Split("test split is empty".into()));
    }
    let ensemble = BagEnsemble::fit(features, &split.train_indices, opts.bags, &opts.classifier, seed, opts.mode)?;
    let x = features.matrix(&split.test_indices);
    let scores = ensemble.predict_scores(x.view())?;
    let pred = ensemble.predict_labels(x.view())?;
    let truth: Vec<Label> = split.test_indices.iter().map(|&i| features.records[i].label).collect();
    let frame = full_report(&scores, &pred, &truth)?;

    let frames: Vec<(FrameScore, Label)> = split
        .test_indices
        .iter()
        .zip(scores.iter().zip(&pred))
        .map(|(&i, (&s, &l))| {
            let r = &features.records[i];
            (
                FrameScore {
                    video_id: r.video_id,
                    frame_id: r.frame_id,
                    probability: s,
                },
                l,
            )
        })
        .collect();
    let mut video_label = BTreeMap::new();
    for &i in &split.test_indices {
        let r = &features.records[i];
        video_label.entry(r.video_id).or_insert(r.label);
    }
    let flat: Vec<FrameScore> = frames.iter().map(|(f, _)| *f).collect();
    let videos = aggregate_video(&group_by_video(&flat), opts.aggregation, opts.max_frames)?;
    let video_truth: Vec<Label> = videos.iter().map(|v| video_label[&v.video_id]).collect();
    let video_scores: Vec<f64> = videos.iter().map(|v| v.score).collect();
    let video_pred: Vec<Label> = videos.iter().map(|v| v.label).collect();
    let video = full_report(&video_scores, &video_pred, &video_truth)?;
    Ok((
        ensemble,
        EvalOutcome {
            frame,
            video,
            frames,
            videos,
            video_truth,
        },
    ))
}

pub fn make_split(ds: &EmbeddingDataset, cfg: &RunConfig) -> Result<DatasetSplit> {
    match cfg.test_videos_per_class {
        Some(n) => dataset::split_balanced(ds, n, cfg.split_seed()),
        None => dataset::split_by_video(ds, cfg.test_fraction, cfg.split_seed()),
    }
}

/// Mining statistics over a whole dataset, optionally after a head.
pub fn mine_report(
    ds: &EmbeddingDataset,
    head: Option<&ProjectionHead>,
    margin: f64,
    sample_cap: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<MiningStats> {
    let x = ds.matrix(&ds.all_indices());
    let f = match head {
        Some(h) => h.project_with(x.view(), mode)?,
        None => x,
    };
    metricspace::mining_stats_with(f.view(), &ds.labels(), margin, Some(sample_cap), seed, mode)
}

pub fn mining_stats_csv(stats: &MiningStats) -> String {
    format!(
        "easy,semihard,hard,total,nonzero_loss_fraction\n{},{},{},{},{:.6}\n",
        stats.easy_count,
        stats.semihard_count,
        stats.hard_count,
        stats.total,
        stats.nonzero_loss_fraction()
    )
}

pub fn mining_stats_table(stats: &MiningStats) -> String {
    let pct = |c: u64| if stats.total == 0 { 0.0 } else { 100.0 * c as f64 / stats.total as f64 };
    format!(
        "category  count        share\neasy      {:<12} {:>6.2}%\nsemihard  {:<12} {:>6.2}%\nhard      {:<12} {:>6.2}%\ntotal     {}\n",
        stats.easy_count,
        pct(stats.easy_count),
        stats.semihard_count,
        pct(stats.semihard_count),
        stats.hard_count,
        pct(stats.hard_count),
        stats.total
    )
}

/// Rows `(name, report)` as CSV with a leading `name` column.
pub fn reports_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = format!("name,{}\n", REPORT_COLUMNS.join(","));
    for (name, r) in rows {
        let _ = writeln!(s, "{name},{}", r.csv_row());
    }
    s
}

pub fn outcome_rows(prefix: &str, o: &EvalOutcome) -> Vec<(String, MetricsReport)> {
    vec![
        (format!("{prefix}/frame"), o.frame),
        (format!("{prefix}/video"), o.video),
    ]
}

pub fn predictions_csv(o: &EvalOutcome) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_predictions_csv(
        &mut buf,
        o.frames.iter().map(|(f, l)| (f.video_id, f.frame_id, f.probability, *l)),
    )?;
    Ok(buf)
}

/// PCA of a dataset's vectors, optionally after a head.
pub fn project(ds: &EmbeddingDataset, head: Option<&ProjectionHead>, mode: ExecMode) -> Result<Projection2D> {
    let x = ds.matrix(&ds.all_indices());
    let f = match head {
        Some(h) => h.project_with(x.view(), mode)?,
        None => x,
    };
    projviz::pca2(f.view(), &ds.labels())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub dataset: EmbeddingDataset,
    pub split: DatasetSplit,
    pub head: ProjectionHead,
    pub train_report: TrainReport,
    pub raw: EvalOutcome,
    pub triplet: EvalOutcome,
    pub scatter_raw: Projection2D,
    pub scatter_head: Projection2D,
}

impl PipelineResult {
    pub fn metric_rows(&self) -> Vec<(String, MetricsReport)> {
        let mut rows = outcome_rows("raw", &self.raw);
        rows.extend(outcome_rows("triplet", &self.triplet));
        rows
    }

    pub fn summary_csv(&self) -> String {
        let mut s = reports_csv(&self.metric_rows());
        let _ = writeln!(
            s,
            "# explained_fraction raw={:.6} triplet={:.6}",
            self.scatter_raw.explained_fraction, self.scatter_head.explained_fraction
        );
        s
    }
}

/// synth, split, train, evaluate raw and projected features, project.
/// Nothing is written; see [`write_pipeline`].
pub fn run_pipeline(cfg: &RunConfig, mode: ExecMode) -> Result<PipelineResult> {
    let mut cfg = cfg.clone();
    cfg.resolve_seeds();
    cfg.validate()?;
    let dataset = synth::generate(&cfg.synth)?;
    let split = make_split(&dataset, &cfg)?;
    let (head, train_report) = triplet::fit(&dataset, &split.train_indices, &cfg.train)?;
    let opts = EvalOptions::from_config(&cfg, mode);
    let (_, raw) = evaluate(&dataset, &split, &opts, cfg.classifier_seed())?;
    let projected = head.project_dataset(&dataset)?;
    let (_, trip) = evaluate(&projected, &split, &opts, cfg.classifier_seed())?;
    let scatter_raw = project(&dataset, None, mode)?;
    let scatter_head = project(&dataset, Some(&head), mode)?;
    Ok(PipelineResult {
        dataset,
        split,
        head,
        train_report,
        raw,
        triplet: trip,
        scatter_raw,
        scatter_head,
    })
}

pub const PIPELINE_FILES: [&str; 9] = [
    "config.txt",
    "embeddings.emb",
    "head.bin",
    "train_report.csv",
    "metrics.csv",
    "predictions_raw.csv",
    "predictions_triplet.csv",
    "scatter_raw.csv",
    "scatter_triplet.csv",
];

/// Serializes every artifact first, then writes each file atomically.
pub fn write_pipeline(cfg: &RunConfig, result: &PipelineResult, out_dir: &Path) -> Result<()> {
    let mut scatter_raw = Vec::new();
    projviz::write_scatter(&result.scatter_raw, &mut scatter_raw)?;
    let mut scatter_head = Vec::new();
    projviz::write_scatter(&result.scatter_head, &mut scatter_head)?;
    let blobs: [Vec<u8>; 9] = [
        cfg.to_text().into_bytes(),
        dataset::to_bytes(&result.dataset, dataset::Format::Binary)?,
        result.head.to_bytes()?,
        result.train_report.to_csv().into_bytes(),
        result.summary_csv().into_bytes(),
        predictions_csv(&result.raw)?,
        predictions_csv(&result.triplet)?,
        scatter_raw,
        scatter_head,
    ];
    std::fs::create_dir_all(out_dir)?;
    for (name, blob) in PIPELINE_FILES.iter().zip(&blobs) {
        fsio::write_atomic(&out_dir.join(name), blob)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::from_preset("separable").unwrap();
        cfg.train.epochs = 3;
        cfg.train.out_dim = 8;
        cfg.train.batch_size = 16;
        cfg.classifier.linear.epochs = 10;
        cfg
    }

    #[test]
    fn pipeline_is_deterministic_and_mode_independent() {
        let cfg = tiny();
        let a = run_pipeline(&cfg, ExecMode::Parallel).unwrap();
        let b = run_pipeline(&cfg, ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.raw.videos.len(), a.raw.video_truth.len());
        let test_videos: std::collections::BTreeSet<u32> =
            a.split.test_indices.iter().map(|&i| a.dataset.records[i].video_id).collect();
        assert_eq!(a.triplet.videos.len(), test_videos.len());
    }

    #[test]
    fn invalid_config_fails_before_work() {
        let mut cfg = tiny();
        cfg.bags = 2;
        assert!(matches!(run_pipeline(&cfg, ExecMode::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn reports_csv_layout() {
        let cfg = tiny();
        let r = run_pipeline(&cfg, ExecMode::Sequential).unwrap();
        let csv = reports_csv(&r.metric_rows());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "name,accuracy,precision,recall,f1,auc,eer,tp,fp,tn,fn");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("raw/frame,"));
        assert!(lines[4].starts_with("triplet/video,"));
    }
}
