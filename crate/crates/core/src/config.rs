//! Run configuration: defaults, reference presets, `key = value` files and
//! command-line overrides.
//!
//! Precedence, lowest first: built-in defaults, the `preset` named in the
//! file, the remaining file keys, `METRICFORGE_SEED` (seed only, when no
//! `--seed` flag is given), command-line flags.

use std::path::Path;

use crate::classify::{AggregationRule, ClassifierKind, ClassifierParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{self, SynthConfig};
use crate::triplet::{Mining, TrainConfig};

pub const SEED_ENV: &str = "METRICFORGE_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub classifier: ClassifierParams,
    pub bags: usize,
    pub max_frames: usize,
    pub aggregation: AggregationRule,
    pub test_fraction: f64,
    /// When set, the test split holds out this many videos of each class
    /// instead of using `test_fraction`.
    pub test_videos_per_class: Option<usize>,
    /// Triplet sample size above which mining statistics are estimated.
    pub stats_sample_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = synth::reference_config("separable").expect("built-in preset");
        Self {
            seed: synth.seed,
            synth,
            train: TrainConfig::default(),
            classifier: ClassifierParams::default(),
            bags: 1,
            max_frames: 25,
            aggregation: AggregationRule::Mean,
            test_fraction: 0.25,
            test_videos_per_class: None,
            stats_sample_cap: 1_000_000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "seed",
    "n_identities",
    "videos_per_identity",
    "frames_per_video",
    "dim",
    "identity_scale",
    "cluster_std",
    "fake_offset_norm",
    "offset_commonality",
    "fake_video_fraction",
    "margin",
    "learning_rate",
    "momentum",
    "batch_size",
    "epochs",
    "out_dim",
    "normalize",
    "mining",
    "classifier",
    "sgd_epochs",
    "sgd_learning_rate",
    "sgd_batch_size",
    "rf_trees",
    "rf_max_depth",
    "rf_min_leaf",
    "rf_features",
    "rf_bootstrap",
    "bags",
    "max_frames",
    "aggregation",
    "test_fraction",
    "test_videos_per_class",
    "stats_sample_cap",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Defaults with a reference preset's synthetic config, whose seed also
    /// becomes the master seed.
    pub fn from_preset(name: &str) -> Result<Self> {
        let synth = synth::reference_config(name)?;
        Ok(Self {
            seed: synth.seed,
            synth,
            ..Self::default()
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        let t = &mut self.train;
        let c = &mut self.classifier;
        match key {
            "preset" => {
                *s = synth::reference_config(value)?;
                self.seed = s.seed;
            }
            "seed" => self.seed = parse(key, value)?,
            "n_identities" => s.n_identities = parse(key, value)?,
            "videos_per_identity" => s.videos_per_identity = parse(key, value)?,
            "frames_per_video" => s.frames_per_video = parse(key, value)?,
            "dim" => s.dim = parse(key, value)?,
            "identity_scale" => s.identity_scale = parse(key, value)?,
            "cluster_std" => s.cluster_std = parse(key, value)?,
            "fake_offset_norm" => s.fake_offset_norm = parse(key, value)?,
            "offset_commonality" => s.offset_commonality = parse(key, value)?,
            "fake_video_fraction" => s.fake_video_fraction = parse(key, value)?,
            "margin" => t.margin = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "momentum" => t.momentum = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "out_dim" => t.out_dim = parse(key, value)?,
            "normalize" => t.normalize_output = parse_bool(key, value)?,
            "mining" => t.mining = value.parse::<Mining>()?,
            "classifier" => c.kind = value.parse::<ClassifierKind>()?,
            "sgd_epochs" => c.linear.epochs = parse(key, value)?,
            "sgd_learning_rate" => c.linear.learning_rate = parse(key, value)?,
            "sgd_batch_size" => c.linear.batch_size = parse(key, value)?,
            "rf_trees" => c.forest.n_trees = parse(key, value)?,
            "rf_max_depth" => c.forest.max_depth = parse(key, value)?,
            "rf_min_leaf" => c.forest.min_samples_leaf = parse(key, value)?,
            "rf_features" => {
                c.forest.features_per_split = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "rf_bootstrap" => c.forest.bootstrap = parse_bool(key, value)?,
            "bags" => self.bags = parse(key, value)?,
            "max_frames" => self.max_frames = parse(key, value)?,
            "aggregation" => self.aggregation = value.parse()?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "test_videos_per_class" => {
                self.test_videos_per_class = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "stats_sample_cap" => self.stats_sample_cap = parse(key, value)?,
            other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a config file's text. A `preset` line is applied before every
    /// other key wherever it appears.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = parse_pairs(text)?;
        if let Some((_, v)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            self.set("preset", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Seed fallback from the environment.
    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}: cannot parse {v:?}")))?;
        }
        Ok(())
    }

    /// Copies per-stage seeds into the owned module configs. Synthesis uses
    /// the master seed itself so a preset regenerates its reference data.
    pub fn resolve_seeds(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = rng::derive_seed(self.seed, "train");
    }

    pub fn split_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "split")
    }

    pub fn classifier_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "classify")
    }

    pub fn stats_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "stats")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.classifier.validate()?;
        if self.bags == 0 || self.bags % 2 == 0 {
            return Err(Error::Config(format!("bags must be odd, got {}", self.bags)));
        }
        if self.max_frames == 0 {
            return Err(Error::Config("max_frames must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.test_videos_per_class == Some(0) {
            return Err(Error::Config("test_videos_per_class must be positive".into()));
        }
        if self.stats_sample_cap == 0 {
            return Err(Error::Config("stats_sample_cap must be positive".into()));
        }
        Ok(())
    }

    /// Text form accepted by [`RunConfig::apply_text`]. Stage seeds are not
    /// written; they follow from `seed`.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let t = &self.train;
        let c = &self.classifier;
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("n_identities", s.n_identities.to_string()),
            ("videos_per_identity", s.videos_per_identity.to_string()),
            ("frames_per_video", s.frames_per_video.to_string()),
            ("dim", s.dim.to_string()),
            ("identity_scale", s.identity_scale.to_string()),
            ("cluster_std", s.cluster_std.to_string()),
            ("fake_offset_norm", s.fake_offset_norm.to_string()),
            ("offset_commonality", s.offset_commonality.to_string()),
            ("fake_video_fraction", s.fake_video_fraction.to_string()),
            ("margin", t.margin.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("momentum", t.momentum.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("out_dim", t.out_dim.to_string()),
            ("normalize", t.normalize_output.to_string()),
            ("mining", t.mining.to_string()),
            ("classifier", c.kind.to_string()),
            ("sgd_epochs", c.linear.epochs.to_string()),
            ("sgd_learning_rate", c.linear.learning_rate.to_string()),
            ("sgd_batch_size", c.linear.batch_size.to_string()),
            ("rf_trees", c.forest.n_trees.to_string()),
            ("rf_max_depth", c.forest.max_depth.to_string()),
            ("rf_min_leaf", c.forest.min_samples_leaf.to_string()),
            (
                "rf_features",
                c.forest.features_per_split.map_or("auto".into(), |v| v.to_string()),
            ),
            ("rf_bootstrap", c.forest.bootstrap.to_string()),
            ("bags", self.bags.to_string()),
            ("max_frames", self.max_frames.to_string()),
            (
                "aggregation",
                match self.aggregation {
                    AggregationRule::Vote => "vote".into(),
                    AggregationRule::Mean => "mean".into(),
                },
            ),
            ("test_fraction", self.test_fraction.to_string()),
            (
                "test_videos_per_class",
                self.test_videos_per_class.map_or("none".into(), |v| v.to_string()),
            ),
            ("stats_sample_cap", self.stats_sample_cap.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Usage(format!("line {}: unknown config key {k:?}", n + 1)));
        }
        if v.is_empty() {
            return Err(Error::Config(format!("line {}: {k} has no value", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}
