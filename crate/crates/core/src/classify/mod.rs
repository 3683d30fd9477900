//! Frame-level classifiers, bagging ensembles and video aggregation.

mod centroid;
mod ensemble;
mod forest;
mod linear;
mod persist;
mod video;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::dataset::Label;
use crate::error::{Error, Result};

pub use centroid::{fit_centroid, predict_centroid, predict_centroid_proba, NearestCentroid};
pub use ensemble::{ensemble_predict, make_bags, BagEnsemble};
pub use forest::{fit_forest, fit_forest_with, gini, predict_forest, DecisionTree, ForestParams, Node, RandomForest};
pub use linear::{fit_linear, predict_linear, sigmoid, LinearClassifier, LinearParams};
pub use persist::{write_predictions_csv, MODEL_MAGIC};
pub use video::{aggregate_video, group_by_video, AggregationRule, FrameScore, VideoScore};

/// Probability at or above which a frame counts as fake.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Sgd,
    Forest,
    Centroid,
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(ClassifierKind::Sgd),
            "rf" => Ok(ClassifierKind::Forest),
            "centroid" => Ok(ClassifierKind::Centroid),
            other => Err(Error::Config(format!("classifier must be sgd, rf or centroid, got {other:?}"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Sgd => "sgd",
            ClassifierKind::Forest => "rf",
            ClassifierKind::Centroid => "centroid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub kind: ClassifierKind,
    pub linear: LinearParams,
    pub forest: ForestParams,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Sgd,
            linear: LinearParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        self.linear.validate()?;
        self.forest.validate()
    }
}

/// A trained frame classifier of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearClassifier),
    Forest(RandomForest),
    Centroid(NearestCentroid),
}

impl Model {
    pub fn fit(x: ArrayView2<f64>, y: &[Label], params: &ClassifierParams, seed: u64) -> Result<Model> {
        Ok(match params.kind {
            ClassifierKind::Sgd => Model::Linear(fit_linear(x, y, &params.linear, seed)?),
            ClassifierKind::Forest => Model::Forest(fit_forest(x, y, &params.forest, seed)?),
            ClassifierKind::Centroid => Model::Centroid(fit_centroid(x, y)?),
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Model::Linear(_) => ClassifierKind::Sgd,
            Model::Forest(_) => ClassifierKind::Forest,
            Model::Centroid(_) => ClassifierKind::Centroid,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.dim(),
            Model::Forest(m) => m.n_features,
            Model::Centroid(m) => m.dim(),
        }
    }

    /// Per-row fake probability in `[0, 1]`.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => predict_linear(m, x),
            Model::Forest(m) => predict_forest(m, x),
            Model::Centroid(m) => predict_centroid_proba(m, x),
        }
    }

    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<Label>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| Label::from_fake(p >= DECISION_THRESHOLD))
            .collect())
    }
}
