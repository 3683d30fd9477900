use std::collections::BTreeMap;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::dataset::{EmbeddingDataset, Label};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::rng;

use super::{ClassifierParams, Model, DECISION_THRESHOLD};

/// Splits the majority class's videos into `k` near-equal parts; bag `i` is
/// every minority frame plus the frames of part `i`. Indices in each bag are
/// ascending. `k = 1` returns the whole training set.
pub fn make_bags(dataset: &EmbeddingDataset, train_indices: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("bag count must be odd, got {k}")));
    }
    let mut videos: [BTreeMap<u32, Vec<usize>>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for &i in train_indices {
        let r = dataset
            .records
            .get(i)
            .ok_or_else(|| Error::Shape(format!("train index {i} out of range")))?;
        videos[r.label as usize].entry(r.video_id).or_default().push(i);
    }
    if videos[0].is_empty() || videos[1].is_empty() {
        return Err(Error::Bagging("training rows must contain both classes".into()));
    }
    if k == 1 {
        let mut all = train_indices.to_vec();
        all.sort_unstable();
        return Ok(vec![all]);
    }
    // Majority by video count; an exact tie treats fake as the majority.
    let majority = if videos[0].len() > videos[1].len() { 0 } else { 1 };
    let [real, fake] = videos;
    let (major, minor) = if majority == 0 { (real, fake) } else { (fake, real) };
    if major.len() < k {
        return Err(Error::Bagging(format!(
            "majority class has {} videos, fewer than {k} bags",
            major.len()
        )));
    }
    let minority_rows: Vec<usize> = minor.into_values().flatten().collect();
    let mut ids: Vec<u32> = major.keys().copied().collect();
    ids.shuffle(&mut rng::seeded(seed));
    let m = ids.len();
    Ok((0..k)
        .map(|part| {
            let mut bag = minority_rows.clone();
            for id in &ids[part * m / k..(part + 1) * m / k] {
                bag.extend_from_slice(&major[id]);
            }
            bag.sort_unstable();
            bag
        })
        .collect())
}

/// Majority vote of an odd number of models; each votes fake at
/// probability >= 0.5.
pub fn ensemble_predict(models: &[Model], x: ArrayView2<f64>) -> Result<Vec<Label>> {
    Ok(vote_fractions(models, x)?
        .into_iter()
        .map(|f| Label::from_fake(f > 0.5))
        .collect())
}

fn vote_fractions(models: &[Model], x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if models.is_empty() || models.len() % 2 == 0 {
        return Err(Error::Config(format!("ensemble size must be odd, got {}", models.len())));
    }
    let mut votes = vec![0usize; x.nrows()];
    for m in models {
        for (v, p) in votes.iter_mut().zip(m.predict_proba(x)?) {
            *v += usize::from(p >= DECISION_THRESHOLD);
        }
    }
    let k = models.len() as f64;
    Ok(votes.into_iter().map(|v| v as f64 / k).collect())
}

/// `k` models of one kind, each trained on its own bag.
#[derive(Debug, Clone, PartialEq)]
pub struct BagEnsemble {
    pub models: Vec<Model>,
}

impl BagEnsemble {
    /// Bag `i` is trained with seed stream `i`. Bags train concurrently when
    /// `mode` allows it; results are assembled by bag index.
    pub fn fit(
        dataset: &EmbeddingDataset,
        train_indices: &[usize],
        k: usize,
        params: &ClassifierParams,
        seed: u64,
        mode: ExecMode,
    ) -> Result<BagEnsemble> {
        params.validate()?;
        let bags = make_bags(dataset, train_indices, k, rng::derive_seed(seed, "bags"))?;
        let models = par::map_indices(mode, bags.len(), |i| {
            let x = dataset.matrix(&bags[i]);
            let y: Vec<Label> = bags[i].iter().map(|&r| dataset.records[r].label).collect();
            Model::fit(x.view(), &y, params, rng::derive_seed(seed, &format!("bag{i}")))
        });
        Ok(BagEnsemble {
            models: models.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    /// Score used for ranking metrics. A single model reports its own
    /// probability; a larger ensemble reports the fraction of fake votes.
    pub fn predict_scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self.models.as_slice() {
            [only] => only.predict_proba(x),
            many => vote_fractions(many, x),
        }
    }

    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<Label>> {
        ensemble_predict(&self.models, x)
    }
}
