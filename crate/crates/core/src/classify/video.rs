use std::collections::BTreeMap;
use std::str::FromStr;

use crate::dataset::Label;
use crate::error::{Error, Result};

use super::DECISION_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub video_id: u32,
    pub frame_id: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoScore {
    pub video_id: u32,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationRule {
    /// Majority of thresholded frame labels, ties fake; score is the fake
    /// vote fraction.
    Vote,
    /// Mean frame probability, fake at >= 0.5.
    Mean,
}

impl FromStr for AggregationRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(AggregationRule::Vote),
            "mean" => Ok(AggregationRule::Mean),
            other => Err(Error::Config(format!("aggregation rule must be vote or mean, got {other:?}"))),
        }
    }
}

pub fn group_by_video(frames: &[FrameScore]) -> BTreeMap<u32, Vec<FrameScore>> {
    let mut out: BTreeMap<u32, Vec<FrameScore>> = BTreeMap::new();
    for f in frames {
        out.entry(f.video_id).or_default().push(*f);
    }
    out
}

/// Per-video verdicts from the `max_frames` lowest-numbered frames of each
/// video. Output is ordered by video id.
pub fn aggregate_video(
    groups: &BTreeMap<u32, Vec<FrameScore>>,
    rule: AggregationRule,
    max_frames: usize,
) -> Result<Vec<VideoScore>> {
    if max_frames == 0 {
        return Err(Error::Aggregation("max_frames must be at least 1".into()));
    }
    groups
        .iter()
        .map(|(&video_id, frames)| {
            if frames.is_empty() {
                return Err(Error::Aggregation(format!("video {video_id} has no frames")));
            }
            let mut window = frames.clone();
            window.sort_by_key(|f| f.frame_id);
            window.truncate(max_frames);
            let n = window.len() as f64;
            let (label, score) = match rule {
                AggregationRule::Vote => {
                    let fake = window.iter().filter(|f| f.probability >= DECISION_THRESHOLD).count();
                    (Label::from_fake(2 * fake >= window.len()), fake as f64 / n)
                }
                AggregationRule::Mean => {
                    let mean = window.iter().map(|f| f.probability).sum::<f64>() / n;
                    (Label::from_fake(mean >= DECISION_THRESHOLD), mean)
                }
            };
            Ok(VideoScore { video_id, label, score })
        })
        .collect()
}
