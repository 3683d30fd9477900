//! Seeded synthetic embedding datasets.
//!
//! Each identity owns a centroid on the sphere of radius `identity_scale`.
//! Real frames scatter around the centroid with isotropic Gaussian noise;
//! fake frames scatter around the centroid shifted by an identity-specific
//! offset `fake_offset_norm * normalize(beta * g + (1 - beta) * h_i)`, where
//! `g` is one global direction and `h_i` a per-identity direction. `beta = 1`
//! makes the classes linearly separable along `g`; smaller values force a
//! model to account for identity.

use rand::seq::SliceRandom;

use crate::dataset::{EmbeddingDataset, EmbeddingRecord, Label};
use crate::error::{Error, Result};
use crate::rng::{self, Gaussian};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub videos_per_identity: usize,
    pub frames_per_video: usize,
    pub dim: usize,
    /// Radius of the sphere identity centroids are drawn on.
    pub identity_scale: f64,
    /// Within-identity Gaussian standard deviation.
    pub cluster_std: f64,
    /// Length of the real-to-fake displacement.
    pub fake_offset_norm: f64,
    /// Share of the global direction in each identity's fake offset.
    pub offset_commonality: f64,
    pub fake_video_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn total_videos(&self) -> usize {
        self.n_identities * self.videos_per_identity
    }

    /// Exact number of fake videos the generator will emit.
    pub fn fake_videos(&self) -> usize {
        let total = self.total_videos();
        ((self.fake_video_fraction * total as f64).round() as usize).clamp(1, total.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_identities == 0 || self.videos_per_identity == 0 || self.frames_per_video == 0 {
            return bad("n_identities, videos_per_identity and frames_per_video must be positive".into());
        }
        if self.dim == 0 || self.dim > usize::from(u16::MAX) {
            return bad(format!("dim must be in 1..=65535, got {}", self.dim));
        }
        if self.total_videos() < 2 {
            return bad("n_identities * videos_per_identity must be at least 2".into());
        }
        if u32::try_from(self.total_videos()).is_err() || u32::try_from(self.frames_per_video).is_err() {
            return bad("video/frame counts exceed the u32 id range".into());
        }
        if !(self.identity_scale > 0.0 && self.identity_scale.is_finite()) {
            return bad(format!("identity_scale must be > 0, got {}", self.identity_scale));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return bad(format!("cluster_std must be > 0, got {}", self.cluster_std));
        }
        if !(self.fake_offset_norm >= 0.0 && self.fake_offset_norm.is_finite()) {
            return bad(format!("fake_offset_norm must be >= 0, got {}", self.fake_offset_norm));
        }
        if !(0.0..=1.0).contains(&self.offset_commonality) {
            return bad(format!(
                "offset_commonality must be in [0, 1], got {}",
                self.offset_commonality
            ));
        }
        if !(self.fake_video_fraction > 0.0 && self.fake_video_fraction < 1.0) {
            return bad(format!(
                "fake_video_fraction must be in (0, 1), got {}",
                self.fake_video_fraction
            ));
        }
        Ok(())
    }
}

/// The frozen named configurations used by the test suite and the CLI.
///
/// | name        | ids x videos x frames | dim | scale | std | offset | beta | fake share |
/// |-------------|-----------------------|-----|-------|-----|--------|------|------------|
/// | separable   | 8 x 4 x 10            | 32  | 3.0   | 0.5 | 5.0    | 1.0  | 0.5        |
/// | hard        | 16 x 8 x 25           | 64  | 6.0   | 1.0 | 1.5    | 0.7  | 0.5        |
/// | imbalanced  | 16 x 8 x 10           | 32  | 3.0   | 1.0 | 2.0    | 0.8  | 0.875 (7:1)|
pub fn reference_config(name: &str) -> Result<SynthConfig> {
    let cfg = match name {
        "separable" => SynthConfig {
            n_identities: 8,
            videos_per_identity: 4,
            frames_per_video: 10,
            dim: 32,
            identity_scale: 3.0,
            cluster_std: 0.5,
            fake_offset_norm: 5.0,
            offset_commonality: 1.0,
            fake_video_fraction: 0.5,
            seed: 11,
        },
        "hard" => SynthConfig {
            n_identities: 16,
            videos_per_identity: 8,
            frames_per_video: 25,
            dim: 64,
            identity_scale: 6.0,
            cluster_std: 1.0,
            fake_offset_norm: 1.5,
            offset_commonality: 0.7,
            fake_video_fraction: 0.5,
            seed: 23,
        },
        "imbalanced" => SynthConfig {
            n_identities: 16,
            videos_per_identity: 8,
            frames_per_video: 10,
            dim: 32,
            identity_scale: 3.0,
            cluster_std: 1.0,
            fake_offset_norm: 2.0,
            offset_commonality: 0.8,
            fake_video_fraction: 0.875,
            seed: 31,
        },
        other => {
            return Err(Error::Lookup(format!(
                "no reference config {other:?} (known: separable, hard, imbalanced)"
            )))
        }
    };
    Ok(cfg)
}

pub const REFERENCE_NAMES: [&str; 3] = ["separable", "hard", "imbalanced"];

/// Generator internals, exposed so tests can check geometry directly.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub global_direction: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub fake_offsets: Vec<Vec<f64>>,
    /// Identity owning each video, indexed by video_id.
    pub video_identity: Vec<usize>,
}

pub fn generate(config: &SynthConfig) -> Result<EmbeddingDataset> {
    generate_with_truth(config).map(|(ds, _)| ds)
}

pub fn generate_with_truth(config: &SynthConfig) -> Result<(EmbeddingDataset, SynthTruth)> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let mut gauss = Gaussian::new();
    let dim = config.dim;
    let beta = config.offset_commonality;

    let g = gauss.unit_vector(&mut rng, dim);
    let mut centroids = Vec::with_capacity(config.n_identities);
    let mut fake_offsets = Vec::with_capacity(config.n_identities);
    for _ in 0..config.n_identities {
        let mu: Vec<f64> = gauss
            .unit_vector(&mut rng, dim)
            .into_iter()
            .map(|v| v * config.identity_scale)
            .collect();
        let h = gauss.unit_vector(&mut rng, dim);
        let mut mix: Vec<f64> = g.iter().zip(&h).map(|(gk, hk)| beta * gk + (1.0 - beta) * hk).collect();
        let norm = mix.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            mix.iter_mut().for_each(|v| *v *= config.fake_offset_norm / norm);
        } else {
            // beta = 0.5 with h = -g: no direction survives.
            mix.iter_mut().for_each(|v| *v = 0.0);
        }
        centroids.push(mu);
        fake_offsets.push(mix);
    }

    // Fake labels are spread across identities: videos are ranked within each
    // identity by a seeded shuffle, and the lowest ranks become fake first.
    let vpi = config.videos_per_identity;
    let mut order: Vec<(usize, usize, usize)> = Vec::with_capacity(config.total_videos());
    let identity_perm = {
        let mut p: Vec<usize> = (0..config.n_identities).collect();
        p.shuffle(&mut rng);
        p
    };
    for identity in 0..config.n_identities {
        let mut slots: Vec<usize> = (0..vpi).collect();
        slots.shuffle(&mut rng);
        for (rank, slot) in slots.into_iter().enumerate() {
            order.push((rank, identity_perm[identity], identity * vpi + slot));
        }
    }
    order.sort_unstable();
    let mut is_fake = vec![false; config.total_videos()];
    for &(_, _, video) in order.iter().take(config.fake_videos()) {
        is_fake[video] = true;
    }

    let mut records = Vec::with_capacity(config.total_videos() * config.frames_per_video);
    let mut video_identity = Vec::with_capacity(config.total_videos());
    for video in 0..config.total_videos() {
        let identity = video / vpi;
        video_identity.push(identity);
        let label = Label::from_fake(is_fake[video]);
        let center: Vec<f64> = if is_fake[video] {
            centroids[identity]
                .iter()
                .zip(&fake_offsets[identity])
                .map(|(m, d)| m + d)
                .collect()
        } else {
            centroids[identity].clone()
        };
        for frame in 0..config.frames_per_video {
            let vector = center
                .iter()
                .map(|&c| (c + config.cluster_std * gauss.sample(&mut rng)) as f32)
                .collect();
            records.push(EmbeddingRecord {
                label,
                video_id: video as u32,
                frame_id: frame as u32,
                vector,
            });
        }
    }
    let ds = EmbeddingDataset::new(dim, records)?;
    Ok((
        ds,
        SynthTruth {
            global_direction: g,
            centroids,
            fake_offsets,
            video_identity,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{to_bytes, Format};
    use std::collections::HashMap;

    fn tiny() -> SynthConfig {
        SynthConfig {
            n_identities: 4,
            videos_per_identity: 5,
            frames_per_video: 10,
            dim: 6,
            identity_scale: 2.0,
            cluster_std: 0.3,
            fake_offset_norm: 1.0,
            offset_commonality: 0.5,
            fake_video_fraction: 0.5,
            seed: 5,
        }
    }

    #[test]
    fn record_count_and_dim() {
        let ds = generate(&tiny()).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.dim, 6);
        assert!(ds.validate().is_valid());
    }

    #[test]
    fn deterministic_bytes() {
        let a = to_bytes(&generate(&tiny()).unwrap(), Format::Binary).unwrap();
        let b = to_bytes(&generate(&tiny()).unwrap(), Format::Binary).unwrap();
        assert_eq!(a, b);
        let mut other = tiny();
        other.seed = 6;
        assert_ne!(a, to_bytes(&generate(&other).unwrap(), Format::Binary).unwrap());
    }

    #[test]
    fn labels_consistent_within_video() {
        let ds = generate(&tiny()).unwrap();
        let mut seen: HashMap<u32, Label> = HashMap::new();
        for r in &ds.records {
            assert_eq!(*seen.entry(r.video_id).or_insert(r.label), r.label);
        }
        let fakes = seen.values().filter(|l| l.is_fake()).count();
        assert_eq!(fakes, 10);
    }

    #[test]
    fn grand_mean_gap_matches_offset() {
        // Even split per identity so centroid terms cancel in the class means.
        let cfg = SynthConfig {
            n_identities: 4,
            videos_per_identity: 2,
            frames_per_video: 500,
            dim: 2,
            identity_scale: 3.0,
            cluster_std: 1.0,
            fake_offset_norm: 5.0,
            offset_commonality: 1.0,
            fake_video_fraction: 0.5,
            seed: 99,
        };
        let (ds, truth) = generate_with_truth(&cfg).unwrap();
        let mut sums = [vec![0.0; cfg.dim], vec![0.0; cfg.dim]];
        let mut counts = [0usize; 2];
        for r in &ds.records {
            let c = r.label as usize;
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(&r.vector) {
                *s += f64::from(v);
            }
        }
        assert_eq!(counts, [2000, 2000]);
        let gap: Vec<f64> = (0..cfg.dim)
            .map(|k| sums[1][k] / counts[1] as f64 - sums[0][k] / counts[0] as f64)
            .collect();
        let dist = gap.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tol = 3.0 * cfg.cluster_std / (counts[0] as f64).sqrt();
        assert!((dist - 5.0).abs() < tol, "distance {dist}, tol {tol}");

        let along_g: f64 = gap.iter().zip(&truth.global_direction).map(|(a, b)| a * b).sum();
        assert!((along_g - 5.0).abs() < tol, "projection {along_g}");
    }

    #[test]
    fn reference_configs() {
        for name in REFERENCE_NAMES {
            reference_config(name).unwrap().validate().unwrap();
        }
        let imb = reference_config("imbalanced").unwrap();
        let fake = imb.fake_videos() as f64;
        let real = (imb.total_videos() - imb.fake_videos()) as f64;
        assert!((fake / real - 7.0).abs() <= 0.01);

        let sep = reference_config("separable").unwrap();
        assert_eq!(sep.offset_commonality, 1.0);
        assert!(sep.fake_offset_norm >= 5.0 * sep.cluster_std);

        let hard = reference_config("hard").unwrap();
        assert_eq!(hard.offset_commonality, 0.7);
        assert_eq!(hard.fake_offset_norm, 1.5 * hard.cluster_std);

        assert!(matches!(reference_config("foo"), Err(Error::Lookup(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny();
        c.cluster_std = 0.0;
        assert!(generate(&c).is_err());
        let mut c = tiny();
        c.n_identities = 1;
        c.videos_per_identity = 1;
        assert!(generate(&c).is_err());
        let mut c = tiny();
        c.offset_commonality = 1.5;
        assert!(generate(&c).is_err());
    }
}
