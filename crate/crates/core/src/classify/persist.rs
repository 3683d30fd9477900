//! `MDL1` model container: magic `MDL1`, one kind byte, then a
//! kind-specific little-endian payload.
//!
//! | kind | payload |
//! |------|---------|
//! | 1 linear   | `dim u32`, `w: dim x f64`, `b f64` |
//! | 2 forest   | `n_features u32, max_depth u32, min_samples_leaf u32, features_per_split u32 (0 = default), bootstrap u8, seed u64, n_trees u32`, then per tree `n_nodes u32` and nodes: `0 u8, real u32, fake u32` for a leaf or `1 u8, feature u32, threshold f64, left u32, right u32` for a split |
//! | 3 centroid | `dim u32`, `real: dim x f64`, `fake: dim x f64` |
//! | 4 ensemble | `k u32`, then `k` nested `(kind, payload)` entries |

use std::io::Write;
use std::path::Path;

use ndarray::Array1;

use crate::codec::{LeReader, LeWriter};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::fsio;

use super::{BagEnsemble, DecisionTree, ForestParams, LinearClassifier, Model, NearestCentroid, Node, RandomForest};

pub const MODEL_MAGIC: [u8; 4] = *b"MDL1";

const KIND_LINEAR: u8 = 1;
const KIND_FOREST: u8 = 2;
const KIND_CENTROID: u8 = 3;
const KIND_ENSEMBLE: u8 = 4;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

fn put_vec(w: &mut LeWriter, v: &Array1<f64>) {
    v.iter().for_each(|&x| w.f64(x));
}

fn get_vec(r: &mut LeReader, n: usize) -> Result<Array1<f64>> {
    (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>().map(Array1::from)
}

fn encode_model(w: &mut LeWriter, model: &Model) -> Result<()> {
    match model {
        Model::Linear(m) => {
            w.u8(KIND_LINEAR);
            w.u32(u32_of(m.dim(), "dim")?);
            put_vec(w, &m.w);
            w.f64(m.b);
        }
        Model::Centroid(m) => {
            w.u8(KIND_CENTROID);
            w.u32(u32_of(m.dim(), "dim")?);
            put_vec(w, &m.centroid_real);
            put_vec(w, &m.centroid_fake);
        }
        Model::Forest(f) => {
            w.u8(KIND_FOREST);
            w.u32(u32_of(f.n_features, "n_features")?);
            w.u32(u32_of(f.params.max_depth, "max_depth")?);
            w.u32(u32_of(f.params.min_samples_leaf, "min_samples_leaf")?);
            w.u32(u32_of(f.params.features_per_split.unwrap_or(0), "features_per_split")?);
            w.u8(u8::from(f.params.bootstrap));
            w.u64(f.seed);
            w.u32(u32_of(f.trees.len(), "n_trees")?);
            for t in &f.trees {
                w.u32(u32_of(t.nodes.len(), "n_nodes")?);
                for n in &t.nodes {
                    match n {
                        Node::Leaf { counts } => {
                            w.u8(0);
                            w.u32(counts[0]);
                            w.u32(counts[1]);
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(1);
                            w.u32(u32_of(*feature, "feature")?);
                            w.f64(*threshold);
                            w.u32(u32_of(*left, "node index")?);
                            w.u32(u32_of(*right, "node index")?);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn decode_model(r: &mut LeReader, kind: u8) -> Result<Model> {
    Ok(match kind {
        KIND_LINEAR => {
            let dim = r.u32()? as usize;
            let w = get_vec(r, dim)?;
            let b = r.f64()?;
            Model::Linear(LinearClassifier { w, b })
        }
        KIND_CENTROID => {
            let dim = r.u32()? as usize;
            let centroid_real = get_vec(r, dim)?;
            let centroid_fake = get_vec(r, dim)?;
            Model::Centroid(NearestCentroid {
                centroid_real,
                centroid_fake,
            })
        }
        KIND_FOREST => {
            let n_features = r.u32()? as usize;
            let max_depth = r.u32()? as usize;
            let min_samples_leaf = r.u32()? as usize;
            let fps = r.u32()? as usize;
            let bootstrap = r.u8()? != 0;
            let seed = r.u64()?;
            let n_trees = r.u32()? as usize;
            let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
            for _ in 0..n_trees {
                let n_nodes = r.u32()? as usize;
                let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => Node::Leaf {
                            counts: [r.u32()?, r.u32()?],
                        },
                        1 => {
                            let feature = r.u32()? as usize;
                            let threshold = r.f64()?;
                            let left = r.u32()? as usize;
                            let right = r.u32()? as usize;
                            if feature >= n_features || left >= n_nodes || right >= n_nodes {
                                return Err(Error::Corruption("forest node references out of range".into()));
                            }
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            }
                        }
                        t => return Err(Error::Corruption(format!("unknown node tag {t}"))),
                    });
                }
                if nodes.is_empty() {
                    return Err(Error::Corruption("tree without nodes".into()));
                }
                trees.push(DecisionTree { nodes });
            }
            Model::Forest(RandomForest {
                trees,
                params: ForestParams {
                    n_trees,
                    max_depth,
                    min_samples_leaf,
                    features_per_split: (fps > 0).then_some(fps),
                    bootstrap,
                },
                n_features,
                seed,
            })
        }
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    })
}

fn open(bytes: &[u8]) -> Result<(LeReader<'_>, u8)> {
    if bytes.len() < 5 {
        return Err(Error::Format("model file shorter than its header".into()));
    }
    let mut r = LeReader::new(bytes);
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("bad magic, expected MDL1".into()));
    }
    let kind = r.u8()?;
    Ok((r, kind))
}

impl Model {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = LeWriter::new();
        w.bytes(&MODEL_MAGIC);
        encode_model(&mut w, self)?;
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let (mut r, kind) = open(bytes)?;
        if kind == KIND_ENSEMBLE {
            return Err(Error::Format("file holds an ensemble, not a single model".into()));
        }
        let m = decode_model(&mut r, kind)?;
        r.finish()?;
        Ok(m)
    }
}

impl BagEnsemble {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = LeWriter::new();
        w.bytes(&MODEL_MAGIC);
        w.u8(KIND_ENSEMBLE);
        w.u32(u32_of(self.models.len(), "k")?);
        for m in &self.models {
            encode_model(&mut w, m)?;
        }
        Ok(w.buf)
    }

    /// Accepts an ensemble file or a single-model file (as a 1-model
    /// ensemble).
    pub fn from_bytes(bytes: &[u8]) -> Result<BagEnsemble> {
        let (mut r, kind) = open(bytes)?;
        let models = if kind == KIND_ENSEMBLE {
            let k = r.u32()? as usize;
            let mut models = Vec::with_capacity(k.min(1024));
            for _ in 0..k {
                let kind = r.u8()?;
                models.push(decode_model(&mut r, kind)?);
            }
            models
        } else {
            vec![decode_model(&mut r, kind)?]
        };
        r.finish()?;
        Ok(BagEnsemble { models })
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, &self.to_bytes()?)
    }

    pub fn read_path(path: &Path) -> Result<BagEnsemble> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// CSV `video_id,frame_id,probability,label`.
pub fn write_predictions_csv<W: Write>(
    mut sink: W,
    rows: impl IntoIterator<Item = (u32, u32, f64, Label)>,
) -> Result<()> {
    writeln!(sink, "video_id,frame_id,probability,label")?;
    for (v, f, p, l) in rows {
        writeln!(sink, "{v},{f},{p:.9e},{}", l.as_u8())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{fit_forest, ForestParams};
    use ndarray::array;

    #[test]
    fn every_kind_round_trips() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [3.0, 2.0], [4.0, 1.0], [0.5, 0.2], [3.5, 3.0]];
        let y = [Label::Real, Label::Real, Label::Fake, Label::Fake, Label::Real, Label::Fake];
        let forest = fit_forest(x.view(), &y, &ForestParams { n_trees: 3, ..ForestParams::default() }, 2).unwrap();
        let models = vec![
            Model::Linear(LinearClassifier { w: array![0.25, -1.5], b: 0.125 }),
            Model::Forest(forest),
            Model::Centroid(NearestCentroid {
                centroid_real: array![0.1, 0.2],
                centroid_fake: array![1.0 / 3.0, 7.0],
            }),
        ];
        for m in &models {
            let bytes = m.to_bytes().unwrap();
            assert_eq!(&bytes[..4], b"MDL1");
            assert_eq!(&Model::from_bytes(&bytes).unwrap(), m);
        }
        let ens = BagEnsemble { models };
        let bytes = ens.to_bytes().unwrap();
        assert_eq!(bytes[4], KIND_ENSEMBLE);
        assert_eq!(BagEnsemble::from_bytes(&bytes).unwrap(), ens);
        assert!(Model::from_bytes(&bytes).is_err());
        assert!(BagEnsemble::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn linear_layout() {
        let m = Model::Linear(LinearClassifier { w: array![1.0], b: -2.0 });
        let mut expected = b"MDL1".to_vec();
        expected.push(1);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(m.to_bytes().unwrap(), expected);
    }

    #[test]
    fn predictions_csv() {
        let mut out = Vec::new();
        write_predictions_csv(&mut out, [(3, 0, 0.75, Label::Fake), (3, 1, 0.25, Label::Real)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "video_id,frame_id,probability,label\n3,0,7.500000000e-1,1\n3,1,2.500000000e-1,0\n"
        );
    }
}
