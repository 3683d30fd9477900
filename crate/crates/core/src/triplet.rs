//! Learnable projection head trained with triplet loss.
//!
//! The head is `y = W x + b`, optionally followed by L2 normalization. It is
//! trained by momentum SGD on
//! `max(|f(a) - f(p)|^2 - |f(a) - f(n)|^2 + margin, 0)` over triplets mined
//! online from class-balanced batches.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::codec::{LeReader, LeWriter};
use crate::dataset::{EmbeddingDataset, EmbeddingRecord, Label};
use crate::error::{Error, Result};
use crate::fsio;
use crate::metricspace::{self, categorize, MiningStats, Triplet};
use crate::par::{self, ExecMode};
use crate::rng;

pub const HEAD_MAGIC: [u8; 4] = *b"HEAD";
pub const HEAD_VERSION: u16 = 1;

/// Below this pre-normalization norm the output is left unnormalized.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// `out_dim x in_dim`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub normalize_output: bool,
}

/// Result of pushing one vector through the head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub y: Array1<f64>,
    /// Norm of the affine output before normalization.
    pub pre_norm: f64,
    /// True when normalization was requested but skipped for a near-zero norm.
    pub degenerate: bool,
}

impl ProjectionHead {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, normalize_output: bool) -> Result<Self> {
        let (out_dim, in_dim) = weights.dim();
        if out_dim < 2 || in_dim < 1 {
            return Err(Error::Shape(format!(
                "head needs out_dim >= 2 and in_dim >= 1, got {out_dim}x{in_dim}"
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias length {} does not match out_dim {out_dim}",
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("head parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            bias,
            normalize_output,
        })
    }

    /// Weights uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, normalize_output: bool, rng: &mut R) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::Shape("in_dim must be positive".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-bound..=bound));
        Self::new(weights, Array1::zeros(out_dim), normalize_output)
    }

    pub fn identity(dim: usize, normalize_output: bool) -> Result<Self> {
        Self::new(Array2::eye(dim), Array1::zeros(dim), normalize_output)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = self.weights.row(o);
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *slot = acc;
        }
    }

    /// Affine map then optional normalization, in place. Returns
    /// `(pre_norm, degenerate)`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> (f64, bool) {
        self.affine_into(x, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !self.normalize_output {
            return (norm, false);
        }
        if norm < NORM_EPSILON {
            return (norm, true);
        }
        out.iter_mut().for_each(|v| *v /= norm);
        (norm, false)
    }

    pub fn forward_detailed(&self, x: &[f64]) -> Result<HeadOutput> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has length {}, head expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("input vector is not finite".into()));
        }
        let mut y = vec![0.0; self.out_dim()];
        let (pre_norm, degenerate) = self.apply_into(x, &mut y);
        Ok(HeadOutput {
            y: Array1::from(y),
            pre_norm,
            degenerate,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Array1<f64>> {
        let out = self.forward_detailed(x)?;
        if out.degenerate {
            log::warn!("projection norm {:.3e} below threshold; output left unnormalized", out.pre_norm);
        }
        Ok(out.y)
    }

    /// Projects every row of `x`.
    pub fn project(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.project_with(x, ExecMode::default())
    }

    pub fn project_with(&self, x: ArrayView2<f64>, mode: ExecMode) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, head expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let out_dim = self.out_dim();
        let mut buf = vec![0.0; x.nrows() * out_dim];
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let in_dim = self.in_dim();
        par::for_each_row_mut(mode, &mut buf, out_dim, |i, row| {
            self.apply_into(&xs[i * in_dim..(i + 1) * in_dim], row);
        });
        Ok(Array2::from_shape_vec((x.nrows(), out_dim), buf).expect("shape"))
    }

    /// Maps every record of a dataset through the head.
    pub fn project_dataset(&self, ds: &EmbeddingDataset) -> Result<EmbeddingDataset> {
        let y = self.project(ds.matrix(&ds.all_indices()).view())?;
        let records = ds
            .records
            .iter()
            .zip(y.rows())
            .map(|(r, row)| EmbeddingRecord {
                label: r.label,
                video_id: r.video_id,
                frame_id: r.frame_id,
                vector: row.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        EmbeddingDataset::new(self.out_dim(), records)
    }

    /// Rounds every parameter to `f32`, the precision of the HEAD format.
    pub fn quantized(&self) -> Self {
        Self {
            weights: self.weights.mapv(|v| f64::from(v as f32)),
            bias: self.bias.mapv(|v| f64::from(v as f32)),
            normalize_output: self.normalize_output,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds the u16 header field")))
        };
        let mut w = LeWriter::new();
        w.bytes(&HEAD_MAGIC);
        w.u16(HEAD_VERSION);
        w.u16(dim(self.in_dim(), "in_dim")?);
        w.u16(dim(self.out_dim(), "out_dim")?);
        w.u8(u8::from(self.normalize_output));
        for &v in self.weights.iter() {
            w.f32(v as f32);
        }
        for &v in self.bias.iter() {
            w.f32(v as f32);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 11 {
            return Err(Error::Format("HEAD file shorter than its header".into()));
        }
        let mut r = LeReader::new(bytes);
        if r.take(4)? != HEAD_MAGIC {
            return Err(Error::Format("bad magic, expected HEAD".into()));
        }
        let version = r.u16()?;
        if version != HEAD_VERSION {
            return Err(Error::Format(format!("unsupported HEAD version {version}")));
        }
        let in_dim = usize::from(r.u16()?);
        let out_dim = usize::from(r.u16()?);
        let normalize = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Corruption(format!("normalize flag {other}"))),
        };
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            weights.push(f64::from(r.f32()?));
        }
        let mut bias = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            bias.push(f64::from(r.f32()?));
        }
        r.finish()?;
        let weights = Array2::from_shape_vec((out_dim, in_dim), weights).expect("shape");
        Self::new(weights, Array1::from(bias), normalize)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, &self.to_bytes()?)
    }
}

/// `max(|a - p|^2 - |a - n|^2 + alpha, 0)`.
pub fn triplet_loss(f_a: &[f64], f_p: &[f64], f_n: &[f64], alpha: f64) -> f64 {
    (sq_dist(f_a, f_p) - sq_dist(f_a, f_n) + alpha).max(0.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    /// Mean loss over all supplied triplets.
    pub loss: f64,
    pub grad_w: Array2<f64>,
    pub grad_b: Array1<f64>,
    /// Triplets with strictly positive loss.
    pub active: usize,
}

struct BatchForward {
    y: Vec<f64>,
    norms: Vec<f64>,
    normalized: Vec<bool>,
}

fn check_batch(head: &ProjectionHead, x: &ArrayView2<f64>, triplets: &[Triplet]) -> Result<()> {
    if x.ncols() != head.in_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, head expects {}",
            x.ncols(),
            head.in_dim()
        )));
    }
    if triplets.is_empty() {
        return Err(Error::Shape("at least one triplet is required".into()));
    }
    let b = x.nrows();
    if let Some(t) = triplets.iter().find(|t| t.a >= b || t.p >= b || t.n >= b) {
        return Err(Error::Shape(format!("triplet {t:?} indexes outside a batch of {b}")));
    }
    Ok(())
}

fn forward_batch(head: &ProjectionHead, x: &ArrayView2<f64>) -> BatchForward {
    let out_dim = head.out_dim();
    let mut y = vec![0.0; x.nrows() * out_dim];
    let mut norms = Vec::with_capacity(x.nrows());
    let mut normalized = Vec::with_capacity(x.nrows());
    let mut degenerate = 0usize;
    let row_buf: Vec<f64> = Vec::with_capacity(head.in_dim());
    let mut row_buf = row_buf;
    for (i, row) in x.rows().into_iter().enumerate() {
        row_buf.clear();
        row_buf.extend(row.iter());
        let (norm, degen) = head.apply_into(&row_buf, &mut y[i * out_dim..(i + 1) * out_dim]);
        degenerate += usize::from(degen);
        norms.push(norm);
        normalized.push(head.normalize_output && !degen);
    }
    if degenerate > 0 {
        log::warn!("{degenerate} batch row(s) had near-zero projection norm; left unnormalized");
    }
    BatchForward { y, norms, normalized }
}

fn batch_loss(fwd: &BatchForward, out_dim: usize, triplets: &[Triplet], alpha: f64) -> (f64, usize) {
    let row = |i: usize| &fwd.y[i * out_dim..(i + 1) * out_dim];
    let mut sum = 0.0;
    let mut active = 0;
    for t in triplets {
        let l = triplet_loss(row(t.a), row(t.p), row(t.n), alpha);
        if l > 0.0 {
            active += 1;
        }
        sum += l;
    }
    (sum / triplets.len() as f64, active)
}

/// Mean triplet loss of the batch under the head.
pub fn batch_loss_only(head: &ProjectionHead, x: ArrayView2<f64>, triplets: &[Triplet], alpha: f64) -> Result<f64> {
    check_batch(head, &x, triplets)?;
    Ok(batch_loss(&forward_batch(head, &x), head.out_dim(), triplets, alpha).0)
}

/// Mean loss and its analytic gradient with respect to `W` and `b`.
pub fn batch_loss_and_grad(
    head: &ProjectionHead,
    x: ArrayView2<f64>,
    triplets: &[Triplet],
    alpha: f64,
) -> Result<BatchGradient> {
    check_batch(head, &x, triplets)?;
    let out_dim = head.out_dim();
    let fwd = forward_batch(head, &x);
    let row = |i: usize| &fwd.y[i * out_dim..(i + 1) * out_dim];

    let scale = 1.0 / triplets.len() as f64;
    let mut grad_y = vec![0.0; fwd.y.len()];
    let mut sum = 0.0;
    let mut active = 0;
    for t in triplets {
        let (fa, fp, fneg) = (row(t.a), row(t.p), row(t.n));
        let l = sq_dist(fa, fp) - sq_dist(fa, fneg) + alpha;
        if l <= 0.0 {
            continue;
        }
        sum += l;
        active += 1;
        for k in 0..out_dim {
            let (a, p, n) = (fa[k], fp[k], fneg[k]);
            grad_y[t.a * out_dim + k] += scale * 2.0 * (n - p);
            grad_y[t.p * out_dim + k] += scale * -2.0 * (a - p);
            grad_y[t.n * out_dim + k] += scale * 2.0 * (a - n);
        }
    }

    let mut grad_w = Array2::zeros(head.weights.dim());
    let mut grad_b = Array1::zeros(out_dim);
    let mut grad_u = vec![0.0; out_dim];
    for (i, xrow) in x.rows().into_iter().enumerate() {
        let gy = &grad_y[i * out_dim..(i + 1) * out_dim];
        if gy.iter().all(|&v| v == 0.0) {
            continue;
        }
        if fwd.normalized[i] {
            // d(u/|u|)/du = (I - y y^T) / |u|
            let y = row(i);
            let proj: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
            for k in 0..out_dim {
                grad_u[k] = (gy[k] - y[k] * proj) / fwd.norms[i];
            }
        } else {
            grad_u.copy_from_slice(gy);
        }
        for (o, &g) in grad_u.iter().enumerate() {
            grad_b[o] += g;
            let mut wrow = grad_w.row_mut(o);
            for (slot, &xv) in wrow.iter_mut().zip(xrow.iter()) {
                *slot += g * xv;
            }
        }
    }
    Ok(BatchGradient {
        loss: sum * scale,
        grad_w,
        grad_b,
        active,
    })
}

/// Denominator floor of the finite-difference relative error. Central
/// differences carry round-off near `1e-11` at `eps = 1e-4`, so entries
/// that are exactly zero (the bias gradient without normalization) would
/// otherwise report errors near 1.
pub const FD_DENOM_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient and central finite
/// differences over every entry of `W` and `b`. Relative error is
/// `|analytic - numeric| / (|analytic| + |numeric| + FD_DENOM_FLOOR)`.
pub fn finite_diff_check(
    head: &ProjectionHead,
    x: ArrayView2<f64>,
    triplets: &[Triplet],
    alpha: f64,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("finite-difference step must be > 0, got {eps}")));
    }
    let analytic = batch_loss_and_grad(head, x, triplets, alpha)?;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs() + FD_DENOM_FLOOR);
    let mut probe = head.clone();
    let mut worst: f64 = 0.0;

    for idx in 0..head.weights.len() {
        let (o, k) = (idx / head.in_dim(), idx % head.in_dim());
        let orig = head.weights[[o, k]];
        probe.weights[[o, k]] = orig + eps;
        let plus = batch_loss_only(&probe, x, triplets, alpha)?;
        probe.weights[[o, k]] = orig - eps;
        let minus = batch_loss_only(&probe, x, triplets, alpha)?;
        probe.weights[[o, k]] = orig;
        worst = worst.max(rel(analytic.grad_w[[o, k]], (plus - minus) / (2.0 * eps)));
    }
    for o in 0..head.out_dim() {
        let orig = head.bias[o];
        probe.bias[o] = orig + eps;
        let plus = batch_loss_only(&probe, x, triplets, alpha)?;
        probe.bias[o] = orig - eps;
        let minus = batch_loss_only(&probe, x, triplets, alpha)?;
        probe.bias[o] = orig;
        worst = worst.max(rel(analytic.grad_b[o], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mining {
    SemiHard,
    Random,
}

impl FromStr for Mining {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semihard" => Ok(Mining::SemiHard),
            "random" => Ok(Mining::Random),
            other => Err(Error::Config(format!("mining must be semihard or random, got {other:?}"))),
        }
    }
}

impl fmt::Display for Mining {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mining::SemiHard => "semihard",
            Mining::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Even, at least 4; half real and half fake.
    pub batch_size: usize,
    pub epochs: usize,
    pub out_dim: usize,
    pub normalize_output: bool,
    pub mining: Mining,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            out_dim: 128,
            normalize_output: true,
            mining: Mining::SemiHard,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be > 0, got {}", self.margin));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size < 4 || self.batch_size % 2 != 0 {
            return bad(format!("batch_size must be even and >= 4, got {}", self.batch_size));
        }
        if self.out_dim < 2 || self.out_dim > usize::from(u16::MAX) {
            return bad(format!("out_dim must be in 2..=65535, got {}", self.out_dim));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub mean_loss: Vec<f64>,
    /// Categories of the triplets mined in each epoch, measured before the
    /// update each batch drove.
    pub mining: Vec<MiningStats>,
    pub active_fraction: Vec<f64>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.mean_loss.len()
    }

    /// CSV with columns `epoch,mean_loss,easy,semihard,hard,active_fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,easy,semihard,hard,active_fraction\n");
        for e in 0..self.epochs() {
            let m = &self.mining[e];
            s.push_str(&format!(
                "{e},{:.9e},{},{},{},{:.9e}\n",
                self.mean_loss[e], m.easy_count, m.semihard_count, m.hard_count, self.active_fraction[e]
            ));
        }
        s
    }
}

/// Trains a head on the given training rows.
///
/// Each epoch shuffles both classes, draws `batch_size / 2` rows per class
/// per batch without replacement (the last partial batch is dropped), mines
/// triplets with the current head and applies one momentum step
/// `v <- momentum * v - lr * grad; theta += v`. The returned head is rounded
/// to `f32` so it equals its own persisted form.
pub fn fit(
    dataset: &EmbeddingDataset,
    train_indices: &[usize],
    config: &TrainConfig,
) -> Result<(ProjectionHead, TrainReport)> {
    config.validate()?;
    let mut real = Vec::new();
    let mut fake = Vec::new();
    for &i in train_indices {
        let r = dataset
            .records
            .get(i)
            .ok_or_else(|| Error::Shape(format!("train index {i} out of range")))?;
        if r.label.is_fake() {
            fake.push(i);
        } else {
            real.push(i);
        }
    }
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Training("training rows must contain both classes".into()));
    }
    let half = config.batch_size / 2;
    let n_batches = real.len().min(fake.len()) / half;
    if config.epochs > 0 && n_batches == 0 {
        return Err(Error::Training(format!(
            "smaller class has {} rows, fewer than half a batch ({half})",
            real.len().min(fake.len())
        )));
    }

    let mut rng = rng::seeded(config.seed);
    let mut head = ProjectionHead::init(dataset.dim, config.out_dim, config.normalize_output, &mut rng)?;
    let mut vel_w = Array2::<f64>::zeros(head.weights.dim());
    let mut vel_b = Array1::<f64>::zeros(head.out_dim());
    let mut report = TrainReport::default();
    let mut labels = vec![Label::Real; half];
    labels.extend(std::iter::repeat_n(Label::Fake, half));
    let random_count = 2 * half * (half - 1);

    for _epoch in 0..config.epochs {
        real.shuffle(&mut rng);
        fake.shuffle(&mut rng);
        let mut stats = MiningStats::default();
        let mut loss_sum = 0.0;
        let mut n_triplets = 0usize;
        let mut n_active = 0usize;
        for b in 0..n_batches {
            let mut rows: Vec<usize> = real[b * half..(b + 1) * half].to_vec();
            rows.extend_from_slice(&fake[b * half..(b + 1) * half]);
            let x = dataset.matrix(&rows);
            let f = head.project_with(x.view(), ExecMode::Sequential)?;
            let dist = metricspace::pairwise_sq_dist_with(f.view(), ExecMode::Sequential)?;
            let triplets = match config.mining {
                Mining::SemiHard => metricspace::mine_semihard_batch(f.view(), &labels, config.margin)?,
                Mining::Random => metricspace::mine_random(&labels, random_count, rng.next_u64())?,
            };
            for t in &triplets {
                stats.record(categorize(dist.get(t.a, t.p), dist.get(t.a, t.n), config.margin));
            }
            let g = batch_loss_and_grad(&head, x.view(), &triplets, config.margin)?;
            loss_sum += g.loss * triplets.len() as f64;
            n_triplets += triplets.len();
            n_active += g.active;

            vel_w.zip_mut_with(&g.grad_w, |v, &gr| *v = config.momentum * *v - config.learning_rate * gr);
            vel_b.zip_mut_with(&g.grad_b, |v, &gr| *v = config.momentum * *v - config.learning_rate * gr);
            head.weights += &vel_w;
            head.bias += &vel_b;
        }
        if head.weights.iter().chain(head.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Training("parameters diverged to non-finite values".into()));
        }
        report.mean_loss.push(loss_sum / n_triplets as f64);
        report.mining.push(stats);
        report.active_fraction.push(n_active as f64 / n_triplets as f64);
    }
    Ok((head.quantized(), report))
}
