//! Squared-Euclidean geometry and triplet mining.
//!
//! All distances here are squared. The triplet taxonomy is applied to
//! squared distances so that it agrees with the hinge loss:
//!
//! * `Easy`     iff `d2_an >= d2_ap + margin` (loss is 0)
//! * `SemiHard` iff `d2_ap <= d2_an < d2_ap + margin` (loss in `(0, margin]`)
//! * `Hard`     iff `d2_an < d2_ap` (loss `> margin`)

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub d2: Array2<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d2[[i, j]]
    }
}

fn check_finite(x: &ArrayView2<f64>) -> Result<()> {
    if let Some(((i, k), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Validation(format!("entry ({i}, {k}) is not finite")));
    }
    Ok(())
}

fn row_norms(x: &ArrayView2<f64>) -> Vec<f64> {
    x.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// One row of the gram-identity distance kernel. The summation order is fixed
/// so the value of `(i, j)` never depends on how rows are scheduled.
fn sq_dist_row(x: &ArrayView2<f64>, norms: &[f64], i: usize, out: &mut [f64]) {
    let xi = x.row(i);
    for (j, slot) in out.iter_mut().enumerate() {
        if j == i {
            *slot = 0.0;
            continue;
        }
        let xj = x.row(j);
        let mut dot = 0.0;
        for (a, b) in xi.iter().zip(xj.iter()) {
            dot += a * b;
        }
        *slot = (norms[i] + norms[j] - 2.0 * dot).max(0.0);
    }
}

/// Pairwise squared distances via `|a|^2 + |b|^2 - 2 a.b`, clamped at zero.
pub fn pairwise_sq_dist(x: ArrayView2<f64>) -> Result<DistanceMatrix> {
    pairwise_sq_dist_with(x, ExecMode::default())
}

pub fn pairwise_sq_dist_with(x: ArrayView2<f64>, mode: ExecMode) -> Result<DistanceMatrix> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Shape("distance matrix needs at least one row".into()));
    }
    check_finite(&x)?;
    let norms = row_norms(&x);
    let mut buf = vec![0.0; n * n];
    par::for_each_row_mut(mode, &mut buf, n, |i, row| sq_dist_row(&x, &norms, i, row));
    let d2 = Array2::from_shape_vec((n, n), buf).expect("n*n buffer");
    Ok(DistanceMatrix { n, d2 })
}

/// Index triple into a batch or dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub a: usize,
    pub p: usize,
    pub n: usize,
}

impl Triplet {
    pub fn is_valid(&self, labels: &[Label]) -> bool {
        let len = labels.len();
        self.a < len
            && self.p < len
            && self.n < len
            && self.a != self.p
            && labels[self.a] == labels[self.p]
            && labels[self.a] != labels[self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripletCategory {
    Easy,
    SemiHard,
    Hard,
}

pub fn categorize(d2_ap: f64, d2_an: f64, margin: f64) -> TripletCategory {
    if d2_an >= d2_ap + margin {
        TripletCategory::Easy
    } else if d2_an >= d2_ap {
        TripletCategory::SemiHard
    } else {
        TripletCategory::Hard
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MiningStats {
    pub easy_count: u64,
    pub semihard_count: u64,
    pub hard_count: u64,
    pub total: u64,
}

impl MiningStats {
    pub fn record(&mut self, category: TripletCategory) {
        match category {
            TripletCategory::Easy => self.easy_count += 1,
            TripletCategory::SemiHard => self.semihard_count += 1,
            TripletCategory::Hard => self.hard_count += 1,
        }
        self.total += 1;
    }

    pub fn merge(&mut self, other: &MiningStats) {
        self.easy_count += other.easy_count;
        self.semihard_count += other.semihard_count;
        self.hard_count += other.hard_count;
        self.total += other.total;
    }

    /// Fraction of triplets that are semi-hard or hard, 0 when empty.
    pub fn nonzero_loss_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            (self.semihard_count + self.hard_count) as f64 / self.total as f64
        }
    }
}

fn class_members(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        out[l as usize].push(i);
    }
    out
}

/// Number of valid `(a, p, n)` triplets.
pub fn triplet_count(labels: &[Label]) -> u64 {
    let [real, fake] = class_members(labels);
    let (r, f) = (real.len() as u64, fake.len() as u64);
    r * r.saturating_sub(1) * f + f * f.saturating_sub(1) * r
}

fn require_triplets(labels: &[Label]) -> Result<[Vec<usize>; 2]> {
    let members = class_members(labels);
    if members[0].is_empty() || members[1].is_empty() {
        return Err(Error::Mining("both classes must be present".into()));
    }
    if members[0].len() < 2 && members[1].len() < 2 {
        return Err(Error::Mining("no class has two members to form an anchor-positive pair".into()));
    }
    Ok(members)
}

fn sample_triplets<R: Rng>(members: &[Vec<usize>; 2], count: usize, rng: &mut R) -> Vec<Triplet> {
    // Weight classes by their share of valid triplets so that the draw is
    // uniform over all valid triplets.
    let weight = |c: usize| {
        let own = members[c].len() as u64;
        own * own.saturating_sub(1) * members[1 - c].len() as u64
    };
    let (w0, w1) = (weight(0), weight(1));
    (0..count)
        .map(|_| {
            let c = if rng.random_range(0..w0 + w1) < w0 { 0 } else { 1 };
            let own = &members[c];
            let ai = rng.random_range(0..own.len());
            let mut pi = rng.random_range(0..own.len() - 1);
            if pi >= ai {
                pi += 1;
            }
            let other = &members[1 - c];
            Triplet {
                a: own[ai],
                p: own[pi],
                n: other[rng.random_range(0..other.len())],
            }
        })
        .collect()
}

/// `count` triplets drawn uniformly with replacement from all valid triplets.
pub fn mine_random(labels: &[Label], count: usize, seed: u64) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Err(Error::Mining("count must be at least 1".into()));
    }
    let members = require_triplets(labels)?;
    Ok(sample_triplets(&members, count, &mut rng::seeded(seed)))
}

/// Online semi-hard mining over a batch.
///
/// For each ordered same-class pair `(a, p)` the negative is the one closest
/// to `a` among those strictly farther than `p`. When none is farther the
/// farthest negative is used instead. Ties go to the lowest index.
pub fn mine_semihard_batch(f: ArrayView2<f64>, labels: &[Label], margin: f64) -> Result<Vec<Triplet>> {
    if labels.len() != f.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embeddings",
            labels.len(),
            f.nrows()
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::Mining(format!("margin must be > 0, got {margin}")));
    }
    let members = require_triplets(labels)?;
    let dist = pairwise_sq_dist(f)?;
    Ok(select_semihard(&dist, labels, &members))
}

fn select_semihard(dist: &DistanceMatrix, labels: &[Label], members: &[Vec<usize>; 2]) -> Vec<Triplet> {
    let mut out = Vec::new();
    for a in 0..labels.len() {
        let c = labels[a] as usize;
        let negatives = &members[1 - c];
        for &p in &members[c] {
            if p == a {
                continue;
            }
            let d_ap = dist.get(a, p);
            let mut semihard: Option<(f64, usize)> = None;
            let mut farthest: Option<(f64, usize)> = None;
            for &n in negatives {
                let d_an = dist.get(a, n);
                if d_an > d_ap && semihard.is_none_or(|(best, _)| d_an < best) {
                    semihard = Some((d_an, n));
                }
                if farthest.is_none_or(|(best, _)| d_an > best) {
                    farthest = Some((d_an, n));
                }
            }
            let (_, n) = semihard.or(farthest).expect("negatives non-empty");
            out.push(Triplet { a, p, n });
        }
    }
    out
}

/// Squared distances from row `i` to every row, same kernel as
/// [`pairwise_sq_dist`].
fn anchor_distances(x: &ArrayView2<f64>, norms: &[f64], i: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    sq_dist_row(x, norms, i, &mut out);
    out
}

/// Categorizes every valid triplet, or a uniform sample of `sample_cap`
/// triplets when the full population is larger than that.
pub fn mining_stats(
    f: ArrayView2<f64>,
    labels: &[Label],
    margin: f64,
    sample_cap: Option<usize>,
    seed: u64,
) -> Result<MiningStats> {
    mining_stats_with(f, labels, margin, sample_cap, seed, ExecMode::default())
}

pub fn mining_stats_with(
    f: ArrayView2<f64>,
    labels: &[Label],
    margin: f64,
    sample_cap: Option<usize>,
    seed: u64,
    mode: ExecMode,
) -> Result<MiningStats> {
    if labels.len() != f.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embeddings",
            labels.len(),
            f.nrows()
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::Mining(format!("margin must be > 0, got {margin}")));
    }
    let members = class_members(labels);
    if members[0].is_empty() || members[1].is_empty() {
        return Err(Error::Mining("both classes must be present".into()));
    }
    check_finite(&f)?;
    let norms = row_norms(&f);
    let total = triplet_count(labels);

    if let Some(cap) = sample_cap {
        if total > cap as u64 && cap > 0 {
            let sampled = sample_triplets(&members, cap, &mut rng::seeded(seed));
            let mut stats = MiningStats::default();
            for t in sampled {
                let d = anchor_distances(&f, &norms, t.a);
                stats.record(categorize(d[t.p], d[t.n], margin));
            }
            return Ok(stats);
        }
    }

    let per_anchor = par::map_indices(mode, labels.len(), |a| {
        let c = labels[a] as usize;
        let d = anchor_distances(&f, &norms, a);
        let mut neg: Vec<f64> = members[1 - c].iter().map(|&n| d[n]).collect();
        neg.sort_unstable_by(f64::total_cmp);
        let mut stats = MiningStats::default();
        for &p in &members[c] {
            if p == a {
                continue;
            }
            let d_ap = d[p];
            // Same comparisons as `categorize`, counted by binary search.
            let hard = neg.partition_point(|&v| v < d_ap) as u64;
            let below_easy = neg.partition_point(|&v| v < d_ap + margin) as u64;
            stats.hard_count += hard;
            stats.semihard_count += below_easy - hard;
            stats.easy_count += neg.len() as u64 - below_easy;
            stats.total += neg.len() as u64;
        }
        stats
    });
    let mut stats = MiningStats::default();
    for s in &per_anchor {
        stats.merge(s);
    }
    debug_assert_eq!(stats.total, total);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn unit_vectors_distance() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let d = pairwise_sq_dist(x.view()).unwrap();
        assert_eq!(d.d2, array![[0.0, 2.0], [2.0, 0.0]]);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let x = array![[1.0, f64::NAN]];
        assert!(matches!(pairwise_sq_dist(x.view()), Err(Error::Validation(_))));
        let e = Array2::<f64>::zeros((0, 3));
        assert!(pairwise_sq_dist(e.view()).is_err());
    }

    #[test]
    fn categories_from_taxonomy() {
        assert_eq!(categorize(1.0, 1.5, 0.2), TripletCategory::Easy);
        assert_eq!(categorize(1.0, 1.1, 0.2), TripletCategory::SemiHard);
        assert_eq!(categorize(1.0, 0.9, 0.2), TripletCategory::Hard);
        assert_eq!(categorize(1.0, 1.0, 0.2), TripletCategory::SemiHard);
        assert_eq!(categorize(1.0, 1.0 + 0.25, 0.25), TripletCategory::Easy);
        assert_eq!(categorize(0.0, 0.0, 0.2), TripletCategory::SemiHard);
    }

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    #[test]
    fn random_mining() {
        let l = labels(&[0, 0, 1, 1]);
        let t = mine_random(&l, 10, 3).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|t| t.is_valid(&l)));
        assert_eq!(t, mine_random(&l, 10, 3).unwrap());
        assert!(matches!(mine_random(&labels(&[0, 0, 0]), 5, 1), Err(Error::Mining(_))));
        assert!(matches!(mine_random(&labels(&[0, 1]), 5, 1), Err(Error::Mining(_))));
    }

    #[test]
    fn random_mining_covers_all_triplets() {
        // 0,0,1 has exactly two valid triplets; both must appear.
        let l = labels(&[0, 0, 1]);
        let t = mine_random(&l, 200, 9).unwrap();
        let distinct: std::collections::HashSet<_> = t.into_iter().collect();
        assert_eq!(distinct.len(), triplet_count(&l) as usize);
    }

    #[test]
    fn semihard_picks_closest_farther_negative() {
        // 1-D: a=0, p at distance^2 1.0, negatives at 1.4 and 2.0.
        let x = array![[0.0], [1.0], [1.4f64.sqrt()], [2.0f64.sqrt()]];
        let l = labels(&[0, 0, 1, 1]);
        let t = mine_semihard_batch(x.view(), &l, 0.2).unwrap();
        assert_eq!(t[0], Triplet { a: 0, p: 1, n: 2 });
    }

    #[test]
    fn semihard_falls_back_to_farthest() {
        // Both negatives closer to the anchor than the positive.
        let x = array![[0.0], [3.0], [0.5], [-1.0]];
        let l = labels(&[0, 0, 1, 1]);
        let t = mine_semihard_batch(x.view(), &l, 0.2).unwrap();
        assert_eq!(t[0], Triplet { a: 0, p: 1, n: 3 });
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn stats_far_classes_all_easy() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let l = labels(&[0, 0, 1, 1]);
        let s = mining_stats(x.view(), &l, 0.2, None, 0).unwrap();
        assert_eq!(s.total, 8);
        assert_eq!(s.easy_count, 8);
    }

    #[test]
    fn stats_coincident_points_all_semihard() {
        let x = Array2::<f64>::zeros((4, 3));
        let l = labels(&[0, 0, 1, 1]);
        let s = mining_stats(x.view(), &l, 0.2, None, 0).unwrap();
        assert_eq!(s.semihard_count, 8);
        assert_eq!(s.total, 8);
    }

    #[test]
    fn stats_sampling_respects_cap() {
        let x = Array2::from_shape_fn((20, 2), |(i, k)| (i * 3 + k) as f64 * 0.1);
        let l: Vec<Label> = (0..20).map(|i| Label::from_fake(i % 2 == 0)).collect();
        let s = mining_stats(x.view(), &l, 0.2, Some(50), 4).unwrap();
        assert_eq!(s.total, 50);
        let full = mining_stats(x.view(), &l, 0.2, Some(1_000_000), 4).unwrap();
        assert_eq!(full.total, triplet_count(&l));
        assert!(mining_stats(x.view(), &vec![Label::Real; 20], 0.2, None, 0).is_err());
    }
}
