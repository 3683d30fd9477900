//! Binary classification metrics with fake as the positive class.
//!
//! FAR is the share of real samples scored at or above a threshold and FRR
//! the share of fake samples scored below it.

use std::fmt::Write as _;

use crate::dataset::Label;
use crate::error::{Error, Result};

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|l| l.is_fake()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("both classes are required".into()));
    }
    Ok((pos, neg))
}

/// `(score, label)` pairs in ascending score order, grouped into runs of
/// equal score with per-run `(score, negatives, positives)` counts.
fn tie_groups(scores: &[f64], labels: &[Label]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let s = scores[i];
        let fake = u64::from(labels[i].is_fake());
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += 1 - fake;
                g.2 += fake;
            }
            _ => groups.push((s, 1 - fake, fake)),
        }
    }
    groups
}

/// Mann-Whitney AUC: `(wins + 0.5 ties) / (pos * neg)`, computed in
/// `O(n log n)` with exact integer pair counts.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut neg_below: u64 = 0;
    let mut twice_credit: u64 = 0;
    for (_, n, p) in tie_groups(scores, labels) {
        twice_credit += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    Ok(twice_credit as f64 / (2 * pos as u64 * neg as u64) as f64)
}

/// Equal error rate.
///
/// Thresholds are placed below the lowest score, at every midpoint between
/// consecutive distinct scores, and above the highest score. `FAR - FRR`
/// falls from 1 to -1 across them; the result is the common value at the
/// first threshold where it reaches zero, linearly interpolated between the
/// two bracketing thresholds when it jumps past zero.
pub fn eer(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let groups = tie_groups(scores, labels);
    let (p, n) = (pos as f64, neg as f64);
    // At threshold j (below group j), negatives >= t are those in groups j..,
    // positives < t are those in groups ..j.
    let mut neg_at_or_above = neg as u64;
    let mut pos_below = 0u64;
    let mut prev = (1.0, 0.0);
    for j in 0..=groups.len() {
        if j > 0 {
            neg_at_or_above -= groups[j - 1].1;
            pos_below += groups[j - 1].2;
        }
        let far = neg_at_or_above as f64 / n;
        let frr = pos_below as f64 / p;
        let diff = far - frr;
        if diff == 0.0 {
            return Ok(far);
        }
        if diff < 0.0 {
            let (pfar, pfrr) = prev;
            let pdiff = pfar - pfrr;
            let lambda = pdiff / (pdiff - diff);
            return Ok(pfar + lambda * (far - pfar));
        }
        prev = (far, frr);
    }
    unreachable!("FAR - FRR ends at -1")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_labels(pred: &[Label], truth: &[Label]) -> Result<Confusion> {
        if pred.len() != truth.len() {
            return Err(Error::Metric(format!("{} predictions but {} labels", pred.len(), truth.len())));
        }
        if pred.is_empty() {
            return Err(Error::Metric("no predictions".into()));
        }
        let mut c = Confusion::default();
        for (p, t) in pred.iter().zip(truth) {
            match (p.is_fake(), t.is_fake()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// Recall of the real class.
    pub fn specificity(&self) -> f64 {
        Self::ratio(self.tn, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.total())
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// `(precision, recall, f1)` for the fake class.
pub fn prf1(pred: &[Label], truth: &[Label]) -> Result<(f64, f64, f64)> {
    let c = Confusion::from_labels(pred, truth)?;
    let (p, r) = (c.precision(), c.recall());
    Ok((p, r, f1_score(p, r)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// From `(0, 0)` at threshold `+inf` down to `(1, 1)` at the lowest score.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// One point per distinct score, predicting fake for `score >= threshold`.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(s, n, p) in tie_groups(scores, labels).iter().rev() {
        tp += p;
        fp += n;
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub eer: f64,
    pub confusion: Confusion,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "accuracy", "precision", "recall", "f1", "auc", "eer", "tp", "fp", "tn", "fn",
];

impl MetricsReport {
    pub fn csv_header() -> String {
        REPORT_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let c = &self.confusion;
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.accuracy, self.precision, self.recall, self.f1, self.auc, self.eer, c.tp, c.fp, c.tn, c.fn_
        )
    }

    /// Aligned table, one row per `(name, report)`.
    pub fn table(rows: &[(String, MetricsReport)]) -> String {
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        let mut s = format!("{:<width$}", "model");
        for col in REPORT_COLUMNS {
            let _ = write!(s, " {col:>9}");
        }
        s.push('\n');
        for (name, r) in rows {
            let c = &r.confusion;
            let _ = write!(s, "{name:<width$}");
            for v in [r.accuracy, r.precision, r.recall, r.f1, r.auc, r.eer] {
                let _ = write!(s, " {v:>9.4}");
            }
            for v in [c.tp, c.fp, c.tn, c.fn_] {
                let _ = write!(s, " {v:>9}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn full_report(scores: &[f64], pred: &[Label], truth: &[Label]) -> Result<MetricsReport> {
    if scores.len() != pred.len() {
        return Err(Error::Metric(format!("{} scores but {} predictions", scores.len(), pred.len())));
    }
    let confusion = Confusion::from_labels(pred, truth)?;
    let (precision, recall) = (confusion.precision(), confusion.recall());
    Ok(MetricsReport {
        accuracy: confusion.accuracy(),
        precision,
        recall,
        f1: f1_score(precision, recall),
        auc: roc_auc(scores, truth)?,
        eer: eer(scores, truth)?,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    #[test]
    fn auc_examples() {
        let l = labels(&[0, 0, 1, 1]);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &labels(&[1, 1])), Err(Error::Metric(_))));
    }

    #[test]
    fn eer_examples() {
        let l = labels(&[0, 0, 1, 1]);
        assert_eq!(eer(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 0.0);
        assert_eq!(eer(&[0.3, 0.4, 0.1, 0.2], &l).unwrap(), 1.0);
        let l6 = labels(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(eer(&[0.1, 0.3, 0.2, 0.4, 0.35, 0.9], &l6).unwrap(), 0.0);
        // One overlapping pair: negative at 0.6 above positive at 0.5.
        let v = eer(&[0.1, 0.6, 0.5, 0.9], &l).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn prf1_examples() {
        let t = labels(&[1, 0, 1, 0]);
        assert_eq!(prf1(&t, &t).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(prf1(&labels(&[0, 0, 0, 0]), &t).unwrap(), (0.0, 0.0, 0.0));
        let c = Confusion { tp: 9, fp: 1, tn: 0, fn_: 2 };
        let (p, r) = (c.precision(), c.recall());
        assert!((p - 0.9).abs() < 1e-15);
        assert!((r - 9.0 / 11.0).abs() < 1e-15);
        assert!((f1_score(p, r) - 2.0 * 0.9 * (9.0 / 11.0) / (0.9 + 9.0 / 11.0)).abs() < 1e-15);
        assert!(prf1(&t[..3], &t).is_err());
    }

    #[test]
    fn perfect_report() {
        let t = labels(&[0, 1, 0, 1]);
        let r = full_report(&[0.1, 0.9, 0.2, 0.8], &t, &t).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1, r.auc, r.eer), (1.0, 1.0, 1.0, 1.0, 1.0, 0.0));
        assert_eq!(r.confusion.total(), 4);
    }

    #[test]
    fn roc_endpoints() {
        let t = labels(&[0, 1, 0, 1, 1]);
        let c = roc_curve(&[0.3, 0.3, 0.1, 0.8, 0.05], &t).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn csv_column_order() {
        assert_eq!(MetricsReport::csv_header(), "accuracy,precision,recall,f1,auc,eer,tp,fp,tn,fn");
    }
}
