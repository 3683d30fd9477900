//! Two-dimensional PCA projections for scatter plots.
//!
//! The top two covariance eigenvectors are found by power iteration with
//! deflation. Each component's sign is fixed so that its largest-magnitude
//! coordinate is positive, which keeps exported files reproducible.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::fsio;

pub const POWER_TOLERANCE: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// `n x 2`.
    pub points: Array2<f64>,
    pub labels: Vec<Label>,
    /// `(lambda1 + lambda2) / trace(covariance)`.
    pub explained_fraction: f64,
    pub eigenvalues: [f64; 2],
    /// Unit-norm principal directions in input space.
    pub components: [Array1<f64>; 2],
    pub mean: Array1<f64>,
}

/// Dominant eigenpair of a symmetric PSD matrix. `None` if it is zero.
fn power_iteration(c: &Array2<f64>) -> Option<(f64, Array1<f64>)> {
    let d = c.nrows();
    // Start from the column with the largest norm; it is non-zero whenever
    // the matrix is.
    let (best, norm) = (0..d)
        .map(|j| (j, c.column(j).dot(&c.column(j))))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if norm <= 0.0 {
        return None;
    }
    let mut v = c.column(best).to_owned();
    v /= v.dot(&v).sqrt();
    for _ in 0..POWER_MAX_ITER {
        let mut next = c.dot(&v);
        let len = next.dot(&next).sqrt();
        if len == 0.0 {
            return None;
        }
        next /= len;
        let delta = (&next - &v).dot(&(&next - &v)).sqrt();
        v = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    let lambda = v.dot(&c.dot(&v));
    Some((lambda, v))
}

fn fix_sign(v: &mut Array1<f64>) {
    let idx = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
        .0;
    if v[idx] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Any unit vector orthogonal to `v`, from Gram-Schmidt on the axis least
/// aligned with it.
fn orthogonal_to(v: &Array1<f64>) -> Array1<f64> {
    let axis = v
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x.abs() < acc.1 { (i, x.abs()) } else { acc })
        .0;
    let mut e = Array1::zeros(v.len());
    e[axis] = 1.0;
    let proj = e.dot(v);
    e.scaled_add(-proj, v);
    let n = e.dot(&e).sqrt();
    e / n
}

pub fn pca2(x: ArrayView2<f64>, labels: &[Label]) -> Result<Projection2D> {
    let (n, d) = x.dim();
    if n < 3 || d < 2 {
        return Err(Error::Shape(format!("PCA needs at least 3 rows and 2 columns, got {n}x{d}")));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("PCA input is not finite".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 3");
    let centered = &x - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let trace: f64 = cov.diag().sum();
    if trace <= 0.0 {
        return Err(Error::Degenerate("all points are identical".into()));
    }

    let (l1, mut v1) = power_iteration(&cov).ok_or_else(|| Error::Degenerate("zero covariance".into()))?;
    fix_sign(&mut v1);
    for i in 0..d {
        for j in 0..d {
            cov[[i, j]] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, mut v2) = match power_iteration(&cov) {
        Some((l, v)) if l > 0.0 => (l, v),
        _ => (0.0, orthogonal_to(&v1)),
    };
    // Re-orthogonalize against v1 to remove drift from deflation round-off.
    let drift = v2.dot(&v1);
    v2.scaled_add(-drift, &v1);
    v2 /= v2.dot(&v2).sqrt();
    fix_sign(&mut v2);

    let mut points = Array2::zeros((n, 2));
    for (mut out, row) in points.rows_mut().into_iter().zip(centered.rows()) {
        out[0] = row.dot(&v1);
        out[1] = row.dot(&v2);
    }
    Ok(Projection2D {
        points,
        labels: labels.to_vec(),
        explained_fraction: ((l1 + l2) / trace).clamp(0.0, 1.0),
        eigenvalues: [l1, l2],
        components: [v1, v2],
        mean,
    })
}

/// CSV `x,y,label` with 9 significant digits.
pub fn write_scatter<W: Write>(proj: &Projection2D, mut sink: W) -> Result<()> {
    writeln!(sink, "x,y,label")?;
    for (row, l) in proj.points.rows().into_iter().zip(&proj.labels) {
        writeln!(sink, "{:.8e},{:.8e},{}", row[0], row[1], l.as_u8())?;
    }
    Ok(())
}

pub fn export_scatter(proj: &Projection2D, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_scatter(proj, &mut buf)?;
    fsio::write_atomic(path, &buf)
}

/// Parses a scatter CSV back into `(x, y, label)` rows.
pub fn read_scatter(text: &str) -> Result<Vec<(f64, f64, Label)>> {
    let mut lines = text.lines();
    if lines.next() != Some("x,y,label") {
        return Err(Error::Format("scatter CSV must start with x,y,label".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("scatter line {}: {line:?}", i + 2));
            let mut it = line.split(',');
            let x: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let y: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let l: u8 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok((x, y, Label::from_u8(l).ok_or_else(bad)?))
        })
        .collect()
}
