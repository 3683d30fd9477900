use ndarray::{Array1, ArrayView2};

use crate::dataset::Label;
use crate::error::{Error, Result};

use super::linear::sigmoid;

/// Per-class mean embeddings. Score is `d2(x, real) - d2(x, fake)`, so
/// higher means more fake.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    pub centroid_real: Array1<f64>,
    pub centroid_fake: Array1<f64>,
}

pub fn fit_centroid(x: ArrayView2<f64>, y: &[Label]) -> Result<NearestCentroid> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let mut sums = [Array1::<f64>::zeros(x.ncols()), Array1::zeros(x.ncols())];
    let mut counts = [0usize; 2];
    for (row, &l) in x.rows().into_iter().zip(y) {
        sums[l as usize] += &row;
        counts[l as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Training("centroid model needs both classes".into()));
    }
    let [real, fake] = sums;
    Ok(NearestCentroid {
        centroid_real: real / counts[0] as f64,
        centroid_fake: fake / counts[1] as f64,
    })
}

impl NearestCentroid {
    pub fn dim(&self) -> usize {
        self.centroid_real.len()
    }
}

fn d2(a: ndarray::ArrayView1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Raw scores `d2(x, real) - d2(x, fake)`.
pub fn predict_centroid(model: &NearestCentroid, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.dim() {
        return Err(Error::Shape(format!("input has {} columns, model expects {}", x.ncols(), model.dim())));
    }
    Ok(x.rows()
        .into_iter()
        .map(|r| d2(r, &model.centroid_real) - d2(r, &model.centroid_fake))
        .collect())
}

/// `sigmoid(score)`, for reporting alongside the other models.
pub fn predict_centroid_proba(model: &NearestCentroid, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(predict_centroid(model, x)?.into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn centroids_and_scores() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [4.0, 4.0], [6.0, 4.0]];
        let y = [Label::Real, Label::Real, Label::Fake, Label::Fake];
        let m = fit_centroid(x.view(), &y).unwrap();
        assert!((m.centroid_real[0] - 1.0).abs() < 1e-6 && m.centroid_real[1].abs() < 1e-6);
        assert!((m.centroid_fake[0] - 5.0).abs() < 1e-6 && (m.centroid_fake[1] - 4.0).abs() < 1e-6);

        let probe = array![[3.0, 2.0], [5.0, 4.0]];
        let s = predict_centroid(&m, probe.view()).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 32.0);
        assert!(fit_centroid(x.view(), &[Label::Real; 4]).is_err());
    }
}
