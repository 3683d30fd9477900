//! Logistic regression trained by mini-batch SGD.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub w: Array1<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            batch_size: 32,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("sgd learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("sgd batch size must be positive".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn target(l: Label) -> f64 {
    if l.is_fake() {
        1.0
    } else {
        0.0
    }
}

impl LinearClassifier {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: Array1::zeros(dim),
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        self.w.dot(&x) + self.b
    }

    /// Mean logistic loss over `rows` and its gradient `(grad_w, grad_b)`.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: &[Label], rows: &[usize]) -> (f64, Array1<f64>, f64) {
        let mut gw = Array1::zeros(self.dim());
        let mut gb = 0.0;
        let mut loss = 0.0;
        let scale = 1.0 / rows.len() as f64;
        for &i in rows {
            let xi = x.row(i);
            let z = self.logit(xi);
            let t = target(y[i]);
            loss += softplus(z) - t * z;
            let r = sigmoid(z) - t;
            gw.scaled_add(r * scale, &xi);
            gb += r * scale;
        }
        (loss * scale, gw, gb)
    }
}

fn check_xy(x: &ArrayView2<f64>, y: &[Label]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if !y.iter().any(|l| l.is_fake()) || !y.iter().any(|l| !l.is_fake()) {
        return Err(Error::Training("training data must contain both classes".into()));
    }
    Ok(())
}

/// Starts from `w = 0, b = 0`. Each epoch visits a seeded permutation of the
/// rows in batches of `batch_size` (the last batch may be short).
pub fn fit_linear(x: ArrayView2<f64>, y: &[Label], params: &LinearParams, seed: u64) -> Result<LinearClassifier> {
    params.validate()?;
    check_xy(&x, y)?;
    let mut model = LinearClassifier::zeros(x.ncols());
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut rng = rng::seeded(seed);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let (_, gw, gb) = model.loss_and_grad(x, y, batch);
            model.w.scaled_add(-params.learning_rate, &gw);
            model.b -= params.learning_rate * gb;
        }
    }
    if !model.b.is_finite() || model.w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("logistic regression diverged".into()));
    }
    Ok(model)
}

pub fn predict_linear(model: &LinearClassifier, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.dim() {
        return Err(Error::Shape(format!("input has {} columns, model expects {}", x.ncols(), model.dim())));
    }
    Ok(x.rows().into_iter().map(|r| sigmoid(model.logit(r))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn separable_1d() -> (Array2<f64>, Vec<Label>) {
        let mut r = rng::seeded(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let fake = i % 2 == 1;
            let c = if fake { 1.0 } else { -1.0 };
            xs.push(c + r.random_range(-0.1..0.1));
            ys.push(Label::from_fake(fake));
        }
        (Array2::from_shape_vec((40, 1), xs).unwrap(), ys)
    }

    #[test]
    fn separates_1d_data() {
        let (x, y) = separable_1d();
        let params = LinearParams { epochs: 50, ..LinearParams::default() };
        let m = fit_linear(x.view(), &y, &params, 1).unwrap();
        let p = predict_linear(&m, x.view()).unwrap();
        let correct = p.iter().zip(&y).filter(|(p, l)| (**p >= 0.5) == l.is_fake()).count();
        assert_eq!(correct, 40);
    }

    #[test]
    fn zero_epochs_predicts_half() {
        let (x, y) = separable_1d();
        let m = fit_linear(x.view(), &y, &LinearParams { epochs: 0, ..LinearParams::default() }, 1).unwrap();
        assert_eq!(m, LinearClassifier::zeros(1));
        assert!(predict_linear(&m, x.view()).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn saturation_and_monotonicity() {
        let m = LinearClassifier { w: array![1.0, 0.0], b: 100.0 };
        assert!(predict_linear(&m, array![[0.0, 0.0]].view()).unwrap()[0] > 0.999);
        let m = LinearClassifier { w: array![0.5, -1.0], b: 0.0 };
        let p = predict_linear(&m, array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]].view()).unwrap();
        assert!(p[0] < p[1] && p[1] < p[2]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(5);
        let x = Array2::from_shape_simple_fn((12, 3), || r.random_range(-2.0..2.0));
        let y: Vec<Label> = (0..12).map(|i| Label::from_fake(i % 3 == 0)).collect();
        let m = LinearClassifier { w: array![0.3, -0.7, 1.1], b: 0.2 };
        let rows: Vec<usize> = (0..12).collect();
        let (_, gw, gb) = m.loss_and_grad(x.view(), &y, &rows);
        let eps = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs() + 1e-12);
        for k in 0..3 {
            let mut plus = m.clone();
            plus.w[k] += eps;
            let mut minus = m.clone();
            minus.w[k] -= eps;
            let num = (plus.loss_and_grad(x.view(), &y, &rows).0 - minus.loss_and_grad(x.view(), &y, &rows).0) / (2.0 * eps);
            assert!(rel(gw[k], num) < 1e-5, "w[{k}]: {} vs {num}", gw[k]);
        }
        let mut plus = m.clone();
        plus.b += eps;
        let mut minus = m.clone();
        minus.b -= eps;
        let num = (plus.loss_and_grad(x.view(), &y, &rows).0 - minus.loss_and_grad(x.view(), &y, &rows).0) / (2.0 * eps);
        assert!(rel(gb, num) < 1e-5);
    }

    #[test]
    fn errors() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            fit_linear(x.view(), &[Label::Real, Label::Real], &LinearParams::default(), 0),
            Err(Error::Training(_))
        ));
        let m = LinearClassifier::zeros(2);
        assert!(matches!(predict_linear(&m, x.view()), Err(Error::Shape(_))));
    }
}
