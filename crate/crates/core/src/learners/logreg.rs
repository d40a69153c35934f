use serde::{Deserialize, Serialize};

use super::metrics::log_loss_from_logits;
use super::{batches, LearnError, TrainConfig};
use crate::data::Matrix;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogRegModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> LogRegModel<T> {
    pub fn zeros(features: usize) -> Self {
        Self { weights: vec![T::zero(); features], bias: T::zero() }
    }

    /// Weights followed by the bias.
    pub fn params(&self) -> Vec<T> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn from_params(params: &[T]) -> Self {
        let (b, w) = params.split_last().expect("at least the bias");
        Self { weights: w.to_vec(), bias: *b }
    }

    pub fn features(&self) -> usize {
        self.weights.len()
    }

    pub fn logits(&self, x: &Matrix<T>) -> Result<Vec<T>, LearnError> {
        super::check_width(self.features(), x.cols())?;
        Ok((0..x.rows()).map(|r| dot(&self.weights, x.row(r)) + self.bias).collect())
    }

    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Vec<T>, LearnError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<u8>, LearnError> {
        Ok(super::threshold(&self.predict_proba(x)?))
    }

    /// Mean log loss plus `l2 / 2 · |w|²`.
    pub fn loss(&self, x: &Matrix<T>, y: &[u8], l2: f64) -> Result<T, LearnError> {
        let data = log_loss_from_logits(&self.logits(x)?, y);
        Ok(data + penalty(&self.weights, l2))
    }

    /// Loss and its gradient with respect to [`params`](Self::params) over the
    /// given rows.
    pub fn loss_and_gradient(&self, x: &Matrix<T>, y: &[u8], l2: f64) -> Result<(T, Vec<T>), LearnError> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        super::check_width(self.features(), x.cols())?;
        let grad = self.gradient(x, y, &rows, l2);
        Ok((self.loss(x, y, l2)?, grad))
    }

    fn gradient(&self, x: &Matrix<T>, y: &[u8], rows: &[usize], l2: f64) -> Vec<T> {
        let d = self.features();
        let mut g = vec![T::zero(); d + 1];
        for &r in rows {
            let xr = x.row(r);
            let e = sigmoid(dot(&self.weights, xr) + self.bias) - T::from_u8(y[r]).expect("label");
            for (gj, &xj) in g[..d].iter_mut().zip(xr) {
                *gj = *gj + e * xj;
            }
            g[d] = g[d] + e;
        }
        let n = T::from_usize(rows.len()).expect("count fits");
        let l2 = T::from_f64_lossy(l2);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = *gj / n;
            if j < d {
                *gj = *gj + l2 * self.weights[j];
            }
        }
        g
    }
}

fn penalty<T: Scalar>(w: &[T], l2: f64) -> T {
    if l2 == 0.0 {
        return T::zero();
    }
    T::from_f64_lossy(l2 / 2.0) * w.iter().map(|&v| v * v).sum()
}

/// Gradient descent on mean log loss from zero weights. Full batch unless
/// `cfg.batch_size` is set, in which case batches are reshuffled every epoch.
pub fn train_logreg<T: Scalar>(x: &Matrix<T>, y: &[u8], cfg: &TrainConfig) -> Result<LogRegModel<T>, LearnError> {
    super::check_xy(x, y)?;
    cfg.validate()?;
    let mut model = LogRegModel::zeros(x.cols());
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let mut rng = cfg.rng();
    for _ in 0..cfg.epochs {
        for batch in batches(x.rows(), cfg.batch_size, &mut rng) {
            let g = model.gradient(x, y, &batch, cfg.l2);
            let d = model.features();
            for (w, gj) in model.weights.iter_mut().zip(&g) {
                *w = *w - lr * *gj;
            }
            model.bias = model.bias - lr * g[d];
        }
    }
    Ok(model)
}
