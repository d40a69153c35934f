use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::log_loss_from_logits;
use super::{batches, LearnError, TrainConfig};
use crate::data::Matrix;
use crate::scalar::{sigmoid, Scalar};

pub const DEFAULT_HIDDEN_WIDTH: usize = 64;

/// One rectifier hidden layer and a logistic output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NnModel<T> {
    /// hidden × features
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

/// Per-row activations kept for the backward pass.
struct Forward<T> {
    pre: Vec<T>,
    hidden: Vec<T>,
    logit: T,
}

impl<T: Scalar> NnModel<T> {
    /// He-style random init for the hidden layer, scaled normal for the output,
    /// zero biases.
    pub fn init(features: usize, hidden: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (2.0 / features.max(1) as f64).sqrt()).expect("valid sd");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid sd");
        let w1 = (0..hidden * features).map(|_| T::from_f64_lossy(n1.sample(&mut rng))).collect();
        let w2 = (0..hidden).map(|_| T::from_f64_lossy(n2.sample(&mut rng))).collect();
        Self { w1: Matrix::from_vec(hidden, features, w1), b1: vec![T::zero(); hidden], w2, b2: T::zero() }
    }

    pub fn features(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// `w1` row-major, then `b1`, `w2`, `b2`.
    pub fn params(&self) -> Vec<T> {
        let mut p = self.w1.as_slice().to_vec();
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[T]) {
        let (h, d) = (self.hidden(), self.features());
        assert_eq!(p.len(), h * d + 2 * h + 1, "parameter count");
        self.w1.as_mut_slice().copy_from_slice(&p[..h * d]);
        self.b1.copy_from_slice(&p[h * d..h * d + h]);
        self.w2.copy_from_slice(&p[h * d + h..h * d + 2 * h]);
        self.b2 = p[h * d + 2 * h];
    }

    fn forward(&self, x: &[T]) -> Forward<T> {
        let mut pre = self.b1.clone();
        for (j, a) in pre.iter_mut().enumerate() {
            *a = *a + self.w1.row(j).iter().zip(x).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
        }
        let hidden: Vec<T> = pre.iter().map(|&a| a.max(T::zero())).collect();
        let logit = hidden.iter().zip(&self.w2).fold(self.b2, |acc, (&h, &w)| acc + h * w);
        Forward { pre, hidden, logit }
    }

    pub fn logits(&self, x: &Matrix<T>) -> Result<Vec<T>, LearnError> {
        super::check_width(self.features(), x.cols())?;
        Ok((0..x.rows()).map(|r| self.forward(x.row(r)).logit).collect())
    }

    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Vec<T>, LearnError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<u8>, LearnError> {
        Ok(super::threshold(&self.predict_proba(x)?))
    }

    /// Mean log loss plus `l2 / 2` times the squared weights (biases excluded).
    pub fn loss(&self, x: &Matrix<T>, y: &[u8], l2: f64) -> Result<T, LearnError> {
        let data = log_loss_from_logits(&self.logits(x)?, y);
        if l2 == 0.0 {
            return Ok(data);
        }
        let sq: T = self.w1.as_slice().iter().chain(&self.w2).map(|&w| w * w).sum();
        Ok(data + T::from_f64_lossy(l2 / 2.0) * sq)
    }

    pub fn loss_and_gradient(&self, x: &Matrix<T>, y: &[u8], l2: f64) -> Result<(T, Vec<T>), LearnError> {
        super::check_width(self.features(), x.cols())?;
        let rows: Vec<usize> = (0..x.rows()).collect();
        Ok((self.loss(x, y, l2)?, self.gradient(x, y, &rows, l2)))
    }

    fn gradient(&self, x: &Matrix<T>, y: &[u8], rows: &[usize], l2: f64) -> Vec<T> {
        let (h, d) = (self.hidden(), self.features());
        let mut g = vec![T::zero(); h * d + 2 * h + 1];
        let (gw1, rest) = g.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        for &r in rows {
            let xr = x.row(r);
            let f = self.forward(xr);
            let e = sigmoid(f.logit) - T::from_u8(y[r]).expect("label");
            gb2[0] = gb2[0] + e;
            for j in 0..h {
                gw2[j] = gw2[j] + e * f.hidden[j];
                if f.pre[j] > T::zero() {
                    let delta = e * self.w2[j];
                    gb1[j] = gb1[j] + delta;
                    for (gw, &xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(xr) {
                        *gw = *gw + delta * xv;
                    }
                }
            }
        }
        let n = T::from_usize(rows.len()).expect("count fits");
        for v in g.iter_mut() {
            *v = *v / n;
        }
        if l2 != 0.0 {
            let l2 = T::from_f64_lossy(l2);
            for (gv, &w) in g[..h * d].iter_mut().zip(self.w1.as_slice()) {
                *gv = *gv + l2 * w;
            }
            for (gv, &w) in g[h * d + h..h * d + 2 * h].iter_mut().zip(&self.w2) {
                *gv = *gv + l2 * w;
            }
        }
        g
    }
}

/// Mini-batch gradient descent with backpropagation. Deterministic for a
/// given seed.
pub fn train_nn<T: Scalar>(
    x: &Matrix<T>,
    y: &[u8],
    cfg: &TrainConfig,
    hidden_width: usize,
) -> Result<NnModel<T>, LearnError> {
    super::check_xy(x, y)?;
    cfg.validate()?;
    if hidden_width == 0 {
        return Err(LearnError::InvalidConfig("hidden width must be at least 1".into()));
    }
    let mut model = NnModel::init(x.cols(), hidden_width, cfg.seed);
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let mut rng = cfg.rng();
    let mut params = model.params();
    for _ in 0..cfg.epochs {
        for batch in batches(x.rows(), cfg.batch_size, &mut rng) {
            let g = model.gradient(x, y, &batch, cfg.l2);
            for (p, gv) in params.iter_mut().zip(&g) {
                *p = *p - lr * *gv;
            }
            model.set_params(&params);
        }
    }
    Ok(model)
}
