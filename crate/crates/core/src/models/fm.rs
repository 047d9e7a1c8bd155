//! Degree-2 factorization machine for binary targets, trained by SGD on the
//! weighted log-loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{sample_weights, FeatureSet};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmParams {
    /// Latent dimension; 0 reduces the model to its linear part.
    pub factors: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_linear: f64,
    pub l2_factors: f64,
    pub init_std: f64,
    pub class_weight: bool,
}

impl Default for FmParams {
    fn default() -> Self {
        Self {
            factors: 4,
            epochs: 15,
            learning_rate: 0.02,
            l2_linear: 1e-4,
            l2_factors: 1e-4,
            init_std: 0.01,
            class_weight: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fm<T> {
    pub bias: T,
    pub linear: Vec<T>,
    /// `dim × factors`.
    pub factors: Matrix<T>,
}

impl<T: Scalar> Fm<T> {
    pub fn zeros(dim: usize, factors: usize) -> Self {
        Self {
            bias: T::zero(),
            linear: vec![T::zero(); dim],
            factors: Matrix::zeros(dim, factors),
        }
    }

    pub fn n_factors(&self) -> usize {
        self.factors.cols()
    }

    /// Margin over sparse `(feature, value)` pairs; also returns the per-factor
    /// sums `Σ_j v_jf x_j` needed by the gradient.
    fn margin_parts(&self, x: impl Iterator<Item = (usize, T)>) -> (T, Vec<T>) {
        let k = self.n_factors();
        let mut m = self.bias;
        let mut sums = vec![T::zero(); k];
        let mut sq = vec![T::zero(); k];
        for (j, v) in x {
            m += self.linear[j] * v;
            let row = self.factors.row(j);
            for f in 0..k {
                let t = row[f] * v;
                sums[f] += t;
                sq[f] += t * t;
            }
        }
        let half = T::of(0.5);
        for f in 0..k {
            m += half * (sums[f] * sums[f] - sq[f]);
        }
        (m, sums)
    }

    pub fn margin_row(&self, data: &FeatureSet<T>, i: usize) -> T {
        self.margin_parts(data.nonzeros(i)).0
    }

    pub fn margin(&self, x: &[T]) -> T {
        self.margin_parts(x.iter().copied().enumerate().filter(|(_, v)| *v != T::zero())).0
    }

    pub fn predict(&self, x: &[T]) -> T {
        sigmoid(self.margin(x))
    }
}

fn row_loss<T: Scalar>(margin: T, y: u8) -> T {
    if y == 1 {
        softplus(-margin)
    } else {
        softplus(margin)
    }
}

/// Weighted mean log-loss plus L2 on linear weights and factors, with the
/// exact full-batch gradient.
pub fn fm_objective<T: Scalar>(model: &Fm<T>, data: &FeatureSet<T>, sw: &[T], params: &FmParams) -> (T, Fm<T>) {
    let total_w: T = sw.iter().copied().sum();
    let (dim, k) = (model.linear.len(), model.n_factors());
    let mut grad = Fm::zeros(dim, k);
    let mut loss = T::zero();
    for i in 0..data.len() {
        let (m, sums) = model.margin_parts(data.nonzeros(i));
        let y = data.y[i];
        loss += sw[i] * row_loss(m, y);
        let r = sw[i] * (sigmoid(m) - if y == 1 { T::one() } else { T::zero() });
        grad.bias += r;
        for (j, v) in data.nonzeros(i) {
            grad.linear[j] += r * v;
            let vrow = model.factors.row(j).to_vec();
            let grow = grad.factors.row_mut(j);
            for f in 0..k {
                grow[f] += r * v * (sums[f] - vrow[f] * v);
            }
        }
    }
    let (lw, lv) = (T::of(params.l2_linear), T::of(params.l2_factors));
    grad.bias /= total_w;
    let mut reg = T::zero();
    for (g, &w) in grad.linear.iter_mut().zip(&model.linear) {
        *g = *g / total_w + lw * w;
        reg += lw * w * w;
    }
    for j in 0..dim {
        let vrow = model.factors.row(j).to_vec();
        for (g, w) in grad.factors.row_mut(j).iter_mut().zip(vrow) {
            *g = *g / total_w + lv * w;
            reg += lv * w * w;
        }
    }
    (loss / total_w + T::of(0.5) * reg, grad)
}

/// SGD over seed-shuffled rows. Returns the model and the full objective
/// after every epoch, starting with the initial value.
pub fn train_fm<T: Scalar>(data: &FeatureSet<T>, params: &FmParams, seed: u64) -> Result<(Fm<T>, Vec<f64>)> {
    let sw: Vec<T> = sample_weights(&data.y, params.class_weight);
    let mean_w = sw.iter().copied().sum::<T>() / T::of_usize(sw.len().max(1));
    let (dim, k) = (data.dim(), params.factors);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Fm::zeros(dim, k);
    if k > 0 {
        let normal = Normal::new(0.0, params.init_std.max(0.0)).expect("valid init std");
        for x in model.factors.as_mut_slice() {
            *x = T::of(normal.sample(&mut rng));
        }
    }
    let (lw, lv, lr) = (T::of(params.l2_linear), T::of(params.l2_factors), T::of(params.learning_rate));
    let mut curve = vec![fm_objective(&model, data, &sw, params).0.as_f64()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (m, sums) = model.margin_parts(data.nonzeros(i));
            let target = if data.y[i] == 1 { T::one() } else { T::zero() };
            let r = sw[i] / mean_w * (sigmoid(m) - target);
            model.bias -= lr * r;
            for (j, v) in data.nonzeros(i) {
                let wj = model.linear[j];
                model.linear[j] -= lr * (r * v + lw * wj);
                let row = model.factors.row_mut(j);
                for f in 0..k {
                    let g = r * v * (sums[f] - row[f] * v) + lv * row[f];
                    row[f] -= lr * g;
                }
            }
        }
        curve.push(fm_objective(&model, data, &sw, params).0.as_f64());
    }
    Ok((model, curve))
}
