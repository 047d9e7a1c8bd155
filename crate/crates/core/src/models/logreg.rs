//! L2-regularized logistic regression trained by full-batch L-BFGS with
//! Armijo backtracking.

use serde::{Deserialize, Serialize};

use super::features::{sample_weights, FeatureSet};
use crate::error::Result;
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub l2: f64,
    pub max_iter: usize,
    /// Relative loss decrease below which training stops. Training also
    /// stops once the largest gradient entry falls under `1e-12`.
    pub tol: f64,
    pub class_weight: bool,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 300,
            tol: 1e-8,
            class_weight: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LogReg<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
        }
    }

    pub fn margin_row(&self, data: &FeatureSet<T>, i: usize) -> T {
        data.nonzeros(i).fold(self.bias, |acc, (j, v)| acc + self.weights[j] * v)
    }

    pub fn margin(&self, x: &[T]) -> T {
        x.iter().zip(&self.weights).fold(self.bias, |acc, (&v, &w)| acc + v * w)
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

/// Weighted mean log-loss plus `l2/2 · ‖w‖²` (bias unpenalized).
pub fn logreg_loss<T: Scalar>(model: &LogReg<T>, data: &FeatureSet<T>, sw: &[T], l2: T) -> T {
    let total_w: T = sw.iter().copied().sum();
    let mut loss = T::zero();
    for i in 0..data.len() {
        loss += sw[i] * row_loss(model.margin_row(data, i), data.y[i]);
    }
    let reg: T = model.weights.iter().map(|&w| w * w).sum();
    loss / total_w + T::of(0.5) * l2 * reg
}

/// Loss and its exact gradient with respect to weights and bias.
pub fn logreg_objective<T: Scalar>(model: &LogReg<T>, data: &FeatureSet<T>, sw: &[T], l2: T) -> (T, LogReg<T>) {
    let total_w: T = sw.iter().copied().sum();
    let mut grad = LogReg::zeros(model.weights.len());
    let mut loss = T::zero();
    for i in 0..data.len() {
        let m = model.margin_row(data, i);
        let y = data.y[i];
        loss += sw[i] * row_loss(m, y);
        let r = sw[i] * (sigmoid(m) - if y == 1 { T::one() } else { T::zero() });
        grad.bias += r;
        for (j, v) in data.nonzeros(i) {
            grad.weights[j] += r * v;
        }
    }
    grad.bias /= total_w;
    let mut reg = T::zero();
    for (g, &w) in grad.weights.iter_mut().zip(&model.weights) {
        *g = *g / total_w + l2 * w;
        reg += w * w;
    }
    (loss / total_w + T::of(0.5) * l2 * reg, grad)
}

const HISTORY: usize = 10;

fn flatten<T: Scalar>(m: &LogReg<T>) -> Vec<T> {
    let mut v = m.weights.clone();
    v.push(m.bias);
    v
}

fn unflatten<T: Scalar>(mut v: Vec<T>) -> LogReg<T> {
    let bias = v.pop().unwrap_or_else(T::zero);
    LogReg { weights: v, bias }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_abs<T: Scalar>(v: &[T]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.as_f64().abs()))
}

/// Two-loop recursion. Falls back to the diagonal curvature bound when the
/// history is empty.
fn lbfgs_direction<T: Scalar>(g: &[T], history: &[(Vec<T>, Vec<T>, T)], diag: &[T]) -> Vec<T> {
    let mut q: Vec<T> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    match history.last() {
        Some((s, y, _)) => {
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        None => {
            for (qi, &d) in q.iter_mut().zip(diag) {
                *qi /= d;
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|&x| -x).collect()
}

/// Trains from zero weights. Returns the model and the loss after every
/// accepted step, starting with the initial loss.
pub fn train_logreg<T: Scalar>(data: &FeatureSet<T>, params: &LogRegParams) -> Result<(LogReg<T>, Vec<f64>)> {
    let sw: Vec<T> = sample_weights(&data.y, params.class_weight);
    let l2 = T::of(params.l2);
    let total_w: T = sw.iter().copied().sum();
    let dim = data.dim();

    // Curvature bound of the log-loss per coordinate, bias last.
    let quarter = T::of(0.25);
    let mut diag = vec![T::zero(); dim];
    for i in 0..data.len() {
        for (j, v) in data.nonzeros(i) {
            diag[j] += sw[i] * v * v;
        }
    }
    for d in diag.iter_mut() {
        *d = *d * quarter / total_w + l2;
        if *d <= T::zero() {
            *d = T::one();
        }
    }
    diag.push(quarter);

    let mut x = vec![T::zero(); dim + 1];
    let (f0, g0) = logreg_objective(&unflatten(x.clone()), data, &sw, l2);
    let (mut f, mut g) = (f0, flatten(&g0));
    let mut curve = vec![f.as_f64()];
    let mut history: Vec<(Vec<T>, Vec<T>, T)> = Vec::new();
    for _ in 0..params.max_iter {
        if max_abs(&g) < 1e-12 {
            break;
        }
        let mut dir = lbfgs_direction(&g, &history, &diag);
        let mut decrease = -dot(&g, &dir);
        if !(decrease > T::zero()) {
            history.clear();
            dir = lbfgs_direction(&g, &history, &diag);
            decrease = -dot(&g, &dir);
            if !(decrease > T::zero()) {
                break;
            }
        }
        let step = |alpha: T| -> Vec<T> { x.iter().zip(&dir).map(|(&xi, &di)| xi + alpha * di).collect() };
        let mut alpha = T::one();
        let mut flat = false;
        let mut accepted = None;
        while alpha >= T::of(1e-12) {
            let cand = step(alpha);
            let fc = logreg_loss(&unflatten(cand.clone()), data, &sw, l2);
            if fc < f && fc <= f - T::of(1e-4) * alpha * decrease {
                accepted = Some((cand, fc));
                break;
            }
            if alpha == T::one() && (fc - f).abs() <= T::of(1e-14) * f.abs().max(T::one()) {
                flat = true;
                break;
            }
            alpha *= T::of(0.5);
        }
        // the loss cannot resolve the remaining decrease; judge by the gradient
        if flat {
            let g_max = max_abs(&g);
            let mut alpha = T::one();
            for _ in 0..30 {
                let cand = step(alpha);
                let (fc, gc) = logreg_objective(&unflatten(cand.clone()), data, &sw, l2);
                if max_abs(&flatten(&gc)) < g_max {
                    accepted = Some((cand, fc));
                    break;
                }
                alpha *= T::of(0.5);
            }
        }
        let Some((next, fc)) = accepted else { break };
        let rel = (f - fc) / f.abs().max(T::one());
        let (f_next, g_next) = logreg_objective(&unflatten(next.clone()), data, &sw, l2);
        let g_next = flatten(&g_next);
        let s: Vec<T> = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_next.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::zero() {
            if history.len() == HISTORY {
                history.remove(0);
            }
            history.push((s, y, T::one() / sy));
        }
        let prev = f;
        (x, f, g) = (next, f_next, g_next);
        curve.push(fc.min(prev).as_f64());
        if !flat && rel.as_f64() <= params.tol {
            break;
        }
    }
    Ok((unflatten(x), curve))
}
