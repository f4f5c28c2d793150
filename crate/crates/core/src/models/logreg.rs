//! L2-regularized logistic regression fitted with BFGS.

use serde::{Deserialize, Serialize};

use super::forest::ClassWeight;
use super::{check_labels, FeatureMatrix, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// Inverse regularization strength; the penalty is `‖w‖² / (2C)`.
    pub c: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub tolerance: f64,
    pub class_weight: ClassWeight,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iterations: 1000,
            tolerance: 1e-6,
            class_weight: ClassWeight::None,
        }
    }
}

/// Column-wise z-score transform fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; constant columns use 1.
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut means = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut scales = vec![0.0; d];
        for r in x.iter_rows() {
            for ((s, v), m) in scales.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in scales.iter_mut() {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) || !s.is_finite() {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn transform_row(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.means).zip(&self.scales) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let d = x.cols();
        let mut data = vec![0.0; x.rows() * d];
        for (i, r) in x.iter_rows().enumerate() {
            self.transform_row(r, &mut data[i * d..(i + 1) * d]);
        }
        FeatureMatrix::new(x.rows(), d, data).expect("same shape")
    }
}

#[inline]
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Penalized negative log-likelihood over standardized features.
///
/// Parameters are laid out as `[w_0, …, w_{d-1}, intercept]`.
pub struct LogisticObjective<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    c: f64,
    weight: [f64; 2],
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a [bool], c: f64) -> Self {
        Self {
            x,
            y,
            c,
            weight: [1.0, 1.0],
        }
    }

    pub fn with_class_weight(mut self, mode: ClassWeight) -> Self {
        if mode == ClassWeight::Balanced {
            let n = self.y.len() as f64;
            let pos = self.y.iter().filter(|&&v| v).count() as f64;
            self.weight = [n / (2.0 * (n - pos)), n / (2.0 * pos)];
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.x.cols() + 1
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let d = self.x.cols();
        let (w, b) = (&theta[..d], theta[d]);
        let mut nll = 0.0;
        for (r, &yi) in self.x.iter_rows().zip(self.y) {
            let s = dot(w, r) + b;
            let yv = if yi { 1.0 } else { 0.0 };
            nll += self.weight[yi as usize] * (softplus(s) - yv * s);
        }
        nll + dot(w, w) / (2.0 * self.c)
    }

    /// Returns the loss and writes the gradient into `grad`.
    pub fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.x.cols();
        let (w, b) = (&theta[..d], theta[d]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut nll = 0.0;
        for (r, &yi) in self.x.iter_rows().zip(self.y) {
            let s = dot(w, r) + b;
            let yv = if yi { 1.0 } else { 0.0 };
            let wt = self.weight[yi as usize];
            nll += wt * (softplus(s) - yv * s);
            let e = wt * (sigmoid(s) - yv);
            for (g, v) in grad[..d].iter_mut().zip(r) {
                *g += e * v;
            }
            grad[d] += e;
        }
        for (g, wj) in grad[..d].iter_mut().zip(w) {
            *g += wj / self.c;
        }
        nll + dot(w, w) / (2.0 * self.c)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub params: LrParams,
    pub standardizer: Standardizer,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub gradient_norm: f64,
}

impl LrModel {
    /// Positive-class probability for a raw (unstandardized) feature row.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.weights.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        let mut z = vec![0.0; x.len()];
        self.standardizer.transform_row(x, &mut z);
        Ok(sigmoid(dot(&self.weights, &z) + self.intercept))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Fits the model by BFGS with a backtracking Armijo line search, starting
/// from all-zero parameters.
pub fn train_logreg(x: &FeatureMatrix, y: &[bool], params: &LrParams) -> Result<LrModel, ModelError> {
    check_labels(x, y)?;
    if !(params.c > 0.0) {
        return Err(ModelError::InvalidParams(format!("C must be positive, got {}", params.c)));
    }
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let obj = LogisticObjective::new(&z, y, params.c).with_class_weight(params.class_weight);
    let n = obj.dim();

    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut f = obj.loss_grad(&theta, &mut grad);
    if !f.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    let initial_loss = f;
    let mut h = identity(n);
    let mut first_step = true;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];

    while iterations < params.max_iterations {
        if norm(&grad) < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = mat_vec(&h, &grad);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, th), d) in trial.iter_mut().zip(&theta).zip(&dir) {
                *t = th + step * d;
            }
            let ft = obj.loss_grad(&trial, &mut trial_grad);
            if !ft.is_finite() {
                return Err(ModelError::NonFiniteLoss);
            }
            if ft <= f + 1e-4 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else {
            // no decrease representable; we are at the optimum to machine precision
            converged = norm(&grad) < params.tolerance;
            break;
        };

        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if first_step {
                let scale = sy / dot(&yv, &yv);
                h = identity(n);
                h.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
                first_step = false;
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        theta.copy_from_slice(&trial);
        grad.copy_from_slice(&trial_grad);
        f = ft;
    }
    if !converged && norm(&grad) < params.tolerance {
        converged = true;
    }

    let d = x.cols();
    Ok(LrModel {
        params: params.clone(),
        standardizer,
        weights: theta[..d].to_vec(),
        intercept: theta[d],
        iterations,
        converged,
        initial_loss,
        final_loss: f,
        gradient_norm: norm(&grad),
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uninformative_features_give_base_rate_intercept() {
        let x = FeatureMatrix::from_rows(&[[0.0, 0.0]; 10]).unwrap();
        let y = [true, true, true, false, false, false, false, false, false, false];
        let m = train_logreg(&x, &y, &LrParams::default()).unwrap();
        assert!(m.converged);
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-6);
        assert!((m.predict_row(&[5.0, -1.0]).unwrap() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn separable_data_stays_finite_and_matches_grid_search() {
        let raw = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let x = FeatureMatrix::from_rows(&raw.iter().map(|v| [*v]).collect::<Vec<_>>()).unwrap();
        let y: Vec<bool> = raw.iter().map(|v| *v > 0.0).collect();
        let m = train_logreg(&x, &y, &LrParams::default()).unwrap();
        assert!(m.converged);
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        let pred: Vec<bool> = m.predict(&x).unwrap().iter().map(|p| *p >= 0.5).collect();
        assert_eq!(pred, y);

        // grid search oracle over (w, b) in standardized space
        let z = m.standardizer.transform(&x);
        let obj = LogisticObjective::new(&z, &y, 1.0);
        let mut grid_best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=80 {
                let w = i as f64 * 0.025;
                let b = -1.0 + j as f64 * 0.025;
                grid_best = grid_best.min(obj.loss(&[w, b]));
            }
        }
        assert!(m.final_loss <= grid_best + 1e-12, "{} vs {grid_best}", m.final_loss);
        assert!(grid_best - m.final_loss < 1e-3);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let rows: Vec<[f64; 3]> = (0..60)
            .map(|i| {
                let t = i as f64;
                [t.sin(), (t * 0.3).cos() * 5.0, t]
            })
            .collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] + 0.1 * r[1] > 0.2).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let p = LrParams::default();
        let m = train_logreg(&x, &y, &p).unwrap();
        assert!(m.converged);
        assert!(m.gradient_norm < p.tolerance);
        assert!(m.final_loss <= m.initial_loss);
    }

    #[test]
    fn rejects_bad_input() {
        let x = FeatureMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(matches!(
            train_logreg(&x, &[false, false], &LrParams::default()),
            Err(ModelError::DegenerateLabels)
        ));
        let bad = LrParams {
            c: 0.0,
            ..LrParams::default()
        };
        assert!(matches!(
            train_logreg(&x, &[false, true], &bad),
            Err(ModelError::InvalidParams(_))
        ));
        let inf = FeatureMatrix::from_rows(&[[f64::INFINITY], [2.0]]).unwrap();
        assert!(train_logreg(&inf, &[false, true], &LrParams::default()).is_err());
    }
}
