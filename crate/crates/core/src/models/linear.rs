use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Ridge regression with an unpenalised intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegressor {
    intercept: f64,
    coef: Vec<f64>,
}

/// Solves `(A + λI) β = b`, falling back to the pseudo-inverse when singular.
fn solve_penalised(mut a: DMatrix<f64>, b: DVector<f64>, penalty: f64) -> DVector<f64> {
    for i in 0..a.nrows() {
        a[(i, i)] += penalty;
    }
    if let Some(ch) = a.clone().cholesky() {
        return ch.solve(&b);
    }
    a.svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(b.len()))
}

impl RidgeRegressor {
    pub(crate) fn fit(penalty: f64, x: &Matrix, y: &[f64]) -> Self {
        Self::fit_weighted(penalty, x, y, None)
    }

    fn fit_weighted(penalty: f64, x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Self {
        let n = x.rows();
        let p = x.cols();
        let ones = vec![1.0; n];
        let w = w.unwrap_or(&ones);
        let wsum: f64 = w.iter().sum();
        let mut xbar = vec![0.0; p];
        let mut ybar = 0.0;
        for i in 0..n {
            for (j, m) in xbar.iter_mut().enumerate() {
                *m += w[i] * x.get(i, j);
            }
            ybar += w[i] * y[i];
        }
        xbar.iter_mut().for_each(|m| *m /= wsum);
        ybar /= wsum;
        let xc = DMatrix::from_fn(n, p, |i, j| (x.get(i, j) - xbar[j]) * w[i].sqrt());
        let yc = DVector::from_fn(n, |i, _| (y[i] - ybar) * w[i].sqrt());
        let beta = solve_penalised(xc.transpose() * &xc, xc.transpose() * yc, penalty);
        let coef: Vec<f64> = beta.iter().copied().collect();
        let intercept = ybar - coef.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();
        Self { intercept, coef }
    }

    pub(crate) fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// One-vs-rest L2-penalised logistic regression fitted by iteratively
/// reweighted least squares; per-row scores are renormalised to sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeClassifier {
    models: Vec<RidgeRegressor>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl RidgeClassifier {
    pub(crate) fn fit(penalty: f64, x: &Matrix, labels: &[usize], n_classes: usize) -> Self {
        // a strictly positive penalty keeps separable problems finite
        let penalty = penalty.max(1e-6);
        let n = x.rows();
        let models = (0..n_classes)
            .map(|c| {
                let target: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == c))).collect();
                let mut model = RidgeRegressor { intercept: 0.0, coef: vec![0.0; x.cols()] };
                for _ in 0..50 {
                    let eta = model.predict(x);
                    let mut z = Vec::with_capacity(n);
                    let mut w = Vec::with_capacity(n);
                    for i in 0..n {
                        let mu = sigmoid(eta[i]).clamp(1e-9, 1.0 - 1e-9);
                        let wi = mu * (1.0 - mu);
                        w.push(wi);
                        z.push(eta[i] + (target[i] - mu) / wi);
                    }
                    let next = RidgeRegressor::fit_weighted(penalty, x, &z, Some(&w));
                    let delta = (next.intercept - model.intercept).abs()
                        + next.coef.iter().zip(&model.coef).map(|(a, b)| (a - b).abs()).sum::<f64>();
                    model = next;
                    if delta < 1e-10 {
                        break;
                    }
                }
                model
            })
            .collect();
        Self { models }
    }

    pub(crate) fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let k = self.models.len();
        if k == 1 {
            return vec![1.0; x.rows()];
        }
        let scores: Vec<Vec<f64>> = self.models.iter().map(|m| m.predict(x)).collect();
        let mut out = Vec::with_capacity(x.rows() * k);
        for i in 0..x.rows() {
            let row: Vec<f64> = scores.iter().map(|s| sigmoid(s[i])).collect();
            let total: f64 = row.iter().sum();
            out.extend(row.into_iter().map(|v| v / total));
        }
        out
    }
}
