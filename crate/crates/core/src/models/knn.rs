use serde::{Deserialize, Serialize};

use super::Matrix;

/// Brute-force k-nearest neighbours (Euclidean; distance ties broken by
/// training row index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    x: Matrix,
    /// Regression targets, or class indices stored as f64.
    y: Vec<f64>,
}

impl Knn {
    pub(crate) fn fit_regression(k: usize, x: &Matrix, y: &[f64]) -> Self {
        Self { k, x: x.clone(), y: y.to_vec() }
    }

    pub(crate) fn fit_classification(k: usize, x: &Matrix, labels: &[usize]) -> Self {
        Self { k, x: x.clone(), y: labels.iter().map(|&l| l as f64).collect() }
    }

    fn neighbours(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = (0..self.x.rows())
            .map(|i| {
                let dist = self.x.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (dist, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k.min(self.x.rows())).map(|(_, i)| i).collect()
    }

    pub(crate) fn predict_values(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| {
                let nb = self.neighbours(x.row(i));
                nb.iter().map(|&j| self.y[j]).sum::<f64>() / nb.len() as f64
            })
            .collect()
    }

    pub(crate) fn predict_distributions(&self, x: &Matrix, n_classes: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.rows() * n_classes);
        for i in 0..x.rows() {
            let nb = self.neighbours(x.row(i));
            let mut counts = vec![0.0; n_classes];
            for &j in &nb {
                counts[self.y[j] as usize] += 1.0;
            }
            let n = nb.len() as f64;
            out.extend(counts.into_iter().map(|c| c / n));
        }
        out
    }
}
