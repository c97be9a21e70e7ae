use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Targets, Tree, TreeParams};
use super::{Matrix, ModelError};
use crate::rng::{stream, Substream};

/// Random forest hyperparameters. Defaults: 100 trees, unbounded depth,
/// `min_samples_leaf = 2`, bootstrap on, `⌈p/3⌉` (regression) or `⌈√p⌉`
/// (classification) features per split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: Option<usize>,
    #[serde(default = "yes")]
    pub bootstrap: bool,
    /// Retain per-leaf training rows (needed for proximity weights).
    #[serde(default)]
    pub keep_leaf_members: bool,
}

fn yes() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            keep_leaf_members: false,
        }
    }
}

impl ForestParams {
    pub(crate) fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees == 0 {
            return Err(ModelError::InvalidSpec("n_trees must be ≥ 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidSpec("min_samples_leaf must be ≥ 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(ModelError::InvalidSpec("features_per_split must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    width: usize,
    n_train: usize,
}

fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

impl Forest {
    fn fit(params: &ForestParams, seed: u64, x: &Matrix, targets: &Targets<'_>, default_mtry: usize) -> Forest {
        let n = x.rows();
        let sorted = presort(x);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: params.features_per_split.unwrap_or(default_mtry).max(1),
            keep_leaf_members: params.keep_leaf_members,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, Substream::Forest, t as u64);
                let mut weights = vec![0.0; n];
                if params.bootstrap {
                    for _ in 0..n {
                        weights[rng.random_range(0..n)] += 1.0;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1.0);
                }
                Tree::grow(x, targets, &weights, &sorted, &tree_params, &mut rng)
            })
            .collect();
        Forest { trees, width: targets_width(targets), n_train: n }
    }

    pub(crate) fn fit_regression(params: &ForestParams, seed: u64, x: &Matrix, y: &[f64]) -> Forest {
        let mtry = x.cols().div_ceil(3);
        Self::fit(params, seed, x, &Targets::Regression(y), mtry)
    }

    pub(crate) fn fit_classification(
        params: &ForestParams,
        seed: u64,
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
    ) -> Forest {
        let mtry = (x.cols() as f64).sqrt().ceil() as usize;
        Self::fit(params, seed, x, &Targets::Classification { labels, n_classes }, mtry)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub(crate) fn predict_values(&self, x: &Matrix) -> Vec<f64> {
        let nt = self.trees.len() as f64;
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.leaf_value(row)[0]).sum::<f64>() / nt
            })
            .collect()
    }

    pub(crate) fn predict_distributions(&self, x: &Matrix) -> Vec<f64> {
        let nt = self.trees.len() as f64;
        let k = self.width;
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let mut acc = vec![0.0; k];
                for t in &self.trees {
                    for (a, v) in acc.iter_mut().zip(t.leaf_value(row)) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= nt);
                acc
            })
            .collect();
        rows.concat()
    }

    /// Averaged per-tree leaf-share weights of the training rows. Sums to 1.
    pub(crate) fn proximity_weights(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut w = vec![0.0; self.n_train];
        let nt = self.trees.len() as f64;
        for t in &self.trees {
            let members = t.leaf_members(x)?;
            let total: f64 = members.iter().map(|(_, wi)| wi).sum();
            for &(r, wi) in members {
                w[r as usize] += wi / total / nt;
            }
        }
        Some(w)
    }
}

fn targets_width(t: &Targets<'_>) -> usize {
    match t {
        Targets::Regression(_) => 1,
        Targets::Classification { n_classes, .. } => *n_classes,
    }
}
