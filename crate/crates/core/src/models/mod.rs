//! Supervised learners behind one contract: fit on an `n × p` matrix, predict
//! on an `m × p` matrix. Fitted models are immutable, `Send + Sync` and
//! deterministic given the spec seed and the training data.

mod forest;
mod knn;
mod linear;
pub mod persist;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{Forest, ForestParams};
pub use knn::Knn;
pub use linear::{RidgeClassifier, RidgeRegressor};
pub use tree::{Tree, TreeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has {n} rows but min_samples_leaf is {min_leaf}")]
    TooFewRows { n: usize, min_leaf: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid learner spec: {0}")]
    InvalidSpec(String),
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length must equal rows × cols");
        Self { data, rows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { data, rows: rows.len(), cols }
    }

    /// A single-feature matrix from a column of values.
    pub fn column(values: &[f64]) -> Self {
        Self { data: values.to_vec(), rows: values.len(), cols: 1 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, rows: idx.len(), cols: self.cols }
    }

    /// Appends one column.
    pub fn with_column(&self, col: &[f64]) -> Matrix {
        assert_eq!(col.len(), self.rows);
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (i, v) in col.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(*v);
        }
        Matrix { data, rows: self.rows, cols: self.cols + 1 }
    }

    fn check_finite(&self) -> Result<(), ModelError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFiniteInput("features"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    RandomForest(ForestParams),
    Knn { k: usize },
    Ridge { penalty: f64 },
    Constant,
}

/// What to fit and with which seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerSpec {
    /// Random forest with 100 trees, unbounded depth, two samples per leaf.
    pub fn random_forest(seed: u64) -> Self {
        Self { kind: LearnerKind::RandomForest(ForestParams::default()), seed }
    }

    pub fn constant() -> Self {
        Self { kind: LearnerKind::Constant, seed: 0 }
    }

    pub fn knn(k: usize) -> Self {
        Self { kind: LearnerKind::Knn { k }, seed: 0 }
    }

    pub fn ridge(penalty: f64) -> Self {
        Self { kind: LearnerKind::Ridge { penalty }, seed: 0 }
    }

    /// Same learner, different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { kind: self.kind.clone(), seed }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match &self.kind {
            LearnerKind::RandomForest(p) => p.validate(),
            LearnerKind::Knn { k } if *k == 0 => Err(ModelError::InvalidSpec("k must be ≥ 1".into())),
            LearnerKind::Ridge { penalty } if !(*penalty >= 0.0) => {
                Err(ModelError::InvalidSpec("ridge penalty must be ≥ 0".into()))
            }
            _ => Ok(()),
        }
    }

    fn min_rows(&self) -> usize {
        match &self.kind {
            LearnerKind::RandomForest(p) => p.min_samples_leaf,
            _ => 1,
        }
    }
}

fn check_training(spec: &LearnerSpec, x: &Matrix, n_targets: usize) -> Result<(), ModelError> {
    spec.validate()?;
    if x.rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.rows() != n_targets {
        return Err(ModelError::LengthMismatch { rows: x.rows(), targets: n_targets });
    }
    if x.rows() < spec.min_rows() {
        return Err(ModelError::TooFewRows { n: x.rows(), min_leaf: spec.min_rows() });
    }
    x.check_finite()
}

fn check_dim(expected: usize, x: &Matrix) -> Result<(), ModelError> {
    if x.cols() != expected {
        return Err(ModelError::DimensionMismatch { expected, got: x.cols() });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RegressorState {
    Forest(Forest),
    Knn(Knn),
    Ridge(RidgeRegressor),
    Constant { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedRegressor {
    dim: usize,
    state: RegressorState,
}

impl FittedRegressor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.dim, x)?;
        Ok(match &self.state {
            RegressorState::Forest(f) => f.predict_values(x),
            RegressorState::Knn(k) => k.predict_values(x),
            RegressorState::Ridge(r) => r.predict(x),
            RegressorState::Constant { value } => vec![*value; x.rows()],
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.predict(&Matrix::new(x.to_vec(), 1, x.len()))?[0])
    }

    /// Forest proximity weights of each training row for the query point,
    /// when the regressor is a forest fitted with leaf membership retained.
    pub fn forest_weights(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.state {
            RegressorState::Forest(f) => f.proximity_weights(x),
            _ => None,
        }
    }
}

pub fn fit_regressor(spec: &LearnerSpec, x: &Matrix, y: &[f64]) -> Result<FittedRegressor, ModelError> {
    check_training(spec, x, y.len())?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFiniteInput("targets"));
    }
    let state = match &spec.kind {
        LearnerKind::RandomForest(p) => RegressorState::Forest(Forest::fit_regression(p, spec.seed, x, y)),
        LearnerKind::Knn { k } => RegressorState::Knn(Knn::fit_regression(*k, x, y)),
        LearnerKind::Ridge { penalty } => RegressorState::Ridge(RidgeRegressor::fit(*penalty, x, y)),
        LearnerKind::Constant => RegressorState::Constant { value: y.iter().sum::<f64>() / y.len() as f64 },
    };
    Ok(FittedRegressor { dim: x.cols(), state })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ClassifierState {
    Forest(Forest),
    Knn(Knn),
    Ridge(RidgeClassifier),
    Constant { probabilities: Vec<f64> },
}

/// Classifier over a fixed, sorted class inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedClassifier {
    dim: usize,
    classes: Vec<u32>,
    state: ClassifierState,
}

impl FittedClassifier {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    /// Probability rows (`m × n_classes`, columns in `classes()` order).
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        check_dim(self.dim, x)?;
        let k = self.classes.len();
        let data = match &self.state {
            ClassifierState::Forest(f) => f.predict_distributions(x),
            ClassifierState::Knn(m) => m.predict_distributions(x, k),
            ClassifierState::Ridge(r) => r.predict_proba(x),
            ClassifierState::Constant { probabilities } => {
                probabilities.iter().copied().cycle().take(x.rows() * k).collect()
            }
        };
        Ok(Matrix::new(data, x.rows(), k))
    }

    /// Probability of `class` per row; zero for classes never seen in training.
    pub fn prob_of(&self, x: &Matrix, class: u32) -> Result<Vec<f64>, ModelError> {
        let p = self.predict_proba(x)?;
        Ok(match self.classes.iter().position(|&c| c == class) {
            Some(j) => (0..p.rows()).map(|i| p.get(i, j)).collect(),
            None => vec![0.0; x.rows()],
        })
    }

    /// Hard labels (most probable class, ties to the smaller code).
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u32>, ModelError> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows())
            .map(|i| {
                let row = p.row(i);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

pub fn fit_classifier(spec: &LearnerSpec, x: &Matrix, labels: &[u32]) -> Result<FittedClassifier, ModelError> {
    check_training(spec, x, labels.len())?;
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let encoded: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("label in inventory")).collect();
    let k = classes.len();
    let state = match &spec.kind {
        LearnerKind::RandomForest(p) => {
            ClassifierState::Forest(Forest::fit_classification(p, spec.seed, x, &encoded, k))
        }
        LearnerKind::Knn { k: nn } => ClassifierState::Knn(Knn::fit_classification(*nn, x, &encoded)),
        LearnerKind::Ridge { penalty } => ClassifierState::Ridge(RidgeClassifier::fit(*penalty, x, &encoded, k)),
        LearnerKind::Constant => {
            let mut probabilities = vec![0.0; k];
            for &c in &encoded {
                probabilities[c] += 1.0;
            }
            let n = encoded.len() as f64;
            probabilities.iter_mut().for_each(|p| *p /= n);
            ClassifierState::Constant { probabilities }
        }
    };
    Ok(FittedClassifier { dim: x.cols(), classes, state })
}
