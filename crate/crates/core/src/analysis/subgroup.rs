//! Greedy axis-aligned subgroup search on the sign of a lower bound.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::models::Matrix;

pub const DEFAULT_MAX_DEPTH: usize = 2;
pub const DEFAULT_MIN_LEAF: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSplit {
    pub covariate: usize,
    /// Rows with `x[covariate] <= threshold` go left.
    pub threshold: f64,
    pub left: Box<SubgroupNode>,
    pub right: Box<SubgroupNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupNode {
    pub n: usize,
    pub n_positive: usize,
    pub split: Option<SubgroupSplit>,
    /// Subject indices, filled for leaves only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<usize>,
}

impl SubgroupNode {
    pub fn fraction_positive(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_positive as f64 / self.n as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTree {
    pub root: SubgroupNode,
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// A leaf described by the conjunction of conditions leading to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// `(covariate, threshold, goes_left)` along the path from the root.
    pub path: Vec<(usize, f64, bool)>,
    pub n: usize,
    pub n_positive: usize,
    pub rows: Vec<usize>,
}

impl SubgroupTree {
    pub fn leaves(&self) -> Vec<Leaf> {
        fn walk(node: &SubgroupNode, path: &mut Vec<(usize, f64, bool)>, out: &mut Vec<Leaf>) {
            match &node.split {
                None => out.push(Leaf {
                    path: path.clone(),
                    n: node.n,
                    n_positive: node.n_positive,
                    rows: node.rows.clone(),
                }),
                Some(s) => {
                    path.push((s.covariate, s.threshold, true));
                    walk(&s.left, path, out);
                    path.pop();
                    path.push((s.covariate, s.threshold, false));
                    walk(&s.right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// The leaf with the highest positive fraction (larger leaf on ties).
    pub fn best_leaf(&self) -> Leaf {
        self.leaves()
            .into_iter()
            .reduce(|a, b| {
                let ord = ratio_cmp((b.n_positive, b.n), (a.n_positive, a.n)).then(b.n.cmp(&a.n));
                if ord == std::cmp::Ordering::Greater {
                    b
                } else {
                    a
                }
            })
            .expect("a tree has at least one leaf")
    }

    /// Membership mask of [`best_leaf`](Self::best_leaf) for covariate rows `x`.
    pub fn best_leaf_mask(&self, x: &Matrix) -> Vec<bool> {
        let best = self.best_leaf();
        (0..x.rows()).map(|i| best.path.iter().all(|&(c, t, left)| (x.get(i, c) <= t) == left)).collect()
    }
}

/// Compares `p1/n1` and `p2/n2` exactly.
fn ratio_cmp((p1, n1): (usize, usize), (p2, n2): (usize, usize)) -> std::cmp::Ordering {
    ((p1 as u128) * (n2 as u128)).cmp(&((p2 as u128) * (n1 as u128)))
}

#[derive(Clone, Copy)]
struct Candidate {
    covariate: usize,
    threshold: f64,
    /// Positive count and size of the purer child.
    best: (usize, usize),
}

/// Candidate ordering: higher child purity, then larger child, then lower
/// covariate index, then smaller threshold.
fn better(a: &Candidate, b: &Candidate) -> bool {
    use std::cmp::Ordering::*;
    match ratio_cmp(a.best, b.best) {
        Greater => true,
        Less => false,
        Equal => match a.best.1.cmp(&b.best.1) {
            Greater => true,
            Less => false,
            Equal => (a.covariate, a.threshold) < (b.covariate, b.threshold),
        },
    }
}

/// Fits a shallow tree to the indicator `lb > 0`. A node splits on the
/// threshold maximising the larger child's positive fraction, only if that
/// strictly exceeds the node's own fraction and both children keep at least
/// `min_leaf` rows. Thresholds are midpoints between consecutive distinct
/// covariate values.
pub fn subgroup_tree(x: &Matrix, lb: &[f64], max_depth: usize, min_leaf: usize) -> Result<SubgroupTree, AnalysisError> {
    if lb.len() != x.rows() {
        return Err(AnalysisError::LengthMismatch { what: "lower bounds", expected: x.rows(), got: lb.len() });
    }
    if lb.is_empty() {
        return Err(AnalysisError::TooFewSubjects { n: 0, min: 1 });
    }
    let positive: Vec<bool> = lb.iter().map(|&v| v > 0.0).collect();
    let rows: Vec<usize> = (0..lb.len()).collect();
    let root = grow(x, &positive, &rows, max_depth, min_leaf.max(1));
    Ok(SubgroupTree { root, max_depth, min_leaf })
}

fn grow(x: &Matrix, positive: &[bool], rows: &[usize], depth: usize, min_leaf: usize) -> SubgroupNode {
    let n = rows.len();
    let n_positive = rows.iter().filter(|&&i| positive[i]).count();
    let mut node = SubgroupNode { n, n_positive, split: None, rows: rows.to_vec() };
    if depth == 0 || n < 2 * min_leaf {
        return node;
    }
    let mut best: Option<Candidate> = None;
    for c in 0..x.cols() {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| x.get(a, c).total_cmp(&x.get(b, c)));
        let mut left_pos = 0;
        for k in 0..n - 1 {
            left_pos += positive[order[k]] as usize;
            let (lo, hi) = (x.get(order[k], c), x.get(order[k + 1], c));
            let left_n = k + 1;
            if lo == hi || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let left = (left_pos, left_n);
            let right = (n_positive - left_pos, n - left_n);
            let child = match ratio_cmp(left, right) {
                std::cmp::Ordering::Greater => left,
                std::cmp::Ordering::Less => right,
                std::cmp::Ordering::Equal => {
                    if left.1 >= right.1 {
                        left
                    } else {
                        right
                    }
                }
            };
            let cand = Candidate { covariate: c, threshold: lo + (hi - lo) / 2.0, best: child };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let Some(b) = best else { return node };
    if ratio_cmp(b.best, (n_positive, n)) != std::cmp::Ordering::Greater {
        return node;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, b.covariate) <= b.threshold);
    node.rows.clear();
    node.split = Some(SubgroupSplit {
        covariate: b.covariate,
        threshold: b.threshold,
        left: Box::new(grow(x, positive, &l, depth - 1, min_leaf)),
        right: Box::new(grow(x, positive, &r, depth - 1, min_leaf)),
    });
    node
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_threshold() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let lb: Vec<f64> = xs.iter().map(|&x| if x > 70.0 { 1.0 } else { -1.0 }).collect();
        let t = subgroup_tree(&Matrix::column(&xs), &lb, 2, 2).unwrap();
        let s = t.root.split.as_ref().unwrap();
        assert_eq!((s.covariate, s.threshold), (0, 70.5));
        assert_eq!(s.right.fraction_positive(), 1.0);
        assert!(s.right.split.is_none() && s.left.split.is_none());
    }

    #[test]
    fn pure_nodes_stay_leaves() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0]);
        let t = subgroup_tree(&x, &[1.0; 4], 2, 1).unwrap();
        assert!(t.root.split.is_none());
        assert_eq!(t.best_leaf_mask(&x), vec![true; 4]);
    }

    #[test]
    fn four_subject_enumeration() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![0.0], vec![0.0]]);
        let t = subgroup_tree(&x, &[1.0, 1.0, -1.0, -1.0], 2, 2).unwrap();
        let s = t.root.split.as_ref().unwrap();
        assert_eq!((s.covariate, s.threshold), (0, 0.5));
        assert_eq!((s.right.n, s.right.fraction_positive()), (2, 1.0));
        assert_eq!(t.best_leaf().rows, vec![0, 1]);
    }

    #[test]
    fn ties_prefer_lower_covariate() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let t = subgroup_tree(&x, &[-1.0, -1.0, 1.0, 1.0], 1, 1).unwrap();
        assert_eq!(t.root.split.as_ref().unwrap().covariate, 0);
    }
}
