//! Weighted CART trees built over presorted feature orderings.
//!
//! Splits maximise the variance-reduction proxy `S_L²/W_L + S_R²/W_R`
//! (regression) or the Gini proxy `Σ_c w_Lc²/W_L + Σ_c w_Rc²/W_R`
//! (classification). Thresholds are midpoints between adjacent distinct
//! values; ties go to the lowest feature index, then the smallest threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Number of non-constant features examined per split.
    pub max_features: usize,
    pub keep_leaf_members: bool,
}

pub(crate) enum Targets<'a> {
    Regression(&'a [f64]),
    Classification { labels: &'a [usize], n_classes: usize },
}

impl Targets<'_> {
    fn width(&self) -> usize {
        match self {
            Targets::Regression(_) => 1,
            Targets::Classification { n_classes, .. } => *n_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { leaf: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    /// `width` values per leaf: the mean (regression) or class frequencies.
    leaf_values: Vec<f64>,
    width: usize,
    /// Per leaf, the training rows it holds with their bootstrap weights.
    leaf_members: Option<Vec<Vec<(u32, f64)>>>,
}

impl Tree {
    fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { leaf } => return *leaf as usize,
            }
        }
    }

    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let l = self.leaf_of(x);
        &self.leaf_values[l * self.width..(l + 1) * self.width]
    }

    pub(crate) fn leaf_members(&self, x: &[f64]) -> Option<&[(u32, f64)]> {
        let l = self.leaf_of(x);
        self.leaf_members.as_ref().map(|m| m[l].as_slice())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values.len() / self.width
    }

    /// Grows a tree on the rows with positive weight. `sorted` holds, per
    /// feature, all training rows sorted by (value, row index).
    pub(crate) fn grow<R: Rng>(
        x: &Matrix,
        targets: &Targets<'_>,
        weights: &[f64],
        sorted: &[Vec<u32>],
        params: &TreeParams,
        rng: &mut R,
    ) -> Tree {
        let p = x.cols();
        let mut order: Vec<Vec<u32>> =
            sorted.iter().map(|col| col.iter().copied().filter(|&r| weights[r as usize] > 0.0).collect()).collect();
        let n_active = order.first().map_or(0, Vec::len);
        let width = targets.width();
        let mut builder = Builder {
            x,
            targets,
            weights,
            params,
            width,
            nodes: Vec::new(),
            leaf_values: Vec::new(),
            leaf_members: params.keep_leaf_members.then(Vec::new),
            goes_left: vec![false; x.rows()],
            scratch: Vec::with_capacity(n_active),
        };
        let mut features: Vec<usize> = (0..p).collect();
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, n_active, 0usize)];
        builder.nodes.push(Node::Leaf { leaf: 0 });
        while let Some((slot, start, end, depth)) = stack.pop() {
            let split = if depth_allows(params.max_depth, depth) && end - start >= 2 * params.min_samples_leaf {
                builder.best_split(&order, start, end, &mut features, rng)
            } else {
                None
            };
            match split {
                None => {
                    let leaf = builder.make_leaf(&order[0][start..end]);
                    builder.nodes[slot] = Node::Leaf { leaf };
                }
                Some((feature, threshold)) => {
                    let n_left = builder.partition(&mut order, start, end, feature, threshold);
                    let left = builder.nodes.len();
                    builder.nodes.push(Node::Leaf { leaf: 0 });
                    let right = builder.nodes.len();
                    builder.nodes.push(Node::Leaf { leaf: 0 });
                    builder.nodes[slot] =
                        Node::Split { feature: feature as u32, threshold, left: left as u32, right: right as u32 };
                    stack.push((right, start + n_left, end, depth + 1));
                    stack.push((left, start, start + n_left, depth + 1));
                }
            }
        }
        Tree { nodes: builder.nodes, leaf_values: builder.leaf_values, width, leaf_members: builder.leaf_members }
    }
}

fn depth_allows(max_depth: Option<usize>, depth: usize) -> bool {
    max_depth.is_none_or(|m| depth < m)
}

struct Builder<'a> {
    x: &'a Matrix,
    targets: &'a Targets<'a>,
    weights: &'a [f64],
    params: &'a TreeParams,
    width: usize,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    leaf_members: Option<Vec<Vec<(u32, f64)>>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl Builder<'_> {
    fn make_leaf(&mut self, rows: &[u32]) -> u32 {
        let leaf = (self.leaf_values.len() / self.width) as u32;
        let mut acc = vec![0.0; self.width];
        let mut total = 0.0;
        for &r in rows {
            let w = self.weights[r as usize];
            total += w;
            match self.targets {
                Targets::Regression(y) => acc[0] += w * y[r as usize],
                Targets::Classification { labels, .. } => acc[labels[r as usize]] += w,
            }
        }
        acc.iter_mut().for_each(|v| *v /= total);
        self.leaf_values.extend_from_slice(&acc);
        if let Some(m) = &mut self.leaf_members {
            m.push(rows.iter().map(|&r| (r, self.weights[r as usize])).collect());
        }
        leaf
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        match self.targets {
            Targets::Regression(y) => {
                let first = y[rows[0] as usize];
                rows.iter().all(|&r| y[r as usize] == first)
            }
            Targets::Classification { labels, .. } => {
                let first = labels[rows[0] as usize];
                rows.iter().all(|&r| labels[r as usize] == first)
            }
        }
    }

    fn best_split<R: Rng>(
        &mut self,
        order: &[Vec<u32>],
        start: usize,
        end: usize,
        features: &mut [usize],
        rng: &mut R,
    ) -> Option<(usize, f64)> {
        if self.is_pure(&order[0][start..end]) {
            return None;
        }
        let p = features.len();
        let max_features = self.params.max_features.clamp(1, p);
        let mut candidates: Vec<usize> = Vec::with_capacity(max_features);
        if max_features < p {
            features.shuffle(rng);
        }
        for &f in features.iter() {
            let col = &order[f][start..end];
            let lo = self.x.get(col[0] as usize, f);
            let hi = self.x.get(col[col.len() - 1] as usize, f);
            if lo < hi {
                candidates.push(f);
                if candidates.len() == max_features {
                    break;
                }
            }
        }
        candidates.sort_unstable();

        let parent = self.parent_proxy(&order[0][start..end]);
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            if let Some((score, thr)) = self.scan_feature(&order[f][start..end], f) {
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, f, thr));
                }
            }
        }
        let (score, f, thr) = best?;
        let tol = 1e-10 * parent.abs().max(f64::MIN_POSITIVE);
        (score > parent + tol).then_some((f, thr))
    }

    fn parent_proxy(&self, rows: &[u32]) -> f64 {
        match self.targets {
            Targets::Regression(y) => {
                let (mut w, mut s) = (0.0, 0.0);
                for &r in rows {
                    let wi = self.weights[r as usize];
                    w += wi;
                    s += wi * y[r as usize];
                }
                s * s / w
            }
            Targets::Classification { labels, n_classes } => {
                let mut c = vec![0.0; *n_classes];
                let mut w = 0.0;
                for &r in rows {
                    let wi = self.weights[r as usize];
                    w += wi;
                    c[labels[r as usize]] += wi;
                }
                c.iter().map(|v| v * v).sum::<f64>() / w
            }
        }
    }

    /// Best (proxy, threshold) for one feature over rows sorted by it.
    fn scan_feature(&self, rows: &[u32], f: usize) -> Option<(f64, f64)> {
        let min_leaf = self.params.min_samples_leaf;
        let n = rows.len();
        let mut best: Option<(f64, f64)> = None;
        let value = |k: usize| self.x.get(rows[k] as usize, f);
        match self.targets {
            Targets::Regression(y) => {
                let (mut w_tot, mut s_tot) = (0.0, 0.0);
                for &r in rows {
                    let wi = self.weights[r as usize];
                    w_tot += wi;
                    s_tot += wi * y[r as usize];
                }
                let (mut wl, mut sl) = (0.0, 0.0);
                for (k, &r) in rows[..n - 1].iter().enumerate() {
                    let r = r as usize;
                    wl += self.weights[r];
                    sl += self.weights[r] * y[r];
                    if k + 1 < min_leaf || n - k - 1 < min_leaf {
                        continue;
                    }
                    let (v0, v1) = (value(k), value(k + 1));
                    if v0 == v1 {
                        continue;
                    }
                    let wr = w_tot - wl;
                    let sr = s_tot - sl;
                    let score = sl * sl / wl + sr * sr / wr;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, midpoint(v0, v1)));
                    }
                }
            }
            Targets::Classification { labels, n_classes } => {
                let mut tot = vec![0.0; *n_classes];
                let mut w_tot = 0.0;
                for &r in rows {
                    let wi = self.weights[r as usize];
                    tot[labels[r as usize]] += wi;
                    w_tot += wi;
                }
                let mut left = vec![0.0; *n_classes];
                let mut wl = 0.0;
                for (k, &r) in rows[..n - 1].iter().enumerate() {
                    let r = r as usize;
                    left[labels[r]] += self.weights[r];
                    wl += self.weights[r];
                    if k + 1 < min_leaf || n - k - 1 < min_leaf {
                        continue;
                    }
                    let (v0, v1) = (value(k), value(k + 1));
                    if v0 == v1 {
                        continue;
                    }
                    let wr = w_tot - wl;
                    let mut gl = 0.0;
                    let mut gr = 0.0;
                    for c in 0..*n_classes {
                        gl += left[c] * left[c];
                        let rc = tot[c] - left[c];
                        gr += rc * rc;
                    }
                    let score = gl / wl + gr / wr;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, midpoint(v0, v1)));
                    }
                }
            }
        }
        best
    }

    /// Stable partition of every feature ordering; returns the left count.
    fn partition(&mut self, order: &mut [Vec<u32>], start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let mut n_left = 0;
        for &r in &order[0][start..end] {
            let left = self.x.get(r as usize, feature) <= threshold;
            self.goes_left[r as usize] = left;
            n_left += usize::from(left);
        }
        for col in order.iter_mut() {
            let slice = &mut col[start..end];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..slice.len() {
                let r = slice[k];
                if self.goes_left[r as usize] {
                    slice[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            slice[w..].copy_from_slice(&self.scratch);
        }
        n_left
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // guard against rounding onto the upper value
    if m >= b {
        a
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_cols(x: &Matrix) -> Vec<Vec<u32>> {
        (0..x.cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
                idx
            })
            .collect()
    }

    fn params(min_leaf: usize, depth: Option<usize>) -> TreeParams {
        TreeParams { max_depth: depth, min_samples_leaf: min_leaf, max_features: usize::MAX, keep_leaf_members: true }
    }

    #[test]
    fn stump_picks_the_obvious_threshold() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 10.0, 11.0, 12.0]);
        let y = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let w = [1.0; 6];
        let mut rng = crate::rng::stream(0, crate::rng::Substream::Forest, 0);
        let t = Tree::grow(&x, &Targets::Regression(&y), &w, &sorted_cols(&x), &params(1, Some(1)), &mut rng);
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 6.5, left: 1, right: 2 });
        assert_eq!(t.leaf_value(&[0.0]), &[0.0]);
        assert_eq!(t.leaf_value(&[7.0]), &[5.0]);
        assert_eq!(t.leaf_members(&[7.0]).unwrap().len(), 3);
    }

    #[test]
    fn tie_goes_to_lowest_feature_index() {
        // both features separate the targets identically
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let y = [1.0, 1.0, 3.0, 3.0];
        let mut rng = crate::rng::stream(0, crate::rng::Substream::Forest, 0);
        let t = Tree::grow(&x, &Targets::Regression(&y), &[1.0; 4], &sorted_cols(&x), &params(1, None), &mut rng);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_leaf_is_respected() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = [9.0, 0.0, 0.0, 0.0, 0.0];
        let mut rng = crate::rng::stream(0, crate::rng::Substream::Forest, 0);
        let t = Tree::grow(&x, &Targets::Regression(&y), &[1.0; 5], &sorted_cols(&x), &params(2, None), &mut rng);
        for l in t.leaf_members.as_ref().unwrap() {
            assert!(l.len() >= 2);
        }
    }

    #[test]
    fn gini_split_on_classes() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0]);
        let labels = [0, 0, 1, 1];
        let mut rng = crate::rng::stream(0, crate::rng::Substream::Forest, 0);
        let t = Tree::grow(
            &x,
            &Targets::Classification { labels: &labels, n_classes: 2 },
            &[1.0; 4],
            &sorted_cols(&x),
            &params(1, None),
            &mut rng,
        );
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.leaf_value(&[1.5]), &[1.0, 0.0]);
        assert_eq!(t.leaf_value(&[3.5]), &[0.0, 1.0]);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = Matrix::column(&[1.0, 2.0, 3.0]);
        let y = [1.0, 100.0, 3.0];
        let mut rng = crate::rng::stream(0, crate::rng::Substream::Forest, 0);
        let t =
            Tree::grow(&x, &Targets::Regression(&y), &[1.0, 0.0, 3.0], &sorted_cols(&x), &params(2, None), &mut rng);
        // (1·1 + 3·3) / 4
        assert_eq!(t.leaf_value(&[2.0]), &[2.5]);
    }
}
