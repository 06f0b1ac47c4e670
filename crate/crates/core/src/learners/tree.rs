//! Level-wise binary trees grown from first- and second-order loss
//! statistics. With squared loss and no leaf penalty this is ordinary
//! variance-reduction CART; the same builder drives the forest and the
//! boosted ensemble.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{logit, sigmoid, weighted_mean};
use crate::rng::{derive_seed, rng_from_seed, Rng};

const NONE: u32 = u32::MAX;

/// Relative margin a candidate split must clear to displace an earlier one,
/// so near-ties resolve by scan order rather than rounding.
const GAIN_TIE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut k = 0usize;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if row[feature] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub(super) struct TreeParams {
    pub max_depth: usize,
    /// Minimum number of (bootstrap-counted) observations per leaf.
    pub min_leaf: usize,
    /// Minimum hessian sum per leaf.
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Splits must reduce the root loss by at least this fraction.
    pub cp: f64,
    /// Features sampled per node; `None` uses all.
    pub mtry: Option<usize>,
}

/// Column-major copy of the design with a stable sort order per column.
struct Columns {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
}

impl Columns {
    fn new(x: ArrayView2<'_, f64>) -> Self {
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, sorted }
    }
}

#[derive(Clone, Copy)]
struct Stats {
    g: f64,
    h: f64,
    c: u64,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

struct Frontier {
    node: usize,
    stats: Stats,
    features: Option<Vec<bool>>,
}

fn leaf_value(s: Stats, l2: f64) -> f64 {
    let d = s.h + l2;
    if d > 0.0 { -s.g / d } else { 0.0 }
}

fn score(s: Stats, l2: f64) -> f64 {
    let d = s.h + l2;
    if d > 0.0 { s.g * s.g / d } else { 0.0 }
}

fn feature_mask(p: usize, mtry: Option<usize>, rng: &mut Option<Rng>) -> Option<Vec<bool>> {
    let m = mtry?;
    if m >= p {
        return None;
    }
    let rng = rng.as_mut().expect("feature sampling needs an rng");
    let mut mask = vec![false; p];
    for j in sample(rng, p, m) {
        mask[j] = true;
    }
    Some(mask)
}

/// Grow one tree. `g`, `h` and `count` are per-observation gradient, hessian
/// and multiplicity; observations with zero multiplicity are ignored.
fn grow(
    data: &Columns,
    g: &[f64],
    h: &[f64],
    count: &[u32],
    params: &TreeParams,
    min_gain: f64,
    mut rng: Option<Rng>,
) -> Tree {
    let n = g.len();
    let p = data.cols.len();
    let mut root = Stats { g: 0.0, h: 0.0, c: 0 };
    let mut energy = 0.0;
    let mut slot = vec![NONE; n];
    for i in 0..n {
        if count[i] > 0 {
            slot[i] = 0;
            root.g += g[i];
            root.h += h[i];
            root.c += count[i] as u64;
            if h[i] > 0.0 {
                energy += g[i] * g[i] / h[i];
            }
        }
    }
    // Gains below this are rounding noise.
    let min_gain = min_gain.max(1e-12 * energy);

    let mut nodes = vec![Node::Leaf { value: leaf_value(root, params.l2) }];
    let mut frontier =
        vec![Frontier { node: 0, stats: root, features: feature_mask(p, params.mtry, &mut rng) }];
    let min_leaf = params.min_leaf as u64;

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = (0..k).map(|_| None).collect();
        let mut acc = vec![Stats { g: 0.0, h: 0.0, c: 0 }; k];
        let mut last = vec![f64::NAN; k];
        let splittable: Vec<bool> =
            frontier.iter().map(|f| f.stats.c >= 2 * min_leaf.max(1)).collect();
        if !splittable.iter().any(|&s| s) {
            break;
        }
        for f in 0..p {
            acc.iter_mut().for_each(|a| *a = Stats { g: 0.0, h: 0.0, c: 0 });
            let col = &data.cols[f];
            for &i in &data.sorted[f] {
                let i = i as usize;
                let s = slot[i];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                let fr = &frontier[s];
                if !splittable[s] || fr.features.as_ref().is_some_and(|m| !m[f]) {
                    continue;
                }
                let x = col[i];
                let a = acc[s];
                if a.c > 0 && x > last[s] && a.c >= min_leaf && fr.stats.c - a.c >= min_leaf {
                    let right = Stats { g: fr.stats.g - a.g, h: fr.stats.h - a.h, c: fr.stats.c - a.c };
                    if a.h >= params.min_child_weight && right.h >= params.min_child_weight {
                        let gain = score(a, params.l2) + score(right, params.l2)
                            - score(fr.stats, params.l2);
                        if gain > min_gain && best[s].as_ref().is_none_or(|b| gain > b.gain * (1.0 + GAIN_TIE)) {
                            let mut threshold = 0.5 * (last[s] + x);
                            if threshold >= x {
                                threshold = last[s];
                            }
                            best[s] = Some(Candidate { gain, feature: f, threshold, left: a });
                        }
                    }
                }
                let a = &mut acc[s];
                a.g += g[i];
                a.h += h[i];
                a.c += count[i] as u64;
                last[s] = x;
            }
        }

        let mut next = Vec::new();
        let mut child_slots: Vec<Option<(usize, f64, u32, u32)>> = vec![None; k];
        for (s, cand) in best.into_iter().enumerate() {
            let Some(cand) = cand else { continue };
            let parent = frontier[s].stats;
            let right = Stats { g: parent.g - cand.left.g, h: parent.h - cand.left.h, c: parent.c - cand.left.c };
            let li = nodes.len();
            nodes.push(Node::Leaf { value: leaf_value(cand.left, params.l2) });
            nodes.push(Node::Leaf { value: leaf_value(right, params.l2) });
            nodes[frontier[s].node] = Node::Split {
                feature: cand.feature,
                threshold: cand.threshold,
                left: li as u32,
                right: (li + 1) as u32,
            };
            let ls = next.len() as u32;
            next.push(Frontier { node: li, stats: cand.left, features: feature_mask(p, params.mtry, &mut rng) });
            next.push(Frontier { node: li + 1, stats: right, features: feature_mask(p, params.mtry, &mut rng) });
            child_slots[s] = Some((cand.feature, cand.threshold, ls, ls + 1));
        }
        for i in 0..n {
            if slot[i] == NONE {
                continue;
            }
            slot[i] = match child_slots[slot[i] as usize] {
                Some((f, t, l, r)) => if data.cols[f][i] <= t { l } else { r },
                None => NONE,
            };
        }
        frontier = next;
    }
    Tree { nodes }
}

fn total_loss(y: &[f64], w: &[f64]) -> f64 {
    let m = weighted_mean(y, w);
    y.iter().zip(w).map(|(a, b)| b * (a - m) * (a - m)).sum()
}

pub(super) fn fit_cart(x: ArrayView2<'_, f64>, y: &[f64], w: &[f64], params: &TreeParams) -> Tree {
    let data = Columns::new(x);
    let g: Vec<f64> = y.iter().zip(w).map(|(a, b)| -a * b).collect();
    let count: Vec<u32> = w.iter().map(|&v| u32::from(v > 0.0)).collect();
    let min_gain = params.cp * total_loss(y, w);
    grow(&data, &g, w, &count, params, min_gain, None)
}

/// Bagged trees with per-node feature sampling.
pub(super) fn fit_forest(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    w: &[f64],
    params: &TreeParams,
    trees: usize,
    seed: u64,
) -> Vec<Tree> {
    let n = y.len();
    let data = Columns::new(x);
    (0..trees)
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &[t as u64]));
            let mut count = vec![0u32; n];
            for _ in 0..n {
                count[rng.random_range(0..n)] += 1;
            }
            for (c, &wi) in count.iter_mut().zip(w) {
                if wi <= 0.0 {
                    *c = 0;
                }
            }
            let h: Vec<f64> = count.iter().zip(w).map(|(&c, &wi)| c as f64 * wi).collect();
            let g: Vec<f64> = h.iter().zip(y).map(|(hi, yi)| -hi * yi).collect();
            grow(&data, &g, &h, &count, params, 0.0, Some(rng))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    /// Initial raw score (mean, or log-odds of the mean for binary outcomes).
    pub base: f64,
    pub learning_rate: f64,
    /// Trees with unscaled leaf values; each contributes `learning_rate * value`.
    pub trees: Vec<Tree>,
}

impl Boosted {
    pub(super) fn raw_row(&self, row: ArrayView1<'_, f64>, rounds: Option<usize>) -> f64 {
        let r = rounds.unwrap_or(self.trees.len()).min(self.trees.len());
        self.base + self.trees[..r].iter().map(|t| self.learning_rate * t.predict_row(row)).sum::<f64>()
    }
}

/// Gradient boosting with second-order leaf values `-G / (H + l2)`.
pub(super) fn fit_gbm(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    w: &[f64],
    params: &TreeParams,
    rounds: usize,
    learning_rate: f64,
    binary: bool,
) -> Boosted {
    let n = y.len();
    let data = Columns::new(x);
    let mean = weighted_mean(y, w);
    let base = if binary { logit(mean) } else { mean };
    let mut f = vec![base; n];
    let count: Vec<u32> = w.iter().map(|&v| u32::from(v > 0.0)).collect();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        for i in 0..n {
            if binary {
                let p = sigmoid(f[i]);
                g[i] = w[i] * (p - y[i]);
                h[i] = w[i] * p * (1.0 - p);
            } else {
                g[i] = w[i] * (f[i] - y[i]);
                h[i] = w[i];
            }
        }
        let tree = grow(&data, &g, &h, &count, params, 0.0, None);
        for (fi, row) in f.iter_mut().zip(x.outer_iter()) {
            *fi += learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
    }
    Boosted { base, learning_rate, trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn cart_params() -> TreeParams {
        TreeParams { max_depth: 30, min_leaf: 1, min_child_weight: 0.0, l2: 0.0, cp: 0.0, mtry: None }
    }

    #[test]
    fn single_split_finds_step() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let t = fit_cart(x.view(), &y, &[1.0; 6], &cart_params());
        assert_eq!(t.leaves(), 2);
        let Node::Split { feature, threshold, .. } = t.nodes[0] else { panic!() };
        assert_eq!(feature, 0);
        assert_eq!(threshold, 3.5);
    }

    #[test]
    fn min_leaf_limits_splits() {
        let x = Array2::from_shape_fn((9, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
        let mut p = cart_params();
        p.min_leaf = 5;
        assert_eq!(fit_cart(x.view(), &y, &[1.0; 9], &p).leaves(), 1);
    }

    #[test]
    fn gini_and_variance_reduction_agree_on_binary_outcome() {
        // Weighted Gini impurity of a node is 2 p (1 - p) W; the squared-error
        // impurity is p (1 - p) W. Both pick the same split.
        let x = array![[0.1, 5.0], [0.4, 1.0], [0.35, 2.0], [0.8, 3.0], [0.9, 4.0], [0.2, 0.0]];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let w = [1.0, 2.0, 1.0, 0.5, 1.0, 3.0];
        let t = fit_cart(x.view(), &y, &w, &TreeParams { max_depth: 1, ..cart_params() });
        let gini = |idx: &[usize]| {
            let sw: f64 = idx.iter().map(|&i| w[i]).sum();
            let p = idx.iter().map(|&i| w[i] * y[i]).sum::<f64>() / sw;
            2.0 * p * (1.0 - p) * sw
        };
        let mut best = (f64::INFINITY, 0, 0.0);
        for f in 0..2 {
            for i in 0..6 {
                let thr = x[[i, f]];
                let (l, r): (Vec<usize>, Vec<usize>) = (0..6).partition(|&k| x[[k, f]] <= thr);
                if l.is_empty() || r.is_empty() {
                    continue;
                }
                let imp = gini(&l) + gini(&r);
                if imp < best.0 - 1e-12 {
                    best = (imp, f, thr);
                }
            }
        }
        let Node::Split { feature, threshold, .. } = t.nodes[0] else { panic!() };
        assert_eq!(feature, best.1);
        let (l, _): (Vec<usize>, Vec<usize>) = (0..6).partition(|&k| x[[k, feature]] <= threshold);
        let (lb, _): (Vec<usize>, Vec<usize>) = (0..6).partition(|&k| x[[k, best.1]] <= best.2);
        assert_eq!(l, lb);
    }

    #[test]
    fn boosted_leaf_values_are_newton_steps() {
        let x = array![[0.0], [1.0]];
        let y = [0.0, 2.0];
        let p = TreeParams { max_depth: 1, min_leaf: 1, min_child_weight: 0.0, l2: 1.0, cp: 0.0, mtry: None };
        let b = fit_gbm(x.view(), &y, &[1.0, 1.0], &p, 1, 1.0, false);
        // base 1, gradients -1 and +1, leaves -g/(h + 1) = 0.5 and -0.5
        assert_eq!(b.base, 1.0);
        let Node::Leaf { value } = b.trees[0].nodes[1] else { panic!() };
        assert!((value + 0.5).abs() < 1e-15);
    }
}
