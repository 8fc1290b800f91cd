//! Binary regression trees (CART) and the shared tree grower.
//!
//! Split candidates are midpoints between consecutive distinct values of a
//! feature within the node. The best candidate maximises the gain; ties go
//! to the lowest feature index, then the lowest threshold. Rows with
//! `x[feature] <= threshold` go left.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::TreeParams;
use crate::matrix::Matrix;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Loss reduction achieved by this split (SSE decrease for CART).
        gain: f64,
        samples: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// A tree stored as a node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Adds each split's gain to its feature's slot.
    pub fn accumulate_gains(&self, out: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                out[*feature] += gain.max(0.0);
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// How node quality and leaf values are computed from per-row targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Criterion {
    /// Squared error on the targets: leaf = mean, gain = SSE decrease.
    Variance,
    /// Second-order boosting on gradients with unit hessians:
    /// leaf = -T(G) / (H + lambda), T the soft threshold at alpha.
    SecondOrder { lambda: f64, alpha: f64 },
}

impl Criterion {
    fn soft(g: f64, alpha: f64) -> f64 {
        g.signum() * (g.abs() - alpha).max(0.0)
    }

    /// Node score whose child sum minus parent is the split gain
    /// (up to the factor reported by [`Criterion::report_gain`]).
    fn score(self, sum: f64, count: usize) -> f64 {
        let n = count as f64;
        match self {
            Criterion::Variance => sum * sum / n,
            Criterion::SecondOrder { lambda, alpha } => {
                let t = Self::soft(sum, alpha);
                let denom = n + lambda;
                if denom > 0.0 {
                    t * t / denom
                } else {
                    0.0
                }
            }
        }
    }

    fn leaf(self, sum: f64, count: usize) -> f64 {
        let n = count as f64;
        match self {
            Criterion::Variance => sum / n,
            Criterion::SecondOrder { lambda, alpha } => {
                let denom = n + lambda;
                if denom > 0.0 {
                    -Self::soft(sum, alpha) / denom
                } else {
                    0.0
                }
            }
        }
    }

    fn report_gain(self, raw: f64) -> f64 {
        match self {
            Criterion::Variance => raw,
            Criterion::SecondOrder { .. } => 0.5 * raw,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GrowConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Non-constant features examined per node; `None` examines all.
    pub max_features: Option<usize>,
    /// Restricts candidate features (per-tree column sampling).
    pub features: Option<Vec<usize>>,
}

/// Candidate `a` beats incumbent `b` only by more than round-off.
fn better(a: f64, b: f64) -> bool {
    a > b + 1e-12 * (1.0 + b.abs())
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn is_constant(x: &Matrix, rows: &[usize], f: usize) -> bool {
    let first = x.get(rows[0], f);
    rows.iter().all(|&r| x.get(r, f) == first)
}

fn candidate_features(
    x: &Matrix,
    rows: &[usize],
    cfg: &GrowConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut pool: Vec<usize> = match &cfg.features {
        Some(f) => f.clone(),
        None => (0..x.cols()).collect(),
    };
    match cfg.max_features {
        None => pool.retain(|&f| !is_constant(x, rows, f)),
        Some(k) => {
            // Keep drawing until k non-constant features are found or the pool runs out.
            pool.shuffle(rng);
            let mut picked = Vec::with_capacity(k);
            for f in pool {
                if picked.len() == k {
                    break;
                }
                if !is_constant(x, rows, f) {
                    picked.push(f);
                }
            }
            pool = picked;
            pool.sort_unstable();
        }
    }
    pool
}

fn find_split(
    x: &Matrix,
    targets: &[f64],
    rows: &[usize],
    features: &[usize],
    cfg: &GrowConfig,
    criterion: Criterion,
) -> Option<BestSplit> {
    let m = rows.len();
    let total: f64 = rows.iter().map(|&r| targets[r]).sum();
    let parent = criterion.score(total, m);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.copy_from_slice(rows);
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        let mut left_sum = 0.0;
        for i in 0..m - 1 {
            left_sum += targets[order[i]];
            let (lo, hi) = (x.get(order[i], f), x.get(order[i + 1], f));
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            if n_left < cfg.min_samples_leaf || m - n_left < cfg.min_samples_leaf {
                continue;
            }
            let gain = criterion.score(left_sum, n_left)
                + criterion.score(total - left_sum, m - n_left)
                - parent;
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            match best {
                Some((_, _, g)) if !better(gain, g) => {}
                _ => best = Some((f, threshold, gain)),
            }
        }
    }
    let (feature, threshold, gain) = best?;
    let (left, right): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x.get(r, feature) <= threshold);
    Some(BestSplit {
        feature,
        threshold,
        gain,
        left,
        right,
    })
}

/// Grows a tree on `rows` (duplicates allowed) of `x` against `targets`.
/// `rng` is consulted only when `cfg.max_features` is set.
pub(crate) fn grow(
    x: &Matrix,
    targets: &[f64],
    rows: Vec<usize>,
    cfg: &GrowConfig,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = vec![Node::Leaf {
        value: 0.0,
        samples: 0,
    }];
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((at, rows, depth)) = stack.pop() {
        let m = rows.len();
        let sum: f64 = rows.iter().map(|&r| targets[r]).sum();
        let leaf = Node::Leaf {
            value: criterion.leaf(sum, m),
            samples: m,
        };
        let first = targets[rows[0]];
        let pure = rows.iter().all(|&r| targets[r] == first);
        let depth_left = cfg.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_left || m < cfg.min_samples_split || m < 2 * cfg.min_samples_leaf {
            nodes[at] = leaf;
            continue;
        }
        let features = candidate_features(x, &rows, cfg, rng);
        match find_split(x, targets, &rows, &features, cfg, criterion) {
            Some(split) if split.gain >= -1e-12 * (1.0 + sum.abs()) => {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf {
                    value: 0.0,
                    samples: 0,
                });
                nodes.push(Node::Leaf {
                    value: 0.0,
                    samples: 0,
                });
                nodes[at] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                    gain: criterion.report_gain(split.gain),
                    samples: m,
                };
                // Right pushed first so the left subtree is grown (and draws randomness) first.
                stack.push((right, split.right, depth + 1));
                stack.push((left, split.left, depth + 1));
            }
            _ => nodes[at] = leaf,
        }
    }
    Tree { nodes }
}

pub(crate) fn grow_config(params: &TreeParams, d: usize) -> GrowConfig {
    GrowConfig {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.count(d),
        features: None,
    }
}

pub fn fit_decision_tree(params: &TreeParams, x: &Matrix, y: &[f64], seed: u64) -> Tree {
    let mut rng = rng_for(seed, Stream::TreeFeatures, 0);
    grow(
        x,
        y,
        (0..x.rows()).collect(),
        &grow_config(params, x.cols()),
        Criterion::Variance,
        &mut rng,
    )
}
