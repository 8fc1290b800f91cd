//! Independent reference implementations used by the oracle and acceptance
//! tests. None of these call into the code they check.

#![allow(dead_code)]

use qsat_core::learners::knn::KnnModel;
use qsat_core::learners::params::{KnnParams, KnnWeights, MaxFeatures, TreeParams};
use qsat_core::learners::tree::{fit_decision_tree, Node, Tree};
use qsat_core::learners::{knn, mlp::MlpShape, params::Activation};
use qsat_core::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, integer: bool) -> Matrix {
    let data = (0..n * d)
        .map(|_| {
            if integer {
                f64::from(rng.random_range(0..4u8))
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    Matrix::from_vec(n, d, data).unwrap()
}

// ---------------------------------------------------------------- KNN

fn distance(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// All-pairs KNN: full sort by (distance, index), then the weighting rule
/// (exact matches win outright under distance weighting).
pub fn knn_brute(x: &Matrix, y: &[f64], query: &[f64], k: usize, p: f64, weights: KnnWeights) -> f64 {
    let mut all: Vec<(f64, usize)> = (0..x.rows()).map(|i| (distance(query, x.row(i), p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn = &all[..k];
    match weights {
        KnnWeights::Uniform => nn.iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64,
        KnnWeights::Distance => {
            let zero: Vec<f64> = nn.iter().filter(|e| e.0 == 0.0).map(|&(_, i)| y[i]).collect();
            if !zero.is_empty() {
                return zero.iter().sum::<f64>() / zero.len() as f64;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(d, i) in nn {
                num += y[i] / d;
                den += 1.0 / d;
            }
            num / den
        }
    }
}

/// Runs `count` random KNN instances with n <= 200; returns mismatches.
pub fn knn_oracle_mismatches(count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..count {
        let n = r.random_range(2..=200);
        let d = r.random_range(1..=6);
        let integer = r.random_bool(0.5);
        let x = random_matrix(&mut r, n, d, integer);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..50.0)).collect();
        let k = r.random_range(1..=n.min(15));
        let p = [1.0, 2.0, 3.0][r.random_range(0..3)];
        let weights = if r.random_bool(0.5) { KnnWeights::Uniform } else { KnnWeights::Distance };
        let params = KnnParams {
            n_neighbors: k,
            p,
            weights,
        };
        let model: KnnModel = knn::fit(&params, &x, &y).unwrap();
        let queries = random_matrix(&mut r, 10, d, integer);
        for q in queries.iter_rows() {
            if model.predict_row(q) != knn_brute(&x, &y, q, k, p, weights) {
                bad += 1;
            }
        }
    }
    bad
}

// ---------------------------------------------------------------- ridge

/// One feature with intercept: slope = Sxy / (Sxx + alpha), intercept unpenalised.
pub fn ridge_closed_form(x: &[f64], y: &[f64], alpha: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / (sxx + alpha);
    (slope, my - slope * mx)
}

// ---------------------------------------------------------------- CART

/// Reference tree: each node tries every feature and every midpoint between
/// consecutive distinct values, scoring children by directly computed SSE.
#[derive(Debug)]
pub enum RefNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RefNode>,
        right: Box<RefNode>,
    },
}

fn sse(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|t| (t - m) * (t - m)).sum()
}

pub fn reference_tree(x: &Matrix, y: &[f64], rows: &[usize]) -> RefNode {
    let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let leaf = RefNode::Leaf(targets.iter().sum::<f64>() / targets.len() as f64);
    if rows.len() < 2 || targets.iter().all(|&t| t == targets[0]) {
        return leaf;
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let threshold = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= threshold);
            let cost = sse(&l.iter().map(|&i| y[i]).collect::<Vec<_>>())
                + sse(&r.iter().map(|&i| y[i]).collect::<Vec<_>>());
            if best.is_none_or(|(c, _, _)| cost < c - 1e-9 * (1.0 + c.abs())) {
                best = Some((cost, f, threshold));
            }
        }
    }
    match best {
        None => leaf,
        Some((_, feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, feature) <= threshold);
            RefNode::Split {
                feature,
                threshold,
                left: Box::new(reference_tree(x, y, &l)),
                right: Box::new(reference_tree(x, y, &r)),
            }
        }
    }
}

pub fn same_tree(tree: &Tree, at: usize, reference: &RefNode) -> bool {
    match (&tree.nodes[at], reference) {
        (Node::Leaf { value, .. }, RefNode::Leaf(v)) => (value - v).abs() <= 1e-12 * (1.0 + v.abs()),
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            },
            RefNode::Split {
                feature: f,
                threshold: t,
                left: l,
                right: r,
            },
        ) => feature == f && threshold == t && same_tree(tree, *left, l) && same_tree(tree, *right, r),
        _ => false,
    }
}

/// Random trees with n <= 20, d <= 3; returns the number of differing trees.
pub fn cart_oracle_mismatches(count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let params = TreeParams {
        max_features: MaxFeatures::All,
        ..TreeParams::default()
    };
    (0..count)
        .filter(|_| {
            let n = r.random_range(2..=20);
            let d = r.random_range(1..=3);
            let x = random_matrix(&mut r, n, d, false);
            let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
            let tree = fit_decision_tree(&params, &x, &y, 0);
            let rows: Vec<usize> = (0..n).collect();
            !same_tree(&tree, 0, &reference_tree(&x, &y, &rows))
        })
        .count()
}

// ---------------------------------------------------------------- SVR

/// Minimum of the epsilon-SVR dual
/// `0.5 b'Qb + p'b` s.t. `z'b = 0`, `0 <= b <= C`, by enumerating every
/// assignment of the 2n variables to {0, C, free} and solving the KKT system
/// of the free ones.
pub fn svr_dual_oracle(k: &[f64], y: &[f64], c: f64, eps: f64) -> f64 {
    let n = y.len();
    let l = 2 * n;
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let q = |a: usize, b: usize| z(a) * z(b) * k[(a % n) * n + (b % n)];
    let p: Vec<f64> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();
    let objective = |b: &[f64]| {
        let mut o = 0.0;
        for s in 0..l {
            o += p[s] * b[s];
            for t in 0..l {
                o += 0.5 * b[s] * q(s, t) * b[t];
            }
        }
        o
    };
    let mut best = f64::INFINITY;
    let combos = 3usize.pow(l as u32);
    for code in 0..combos {
        let mut state = vec![0u8; l];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let mut beta: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let free: Vec<usize> = (0..l).filter(|&t| state[t] == 2).collect();
        if !free.is_empty() {
            // Unknowns: beta_free and the multiplier nu.
            let m = free.len() + 1;
            let mut a = vec![0.0; m * m];
            let mut rhs = vec![0.0; m];
            for (r, &s) in free.iter().enumerate() {
                for (cidx, &t) in free.iter().enumerate() {
                    a[r * m + cidx] = q(s, t);
                }
                a[r * m + free.len()] = z(s);
                rhs[r] = -p[s] - (0..l).filter(|t| state[*t] == 1).map(|t| q(s, t) * c).sum::<f64>();
            }
            for (cidx, &t) in free.iter().enumerate() {
                a[free.len() * m + cidx] = z(t);
            }
            rhs[free.len()] = -(0..l).filter(|t| state[*t] == 1).map(|t| z(t) * c).sum::<f64>();
            let Some(sol) = gauss_solve(a, rhs, m) else { continue };
            for (i, &t) in free.iter().enumerate() {
                beta[t] = sol[i];
            }
        }
        let feasible = beta.iter().all(|&b| (-1e-9..=c + 1e-9).contains(&b))
            && (0..l).map(|t| z(t) * beta[t]).sum::<f64>().abs() < 1e-9;
        if feasible {
            best = best.min(objective(&beta));
        }
    }
    best
}

fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        for c in 0..m {
            a.swap(col * m + c, piv * m + c);
        }
        b.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r * m + col] / a[col * m + col];
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..m).map(|i| b[i] / a[i * m + i]).collect())
}

pub fn rbf_gram(x: &Matrix, gamma: f64) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            k[i * n + j] = (-gamma * d2).exp();
        }
    }
    k
}

// ---------------------------------------------------------------- MLP

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over `inits` random initialisations.
pub fn mlp_gradient_error(activation: Activation, inits: u64, h: f64) -> f64 {
    let mut r = rng(99);
    let (n, d, hidden) = (25, 4, 6);
    let x = random_matrix(&mut r, n, d, false);
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let shape = MlpShape {
        inputs: d,
        hidden,
        activation,
    };
    let alpha = 0.01;
    let mut worst: f64 = 0.0;
    for seed in 0..inits {
        let mut theta = shape.init(seed);
        // Glorot init keeps weights small; widen so the activations leave their linear range.
        for t in theta.iter_mut() {
            *t *= 2.0;
        }
        let (_, grad) = shape.loss_grad(&theta, &x, &y, alpha);
        for i in 0..theta.len() {
            let keep = theta[i];
            theta[i] = keep + h;
            let up = shape.loss(&theta, &x, &y, alpha);
            theta[i] = keep - h;
            let down = shape.loss(&theta, &x, &y, alpha);
            theta[i] = keep;
            let fd = (up - down) / (2.0 * h);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}
