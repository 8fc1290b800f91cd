//! k-nearest-neighbour regression under a Minkowski distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::params::{KnnParams, KnnWeights};
use super::LearnerError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub k: usize,
    pub p: f64,
    pub weights: KnnWeights,
}

pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Heap entry ordered by (distance, index); the heap keeps the k smallest.
#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KnnModel {
    /// The k nearest training rows as `(distance, index)`, nearest first;
    /// equal distances are ordered by training index.
    pub fn neighbours(&self, row: &[f64]) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        for (i, train) in self.x.iter_rows().enumerate() {
            let cand = Candidate(minkowski(row, train, self.p), i);
            if heap.len() < self.k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(cand);
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|Candidate(d, i)| (d, i))
            .collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let nn = self.neighbours(row);
        match self.weights {
            KnnWeights::Uniform => nn.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / nn.len() as f64,
            KnnWeights::Distance => {
                let exact: Vec<f64> = nn
                    .iter()
                    .filter(|(d, _)| *d == 0.0)
                    .map(|&(_, i)| self.y[i])
                    .collect();
                if !exact.is_empty() {
                    return exact.iter().sum::<f64>() / exact.len() as f64;
                }
                let (num, den) = nn.iter().fold((0.0, 0.0), |(num, den), &(d, i)| {
                    (num + self.y[i] / d, den + 1.0 / d)
                });
                num / den
            }
        }
    }
}

pub fn fit(params: &KnnParams, x: &Matrix, y: &[f64]) -> Result<KnnModel, LearnerError> {
    if params.n_neighbors > x.rows() {
        return Err(LearnerError::TooFewSamples {
            needed: params.n_neighbors,
            found: x.rows(),
        });
    }
    Ok(KnnModel {
        x: x.clone(),
        y: y.to_vec(),
        k: params.n_neighbors,
        p: params.p,
        weights: params.weights,
    })
}
