use rand::seq::SliceRandom;

use super::metrics::{compute_metrics, MetricUnit};
use super::EvalError;
use crate::learners::RegressorModel;
use crate::matrix::Matrix;
use crate::rng::{rng_for, Stream};

/// Total split gain per feature over every tree, normalised to sum to 1.
/// All zeros when the model never splits.
pub fn impurity_importance(model: &RegressorModel) -> Result<Vec<f64>, EvalError> {
    let mut gains = vec![0.0; model.feature_count];
    for tree in model.trees()? {
        tree.accumulate_gains(&mut gains);
    }
    let total: f64 = gains.iter().sum();
    if total > 0.0 {
        gains.iter_mut().for_each(|g| *g /= total);
    }
    Ok(gains)
}

/// Mean increase in log-space MAE when one column is shuffled. Column `j`,
/// repeat `r` draws from its own stream, so results do not depend on the
/// order columns are visited in.
pub fn permutation_importance(
    model: &RegressorModel,
    x: &Matrix,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, EvalError> {
    if repeats == 0 {
        return Err(EvalError::Repeats);
    }
    let baseline = compute_metrics(y, &model.predict(x)?, MetricUnit::LogSpace)?.mae;
    let mut out = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let original = x.col_values(j);
        let mut total = 0.0;
        for r in 0..repeats {
            let mut column = original.clone();
            column.shuffle(&mut rng_for(seed, Stream::Permutation, (j * repeats + r) as u64));
            let mut shuffled = x.clone();
            for (i, v) in column.into_iter().enumerate() {
                shuffled.set(i, j, v);
            }
            let mae = compute_metrics(y, &model.predict(&shuffled)?, MetricUnit::LogSpace)?.mae;
            total += mae - baseline;
        }
        out.push(total / repeats as f64);
    }
    Ok(out)
}

/// Clamps negatives to zero and scales to unit sum; all zeros if nothing is
/// positive.
pub fn normalise(values: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter().map(|v| v / total).collect()
    } else {
        clipped
    }
}

/// Sums the `design_*` one-hot columns into a single `design` entry,
/// placed first.
pub fn group_design(names: &[String], values: &[f64]) -> Vec<(String, f64)> {
    let mut design = 0.0;
    let mut rest = Vec::new();
    for (n, v) in names.iter().zip(values) {
        if n.starts_with("design_") {
            design += v;
        } else {
            rest.push((n.clone(), *v));
        }
    }
    let mut out = vec![("design".to_string(), design)];
    out.extend(rest);
    out
}
