//! Embedding quality measures.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::sq_distance_matrix;

pub use crate::linalg::largest_principal_angle;

/// Mean fraction of each point's `k` nearest embedded neighbours (self
/// excluded, ties to the smaller index) that share its label.
pub fn knn_label_agreement(coords: &DMatrix<f64>, labels: &[i64], k: usize) -> Result<f64> {
    let n = coords.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} points", labels.len())));
    }
    if k < 1 || k >= n {
        return Err(Error::InvalidArgument(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    let d2 = sq_distance_matrix(coords);
    let hits: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (d2[(i, j)], j)).collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count()
        })
        .collect();
    Ok(hits.iter().sum::<usize>() as f64 / (n * k) as f64)
}

/// Moving average over full windows: `out[t]` averages `trace[t..t + window]`.
pub fn moving_average(trace: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || trace.len() < window {
        return Vec::new();
    }
    trace.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}
