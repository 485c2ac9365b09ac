//! Squared distances between rows of a Gaussian matrix `Y ~ MN(0, K, I_d)`.
//!
//! For rows `i, j` let `k̃ = k_ii + k_jj − 2k_ij`. Each coordinate difference
//! is `N(0, k̃)`, so `d²_ij = k̃·χ²_d`, i.e. `Gamma(shape d/2, scale 2k̃)` with
//! mean `d·k̃` and variance `2d·k̃²`. By Isserlis' theorem two squared
//! distances have covariance `2d·(k_im + k_jn − k_in − k_jm)²`.
//!
//! Only the zero-mean case is implemented; a mean shared by all rows cancels
//! in every difference.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMoments {
    pub mean: f64,
    pub variance: f64,
    pub k_tilde: f64,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
}

fn check_index(k: &DMatrix<f64>, idx: &[usize]) -> Result<()> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch(format!("kernel matrix is {}x{}", k.nrows(), k.ncols())));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= k.nrows()) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range for n={}", k.nrows())));
    }
    Ok(())
}

pub fn distance_moments(k: &DMatrix<f64>, i: usize, j: usize, d: usize) -> Result<DistanceMoments> {
    check_index(k, &[i, j])?;
    if i == j {
        return Err(Error::InvalidArgument("distance moments need i != j".into()));
    }
    // same operation order as `distance_covariance` at (i, j) = (m, n)
    let mut k_tilde = k[(i, i)] + k[(j, j)] - k[(i, j)] - k[(j, i)];
    let scale = k[(i, i)].abs().max(k[(j, j)].abs()).max(1.0);
    if k_tilde < 0.0 {
        if k_tilde < -1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "k_ii + k_jj - 2k_ij = {k_tilde:e} < 0; kernel matrix is not PSD"
            )));
        }
        k_tilde = 0.0;
    }
    let d = d as f64;
    Ok(DistanceMoments {
        mean: d * k_tilde,
        variance: 2.0 * d * k_tilde * k_tilde,
        k_tilde,
        gamma_shape: d / 2.0,
        gamma_scale: 2.0 * k_tilde,
    })
}

/// `2d·(k_im + k_jn − k_in − k_jm)²`.
pub fn distance_covariance(k: &DMatrix<f64>, (i, j): (usize, usize), (m, n): (usize, usize), d: usize) -> Result<f64> {
    check_index(k, &[i, j, m, n])?;
    let c = k[(i, m)] + k[(j, n)] - k[(i, n)] - k[(j, m)];
    Ok(2.0 * d as f64 * c * c)
}

/// Symmetric square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(k)?;
    let mut scaled = eig.vectors.clone();
    for (c, &lambda) in eig.values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scaled.column_mut(c).scale_mut(s);
    }
    Ok(&scaled * eig.vectors.transpose())
}

/// All unordered pairs `(i, j)`, `i < j`, in row-major order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Draws `n_samples` matrices `Y = K^{1/2}·Z` (`Z` standard normal,
/// `n × d`) and returns, per sample, `d²` for every pair of [`pairs`].
pub fn sample_sq_distances(k: &DMatrix<f64>, d: usize, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let root = psd_sqrt(k)?;
    let n = k.nrows();
    let pair_list = pairs(n);
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let z = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let y = &root * z;
        out.push(
            pair_list
                .iter()
                .map(|&(i, j)| (y.row(i) - y.row(j)).norm_squared())
                .collect(),
        );
    }
    Ok(out)
}

/// Worst standardised discrepancies between Monte Carlo estimates and the
/// closed forms, plus Kolmogorov-Smirnov statistics against the Gamma law.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub n_samples: usize,
    pub max_mean_z: f64,
    pub max_variance_z: f64,
    pub max_covariance_z: f64,
    /// Largest `√N·D_N` over all pairs.
    pub max_ks_scaled: f64,
    /// Largest relative error of an empirical mean.
    pub max_mean_rel_err: f64,
    /// Largest relative error of an empirical variance.
    pub max_variance_rel_err: f64,
}

impl McReport {
    pub fn max_z(&self) -> f64 {
        self.max_mean_z.max(self.max_variance_z).max(self.max_covariance_z)
    }
}

/// Asymptotic Kolmogorov critical value `c(α)` for `√N·D_N`.
pub fn ks_critical_value(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// One-sample KS statistic `D_N` of `samples` against `Gamma(shape, scale)`.
pub fn ks_statistic_gamma(samples: &[f64], shape: f64, scale: f64) -> Result<f64> {
    let gamma = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::InvalidArgument(format!("Gamma(shape {shape}, scale {scale}): {e}")))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(r, &x)| {
            let f = gamma.cdf(x);
            (f - r as f64 / n).abs().max(((r + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// Compares sampled squared distances against the closed forms.
pub fn mc_verify_distances(k: &DMatrix<f64>, d: usize, n_samples: usize, seed: u64) -> Result<McReport> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 samples, got {n_samples}")));
    }
    if d < 1 {
        return Err(Error::InvalidArgument("dimension d must be >= 1".into()));
    }
    let n = k.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two rows".into()));
    }
    let pair_list = pairs(n);
    let samples = sample_sq_distances(k, d, n_samples, seed)?;
    let big_n = n_samples as f64;
    let p = pair_list.len();

    let column = |c: usize| samples.iter().map(move |s| s[c]);
    let means: Vec<f64> = (0..p).map(|c| column(c).sum::<f64>() / big_n).collect();
    let centred: Vec<Vec<f64>> = (0..p).map(|c| column(c).map(|v| v - means[c]).collect()).collect();

    let mut report = McReport {
        n_samples,
        max_mean_z: 0.0,
        max_variance_z: 0.0,
        max_covariance_z: 0.0,
        max_ks_scaled: 0.0,
        max_mean_rel_err: 0.0,
        max_variance_rel_err: 0.0,
    };

    for (c, &(i, j)) in pair_list.iter().enumerate() {
        let mom = distance_moments(k, i, j, d)?;
        let var_hat = centred[c].iter().map(|v| v * v).sum::<f64>() / big_n;
        let m4 = centred[c].iter().map(|v| v.powi(4)).sum::<f64>() / big_n;

        report.max_mean_z = report.max_mean_z.max(z_score(means[c] - mom.mean, (var_hat / big_n).sqrt()));
        report.max_variance_z = report
            .max_variance_z
            .max(z_score(var_hat - mom.variance, ((m4 - var_hat * var_hat).max(0.0) / big_n).sqrt()));
        if mom.mean > 0.0 {
            report.max_mean_rel_err = report.max_mean_rel_err.max((means[c] - mom.mean).abs() / mom.mean);
            report.max_variance_rel_err =
                report.max_variance_rel_err.max((var_hat - mom.variance).abs() / mom.variance);
            let col: Vec<f64> = column(c).collect();
            let ks = ks_statistic_gamma(&col, mom.gamma_shape, mom.gamma_scale)?;
            report.max_ks_scaled = report.max_ks_scaled.max(ks * big_n.sqrt());
        }
    }

    for a in 0..p {
        for b in a + 1..p {
            let (u, v) = (&centred[a], &centred[b]);
            let cov_hat = u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / big_n;
            let m22 = u.iter().zip(v).map(|(x, y)| x * x * y * y).sum::<f64>() / big_n;
            let se = ((m22 - cov_hat * cov_hat).max(0.0) / big_n).sqrt();
            let exact = distance_covariance(k, pair_list[a], pair_list[b], d)?;
            report.max_covariance_z = report.max_covariance_z.max(z_score(cov_hat - exact, se));
        }
    }
    Ok(report)
}

/// Ratio of the root-mean-square error of the sample means at `n_small`
/// versus `n_large` samples, pooled over all pairs and `reps` replicates.
/// Under `1/√N` convergence this is close to `√(n_large / n_small)`.
pub fn mc_rate_ratio(k: &DMatrix<f64>, d: usize, n_small: usize, n_large: usize, reps: usize, seed: u64) -> Result<f64> {
    let pair_list = pairs(k.nrows());
    let exact: Vec<f64> = pair_list
        .iter()
        .map(|&(i, j)| distance_moments(k, i, j, d).map(|m| m.mean))
        .collect::<Result<_>>()?;
    let rms = |size: usize, offset: u64| -> Result<f64> {
        let mut acc = 0.0;
        for r in 0..reps {
            let s = sample_sq_distances(k, d, size, seed.wrapping_add(offset + r as u64))?;
            for (c, e) in exact.iter().enumerate() {
                let m = s.iter().map(|row| row[c]).sum::<f64>() / size as f64;
                acc += (m - e).powi(2);
            }
        }
        Ok((acc / (reps * exact.len()) as f64).sqrt())
    };
    Ok(rms(n_small, 0)? / rms(n_large, 1 << 32)?)
}
