//! Kernel and centring algebra: Student-t kernels, elementwise logs,
//! double-centring and PSD certification.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `1/(1 + d²)`
    StudentT,
    /// `1/(1 + s·d²)`
    ScaledStudentT(f64),
    /// `log(ε̃·P)`
    LogKernel,
    Centered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: KernelKind,
}

/// The centring projector `H = I − 11ᵀ/n`, applied without materialising it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CenteringMatrix {
    n: usize,
}

impl CenteringMatrix {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `H·M·H`, computed as `M − row means − column means + grand mean`.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!((m.nrows(), m.ncols()), (self.n, self.n), "centring size mismatch");
        let n = self.n as f64;
        let row_means: Vec<f64> = m.row_iter().map(|r| r.sum() / n).collect();
        let col_means: Vec<f64> = m.column_iter().map(|c| c.sum() / n).collect();
        let grand = row_means.iter().sum::<f64>() / n;
        DMatrix::from_fn(self.n, self.n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
    }

    /// `H·v` for each column of `m` (column centring).
    pub fn apply_left(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        crate::linalg::center_columns(&mut out);
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(u8::from(i == j)) - 1.0 / n)
    }
}

/// Pairwise squared Euclidean distances between rows of `x`.
///
/// Differences are accumulated per pair rather than through the Gram
/// expansion, so the result is symmetric, non-negative and exactly zero for
/// identical rows.
pub fn sq_distance_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect();
    let mut d2 = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    d2
}

/// Entrywise `1/(1 + s·d²)`; `s = 1` gives the plain Student-t kernel.
pub fn student_t_kernel(d2: &DMatrix<f64>, s: f64) -> Result<KernelMatrix> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("kernel scale must be > 0, got {s}")));
    }
    let matrix = d2.map(|v| 1.0 / (1.0 + s * v));
    let kind = if s == 1.0 {
        KernelKind::StudentT
    } else {
        KernelKind::ScaledStudentT(s)
    };
    Ok(KernelMatrix { matrix, kind })
}

/// Entrywise `log(ε̃·P)`.
pub fn log_kernel(p: &KernelMatrix, eps_tilde: f64) -> Result<KernelMatrix> {
    if !(eps_tilde > 0.0 && eps_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps_tilde must be > 0, got {eps_tilde}")));
    }
    if let Some(bad) = p.matrix.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("log kernel needs positive entries, found {bad}")));
    }
    Ok(KernelMatrix {
        matrix: p.matrix.map(|v| (eps_tilde * v).ln()),
        kind: KernelKind::LogKernel,
    })
}

pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    CenteringMatrix::new(m.nrows()).apply(m)
}

/// First-order-matched surrogate for `log P` around `P = ε̃`:
/// `P/(2ε̃) − ε̃/(2P) + log ε̃`.
pub fn log_ansatz(p: f64, eps_tilde: f64) -> f64 {
    p / (2.0 * eps_tilde) - eps_tilde / (2.0 * p) + eps_tilde.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// Default tolerance `1e-8·n·max|M|`.
pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-8 * m.nrows() as f64 * m.amax()
}

pub fn psd_check(m: &DMatrix<f64>, tol: f64) -> Result<PsdCheck> {
    let min_eigenvalue = min_eigenvalue(m)?;
    Ok(PsdCheck {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, q: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn distances_by_hand() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
        let d2 = sq_distance_matrix(&x);
        assert_eq!(d2, DMatrix::from_row_slice(3, 3, &[0., 1., 9., 1., 0., 4., 9., 4., 0.]));
        let dup = DMatrix::from_row_slice(2, 2, &[0.3, 1.7, 0.3, 1.7]);
        assert_eq!(sq_distance_matrix(&dup)[(0, 1)], 0.0);
    }

    #[test]
    fn distances_match_naive_loop() {
        let x = random(5, 2, 3);
        let d2 = sq_distance_matrix(&x);
        for i in 0..5 {
            for j in 0..5 {
                let naive = (x.row(i) - x.row(j)).norm_squared();
                assert!((d2[(i, j)] - naive).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn student_t_values() {
        let d2 = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 3.0, 4.0]);
        let p = student_t_kernel(&d2, 1.0).unwrap();
        assert_eq!(p.kind, KernelKind::StudentT);
        assert_eq!(p.matrix[(0, 0)], 1.0);
        assert_eq!(p.matrix[(0, 1)], 0.5);
        assert_eq!(p.matrix[(0, 2)], 0.25);
        let p = student_t_kernel(&d2, 0.5).unwrap();
        assert!((p.matrix[(0, 3)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(student_t_kernel(&d2, 0.0).is_err());
    }

    #[test]
    fn student_t_is_psd() {
        for seed in 0..5 {
            let p = student_t_kernel(&sq_distance_matrix(&random(12, 2, seed)), 1.0).unwrap();
            assert!(psd_check(&p.matrix, 1e-8).unwrap().is_psd);
        }
    }

    #[test]
    fn log_kernel_values_and_centered_psd() {
        let one = KernelMatrix { matrix: DMatrix::from_element(1, 1, 1.0), kind: KernelKind::StudentT };
        assert!((log_kernel(&one, 0.1).unwrap().matrix[(0, 0)] - 0.1f64.ln()).abs() < 1e-15);
        let half = KernelMatrix { matrix: DMatrix::from_element(1, 1, 0.5), kind: KernelKind::StudentT };
        assert!((log_kernel(&half, 1.0).unwrap().matrix[(0, 0)] + 2f64.ln()).abs() < 1e-15);
        let zero = KernelMatrix { matrix: DMatrix::zeros(1, 1), kind: KernelKind::StudentT };
        assert!(log_kernel(&zero, 1.0).is_err());

        for seed in 0..5 {
            let p = student_t_kernel(&sq_distance_matrix(&random(10, 3, seed)), 1.0).unwrap();
            let lp = log_kernel(&p, 0.2).unwrap();
            // −H(−P')H
            let c = double_center(&lp.matrix);
            assert!(psd_check(&c, psd_tolerance(&c)).unwrap().is_psd);
        }
    }

    #[test]
    fn double_center_examples() {
        let h = double_center(&DMatrix::identity(2, 2));
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        assert_eq!(double_center(&DMatrix::from_element(4, 4, 1.0)), DMatrix::zeros(4, 4));

        let a = random(6, 6, 9);
        let m = &a + a.transpose();
        let c = double_center(&m);
        let expected = m.trace() - m.sum() / 6.0;
        assert!((c.trace() - expected).abs() < 1e-10);
        for i in 0..6 {
            assert!(c.row(i).sum().abs() < 1e-10 && c.column(i).sum().abs() < 1e-10);
        }
        let explicit = CenteringMatrix::new(6).to_matrix();
        assert!((&explicit * &m * &explicit - c).amax() < 1e-12);
    }

    #[test]
    fn centering_operator_properties() {
        let h = CenteringMatrix::new(7).to_matrix();
        assert!((&h * DMatrix::from_element(7, 1, 1.0)).amax() < 1e-15);
        assert!((&h * &h - &h).amax() < 1e-12);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn ansatz_examples() {
        assert!((log_ansatz(0.1, 0.1) - 0.1f64.ln()).abs() < 1e-15);
        assert!((log_ansatz(0.2, 0.1) - (0.75 + 0.1f64.ln())).abs() < 1e-14);
        let h = 1e-7;
        let fd = (log_ansatz(0.1 + h, 0.1) - log_ansatz(0.1 - h, 0.1)) / (2.0 * h);
        assert!((fd - 10.0).abs() / 10.0 < 1e-6);
    }

    #[test]
    fn psd_check_examples() {
        let c = psd_check(&DMatrix::identity(3, 3), 0.0).unwrap();
        assert!(c.is_psd && (c.min_eigenvalue - 1.0).abs() < 1e-12);
        let c = psd_check(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0])), 1e-8).unwrap();
        assert!(!c.is_psd && (c.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_log_distance_is_psd_after_centering() {
        for seed in 0..5 {
            let p = student_t_kernel(&sq_distance_matrix(&random(15, 2, 100 + seed)), 1.0).unwrap();
            let d = p.matrix.map(|v| -v.ln());
            let m = -double_center(&d);
            assert!(psd_check(&m, psd_tolerance(&m)).unwrap().is_psd);
        }
    }

    #[test]
    fn scaled_kernel_equals_rescaled_latents() {
        let x = random(8, 2, 4);
        let s: f64 = 0.37;
        let pt = student_t_kernel(&sq_distance_matrix(&x), s).unwrap();
        let pu = student_t_kernel(&sq_distance_matrix(&(&x * s.sqrt())), 1.0).unwrap();
        assert!((pt.matrix - pu.matrix).amax() < 1e-15);
    }
}
