//! Numerical property suites. Each suite builds seeded random instances,
//! measures a worst case and compares it against a fixed threshold.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataio::DataMatrix;
use crate::diststats::{distance_moments, ks_critical_value, ks_statistic_gamma, mc_rate_ratio, mc_verify_distances, sample_sq_distances};
use crate::error::{Error, Result};
use crate::graph::{knn_graph, laplacian, NeighborGraph};
use crate::kernels::{double_center, log_ansatz, log_kernel, psd_check, psd_tolerance, sq_distance_matrix, student_t_kernel};
use crate::linalg::{largest_principal_angle, symmetric_eigen};
use crate::objectives::{bernoulli_loglik, cne_objective, epsilon_tilde, negtsne_rescaling_check, spec_param, ObjectiveKind, ObjectiveSpec, Problem};
use crate::optim::{fit, laplacian_eigenmaps, Init, OptimizerConfig};
use crate::rng::{self, Rng64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Bounds,
    Gradients,
    Psd,
    Ansatz,
    Spectral,
    Diststats,
    Rescaling,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Bounds,
        Suite::Gradients,
        Suite::Psd,
        Suite::Ansatz,
        Suite::Spectral,
        Suite::Diststats,
        Suite::Rescaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Gradients => "gradients",
            Suite::Psd => "psd",
            Suite::Ansatz => "ansatz",
            Suite::Spectral => "spectral",
            Suite::Diststats => "diststats",
            Suite::Rescaling => "rescaling",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidArgument(format!("unknown suite '{s}'; valid suites: {}, all", names.join(", ")))
        })
    }
}

/// One measured property. `passed` is `measured <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<4} {:<10} {:<48} measured={:<12.4e} threshold={:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                self.suite.name(),
                c.name,
                c.measured,
                c.threshold
            )?;
        }
        write!(f, "{} suite: {} ({:.2}s)", self.suite, if self.passed() { "PASS" } else { "FAIL" }, self.seconds)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Bounds => bounds_suite(seed)?,
        Suite::Gradients => gradient_suite(seed)?,
        Suite::Psd => psd_suite(seed)?,
        Suite::Ansatz => ansatz_suite(),
        Suite::Spectral => spectral_suite(seed)?,
        Suite::Diststats => diststats_suite(seed)?,
        Suite::Rescaling => rescaling_suite(seed)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn gaussian(r: &mut Rng64, n: usize, q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, q, |_, _| Distribution::<f64>::sample(&StandardNormal, r))
}

/// kNN graph of `n` Gaussian points in 5 dimensions.
fn random_knn_graph(r: &mut Rng64, n: usize, k: usize) -> Result<NeighborGraph> {
    let data = DataMatrix::new(gaussian(r, n, 5), None)?;
    knn_graph(&data, k)
}

/// Random spanning tree plus independent extra edges with probability 0.15.
fn random_connected_graph(r: &mut Rng64, n: usize) -> Result<NeighborGraph> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (r.random_range(0..i), i)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < 0.15 {
                edges.push((i, j));
            }
        }
    }
    NeighborGraph::from_edges(n, 0, edges)
}

const GRID_POINTS: usize = 10_000;

fn bounds_suite(seed: u64) -> Result<Vec<Check>> {
    let grid_violations = (0..GRID_POINTS)
        .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / (GRID_POINTS - 1) as f64))
        .filter(|&x| (1.0 / x).ln_1p() < 1.0 / (1.0 + x))
        .count();

    let mut r = rng::substream(seed, 0);
    let bernoulli_violations = (0..10_000)
        .filter(|_| {
            let eps = 1.0 - r.random::<f64>();
            let p = r.random::<f64>();
            eps * (-p).ln_1p() > (-eps * p).ln_1p()
        })
        .count();

    let mut r = rng::substream(seed, 1);
    let mut chain_violations = 0usize;
    for _ in 0..100 {
        let n = r.random_range(5..=50);
        let k = r.random_range(1..=15.min(n - 1));
        let g = random_knn_graph(&mut r, n, k)?;
        let x = gaussian(&mut r, n, 2) * (0.5 + 2.0 * r.random::<f64>());
        let eps = 0.01 + 0.99 * r.random::<f64>();
        let spec = ObjectiveSpec {
            eps_tilde: eps,
            ..ObjectiveSpec::new(ObjectiveKind::Bernoulli, n)
        };
        let e = cne_objective(&x, &g, &spec)?.value;
        let l = bernoulli_loglik(&x, &g, &spec)?.value;
        let gap = l - (e + g.ordered_edge_count() as f64 * eps.ln());
        // a complete graph has no negative pairs and the bound is an equality
        if gap < -1e-12 * (e.abs() + l.abs()) {
            chain_violations += 1;
        }
    }

    Ok(vec![
        Check::at_most("log(1+1/x) >= 1/(1+x) violations", grid_violations as f64, 0.0),
        Check::at_most("eps*log(1-p) <= log(1-eps*p) violations", bernoulli_violations as f64, 0.0),
        Check::at_most("E + N_pos*log(eps) <= loglik violations", chain_violations as f64, 0.0),
    ])
}

const FD_STEP: f64 = 1e-3;

/// Largest entrywise relative error between the analytic gradient and a
/// five-point central difference, on a random kNN graph with `n` nodes and
/// Gaussian `n × q` coordinates. Relative error uses the denominator
/// `max(|a|, |b|, 1e-8)`.
pub fn grad_check(spec: &ObjectiveSpec, n: usize, q: usize, seed: u64) -> Result<f64> {
    if !(3..=64).contains(&n) || q < 1 {
        return Err(Error::InvalidArgument(format!("grad_check needs 3 <= n <= 64 and q >= 1, got n={n}, q={q}")));
    }
    let mut r = rng::seeded(seed);
    let k = 3.min(n - 1);
    let g = random_knn_graph(&mut r, n, k)?;
    let x = gaussian(&mut r, n, q);
    let problem = Problem::new(spec.clone(), g)?;
    let (_, analytic) = problem.value_and_gradient(&x)?;

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let x0 = x[idx];
        let mut at = |offset: f64| -> Result<f64> {
            xp[idx] = x0 + offset;
            problem.value(&xp)
        };
        let h = FD_STEP;
        let fd = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
        xp[idx] = x0;
        let a = analytic[idx];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

const GRADIENT_TOL: f64 = 1e-5;

fn gradient_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (ki, kind) in ObjectiveKind::ALL.into_iter().enumerate() {
        let mut r = rng::substream(seed, 100 + ki as u64);
        let mut worst: f64 = 0.0;
        for inst in 0..10 {
            let n = r.random_range(4..=16);
            let q = r.random_range(1..=3);
            let mut spec = ObjectiveSpec::new(kind, n);
            if matches!(kind, ObjectiveKind::Cne | ObjectiveKind::Bernoulli) {
                spec.eps_tilde = 0.05 + 0.95 * r.random::<f64>();
            }
            let err = grad_check(&spec, n, q, rng::substream(seed, 1000 * ki as u64 + inst).random())?;
            worst = worst.max(err);
        }
        checks.push(Check::at_most(format!("{kind} max relative FD error"), worst, GRADIENT_TOL));
    }
    Ok(checks)
}

fn psd_suite(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::substream(seed, 2);
    let (mut kernel, mut log_dist, mut log_kern) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..50 {
        let n = r.random_range(5..=40);
        let q = r.random_range(1..=3);
        let x = gaussian(&mut r, n, q) * (0.2 + 3.0 * r.random::<f64>());
        let eps = 0.01 + 0.99 * r.random::<f64>();
        let p = student_t_kernel(&sq_distance_matrix(&x), 1.0)?;

        // worst (−λ_min / tolerance); the matrix passes when this is ≤ 1
        let ratio = |m: &DMatrix<f64>| -> Result<f64> {
            let check = psd_check(m, psd_tolerance(m))?;
            Ok(-check.min_eigenvalue / psd_tolerance(m))
        };
        kernel = kernel.max(ratio(&p.matrix)?);
        let d = p.matrix.map(|v| -v.ln());
        log_dist = log_dist.max(ratio(&-double_center(&d))?);
        let p_log = log_kernel(&p, eps)?;
        log_kern = log_kern.max(ratio(&double_center(&p_log.matrix))?);
    }
    Ok(vec![
        Check::at_most("Student-t kernel: -lambda_min / (1e-8 n max|M|)", kernel, 1.0),
        Check::at_most("-H D H, D = -log P: -lambda_min / tol", log_dist, 1.0),
        Check::at_most("H log(eps P) H: -lambda_min / tol", log_kern, 1.0),
    ])
}

fn ansatz_suite() -> Vec<Check> {
    let mut value_err: f64 = 0.0;
    let mut slope_err: f64 = 0.0;
    for i in 0..20 {
        let eps = 10f64.powf(-3.0 + 3.0 * i as f64 / 19.0);
        value_err = value_err.max((log_ansatz(eps, eps) - eps.ln()).abs());
        let h = 1e-5 * eps;
        let fd = (log_ansatz(eps + h, eps) - log_ansatz(eps - h, eps)) / (2.0 * h);
        slope_err = slope_err.max((fd - 1.0 / eps).abs() * eps);
    }
    vec![
        Check::at_most("value at P = eps, absolute error", value_err, 1e-12),
        Check::at_most("slope at P = eps, relative FD error", slope_err, 1e-6),
    ]
}

fn spectral_suite(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::substream(seed, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = r.random_range(8..=30);
        let g = random_connected_graph(&mut r, n)?;
        let cfg = OptimizerConfig {
            init: Init::Random { scale: 1e-2 },
            seed: r.random(),
            ..OptimizerConfig::default()
        };
        let (fitted, _) = fit(&g, None, ObjectiveSpec::new(ObjectiveKind::WishartLe, n), &cfg, 2)?;
        let l = laplacian(&g);
        // extend the reference through eigenvalues tied with λ_q, where the
        // q-dimensional target is not unique
        let values = symmetric_eigen(l.matrix())?.values;
        let cut = values[2] + 1e-8 * values[2].max(1.0);
        let width = values.iter().skip(1).take_while(|&&v| v <= cut).count();
        let le = laplacian_eigenmaps(&l, width)?;
        let angle = largest_principal_angle(le.coords(), fitted.coords());
        worst = worst.max(angle);
    }
    Ok(vec![Check::at_most("MAP vs eigenmaps largest principal angle, rad", worst, 1e-2)])
}

fn random_psd(r: &mut Rng64, n: usize) -> DMatrix<f64> {
    let rank = r.random_range(1..=n + 2);
    let b = gaussian(r, n, rank);
    b.clone() * b.transpose() / rank as f64
}

fn diststats_suite(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::substream(seed, 4);
    let mut worst_z: f64 = 0.0;
    let mut worst_ks: f64 = 0.0;
    let mut worst_rate: f64 = 0.0;
    for _ in 0..5 {
        let n = r.random_range(3..=8);
        let d = r.random_range(1..=64);
        let k = random_psd(&mut r, n);
        let report = mc_verify_distances(&k, d, 10_000, r.random())?;
        worst_z = worst_z.max(report.max_z());

        // the marginal of one designated pair
        let samples = sample_sq_distances(&k, d, 10_000, r.random())?;
        let first: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let m = distance_moments(&k, 0, 1, d)?;
        let ks = ks_statistic_gamma(&first, m.gamma_shape, m.gamma_scale)? * (first.len() as f64).sqrt();
        worst_ks = worst_ks.max(ks);

        let ratio = mc_rate_ratio(&k, d, 1_000, 16_000, 8, r.random())?;
        // expected √16 = 4; "within a factor 3" means ratio ∈ [4/3, 12]
        worst_rate = worst_rate.max((ratio / 4.0).max(4.0 / ratio));
    }
    Ok(vec![
        Check::at_most("max z (mean, variance, covariance), 1e4 samples", worst_z, 5.0),
        Check::at_most("sqrt(N) * KS distance to Gamma marginal", worst_ks, ks_critical_value(1e-3)),
        Check::at_most("error ratio 1e3 vs 1.6e4 samples / 4, either way", worst_rate, 3.0),
    ])
}

fn rescaling_suite(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::substream(seed, 5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = r.random_range(3..=40);
        let q = r.random_range(1..=3);
        let x = gaussian(&mut r, n, q);
        let mut spec = ObjectiveSpec::new(ObjectiveKind::WishartNegTsne, n);
        spec.s_tilde = 10f64.powf(-2.0 + 3.0 * r.random::<f64>());
        worst = worst.max(negtsne_rescaling_check(&x, &spec)?);
    }
    let exact = |v: f64, want: f64| if v == want { 0.0 } else { (v - want).abs().max(f64::MIN_POSITIVE) };
    Ok(vec![
        Check::at_most("max |M_t(X) - M(sqrt(s) X)|", worst, 1e-10),
        Check::at_most("spec_param(5, 1000) - 0.5", exact(spec_param(5, 1000), 0.5), 0.0),
        Check::at_most("epsilon_tilde(5, 15, 1000) - 0.1", exact(epsilon_tilde(5, 15, 1000), 0.1), 0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        let err = "nope".parse::<Suite>().unwrap_err().to_string();
        assert!(err.contains("bounds") && err.contains("rescaling"));
    }

    #[test]
    fn grad_check_examples() {
        let umap = ObjectiveSpec::new(ObjectiveKind::WishartUmap, 8);
        assert!(grad_check(&umap, 8, 2, 0).unwrap() <= 1e-5);
        let cne = ObjectiveSpec::new(ObjectiveKind::Cne, 10);
        assert!(grad_check(&cne, 10, 2, 1).unwrap() <= 1e-5);
        let negtsne = ObjectiveSpec::new(ObjectiveKind::WishartNegTsne, 8);
        assert!(grad_check(&negtsne, 8, 3, 2).unwrap() <= 1e-5);
    }

    #[test]
    fn report_lines_mark_failures() {
        let report = SuiteReport {
            suite: Suite::Psd,
            checks: vec![Check::at_most("a", 2.0, 1.0), Check::at_most("b", 0.5, 1.0)],
            seconds: 0.0,
        };
        assert!(!report.passed());
        let text = report.to_string();
        assert!(text.lines().next().unwrap().starts_with("FAIL"));
        assert!(text.lines().nth(1).unwrap().starts_with("PASS"));
        assert!(text.ends_with("(0.00s)") && text.contains("psd suite: FAIL"));
    }
}
