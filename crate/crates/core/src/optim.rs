//! Fitting embeddings: full-batch Adam ascent with linear learning-rate
//! decay, initialisation strategies, and the closed-form spectral (Laplacian
//! Eigenmaps) and PCA baselines.

use std::time::Instant;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::dataio::{DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::graph::{knn_graph, laplacian, GraphLaplacian, NeighborGraph};
use crate::linalg::{center_columns, fix_column_signs, symmetric_eigen};
use crate::objectives::{ObjectiveSpec, Problem};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    Linear,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Projection on the leading principal directions, times `scale`.
    Pca { scale: f64 },
    /// Low-frequency Laplacian eigenvectors scaled to unit column variance.
    Spectral,
    /// `N(0, scale²)` entries.
    Random { scale: f64 },
}

pub const DEFAULT_RANDOM_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub decay: Decay,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init: Init,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr0: 1.0,
            epochs: 200,
            decay: Decay::Linear,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init: Init::Spectral,
        }
    }
}

impl OptimizerConfig {
    /// `lr0·(1 − epoch/epochs)` under linear decay.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match self.decay {
            Decay::Linear => self.lr0 * (1.0 - epoch as f64 / self.epochs as f64),
            Decay::None => self.lr0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("Adam eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Objective at the start of each epoch, before its update.
    pub objective_trace: Vec<f64>,
    /// Learning rate used in each epoch.
    pub lr_trace: Vec<f64>,
    /// Objective after the last update.
    pub final_value: f64,
    pub wall_time: f64,
    pub config_echo: OptimizerConfig,
}

impl FitReport {
    /// `epoch,objective,lr` lines with a header.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("epoch,objective,lr\n");
        for (e, (v, lr)) in self.objective_trace.iter().zip(&self.lr_trace).enumerate() {
            s.push_str(&format!("{e},{v},{lr}\n"));
        }
        s
    }
}

/// Columns are eigenvectors of the `q` smallest non-zero eigenvalues of a
/// raw Laplacian; one null vector per connected component is skipped.
pub fn laplacian_eigenmaps(l: &GraphLaplacian, q: usize) -> Result<Embedding> {
    let n = l.n();
    let components = component_count(l.matrix());
    if q < 1 || q > n - components {
        return Err(Error::InvalidArgument(format!(
            "q={q} needs 1 <= q <= n - components = {}",
            n - components
        )));
    }
    let eig = symmetric_eigen(l.matrix())?;
    let mut coords = eig.vectors.columns(components, q).into_owned();
    fix_column_signs(&mut coords);
    Embedding::new(coords)
}

fn component_count(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let edges = (0..n).flat_map(|i| (i + 1..n).filter(move |&j| m[(i, j)] != 0.0).map(move |j| (i, j)));
    NeighborGraph::from_edges(n, 0, edges)
        .map(|g| g.component_count())
        .unwrap_or(1)
}

/// Laplacian eigenvectors orthogonal to the constant vector. On a connected
/// graph this is exactly [`laplacian_eigenmaps`]; on a disconnected graph the
/// centred component indicators come first, so components separate.
/// Columns are rescaled to unit variance.
pub fn spectral_init(l: &GraphLaplacian, q: usize) -> Result<DMatrix<f64>> {
    let n = l.n();
    if q < 1 || q >= n {
        return Err(Error::InvalidArgument(format!("spectral init needs 1 <= q < n, got q={q}, n={n}")));
    }
    let components = component_count(l.matrix());
    let mut coords = if components == 1 {
        laplacian_eigenmaps(l, q)?.into_coords()
    } else {
        // push the constant vector to the top of the spectrum
        let shift = l.matrix().trace() + 1.0;
        let shifted = l.matrix().add_scalar(shift / n as f64);
        let eig = symmetric_eigen(&shifted)?;
        let mut c = eig.vectors.columns(0, q).into_owned();
        fix_column_signs(&mut c);
        c
    };
    center_columns(&mut coords);
    for mut col in coords.column_iter_mut() {
        let sd = (col.norm_squared() / n as f64).sqrt();
        if sd > 0.0 {
            col.unscale_mut(sd);
        }
    }
    Ok(coords)
}

/// Centred data projected on the top-`q` principal directions, times `scale`.
pub fn pca_init(data: &DataMatrix, q: usize, scale: f64) -> Result<Embedding> {
    let (n, d) = (data.n(), data.d());
    if q < 1 || q > n.min(d) {
        return Err(Error::InvalidArgument(format!("PCA needs 1 <= q <= min(n, d) = {}, got {q}", n.min(d))));
    }
    let mut centred = data.values().clone();
    center_columns(&mut centred);
    let scatter = centred.transpose() * &centred;
    let eig = symmetric_eigen(&scatter)?;
    let top = DMatrix::from_fn(d, q, |i, j| eig.vectors[(i, d - 1 - j)]);
    let mut coords = centred * top;
    fix_column_signs(&mut coords);
    Embedding::new(coords * scale)
}

pub fn random_init(n: usize, q: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    DMatrix::from_fn(n, q, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, &mut r))
}

/// Starting coordinates for `fit`, column-centred.
pub fn initialize(
    init: Init,
    graph: &NeighborGraph,
    data: Option<&DataMatrix>,
    q: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut x = match init {
        Init::Pca { scale } => {
            let data = data.ok_or_else(|| Error::InvalidArgument("PCA initialisation needs the data matrix".into()))?;
            pca_init(data, q, scale)?.into_coords()
        }
        Init::Spectral => spectral_init(&laplacian(graph), q)?,
        Init::Random { scale } => random_init(graph.n(), q, scale, seed),
    };
    center_columns(&mut x);
    Ok(x)
}

/// Builds the exact kNN graph of `data` and fits on it.
pub fn fit_data(
    data: &DataMatrix,
    k: usize,
    spec: ObjectiveSpec,
    cfg: &OptimizerConfig,
    q: usize,
) -> Result<(Embedding, FitReport)> {
    let graph = knn_graph(data, k)?;
    fit(&graph, Some(data), spec, cfg, q)
}

/// Initialises per `cfg.init` and maximises the objective.
pub fn fit(
    graph: &NeighborGraph,
    data: Option<&DataMatrix>,
    spec: ObjectiveSpec,
    cfg: &OptimizerConfig,
    q: usize,
) -> Result<(Embedding, FitReport)> {
    if q < 1 {
        return Err(Error::InvalidArgument("q must be >= 1".into()));
    }
    let problem = Problem::new(spec, graph.clone())?;
    let x0 = initialize(cfg.init, graph, data, q, cfg.seed)?;
    run(&problem, x0, cfg)
}

/// Full-batch Adam ascent from `x0`. For the Wishart kinds the columns of
/// `X` are re-centred after every step: the constant direction carries no
/// Laplacian penalty, so `log|M|` would otherwise grow along it without bound.
pub fn run(problem: &Problem, x0: DMatrix<f64>, cfg: &OptimizerConfig) -> Result<(Embedding, FitReport)> {
    cfg.validate()?;
    if x0.nrows() != problem.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial X has {} rows, graph has {} nodes",
            x0.nrows(),
            problem.n()
        )));
    }
    let start = Instant::now();
    let recentre = problem.spec().kind.is_wishart();
    let mut x = x0;
    let mut m = DMatrix::<f64>::zeros(x.nrows(), x.ncols());
    let mut v = DMatrix::<f64>::zeros(x.nrows(), x.ncols());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut lrs = Vec::with_capacity(cfg.epochs);
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);

    for epoch in 0..cfg.epochs {
        let (value, grad) = problem.value_and_gradient(&x)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                last_finite: Box::new(x),
            });
        }
        let lr = cfg.learning_rate(epoch);
        trace.push(value);
        lrs.push(lr);

        let t = (epoch + 1) as i32;
        let step = lr / (1.0 - b1.powi(t));
        let bias2 = (1.0 - b2.powi(t)).sqrt();
        let previous = x.clone();
        for ((xi, mi), (vi, gi)) in x.iter_mut().zip(m.iter_mut()).zip(v.iter_mut().zip(grad.iter())) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *xi += step * *mi / (vi.sqrt() / bias2 + cfg.adam_eps);
        }
        if recentre {
            center_columns(&mut x);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                last_finite: Box::new(previous),
            });
        }
    }

    let final_value = problem.value(&x)?;
    if !final_value.is_finite() {
        return Err(Error::NonFinite {
            epoch: cfg.epochs,
            last_finite: Box::new(x),
        });
    }
    let report = FitReport {
        objective_trace: trace,
        lr_trace: lrs,
        final_value,
        wall_time: start.elapsed().as_secs_f64(),
        config_echo: cfg.clone(),
    };
    Ok((Embedding::new(x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, LaplacianVariant};

    fn path3() -> GraphLaplacian {
        laplacian(&NeighborGraph::from_edges(3, 0, [(0, 1), (1, 2)]).unwrap())
    }

    #[test]
    fn linear_decay_midpoint() {
        let cfg = OptimizerConfig::default();
        assert_eq!(cfg.learning_rate(0), 1.0);
        assert_eq!(cfg.learning_rate(100), 0.5);
        assert!(cfg.learning_rate(199) > 0.0);
    }

    #[test]
    fn eigenmaps_on_path() {
        let e = laplacian_eigenmaps(&path3(), 1).unwrap();
        let s = 0.5f64.sqrt();
        let expected = [s, 0.0, -s];
        for (a, b) in e.coords().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", e.coords());
        }
    }

    #[test]
    fn eigenmaps_skip_every_component_null_vector() {
        // two disjoint edges: spectrum {0, 0, 2, 2}
        let g = NeighborGraph::from_edges(4, 0, [(0, 1), (2, 3)]).unwrap();
        let e = laplacian_eigenmaps(&laplacian(&g), 1).unwrap();
        let v = e.coords().column(0);
        let rayleigh = (v.transpose() * laplacian(&g).matrix() * v)[(0, 0)];
        assert!((rayleigh - 2.0).abs() < 1e-10);
        assert!(laplacian_eigenmaps(&laplacian(&g), 3).is_err());
    }

    #[test]
    fn eigenmaps_on_triangle_span_the_degenerate_eigenspace() {
        let g = NeighborGraph::from_edges(3, 0, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let e = laplacian_eigenmaps(&laplacian(&g), 2).unwrap();
        let v = e.coords();
        // spectrum {0, 3, 3}: the projector onto the λ=3 eigenspace is H
        let projector = v * v.transpose();
        let h = crate::kernels::CenteringMatrix::new(3).to_matrix();
        assert!((projector - h).amax() < 1e-12);
    }

    #[test]
    fn spectral_init_separates_components() {
        let g = NeighborGraph::from_edges(6, 0, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let x = spectral_init(&laplacian(&g), 1).unwrap();
        let c = x.column(0);
        assert!((c[0] - c[2]).abs() < 1e-9 && (c[3] - c[5]).abs() < 1e-9);
        assert!((c[0] - c[3]).abs() > 1.0);
        assert!((c.norm_squared() / 6.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_is_a_rotation_of_centred_2d_data() {
        let raw = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, -0.3, 0.2, 0.7, -1.1, -0.9, 0.1, -0.5, 0.3]);
        let mut centred = raw.clone();
        center_columns(&mut centred);
        let data = DataMatrix::new(centred.clone(), None).unwrap();
        let e = pca_init(&data, 2, 1.0).unwrap();
        let gram_in = &centred * centred.transpose();
        let gram_out = e.coords() * e.coords().transpose();
        assert!((gram_in - gram_out).amax() < 1e-8);
        let var = |j: usize| e.coords().column(j).norm_squared();
        assert!(var(0) >= var(1));

        let zero = pca_init(&data, 2, 0.0).unwrap();
        assert!(zero.coords().iter().all(|&v| v == 0.0));
        assert!(pca_init(&data, 3, 1.0).is_err());
    }

    #[test]
    fn wrong_variant_for_eigenmaps_input_is_still_a_matrix() {
        let l = GraphLaplacian::from_matrix(path3().matrix().clone(), LaplacianVariant::Raw).unwrap();
        assert!(laplacian_eigenmaps(&l, 2).is_ok());
        assert!(laplacian_eigenmaps(&l, 3).is_err());
    }
}
