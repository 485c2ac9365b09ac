//! Objective values and analytic gradients with respect to the latent
//! coordinates `X` (`n × q`).
//!
//! Two families are implemented:
//!
//! * pairwise objectives over the binary kNN adjacency (`cne`, `bernoulli`),
//!   summed over ordered pairs `i ≠ j`;
//! * Wishart log-likelihoods of a Laplacian-like statistic `L_eff` with scale
//!   matrix `M(X)⁻¹`, i.e. `−½·tr(L_eff·M) + (ν/2)·log|M|`, where
//!   `M = ridge·I + w·H·K(X)·H + g·X·Xᵀ` and `K` is a Student-t kernel.
//!
//! Every gradient is derived by hand; `crate::verify::grad_check` compares
//! them against finite differences.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{center_laplacian, laplacian, GraphLaplacian, LaplacianVariant, NeighborGraph};
use crate::kernels::{double_center, sq_distance_matrix};
use crate::linalg::{symmetrize, SpdFactor};

/// Squared distances are floored here before logs and divisions.
pub const MIN_SQ_DIST: f64 = 1e-12;

pub const DEFAULT_N_NEG: usize = 5;
pub const DEFAULT_N_NEIGH: usize = 15;
pub const DEFAULT_BETA: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    Cne,
    Bernoulli,
    WishartUmap,
    WishartLe,
    WishartNegTsne,
    WishartUnified,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Cne,
        ObjectiveKind::Bernoulli,
        ObjectiveKind::WishartUmap,
        ObjectiveKind::WishartLe,
        ObjectiveKind::WishartNegTsne,
        ObjectiveKind::WishartUnified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Cne => "cne",
            ObjectiveKind::Bernoulli => "bernoulli",
            ObjectiveKind::WishartUmap => "wishart-umap",
            ObjectiveKind::WishartLe => "wishart-le",
            ObjectiveKind::WishartNegTsne => "wishart-negtsne",
            ObjectiveKind::WishartUnified => "unified",
        }
    }

    pub fn is_wishart(self) -> bool {
        !matches!(self, ObjectiveKind::Cne | ObjectiveKind::Bernoulli)
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join("|")
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "cne" => Ok(ObjectiveKind::Cne),
            "bernoulli" => Ok(ObjectiveKind::Bernoulli),
            "wishart-umap" => Ok(ObjectiveKind::WishartUmap),
            "wishart-le" => Ok(ObjectiveKind::WishartLe),
            "wishart-negtsne" => Ok(ObjectiveKind::WishartNegTsne),
            "unified" | "wishart-unified" => Ok(ObjectiveKind::WishartUnified),
            _ => Err(Error::InvalidArgument(format!(
                "unknown objective {s:?}; valid kinds: {}",
                ObjectiveKind::valid_names()
            ))),
        }
    }
}

/// `4·n_neg·n_neigh / (3n)`, the weight on non-adjacent pairs.
pub fn epsilon_tilde(n_neg: usize, n_neigh: usize, n: usize) -> f64 {
    (4 * n_neg * n_neigh) as f64 / (3 * n) as f64
}

/// `100·n_neg / n`, the distance scale of the neg-t-SNE kernel.
pub fn spec_param(n_neg: usize, n: usize) -> f64 {
    (100 * n_neg) as f64 / n as f64
}

/// Which objective to evaluate, with every scalar hyperparameter resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub n_neg: usize,
    pub n_neigh: usize,
    pub eps_tilde: f64,
    pub s_tilde: f64,
    /// Wishart degrees of freedom.
    pub nu: f64,
    /// Kernel weight of the unified model.
    pub alpha: f64,
    /// Ridge of the unified model.
    pub gamma: f64,
    /// Ridge of the Laplacian-Eigenmaps model.
    pub beta: f64,
}

impl ObjectiveSpec {
    /// Defaults for an `n`-point problem: `n_neg = 5`, `n_neigh = 15`,
    /// derived `ε̃` and `s̃`, `ν = n`, `β = 1e-2`. The unified model
    /// defaults to `α = 0.5`, `γ = 0.5/ε̃`, which reproduces the UMAP scale
    /// matrix.
    pub fn new(kind: ObjectiveKind, n: usize) -> Self {
        Self::with_counts(kind, n, DEFAULT_N_NEG, DEFAULT_N_NEIGH)
    }

    pub fn with_counts(kind: ObjectiveKind, n: usize, n_neg: usize, n_neigh: usize) -> Self {
        let eps_tilde = epsilon_tilde(n_neg, n_neigh, n.max(1));
        Self {
            kind,
            n_neg,
            n_neigh,
            eps_tilde,
            s_tilde: spec_param(n_neg, n.max(1)),
            nu: n as f64,
            alpha: 0.5,
            gamma: 0.5 / eps_tilde,
            beta: DEFAULT_BETA,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be a positive finite number, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")))
            }
        };
        match self.kind {
            ObjectiveKind::Cne => positive("eps_tilde", self.eps_tilde),
            ObjectiveKind::Bernoulli => {
                positive("eps_tilde", self.eps_tilde)?;
                if self.eps_tilde > 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "Bernoulli model needs eps_tilde <= 1, got {} (n={n})",
                        self.eps_tilde
                    )));
                }
                Ok(())
            }
            ObjectiveKind::WishartUmap => {
                positive("eps_tilde", self.eps_tilde)?;
                positive("nu", self.nu)
            }
            ObjectiveKind::WishartNegTsne => {
                positive("eps_tilde", self.eps_tilde)?;
                positive("s_tilde", self.s_tilde)?;
                positive("nu", self.nu)
            }
            ObjectiveKind::WishartLe => {
                nonneg("beta", self.beta)?;
                positive("nu", self.nu)
            }
            ObjectiveKind::WishartUnified => {
                nonneg("alpha", self.alpha)?;
                nonneg("gamma", self.gamma)?;
                positive("nu", self.nu)
            }
        }
    }

    /// True when `ν < n`, where the standard Wishart density is improper.
    /// The MAP objective only uses X-dependent terms, so this is a warning.
    pub fn nu_below_n(&self, n: usize) -> bool {
        self.kind.is_wishart() && self.nu < n as f64
    }

    /// Structure of the scale matrix `M(X)` for the Wishart kinds.
    pub fn scale_model(&self) -> Option<ScaleModel> {
        match self.kind {
            ObjectiveKind::Cne | ObjectiveKind::Bernoulli => None,
            ObjectiveKind::WishartUmap => Some(ScaleModel {
                ridge: 0.5 / self.eps_tilde,
                kernel_weight: 0.5,
                kernel_scale: 1.0,
                gram_weight: 1.0,
            }),
            ObjectiveKind::WishartNegTsne => Some(ScaleModel {
                ridge: 0.5 / self.eps_tilde,
                kernel_weight: 0.5,
                kernel_scale: self.s_tilde,
                gram_weight: self.s_tilde,
            }),
            ObjectiveKind::WishartLe => Some(ScaleModel {
                ridge: self.beta,
                kernel_weight: 0.0,
                kernel_scale: 1.0,
                gram_weight: 1.0,
            }),
            ObjectiveKind::WishartUnified => Some(ScaleModel {
                ridge: self.gamma,
                kernel_weight: self.alpha,
                kernel_scale: 1.0,
                gram_weight: 1.0,
            }),
        }
    }
}

/// `M(X) = ridge·I + kernel_weight·H·K(X)·H + gram_weight·X·Xᵀ` with
/// `K_ij = 1/(1 + kernel_scale·d²_ij)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleModel {
    pub ridge: f64,
    pub kernel_weight: f64,
    pub kernel_scale: f64,
    pub gram_weight: f64,
}

impl ScaleModel {
    pub fn matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut m = x * x.transpose() * self.gram_weight;
        if self.kernel_weight != 0.0 {
            let s = self.kernel_scale;
            let p = sq_distance_matrix(x).map(|v| 1.0 / (1.0 + s * v));
            m += double_center(&p) * self.kernel_weight;
        }
        for i in 0..n {
            m[(i, i)] += self.ridge;
        }
        symmetrize(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub gradient: Option<DMatrix<f64>>,
}

/// `∇_X` of a function of the pairwise squared distances, given
/// `W_ij = ∂f/∂d²_ij` (symmetric, one entry per unordered pair mirrored):
/// `∇x_i = 2·Σ_j W_ij (x_i − x_j)`.
pub(crate) fn sq_dist_backward(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut lap = -w.clone();
    for i in 0..n {
        lap[(i, i)] = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
    }
    lap * x * 2.0
}

/// Per-pair term of a pairwise objective: value and derivative in `d²`.
type PairTerm<'a> = &'a (dyn Fn(f64) -> (f64, f64) + Sync);

/// `Σ_{i≠j} [A_ij·pos(d²_ij) + (1 − A_ij)·neg(d²_ij)]` with gradient.
fn pairwise_objective(
    x: &DMatrix<f64>,
    g: &NeighborGraph,
    pos: PairTerm<'_>,
    neg: PairTerm<'_>,
    with_gradient: bool,
) -> Result<ObjectiveValue> {
    let n = x.nrows();
    if g.n() != n {
        return Err(Error::DimensionMismatch(format!("graph has {} nodes, X has {n} rows", g.n())));
    }
    let d2 = sq_distance_matrix(x);
    let clamp = |v: f64| if v < MIN_SQ_DIST { (MIN_SQ_DIST, true) } else { (v, false) };

    // one row of the upper triangle per task; ordered pairs counted twice
    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mut dw = Vec::with_capacity(n - i - 1);
            for j in i + 1..n {
                let (v, clamped) = clamp(d2[(i, j)]);
                let (f, df) = if g.contains(i, j) { pos(v) } else { neg(v) };
                acc += 2.0 * f;
                dw.push(if clamped { 0.0 } else { 2.0 * df });
            }
            (acc, dw)
        })
        .collect();

    let value: f64 = rows.iter().map(|r| r.0).sum();
    let gradient = with_gradient.then(|| {
        let mut w = DMatrix::zeros(n, n);
        for (i, (_, dw)) in rows.iter().enumerate() {
            for (off, &v) in dw.iter().enumerate() {
                let j = i + 1 + off;
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        sq_dist_backward(x, &w)
    });
    Ok(ObjectiveValue { value, gradient })
}

/// Contrastive (negative-sampling) energy
/// `Σ A·log(1/(1+d²)) + ε̃·Σ (1−A)·log(1 − 1/(1+d²))`.
pub fn cne_objective(x: &DMatrix<f64>, g: &NeighborGraph, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    cne_impl(x, g, spec, true)
}

fn cne_impl(x: &DMatrix<f64>, g: &NeighborGraph, spec: &ObjectiveSpec, with_gradient: bool) -> Result<ObjectiveValue> {
    let eps = spec.eps_tilde;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("CNE objective needs eps_tilde > 0, got {eps}")));
    }
    let pos = |d2: f64| (-d2.ln_1p(), -1.0 / (1.0 + d2));
    let neg = move |d2: f64| (-eps * (1.0 / d2).ln_1p(), eps / (d2 * (1.0 + d2)));
    pairwise_objective(x, g, &pos, &neg, with_gradient)
}

/// Bernoulli log-likelihood with adjacency probability `ε̃/(1+d²)`.
pub fn bernoulli_loglik(x: &DMatrix<f64>, g: &NeighborGraph, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    bernoulli_impl(x, g, spec, true)
}

fn bernoulli_impl(
    x: &DMatrix<f64>,
    g: &NeighborGraph,
    spec: &ObjectiveSpec,
    with_gradient: bool,
) -> Result<ObjectiveValue> {
    let eps = spec.eps_tilde;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Bernoulli model needs 0 < eps_tilde <= 1, got {eps}"
        )));
    }
    let log_eps = eps.ln();
    let slack = 1.0 - eps;
    let pos = move |d2: f64| (log_eps - d2.ln_1p(), -1.0 / (1.0 + d2));
    // log(1 − ε̃/(1+d²)) = log((1−ε̃) + d²) − log(1 + d²)
    let neg = move |d2: f64| ((slack + d2).ln() - d2.ln_1p(), 1.0 / (slack + d2) - 1.0 / (1.0 + d2));
    pairwise_objective(x, g, &pos, &neg, with_gradient)
}

fn check_wishart_inputs(x: &DMatrix<f64>, l: &GraphLaplacian, spec: &ObjectiveSpec) -> Result<ScaleModel> {
    let model = spec
        .scale_model()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a Wishart objective", spec.kind)))?;
    if l.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian is {}x{}, X has {} rows",
            l.n(),
            l.n(),
            x.nrows()
        )));
    }
    if matches!(spec.kind, ObjectiveKind::WishartUmap | ObjectiveKind::WishartNegTsne)
        && l.variant() != LaplacianVariant::Centered
    {
        return Err(Error::InvalidArgument(format!(
            "{} expects the centred Laplacian, got {:?}",
            spec.kind,
            l.variant()
        )));
    }
    spec.validate(x.nrows())?;
    Ok(model)
}

/// The statistic the Wishart density is evaluated on.
pub fn effective_laplacian(l: &GraphLaplacian, spec: &ObjectiveSpec) -> DMatrix<f64> {
    match spec.kind {
        ObjectiveKind::WishartLe => l.matrix() * spec.nu,
        ObjectiveKind::WishartNegTsne => l.matrix() / (1.0 / spec.s_tilde).ln_1p(),
        _ => l.matrix().clone(),
    }
}

/// `−½·tr(L_eff·M(X)) + (ν/2)·log|M(X)|` for the Wishart kinds.
pub fn wishart_objective(x: &DMatrix<f64>, l: &GraphLaplacian, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    wishart_impl(x, l, spec, true)
}

fn wishart_impl(
    x: &DMatrix<f64>,
    l: &GraphLaplacian,
    spec: &ObjectiveSpec,
    with_gradient: bool,
) -> Result<ObjectiveValue> {
    let model = check_wishart_inputs(x, l, spec)?;
    let l_eff = effective_laplacian(l, spec);
    if model.kernel_weight == 0.0 && x.ncols() < x.nrows() {
        low_rank_wishart(x, &l_eff, spec.nu, &model, with_gradient)
    } else {
        dense_wishart(x, &l_eff, spec.nu, &model, with_gradient)
    }
}

fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| u * v).sum()
}

/// `M = ridge·I + g·XXᵀ`: determinant lemma and `M⁻¹X = X·C⁻¹` with
/// `C = ridge·I_q + g·XᵀX`, so nothing `n × n` is factorised.
fn low_rank_wishart(
    x: &DMatrix<f64>,
    l_eff: &DMatrix<f64>,
    nu: f64,
    model: &ScaleModel,
    with_gradient: bool,
) -> Result<ObjectiveValue> {
    let (n, q) = (x.nrows(), x.ncols());
    let ridge = model.ridge;
    if !(ridge > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "ridge {ridge} leaves X·Xᵀ + ridge·I singular for q < n"
        )));
    }
    let g = model.gram_weight;
    let mut cap = x.transpose() * x * g;
    for i in 0..q {
        cap[(i, i)] += ridge;
    }
    let factor = SpdFactor::new(&cap, "ridge·I + XᵀX")?;
    let log_det = (n - q) as f64 * ridge.ln() + factor.log_det();

    let lx = l_eff * x;
    let trace = ridge * l_eff.trace() + g * trace_product(x, &lx);
    let value = -0.5 * trace + 0.5 * nu * log_det;

    let gradient = with_gradient.then(|| {
        let cinv_t = factor.solve(&x.transpose());
        (cinv_t.transpose() * nu - lx) * g
    });
    Ok(ObjectiveValue { value, gradient })
}

fn dense_wishart(
    x: &DMatrix<f64>,
    l_eff: &DMatrix<f64>,
    nu: f64,
    model: &ScaleModel,
    with_gradient: bool,
) -> Result<ObjectiveValue> {
    let n = x.nrows();
    let s = model.kernel_scale;
    let p = sq_distance_matrix(x).map(|v| 1.0 / (1.0 + s * v));
    let mut m = x * x.transpose() * model.gram_weight;
    if model.kernel_weight != 0.0 {
        m += double_center(&p) * model.kernel_weight;
    }
    for i in 0..n {
        m[(i, i)] += model.ridge;
    }
    let m = symmetrize(&m);
    let factor = SpdFactor::new(&m, "Wishart scale matrix M(X)")?;
    let value = -0.5 * trace_product(l_eff, &m) + 0.5 * nu * factor.log_det();

    let gradient = with_gradient.then(|| {
        // ∂value/∂M = ½(ν·M⁻¹ − L_eff)
        let gm = (factor.inverse() * nu - l_eff) * 0.5;
        let mut grad = &gm * x * (2.0 * model.gram_weight);
        if model.kernel_weight != 0.0 {
            let gp = double_center(&gm) * model.kernel_weight;
            // dP_ij/dd²_ij = −s·P_ij², both (i,j) and (j,i) depend on the pair
            let w = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    0.0
                } else {
                    -(gp[(i, j)] + gp[(j, i)]) * s * p[(i, j)] * p[(i, j)]
                }
            });
            grad += sq_dist_backward(x, &w);
        }
        grad
    });
    Ok(ObjectiveValue { value, gradient })
}

/// Scale matrix `M(X)` of a Wishart kind.
pub fn scale_matrix(x: &DMatrix<f64>, spec: &ObjectiveSpec) -> Result<DMatrix<f64>> {
    let model = spec
        .scale_model()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no scale matrix", spec.kind)))?;
    Ok(model.matrix(x))
}

/// `max |M_negtsne(X) − M_umap(√s̃·X)|` for the ε̃ and s̃ in `spec`.
pub fn negtsne_rescaling_check(x: &DMatrix<f64>, spec: &ObjectiveSpec) -> Result<f64> {
    if !(spec.s_tilde > 0.0 && spec.s_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("s_tilde must be > 0, got {}", spec.s_tilde)));
    }
    let tsne = ObjectiveSpec {
        kind: ObjectiveKind::WishartNegTsne,
        ..spec.clone()
    };
    let umap = ObjectiveSpec {
        kind: ObjectiveKind::WishartUmap,
        ..spec.clone()
    };
    let mt = scale_matrix(x, &tsne)?;
    let mu = scale_matrix(&(x * spec.s_tilde.sqrt()), &umap)?;
    Ok((mt - mu).amax())
}

/// A fully prepared objective: spec, graph, and the Laplacian variant the
/// kind expects.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ObjectiveSpec,
    graph: NeighborGraph,
    laplacian: Option<GraphLaplacian>,
}

impl Problem {
    pub fn new(spec: ObjectiveSpec, graph: NeighborGraph) -> Result<Self> {
        spec.validate(graph.n())?;
        let laplacian = match spec.kind {
            ObjectiveKind::Cne | ObjectiveKind::Bernoulli => None,
            ObjectiveKind::WishartUmap | ObjectiveKind::WishartNegTsne => {
                Some(center_laplacian(&laplacian(&graph)))
            }
            ObjectiveKind::WishartLe | ObjectiveKind::WishartUnified => Some(laplacian(&graph)),
        };
        Ok(Self { spec, graph, laplacian })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    pub fn laplacian(&self) -> Option<&GraphLaplacian> {
        self.laplacian.as_ref()
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(self.evaluate(x, false)?.value)
    }

    pub fn value_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let v = self.evaluate(x, true)?;
        Ok((v.value, v.gradient.expect("gradient requested")))
    }

    pub fn evaluate(&self, x: &DMatrix<f64>, with_gradient: bool) -> Result<ObjectiveValue> {
        match (&self.spec.kind, &self.laplacian) {
            (ObjectiveKind::Cne, _) => cne_impl(x, &self.graph, &self.spec, with_gradient),
            (ObjectiveKind::Bernoulli, _) => bernoulli_impl(x, &self.graph, &self.spec, with_gradient),
            (_, Some(l)) => wishart_impl(x, l, &self.spec, with_gradient),
            (_, None) => unreachable!("Wishart problem without Laplacian"),
        }
    }
}
