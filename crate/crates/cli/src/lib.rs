//! Command-line pipeline: kNN graphs, embedding fits, the numerical
//! verification suites and SVG scatter plots.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use thiserror::Error;

use wishart_dr::dataio::{load_csv, load_embedding, save_embedding, synth_blobs};
use wishart_dr::graph::knn_graph;
use wishart_dr::metrics::knn_label_agreement;
use wishart_dr::optim::{fit, run, Init, DEFAULT_RANDOM_SCALE};
use wishart_dr::verify::{run_suite, Suite};
use wishart_dr::{DataMatrix, ObjectiveKind, ObjectiveSpec, OptimizerConfig, Problem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {message}")]
    Usage { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
    #[error("{0} check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn usage(stage: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage { stage, message: message.into() }
    }

    pub fn runtime(stage: &'static str, message: impl Into<String>) -> Self {
        CliError::Runtime { stage, message: message.into() }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            _ => 1,
        }
    }
}

/// Tags a library error with the pipeline stage it came from. Invalid
/// arguments are usage errors.
fn at(stage: &'static str) -> impl Fn(wishart_dr::Error) -> CliError {
    move |e| match e {
        wishart_dr::Error::InvalidArgument(m) => CliError::usage(stage, m),
        other => CliError::runtime(stage, other.to_string()),
    }
}

fn io_at<'a>(stage: &'static str, path: &'a Path) -> impl Fn(std::io::Error) -> CliError + 'a {
    move |e| CliError::runtime(stage, format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "wishart-dr", version, about = "Neighbour embeddings as MAP inference under a Wishart model of the kNN Laplacian")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the exact kNN graph of a CSV file and write its edge list and statistics
    Graph(GraphArgs),
    /// Fit an embedding
    Fit(FitArgs),
    /// Run the numerical verification suites
    Verify(VerifyArgs),
    /// Draw a 2-D embedding as an SVG scatter plot
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// key=value file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    /// Label column: header name, or 0-based index for headerless files
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// key=value file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Gaussian clusters, `blobs:CLUSTERS:PER_CLUSTER:DIM[:SPREAD]`
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value = "wishart-umap")]
    pub objective: ObjectiveKind,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// spectral, pca[:SCALE] or random[:SCALE]
    #[arg(long, default_value = "spectral")]
    pub init: String,
    /// Kernel weight of the unified model
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ridge of the unified model
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Ridge of the Laplacian-Eigenmaps model
    #[arg(long)]
    pub beta: Option<f64>,
    /// wishart-umap epochs run before a wishart-negtsne fit (default epochs/3)
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// key=value file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// bounds, gradients, psd, ansatz, spectral, diststats, rescaling or all
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write report.txt here
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// key=value file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), merges any `--config` file and runs
/// the command. Returns the process exit code; messages go to `out`/`err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let parsed = match parse_with_config(args) {
        Ok(p) => p,
        Err(Outcome::Clap(e)) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
        Err(Outcome::Cli(e)) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    match execute(parsed, out) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::VerifyFailed(_)) {
                let _ = writeln!(err, "error: {e}");
            }
            e.exit_code()
        }
    }
}

enum Outcome {
    Clap(clap::Error),
    Cli(CliError),
}

struct Parsed {
    cli: Cli,
    resolved: String,
}

fn parse_with_config(mut args: Vec<OsString>) -> Result<Parsed, Outcome> {
    let cmd = Cli::command();
    // lenient pass: required flags may still come from the config file
    if let Ok(probe) = cmd.clone().ignore_errors(true).try_get_matches_from(&args) {
        if let Some((name, sub_matches)) = probe.subcommand() {
            if let Some(path) = sub_matches.get_one::<PathBuf>(config::CONFIG_FLAG) {
                let sub = cmd.find_subcommand(name).expect("parsed subcommand exists");
                let text = fs::read_to_string(path)
                    .map_err(|e| Outcome::Cli(CliError::usage("config", format!("{}: {e}", path.display()))))?;
                let entries = config::parse(&text, path).map_err(Outcome::Cli)?;
                config::merge(sub, sub_matches, &entries, &mut args).map_err(Outcome::Cli)?;
            }
        }
    }
    let matches = cmd.clone().try_get_matches_from(&args).map_err(Outcome::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(Outcome::Clap)?;
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = cmd.find_subcommand(name).expect("parsed subcommand exists");
    let extra = match &cli.command {
        Command::Fit(f) if f.pretrain_epochs.is_none() => vec![("pretrain-epochs", pretrain_epochs(f).to_string())],
        _ => Vec::new(),
    };
    let resolved = config::resolved(sub, sub_matches, &extra);
    Ok(Parsed { cli, resolved })
}

fn execute(parsed: Parsed, out: &mut dyn Write) -> Result<(), CliError> {
    match parsed.cli.command {
        Command::Graph(a) => cmd_graph(&a, &parsed.resolved, out),
        Command::Fit(a) => cmd_fit(&a, &parsed.resolved, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Plot(a) => cmd_plot(&a, out),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_at("output", dir))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_at("output", &path))
}

pub fn cmd_graph(a: &GraphArgs, resolved: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_csv(&a.input, a.label_col.as_deref()).map_err(at("load"))?;
    let g = knn_graph(&data, a.k).map_err(at("graph"))?;
    create_dir(&a.out_dir)?;
    let mut edges = g.edge_list_text();
    if !edges.is_empty() {
        edges.push('\n');
    }
    write_file(&a.out_dir, "edges.txt", &edges)?;

    let mut histogram = std::collections::BTreeMap::new();
    for d in g.degrees() {
        *histogram.entry(d).or_insert(0usize) += 1;
    }
    let mut stats = format!(
        "nodes {}\nk {}\nedges {}\ncomponents {}\ndegree count\n",
        g.n(),
        a.k,
        g.edges().len(),
        g.component_count()
    );
    for (d, c) in histogram {
        stats.push_str(&format!("{d} {c}\n"));
    }
    write_file(&a.out_dir, "stats.txt", &stats)?;
    write_file(&a.out_dir, "config.resolved", resolved)?;
    let _ = writeln!(
        out,
        "{} nodes, {} edges, {} component(s) -> {}",
        g.n(),
        g.edges().len(),
        g.component_count(),
        a.out_dir.display()
    );
    Ok(())
}

/// `blobs:C:P:D[:spread]`
pub fn parse_synthetic(spec: &str, seed: u64) -> Result<DataMatrix, CliError> {
    let bad = || CliError::usage("synthetic", format!("expected blobs:CLUSTERS:PER_CLUSTER:DIM[:SPREAD], got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.first() != Some(&"blobs") || !(4..=5).contains(&parts.len()) {
        return Err(bad());
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let spread = match parts.get(4) {
        Some(s) => s.parse::<f64>().map_err(|_| bad())?,
        None => 1.0,
    };
    synth_blobs(int(parts[1])?, int(parts[2])?, int(parts[3])?, spread, seed).map_err(at("synthetic"))
}

pub fn parse_init(text: &str) -> Result<Init, CliError> {
    let bad = || CliError::usage("init", format!("expected spectral, pca[:SCALE] or random[:SCALE], got '{text}'"));
    let (name, scale) = match text.split_once(':') {
        Some((n, s)) => (n, Some(s.parse::<f64>().map_err(|_| bad())?)),
        None => (text, None),
    };
    if scale.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
        return Err(bad());
    }
    match (name, scale) {
        ("spectral", None) => Ok(Init::Spectral),
        ("pca", s) => Ok(Init::Pca { scale: s.unwrap_or(1.0) }),
        ("random", s) => Ok(Init::Random {
            scale: s.unwrap_or(DEFAULT_RANDOM_SCALE),
        }),
        _ => Err(bad()),
    }
}

fn pretrain_epochs(a: &FitArgs) -> usize {
    match a.pretrain_epochs {
        Some(p) => p,
        None if a.objective == ObjectiveKind::WishartNegTsne => a.epochs / 3,
        None => 0,
    }
}

pub fn cmd_fit(a: &FitArgs, resolved: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let data = match (&a.input, &a.synthetic) {
        (Some(path), None) => load_csv(path, a.label_col.as_deref()).map_err(at("load"))?,
        (None, Some(s)) => parse_synthetic(s, a.seed)?,
        _ => return Err(CliError::usage("fit", "give exactly one of --input and --synthetic")),
    };
    let pretrain = pretrain_epochs(a);
    if pretrain > 0 && a.objective != ObjectiveKind::WishartNegTsne {
        return Err(CliError::usage("fit", "--pretrain-epochs applies to wishart-negtsne only"));
    }
    if a.epochs == 0 {
        return Err(CliError::usage("fit", "--epochs must be >= 1"));
    }
    if pretrain >= a.epochs {
        return Err(CliError::usage("fit", format!("--pretrain-epochs ({pretrain}) must be below --epochs ({})", a.epochs)));
    }
    let n = data.n();
    let mut spec = ObjectiveSpec::new(a.objective, n);
    if let Some(v) = a.alpha {
        spec.alpha = v;
    }
    if let Some(v) = a.gamma {
        spec.gamma = v;
    }
    if let Some(v) = a.beta {
        spec.beta = v;
    }
    spec.validate(n).map_err(at("objective"))?;
    let cfg = OptimizerConfig {
        lr0: a.lr,
        epochs: a.epochs - pretrain,
        seed: a.seed,
        init: parse_init(&a.init)?,
        ..OptimizerConfig::default()
    };

    let graph = knn_graph(&data, a.k).map_err(at("graph"))?;
    let (emb, trace, lrs, final_value) = if pretrain > 0 {
        let pre_cfg = OptimizerConfig { epochs: pretrain, ..cfg.clone() };
        let umap = ObjectiveSpec::new(ObjectiveKind::WishartUmap, n);
        let (pre, pre_report) = fit(&graph, Some(&data), umap, &pre_cfg, a.q).map_err(at("pretrain"))?;
        let problem = Problem::new(spec.clone(), graph.clone()).map_err(at("fit"))?;
        let (emb, report) = run(&problem, pre.into_coords(), &cfg).map_err(at("fit"))?;
        let trace = [pre_report.objective_trace, report.objective_trace].concat();
        let lrs = [pre_report.lr_trace, report.lr_trace].concat();
        (emb, trace, lrs, report.final_value)
    } else {
        let (emb, report) = fit(&graph, Some(&data), spec.clone(), &cfg, a.q).map_err(at("fit"))?;
        (emb, report.objective_trace, report.lr_trace, report.final_value)
    };

    create_dir(&a.out_dir)?;
    let emb_path = a.out_dir.join("embedding.csv");
    save_embedding(&emb, data.labels(), &emb_path).map_err(at("output"))?;
    let mut csv = String::from("epoch,objective,lr\n");
    for (e, (v, lr)) in trace.iter().zip(&lrs).enumerate() {
        csv.push_str(&format!("{e},{v},{lr}\n"));
    }
    write_file(&a.out_dir, "trace.csv", &csv)?;
    write_file(&a.out_dir, "config.resolved", resolved)?;

    let mut report = format!(
        "objective {}\nnodes {}\ndimension {}\nk {}\nq {}\nedges {}\ncomponents {}\nepochs {}\npretrain_epochs {}\ninitial_objective {}\nfinal_objective {}\n",
        a.objective,
        n,
        data.d(),
        a.k,
        a.q,
        graph.edges().len(),
        graph.component_count(),
        a.epochs,
        pretrain,
        trace[pretrain],
        final_value
    );
    if let Some(labels) = data.labels() {
        let k = 15.min(n - 1);
        let agreement = knn_label_agreement(emb.coords(), labels, k).map_err(at("metrics"))?;
        report.push_str(&format!("label_agreement_{k}nn {agreement}\n"));
    }
    if spec.nu_below_n(n) {
        report.push_str("warning nu < n: the Wishart density is improper\n");
    }
    write_file(&a.out_dir, "report.txt", &report)?;
    let _ = writeln!(
        out,
        "{}: {} points, objective {} -> {} -> {}",
        a.objective,
        n,
        trace[pretrain],
        final_value,
        a.out_dir.display()
    );
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse::<Suite>().map_err(at("verify"))?]
    };
    let mut text = String::new();
    let mut failed = 0;
    for suite in suites {
        let report = run_suite(suite, a.seed).map_err(at("verify"))?;
        failed += report.checks.iter().filter(|c| !c.passed).count();
        text.push_str(&format!("{report}\n"));
    }
    text.push_str(if failed == 0 { "ALL PASS\n" } else { "FAILED\n" });
    let _ = write!(out, "{text}");
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write_file(dir, "report.txt", &text)?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (emb, labels) = load_embedding(&a.embedding).map_err(at("plot"))?;
    if emb.q() != 2 {
        return Err(CliError::usage(
            "plot",
            format!("embedding has {} coordinate column(s); plots need a 2-D embedding, refit with --q 2", emb.q()),
        ));
    }
    let svg = plot::scatter_svg(&emb, labels.as_deref());
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&a.out, svg).map_err(io_at("plot", &a.out))?;
    let _ = writeln!(out, "{} points -> {}", emb.n(), a.out.display());
    Ok(())
}
