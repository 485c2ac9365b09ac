//! Acceptance gate. Runs every numbered criterion in order, prints one
//! PASS/FAIL line each with the measured values, and exits non-zero if any
//! criterion fails. Built without the libtest harness so the lines always
//! show up in `cargo test` output.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use wishart_dr::dataio::load_embedding;
use wishart_dr::metrics::knn_label_agreement;
use wishart_dr::verify::{run_suite, Suite};

struct Outcome {
    passed: bool,
    detail: String,
}

fn suite_criterion(suite: Suite, limit: Duration) -> Outcome {
    let report = match run_suite(suite, 0) {
        Ok(r) => r,
        Err(e) => return Outcome { passed: false, detail: format!("suite error: {e}") },
    };
    let within = report.seconds < limit.as_secs_f64();
    let measured: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {} = {:.3e} (limit {:.1e})", if c.passed { "ok" } else { "FAILED" }, c.name, c.measured, c.threshold))
        .collect();
    Outcome {
        passed: report.passed() && within,
        detail: format!("{}; {:.2}s (limit {}s)", measured.join("; "), report.seconds, limit.as_secs()),
    }
}

fn fit_blobs(objective: &str, out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_wishart-dr"))
        .args([
            "fit", "--synthetic", "blobs:3:100:10:1.0", "--seed", "0", "--objective", objective, "--k", "15", "--q", "2",
            "--epochs", "200", "--lr", "1.0", "--out-dir",
        ])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("fit {objective}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn agreement(dir: &Path) -> Result<f64, String> {
    let (emb, labels) = load_embedding(dir.join("embedding.csv")).map_err(|e| e.to_string())?;
    let labels = labels.ok_or("embedding.csv has no labels")?;
    knn_label_agreement(emb.coords(), &labels, 15).map_err(|e| e.to_string())
}

fn trace_ends(dir: &Path) -> Result<(f64, f64), String> {
    let text = fs::read_to_string(dir.join("trace.csv")).map_err(|e| e.to_string())?;
    let first = text.lines().nth(1).ok_or("empty trace")?;
    let initial: f64 = first.split(',').nth(1).ok_or("bad trace row")?.parse().map_err(|_| "bad trace value")?;
    let report = fs::read_to_string(dir.join("report.txt")).map_err(|e| e.to_string())?;
    let last = report
        .lines()
        .find_map(|l| l.strip_prefix("final_objective "))
        .ok_or("report.txt lacks final_objective")?
        .parse::<f64>()
        .map_err(|_| "bad final objective")?;
    Ok((initial, last))
}

fn end_to_end() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (umap, le) = (dir.path().join("umap"), dir.path().join("le"));
    let start = Instant::now();
    fit_blobs("wishart-umap", &umap)?;
    fit_blobs("wishart-le", &le)?;
    let elapsed = start.elapsed();
    let umap_agree = agreement(&umap)?;
    let (initial, last) = trace_ends(&umap)?;
    let le_agree = agreement(&le)?;
    Ok(Outcome {
        passed: umap_agree >= 0.95 && last > initial && le_agree >= 0.90 && elapsed < Duration::from_secs(180),
        detail: format!(
            "wishart-umap 15-NN agreement {umap_agree:.4} (>= 0.95), objective {initial:.3} -> {last:.3}; \
             wishart-le 15-NN agreement {le_agree:.4} (>= 0.90); {:.1}s (limit 180s)",
            elapsed.as_secs_f64()
        ),
    })
}

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fit_blobs("wishart-umap", &a)?;
    fit_blobs("wishart-umap", &b)?;
    let ea = fs::read(a.join("embedding.csv")).map_err(|e| e.to_string())?;
    let eb = fs::read(b.join("embedding.csv")).map_err(|e| e.to_string())?;
    Ok(Outcome {
        passed: ea == eb,
        detail: format!("{} and {} bytes, identical: {}", ea.len(), eb.len(), ea == eb),
    })
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("inequality suite", Box::new(move || suite_criterion(Suite::Bounds, secs(5)))),
        ("gradient suite", Box::new(move || suite_criterion(Suite::Gradients, secs(30)))),
        ("PSD suite", Box::new(move || suite_criterion(Suite::Psd, secs(10)))),
        ("ansatz suite", Box::new(move || suite_criterion(Suite::Ansatz, secs(60)))),
        ("MAP vs Laplacian Eigenmaps", Box::new(move || suite_criterion(Suite::Spectral, secs(120)))),
        ("squared-distance statistics", Box::new(move || suite_criterion(Suite::Diststats, secs(60)))),
        ("neg-t-SNE rescaling and constants", Box::new(move || suite_criterion(Suite::Rescaling, secs(60)))),
        ("3-blob end-to-end fit", Box::new(|| end_to_end().unwrap_or_else(|e| Outcome { passed: false, detail: e }))),
        ("determinism", Box::new(|| determinism().unwrap_or_else(|e| Outcome { passed: false, detail: e }))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        if !outcome.passed {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {}", i + 1, if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
