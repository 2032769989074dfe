//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Criteria 1 and 2 train all three architectures on 2 graphs x 2 realizations
//! of the SBM source-localization benchmark and take tens of minutes in a
//! release build on one core. Criteria 3 to 7 are the oracle and property
//! suites also exposed by `gnn selftest`.

use std::process::ExitCode;
use std::time::Instant;

use gnn_core::experiment::cmd_benchmark;
use gnn_core::experiment::config::{Architecture, ExperimentConfig};
use gnn_core::selftest::{self, CheckOutcome};
use gnn_core::SamplingKind;

/// Wall-clock budget of criterion 1 on a 4-core machine.
const BUDGET_SECONDS: f64 = 45.0 * 60.0;
const REFERENCE_CORES: f64 = 4.0;

struct Line {
    id: u32,
    passed: bool,
    text: String,
}

impl Line {
    fn print(&self) {
        let status = if self.passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {}: {}", self.id, self.text);
    }
}

fn from_check(id: u32, c: &CheckOutcome, extra_ok: bool, extra: &str) -> Line {
    Line { id, passed: c.passed && extra_ok, text: format!("{}: {}{extra} ({:.2} s)", c.name, c.detail, c.seconds) }
}

struct Reproduction {
    label: &'static str,
    threshold: f64,
    mean: f64,
    std: f64,
    cells: Vec<f64>,
}

fn reproduce(
    arch: Architecture,
    sampling: SamplingKind,
    label: &'static str,
    threshold: f64,
    root: &std::path::Path,
) -> Result<Reproduction, String> {
    let mut config = ExperimentConfig { architecture: arch, sampling, ..ExperimentConfig::default() };
    config.benchmark.n_graphs = 2;
    config.benchmark.n_realizations = 2;
    config.output_dir = root.join(label);
    let report = cmd_benchmark(&config).map_err(|e| format!("{label}: {}", e.root()))?;
    println!(
        "  {label}: mean accuracy {:.4}, std over graph means {:.4}, {:.1} s",
        report.mean_accuracy, report.std_accuracy, report.wall_clock_seconds
    );
    Ok(Reproduction {
        label,
        threshold,
        mean: report.mean_accuracy,
        std: report.std_accuracy,
        cells: report.cells.iter().map(|c| c.accuracy).collect(),
    })
}

fn reproduction_lines() -> Vec<Line> {
    let root = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => {
            let text = format!("cannot create output directory: {e}");
            return vec![Line { id: 1, passed: false, text: text.clone() }, Line { id: 2, passed: false, text }];
        }
    };
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let runs = [
        (Architecture::Selection, SamplingKind::Degree, "selection-degree", 0.75),
        (Architecture::Aggregation, SamplingKind::Eds, "aggregation-eds", 0.85),
        (Architecture::Multinode, SamplingKind::Sp, "multinode-sp", 0.88),
    ];
    let mut results = Vec::new();
    for (arch, sampling, label, threshold) in runs {
        match reproduce(arch, sampling, label, threshold, root.path()) {
            Ok(r) => results.push(r),
            Err(e) => {
                let text = format!("benchmark failed: {e}");
                return vec![Line { id: 1, passed: false, text: text.clone() }, Line { id: 2, passed: false, text }];
            }
        }
    }
    let wall = start.elapsed().as_secs_f64();
    // Cells are independent, so wall clock scales with the core count up to
    // the four cells per architecture.
    let reference = wall * (cores as f64).min(REFERENCE_CORES) / REFERENCE_CORES;
    let within_budget = reference <= BUDGET_SECONDS;

    let mut parts: Vec<String> = results
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.cells.iter().map(|a| format!("{a:.3}")).collect();
            format!(
                "{} {:.4}±{:.4} (need >= {:.2}; cells {})",
                r.label,
                r.mean,
                r.std,
                r.threshold,
                cells.join(" ")
            )
        })
        .collect();
    parts.push(format!(
        "wall clock {wall:.0} s on {cores} core(s), {reference:.0} s at 4 cores (budget {BUDGET_SECONDS:.0} s)"
    ));
    let accurate = results.iter().all(|r| r.mean >= r.threshold);
    let first = Line { id: 1, passed: accurate && within_budget, text: parts.join("; ") };

    let selection = results[0].mean;
    let multinode = results[2].mean;
    let second = Line {
        id: 2,
        passed: multinode >= selection,
        text: format!("multinode-sp {multinode:.4} vs selection-degree {selection:.4}"),
    };
    vec![first, second]
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let skip_training = std::env::var_os("GNN_ACCEPTANCE_SKIP_TRAINING").is_some();
    if skip_training {
        println!("GNN_ACCEPTANCE_SKIP_TRAINING set: criteria 1 and 2 not run");
        for id in [1, 2] {
            lines.push(Line { id, passed: false, text: "not run".into() });
        }
    } else {
        lines.extend(reproduction_lines());
    }

    let cyclic = selftest::cyclic_oracle(100);
    lines.push(from_check(3, &cyclic, true, ""));
    let padded = selftest::padded_reduced_equivalence(200);
    lines.push(from_check(4, &padded, true, ""));
    let gradients = selftest::gradient_fidelity();
    let fast = gradients.seconds < 60.0;
    lines.push(from_check(5, &gradients, fast, if fast { "" } else { "; slower than 60 s" }));
    let sampling = selftest::sampling_law(100);
    lines.push(from_check(6, &sampling, true, ""));
    let invertibility = selftest::aggregation_invertibility(50);
    lines.push(from_check(7, &invertibility, true, ""));

    println!();
    for line in &lines {
        line.print();
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
