//! Shared helpers for the CLI integration tests: the golden-file catalogue
//! and a runner for the compiled binary.

#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

/// Every documented CLI example, keyed by its golden-file name.
pub const GOLDEN_CASES: &[(&str, &[&str])] = &[
    (
        "npoint_genus1_aa",
        &[
            "npoint",
            "--genus",
            "1",
            "--insertions",
            "a@z1,a@z2",
            "--qorder",
            "4",
        ],
    ),
    (
        "npoint_genus0_aa_oracle",
        &[
            "npoint",
            "--genus",
            "0",
            "--insertions",
            "a@z1,a@z2",
            "--oracle",
        ],
    ),
    (
        "residual_genus1",
        &[
            "residual",
            "--direction",
            "a@z3",
            "--insertions",
            "a@z1,a@z2",
        ],
    ),
    (
        "eisenstein_k2",
        &["elliptic", "eisenstein", "--k", "2", "--order", "3"],
    ),
    (
        "eisenstein_k4",
        &["elliptic", "eisenstein", "--k", "4", "--order", "10"],
    ),
    (
        "pm_2",
        &[
            "elliptic", "pm", "--m", "2", "--zorder", "6", "--qorder", "8",
        ],
    ),
    (
        "genus2_partition",
        &[
            "genus2",
            "partition",
            "--eps-order",
            "4",
            "--q1-order",
            "6",
            "--q2-order",
            "6",
            "-N",
            "8",
        ],
    ),
    (
        "genus2_pweier",
        &[
            "genus2", "pweier", "--p", "2", "--j", "1", "--charts", "1", "1",
        ],
    ),
    (
        "schottky_psi",
        &["schottky", "psi", "--p", "2", "--rho-order", "2", "-g", "2"],
    ),
    (
        "schottky_partition",
        &["schottky", "partition", "-g", "2", "--weight-cutoff", "3"],
    ),
    (
        "cohomology_rank",
        &[
            "cohomology",
            "rank",
            "--genus",
            "1",
            "-n",
            "1",
            "-m",
            "2",
            "--direction",
            "a@z",
        ],
    ),
    (
        "cohomology_euler",
        &["cohomology", "euler", "-m", "2", "-N", "3"],
    ),
    ("cluster_check", &["cluster", "check"]),
    (
        "eisenstein_k2_csv",
        &[
            "--format",
            "csv",
            "elliptic",
            "eisenstein",
            "--k",
            "2",
            "--order",
            "3",
        ],
    ),
    (
        "eisenstein_k4_approx",
        &[
            "--approx",
            "elliptic",
            "eisenstein",
            "--k",
            "4",
            "--order",
            "4",
        ],
    ),
];

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redcoh"))
        .args(args)
        .env_remove("REDCOH_CACHE_DIR")
        .output()
        .expect("failed to launch the redcoh binary")
}

pub fn golden_path(name: &str, args: &[&str]) -> PathBuf {
    let ext = if args.windows(2).any(|w| w == ["--format", "csv"]) {
        "csv"
    } else {
        "json"
    };
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.{ext}"))
}

/// Runs one golden case twice; returns `Err` with a description on any
/// mismatch. With `UPDATE_GOLDEN=1` the golden file is (re)written first.
pub fn check_golden(name: &str, args: &[&str]) -> Result<(), String> {
    let first = run(args);
    if !first.status.success() {
        return Err(format!(
            "{name}: exit {:?}: {}",
            first.status.code(),
            String::from_utf8_lossy(&first.stderr)
        ));
    }
    let path = golden_path(name, args);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &first.stdout).map_err(|e| format!("{name}: {e}"))?;
    }
    let golden =
        std::fs::read(&path).map_err(|e| format!("{name}: cannot read {}: {e}", path.display()))?;
    if first.stdout != golden {
        return Err(format!("{name}: output differs from {}", path.display()));
    }
    let second = run(args);
    if second.stdout != first.stdout {
        return Err(format!("{name}: two runs differ"));
    }
    Ok(())
}
