use std::path::Path;
use std::process::{Command, Output};

use nitsche_bem::study::{read_records, StudyRecord};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nitsche-bem"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> Vec<StudyRecord> {
    read_records(std::fs::File::open(path).unwrap()).unwrap()
}

fn without_timings(mut recs: Vec<StudyRecord>) -> Vec<StudyRecord> {
    for r in &mut recs {
        r.assembly_seconds = None;
        r.solve_seconds = None;
    }
    recs
}

#[test]
fn convergence_writes_levels_and_a_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dirichlet.csv");
    let run = bin(&[
        "convergence",
        "--bc",
        "dirichlet",
        "--beta-d",
        "0.1",
        "--levels",
        "1..3",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let recs = records(&out);
    assert_eq!(recs.len(), 4);
    assert!(recs[..3]
        .iter()
        .all(|r| r.row == "level" && r.converged == Some(true)));
    assert!(recs[3].is_summary() && recs[3].eoc.is_some());
    assert_eq!(
        recs.iter().filter_map(|r| r.level).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}

#[test]
fn identical_runs_agree_except_for_timings() {
    let args = [
        "convergence",
        "--bc",
        "robin",
        "--eps",
        "1",
        "--levels",
        "1,2",
    ];
    let (a, b) = (bin(&args), bin(&args));
    assert!(a.status.success() && b.status.success());
    let parse = |o: &Output| without_timings(read_records(o.stdout.as_slice()).unwrap());
    assert_eq!(parse(&a), parse(&b));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(
        bin(&["convergence", "--bc", "nonsense"]).status.code(),
        Some(1)
    );
    assert_eq!(
        bin(&[
            "convergence",
            "--bc",
            "std-robin",
            "--l",
            "0",
            "--levels",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        bin(&[
            "convergence",
            "--bc",
            "mixed",
            "--mesh",
            "icosahedral",
            "--levels",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn unconverged_solve_exits_with_two() {
    let run = bin(&[
        "convergence",
        "--bc",
        "dirichlet",
        "--levels",
        "1",
        "--max-iter",
        "2",
    ]);
    assert_eq!(run.status.code(), Some(2));
    let recs = read_records(run.stdout.as_slice()).unwrap();
    assert_eq!(recs[0].converged, Some(false));
}

#[test]
fn beta_sweep_includes_the_penalty_free_run() {
    let run = bin(&[
        "sweep-beta",
        "--bc",
        "dirichlet",
        "--levels",
        "1",
        "--beta-min",
        "1e-2",
        "--beta-max",
        "1e2",
        "--beta-count",
        "3",
    ]);
    assert!(run.status.success());
    let recs = read_records(run.stdout.as_slice()).unwrap();
    let betas: Vec<f64> = recs.iter().map(|r| r.beta).collect();
    assert_eq!(betas.len(), 4);
    assert_eq!(betas[0], 0.0);
    assert!(recs
        .iter()
        .all(|r| r.error_total.is_some_and(f64::is_finite)));
}

#[test]
fn eps_beta_grid_has_every_pair() {
    let run = bin(&[
        "sweep-eps-beta",
        "--bc",
        "robin",
        "--levels",
        "2",
        "--no-zero",
        "--beta-count",
        "5",
        "--eps-count",
        "5",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let recs = read_records(run.stdout.as_slice()).unwrap();
    assert_eq!(recs.len(), 25);
    let mut pairs: Vec<(u64, u64)> = recs
        .iter()
        .map(|r| (r.epsilon.to_bits(), r.beta.to_bits()))
        .collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 25);
}

/// Scales every entry of a dumped operator file in place.
fn scale_operator_file(path: &Path, factor: f64) {
    let mut bytes = std::fs::read(path).unwrap();
    for chunk in bytes[32..].chunks_exact_mut(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap()) * factor;
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn verify_passes_then_names_a_corrupted_operator() {
    let dir = tempfile::tempdir().unwrap();
    let ops = dir.path().join("ops");
    let csv = dir.path().join("report.csv");
    let run = bin(&[
        "verify",
        "--level",
        "2",
        "--calderon-levels",
        "1..2",
        "--dump",
        ops.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("name,value,bound,passed,detail"));

    let reload = bin(&[
        "verify",
        "--level",
        "2",
        "--operators",
        ops.to_str().unwrap(),
    ]);
    assert_eq!(
        reload.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&reload.stdout)
    );

    scale_operator_file(&ops.join("V_dp0_dp0.nbop"), 1.1);
    let bad = bin(&[
        "verify",
        "--level",
        "2",
        "--operators",
        ops.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert_eq!(bad.status.code(), Some(3), "{stdout}");
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("FAIL") && l.contains("v_constant_ratio_dp0")),
        "{stdout}"
    );
    assert!(
        !stdout
            .lines()
            .any(|l| l.starts_with("FAIL") && l.contains("_p1")),
        "{stdout}"
    );
}
