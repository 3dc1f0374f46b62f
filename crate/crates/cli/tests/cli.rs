//! End-to-end coverage through the compiled binary: exit codes, artifact
//! layout, byte-level determinism, and the config echo round-trip.

use std::path::Path;
use std::process::{Command, Output};

use collapse_cli::checks::{run_criterion, CheckContext};
use collapse_cli::config::parse_config;

const BIN: &str = env!("CARGO_BIN_EXE_collapse-lab");

const MINI: &str = "\
[mini]
experiment = gambler_ruin
seed = 11
amp0 = 0.6
amp1 = 0.8
lambda = 1.0 /s
t_final = 0.5 s
dt = 2.5e-3 s
trajectories = 120
";

fn run_bin(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("COLLAPSE_LAB_OUT")
        .current_dir(dir)
        .output()
        .expect("binary should start")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// results.json carries a wall-clock stamp; everything else must be stable.
fn strip_timestamp(s: &str) -> String {
    s.lines()
        .filter(|l| !l.contains("timestamp_unix_s"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("mini.conf"), MINI).unwrap();
    let out = run_bin(&["run", "mini.conf", "--output-dir", "out"], tmp.path());
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let dir = tmp.path().join("out").join("mini");
    let results: serde_json::Value =
        serde_json::from_str(&read(&dir.join("results.json"))).expect("valid json");
    assert_eq!(results["scenario"], "mini");
    assert_eq!(results["experiment"], "gambler_ruin");
    assert_eq!(results["seed"], 11);
    assert_eq!(results["parameters"]["lambda"][0], "1.0 /s");
    assert_eq!(results["results"]["n_trajectories"], 120);
    assert!(results["versions"]["collapse-core"].is_string());
    assert!(results["versions"]["collapse-cli"].is_string());
    assert!(results["timestamp_unix_s"].is_number());

    let csv = read(&dir.join("sample_paths.csv"));
    assert!(csv.lines().count() > 1, "sample paths should hold rows");
    assert!(!read(&dir.join("report.txt")).is_empty());
}

#[test]
fn reruns_and_thread_counts_leave_artifacts_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("mini.conf"), MINI).unwrap();
    let a = run_bin(&["run", "mini.conf", "--output-dir", "a"], tmp.path());
    let b = run_bin(
        &["run", "mini.conf", "--output-dir", "b", "--jobs", "2"],
        tmp.path(),
    );
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    for file in ["results.json", "sample_paths.csv", "report.txt"] {
        let left = read(&tmp.path().join("a").join("mini").join(file));
        let right = read(&tmp.path().join("b").join("mini").join(file));
        assert_eq!(
            strip_timestamp(&left),
            strip_timestamp(&right),
            "{file} differs across runs"
        );
    }
}

#[test]
fn malformed_config_reports_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = MINI.replace("t_final = 0.5 s", "t_final = 0.5");
    std::fs::write(tmp.path().join("broken.conf"), &broken).unwrap();
    let out = run_bin(&["run", "broken.conf"], tmp.path());
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("line 7"),
        "diagnostic names the line: {stderr}"
    );
    assert!(
        stderr.contains("t_final"),
        "diagnostic names the field: {stderr}"
    );
}

#[test]
fn missing_config_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_bin(&["run", "no-such-file.conf"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn degenerate_pointer_values_are_a_precondition_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = format!("{MINI}a0 = 2\na1 = 2\n");
    std::fs::write(tmp.path().join("degenerate.conf"), conf).unwrap();
    let out = run_bin(&["run", "degenerate.conf"], tmp.path());
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("mini"),
        "failure names the scenario: {stderr}"
    );
}

#[test]
fn empty_config_exits_zero_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("empty.conf"), "# nothing to do\n\n").unwrap();
    let out = run_bin(&["run", "empty.conf"], tmp.path());
    assert_eq!(code(&out), 0);
    let entries: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(
        entries,
        vec!["empty.conf"],
        "no output directories for an empty config"
    );
}

#[test]
fn self_checks_print_and_pass_for_a_healthy_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("mini.conf"), MINI).unwrap();
    let out = run_bin(
        &["run", "mini.conf", "--check", "--output-dir", "out"],
        tmp.path(),
    );
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("born_consistency"),
        "self-check line printed: {stdout}"
    );
    assert!(!stdout.contains("FAIL"), "all self-checks pass: {stdout}");
}

#[test]
fn single_criterion_check_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run_bin(&["check", "--only", "10"], tmp.path());
    assert_eq!(
        code(&ok),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("criterion 10 PASS"));

    // criterion 11 stands red: the code implements the stated windows
    // faithfully and one ratio falls outside them
    let red = run_bin(&["check", "--only", "11"], tmp.path());
    assert_eq!(code(&red), 3);
    assert!(String::from_utf8_lossy(&red.stdout).contains("criterion 11 FAIL"));

    let report = tmp
        .path()
        .join("collapse-lab-out")
        .join("check_report.json");
    let parsed: serde_json::Value = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(parsed["passed"], false);
}

#[test]
fn rate_perturbation_fails_the_decay_criterion() {
    // negative control: a 30% collapse-rate error must be caught
    let ctx = CheckContext::new(0, false, 1.3);
    let report = run_criterion(&ctx, 3);
    assert!(
        !report.passed,
        "perturbed rate slipped through:\n{}",
        report.detail_lines().join("\n")
    );
}

#[test]
fn config_echo_reparses_to_the_same_scenarios() {
    let conf = "\
[walk]
experiment = gambler_ruin
amp0 = 0.6
amp1 = 0.8
lambda = 2.5e-1 /s
t_final = 4 s
dt = 1e-2 s
engine = linear

[fade]
experiment = offdiag_decay
amp0 = 0.28
amp1 = 0.96
lambda = 1 /s
t_final = 2 s
dt = 5e-3 s
time_points = 12

[memory]
experiment = nonmarkov_compare
lambda = 1 /s
alpha = 20 /s
t_final = 3 s
points = 50

[rates]
experiment = csl_rates
clump_n = 500
rho = 1e25 /cm3

[gravity]
experiment = gravity_compare
spacing = 2.5e-6 cm
extent = -1e-4 1e-4 -1e-4 1e-4 -1e-4 1e-4 cm
dist1 = point 0 0 0 cm 5e3 n
dist1 = sphere 2e-5 0 0 1e-5 cm 1e24 n/cm3
dist2 = box -1e-5 -1e-5 -1e-5 1e-5 1e-5 1e-5 cm 1e24 n/cm3
mode = number

[scan]
experiment = kernel_scan
kind = timelike
a = 1e-5 cm
from = 5e-6 cm
to = 9e-5 cm
points = 17

[constants]
experiment = parameter_report
seed = 7
";
    let first = parse_config(conf).expect("original parses");
    assert_eq!(first.len(), 7);
    let echoed: String = first
        .iter()
        .map(|s| s.echo_section() + "\n")
        .collect::<Vec<_>>()
        .join("");
    let second = parse_config(&echoed).expect("echo parses");
    assert_eq!(first, second, "echoed config is the same experiment plan");
}

#[test]
fn kernel_scan_writes_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_bin(
        &[
            "kernel-scan",
            "--kind",
            "spacelike",
            "--a",
            "1e-5",
            "--from",
            "2e-5",
            "--to",
            "1e-4",
            "--points",
            "40",
            "--output-dir",
            "scan-out",
        ],
        tmp.path(),
    );
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("scan-out").join("kernel-scan");
    let table = read(&dir.join("kernel.csv"));
    assert_eq!(table.lines().count(), 41, "header plus one row per point");
    assert!(dir.join("quadrature_check.csv").exists());
}

#[test]
fn report_params_prints_the_relations() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_bin(&["report-params"], tmp.path());
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("planckon form"),
        "table rows present: {stdout}"
    );
    assert!(
        stdout.contains("germanium coupling bound"),
        "table rows present: {stdout}"
    );
}
