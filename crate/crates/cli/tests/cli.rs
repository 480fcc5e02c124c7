//! End-to-end tests of the command-line interface and its exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mbqtm::ensemble::{ensemble_measure, EnsembleConfig};
use mbqtm::parse_machine;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbqtm"))
}

fn machines_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/machines")
}

fn instances_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/instances")
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn version_embeds_the_format_version() {
    let out = run(&["--version"]);
    assert!(stdout(&out).contains("machine-file format v1"));
}

#[test]
fn table_reproduces_the_reference_first_column() {
    let out = run(&[
        "table",
        "--thetas",
        "2^-5,2^-6,2^-7",
        "--epsilons",
        "0.0455",
        "--convention",
        "two-sided",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    for n in ["1024", "4096", "16384"] {
        assert!(text.contains(n), "{text}");
    }
}

#[test]
fn validate_rejects_the_nonunitary_fixture_naming_the_column() {
    let path = machines_dir().join("fixtures/nonunitary.mqt");
    let out = run(&["validate", path.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("(q0, 0)") && err.contains("0.85"), "{err}");

    let ok = machines_dir().join("hadamard.mqt");
    let out = run(&["validate", ok.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = run(&["table", "--thetas", "not-a-number", "--epsilons", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["validate", "/definitely/missing.mqt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ensemble_reports_are_byte_identical_across_runs() {
    let path = machines_dir().join("hadamard.mqt");
    let args = [
        "ensemble",
        path.to_str().unwrap(),
        "--input",
        "0",
        "--steps",
        "1",
        "--cell",
        "0",
        "--n",
        "1024",
        "--seed",
        "42",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("seed: 42"));
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let path = machines_dir().join("hadamard.mqt");
    let out = binary()
        .args([
            "ensemble",
            path.to_str().unwrap(),
            "--input",
            "0",
            "--steps",
            "1",
            "--cell",
            "0",
            "--n",
            "16",
        ])
        .env("MBQTM_SEED", "777")
        .output()
        .unwrap();
    assert!(stdout(&out).contains("seed: 777"));
}

#[test]
fn text_and_json_carry_identical_values() {
    let path = machines_dir().join("hadamard.mqt");
    let args = [
        "ensemble",
        path.to_str().unwrap(),
        "--input",
        "0",
        "--steps",
        "1",
        "--cell",
        "0",
        "--n",
        "1024",
        "--seed",
        "42",
    ];
    let text = stdout(&run(&args));
    let json_out = stdout(
        &binary()
            .args(args)
            .args(["--format", "json"])
            .output()
            .unwrap(),
    );
    let doc: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    let payload = &doc["payload"];
    for field in ["count_plus", "count_minus", "average", "exact_p1"] {
        let line = format!("payload.{field}: {}", payload[field]);
        assert!(
            text.lines().any(|l| l == line),
            "missing `{line}` in:\n{text}"
        );
    }
}

#[test]
fn checker_verdicts_map_to_exit_codes() {
    let accept = instances_dir().join("parity-1101.mqi");
    let out = run(&["check", accept.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("label: \"accept\""));

    let negative = instances_dir().join("hadamard-0.mqi");
    let out = run(&["check", negative.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(out.status.code(), Some(1));

    let zqp = instances_dir().join("zqp-demo-1.mqi");
    let out = run(&[
        "check",
        zqp.to_str().unwrap(),
        "--mode",
        "empirical",
        "--trials",
        "500",
        "--seed",
        "7",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let bbqp = instances_dir().join("bqp-demo-bbqp-star.mqi");
    let out = run(&[
        "check",
        bbqp.to_str().unwrap(),
        "--mode",
        "empirical",
        "--theta",
        "1/24",
        "--noise",
        "adversarial-edge",
        "--trials",
        "1000",
        "--seed",
        "7",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn transform_writes_a_checkable_machine() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("zbqp.mqt");
    let src = machines_dir().join("zqp-demo.mqt");
    let out = run(&[
        "transform",
        src.to_str().unwrap(),
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("payload.k: 3"));

    let out = run(&[
        "validate",
        out_path.to_str().unwrap(),
        "--window-radius",
        "6",
        "--window-steps",
        "4",
        "--seed",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Drive the transformed machine through the checker on both branches.
    let instance = dir.path().join("zbqp.mqi");
    std::fs::write(
        &instance,
        "class ZBQP*\nmachine zbqp.mqt\nbudget poly 10 2\ninput 111\n",
    )
    .unwrap();
    let out = run(&["check", instance.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("label: \"accept\""));

    std::fs::write(
        &instance,
        "class ZBQP*\nmachine zbqp.mqt\nbudget poly 10 2\ninput 110\n",
    )
    .unwrap();
    let out = run(&["check", instance.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("label: \"reject\""));
}

#[test]
fn slow_path_flag_is_wired_through() {
    let path = machines_dir().join("hadamard.mqt");
    let out = run(&[
        "ensemble",
        path.to_str().unwrap(),
        "--input",
        "0",
        "--steps",
        "1",
        "--cell",
        "0",
        "--n",
        "64",
        "--seed",
        "5",
        "--partitions",
        "4",
        "--slow-path",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("slow_path: true"));
}

/// Two-sample Pearson chi-square between slow-path and fast-path count
/// distributions. Bins with small expected counts are pooled.
#[test]
fn slow_and_fast_paths_are_statistically_indistinguishable() {
    let machine = parse_machine(mbqtm::fixtures::HADAMARD).unwrap();
    let reps = 1000u64;
    let n = 64u64;
    let mut histograms = [vec![0u64; n as usize + 1], vec![0u64; n as usize + 1]];
    for (which, slow) in [false, true].into_iter().enumerate() {
        for rep in 0..reps {
            // Disjoint seed ranges keep the two samples independent.
            let mut cfg = EnsembleConfig::new(n, 9000 + rep + which as u64 * 100_000);
            cfg.slow_path = slow;
            let report = ensemble_measure(&machine, "0", 1, 0, &cfg).unwrap();
            histograms[which][report.count_plus as usize] += 1;
        }
    }

    // Pool counts into bins with at least 8 combined observations.
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut acc = (0u64, 0u64);
    for (a, b) in histograms[0].iter().zip(&histograms[1]) {
        acc.0 += a;
        acc.1 += b;
        if acc.0 + acc.1 >= 8 {
            bins.push(acc);
            acc = (0, 0);
        }
    }
    if acc != (0, 0) {
        bins.push(acc);
    }

    let mut statistic = 0.0f64;
    for &(a, b) in &bins {
        let total = (a + b) as f64;
        let diff = a as f64 - b as f64;
        // Equal sample sizes: expected half/half within each bin.
        statistic += diff * diff / total;
    }
    let df = (bins.len() - 1) as f64;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
    assert!(
        statistic < critical,
        "chi-square {statistic} over {df} df exceeds {critical}"
    );
}
