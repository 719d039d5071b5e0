use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cutlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutlearn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cutlearn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    cutlearn(dir, args).status.code().expect("exit code")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--graph", "grid4", "--rows", "3", "--cols", "3", "--xi", "1", "--seed", "5", "-o", "model.toml"]);
    ok(dir.path(), &["sample", "--model", "model.toml", "-n", "400", "--seed", "1", "-o", "train.txt"]);
    ok(dir.path(), &["sample", "--model", "model.toml", "-n", "400", "--seed", "2", "-o", "test.txt"]);
    dir
}

#[test]
fn generate_sample_fit_evaluate() {
    let dir = setup();
    let d = dir.path();
    let header = std::fs::read_to_string(d.join("train.txt")).unwrap();
    assert!(header.starts_with("# p=9 n=400 seed=1\n"));

    for method in ["logdet-cut", "logdet", "pl-min", "pl-max"] {
        let fit = format!("{method}.toml");
        ok(d, &["fit", "--data", "train.txt", "--method", method, "--lambda", "auto", "-o", &fit, "--seed", "3"]);
        let text = std::fs::read_to_string(d.join(&fit)).unwrap();
        assert!(text.contains(&format!("method = \"{method}\"")));
        let csv = ok(d, &["eval", "--fit", &fit, "--truth", "model.toml", "--test", "test.txt"]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("method,lambda,edge_count,precision,recall"));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], method);
        let recall: f64 = fields[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&recall));
        let loglik: f64 = fields[6].parse().unwrap();
        assert!(loglik.is_finite());
    }
}

#[test]
fn fit_files_are_model_files() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["fit", "--data", "train.txt", "-o", "fit.toml", "--cuts-out", "cuts.txt"]);
    assert!(d.join("cuts.txt").exists());
    let logz = ok(d, &["oracle", "--model", "fit.toml", "--logz"]);
    assert!(logz.starts_with("logz="));
}

#[test]
fn oracle_prints_key_value_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("m.toml"), "p = 2\nnodes = [0.0, 0.0]\nedges = []\n").unwrap();
    let out = ok(d, &["oracle", "--model", "m.toml", "--logz", "--marginals"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    let logz: f64 = lines[0].strip_prefix("logz=").unwrap().parse().unwrap();
    assert!((logz - 4f64.ln()).abs() < 1e-12);
    assert_eq!(&lines[1..], ["eta_0=0", "eta_1=0", "eta_0_1=0"]);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["fit"]), 1);
    assert_eq!(code(d, &["fit", "--data", "train.txt", "--method", "glasso"]), 1);
    assert_eq!(code(d, &["fit", "--data", "train.txt", "--lambda", "-1"]), 1);
    assert_eq!(code(d, &["fit", "--data", "missing.txt"]), 1);
    assert_eq!(code(d, &["oracle", "--model", "model.toml"]), 1);
    assert_eq!(code(d, &["gen", "--graph", "grid4", "--xi", "1"]), 1);
    std::fs::write(d.join("bad.txt"), "# p=2 n=1\n1 7\n").unwrap();
    assert_eq!(code(d, &["fit", "--data", "bad.txt"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
}

#[test]
fn domain_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["gen", "--graph", "random-sparse", "--p", "4", "--edges", "6", "--max-degree", "1", "--xi", "1"]), 2);
    ok(d, &["gen", "--graph", "random-sparse", "--p", "20", "--edges", "10", "--xi", "1", "-o", "big.toml"]);
    assert_eq!(code(d, &["oracle", "--model", "big.toml", "--logz"]), 2);
    std::fs::write(d.join("dup.toml"), "p = 2\nnodes = [0, 0]\nedges = [[0, 1, 1], [1, 0, 1]]\n").unwrap();
    assert_eq!(code(d, &["oracle", "--model", "dup.toml", "--logz"]), 2);
}

#[test]
fn experiment_writes_results_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.toml"),
        r#"
protocol = "likelihood"
graph = { kind = "grid4", rows = 2, cols = 3 }
xi = [0.5, 1.0]
n = [100]
replicates = 2
methods = ["logdet-cut", "pl-min"]
base_seed = 11
sampler = { burn_in = 100, thin = 2 }
output_dir = "out"
"#,
    )
    .unwrap();
    ok(d, &["experiment", "--config", "exp.toml", "--workers", "2", "--write-fits"]);
    let csv = std::fs::read_to_string(d.join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(d.join("out/manifest.toml").exists());
    assert_eq!(std::fs::read_dir(d.join("out/fits")).unwrap().count(), 8);

    ok(d, &["experiment", "--config", "exp.toml", "--out", "again"]);
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    let again = std::fs::read_to_string(d.join("again/results.csv")).unwrap();
    assert_eq!(strip(&csv), strip(&again));

    std::fs::write(d.join("broken.toml"), "protocol = \"structure\"\n").unwrap();
    assert_eq!(code(d, &["experiment", "--config", "broken.toml"]), 1);
}
