use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
sizes = [8, 12, 16]
s_points = 40
mc_paths = 5000
[training]
pilot_paths = 2000
training_paths = 10000
companion_paths = 10000
[horizon_search]
samples = 5000
"#;

fn workspace(model: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, format!("model = \"{model}\"\n{SMALL}")).unwrap();
    (dir, config)
}

fn run(dir: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdmp-exit"))
        .current_dir(dir)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `dir`, sorted by relative path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn all_commands(dir: &Path, config: &Path, threads: &str) -> Vec<String> {
    [
        "train",
        "survival",
        "moments",
        "convergence",
        "horizon",
        "mc",
    ]
    .iter()
    .map(|cmd| ok(run(dir, config, &[cmd, "--threads", threads, "--gnuplot"])))
    .collect()
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let (a, config_a) = workspace("poisson");
    let (b, config_b) = workspace("poisson");
    let stdout_a = all_commands(a.path(), &config_a, "1");
    let stdout_b = all_commands(b.path(), &config_b, "4");
    assert_eq!(stdout_a, stdout_b);
    let (sa, sb) = (
        snapshot(&a.path().join("out")),
        snapshot(&b.path().join("out")),
    );
    assert!(sa.len() >= 15);
    assert_eq!(sa, sb);
    assert_eq!(
        snapshot(&a.path().join("grids")),
        snapshot(&b.path().join("grids"))
    );

    ok(run(a.path(), &config_a, &["train", "--threads", "2"]));
    assert_eq!(
        snapshot(&a.path().join("grids")),
        snapshot(&b.path().join("grids"))
    );
}

#[test]
fn corrosion_pipeline_runs_with_automatic_horizon() {
    let (dir, config) = workspace("corrosion");
    let train = ok(run(dir.path(), &config, &["train", "--sizes", "10"]));
    assert!(train.starts_with("model killed["));
    let grid = dir.path().join("grids/corrosion_n10.grid");
    let before = fs::read(&grid).unwrap();
    let survival = ok(run(dir.path(), &config, &["survival", "--sizes", "10"]));
    assert!(survival.contains("sup-error vs Monte Carlo"));
    assert!(!survival.contains("vs exact"));
    ok(run(dir.path(), &config, &["moments", "--sizes", "10"]));
    assert_eq!(
        fs::read(&grid).unwrap(),
        before,
        "evaluation must not touch the grid file"
    );

    let csv = fs::read_to_string(dir.path().join("out/corrosion_n10_moments.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("j,p_hat,mc_reference,mc_stderr,certified_bound_or_flag")
    );
    assert!(lines.next().unwrap().starts_with("1,"));
}

#[test]
fn survival_csv_layout() {
    let (dir, config) = workspace("poisson");
    ok(run(dir.path(), &config, &["train", "--sizes", "8"]));
    let out = ok(run(dir.path(), &config, &["survival", "--sizes", "8"]));
    assert!(out.contains("sup-error vs exact"));
    let csv = fs::read_to_string(dir.path().join("out/poisson_n8_survival.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "s,p_raw,p_clamped,p_normalized,mc_reference,mc_stderr"
    );
    assert_eq!(lines.len(), 41);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 6);
        assert!((0.0..=1.0).contains(&v[3]));
        assert!(v[2] <= 1.0);
    }
}

#[test]
fn exit_statuses() {
    let (dir, config) = workspace("poisson");
    let code = |args: &[&str]| run(dir.path(), &config, args).status.code();
    assert_eq!(code(&["train", "--sizes", "0"]), Some(2));
    assert_eq!(code(&["train", "--model", "lorenz"]), Some(2));
    assert_eq!(code(&["survival", "--sizes", "9"]), Some(4));
    assert_eq!(code(&["convergence", "--sizes", "8,12"]), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "colour = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pdmp-exit"))
        .current_dir(dir.path())
        .args(["horizon", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    // A Poisson grid presented as a corrosion grid.
    ok(run(dir.path(), &config, &["train", "--sizes", "8"]));
    fs::copy(
        dir.path().join("grids/poisson_n8.grid"),
        dir.path().join("grids/corrosion_n8.grid"),
    )
    .unwrap();
    let out = run(
        dir.path(),
        &config,
        &[
            "survival",
            "--model",
            "corrosion",
            "--sizes",
            "8",
            "--horizon",
            "10",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained for model"));
}

#[test]
fn horizon_report_for_poisson() {
    let (dir, config) = workspace("poisson");
    let out = ok(run(dir.path(), &config, &["horizon"]));
    assert!(out.contains("certificate: P(τ > T_10) = 0"));
    assert!(out.contains("analytic: N = "));
    assert!(out.contains("monte carlo: N = "));
}
