use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "family = gaussian-mab\nk = 4\nn = 8\nm = 6\nreplications = 3\nseed = 9\n\
                      sigma0 = 0.1\nagents = oracle-ts, b-metasrm, f-metasrm@m0=1, f-metasrm@m0=3\n";

const HEADER: &str = "replication,task,agent,expected_simple_regret,realized_simple_regret,cumulative_regret,seed_fp";

fn metasrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metasrm"))
        .args(args)
        .env_remove("METASRM_WORKERS")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_deterministic_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = metasrm(&["run", &cfg, "--output", a.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let out = metasrm(&["run", &cfg, "--output", b.to_str().unwrap(), "--workers", "3"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let body = text(&first);
    assert_eq!(body.lines().next(), Some(HEADER));
    assert_eq!(body.lines().count(), 1 + 3 * 6 * 4);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let path = dir.path().join("o.csv");
    let out = metasrm(&[
        "run",
        &cfg,
        "--set",
        "m=2",
        "--replications",
        "1",
        "--seed",
        "4",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&fs::read(&path).unwrap()).lines().count(), 1 + 2 * 4);
}

#[test]
fn summary_files_and_summarize_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let path = dir.path().join("r.csv");
    let out = metasrm(&["run", &cfg, "--output", path.to_str().unwrap(), "--summary"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let written = fs::read_to_string(dir.path().join("r.summary.csv")).unwrap();
    assert_eq!(written.lines().next(), Some("task,agent,mean,stderr,cum_mean"));
    assert!(written.contains(",f-metasrm@best,"));

    let out = metasrm(&["summarize", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), written);

    let out = metasrm(&[
        "summarize",
        path.to_str().unwrap(),
        "--no-best",
        "--metric",
        "cumulative",
    ]);
    assert!(out.status.success());
    assert!(!text(&out.stdout).contains("@best"));
}

#[test]
fn malformed_results_are_rejected_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(
        &path,
        format!("{HEADER}\n0,1,a,0.1,0.1,0.8,ff\n0,2,a,oops,0.1,0.8,ff\n"),
    )
    .unwrap();
    let out = metasrm(&["summarize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "family = gaussian-mab\nk = 4\nbogus = 1\n");
    let out = metasrm(&["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));

    let out = metasrm(&["run", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(dir.path(), CONFIG);
    let out = Command::new(env!("CARGO_BIN_EXE_metasrm"))
        .args(["run", &cfg, "--output", dir.path().join("w.csv").to_str().unwrap()])
        .env("METASRM_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn runtime_failures_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    // the output path is an existing directory
    let out = metasrm(&["run", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
}

#[test]
fn validate_config_reports_the_resolved_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = metasrm(&["validate-config", &cfg]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.starts_with("ok: gaussian-mab K=4"), "{stdout}");
    assert!(stdout.contains("f-metasrm@m0=3"));
}

#[test]
fn presets_are_listed_and_shown() {
    let out = metasrm(&["presets", "list"]);
    assert!(out.status.success());
    let listing = text(&out.stdout);
    for name in [
        "gaussian-mab-fig2",
        "linear-fig3",
        "linear-10d",
        "frequentist-appD",
        "bernoulli-etc",
    ] {
        assert!(listing.contains(name), "{name} missing from {listing}");
    }
    let out = metasrm(&["presets", "show", "gaussian-mab-fig2"]);
    assert!(out.status.success());
    assert!(text(&out.stdout).contains("k = 30"));
}

#[test]
fn preset_variant_runs_into_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasrm(&[
        "run",
        "--preset",
        "bernoulli-etc",
        "--variant",
        "k5",
        "--set",
        "m=4",
        "--set",
        "m0_grid=2",
        "--replications",
        "2",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let body = fs::read_to_string(dir.path().join("bernoulli-etc-k5.csv")).unwrap();
    assert_eq!(body.lines().next(), Some(HEADER));
    assert!(body.contains(",f-metasrm@m0=2,"));
}
