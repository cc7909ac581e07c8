use homcascade::cli::config::Config;
use homcascade::cli::output::{RunManifest, Table};
use homcascade::cli::{main_from_args, run_experiment, run_with, EXIT_CONFIG, EXIT_OK};
use std::fs;
use std::path::Path;

fn cfg(text: &str) -> Config {
    Config::from_toml(text).unwrap()
}

fn run(cmd: &str, text: &str, out: &Path) -> RunManifest {
    run_with(cmd, &cfg(text), out).unwrap()
}

#[test]
fn minimal_schedule_has_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &path,
        format!("subcommand = \"schedule\"\nbeta = 1.25\nlambda = 2\ndepth = 2\nout = {:?}\n", out.to_str().unwrap()),
    )
    .unwrap();
    let m = run_experiment(&path).unwrap();
    assert_eq!(m.status, "ok");
    let t = Table::read(&out.join("schedule.csv")).unwrap();
    assert_eq!(t.rows.len(), 3);
    let eps_inv: Vec<String> = t.strings("eps_inv").unwrap();
    assert_eq!(eps_inv, ["1", "32", "77"]);
    let last = fs::read_dir(&out).unwrap().map(|e| e.unwrap()).max_by_key(|e| e.metadata().unwrap().modified().unwrap());
    assert_eq!(last.unwrap().file_name(), "manifest.toml");
    assert!(m.schedule_digest.is_some());
}

#[test]
fn sweep_writes_one_row_per_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let text = "beta = 1.25\ndepth = 1\n[sweep]\nkappas = [0.01, 0.005, 0.0025]\ngrid_n = 256\nt_end = 0.002\n";
    let m = run("sweep", text, dir.path());
    let t = Table::read(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(t.rows.len(), 3);
    let d = t.floats("dissipation").unwrap();
    assert!(d.iter().all(|x| x.is_finite() && *x > 0.0));
    assert!(m.artifact("sweep.svg").is_some());
    let svg = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "beta = 1.2\ndepth = 2\n[drift]\npoints = 7\n";
    for cmd in ["calibrate-cutoffs", "schedule", "drift"] {
        let a = run(cmd, text, &dir.path().join(cmd).join("a"));
        let b = run(cmd, text, &dir.path().join(cmd).join("b"));
        let csvs: Vec<_> = a.artifacts.iter().filter(|x| x.path.ends_with(".csv")).collect();
        assert!(!csvs.is_empty());
        for x in csvs {
            assert_eq!(Some(x), b.artifact(&x.path), "{}", x.path);
            let ba = fs::read(dir.path().join(cmd).join("a").join(&x.path)).unwrap();
            let bb = fs::read(dir.path().join(cmd).join("b").join(&x.path)).unwrap();
            assert_eq!(ba, bb);
        }
        assert_eq!(a.schedule_digest, b.schedule_digest);
    }
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    run("calibrate-cutoffs", "", dir.path());
    let text = fs::read_to_string(dir.path().join("cutoff_params.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().chars().any(|c| c.is_ascii_alphabetic()));
    let cell = text.lines().nth(1).unwrap().split(',').find(|c| c.contains('e')).unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn report_of_an_empty_directory_says_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_with("report", &Config::default(), dir.path()).unwrap();
    assert_eq!(m.status, "empty");
    let s = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(s.contains("no data"));
}

#[test]
fn report_rerun_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    run("ergodic", "[ergodic]\nn = [2, 3, 4, 5, 6, 7, 8]\n", dir.path());
    let first = fs::read(dir.path().join("summary.txt")).unwrap();
    assert!(dir.path().join("ergodic.svg").exists());
    run_with("report", &Config::default(), dir.path()).unwrap();
    assert_eq!(first, fs::read(dir.path().join("summary.txt")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "beta = 1.2\n[sweep]\nkapas = [1.0]\n").unwrap();
    let b = bad.to_str().unwrap();
    let domain = dir.path().join("domain.toml");
    fs::write(&domain, "beta = 2.5\n").unwrap();
    let d = domain.to_str().unwrap();
    assert_eq!(main_from_args(["homcascade", "schedule", "--out", o]), EXIT_OK);
    assert_eq!(main_from_args(["homcascade", "schedule", "--config", b, "--out", o]), EXIT_CONFIG);
    assert_eq!(main_from_args(["homcascade", "schedule", "--config", d, "--out", o]), EXIT_CONFIG);
    assert_eq!(main_from_args(["homcascade", "bogus"]), EXIT_CONFIG);
    assert_eq!(main_from_args(["homcascade", "schedule", "--threads", "0", "--out", o]), EXIT_CONFIG);
    assert_eq!(main_from_args(["homcascade", "schedule", "--mode", "strict", "--out", o]), EXIT_CONFIG);
}

#[test]
fn failed_stage_leaves_a_marked_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("beta = 1.2\ndepth = 2\n[correctors]\nm = 5\n");
    assert!(run_with("correctors", &c, dir.path()).is_err());
    let m = RunManifest::read(dir.path()).unwrap();
    assert_ne!(m.status, "ok");
    assert!(m.error.is_some());
}
