//! End-to-end runs of the `epr-young` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epr_young_cli::config::StateKind;
use epr_young_cli::ExperimentConfig;

const BIN: &str = env!("CARGO_BIN_EXE_epr-young");

fn epr(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CLI CSV file, split into fields.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn numeric(path: &Path) -> Vec<Vec<f64>> {
    rows(path).iter().map(|r| r.iter().map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn default_config_round_trips() {
    let out = epr(&["default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &text).unwrap();
    let v = epr(&["validate", "--config", s(&path)]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("conditions_met         = true"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let path = write_config(dir.path(), "c.toml", &cfg);
    let files: Vec<(String, String)> = ["1", "3"]
        .iter()
        .map(|jobs| {
            let near = dir.path().join(format!("near{jobs}.csv"));
            let far = dir.path().join(format!("far{jobs}.csv"));
            let out = epr(&[
                "--jobs", jobs, "sample", "--config", s(&path), "--seed", "42", "--events", "5000",
                "--near-out", s(&near), "--far-out", s(&far),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            (std::fs::read_to_string(near).unwrap(), std::fs::read_to_string(far).unwrap())
        })
        .collect();
    assert_eq!(files[0], files[1]);
    assert!(files[0].1.starts_with("# seed=42, config_sha="));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = ExperimentConfig::default().to_toml().replacen("[grating]", "[grating]\nslit_widht = 0.1", 1);
    let path = dir.path().join("c.toml");
    std::fs::write(&path, text).unwrap();
    let out = epr(&["validate", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("slit_widht"));
}

#[test]
fn wide_relative_width_warns() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.source.sigma_x_rel = cfg.grating.d;
    let path = write_config(dir.path(), "c.toml", &cfg);
    let out = epr(&["validate", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("warning:"), "{text}");
    assert!(text.contains("conditions_met         = false"));
}

#[test]
fn two_slit_sum_marginal_vanishes_at_half_integers() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.toml", &ExperimentConfig::default());
    let (joint, sum) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    let out = epr(&["pattern", "--config", s(&path), "--grid", "16", "--out", s(&joint), "--sum-out", s(&sum)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = numeric(&sum);
    let peak = m.iter().map(|r| r[1]).fold(0.0, f64::max);
    let mut checked = 0;
    for r in &m {
        let frac = (r[0] - r[0].floor() - 0.5).abs();
        if frac < 1e-9 && r[0].abs() < 3.0 {
            assert!(r[1] < 1e-12 * peak, "xi = {} density {}", r[0], r[1]);
            checked += 1;
        }
    }
    assert!(checked >= 4);
    assert_eq!(rows(&joint)[0].len(), 3);
}

#[test]
fn five_slit_main_maxima_sit_at_integers() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.grating.n_slits = 5;
    cfg.source.sigma_x_cm = 15.0;
    let path = write_config(dir.path(), "c.toml", &cfg);
    let (joint, sum) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    let out = epr(&["pattern", "--config", s(&path), "--grid", "32", "--out", s(&joint), "--sum-out", s(&sum)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = numeric(&sum);
    for k in -2i32..=2 {
        let window: Vec<&Vec<f64>> = m.iter().filter(|r| (r[0] - k as f64).abs() <= 0.5).collect();
        let best = window.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
        assert!((best[0] - k as f64).abs() < 1.0 / 16.0, "k = {k}: max at {}", best[0]);
    }
}

#[test]
fn near_density_vanishes_between_slits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.state = StateKind::Suboptimal;
    cfg.source.sigma_x_rel = 0.3;
    let path = write_config(dir.path(), "c.toml", &cfg);
    let (joint, sum) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    let out = epr(&["pattern", "--config", s(&path), "--plane", "near", "--grid", "40", "--out", s(&joint), "--sum-out", s(&sum)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = cfg.grating;
    let inside = |x: f64| (0..g.n_slits).any(|k| (x - g.slit_center(k)).abs() < g.a / 2.0);
    let (mut zeros, mut positive) = (0, 0);
    for r in numeric(&joint) {
        if inside(r[0]) && inside(r[1]) {
            positive += usize::from(r[2] > 0.0);
        } else {
            assert_eq!(r[2], 0.0, "x = ({}, {})", r[0], r[1]);
            zeros += 1;
        }
    }
    assert!(zeros > 0 && positive > 0);
}

#[test]
fn sweeps_flip_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.toml", &ExperimentConfig::default());
    let (w, phi, jsonl) = (dir.path().join("w.csv"), dir.path().join("phi.csv"), dir.path().join("phi.jsonl"));
    let out = epr(&["sweep", "--config", s(&path), "--sweep", "w=0.78:0.80:3", "--out", s(&w)]);
    assert!(out.status.success());
    let verdicts: Vec<String> = rows(&w).into_iter().map(|r| r[4].clone()).collect();
    assert_eq!(verdicts, ["entangled", "entangled", "not_entangled"]);

    let out = epr(&[
        "sweep", "--config", s(&path), "--sweep", "phi=0:3.141592653589793:2", "--out", s(&phi), "--jsonl", s(&jsonl),
    ]);
    assert!(out.status.success());
    let verdicts: Vec<String> = rows(&phi).into_iter().map(|r| r[4].clone()).collect();
    assert_eq!(verdicts, ["entangled", "not_entangled"]);
    assert_eq!(std::fs::read_to_string(jsonl).unwrap().lines().count(), 2);
}

#[test]
fn unwritable_output_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.toml", &ExperimentConfig::default());
    let missing = dir.path().join("no/such/dir/far.csv");
    let out = epr(&["sample", "--config", s(&path), "--plane", "far", "--events", "100", "--far-out", s(&missing)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(epr(&["sample"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.toml", &ExperimentConfig::default());
    let out = epr(&["sweep", "--config", s(&path), "--sweep", "q=0:1:3"]);
    assert_eq!(out.status.code(), Some(1));
}

fn sample_and_analyze(cfg: &ExperimentConfig, dir: &Path) -> serde_json::Value {
    let path = write_config(dir, "c.toml", cfg);
    let (near, far) = (dir.join("near.csv"), dir.join("far.csv"));
    let (report, hist) = (dir.join("report.jsonl"), dir.join("hist.csv"));
    let out = epr(&["sample", "--config", s(&path), "--events", "20000", "--near-out", s(&near), "--far-out", s(&far)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = epr(&[
        "analyze", "--config", s(&path), "--near", s(&near), "--far", s(&far), "--out", s(&report), "--histogram", s(&hist),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let axes: Vec<String> = rows(&hist).into_iter().map(|r| r[0].clone()).collect();
    assert!(axes.contains(&"sum".to_string()) && axes.contains(&"single1".to_string()));
    let text = std::fs::read_to_string(report).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    records.into_iter().find(|r| r["kind"] == "criterion").unwrap()
}

#[test]
fn sampled_ideal_state_is_entangled() {
    let dir = tempfile::tempdir().unwrap();
    let r = sample_and_analyze(&ExperimentConfig::default(), dir.path());
    assert_eq!(r["report"]["entangled"], true, "{r}");
}

#[test]
fn heavy_admixture_is_not_entangled() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.sampler.admixture_w = 0.9;
    let r = sample_and_analyze(&cfg, dir.path());
    assert_eq!(r["report"]["entangled"], false, "{r}");
}
