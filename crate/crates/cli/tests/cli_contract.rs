use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seeds = [1, 2]

[video]
scenario = "moving"
frames = 12
height = 32
width = 32

[policy]
sigma = 0.8
capacity = 3
interval = 2

[scorer.corruption]
frames = [4]
shift = 6
"#;

fn vosmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vosmem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Drops the named columns from a CSV text.
fn without_columns(text: &str, names: &[&str]) -> String {
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !names.contains(&header[i])).collect();
    text.lines()
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            let kept: Vec<&str> = keep.iter().map(|&i| cells[i]).collect();
            kept.join(",") + "\n"
        })
        .collect()
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn simulate_matches_golden_tables() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("nested/run");
    let res = vosmem(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));

    let frames = fs::read_to_string(out.join("frames.csv")).unwrap();
    assert!(!frames.contains('\r'));
    assert_eq!(without_columns(&frames, &["wall_time_s"]), golden("simulate_frames.csv"));
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), golden("simulate_summary.csv"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2]));
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"], serde_json::json!(["frames.csv", "summary.csv"]));
}

#[test]
fn sweep_matches_golden_table_and_reruns_from_manifest() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let first = tmp.path().join("a");
    let res = vosmem(&[
        "sweep", "--config", config.to_str().unwrap(), "--out", first.to_str().unwrap(),
        "--axis", "threshold", "--values", "0,0.4,0.8,0.95",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table = fs::read_to_string(first.join("sweep.csv")).unwrap();
    assert_eq!(table, golden("sweep_threshold.csv"));
    assert_eq!(table.lines().count(), 5);

    let second = tmp.path().join("b");
    let manifest = first.join("manifest.json");
    let res = vosmem(&["sweep", "--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(fs::read_to_string(second.join("sweep.csv")).unwrap(), table);
}

#[test]
fn interval_sweep_has_one_row_per_value() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    let res = vosmem(&[
        "sweep", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--axis", "interval", "--values", "3,5,7", "--seeds", "1",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("interval,")));
}

#[test]
fn empty_value_list_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    let res = vosmem(&[
        "sweep", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--axis", "threshold", "--values", "",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn zero_capacity_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "bad.toml", "[policy]\ncapacity = 0\n");
    let res = vosmem(&["simulate", "--config", config.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("capacity must be at least 1"), "{}", stderr(&res));
}

#[test]
fn malformed_config_names_line_and_field() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "bad.toml", "seeds = [1]\n[policy]\nsigma = 0.8\ncapcity = 4\n");
    let res = vosmem(&["simulate", "--config", config.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!res.status.success());
    let err = stderr(&res);
    assert!(err.contains("line 4") && err.contains("capcity"), "{err}");
}

#[test]
fn unwritable_output_fails() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let blocker = write_config(tmp.path(), "file", "not a directory");
    let out = blocker.join("run");
    let res = vosmem(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("output directory"), "{}", stderr(&res));
}

#[test]
fn bench_tables_cover_both_modes() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("bench");
    let res = vosmem(&["bench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--frames", "200", "--seeds", "1"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table = fs::read_to_string(out.join("bench.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert_eq!(header, golden("bench_header.csv").trim_end());
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][..4], ["bounded_3", "200", "100", "200"]);
    assert_eq!(rows[1][5], "3");
    assert_eq!(rows[3][0], "unlimited");

    let frames = fs::read_to_string(out.join("bench_frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + 2 * 200);

    let res = vosmem(&["bench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--frames", "50"]);
    assert!(!res.status.success());
}

#[test]
fn check_metrics_passes() {
    let res = vosmem(&["check-metrics", "--pairs", "100"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(String::from_utf8_lossy(&res.stdout).contains("0 J mismatches"));
}
