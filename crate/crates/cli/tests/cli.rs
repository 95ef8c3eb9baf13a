use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "variant = \"spiral\"\n[grid]\npoints_per_axis = 321\nradius = 0.03\nmargin = 0.03\n[tolerances]\nenforce_bound4 = false\n";

fn cilab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cilab")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn small_run_writes_artifacts_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = cilab(tmp.path(), &["run", "--config", "small.toml", "--out", out, "--quiet"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    for name in ["config.toml", "stage_0.json", "series.csv", "summary.json", "final_map.cigf", "final_map.obj"] {
        assert!(tmp.path().join("a").join(name).exists(), "{name}");
    }
    for name in ["series.csv", "final_map.obj", "final_map.cigf"] {
        assert_eq!(fs::read(tmp.path().join("a").join(name)).unwrap(), fs::read(tmp.path().join("b").join(name)).unwrap(), "{name}");
    }
    let series = fs::read_to_string(tmp.path().join("a/series.csv")).unwrap();
    assert_eq!(series.lines().count(), 2);
    let o = cilab(tmp.path(), &["export-mesh", "a/final_map.cigf", "--coords", "1,2,5", "--out", "m"]);
    assert_eq!(code(&o), 0);
    let obj = fs::read_to_string(tmp.path().join("m/final_map.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("f ")));
}

#[test]
fn stage_abort_exits_three_with_partial_record() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("enforce_bound4 = false\n", "enforce_bound4 = false\nsigma1 = 1e-6\nsigma_floor = 1e-7\n");
    fs::write(tmp.path().join("abort.toml"), text).unwrap();
    let o = cilab(tmp.path(), &["run", "--config", "abort.toml", "--out", "r"]);
    assert_eq!(code(&o), 3);
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r/stage_0_abort.json")).unwrap()).unwrap();
    assert!(rec["error"].as_str().unwrap().contains("guard"));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("inf.toml"), "[ansatz]\nalpha = 0.96\n").unwrap();
    fs::write(tmp.path().join("bad.toml"), "bogus = 1\n").unwrap();
    fs::write(tmp.path().join("coarse.toml"), SMALL.replace("321", "101")).unwrap();
    for cfg in ["inf.toml", "bad.toml", "coarse.toml"] {
        let o = cilab(tmp.path(), &["run", "--config", cfg, "--out", "r"]);
        assert_eq!(code(&o), 2, "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&cilab(tmp.path(), &["run", "--config", "nope.toml"])), 1);
    assert_eq!(code(&cilab(tmp.path(), &["export-mesh", "nope.cigf"])), 1);
}

#[test]
fn benches_pass_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cilab(tmp.path(), &["kallen-toy", "--out", "t"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.99503719"));
    assert_eq!(code(&cilab(tmp.path(), &["decompose", "--out", "d", "--seed", "3"])), 0);
    assert_eq!(code(&cilab(tmp.path(), &["frames", "--out", "f"])), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("d/decompose.json")).unwrap()).unwrap();
    assert_eq!(r["config"]["seed"], 3);
}

#[test]
fn bad_mesh_coordinates_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    assert_eq!(code(&cilab(tmp.path(), &["run", "--config", "small.toml", "--out", "a", "--quiet"])), 0);
    assert_eq!(code(&cilab(tmp.path(), &["export-mesh", "a/final_map.cigf", "--coords", "1,2"])), 2);
    assert_eq!(code(&cilab(tmp.path(), &["export-mesh", "a/final_map.cigf", "--coords", "0,1,2"])), 2);
    assert_eq!(code(&cilab(tmp.path(), &["export-mesh", "a/final_map.cigf", "--coords", "1,2,9"])), 2);
}
