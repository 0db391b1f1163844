use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# 20 x 24 cells, 1 degree rotation
grid_rows = 20
grid_cols = 24
frame_width = 760
frame_height = 640
rotation_deg = 1.0
defect_fraction = 0.04
seed = 5
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uled-inspect"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the small config and generates frame + defects into `dir`.
fn generate_small(dir: &Path) {
    fs::write(dir.join("small.cfg"), SMALL).unwrap();
    let o = run(&[
        "generate",
        "--config",
        p(&dir.join("small.cfg")),
        "--out-frame",
        p(&dir.join("f.ulf")),
        "--out-defects",
        p(&dir.join("d.csv")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn generate_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    for name in ["f.ulf", "d.csv", "f.corners.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("f.corners.json")).unwrap()).unwrap();
    assert_eq!(sidecar["corners"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(csv.starts_with("20,24\n"));
    // round(0.04 * 480) defects
    assert_eq!(csv.lines().count(), 1 + 19);
}

#[test]
fn generate_without_config_is_usage_error() {
    let o = run(&["generate", "--out-frame", "a.ulf", "--out-defects", "a.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn generate_config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "bogus = 1\n").unwrap();
    let args = |c: &Path| {
        run(&["generate", "--config", p(c), "--out-frame", p(&dir.path().join("f.ulf")), "--out-defects", p(&dir.path().join("d.csv"))])
    };
    assert_eq!(args(&cfg).status.code(), Some(2));
    assert_eq!(args(&dir.path().join("missing.cfg")).status.code(), Some(1));
}

#[test]
fn seed_override_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    let gen = |tag: &str, seed: &str| {
        let frame = dir.path().join(format!("{tag}.ulf"));
        let o = run(&[
            "generate",
            "--config",
            p(&dir.path().join("small.cfg")),
            "--out-frame",
            p(&frame),
            "--out-defects",
            p(&dir.path().join(format!("{tag}.csv"))),
            "--seed",
            seed,
        ]);
        assert!(o.status.success());
        fs::read(frame).unwrap()
    };
    let a = gen("a", "77");
    let b = gen("b", "77");
    let c = gen("c", "78");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn analyze_with_and_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let frame = dir.path().join("f.ulf");
    let out = dir.path().join("out");
    let o = run(&["analyze", "--frame", p(&frame), "--defects", p(&dir.path().join("d.csv")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy=1.000000"), "{}", stdout(&o));
    assert!(stderr(&o).is_empty());
    for name in ["report.json", "projections_x.csv", "projections_y.csv", "features.csv", "overlay.svg", "grid.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }

    let o = run(&["analyze", "--frame", p(&frame), "--out", p(&dir.path().join("out2")), "--auto-corners"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("accuracy="));
    assert!(stdout(&o).contains("denoised_mean="));
}

#[test]
fn corner_flags_conflict() {
    let o = run(&["analyze", "--frame", "f.ulf", "--out", "o", "--auto-corners", "--corners", "0,0,1,0,1,1,0,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["analyze", "--frame", "f.ulf", "--out", "o", "--corners", "0,0,1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // 8 x 8 constant frame: corners found, no periodic grid.
    let mut bytes = b"ULF1".to_vec();
    bytes.extend(8u32.to_le_bytes());
    bytes.extend(8u32.to_le_bytes());
    bytes.push(1);
    for _ in 0..64 {
        bytes.extend(1.0f32.to_le_bytes());
    }
    let frame = dir.path().join("flat.ulf");
    fs::write(&frame, bytes).unwrap();
    let o = run(&["analyze", "--frame", p(&frame), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stage grid"), "{}", stderr(&o));

    let o = run(&["analyze", "--frame", p(&dir.path().join("none.ulf")), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let out = dir.path().join("out");
    let o = run(&["analyze", "--frame", p(&dir.path().join("f.ulf")), "--defects", p(&dir.path().join("d.csv")), "--out", p(&out)]);
    assert!(o.status.success());
    let a = out.join("report.json");

    let o = run(&["evaluate", "--report", p(&a), "--report", p(&a)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "identical");

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    let acc = v["confusion"]["accuracy"].as_f64().unwrap();
    v["confusion"]["accuracy"] = serde_json::json!(acc - 0.01);
    let b = dir.path().join("b.json");
    fs::write(&b, serde_json::to_string(&v).unwrap()).unwrap();
    let o = run(&["evaluate", "--report", p(&a), "--report", p(&b)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("confusion.accuracy"), "{}", stdout(&o));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["evaluate", "--report", p(&a), "--report", p(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--report", p(&a)]).status.code(), Some(2));
}

#[test]
fn thread_variable() {
    let o = bin().env("ULED_INSPECT_THREADS", "0").arg("version").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().env("ULED_INSPECT_THREADS", "2").arg("version").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("uled-inspect "));
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["analyze", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}
