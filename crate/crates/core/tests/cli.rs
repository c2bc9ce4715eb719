use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mab"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden() -> String {
    scenario("golden.json").display().to_string()
}

fn write_variant(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("golden.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("scenario.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn steady_zvs_echoes_inner_shifts_and_writes_csv() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "steady",
        "--config",
        &golden(),
        "--mode",
        "zvs",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let inner: Vec<&str> = text
        .lines()
        .filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().nth(2).unwrap())
        .collect();
    assert_eq!(inner, ["0.25000", "0.40000", "0.25000", "0.00000"]);
    assert!(!text.contains("HARD"));
    let csv = std::fs::read_to_string(out.path().join("waveforms_zvs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,v_s1,v_s2,v_s3,v_s4,i_L1,i_L2,i_L3,i_L4,v_H");
    assert_eq!(lines.count(), 400);
}

#[test]
fn steady_sps_heavy_load_has_hard_port_4() {
    let o = run(&["steady", "--config", &golden(), "--mode", "sps", "--set-load", "4=2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let port4 = stdout(&o)
        .lines()
        .find(|l| l.trim_start().starts_with("4 "))
        .unwrap()
        .to_string();
    assert!(port4.contains("HARD"), "{port4}");
}

#[test]
fn steady_with_explicit_shifts() {
    let o = run(&[
        "steady",
        "--config",
        &golden(),
        "--outer",
        "0,0.02,0.02,0.02",
        "--inner",
        "0,0,0,0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["steady", "--config", &golden(), "--outer", "0,0.02", "--inner", "0,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_file_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"converter\": {\n    \"ports\": [\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "steady",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_key_and_missing_file_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| v["control"]["gain"] = 1.0.into());
    let o = run(&["compare", "--config", &path]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gain"));
    let o = run(&["compare", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_flags_exit_with_validation_status() {
    assert_eq!(
        run(&["steady", "--config", &golden(), "--mode", "dab"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["steady", "--config", &golden(), "--set-load", "0=5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["steady", "--config", &golden(), "--eps-current", "-1"])
            .status
            .code(),
        Some(1)
    );
    assert!(run(&["--help"]).status.success());
}

#[test]
fn compare_reports_ratio() {
    let o = run(&["compare", "--config", &golden(), "--set-load", "4=2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("rms_ratio"))
        .unwrap()
        .to_string();
    let ratio: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((0.45..=0.75).contains(&ratio), "{line}");
}

#[test]
fn compare_equal_ratios_gives_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["converter"]["ports"][1]["dc_voltage"] = 400.0.into();
        v["converter"]["ports"][3]["dc_voltage"] = 400.0.into();
    });
    let o = run(&["compare", "--config", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("rms_ratio (sum of squares): 1.0000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn dynamic_reports_settling_and_csv() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["dynamic", "--config", &golden(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let settling: Vec<f64> = text
        .lines()
        .filter_map(|l| l.split("settling ").nth(1))
        .map(|s| s.split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(settling.len(), 2);
    assert!(settling.iter().all(|ms| *ms <= 5.0), "{text}");
    let csv = std::fs::read_to_string(out.path().join("dynamic_zvs.csv")).unwrap();
    assert!(csv.starts_with("t,V_2,V_3,V_4,P_1,P_2,P_3,P_4,d_2,d_3,d_4,D_1,D_2,D_3,D_4,zvs_1"));
    // 30 ms at one update per 20 us, plus the initial sample
    assert_eq!(csv.lines().count(), 1 + 1501);
}

#[test]
fn dynamic_without_events() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| v["events"] = serde_json::json!([]));
    let o = run(&["dynamic", "--config", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("no events"));
}

#[test]
fn voltage_collapse_is_a_clean_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["events"] = serde_json::json!([{"time": 0.001, "port": 4, "load": 1.0e6}]);
    });
    let out = dir.path().join("out");
    let o = run(&["dynamic", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("voltage collapse on port") && err.contains("t = "),
        "{err}"
    );
    assert!(!out.exists());
}

#[test]
fn sweep_rows() {
    let o = run(&["sweep", "--config", &golden()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 20);
    let o = run(&[
        "sweep",
        "--config",
        &golden(),
        "--start",
        "800",
        "--stop",
        "800",
        "--points",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2);
    assert!(text.lines().nth(1).unwrap().starts_with("4,800,SPS"));
    let o = run(&["sweep", "--config", &golden(), "--start", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_is_reproducible_and_detects_faults() {
    let a = run(&["verify", "--seed", "5", "--draws", "1"]);
    let b = run(&["verify", "--seed", "5", "--draws", "1"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let o = run(&["verify", "--draws", "200"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("PASS"));
    let o = run(&["verify", "--draws", "2", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(run(&["verify", "--draws", "0"]).status.code(), Some(1));
}
