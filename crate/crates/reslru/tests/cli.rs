use std::path::Path;
use std::process::{Command, Output};

fn reslru(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reslru"));
    cmd.current_dir(dir)
        .args(args)
        .arg("--quiet")
        .env_remove("RESLRU_THREADS");
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("spawn reslru")
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON: {line}: {e}"))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(
        tmp.path(),
        &["crossing", "--out", "o"],
        Some("[device]\nomega_q_ghz = 6.7\nfrobnicate = 2\n"),
    );
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"], "config");
    assert_eq!(e["code"], 2);
    assert!(e["message"].as_str().unwrap().contains("frobnicate"), "{e}");
}

#[test]
fn malformed_toml_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(tmp.path(), &["crossing"], Some("seed = 1\n[device\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("line 2"));
}

#[test]
fn invalid_values_and_flags_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(
        tmp.path(),
        &["crossing"],
        Some("[device]\nkappa_mhz = -1.0\n"),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = reslru(tmp.path(), &["evolve", "--threads", "0"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = reslru(tmp.path(), &["nonsense"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");
    let out = reslru(tmp.path(), &["crossing", "--config", "missing.toml"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    // A zero leakage threshold leaves no admissible operating point.
    let cfg = r#"
[device]
n_transmon = 3
n_resonator = 2
[optimizer]
omega_min_mhz = 0.0
omega_max_mhz = 300.0
budget = 16
grid = [4, 4]
p2_threshold = 0.0
"#;
    let out = reslru(tmp.path(), &["heatmap", "--out", "o"], Some(cfg));
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(error_json(&out)["error"], "numerical");
}

#[test]
fn crossing_single_row_and_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(
        tmp.path(),
        &["crossing", "--out", "o"],
        Some("[crossing]\nomegas_mhz = [400.0]\n"),
    );
    assert!(out.status.success());
    let (header, rows) = read_csv(&tmp.path().join("o/crossing.csv"));
    assert_eq!(rows.len(), 1);
    let col = |name: &str| {
        rows[0][header.iter().position(|h| h == name).unwrap()]
            .parse::<f64>()
            .unwrap()
    };
    assert!(col("err_order3_mhz") < col("err_first_order_mhz"));
}

#[test]
fn crossing_without_coupling_has_zero_g() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(
        tmp.path(),
        &["crossing", "--out", "o"],
        Some("[device]\ng_mhz = 0.0\n[crossing]\nomegas_mhz = [100.0, 300.0]\n"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&tmp.path().join("o/crossing.csv"));
    for name in [
        "g_tilde_exact_mhz",
        "g_tilde_order3_mhz",
        "g_tilde_lowest_mhz",
    ] {
        let k = header.iter().position(|h| h == name).unwrap();
        for r in &rows {
            assert_eq!(r[k].parse::<f64>().unwrap(), 0.0, "{name}");
        }
    }
}

#[test]
fn manifest_lists_hashed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = reslru(
        tmp.path(),
        &[
            "crossing", "--preset", "table1", "--seed", "5", "--out", "o",
        ],
        None,
    );
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "crossing");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["device"]["g_mhz"], 135.0);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    let bytes = std::fs::read(tmp.path().join("o/crossing.csv")).unwrap();
    assert_eq!(outputs[0]["sha256"], reslru::output::sha256_hex(&bytes));
    assert!(!tmp.path().join("o/.crossing.csv.partial").exists());
}

#[test]
fn thread_count_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_reslru"))
        .current_dir(tmp.path())
        .args(["crossing", "--quiet", "--out", "o"])
        .env("RESLRU_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["threads"], 2);
}

#[test]
fn zero_drive_evolution_is_pure_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
[device]
n_transmon = 3
n_resonator = 2
nbar = 0.0
[drive]
omega_mhz = 0.0
levels = [2]
labels = ["2,0", "1,0", "0,0"]
sample_ns = 20.0
"#;
    let out = reslru(tmp.path(), &["evolve", "--out", "o"], Some(cfg));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&tmp.path().join("o/evolve_level2.csv"));
    assert_eq!(header, ["time_ns", "p_2_0", "p_1_0", "p_0_0"]);
    let p2: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(p2.windows(2).all(|w| w[1] < w[0]));
    let sum: f64 = rows.last().unwrap()[1..]
        .iter()
        .map(|x| x.parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-6);
}
