use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> (Output, String) {
    let out_path = dir.join("out.txt");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_psido-lab"));
    cmd.args(args).arg("--out").arg(&out_path);
    if let Some(text) = config {
        let path = dir.join("config.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    let output = cmd.output().unwrap();
    let body = std::fs::read_to_string(&out_path).unwrap_or_default();
    let _ = std::fs::remove_file(&out_path);
    (output, body)
}

fn data_fields(csv: &str, skip: usize) -> Vec<String> {
    csv.lines().skip(1).flat_map(|l| l.split(',').skip(skip).map(str::to_string).collect::<Vec<_>>()).collect()
}

#[test]
fn unit_symbols_give_zero_defects() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        [grid]
        cutoff = 48
        [defect_sweep]
        t_list = [1.0, 2.0, 4.0]
        chart_t_list = [4.0, 8.0]
        small_t_list = [0.25, 0.5]
        a = { kind = "unit" }
        b = { kind = "unit" }
        chart = { kind = "zero" }
        vanishing = { kind = "zero" }
    "#;
    let (out, csv) = run(&["defect-sweep"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv.lines().next().unwrap(), "t,mult_defect,adjoint_defect,chart_defect,t0_norm");
    let fields = data_fields(&csv, 1);
    assert!(fields.iter().all(|f| f.is_empty() || f == "0.00000000000e0"), "{csv}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["[grid]\ncutoff = \"many\"", "[defect_sweep]\nunknown = 1", "[grid]\ncutoff = 0"] {
        let (out, _) = run(&["defect-sweep"], Some(bad), dir.path());
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("config"), "{bad}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_psido-lab"))
        .args(["defect-sweep", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_psido-lab")).args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identity_index_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        [grid]
        cutoff = 64
        [index_compare]
        t_list = [16.0, 32.0, 64.0]
        symbols = [{ name = "identity", symbol = { kind = "unit" } }]
    "#;
    let (out, json) = run(&["index-compare"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let report = &v[0]["report"];
    assert_eq!(report["analytic_index"], 0);
    assert_eq!(report["fredholm_index"], 0);
    assert_eq!(report["higson_index"], 0);
    assert_eq!(report["agreement"]["all"], true);
    assert_eq!(report["inconclusive"].as_array().unwrap().len(), 0);
}

#[test]
fn calibration_suite_agrees_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[grid]\ncutoff = 64\n[index_compare]\nt_list = [16.0, 32.0, 64.0]\n";
    let (out, csv) = run(&["index-compare", "--format", "csv"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("symbol,w_plus,w_minus,analytic_index,fredholm_index,higson_index"));
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(7) == Some("1")), "{csv}");
}

#[test]
fn tiny_cutoff_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        [grid]
        cutoff = 4
        [index_compare]
        t_list = [1.0, 2.0]
        symbols = [{ name = "w3", symbol = { kind = "windings", plus = 3, minus = -2 } }]
    "#;
    let (out, json) = run(&["index-compare"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(!v[0]["report"]["inconclusive"].as_array().unwrap().is_empty());
    assert_eq!(v[0]["report"]["agreement"]["all"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconclusive"));
}

#[test]
fn zero_symbols_give_zero_ch_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        [grid]
        cutoff = 32
        [ch_compare]
        t_list = [4.0, 8.0]
        cases = [{ name = "zero", f = { kind = "product", factors = [{ kind = "monomial", power = 1 }, { kind = "rational_decay", scale = 1.0 }] }, d = { kind = "zero" } }]
        extended = [{ name = "ext_zero", g = { kind = "rational_decay", scale = 1.0 }, c = [[0, 0.0, 0.0]] }]
    "#;
    let (out, csv) = run(&["ch-compare"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv.lines().next().unwrap(), "t,ext_zero_canonical,ext_zero_finite_rank,zero_canonical,zero_finite_rank");
    assert!(data_fields(&csv, 1).iter().all(|f| f == "0.00000000000e0"), "{csv}");
}

#[test]
fn impossible_threshold_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[grid]\ncutoff = 32\n[tolerances]\ndecay_ratio = 1e-12\nfloor = 1e-300\n[ch_compare]\nt_list = [4.0, 8.0, 16.0]\n";
    let (out, csv) = run(&["ch-compare"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(csv.starts_with("t,"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn homotopy_output_is_sorted_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        [grid]
        cutoff = 64
        [homotopy_verify]
        vectors = [{ band = 40, phase = 0.3 }]
        levels = [4, 8]
    "#;
    let (out, csv) = run(&["homotopy-verify", "--threads", "1"], Some(config), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "check,case,param,value");
    let checks: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    let mut sorted = checks.clone();
    sorted.sort();
    assert_eq!(checks, sorted);
    let (_, again) = run(&["homotopy-verify", "--format", "json"], Some(config), dir.path());
    let v: serde_json::Value = serde_json::from_str(&again).unwrap();
    assert_eq!(v.as_array().unwrap().len(), lines.len() - 1);
}
