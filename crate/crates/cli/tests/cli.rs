use std::path::Path;
use std::process::{Command, Output};

fn hfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfactor"))
        .args(args)
        .output()
        .expect("spawn hfactor")
}

fn stdout(args: &[&str]) -> String {
    let out = hfactor(args);
    assert!(
        out.status.success(),
        "hfactor {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn headers_are_stable() {
    let cases: [(&[&str], &str); 4] = [
        (
            &["approx-atom", "--m-list", "8"],
            "atom,M,point_value,closed_form,error_scaled,c_eps_over_m2,mass_scaled,atoms",
        ),
        (
            &["factorize", "--k-max", "1"],
            "k,M,eps,mass,rho,reconstruction_error,terms",
        ),
        (&["commutator"], "b_id,n,bmo,op_norm,ratio,iters,residual"),
        (&["bmo"], "function_id,family,bmo,slicewise,ratio"),
    ];
    for (args, header) in cases {
        let out = stdout(args);
        assert_eq!(out.lines().next(), Some(header), "{args:?}");
    }
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        &["approx-atom", "--m-list", "8,16"][..],
        &["factorize", "--k-max", "2", "--atom", "random"],
        &["commutator", "--seed", "7"],
        &["bmo", "--rects", "sampled", "--samples", "32"],
    ] {
        assert_eq!(stdout(args), stdout(args), "{args:?}");
    }
}

#[test]
fn point_value_column_matches_closed_form() {
    let out = stdout(&["approx-atom"]);
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 6);
    for r in rows {
        let m: f64 = r[1].parse().unwrap();
        let pv: f64 = r[2].parse().unwrap();
        let closed = ((2.0 * m + 1.0) / (2.0 * m - 1.0)).ln().powi(2);
        assert!((pv - closed).abs() <= 1e-12 * closed, "M={m}: {pv} vs {closed}");
    }
}

#[test]
fn zero_levels_echo_the_input() {
    let out = stdout(&["factorize", "--k-max", "0", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["history"], serde_json::json!([1.0]));
    let f = &v["factorization"];
    assert_eq!(f["terms"].as_array().unwrap().len(), 0);
    let residual = f["residual"]["terms"].as_array().unwrap();
    assert_eq!(residual.len(), 1);
    assert_eq!(residual[0]["coeff"], 1.0);
}

#[test]
fn factorize_reports_small_reconstruction_error() {
    let out = stdout(&["factorize", "--m", "8"]);
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let e: f64 = r[5].parse().unwrap();
        assert!(e <= 1e-10, "{r:?}");
    }
}

#[test]
fn constant_symbol_is_skipped() {
    let out = stdout(&["commutator"]);
    let rows = data_rows(&out);
    assert!(rows.iter().all(|r| r[0] != "constant"));
    assert_eq!(rows.len(), 7);
    assert!(out.contains("# skipped constant"));
    for r in rows {
        let ratio: f64 = r[4].parse().unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
    }
}

#[test]
fn bmo_table_has_exact_values() {
    let out = stdout(&["bmo"]);
    let rows = data_rows(&out);
    let get = |id: &str| rows.iter().find(|r| r[0] == id).unwrap().clone();
    let c = get("constant");
    assert_eq!((c[2].as_str(), c[3].as_str(), c[4].as_str()), ("0", "0", ""));
    let chk = get("checker-1");
    assert_eq!((chk[2].as_str(), chk[3].as_str()), ("1", "2"));
}

#[test]
fn out_file_and_plot_script_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bmo.csv");
    let p = path.to_str().unwrap();
    let printed = stdout(&["bmo", "--out", p, "--plot-data"]);
    assert!(printed.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written, stdout(&["bmo"]));
    let gp = std::fs::read_to_string(dir.path().join("bmo.csv.gp")).unwrap();
    assert!(gp.starts_with("DATA = "));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn json_output_parses() {
    let out = stdout(&["commutator", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 7);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| hfactor(args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["factorize", "--epsilon", "0"]), Some(2));
    assert_eq!(code(&["bmo", "--family", "unknown-v9"]), Some(2));
    assert_eq!(code(&["bmo", "--plot-data"]), Some(2));
    assert_eq!(code(&["approx-atom", "--m-list", "1"]), Some(2));
    assert_eq!(code(&["bmo", "--grid-n", "64"]), Some(3));
    assert_eq!(
        code(&["factorize", "--m", "32", "--k-max", "3", "--max-cells", "64"]),
        Some(3)
    );
    assert_eq!(code(&["--help"]), Some(0));
    let missing = Path::new("/nonexistent-dir/out.csv");
    assert_eq!(code(&["bmo", "--out", missing.to_str().unwrap()]), Some(3));
}
