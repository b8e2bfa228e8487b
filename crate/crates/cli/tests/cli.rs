use clap::Parser;
use hfd_cli::{exit_code, parse_rat, run, Cli};
use hfd_core::Rat;
use std::fs;

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(args).expect("argument parsing")
}

fn run_to_file(args: &[&str]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    full.push("--out".into());
    full.push(path.to_string_lossy().into_owned());
    let cli = Cli::try_parse_from(full.iter().map(|s| s.as_str())).expect("argument parsing");
    run(cli).expect("command runs");
    fs::read_to_string(&path).unwrap()
}

#[test]
fn field_reports_unit_and_rejects_bad_k() {
    let out = run_to_file(&["hfd", "field", "--k", "5"]);
    assert!(out.contains("k0 = 2"));
    assert!(out.contains("eps0 = w"));
    assert!(out.contains("N(eps0) = -1"));

    let out = run_to_file(&["hfd", "field", "--k", "2"]);
    assert!(out.contains("eps0 = w")); // 1 + sqrt 2 is w on the integral basis

    // k = 4 is not square-free: parse succeeds, run fails with exit code 3
    let err = run(parse(&["hfd", "field", "--k", "4"])).unwrap_err();
    assert_eq!(exit_code(&err), 3);
    // class number 2 field rejected by pipeline commands
    let err = run(parse(&["hfd", "s1", "--k", "10"])).unwrap_err();
    assert_eq!(exit_code(&err), 3);
}

#[test]
fn s1_json_has_schema() {
    let out = run_to_file(&["hfd", "s1", "--k", "5", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["k"], 5);
    assert_eq!(v["k0"], 2);
    assert_eq!(v["eps0"], serde_json::json!(["0", "1"]));
    let pairs = v["pairs"].as_array().unwrap();
    assert!(!pairs.is_empty());
    assert!(pairs[0]["c"].is_array() && pairs[0]["d"].is_array());
}

#[test]
fn generators_include_stabilizer_triple() {
    let out = run_to_file(&["hfd", "generators", "--k", "2"]);
    assert!(out.contains("P1 = [[1, 1], [0, 1]]"));
    assert!(out.contains("P2 = [[1, w], [0, 1]]"));
    assert!(out.contains("P3 = "));
    assert!(out.contains("P[1; 0]") || out.contains("P[1;0]") || out.contains("P[1; 0]"));
}

#[test]
fn reduce_of_interior_point_is_identity() {
    let out = run_to_file(&["hfd", "reduce", "--k", "5", "--point", "0,0,1,2"]);
    assert!(out.contains("gamma = [[1, 0], [0, 1]]"));
    assert!(out.contains("(0, 0, 1, 2)"));
}

#[test]
fn decompose_identity_and_product() {
    let out = run_to_file(&["hfd", "decompose", "--k", "5", "--matrix", "1,0;0,0;0,0;1,0"]);
    assert!(out.contains("word   = 1"));
    // P1 * P3 decomposes into a short word that re-evaluates correctly
    // P1*P3 for k=5: [[1,1],[0,1]]*[[w,0],[0,w-1]] = [[w, -1+w],[0, -1+w]]
    let out = run_to_file(&["hfd", "decompose", "--k", "5", "--matrix", "0,1;-1,1;0,0;-1,1"]);
    assert!(out.contains("verified"));
    assert!(out.contains("P1") && out.contains("P3"));
}

#[test]
fn slice_bounds_and_symmetry() {
    let out = run_to_file(&["hfd", "slice", "--k", "5", "--r", "1", "--grid", "21"]);
    let mut values: std::collections::HashMap<(i64, i64), f64> = Default::default();
    for line in out.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let s1: f64 = cols[0].parse().unwrap();
        let s2: f64 = cols[1].parse().unwrap();
        let h0: f64 = cols[2].parse().unwrap();
        assert!(h0 <= 1.0 + 1e-12, "h0 = {h0} > 1");
        assert!(h0 > 0.4, "h0 = {h0} <= k0^2/(2k)");
        values.insert(((s1 * 1e6).round() as i64, (s2 * 1e6).round() as i64), h0);
    }
    // h0 is even under s -> -s
    for ((a, b), v) in &values {
        let mirror = values.get(&(-a, -b)).unwrap();
        assert!((v - mirror).abs() <= 1e-9, "asymmetry at ({a}, {b})");
    }
    // r outside the box is rejected
    let err = run(parse(&["hfd", "slice", "--k", "5", "--r", "9.0"])).unwrap_err();
    assert_eq!(exit_code(&err), 4);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# sample config\nk = 5\ngrid = 7\n").unwrap();
    let out_path = dir.path().join("o.txt");
    let cli = Cli::try_parse_from([
        "hfd",
        "field",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ])
    .unwrap();
    run(cli).unwrap();
    assert!(fs::read_to_string(&out_path).unwrap().contains("k = 5"));

    // the flag beats the file
    let cli = Cli::try_parse_from([
        "hfd",
        "field",
        "--k",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ])
    .unwrap();
    run(cli).unwrap();
    assert!(fs::read_to_string(&out_path).unwrap().contains("k = 2"));
}

#[test]
fn presentation_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("pres");
    let cli = Cli::try_parse_from([
        "hfd",
        "presentation",
        "--k",
        "5",
        "--out",
        base.to_str().unwrap(),
    ])
    .unwrap();
    run(cli).unwrap();
    let text = fs::read_to_string(base.with_extension("txt")).unwrap();
    assert!(text.contains("pairing relations:"));
    assert!(text.contains("cycle relations:"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json")).unwrap()).unwrap();
    assert_eq!(v["k"], 5);
    assert_eq!(v["verified"], true);
    assert!(!v["generators"].as_array().unwrap().is_empty());
    assert!(!v["cycle_relations"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(base.with_extension("csv")).unwrap();
    assert!(csv.starts_with("kind,id,surface,s1,s2,r,h"));
    assert!(csv.lines().count() > 10);
}

#[test]
fn rational_parsing_accepts_fractions_and_decimals() {
    assert_eq!(parse_rat("3/2").unwrap(), Rat::new(3.into(), 2.into()));
    assert_eq!(parse_rat("-0.25").unwrap(), Rat::new((-1).into(), 4.into()));
    assert_eq!(parse_rat("7").unwrap(), Rat::from_integer(7.into()));
    assert!(parse_rat("x").is_err());
    assert!(parse_rat("1/0").is_err());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    for args in [
        vec!["hfd", "s1", "--k", "2", "--format", "json"],
        vec!["hfd", "slice", "--k", "5", "--r", "1", "--grid", "9"],
        vec!["hfd", "generators", "--k", "5", "--format", "json"],
    ] {
        let first = run_to_file(&args);
        let second = run_to_file(&args);
        assert_eq!(first, second, "{args:?}");
    }
}

#[test]
fn binary_exit_codes_and_thread_cap() {
    let bin = env!("CARGO_BIN_EXE_hfd");
    // 0 on success, 3 on unsupported field, 2 on bad arguments
    let ok = std::process::Command::new(bin)
        .args(["field", "--k", "5"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad_field = std::process::Command::new(bin)
        .args(["field", "--k", "4"])
        .output()
        .unwrap();
    assert_eq!(bad_field.status.code(), Some(3));
    let bad_args = std::process::Command::new(bin)
        .args(["field", "--nonsense"])
        .output()
        .unwrap();
    assert_eq!(bad_args.status.code(), Some(2));
    // HFD_THREADS must be a positive integer when set
    let bad_env = std::process::Command::new(bin)
        .args(["field", "--k", "5"])
        .env("HFD_THREADS", "zero?")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(4));
    let good_env = std::process::Command::new(bin)
        .args(["field", "--k", "5"])
        .env("HFD_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(good_env.status.code(), Some(0));
}
