mod common;

use std::fs;

use common::*;

fn ok(args: &[&str]) -> String {
    let o = cli(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn version_and_schema_flags() {
    assert!(ok(&["--version"]).contains(env!("CARGO_PKG_VERSION")));
    let schema = ok(&["--schema"]);
    assert_eq!(schema, chartsmooth::REPORT_SCHEMA);
    let v: serde_json::Value = serde_json::from_str(&schema).unwrap();
    assert_eq!(v["properties"]["schema"]["const"], chartsmooth::SCHEMA_TAG);
}

#[test]
fn norm_subcommand_on_a_wrapping_torus_atlas() {
    let dir = scratch("norm");
    let atlas = configs().join("flat_torus.json");
    let out = dir.join("norm.json");
    let (a, o) = (atlas.to_str().unwrap(), out.to_str().unwrap());
    ok(&["norm", "--atlas", a, "--scale", "0.4", "--flavor", "c,weak", "--alpha", "0.5", "--out", o]);
    let r = read(&out);
    assert_eq!(r["flavor_label"], "c,weak");
    assert_eq!(r["q_quasi"], 0.0);
    assert!(r["norm_value"].is_number());
    // charts of radius 0.4 wrap around a torus of side 0.5
    let bad = cli(&["norm", "--atlas", a, "--scale", "0.4", "--flavor", "c", "--out", o]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("not injective"));
    let lp = cli(&["norm", "--atlas", a, "--scale", "0.4", "--flavor", "l,weak", "--k", "1", "--out", o]);
    assert_eq!(lp.status.code(), Some(2), "the l flavor needs --p");
}

#[test]
fn cell_subcommand_writes_values_and_deviation() {
    let dir = scratch("cell");
    let out = dir.join("cell.json");
    let m = configs().join("flat.json");
    ok(&["cell", "--metric", m.to_str().unwrap(), "--center", "0.1,-0.05", "--i0", "0.25", "--out", out.to_str().unwrap()]);
    let r = read(&out);
    assert_eq!(r["center"][0], 0.09375);
    assert!(r["deviation"]["rel_value_error"].as_f64().unwrap() <= 0.01);
    let nodes = r["nodes"].as_array().unwrap();
    assert!(nodes.iter().any(|n| n["grad"].is_array()) && nodes.iter().any(|n| n["grad"].is_null()));
    let bad = cli(&["cell", "--metric", m.to_str().unwrap(), "--center", "2,0", "--i0", "0.25", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn smooth_and_curvature_subcommands() {
    let dir = scratch("smooth");
    let m = configs().join("flat.json");
    let m = m.to_str().unwrap();
    let out = dir.join("g.json");
    let common = ["--metric", m, "--i0", "0.1", "--steps", "12", "--probe-radius", "0.02"];
    let mut args = vec!["smooth"];
    args.extend(common);
    args.extend(["--stride", "2", "--out", out.to_str().unwrap()]);
    ok(&args);
    let r = read(&out);
    assert!((r["calibration"]["normalization"].as_f64().unwrap() - 1.0).abs() < 0.005);
    assert!(r["scale"]["eps"].as_f64().unwrap() < 0.02);
    assert_eq!(r["field"]["points"].as_array().unwrap().len(), r["scale"]["points"].as_u64().unwrap() as usize);

    let out = dir.join("k.json");
    let mut args = vec!["curvature"];
    args.extend(common);
    args.extend(["--out", out.to_str().unwrap()]);
    ok(&args);
    let r = read(&out);
    let rows = csv::Reader::from_path(dir.join("k.csv")).unwrap().records().count();
    assert_eq!(rows, r["rows"].as_array().unwrap().len());
}

#[test]
fn patch_subcommand_glues_a_flat_torus() {
    let dir = scratch("patch");
    let out = dir.join("global.json");
    let model = configs().join("flat_torus.json");
    ok(&["patch", "--model", model.to_str().unwrap(), "--i0", "0.08", "--net-stride", "3", "--out", out.to_str().unwrap()]);
    let r = read(&out);
    assert!(r["stage"]["consistency"].as_f64().unwrap() <= 1e-6);
    let g = &r["global"];
    assert_eq!(g["net_cells"], 25);
    for v in g["gbar"].as_array().unwrap() {
        assert!((v[0].as_f64().unwrap() - 1.0).abs() <= 0.02);
    }
}

#[test]
fn errors_exit_with_two_and_name_the_file() {
    let dir = scratch("errors");
    let o = cli(&["smooth", "--metric", "/no/such/metric.json", "--i0", "0.1", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/metric.json"));
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"radius": 1.0, "nodes": 64, "generator": {"kind": "torus"}}"#).unwrap();
    let o = cli(&["cell", "--metric", bad.to_str().unwrap(), "--i0", "0.25", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
    assert_eq!(cli(&[]).status.code(), Some(2));
}

#[test]
fn failed_gates_exit_with_one() {
    let dir = scratch("gates");
    fs::copy(configs().join("flat.json"), dir.join("flat.json")).unwrap();
    let cfg = r#"{"metric": "flat.json", "i0": 0.25, "stages": {"smooth": false, "curvature": false},
                  "tolerances": {"cell_value": 1e-12}}"#;
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    let o = cli(&["pipeline", "--config", dir.join("cfg.json").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL cell.rel_value_error"));
    let r = read(&dir.join("report.json"));
    assert_eq!(r["passed"], false);
}
