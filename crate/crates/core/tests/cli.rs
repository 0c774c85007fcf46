use std::path::Path;
use std::process::{Command, Output};

use flexbench::bench::{Instance, Scenario, TuningGrid};
use flexbench::domain::TimeGrid;
use flexbench::prices::{parse_price_csv, PriceConfig};
use flexbench::profiles::{generate_fleet, ingest_profiles, ProfileGenConfig};

fn flexbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexbench")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> usize {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().position(|h| h == name).unwrap()
}

#[test]
fn optimal_alone_has_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = flexbench(&["bench", "--methods", "optimal", "--price", "sin", "--n-evs", "10", "--seeds", "1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("results.csv");
    let rows = read_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&csv, "gap")].parse::<f64>().unwrap(), 0.0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["median_gap"]["optimal"], 0.0);
}

#[test]
fn missing_config_names_the_path() {
    let out = flexbench(&["bench", "--config", "/no/such/dir/bench.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/bench.json"));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("from_config");
    let cfg = dir.path().join("bench.json");
    let text = serde_json::json!({
        "methods": ["optimal", "fo"],
        "price": {"kind": "synth_future"},
        "fleet": {"n_evs": 15},
        "seeds": [3, 4],
        "out_dir": out_dir,
    });
    std::fs::write(&cfg, text.to_string()).unwrap();
    let out = flexbench(&["bench", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = out_dir.join("results.csv");
    let rows = read_rows(&csv);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[column(&csv, "price")] == "FUTURE"));

    std::fs::write(&cfg, r#"{"methodz": ["fo"]}"#).unwrap();
    assert_eq!(flexbench(&["bench", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn phigh_scenario_uses_22_kw() {
    let dir = tempfile::tempdir().unwrap();
    let out = flexbench(&["bench", "--methods", "optimal,uncontrolled", "--n-evs", "12", "--seeds", "0", "--scenario", "phigh", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let csv = dir.path().join("results.csv");
    assert!(read_rows(&csv).iter().all(|r| &r[column(&csv, "scenario")] == "PHIGH"));

    let cfg = flexbench::bench::BenchConfig {
        fleet: ProfileGenConfig { n_evs: 12, ..Default::default() },
        scenario: Scenario::Phigh,
        ..Default::default()
    };
    let inst = Instance::build(&cfg, 0, &TimeGrid::default()).unwrap();
    assert!(!inst.uncontrolled.events.is_empty());
    assert!(inst.uncontrolled.events.iter().all(|e| e.max_power_kw == 22.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let under_file = file.join("out");
    let io = flexbench(&["bench", "--methods", "optimal", "--n-evs", "3", "--seeds", "0", "--out", p(&under_file)]);
    assert_eq!(io.status.code(), Some(4));

    let missing_prices = format!("csv:{}", p(&dir.path().join("none.csv")));
    let failed = flexbench(&["bench", "--methods", "optimal", "--price", &missing_prices, "--n-evs", "3", "--seeds", "0", "--out", p(dir.path())]);
    assert_eq!(failed.status.code(), Some(3));
    assert!(read_rows(&dir.path().join("results.csv"))[0][column(&dir.path().join("results.csv"), "error")].contains("none.csv"));

    let threads = Command::new(env!("CARGO_BIN_EXE_flexbench"))
        .args(["export-prices", "--out", p(&dir.path().join("p.csv"))])
        .env("FLEXBENCH_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
    assert_eq!(flexbench(&["bench", "--seeds", "4..2"]).status.code(), Some(2));
    assert_eq!(flexbench(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn exported_profiles_ingest_back() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        assert_eq!(flexbench(&["export-profiles", "--n-evs", "25", "--seed", "9", "--out", p(path)]).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let grid = TimeGrid::default();
    let generated = generate_fleet(&ProfileGenConfig { n_evs: 25, seed: 9, ..Default::default() }, &grid).unwrap();
    assert_eq!(ingest_profiles(&a, &grid).unwrap(), generated);

    let empty = dir.path().join("empty.json");
    assert_eq!(flexbench(&["export-profiles", "--n-evs", "0", "--out", p(&empty)]).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&empty).unwrap()).unwrap();
    assert_eq!(v, serde_json::json!([]));
}

#[test]
fn exported_prices_match_the_signal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("future.csv");
    assert_eq!(flexbench(&["export-prices", "--price", "future", "--seed", "5", "--out", p(&path)]).status.code(), Some(0));
    let grid = TimeGrid::default();
    let want = PriceConfig::SynthFuture { seed: None, params: Default::default() }.build(&grid, 5).unwrap();
    assert_eq!(parse_price_csv(&std::fs::read_to_string(&path).unwrap()).unwrap(), want.values);

    // An exported week can be fed back in as a CSV signal.
    let csv_arg = format!("csv:{}", p(&path));
    let out = flexbench(&["bench", "--methods", "optimal,fo", "--price", &csv_arg, "--n-evs", "8", "--seeds", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tune_single_point_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = flexbench(&["tune", "--method", "fo", "--grid", "t_es=4;tf=2", "--n-evs", "40", "--seeds", "0,1", "--out", p(&out_dir)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("tuning_fo.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t_es,tf,mean_gap,mean_compression");
}

#[test]
fn coarse_dfo_grid_is_selectable() {
    let g = TuningGrid::parse("dfo-paper").unwrap();
    let hours = [0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0];
    assert_eq!(g.axes.len(), 2);
    for (_, values) in &g.axes {
        assert_eq!(values.len(), hours.len());
        assert!(values.iter().zip(hours).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
