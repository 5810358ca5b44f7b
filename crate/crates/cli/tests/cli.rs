use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin(name: &str) -> Command {
    let path = match name {
        "wps-sim" => env!("CARGO_BIN_EXE_wps-sim"),
        "wps-crawl" => env!("CARGO_BIN_EXE_wps-crawl"),
        "wps-track" => env!("CARGO_BIN_EXE_wps-track"),
        "wps-report" => env!("CARGO_BIN_EXE_wps-report"),
        _ => unreachable!(),
    };
    let mut c = Command::new(path);
    c.env_remove("WPS_ENDPOINT");
    c
}

fn run(name: &str, args: &[&str]) -> Output {
    bin(name).args(args).output().expect("binary runs")
}

fn ok(name: &str, args: &[&str]) -> String {
    let out = run(name, args);
    assert!(out.status.success(), "{name} {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(name: &str, args: &[&str]) -> i32 {
    run(name, args).status.code().expect("exited")
}

fn oui_db() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/ieee-oui.txt").display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// A one-vendor world dense enough for a sweep to land hits.
fn make_world(dir: &Path) -> PathBuf {
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
          "seed": 5, "start_date": "2024-05-01",
          "clusters": [{"center": {"lat": 45.5, "lon": -122.6}, "stddev_km": 3.0, "ap_count": 20000}],
          "vendor_mix": {"f0:9f:c2": 1.0},
          "movers": {"fraction": 0.01, "min_km": 2.0, "max_km": 50.0, "window_days": 3},
          "churn": {"off_prob": 0.01, "on_prob": 0.05}
        }"#,
    )
    .unwrap();
    let world = dir.join("world.json");
    ok("wps-sim", &["gen", "--config", &s(&cfg), "--out", &s(&world)]);
    world
}

#[test]
fn offline_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let world = make_world(d);
    let state = d.join("state.json");

    // Flag values come from the config file; the command line overrides per_oui.
    let flags = d.join("flags.json");
    std::fs::write(&flags, format!(r#"{{"oui_db": "{}", "per_oui": 10, "only_oui": ["f0:9f:c2"]}}"#, oui_db())).unwrap();
    let summary = ok(
        "wps-crawl",
        &["sweep", "--config", &s(&flags), "--per-oui", "16384", "--world", &s(&world), "--out", &s(&state), "--seed", "3"],
    );
    assert!(summary.contains("Completed: 328 requests"), "{summary}");

    let csv = ok("wps-crawl", &["export", "--state", &s(&state)]);
    assert!(csv.starts_with("bssid,lat,lon,first_seen,last_seen\n"));
    let rows = csv.lines().count() - 1;
    assert!(rows > 400, "only {rows} discovered");
    let corpus = d.join("corpus.csv");
    std::fs::write(&corpus, &csv).unwrap();
    let geojson = ok("wps-crawl", &["export", "--state", &s(&state), "--format", "geojson"]);
    assert!(geojson.contains("FeatureCollection"));

    let vendors = ok("wps-report", &["vendors", "--state", &s(&state), "--oui-db", &oui_db(), "--table", "vendor"]);
    assert!(vendors.lines().nth(1).unwrap().ends_with(&format!(",{rows}")), "{vendors}");
    let bins = ok("wps-report", &["bins", "--state", &s(&state), "--precision", "3"]);
    assert!(bins.starts_with("geohash,count\n"));
    let binned: usize = bins.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(binned, rows);

    let snaps = d.join("snaps");
    let out = ok("wps-track", &["resample", "--snapshots", &s(&snaps), "--sample", &s(&corpus), "--world", &s(&world), "--days", "4"]);
    assert_eq!(out.lines().count(), 5);
    let decay = ok("wps-track", &["decay", "--snapshots", &s(&snaps)]);
    assert_eq!(decay.lines().count(), 6);
    assert!(decay.lines().nth(1).unwrap().ends_with(",1.000000"));
    ok("wps-track", &["lifetimes", "--snapshots", &s(&snaps)]);
    let movers = ok("wps-track", &["movers", "--snapshots", &s(&snaps), "--threshold-km", "1"]);
    assert!(movers.starts_with("bssid,"));
    let stats = ok("wps-track", &["validate", "--reference", &s(&corpus), "--candidate", &s(&corpus)]);
    assert!(stats.contains("\"within_fraction\": 1.0"), "{stats}");

    // Resampling advanced and saved the world.
    let tick = ok("wps-sim", &["tick", "--world", &s(&world), "--days", "1"]);
    assert!(tick.starts_with("day 5 (2024-05-06)"), "{tick}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code("wps-crawl", &["sweep", "--bogus"]), 2);
    assert_eq!(code("wps-track", &["decay"]), 2);
    assert_eq!(code("wps-report", &["bins", "--state", &s(&d.join("missing.json"))]), 3);
    std::fs::write(d.join("bad.json"), "{").unwrap();
    assert_eq!(code("wps-crawl", &["export", "--state", &s(&d.join("bad.json"))]), 3);
    assert_eq!(code("wps-sim", &["gen", "--out", &s(&d.join("w.json"))]), 2);
    assert_eq!(code("wps-crawl", &["sweep", "--config", &s(&d.join("bad.json")), "--out", "x"]), 2);

    // Nothing listens on port 9: every chunk fails.
    let out = run(
        "wps-crawl",
        &[
            "sweep", "--endpoint", "http://127.0.0.1:9", "--oui-db", &oui_db(), "--only-oui", "f0:9f:c2",
            "--per-oui", "50", "--rate", "1000", "--out", &s(&d.join("net.json")),
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn crawl_over_http_against_served_world() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let world = make_world(d);
    let mut server = bin("wps-sim")
        .args(["serve", "--world", &s(&world), "--port", "0", "--nearby-cap", "20"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let endpoint = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(endpoint.starts_with("http://127.0.0.1:"), "{line}");

    let text = std::fs::read_to_string(&world).unwrap();
    let start = text.find("\"bssid\":\"").unwrap() + 9;
    let seed = &text[start..start + 17];
    let seeds = d.join("seeds.csv");
    std::fs::write(&seeds, format!("bssid\n{seed}\n")).unwrap();
    let region = d.join("region.json");
    std::fs::write(&region, r#"{"type": "box", "min_lat": 45.45, "max_lat": 45.55, "min_lon": -122.68, "max_lon": -122.52}"#).unwrap();
    let state = d.join("region-state.json");
    let result = run(
        "wps-crawl",
        &["region", "--endpoint", &endpoint, "--seeds", &s(&seeds), "--region", &s(&region), "--out", &s(&state), "--rate", "500"],
    );
    server.kill().unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = ok("wps-crawl", &["export", "--state", &s(&state)]);
    assert!(csv.lines().count() > 20, "{csv}");
}
