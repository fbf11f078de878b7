use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn psafety(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psafety"))
        .args(args)
        .output()
        .expect("spawn psafety")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = psafety(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("build-graph"));
    assert_eq!(psafety(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        psafety(&["query", "--graph", "x.tsv"]).status.code(),
        Some(1),
        "keywords are required"
    );
    assert_eq!(
        psafety(&["build-graph", "--out", "g.tsv"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = psafety(&["simulate", "--config", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent.toml"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "duration = \"long\"\n").unwrap();
    let o = psafety(&["simulate", "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let csv = dir.path().join("t.csv");
    fs::write(&csv, "time,coolant_temp,tank_temp,tank_conc\n1,299,abc,2\n").unwrap();
    let o = psafety(&["detect", "--telemetry", p(&csv)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_detect_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let tele = dir.path().join("tele.csv");
    let cfg = root().join("configs/reference.toml");
    let o = psafety(&[
        "simulate",
        "--config",
        p(&cfg),
        "--include-feed",
        "--out",
        p(&tele),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&tele).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "time,coolant_temp,tank_temp,tank_conc,feed_temp"
    );
    assert_eq!(text.lines().count(), 1001);

    let alarms = dir.path().join("alarms.csv");
    let svg = dir.path().join("svg");
    let o = psafety(&[
        "detect",
        "--telemetry",
        p(&tele),
        "--config",
        p(&cfg),
        "--out",
        p(&alarms),
        "--svg-dir",
        p(&svg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(&alarms).unwrap();
    let first = rows
        .lines()
        .skip(1)
        .find(|l| l.contains("feed_temp") && l.contains("alarm"))
        .expect("feed alarm");
    let t: f64 = first.split(',').next().unwrap().parse().unwrap();
    assert!(t > 200.0 && t <= 400.0, "{first}");
    assert!(svg.join("telemetry.svg").exists());
    assert!(svg.join("feed_temp_mean_20.svg").exists());

    let same = psafety(&["simulate", "--config", p(&cfg), "--include-feed"]);
    assert_eq!(same.stdout, text.as_bytes(), "same seed, same telemetry");
    let other = psafety(&[
        "simulate",
        "--config",
        p(&cfg),
        "--include-feed",
        "--seed",
        "8",
    ]);
    assert_ne!(other.stdout, text.as_bytes());
}

#[test]
fn empty_telemetry_gives_header_only_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("alarms.csv");
    let o = psafety(&["detect", "--telemetry", p(&empty), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn ingest_review_build_query() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = root().join("fixtures/cstr_corpus");
    let cand = dir.path().join("cand.json");
    let tmpl = dir.path().join("review.txt");
    let o = psafety(&[
        "ingest",
        "--corpus",
        p(&corpus),
        "--out",
        p(&cand),
        "--template",
        p(&tmpl),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&tmpl).unwrap(),
        fs::read_to_string(root().join("fixtures/cstr_corpus.review")).unwrap()
    );

    let g = dir.path().join("g.tsv");
    let o = psafety(&["build-graph", "--candidates", p(&cand), "--out", p(&g)]);
    assert_eq!(o.status.code(), Some(2), "pending candidates are refused");
    assert!(stderr(&o).contains("pending"));
    assert!(!g.exists());

    let reviewed = dir.path().join("reviewed.json");
    let audit = dir.path().join("audit.json");
    let o = psafety(&[
        "review",
        "--candidates",
        p(&cand),
        "--decisions",
        p(&tmpl),
        "--out",
        p(&reviewed),
        "--audit",
        p(&audit),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = psafety(&["build-graph", "--candidates", p(&reviewed), "--out", p(&g)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fixture = fs::read(root().join("fixtures/cstr_graph.tsv")).unwrap();
    assert_eq!(fs::read(&g).unwrap(), fixture);

    let g2 = dir.path().join("g2.tsv");
    let review = root().join("fixtures/cstr_corpus.review");
    let o = psafety(&[
        "build-graph",
        "--corpus",
        p(&corpus),
        "--review",
        p(&review),
        "--out",
        p(&g2),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&g2).unwrap(), fixture);

    let o = psafety(&[
        "query",
        "--graph",
        p(&g),
        "-k",
        "tank temperature",
        "-k",
        "high",
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["chains"][0]["nodes"].as_array().unwrap().len(), 4);
    let o = psafety(&[
        "query",
        "--graph",
        p(&g),
        "-k",
        "tank temperature",
        "-k",
        "high",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    let text = &text[text.find("recommendations:").unwrap()..];
    let heater = text.find("Turn off heater").unwrap();
    let coolant = text.find("Open coolant valve").unwrap();
    assert!(heater < coolant);
}

#[test]
fn unknown_review_ids_apply_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("cand.json");
    let o = psafety(&[
        "ingest",
        "--corpus",
        p(&root().join("fixtures/tables")),
        "--out",
        p(&cand),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dec = dir.path().join("d.txt");
    fs::write(&dec, "0000000000000000,accept\n").unwrap();
    let out = dir.path().join("out.json");
    let o = psafety(&[
        "review",
        "--candidates",
        p(&cand),
        "--decisions",
        p(&dec),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0000000000000000"));
    assert!(!out.exists());
}

#[test]
fn export_graph_formats() {
    let g = root().join("fixtures/cstr_graph.tsv");
    let o = psafety(&["export-graph", "--graph", p(&g), "--format", "graphml"]);
    assert!(o.status.success());
    let xml = String::from_utf8(o.stdout).unwrap();
    assert!(xml.contains("<graphml") && xml.contains("turn-off-heater"));
    let o = psafety(&["export-graph", "--graph", p(&g), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 48);
    assert_eq!(v["triples"].as_array().unwrap().len(), 48);
    let o = psafety(&["export-graph", "--graph", p(&g), "--format", "tsv"]);
    assert_eq!(o.stdout, fs::read(&g).unwrap());
}

#[test]
fn serve_reports_busy_port() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let o = psafety(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("cannot listen on"), "{}", stderr(&o));
}
