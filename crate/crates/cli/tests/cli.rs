use std::path::Path;
use std::process::{Command, Output};

fn ricconf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricconf"))
        .args(args)
        .env("RICCONF_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(out: &Path, command: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(out.join(format!("{command}-manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

const GENERATE: [&str; 9] = ["generate", "--m", "5", "--intensity", "low", "--steps", "3000", "--seed", "7"];

#[test]
fn generate_writes_requested_rows_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = ricconf(&GENERATE, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(a.path().join("genc_m5_low_s7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3001);
    let sum = |d: &Path| manifest(d, "generate")["artifacts"][0]["sha256"].as_str().unwrap().to_string();
    assert_eq!(sum(a.path()), sum(b.path()));
    let m = manifest(a.path(), "generate");
    assert_eq!(m["config"]["seed"], 7);
    let sidecar = std::fs::read_to_string(a.path().join("genc_m5_low_s7.meta.json")).unwrap();
    assert!(sidecar.contains("\"steps\": 3000") || sidecar.contains("\"steps\":3000"));
}

#[test]
fn zero_xapps_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ricconf(&["generate", "--m", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "steps = 500\nintensity = [\"high\"]\n").unwrap();
    let o = ricconf(
        &["generate", "--m", "6", "--steps", "9000", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("genc_m6_high_s1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn annotate_agrees_with_stored_labels() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ricconf(&GENERATE, dir.path()).status.success());
    let input = dir.path().join("genc_m5_low_s7.csv");
    let o = ricconf(&["annotate", "--input", input.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("agreement with stored labels 100.00%"));
}

#[test]
fn scenario_reproduces_trigger_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/opencellid_dublin.csv");
    let o = ricconf(
        &["scenario", "--preset", "es-mro", "--topology", fixture.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("topology: 13 cells"));
    assert!(text.contains("t= 110 #2   trigger on Throughput"));
    assert!(text.contains("rule: Direct between ES, MRO on TXP"));
    let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let kinds: Vec<String> = events
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds, ["action", "violation", "trigger", "classification", "mitigation", "recovery"]);
    let positions = std::fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    assert!(positions.starts_with("id,x,y,radius\n"));
    assert_eq!(manifest(dir.path(), "scenario")["summary"]["triggers"], 1);
}

#[test]
fn eval_emits_one_row_per_method_and_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = ricconf(
        &[
            "eval", "--m", "5", "--intensity", "high", "--steps", "4000", "--seeds", "1,2", "--epochs", "1", "--arch",
            "rule,tabular",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("method,m,intensity,runs"));
    assert!(rows[1].starts_with("rule,5,high,1,100.0000"));
    assert!(rows[2].starts_with("tabular,5,high,2,"));
}

#[test]
fn bench_requires_trained_models_for_learned_methods() {
    let dir = tempfile::tempdir().unwrap();
    let o = ricconf(&["bench", "--arch", "graphmp"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ricconf train --arch graphmp"));
}

#[test]
fn train_then_bench_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = ricconf(
        &["train", "--m", "5", "--intensity", "high", "--steps", "4000", "--epochs", "1", "--arch", "graphmp"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = dir.path().join("model_graphmp.json");
    let o = ricconf(
        &["bench", "--m", "5,10", "--steps", "2000", "--arch", "rule,graphmp", "--model", model.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    // at least five timed trials per row
    assert!(csv.lines().skip(1).all(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap() >= 5));
    let o = ricconf(&["report"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("| bench |"));
}

#[test]
fn report_detects_changed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ricconf(&GENERATE, dir.path()).status.success());
    std::fs::write(dir.path().join("genc_m5_low_s7.csv"), "tampered").unwrap();
    let o = ricconf(&["report"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("changed"));
}
