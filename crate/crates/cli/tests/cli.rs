use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

fn smartpg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartpg"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("SMARTPG_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn case_validate_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let c9 = case("case9.json");
    let o = smartpg(dir.path(), &["case", "validate", c9.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("9 buses"));

    let m = case("case14.m");
    assert_eq!(code(&smartpg(dir.path(), &["case", "import", m.to_str().unwrap(), "-o", "c14.json"])), 0);
    let imported = json(&dir.path().join("c14.json"));
    assert_eq!(imported, json(&case("case14.json")));

    std::fs::write(dir.path().join("bad.json"), r#"{"base_mva": 100}"#).unwrap();
    assert_eq!(code(&smartpg(dir.path(), &["case", "validate", "bad.json"])), 1);
}

#[test]
fn solve_writes_report_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let c9 = case("case9.json");
    let o = smartpg(dir.path(), &["--deterministic", "solve", c9.to_str().unwrap(), "-o", "r.json", "--history", "h.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["report"]["converged"], true);
    assert_eq!(r["report"]["wall_time"], 0.0);
    let history = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let iters = r["report"]["iterations"].as_u64().unwrap() as usize;
    assert_eq!(history.lines().count(), iters + 2);

    // Its own solution is an exact warm start.
    let ws = serde_json::json!({
        "x": r["point"]["x"]["va"].as_array().unwrap().iter()
            .chain(r["point"]["x"]["vm"].as_array().unwrap())
            .chain(r["point"]["x"]["pg"].as_array().unwrap())
            .chain(r["point"]["x"]["qg"].as_array().unwrap())
            .cloned().collect::<Vec<_>>(),
        "lambda": r["point"]["lambda"], "mu": r["point"]["mu"], "z": r["point"]["z"],
    });
    std::fs::write(dir.path().join("ws.json"), ws.to_string()).unwrap();
    let o = smartpg(dir.path(), &["solve", c9.to_str().unwrap(), "--warm-start", "ws.json", "--no-fallback", "-o", "r2.json"]);
    assert_eq!(code(&o), 0);
    assert!(json(&dir.path().join("r2.json"))["report"]["iterations"].as_u64().unwrap() <= 3);
}

#[test]
fn exit_codes_follow_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let c9 = case("case9.json");
    let c9 = c9.to_str().unwrap();
    assert_eq!(code(&smartpg(dir.path(), &["solve"])), 1);
    assert_eq!(code(&smartpg(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&smartpg(dir.path(), &["solve", "missing.json"])), 4);
    std::fs::write(dir.path().join("ws.json"), "{\"x\": [1.0]}").unwrap();
    assert_eq!(code(&smartpg(dir.path(), &["solve", c9, "--warm-start", "ws.json"])), 2);
    assert_eq!(code(&smartpg(dir.path(), &["dataset", "gen", c9, "-n", "5", "-t", "1.5", "-o", "d.jsonl"])), 2);

    // Loads far beyond generation capacity cannot converge.
    let mut heavy = json(&case("case9.json"));
    for b in heavy["buses"].as_array_mut().unwrap() {
        let pd = b["pd"].as_f64().unwrap();
        b["pd"] = (pd * 3.0).into();
    }
    std::fs::write(dir.path().join("heavy.json"), heavy.to_string()).unwrap();
    assert_eq!(code(&smartpg(dir.path(), &["solve", "heavy.json", "-o", "r.json"])), 3);
    assert_eq!(json(&dir.path().join("r.json"))["report"]["converged"], false);

    let o = Command::new(env!("CARGO_BIN_EXE_smartpg"))
        .args(["solve", c9])
        .env("SMARTPG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn training_toggles_and_downstream_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c9 = case("case9.json");
    let c9 = c9.to_str().unwrap();
    let ok = |args: &[&str]| {
        let o = smartpg(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["--seed", "5", "--deterministic", "dataset", "gen", c9, "-n", "50", "-o", "d.jsonl", "--rejects", "rej.json"]);
    assert_eq!(std::fs::read_to_string(d.join("d.jsonl")).unwrap().lines().count(), 50);
    ok(&["--seed", "5", "train", c9, "d.jsonl", "--epochs", "3", "-o", "phys.json", "--log", "phys.csv"]);
    ok(&["--seed", "5", "train", c9, "d.jsonl", "--epochs", "3", "--no-physics", "-o", "sup.json", "--log", "sup.csv"]);
    assert_ne!(std::fs::read(d.join("phys.json")).unwrap(), std::fs::read(d.join("sup.json")).unwrap());
    let log = std::fs::read_to_string(d.join("sup.csv")).unwrap();
    let header: Vec<&str> = log.lines().next().unwrap().split(',').collect();
    for line in log.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        for name in ["L_eqn", "L_ieq", "L_lag", "L_fX"] {
            let k = header.iter().position(|h| *h == name).unwrap();
            assert_eq!(cells[k], 0.0, "{name}");
        }
    }
    let phys = std::fs::read_to_string(d.join("phys.csv")).unwrap();
    assert!(phys.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse::<f64>().unwrap() > 0.0);

    ok(&["--seed", "5", "train", c9, "d.jsonl", "--epochs", "2", "--separate-heads", "-o", "sep.json"]);
    assert_eq!(json(&d.join("sep.json"))["topology"]["architecture"], "separate");

    std::fs::write(d.join("loads.json"), r#"{"pd":[0,0,0,0,90,0,100,0,125],"qd":[0,0,0,0,30,0,35,0,50]}"#).unwrap();
    ok(&["predict", c9, "phys.json", "--loads", "loads.json", "-o", "ws.json"]);
    let ws = json(&d.join("ws.json"));
    assert_eq!(ws["x"].as_array().unwrap().len(), 24);
    assert!(ws["mu"].as_array().unwrap().iter().all(|m| m.as_f64().unwrap() >= 0.0));
    ok(&["solve", c9, "--warm-start", "ws.json", "-o", "r.json"]);
    assert_eq!(json(&d.join("r.json"))["report"]["converged"], true);

    ok(&["--deterministic", "ablate", c9, "d.jsonl", "--limit", "10", "-o", "a.csv"]);
    let table = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);

    ok(&["--deterministic", "bench", c9, "phys.json", "d.jsonl", "-o", "m.json", "--csv", "s.csv"]);
    let m = json(&d.join("m.json"));
    assert_eq!(m["scenarios"], 10);
    assert!(m["su"].is_null());
    ok(&["--deterministic", "bench", c9, "phys.json", "d.jsonl", "--strategy", "cold", "-o", "cold.json"]);
    assert_eq!(json(&d.join("cold.json"))["iteration_ratio"], 1.0);
    assert_eq!(code(&smartpg(d, &["bench", c9, "phys.json", "d.jsonl", "--strategy", "nope", "-o", "x.json"])), 2);

    ok(&["--seed", "5", "morph", c9, "phys.json", "d.jsonl", "--target-mape", "1e9", "-o", "same.json", "--report", "mr.json"]);
    assert_eq!(json(&d.join("same.json")), json(&d.join("phys.json")));
    assert_eq!(json(&d.join("mr.json"))["steps"].as_array().unwrap().len(), 0);
}

#[test]
fn config_file_sets_options() {
    let dir = tempfile::tempdir().unwrap();
    let c9 = case("case9.json");
    std::fs::write(dir.path().join("cfg.json"), r#"{"ipm": {"max_iterations": 2}, "workers": 2}"#).unwrap();
    let o = smartpg(dir.path(), &["--config", "cfg.json", "solve", c9.to_str().unwrap(), "-o", "r.json"]);
    assert_eq!(code(&o), 3);
    std::fs::write(dir.path().join("bad.json"), r#"{"ipm": {"max_iterations": 2}, "typo": 1}"#).unwrap();
    assert_eq!(code(&smartpg(dir.path(), &["--config", "bad.json", "solve", c9.to_str().unwrap()])), 2);
}
