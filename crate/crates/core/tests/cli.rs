use std::process::Command;

fn fogbench() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fogbench"));
    c.env("FOGBENCH_LOG", "error").env_remove("FOGBENCH_CONFIG");
    c
}

const EPISODE: &str = r#"{
  "mode": "episode",
  "scenario": {"map_id": "flat-junction",
    "ego": {"start": "west.in_start", "end": "east.out_end", "target_speed": 12.0},
    "npcs": [{"model": "sedan", "speed": 2.0, "start": "west.in_mid", "end": "east.out_end"}],
    "weather": {"mor": 30.0, "sun_altitude": 45.0, "road_water": 0.0}, "seed": 1},
  "sim": {"max_frames": 150}
}"#;

#[test]
fn episode_writes_artifacts_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("episode.json");
    std::fs::write(&cfg, EPISODE).unwrap();
    let out = dir.path().join("run");
    let status = fogbench()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--sync", "inproc", "--mor", "inf"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["manifest.json", "stats.json", "trace.jsonl", "session_log.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["n_fog"], 0);
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(fogbench().args(["--mode", "bogus"]).output().unwrap().status.code(), Some(1));
    assert_eq!(fogbench().args(["--config", "/nonexistent/x.json"]).status().unwrap().code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("episode.json");
    std::fs::write(&cfg, EPISODE).unwrap();
    let status = fogbench()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(["--mor", "-3"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert_eq!(fogbench().arg("--help").output().unwrap().status.code(), Some(0));
}
