use std::path::Path;
use std::process::{Command, Output};

use trustroute::harness::{synthetic_stream, EXIT_CONFIG, EXIT_IO};
use trustroute::persistence::write_query_stream;
use trustroute::CategoryId;

const CONFIG: &str = r#"
seed = 4
per_category = 10

[[pool]]
id = "agent_a"
[pool.backend.simulated]
default_accuracy = 0.5
seed = 1
accuracy = [{ role = "implicit_visual", category = "counting", p = 0.9 }]

[[pool]]
id = "agent_b"
[pool.backend.simulated]
default_accuracy = 0.6
seed = 2

[[pool]]
id = "agent_c"
[pool.backend.simulated]
default_accuracy = 0.4
seed = 3

[simulate]
trials = 2
steps = 30
sizes = [10, 20]
eval_queries = 10
"#;

fn trustroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustroute")).args(args).output().unwrap()
}

fn setup(dir: &Path) -> (String, String) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let stream = dir.join("stream.jsonl");
    let cats: Vec<CategoryId> = ["counting", "size", "orientation"].into_iter().map(CategoryId::from).collect();
    write_query_stream(&synthetic_stream(90, &cats, 4, 8, "cli"), &stream).unwrap();
    (cfg.to_string_lossy().into_owned(), stream.to_string_lossy().into_owned())
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn optimize_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, stream) = setup(dir.path());
    let mut snapshots = Vec::new();
    for run in ["one", "two"] {
        let out_dir = dir.path().join(run);
        let out = trustroute(&["optimize", "--config", &cfg, "--stream", &stream, "--out-dir", out_dir.to_str().unwrap()]);
        ok(&out);
        assert!(String::from_utf8_lossy(&out.stdout).contains("optimized 30 queries"));
        snapshots.push(std::fs::read(out_dir.join("snapshot.json")).unwrap());
        assert!(out_dir.join("trajectories.csv").exists());
        assert!(out_dir.join("summary.json").exists());
    }
    assert_eq!(snapshots[0], snapshots[1]);

    let other = dir.path().join("other");
    ok(&trustroute(&["optimize", "--config", &cfg, "--stream", &stream, "--seed", "5", "--out-dir", other.to_str().unwrap()]));
    assert_ne!(std::fs::read(other.join("snapshot.json")).unwrap(), snapshots[0]);
}

#[test]
fn evaluate_and_export_from_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, stream) = setup(dir.path());
    let snap = dir.path().join("trust.json");
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();
    ok(&trustroute(&[
        "optimize", "--config", &cfg, "--stream", &stream, "--snapshot-out", snap.to_str().unwrap(), "--out-dir", out_dir,
    ]));
    let before = std::fs::read(&snap).unwrap();
    let out = trustroute(&[
        "evaluate", "--config", &cfg, "--stream", &stream, "--snapshot-in", snap.to_str().unwrap(),
        "--parallelism", "3", "--out-dir", out_dir,
    ]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("routing:") && text.contains("overall"), "{text}");
    assert_eq!(std::fs::read(&snap).unwrap(), before);
    let out = trustroute(&["export", "--config", &cfg, "--snapshot-in", snap.to_str().unwrap(), "--out-dir", out_dir]);
    ok(&out);
    let scores = std::fs::read_to_string(Path::new(out_dir).join("scores.csv")).unwrap();
    assert!(scores.starts_with("agent_id,role_id,category_id,score"));
}

#[test]
fn simulate_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = setup(dir.path());
    let out_dir = dir.path().join("sim");
    let out = trustroute(&["simulate", "--config", &cfg, "--parallelism", "2", "--out-dir", out_dir.to_str().unwrap()]);
    ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(report["ablation"].as_array().unwrap().len(), 4);
    assert_eq!(report["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, stream) = setup(dir.path());
    let out_dir = dir.path().join("x");
    let out_dir = out_dir.to_str().unwrap();

    // Missing file.
    let out = trustroute(&["optimize", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_IO as i32));

    // Bad config value.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, CONFIG.replace("seed = 4", "seed = 4\nparallelism = 0")).unwrap();
    let out = trustroute(&["optimize", "--config", bad.to_str().unwrap(), "--stream", &stream]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));

    // Evaluate without a snapshot.
    let out = trustroute(&["evaluate", "--config", &cfg, "--stream", &stream, "--out-dir", out_dir]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));

    // Unknown flag.
    let out = trustroute(&["optimize", "--config", &cfg, "--bogus"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));

    // Stream item without ground truth.
    let no_truth = dir.path().join("no_truth.jsonl");
    std::fs::write(&no_truth, "{\"query_id\":\"a\",\"text\":\"How many cups?\",\"kind\":\"numeric\"}\n").unwrap();
    let out = trustroute(&["optimize", "--config", &cfg, "--stream", no_truth.to_str().unwrap(), "--out-dir", out_dir]);
    assert_eq!(out.status.code(), Some(EXIT_IO as i32));
    assert!(!Path::new(out_dir).join("snapshot.json").exists());

    // Remote agent in a simulation.
    let remote = dir.path().join("remote.toml");
    std::fs::write(
        &remote,
        format!("{CONFIG}\n[[pool]]\nid = \"r\"\n[pool.backend.remote]\nbase_url = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\n"),
    )
    .unwrap();
    let out = trustroute(&["simulate", "--config", remote.to_str().unwrap(), "--out-dir", out_dir]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
}
