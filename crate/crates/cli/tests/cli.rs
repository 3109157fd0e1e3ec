use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bigmas_core::designer::default_design;
use bigmas_core::gateway::{Phase, ScriptEntry};
use bigmas_tasks::{TaskInstance, TaskKind};

fn bigmas(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bigmas"))
        .args(args)
        .current_dir(dir)
        .env_remove("BIGMAS_BASE_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_tol_covers_every_length() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigmas(
        &[
            "gen", "--task", "tol", "--count", "8", "--seed", "7", "--out", "i.jsonl",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("i.jsonl")).unwrap();
    let mut lengths: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<TaskInstance>(l).unwrap())
        .map(|i| i.target["optimal_length"].as_u64().unwrap())
        .collect();
    lengths.sort_unstable();
    assert_eq!(lengths, (1..=8).collect::<Vec<_>>());

    let again = bigmas(
        &["gen", "--task", "tol", "--count", "8", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(stdout(&again), text);
}

#[test]
fn oracle_annotates_instances() {
    let dir = tempfile::tempdir().unwrap();
    let line = serde_json::to_string(&TaskInstance::game24([1, 1, 1, 1])).unwrap()
        + "\n"
        + &serde_json::to_string(&TaskInstance::six_fives(30)).unwrap()
        + "\n";
    fs::write(dir.path().join("in.jsonl"), line).unwrap();
    let o = bigmas(
        &["oracle", "--in", "in.jsonl", "--out", "out.jsonl"],
        dir.path(),
    );
    assert!(o.status.success());
    let out: Vec<TaskInstance> = fs::read_to_string(dir.path().join("out.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!out[0].oracle.as_ref().unwrap().solvable);
    assert!(out[1].oracle.as_ref().unwrap().solvable);
}

fn manifest(dir: &Path) {
    let design = format!(
        "```json\n{}\n```",
        default_design(TaskKind::Game24).to_document()
    );
    let entries = [
        ScriptEntry::new(Phase::Design, design),
        ScriptEntry::new(
            Phase::NodeExecution,
            r#"{"target_path":"candidates","action":"append","payload":{"expr":"(13-9)*(10-4)"}}"#,
        ),
        ScriptEntry::new(
            Phase::NodeExecution,
            r#"{"target_path":"validated","action":"update","payload":{"expr":"(13-9)*(10-4)","ok":true}}"#,
        ),
        ScriptEntry::new(
            Phase::NodeExecution,
            "target_path: ans\naction: replace\npayload: (13-9)*(10-4)",
        ),
    ];
    let text: String = entries
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    fs::write(dir.join("manifest.jsonl"), text).unwrap();
}

#[test]
fn scripted_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    manifest(dir.path());
    let args = |trace: &'static str| {
        [
            "run",
            "--task",
            "game24",
            "--problem",
            "4 9 10 13",
            "--backend",
            "scripted",
            "--manifest",
            "manifest.jsonl",
            "--trace",
            trace,
            "--strict",
        ]
    };
    let a = bigmas(&args("a.jsonl"), dir.path());
    let b = bigmas(&args("b.jsonl"), dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a).replace("a.jsonl", "b.jsonl"), stdout(&b));
    assert!(stdout(&a).contains("verdict: correct"));
    assert!(stdout(&a).contains("termination: sink"));
    let ta = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(ta, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert!(!ta.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bigmas(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        bigmas(&["gen", "--task", "chess", "--count", "1"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bigmas(&["gen", "--task", "tol", "--count", "0"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bigmas(
            &[
                "run",
                "--task",
                "game24",
                "--problem",
                "4,9,10,13",
                "--backend",
                "scripted"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    let strict = [
        "run",
        "--task",
        "game24",
        "--problem",
        "4,9,10,13",
        "--backend",
        "invalid-generator",
        "--strict",
    ];
    assert_eq!(bigmas(&strict, dir.path()).status.code(), Some(1));
    assert_eq!(
        bigmas(&strict[..strict.len() - 1], dir.path())
            .status
            .code(),
        Some(0)
    );
    fs::write(dir.path().join("bad.json"), r#"{"tasks": []}"#).unwrap();
    assert_eq!(
        bigmas(&["bench", "--config", "bad.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bigmas(&["stats", "--runs", "missing.jsonl"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_then_stats_reproduces_csvs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bench.json"),
        r#"{"tasks":["game24","sixfives","tol"],"methods":["bigmas","base"],"count":5,"seed":3,
            "backend":{"kind":"oracle"},"parallelism":3,"out_dir":"out"}"#,
    )
    .unwrap();
    let o = bigmas(&["bench", "--config", "bench.json", "--quiet"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert_eq!(
        fs::read_to_string(out.join("runs.jsonl"))
            .unwrap()
            .lines()
            .count(),
        30
    );
    let s = bigmas(
        &["stats", "--runs", "out/runs.jsonl", "--out", "again"],
        dir.path(),
    );
    assert!(s.status.success());
    for f in [
        "summary.csv",
        "topology.csv",
        "roles.csv",
        "routing.csv",
        "tokens.csv",
    ] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(stdout(&s).contains("all"));
}
