use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use bigmas_bench::metrics::METRICS_VERSION;
use bigmas_bench::{
    compute_metrics, read_records, run_benchmark, run_benchmark_with, BackendConfig, BenchConfig,
    Method,
};
use bigmas_core::gateway::{Phase, UsageLedger};
use bigmas_core::trace;
use bigmas_tasks::TaskKind;

const SHARE_TOL: f64 = 0.1;

fn config(out: &Path, parallelism: usize) -> BenchConfig {
    BenchConfig {
        tasks: TaskKind::ALL.to_vec(),
        methods: Method::ALL.to_vec(),
        count: 3,
        seed: 5,
        instances: None,
        backend: BackendConfig::Oracle,
        parallelism,
        run: Default::default(),
        baseline: Default::default(),
        out_dir: out.to_path_buf(),
        record_wall_time: false,
        write_traces: true,
    }
}

#[test]
fn outputs_are_byte_identical_across_parallelism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_benchmark(&config(a.path(), 1)).unwrap();
    let rb = run_benchmark(&config(b.path(), 4)).unwrap();
    assert_eq!(ra, rb);
    for f in [
        "runs.jsonl",
        "summary.csv",
        "topology.csv",
        "roles.csv",
        "routing.csv",
        "tokens.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(ra.len(), TaskKind::ALL.len() * 3 * 4);
    assert!(
        ra.iter().all(|r| r.correct),
        "oracle backend solves everything"
    );
    assert_eq!(read_records(&a.path().join("runs.jsonl")).unwrap(), ra);
}

#[test]
fn ledgers_are_conserved_and_shares_sum_to_100() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_benchmark(&config(dir.path(), 2)).unwrap();
    for r in &records {
        let name = bigmas_bench::runner::trace_file_name(r);
        let text = fs::read_to_string(dir.path().join("traces").join(name)).unwrap();
        let recs = trace::from_jsonl(&text).unwrap();
        assert_eq!(
            UsageLedger::from_calls(trace::trace_calls(&recs)),
            r.ledger,
            "{}",
            r.instance_id
        );
        assert_eq!(r.ledger.total().calls as usize, r.calls);
    }
    let summary = compute_metrics(&records);
    for g in &summary.groups {
        let sum: f64 = Phase::ALL.iter().map(|p| g.token_share_pct(*p)).sum();
        assert!(
            (sum - 100.0).abs() <= SHARE_TOL,
            "{} {:?}: {sum}",
            g.task,
            g.method
        );
    }
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("version,task,method,metric,value\n"));
    assert!(csv.contains(&format!("{METRICS_VERSION},all,bigmas,accuracy_pct,100\n")));
}

#[test]
fn cancellation_leaves_complete_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cancel = AtomicBool::new(false);
    let mut seen = 0;
    let records = run_benchmark_with(&config(dir.path(), 2), &cancel, &mut |_| {
        seen += 1;
        if seen == 5 {
            cancel.store(true, Ordering::SeqCst);
        }
    })
    .unwrap();
    assert_eq!(records.len(), 5);
    let text = fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(
        read_records(&dir.path().join("runs.jsonl")).unwrap(),
        records
    );
}

#[test]
fn config_parsing() {
    let cfg = BenchConfig::from_json(
        r#"{"tasks":["game24"],"methods":["bigmas","tot"],"count":2,"seed":1,
            "backend":{"kind":"invalid-generator"},"out_dir":"x","run":{"t_max":9}}"#,
    )
    .unwrap();
    assert_eq!(cfg.run.t_max, 9);
    assert_eq!(cfg.parallelism, 1);
    assert!(cfg.write_traces && !cfg.record_wall_time);
    assert!(BenchConfig::from_json(r#"{"tasks":[],"methods":["base"],"count":1,"seed":1,"backend":{"kind":"oracle"},"out_dir":"x"}"#).is_err());
    assert!(BenchConfig::from_json(r#"{"tasks":["game24"],"methods":["base"],"count":1,"seed":1,"backend":{"kind":"oracle"},"out_dir":"x","bogus":1}"#).is_err());
}

#[test]
fn invalid_generator_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    cfg.methods = vec![Method::Bigmas];
    cfg.backend = BackendConfig::InvalidGenerator;
    let records = run_benchmark(&cfg).unwrap();
    assert!(records.iter().all(|r| !r.correct && r.fallback.is_some()));
}
