use bigmas_bench::runner::GraphStats;
use bigmas_bench::{compute_metrics, Method, RunRecord, Stats};
use bigmas_core::gateway::{Phase, Usage, UsageLedger};
use bigmas_core::graph::RoleCategory;
use bigmas_tasks::{verify, TaskInstance, TaskKind};
use proptest::prelude::*;

const PCT_TOL: f64 = 0.1;

fn record(
    task: TaskKind,
    method: Method,
    correct: bool,
    nodes: usize,
    routing: usize,
    usage: &[(Phase, u64, u64)],
) -> RunRecord {
    let inst = TaskInstance::six_fives(30);
    let mut ledger = UsageLedger::default();
    for &(phase, p, c) in usage {
        ledger.record(
            phase,
            Usage {
                prompt_tokens: p,
                completion_tokens: c,
            },
        );
    }
    RunRecord {
        task,
        instance_id: "x".into(),
        method,
        backend: "test".into(),
        answer: String::new(),
        correct,
        verdict: verify(&inst, if correct { "5+5+5+5+5+5" } else { "" }),
        termination: None,
        steps: 0,
        corrections: 0,
        routing_decisions: routing,
        hops: routing,
        graph: (method == Method::Bigmas).then(|| GraphStats {
            nodes,
            edges: nodes - 1,
            cyclic: false,
            roles: (0..nodes)
                .map(|i| RoleCategory::ALL[i % RoleCategory::ALL.len()])
                .collect(),
        }),
        design_source: None,
        fallback: None,
        calls: usage.len(),
        ledger,
        error: None,
        wall_time_ms: None,
    }
}

#[test]
fn worked_examples() {
    let rs: Vec<RunRecord> = (0..10)
        .map(|i| {
            record(
                TaskKind::Game24,
                Method::Bigmas,
                i < 4,
                3,
                0,
                &[(Phase::NodeExecution, 1, 1)],
            )
        })
        .collect();
    let s = compute_metrics(&rs);
    let g = s.group("game24", Method::Bigmas).unwrap();
    assert_eq!(g.accuracy_pct, 40.0);
    let nodes = g.nodes.unwrap();
    assert_eq!((nodes.mean, nodes.sd), (3.0, 0.0));
    assert!(s.group("all", Method::Bigmas).is_some());
}

fn arb_record() -> impl Strategy<Value = RunRecord> {
    (
        prop::sample::select(TaskKind::ALL.to_vec()),
        prop::sample::select(Method::ALL.to_vec()),
        any::<bool>(),
        2usize..=10,
        0usize..50,
        prop::collection::vec(
            (
                prop::sample::select(Phase::ALL.to_vec()),
                0u64..5000,
                0u64..5000,
            ),
            0..6,
        ),
    )
        .prop_map(|(t, m, c, n, r, u)| record(t, m, c, n, r, &u))
}

proptest! {
    #[test]
    fn summary_invariants(records in prop::collection::vec(arb_record(), 1..40)) {
        let summary = compute_metrics(&records);
        for g in &summary.groups {
            prop_assert!((g.accuracy_pct - 100.0 * g.correct as f64 / g.runs as f64).abs() < 1e-9);
            let total: u64 = g.tokens.values().map(|u| u.total_tokens()).sum();
            if total > 0 {
                let shares: f64 = Phase::ALL.iter().map(|p| g.token_share_pct(*p)).sum();
                prop_assert!((shares - 100.0).abs() <= PCT_TOL);
            }
            if !g.role_counts.is_empty() {
                let roles: f64 = RoleCategory::ALL.iter().map(|r| g.role_pct(*r)).sum();
                prop_assert!((roles - 100.0).abs() <= PCT_TOL);
            }
            for s in [g.routing, g.routing_correct, g.routing_incorrect].into_iter().flatten() {
                let (lo, hi) = s.ci95();
                prop_assert!(lo <= s.mean && s.mean <= hi && s.min <= s.mean && s.mean <= s.max);
            }
        }
        // Pooled groups cover every record once per method.
        let pooled: usize = summary.groups.iter().filter(|g| g.task == "all").map(|g| g.runs).sum();
        prop_assert_eq!(pooled, records.len());
    }

    #[test]
    fn population_sd_matches_definition(xs in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let s = Stats::of(&xs).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        prop_assert!((s.sd - sd).abs() < 1e-9);
    }
}
