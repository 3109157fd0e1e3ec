//! Aggregates over run records and the CSV files derived from them.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use bigmas_core::gateway::{Phase, PhaseUsage};
use bigmas_core::graph::RoleCategory;
use serde::Serialize;

use crate::runner::{Method, RunRecord};

/// Bumped whenever a metric definition changes.
pub const METRICS_VERSION: u32 = 1;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const POOLED: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            n: xs.len(),
            mean,
            sd: var.sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Normal-approximation 95% interval for the mean.
    pub fn ci95(&self) -> (f64, f64) {
        let half = Z_95 * self.sd / (self.n as f64).sqrt();
        (self.mean - half, self.mean + half)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub task: String,
    pub method: Method,
    pub runs: usize,
    pub correct: usize,
    pub accuracy_pct: f64,
    pub errors: usize,
    pub nodes: Option<Stats>,
    pub edges: Option<Stats>,
    pub cyclic_pct: Option<f64>,
    pub role_counts: BTreeMap<RoleCategory, usize>,
    pub routing: Option<Stats>,
    pub routing_correct: Option<Stats>,
    pub routing_incorrect: Option<Stats>,
    pub hops: Option<Stats>,
    pub corrections: Option<Stats>,
    pub calls: Stats,
    pub tokens: BTreeMap<Phase, PhaseUsage>,
}

impl GroupMetrics {
    pub fn role_pct(&self, role: RoleCategory) -> f64 {
        let total: usize = self.role_counts.values().sum();
        if total == 0 {
            0.0
        } else {
            100.0 * self.role_counts.get(&role).copied().unwrap_or(0) as f64 / total as f64
        }
    }

    /// Share of total tokens spent in `phase`; shares over all phases sum to 100.
    pub fn token_share_pct(&self, phase: Phase) -> f64 {
        let total: u64 = self.tokens.values().map(PhaseUsage::total_tokens).sum();
        if total == 0 {
            0.0
        } else {
            100.0 * self.tokens.get(&phase).map_or(0, PhaseUsage::total_tokens) as f64
                / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub groups: Vec<GroupMetrics>,
}

impl MetricsSummary {
    pub fn group(&self, task: &str, method: Method) -> Option<&GroupMetrics> {
        self.groups
            .iter()
            .find(|g| g.task == task && g.method == method)
    }
}

fn stats_by(records: &[&RunRecord], f: impl Fn(&RunRecord) -> f64) -> Option<Stats> {
    Stats::of(&records.iter().map(|r| f(r)).collect::<Vec<_>>())
}

fn group(task: String, method: Method, records: &[&RunRecord]) -> GroupMetrics {
    let correct = records.iter().filter(|r| r.correct).count();
    let designed: Vec<&RunRecord> = records
        .iter()
        .copied()
        .filter(|r| r.graph.is_some())
        .collect();
    let graph_stat = |f: fn(&RunRecord) -> f64| stats_by(&designed, f);
    let mut role_counts = BTreeMap::new();
    for r in &designed {
        for role in &r.graph.as_ref().expect("filtered").roles {
            *role_counts.entry(*role).or_insert(0) += 1;
        }
    }
    let (ok, bad): (Vec<&RunRecord>, Vec<&RunRecord>) = designed.iter().partition(|r| r.correct);
    let mut tokens = BTreeMap::new();
    for r in records {
        for phase in Phase::ALL {
            let u = r.ledger.phase(phase);
            if u.calls == 0 {
                continue;
            }
            let e: &mut PhaseUsage = tokens.entry(phase).or_default();
            e.calls += u.calls;
            e.prompt_tokens += u.prompt_tokens;
            e.completion_tokens += u.completion_tokens;
        }
    }
    GroupMetrics {
        task,
        method,
        runs: records.len(),
        correct,
        accuracy_pct: if records.is_empty() {
            0.0
        } else {
            100.0 * correct as f64 / records.len() as f64
        },
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        nodes: graph_stat(|r| r.graph.as_ref().map_or(0.0, |g| g.nodes as f64)),
        edges: graph_stat(|r| r.graph.as_ref().map_or(0.0, |g| g.edges as f64)),
        cyclic_pct: (!designed.is_empty()).then(|| {
            100.0
                * designed
                    .iter()
                    .filter(|r| r.graph.as_ref().is_some_and(|g| g.cyclic))
                    .count() as f64
                / designed.len() as f64
        }),
        role_counts,
        routing: graph_stat(|r| r.routing_decisions as f64),
        routing_correct: stats_by(&ok, |r| r.routing_decisions as f64),
        routing_incorrect: stats_by(&bad, |r| r.routing_decisions as f64),
        hops: graph_stat(|r| r.hops as f64),
        corrections: graph_stat(|r| r.corrections as f64),
        calls: stats_by(records, |r| r.calls as f64).unwrap_or(Stats {
            n: 0,
            mean: 0.0,
            sd: 0.0,
            min: 0.0,
            max: 0.0,
        }),
        tokens,
    }
}

/// One group per (task, method) present, followed by a pooled group per method.
pub fn compute_metrics(records: &[RunRecord]) -> MetricsSummary {
    let mut by_cell: BTreeMap<(String, Method), Vec<&RunRecord>> = BTreeMap::new();
    let mut by_method: BTreeMap<Method, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_cell
            .entry((r.task.as_str().to_string(), r.method))
            .or_default()
            .push(r);
        by_method.entry(r.method).or_default().push(r);
    }
    let mut groups: Vec<GroupMetrics> = by_cell
        .into_iter()
        .map(|((task, method), rs)| group(task, method, &rs))
        .collect();
    groups.extend(
        by_method
            .into_iter()
            .map(|(m, rs)| group(POOLED.into(), m, &rs)),
    );
    MetricsSummary { groups }
}

fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn phase_label(p: Phase) -> &'static str {
    p.as_str()
}

fn summary_rows(g: &GroupMetrics) -> Vec<(String, String)> {
    let mut rows = vec![
        ("runs".to_string(), g.runs.to_string()),
        ("correct".into(), g.correct.to_string()),
        ("accuracy_pct".into(), num(g.accuracy_pct)),
        ("errors".into(), g.errors.to_string()),
        ("calls_mean".into(), num(g.calls.mean)),
        ("calls_max".into(), num(g.calls.max)),
    ];
    let mut stat = |name: &str, s: &Option<Stats>, ci: bool| {
        if let Some(s) = s {
            rows.push((format!("{name}_mean"), num(s.mean)));
            rows.push((format!("{name}_sd"), num(s.sd)));
            rows.push((format!("{name}_min"), num(s.min)));
            rows.push((format!("{name}_max"), num(s.max)));
            if ci {
                let (lo, hi) = s.ci95();
                rows.push((format!("{name}_ci95_low"), num(lo)));
                rows.push((format!("{name}_ci95_high"), num(hi)));
            }
        }
    };
    stat("nodes", &g.nodes, false);
    stat("edges", &g.edges, false);
    stat("routing", &g.routing, true);
    stat("routing_correct", &g.routing_correct, true);
    stat("routing_incorrect", &g.routing_incorrect, true);
    stat("hops", &g.hops, false);
    stat("corrections", &g.corrections, false);
    if let Some(c) = g.cyclic_pct {
        rows.push(("cyclic_pct".into(), num(c)));
    }
    if !g.role_counts.is_empty() {
        for role in RoleCategory::ALL {
            rows.push((
                format!("role_{}_pct", role.to_string().to_lowercase()),
                num(g.role_pct(role)),
            ));
        }
    }
    for phase in Phase::ALL {
        if g.tokens.contains_key(&phase) {
            rows.push((
                format!("token_share_{}_pct", phase_label(phase)),
                num(g.token_share_pct(phase)),
            ));
        }
    }
    rows
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes summary, topology, roles, routing and token CSVs into `dir`.
pub fn write_csvs(summary: &MetricsSummary, records: &[RunRecord], dir: &Path) -> io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record(["version", "task", "method", "metric", "value"])
        .map_err(csv_err)?;
    for g in &summary.groups {
        for (metric, value) in summary_rows(g) {
            w.write_record([
                &METRICS_VERSION.to_string(),
                &g.task,
                g.method.as_str(),
                &metric,
                &value,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("topology.csv")).map_err(csv_err)?;
    w.write_record([
        "task",
        "method",
        "instance_id",
        "nodes",
        "edges",
        "cyclic",
        "design_source",
        "correct",
    ])
    .map_err(csv_err)?;
    for r in records {
        if let Some(g) = &r.graph {
            let source = r
                .design_source
                .map(|s| {
                    serde_json::to_value(s)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default()
                })
                .unwrap_or_default();
            w.write_record([
                r.task.as_str(),
                r.method.as_str(),
                &r.instance_id,
                &g.nodes.to_string(),
                &g.edges.to_string(),
                &g.cyclic.to_string(),
                &source,
                &r.correct.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("roles.csv")).map_err(csv_err)?;
    w.write_record(["task", "method", "role", "count", "pct"])
        .map_err(csv_err)?;
    for g in summary.groups.iter().filter(|g| !g.role_counts.is_empty()) {
        for role in RoleCategory::ALL {
            let count = g.role_counts.get(&role).copied().unwrap_or(0);
            w.write_record([
                g.task.as_str(),
                g.method.as_str(),
                &role.to_string().to_lowercase(),
                &count.to_string(),
                &num(g.role_pct(role)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("routing.csv")).map_err(csv_err)?;
    w.write_record([
        "task",
        "method",
        "instance_id",
        "correct",
        "routing_decisions",
        "hops",
        "steps",
        "corrections",
        "termination",
    ])
    .map_err(csv_err)?;
    for r in records.iter().filter(|r| r.graph.is_some()) {
        w.write_record([
            r.task.as_str(),
            r.method.as_str(),
            &r.instance_id,
            &r.correct.to_string(),
            &r.routing_decisions.to_string(),
            &r.hops.to_string(),
            &r.steps.to_string(),
            &r.corrections.to_string(),
            r.termination.map_or("", |t| t.as_str()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("tokens.csv")).map_err(csv_err)?;
    w.write_record([
        "task",
        "method",
        "phase",
        "calls",
        "prompt_tokens",
        "completion_tokens",
        "total_tokens",
        "share_pct",
    ])
    .map_err(csv_err)?;
    for g in &summary.groups {
        for (phase, u) in &g.tokens {
            w.write_record([
                g.task.as_str(),
                g.method.as_str(),
                phase_label(*phase),
                &u.calls.to_string(),
                &u.prompt_tokens.to_string(),
                &u.completion_tokens.to_string(),
                &u.total_tokens().to_string(),
                &num(g.token_share_pct(*phase)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd_and_ci() {
        let s = Stats::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.sd, 2.0);
        let (lo, hi) = s.ci95();
        let half = Z_95 * 2.0 / 8f64.sqrt();
        assert!((lo - (5.0 - half)).abs() < 1e-12 && (hi - (5.0 + half)).abs() < 1e-12);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(100.0), "100");
        assert_eq!(num(33.333333), "33.3333");
        assert_eq!(num(-0.00001), "0");
        assert_eq!(num(0.5), "0.5");
    }
}
