//! Batch execution of (instance, method) cells with a bounded worker pool and a
//! single ordered appender.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use bigmas_core::executor::{design_and_run, FallbackSource, RunConfig, Termination};
use bigmas_core::gateway::{Gateway, HttpBackend, HttpConfig, ScriptedBackend, UsageLedger};
use bigmas_core::graph::{classify_role, RoleCategory};
use bigmas_core::trace::{self, TraceRecord};
use bigmas_core::DesignSource;
use bigmas_tasks::{generate_instances, verify, TaskInstance, TaskKind, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{scripted_agents, AgentMode};
use crate::baselines::{run_baseline, BaselineConfig, BaselineKind};
use crate::metrics::{compute_metrics, write_csvs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bigmas,
    Base,
    React,
    Tot,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bigmas, Method::Base, Method::React, Method::Tot];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bigmas => "bigmas",
            Method::Base => "base",
            Method::React => "react",
            Method::Tot => "tot",
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Bigmas => None,
            Method::Base => Some(BaselineKind::Base),
            Method::React => Some(BaselineKind::React),
            Method::Tot => Some(BaselineKind::Tot),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected bigmas, base, react or tot)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Oracle-backed agents playing every role.
    Oracle,
    /// Oracle agents whose generator nodes never write validly.
    InvalidGenerator,
    /// JSONL manifest of scripted responses, replayed from the start for every cell.
    Scripted { manifest: PathBuf },
    /// OpenAI-compatible endpoint; unset fields come from the environment.
    Http {
        #[serde(default)]
        base_url: Option<String>,
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

impl BackendConfig {
    pub fn name(&self) -> String {
        match self {
            BackendConfig::Oracle => "oracle".into(),
            BackendConfig::InvalidGenerator => "invalid-generator".into(),
            BackendConfig::Scripted { .. } => "scripted".into(),
            BackendConfig::Http { model, .. } => {
                format!(
                    "http:{}",
                    model
                        .clone()
                        .unwrap_or_else(|| HttpConfig::from_env().model)
                )
            }
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub tasks: Vec<TaskKind>,
    pub methods: Vec<Method>,
    /// Instances per task.
    pub count: usize,
    pub seed: u64,
    /// Instance JSONL to use instead of generating; filtered to `tasks`, truncated to `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
    pub backend: BackendConfig,
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    pub out_dir: PathBuf,
    /// Wall time varies between runs, so it is off by default to keep outputs reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default = "yes")]
    pub write_traces: bool,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.tasks.is_empty() {
            return fail("tasks must not be empty");
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty");
        }
        if self.count == 0 {
            return fail("count must be at least 1");
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1");
        }
        let b = &self.baseline;
        if b.react_max_turns == 0 || b.tot_max_rounds == 0 || b.tot_n_thoughts == 0 {
            return fail("baseline bounds must be positive");
        }
        self.run
            .check()
            .map_err(|e| BenchError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub cyclic: bool,
    pub roles: Vec<RoleCategory>,
}

/// One persisted line of runs.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: TaskKind,
    pub instance_id: String,
    pub method: Method,
    pub backend: String,
    pub answer: String,
    pub correct: bool,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    pub steps: usize,
    pub corrections: usize,
    pub routing_decisions: usize,
    pub hops: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_source: Option<DesignSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<FallbackSource>,
    pub calls: usize,
    pub ledger: UsageLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

/// The record plus its full trace.
pub struct CellOutput {
    pub record: RunRecord,
    pub trace: Vec<TraceRecord>,
}

enum BackendSource {
    Agents(AgentMode),
    Manifest(String),
    Shared(Gateway),
}

impl BackendSource {
    fn new(cfg: &BackendConfig) -> Result<Self, BenchError> {
        Ok(match cfg {
            BackendConfig::Oracle => Self::Agents(AgentMode::Oracle),
            BackendConfig::InvalidGenerator => Self::Agents(AgentMode::InvalidGenerator),
            BackendConfig::Scripted { manifest } => {
                let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
                ScriptedBackend::from_jsonl(&text)
                    .map_err(|e| BenchError::Config(format!("{}: {e}", manifest.display())))?;
                Self::Manifest(text)
            }
            BackendConfig::Http {
                base_url,
                model,
                timeout_secs,
            } => {
                let mut http = HttpConfig::from_env();
                if let Some(u) = base_url {
                    http.base_url = u.trim_end_matches('/').to_string();
                }
                if let Some(m) = model {
                    http.model = m.clone();
                }
                if let Some(t) = timeout_secs {
                    http.timeout = std::time::Duration::from_secs(*t);
                }
                Self::Shared(Gateway::new(HttpBackend::new(http)))
            }
        })
    }

    fn gateway(&self, instance: &TaskInstance) -> Gateway {
        match self {
            Self::Agents(mode) => scripted_agents(instance, *mode),
            Self::Manifest(text) => {
                Gateway::new(ScriptedBackend::from_jsonl(text).expect("manifest checked at load"))
            }
            Self::Shared(gw) => gw.clone(),
        }
    }
}

/// Everything a single cell needs besides the instance and the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSettings {
    pub run: RunConfig,
    pub baseline: BaselineConfig,
    /// Backend label stored in the record.
    pub backend: String,
    pub record_wall_time: bool,
}

impl CellSettings {
    pub fn from_bench(config: &BenchConfig) -> Self {
        Self {
            run: config.run.clone(),
            baseline: config.baseline.clone(),
            backend: config.backend.name(),
            record_wall_time: config.record_wall_time,
        }
    }
}

/// Gateway for one instance under a non-HTTP or HTTP backend configuration.
pub fn build_gateway(
    backend: &BackendConfig,
    instance: &TaskInstance,
) -> Result<Gateway, BenchError> {
    Ok(BackendSource::new(backend)?.gateway(instance))
}

/// Runs one method on one instance and scores it with the task verifier.
pub fn run_cell(
    instance: &TaskInstance,
    method: Method,
    gateway: &Gateway,
    settings: &CellSettings,
) -> CellOutput {
    let started = Instant::now();
    let backend = settings.backend.as_str();
    let config_value =
        json!({"run": settings.run, "baseline": settings.baseline, "backend": backend});
    let mut record = RunRecord {
        task: instance.kind(),
        instance_id: instance.id.clone(),
        method,
        backend: backend.to_string(),
        answer: String::new(),
        correct: false,
        verdict: verify(instance, ""),
        termination: None,
        steps: 0,
        corrections: 0,
        routing_decisions: 0,
        hops: 0,
        graph: None,
        design_source: None,
        fallback: None,
        calls: 0,
        ledger: UsageLedger::default(),
        error: None,
        wall_time_ms: None,
    };
    let mut trace_records = Vec::new();
    match method.baseline() {
        None => match design_and_run(instance, &settings.run, gateway) {
            Ok(result) => {
                let g = &result.design.output.graph;
                record.answer = result.answer.clone();
                record.termination = Some(result.termination);
                record.steps = result.steps.len();
                record.corrections = result.corrections();
                record.routing_decisions = result.routing_count();
                record.hops = result.hops();
                record.graph = Some(GraphStats {
                    nodes: g.nodes().len(),
                    edges: g.edges().len(),
                    cyclic: g.is_cyclic(),
                    roles: g.nodes().iter().map(|n| classify_role(&n.role)).collect(),
                });
                record.design_source = Some(result.design.source);
                record.fallback = result.fallback.as_ref().map(|f| f.source.clone());
                record.calls = result.calls().count();
                record.ledger = result.ledger.clone();
                record.verdict = verify(instance, &result.answer);
                trace_records = trace::bigmas_trace(
                    instance,
                    &result,
                    config_value.clone(),
                    Some(record.verdict.clone()),
                );
            }
            Err(e) => record.error = Some(e.to_string()),
        },
        Some(kind) => {
            let result = run_baseline(kind, instance, gateway, &settings.baseline);
            record.answer = result.answer.clone();
            record.steps = result.turns;
            record.calls = result.calls.len();
            record.ledger = UsageLedger::from_calls(&result.calls);
            record.error = result.error.clone();
            record.verdict = verify(instance, &result.answer);
            trace_records.push(TraceRecord::Header {
                method: method.as_str().into(),
                instance: instance.clone(),
                design: None,
                config: config_value.clone(),
            });
            trace_records.extend(result.calls.iter().cloned().map(TraceRecord::Call));
        }
    }
    record.correct = record.verdict.correct;
    if trace_records.is_empty() {
        trace_records.push(TraceRecord::Header {
            method: method.as_str().into(),
            instance: instance.clone(),
            design: None,
            config: config_value,
        });
    }
    if method.baseline().is_some() || record.error.is_some() {
        trace_records.push(TraceRecord::Result {
            answer: record.answer.clone(),
            termination: None,
            verdict: Some(record.verdict.clone()),
            fallback: None,
            ledger: record.ledger.clone(),
            final_workspace: None,
        });
    }
    if settings.record_wall_time {
        record.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    CellOutput {
        record,
        trace: trace_records,
    }
}

pub fn load_instances(path: &Path) -> Result<Vec<TaskInstance>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| BenchError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Instances for every configured task, in task order.
pub fn bench_instances(config: &BenchConfig) -> Result<Vec<TaskInstance>, BenchError> {
    let mut out = Vec::new();
    let loaded = config
        .instances
        .as_deref()
        .map(load_instances)
        .transpose()?;
    for &task in &config.tasks {
        match &loaded {
            Some(all) => out.extend(
                all.iter()
                    .filter(|i| i.kind() == task)
                    .take(config.count)
                    .cloned(),
            ),
            None => out.extend(
                generate_instances(task, config.count, config.seed)
                    .map_err(|e| BenchError::Config(format!("{task}: {e}")))?,
            ),
        }
    }
    Ok(out)
}

pub const RUNS_FILE: &str = "runs.jsonl";
pub const TRACES_DIR: &str = "traces";

pub fn trace_file_name(record: &RunRecord) -> String {
    let safe: String = record
        .instance_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.{}.jsonl", record.method.as_str())
}

/// Runs every cell, appending records to `runs.jsonl` in cell order as they become
/// available. Setting `cancel` stops further cells and further writes; lines already
/// written are complete. `on_record` sees each record right after it is persisted.
pub fn run_benchmark_with(
    config: &BenchConfig,
    cancel: &AtomicBool,
    on_record: &mut dyn FnMut(&RunRecord),
) -> Result<Vec<RunRecord>, BenchError> {
    config.check()?;
    let instances = bench_instances(config)?;
    let cells: Vec<(&TaskInstance, Method)> = instances
        .iter()
        .flat_map(|i| config.methods.iter().map(move |m| (i, *m)))
        .collect();
    let source = BackendSource::new(&config.backend)?;
    let settings = CellSettings::from_bench(config);

    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let traces_dir = out.join(TRACES_DIR);
    if config.write_traces {
        fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    }
    let runs_path = out.join(RUNS_FILE);
    let mut runs = BufWriter::new(File::create(&runs_path).map_err(io_err(&runs_path))?);

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, CellOutput)>();
    let mut records = Vec::new();
    let mut write_result: Result<(), BenchError> = Ok(());

    thread::scope(|scope| {
        for _ in 0..config.parallelism.min(cells.len().max(1)) {
            let tx = tx.clone();
            let (cells, next, source, settings) = (&cells, &next, &source, &settings);
            scope.spawn(move || loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(inst, method)) = cells.get(i) else {
                    break;
                };
                let output = run_cell(inst, method, &source.gateway(inst), settings);
                if tx.send((i, output)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut want = 0;
        for (i, output) in rx {
            pending.insert(i, output);
            while let Some(output) = pending.remove(&want) {
                if cancel.load(Ordering::SeqCst) || write_result.is_err() {
                    break;
                }
                write_result = persist(
                    &mut runs,
                    &runs_path,
                    &traces_dir,
                    config.write_traces,
                    &output,
                );
                if write_result.is_ok() {
                    on_record(&output.record);
                    records.push(output.record);
                }
                want += 1;
            }
        }
    });
    write_result?;
    drop(runs);

    let summary = compute_metrics(&records);
    write_csvs(&summary, &records, out).map_err(io_err(out))?;
    Ok(records)
}

fn persist(
    runs: &mut BufWriter<File>,
    runs_path: &Path,
    traces_dir: &Path,
    write_traces: bool,
    output: &CellOutput,
) -> Result<(), BenchError> {
    if write_traces {
        let path = traces_dir.join(trace_file_name(&output.record));
        fs::write(&path, trace::to_jsonl(&output.trace)).map_err(io_err(&path))?;
    }
    let mut line = serde_json::to_string(&output.record).expect("record serializes");
    line.push('\n');
    runs.write_all(line.as_bytes())
        .and_then(|_| runs.flush())
        .map_err(io_err(runs_path))
}

pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<RunRecord>, BenchError> {
    run_benchmark_with(config, &AtomicBool::new(false), &mut |_| {})
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| BenchError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
