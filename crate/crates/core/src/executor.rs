//! The execution loop: run a node, validate its write, let it correct itself a bounded
//! number of times, apply, route, and stop at the sink or when the step budget runs out.

use bigmas_tasks::{verify, TaskInstance};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::designer::{design, DesignConfig, DesignOutcome};
use crate::gateway::{
    CallRecord, ChatRequest, Gateway, GatewayError, Phase, PhaseLimits, UsageLedger,
    DEFAULT_TEMPERATURE,
};
use crate::graph::AgentGraph;
use crate::instruction::{parse_instruction, ParseOutcome, INSTRUCTION_FORMAT};
use crate::orchestrator::{route, DigestEntry, RouterConfig, RoutingDecision};
use crate::workspace::{
    answer_text, ErrorCode, ValidationResult, Workspace, WorkspaceError, WriteError,
    WriteInstruction, ANSWER_SEGMENT,
};

/// Written to the answer slot when the work area holds nothing usable.
pub const EMPTY_ANSWER_MARKER: &str = "<no answer>";

/// Recorded as the route mode when a node exhausts its corrections.
pub const FAILURE_ROUTE_MODE: &str = "failure";

/// Opening of the sink-specific paragraph of a node prompt.
pub const SINK_NOTICE: &str = "You are the sink node";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Step budget.
    pub t_max: usize,
    /// Corrections allowed per step.
    pub max_corrections: usize,
    pub temperature: f64,
    pub limits: PhaseLimits,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_max: 15,
            max_corrections: 3,
            temperature: DEFAULT_TEMPERATURE,
            limits: PhaseLimits::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), RunError> {
        if self.t_max == 0 || self.max_corrections == 0 {
            return Err(RunError::Config(
                "t_max and max_corrections must be at least 1".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RunError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn design_config(&self) -> DesignConfig {
        DesignConfig {
            temperature: self.temperature,
            max_output_tokens: self.limits.design,
        }
    }

    fn router_config(&self) -> RouterConfig {
        RouterConfig {
            temperature: self.temperature,
            max_output_tokens: self.limits.routing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("invalid design: {0}")]
    Design(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One invocation of a node within a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttempt {
    pub call: CallRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse: Option<ParseOutcome>,
    pub validation: ValidationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub node: String,
    pub attempts: Vec<NodeAttempt>,
    pub corrections: usize,
    pub validation: ValidationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<WriteInstruction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingDecision>,
    /// Where control went next and how it was decided; absent for the sink step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_mode: Option<String>,
    /// Workspace immediately before and after the write.
    pub pre: String,
    pub post: String,
}

impl StepRecord {
    fn digest(&self) -> DigestEntry {
        let instr = self.applied.as_ref().or_else(|| {
            self.attempts
                .last()
                .and_then(|a| a.parse.as_ref())
                .and_then(|p| p.instruction.as_ref())
        });
        DigestEntry {
            step: self.index,
            node: self.node.clone(),
            action: instr.map(|i| i.action),
            path: instr.map(|i| i.path.to_string()),
            status: self.validation.status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Sink,
    BudgetExhausted,
    NodeFailureToSink,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Sink => "sink",
            Termination::BudgetExhausted => "budget-exhausted",
            Termination::NodeFailureToSink => "node-failure-to-sink",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FallbackSource {
    Verified { path: String },
    MostRecent,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackOutcome {
    pub answer: String,
    pub source: FallbackSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub answer: String,
    pub termination: Termination,
    pub design: DesignOutcome,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<FallbackOutcome>,
    pub ledger: UsageLedger,
    pub final_workspace: String,
}

impl ExecutionResult {
    /// Every gateway call of the run, design calls first.
    pub fn calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.design
            .calls
            .iter()
            .chain(self.steps.iter().flat_map(|s| {
                s.attempts
                    .iter()
                    .map(|a| &a.call)
                    .chain(s.routing.iter().filter_map(|r| r.call.as_ref()))
            }))
    }

    /// Routing decisions at branch points.
    pub fn routing_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| {
                s.routing
                    .as_ref()
                    .is_some_and(RoutingDecision::is_branching)
            })
            .count()
    }

    /// Transitions between nodes, whatever decided them.
    pub fn hops(&self) -> usize {
        self.steps.iter().filter(|s| s.next.is_some()).count()
    }

    pub fn corrections(&self) -> usize {
        self.steps.iter().map(|s| s.corrections).sum()
    }
}

pub const NODE_SYSTEM_PROMPT: &str = "You are one agent in a multi-agent reasoning system that shares a \
structured workspace. You act only by emitting a single write instruction. \
append adds the payload to the end of a list field; update merges a key-value map into a map field; \
replace overwrites a field entirely.";

pub fn node_prompt(
    node: &str,
    graph: &AgentGraph,
    ws: &Workspace,
    contract: &str,
    prior_error: Option<&WriteError>,
) -> String {
    let spec = graph.node(node);
    let role = spec.map_or("", |n| n.role.as_str());
    let responsibilities = spec.map_or("", |n| n.responsibilities.as_str());
    let target = if node == graph.sink() {
        format!(
            "{SINK_NOTICE}: write the final answer to the path \"{ANSWER_SEGMENT}\" with action replace; the payload is the answer itself."
        )
    } else {
        format!("Write to an existing field of the work area; only the sink may write \"{ANSWER_SEGMENT}\".")
    };
    let mut prompt = format!(
        "You are node \"{node}\" with role: {role}\nResponsibilities: {responsibilities}\n\n\
Workspace contract:\n{contract}\n\nWorkspace:\n<workspace>\n{}\n</workspace>\n\n{target}\n\
Respond with exactly one write instruction as JSON:\n{INSTRUCTION_FORMAT}",
        ws.serialize()
    );
    if let Some(err) = prior_error {
        prompt.push_str(&format!(
            "\n\nYour previous output was rejected.\n{}\nCorrect it and respond with one valid write instruction.",
            err.render()
        ));
    }
    prompt
}

/// One node invocation (one gateway call).
pub fn execute_node(
    node: &str,
    graph: &AgentGraph,
    ws: &Workspace,
    contract: &str,
    prior_error: Option<&WriteError>,
    gateway: &Gateway,
    config: &RunConfig,
) -> CallRecord {
    let mut req = ChatRequest::new(
        Phase::NodeExecution,
        NODE_SYSTEM_PROMPT,
        node_prompt(node, graph, ws, contract, prior_error),
    )
    .for_node(node);
    req.temperature = config.temperature;
    req.max_output_tokens = config.limits.node_execution;
    gateway.call(req)
}

struct NodeOutcome {
    attempts: Vec<NodeAttempt>,
    validation: ValidationResult,
    instruction: Option<WriteInstruction>,
}

fn judge(
    text: Result<&str, &GatewayError>,
    ws: &Workspace,
    node: &str,
    graph: &AgentGraph,
) -> (Option<ParseOutcome>, ValidationResult) {
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            return (
                None,
                ValidationResult::fail(WriteError {
                    code: ErrorCode::GatewayError,
                    path: None,
                    action: None,
                    hint: format!("the model call failed ({e}); respond again"),
                }),
            )
        }
    };
    let parsed = parse_instruction(text);
    let validation = match &parsed.instruction {
        Some(instr) => ws.validate_write(instr, node, graph),
        None => ValidationResult::fail(WriteError {
            code: ErrorCode::ParseError,
            path: None,
            action: None,
            hint: format!(
                "no write instruction could be decoded ({}); respond with one JSON object {INSTRUCTION_FORMAT}",
                parsed.diagnostics.join("; ")
            ),
        }),
    };
    (Some(parsed), validation)
}

/// Invokes `node` and re-invokes it with the error appended until its write
/// validates or the corrections are spent.
fn run_node(
    node: &str,
    graph: &AgentGraph,
    ws: &Workspace,
    contract: &str,
    gateway: &Gateway,
    config: &RunConfig,
) -> NodeOutcome {
    let mut attempts: Vec<NodeAttempt> = Vec::new();
    loop {
        let prior = attempts.last().and_then(|a| a.validation.error.as_ref());
        let call = execute_node(node, graph, ws, contract, prior, gateway, config);
        let (parse, validation) = judge(call.text(), ws, node, graph);
        let passed = validation.passed();
        let instruction = parse.as_ref().and_then(|p| p.instruction.clone());
        attempts.push(NodeAttempt {
            call,
            parse,
            validation: validation.clone(),
        });
        if passed || attempts.len() > config.max_corrections {
            return NodeOutcome {
                attempts,
                instruction: instruction.filter(|_| passed),
                validation,
            };
        }
    }
}

fn execute_step(
    index: usize,
    node: &str,
    design: &DesignOutcome,
    ws: &mut Workspace,
    gateway: &Gateway,
    config: &RunConfig,
) -> StepRecord {
    let graph = &design.output.graph;
    let outcome = run_node(node, graph, ws, &design.output.contract, gateway, config);
    let pre = ws.serialize();
    if let Some(instr) = &outcome.instruction {
        ws.apply_write(instr)
            .expect("validated write applies to the workspace it was validated against");
    }
    let post = ws.serialize();
    StepRecord {
        index,
        node: node.to_string(),
        corrections: outcome.attempts.len() - 1,
        attempts: outcome.attempts,
        validation: outcome.validation,
        applied: outcome.instruction,
        routing: None,
        next: None,
        next_mode: None,
        pre,
        post,
    }
}

/// Runs a fixed design on one instance.
pub fn run(
    instance: &TaskInstance,
    design: &DesignOutcome,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<ExecutionResult, RunError> {
    config.check()?;
    let graph = &design.output.graph;
    graph
        .validate()
        .map_err(|e| RunError::Design(format!("{}: {e}", e.rule())))?;
    let mut ws = Workspace::new(instance, &design.output.work_schema)?;

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut digest: Vec<DigestEntry> = Vec::new();
    let mut v = graph.source().to_string();
    let mut t = 0;
    let mut failed_to_sink = false;

    while v != graph.sink() && t < config.t_max {
        let mut step = execute_step(t, &v, design, &mut ws, gateway, config);
        digest.push(step.digest());
        let (next, mode) = if step.validation.passed() {
            let decision = route(&ws, &digest, &v, graph, gateway, &config.router_config());
            let pair = (decision.next.clone(), decision.mode.as_str().to_string());
            step.routing = Some(decision);
            pair
        } else {
            failed_to_sink = true;
            (graph.sink().to_string(), FAILURE_ROUTE_MODE.to_string())
        };
        ws.complete_step(&v, Some((&next, &mode)), step.corrections);
        step.next = Some(next.clone());
        step.next_mode = Some(mode);
        steps.push(step);
        v = next;
        t += 1;
    }

    // The sink runs once whether it was reached by routing or by failure, budget permitting.
    let sink_ran = v == graph.sink() && t < config.t_max;
    if sink_ran {
        let step = execute_step(t, &v, design, &mut ws, gateway, config);
        ws.complete_step(&v, None, step.corrections);
        steps.push(step);
    }
    let termination = match (sink_ran, failed_to_sink) {
        (false, _) => Termination::BudgetExhausted,
        (true, true) => Termination::NodeFailureToSink,
        (true, false) => Termination::Sink,
    };

    let fallback = match ws.answer() {
        Some(_) => None,
        None => Some(fallback_resolve(&mut ws, &steps, instance)),
    };

    let mut ledger = UsageLedger::default();
    let result = ExecutionResult {
        answer: ws.answer().unwrap_or_default().to_string(),
        termination,
        design: design.clone(),
        steps,
        fallback,
        ledger: UsageLedger::default(),
        final_workspace: ws.serialize(),
    };
    ledger.merge(&UsageLedger::from_calls(result.calls()));
    Ok(ExecutionResult { ledger, ..result })
}

/// Design phase followed by execution.
pub fn design_and_run(
    instance: &TaskInstance,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<ExecutionResult, RunError> {
    config.check()?;
    let outcome = design(instance, gateway, &config.design_config())?;
    run(instance, &outcome, config, gateway)
}

fn is_move_list(items: &[Value]) -> bool {
    !items.is_empty()
        && items.iter().all(|m| {
            m.as_array()
                .is_some_and(|pair| pair.len() == 2 && pair.iter().all(Value::is_u64))
        })
}

const ANSWER_KEYS: [&str; 4] = ["expr", "answer", "solution", "moves"];

fn scan(value: &Value, path: &str, out: &mut Vec<(String, String)>) {
    match value {
        Value::String(s) if !s.trim().is_empty() => {
            out.push((path.to_string(), s.trim().to_string()))
        }
        Value::Object(map) => {
            for (k, v) in map {
                scan(v, &join(path, k), out);
            }
        }
        Value::Array(items) if is_move_list(items) => {
            out.push((path.to_string(), value.to_string()))
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let item_path = join(path, &i.to_string());
                match item {
                    Value::Object(m) if ANSWER_KEYS.iter().any(|k| m.contains_key(*k)) => {
                        let text = answer_text(item);
                        if !text.is_empty() {
                            out.push((item_path, text));
                        }
                    }
                    _ => scan(item, &item_path, out),
                }
            }
        }
        _ => {}
    }
}

fn join(prefix: &str, seg: &str) -> String {
    if prefix.is_empty() {
        seg.to_string()
    } else {
        format!("{prefix}.{seg}")
    }
}

/// Candidate answers in the work area, depth-first in key order.
pub fn answer_candidates(ws: &Workspace) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (k, v) in ws.work() {
        scan(v, k, &mut out);
    }
    out
}

/// Fills an empty answer slot: the first verified candidate, else the most recent
/// non-empty write, else the last candidate found, else the empty-answer marker.
pub fn fallback_resolve(
    ws: &mut Workspace,
    history: &[StepRecord],
    instance: &TaskInstance,
) -> FallbackOutcome {
    let candidates = answer_candidates(ws);
    let outcome = if let Some((path, text)) = candidates
        .iter()
        .find(|(_, text)| verify(instance, text).correct)
    {
        FallbackOutcome {
            answer: text.clone(),
            source: FallbackSource::Verified { path: path.clone() },
        }
    } else if let Some(text) = history
        .iter()
        .rev()
        .filter_map(|s| s.applied.as_ref())
        .map(|i| answer_text(&i.payload))
        .find(|t| !t.is_empty())
        .or_else(|| candidates.last().map(|(_, t)| t.clone()))
    {
        FallbackOutcome {
            answer: text,
            source: FallbackSource::MostRecent,
        }
    } else {
        FallbackOutcome {
            answer: EMPTY_ANSWER_MARKER.to_string(),
            source: FallbackSource::Empty,
        }
    };
    ws.set_answer(outcome.answer.clone())
        .expect("fallback runs only while the answer slot is empty");
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designer::default_design;
    use crate::gateway::{FnBackend, ScriptEntry, ScriptedBackend};
    use crate::graph::NodeSpec;
    use bigmas_tasks::TaskKind;
    use serde_json::json;

    fn game24() -> TaskInstance {
        TaskInstance::game24([4, 9, 10, 13])
    }

    fn happy_script() -> ScriptedBackend {
        ScriptedBackend::new([
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
                r#"{"target_path":"ans","action":"replace","payload":"(13-9)*(10-4)"}"#,
            ),
        ])
    }

    #[test]
    fn happy_path() {
        let design = DesignOutcome::provided(default_design(TaskKind::Game24));
        let r = run(
            &game24(),
            &design,
            &RunConfig::default(),
            &Gateway::new(happy_script()),
        )
        .unwrap();
        assert_eq!(r.termination, Termination::Sink);
        assert_eq!(r.steps.len(), 3);
        assert_eq!(r.corrections(), 0);
        assert_eq!(r.answer, "(13-9)*(10-4)");
        assert!(r.fallback.is_none());
        assert_eq!(r.routing_count(), 0);
        assert_eq!(r.ledger.phase(Phase::Routing).calls, 0);
        assert_eq!(r.ledger.phase(Phase::NodeExecution).calls, 3);
        let ws = Workspace::from_serialized(&r.final_workspace).unwrap();
        assert_eq!(ws.sys().step, 3);
    }

    #[test]
    fn exhausted_corrections_go_to_sink() {
        let design = DesignOutcome::provided(default_design(TaskKind::Game24));
        let gw = Gateway::new(FnBackend::new("bad", |req: &ChatRequest| {
            Ok(match req.node.as_deref() {
                Some("generator") => {
                    r#"{"target_path":"nowhere","action":"append","payload":1}"#.to_string()
                }
                _ => r#"{"target_path":"ans","action":"replace","payload":"1+1"}"#.to_string(),
            })
        }));
        let r = run(&game24(), &design, &RunConfig::default(), &gw).unwrap();
        assert_eq!(r.termination, Termination::NodeFailureToSink);
        assert_eq!(r.steps.len(), 2);
        assert_eq!(r.steps[0].corrections, 3);
        assert_eq!(r.steps[0].attempts.len(), 4);
        assert_eq!(r.steps[0].next.as_deref(), Some("formatter"));
        assert_eq!(r.steps[0].pre, r.steps[0].post);
        assert!(r.steps[0].attempts[1]
            .call
            .request
            .user
            .contains("unknown-path"));
        assert_eq!(r.answer, "1+1");
    }

    #[test]
    fn budget_exhaustion_invokes_fallback() {
        let graph = AgentGraph::new(
            vec![
                NodeSpec::new("a", "candidate generator"),
                NodeSpec::new("b", "formatter"),
            ],
            vec![("a".into(), "a".into()), ("a".into(), "b".into())],
            "a",
            "b",
        );
        let design = DesignOutcome::provided(crate::designer::DesignOutput {
            graph,
            work_schema: json!({"candidates": []}),
            contract: "a proposes, b formats".into(),
        });
        let gw = Gateway::new(FnBackend::new("loop", |req: &ChatRequest| {
            Ok(match req.phase {
                Phase::Routing => "a".to_string(),
                _ => r#"{"target_path":"candidates","action":"append","payload":{"expr":"(13-9)*(10-4)"}}"#.to_string(),
            })
        }));
        let r = run(&game24(), &design, &RunConfig::default(), &gw).unwrap();
        assert_eq!(r.termination, Termination::BudgetExhausted);
        assert_eq!(r.steps.len(), 15);
        assert_eq!(r.routing_count(), 15);
        assert!(matches!(
            r.fallback.as_ref().unwrap().source,
            FallbackSource::Verified { .. }
        ));
        assert!(verify(&game24(), &r.answer).correct);
    }

    #[test]
    fn fallback_priorities() {
        let inst = game24();
        let mut ws = Workspace::new(
            &inst,
            &json!({"candidates": [{"expr": "1+1"}, {"expr": "(13-9)*(10-4)"}]}),
        )
        .unwrap();
        let out = fallback_resolve(&mut ws, &[], &inst);
        assert_eq!(out.answer, "(13-9)*(10-4)");
        assert_eq!(
            out.source,
            FallbackSource::Verified {
                path: "candidates.1".into()
            }
        );

        let six = TaskInstance::six_fives(30);
        let mut ws = Workspace::new(&six, &json!({"notes": ["5*5-5"]})).unwrap();
        assert_eq!(fallback_resolve(&mut ws, &[], &six).answer, "5*5-5");
        assert_eq!(ws.answer(), Some("5*5-5"));

        let mut ws = Workspace::new(&six, &json!({})).unwrap();
        let out = fallback_resolve(&mut ws, &[], &six);
        assert_eq!(
            (out.answer.as_str(), out.source),
            (EMPTY_ANSWER_MARKER, FallbackSource::Empty)
        );
        assert!(!verify(&six, &out.answer).correct);
    }

    #[test]
    fn move_lists_are_candidates() {
        let ws = Workspace::new(
            &game24(),
            &json!({"plan": {"moves": [[1, 3], [2, 1]]}, "n": 3}),
        )
        .unwrap();
        assert_eq!(
            answer_candidates(&ws),
            vec![("plan.moves".to_string(), "[[1,3],[2,1]]".to_string())]
        );
    }

    #[test]
    fn sink_prompt_names_answer_path() {
        let d = default_design(TaskKind::Game24);
        let ws = Workspace::new(&game24(), &d.work_schema).unwrap();
        let p = node_prompt("formatter", &d.graph, &ws, &d.contract, None);
        assert!(p.contains("write the final answer to the path \"ans\""));
        let p = node_prompt("generator", &d.graph, &ws, &d.contract, None);
        assert!(!p.contains("write the final answer to the path"));
        assert!(p.contains("<workspace>"));
    }

    #[test]
    fn rejects_bad_config() {
        let design = DesignOutcome::provided(default_design(TaskKind::Game24));
        let cfg = RunConfig {
            t_max: 0,
            ..RunConfig::default()
        };
        let gw = Gateway::new(ScriptedBackend::new([]));
        assert!(matches!(
            run(&game24(), &design, &cfg, &gw),
            Err(RunError::Config(_))
        ));
    }
}
