//! Per-problem design phase: one model call producing an agent graph, a work-area
//! template and a contract, with a fixed three-node template as the fallback.

use bigmas_tasks::{render_context, TaskInstance, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::extract;
use crate::gateway::{CallRecord, ChatRequest, Gateway, GatewayError, Phase, DEFAULT_TEMPERATURE};
use crate::graph::{AgentGraph, NodeSpec, MAX_NODES};
use crate::workspace::{schema_problems, ANSWER_SEGMENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    pub graph: AgentGraph,
    pub work_schema: Value,
    pub contract: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("no design document found")]
    NoDocument,
    #[error("malformed design document: {0}")]
    Malformed(String),
    #[error("invalid graph ({0})")]
    InvalidGraph(String),
    #[error("work_schema shadows the reserved answer path {ANSWER_SEGMENT:?}")]
    SchemaShadowsAnswer,
    #[error("invalid work_schema: {0}")]
    InvalidSchema(String),
    #[error("contract does not mention node {0:?}")]
    ContractMissingNode(String),
}

impl DesignOutput {
    /// Interchange document: the graph fields plus `work_schema` and `contract`.
    pub fn to_document(&self) -> Value {
        let mut doc = serde_json::to_value(&self.graph).expect("graph serializes");
        let map = doc.as_object_mut().expect("graph is an object");
        map.insert("work_schema".into(), self.work_schema.clone());
        map.insert("contract".into(), Value::String(self.contract.clone()));
        doc
    }

    fn from_document(doc: Map<String, Value>) -> Result<Self, DesignError> {
        let graph: AgentGraph = serde_json::from_value(Value::Object(doc.clone()))
            .map_err(|e| DesignError::Malformed(e.to_string()))?;
        graph
            .validate()
            .map_err(|e| DesignError::InvalidGraph(format!("{}: {e}", e.rule())))?;

        let work_schema = doc
            .get("work_schema")
            .cloned()
            .ok_or_else(|| DesignError::Malformed("missing work_schema".into()))?;
        if work_schema.get(ANSWER_SEGMENT).is_some() {
            return Err(DesignError::SchemaShadowsAnswer);
        }
        if let Some(problem) = schema_problems(&work_schema).into_iter().next() {
            return Err(DesignError::InvalidSchema(problem));
        }

        // A missing contract is assembled from the per-node responsibilities.
        let contract = match doc.get("contract") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(DesignError::Malformed("contract must be text".into())),
            None => graph
                .nodes()
                .iter()
                .map(|n| format!("{}: {}", n.id, n.responsibilities))
                .collect::<Vec<_>>()
                .join("\n"),
        };
        if let Some(n) = graph.nodes().iter().find(|n| !contract.contains(&n.id)) {
            return Err(DesignError::ContractMissingNode(n.id.clone()));
        }
        Ok(Self {
            graph,
            work_schema,
            contract,
        })
    }
}

/// Extracts and validates a design document from model text.
pub fn parse_design(text: &str) -> Result<DesignOutput, DesignError> {
    let doc = extract::whole_object(text)
        .or_else(|| extract::last_fenced_object(text))
        .or_else(|| extract::last_object_with_key(text, "nodes"))
        .ok_or(DesignError::NoDocument)?;
    DesignOutput::from_document(doc)
}

fn task_constraint(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Game24 => {
            "use each of the four given numbers exactly once with + - * / and parentheses to reach 24"
        }
        TaskKind::SixFives => {
            "use exactly six digit 5s (concatenation such as 55 allowed) with + - * / ! !! to reach the target"
        }
        TaskKind::Tol => {
            "move beads between pegs of capacities 3, 2, 1 to reach the goal in the minimum number of moves"
        }
    }
}

/// The fixed generator -> validator -> formatter chain used when design fails.
pub fn default_design(kind: TaskKind) -> DesignOutput {
    let (item, example) = match kind {
        TaskKind::Tol => ("moves", r#"{"moves": [[1, 3], [2, 1]]}"#),
        _ => ("expr", r#"{"expr": "(13-9)*(10-4)"}"#),
    };
    let nodes = vec![
        NodeSpec::new("generator", "candidate generator").with_responsibilities(format!(
            "reads ctx; appends one candidate object such as {example} to work.candidates"
        )),
        NodeSpec::new("validator", "constraint validator").with_responsibilities(format!(
            "reads work.candidates; checks them against the constraints; updates work.validated with {{\"{item}\": <best candidate>, \"ok\": true|false, \"reason\": <text>}}"
        )),
        NodeSpec::new("formatter", "answer formatter").with_responsibilities(
            "reads work.validated; writes the final answer to ans with action replace".to_string(),
        ),
    ];
    let mut contract = format!("Constraint: {}.\n", task_constraint(kind));
    for n in &nodes {
        contract.push_str(&format!("{}: {}\n", n.id, n.responsibilities));
    }
    if kind == TaskKind::Tol {
        contract.push_str("work.moves may hold the current best move list.\n");
    }
    let mut schema = json!({"candidates": [], "validated": {}});
    if kind == TaskKind::Tol {
        schema["moves"] = json!([]);
    }
    DesignOutput {
        graph: AgentGraph::new(
            nodes,
            vec![
                ("generator".into(), "validator".into()),
                ("validator".into(), "formatter".into()),
            ],
            "generator",
            "formatter",
        ),
        work_schema: schema,
        contract,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSource {
    Model,
    Fallback,
    /// Supplied directly by the caller; no design call was made.
    Provided,
}

/// The design used by a run, with the calls that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub output: DesignOutput,
    pub source: DesignSource,
    pub calls: Vec<CallRecord>,
    /// Rejection reasons for each failed attempt.
    pub errors: Vec<String>,
}

impl DesignOutcome {
    pub fn provided(output: DesignOutput) -> Self {
        Self {
            output,
            source: DesignSource::Provided,
            calls: Vec::new(),
            errors: Vec::new(),
        }
    }
}

pub const DESIGN_SYSTEM_PROMPT: &str =
    "You are a graph designer for a multi-agent reasoning system. \
Given one problem instance you design a small directed graph of specialised agents that \
cooperate through a shared workspace. You never solve the problem yourself.";

const SKELETONS: &str = r#"Example skeletons (roles only):
- arithmetic puzzle: generator (proposes expressions) -> validator (checks numbers and value) -> formatter (writes ans); validator may loop back to generator.
- digit-constrained puzzle: planner (chooses a decomposition strategy) -> generator -> checker -> formatter.
- planning puzzle: analyzer (compares start and goal) -> move proposer -> simulator/validator -> optimizer (shortens the plan) -> formatter."#;

pub fn design_prompt(instance: &TaskInstance) -> String {
    format!(
        "Problem instance:\n{statement}\n\n\
Design an agent graph for this instance.\n\
Rules:\n\
- at most {MAX_NODES} nodes; every node has a unique id, a role descriptor and responsibilities\n\
- edges are [from, to] pairs; their order matters (the first successor is the default route)\n\
- cycles are allowed for iterative refinement, but the sink must be reachable from the source and may not loop to itself\n\
- work_schema is the initial JSON template of the shared work area (no dots in keys, no top-level \"{ANSWER_SEGMENT}\" key)\n\
- only the sink writes the final answer, to the path \"{ANSWER_SEGMENT}\"\n\
- contract states, for every node id, which workspace fields it reads and writes\n\n\
{SKELETONS}\n\n\
Respond with a single JSON document inside a ```json fenced block, shaped as:\n\
{{\"nodes\": [{{\"id\": \"...\", \"role\": \"...\", \"responsibilities\": \"...\"}}], \
\"edges\": [[\"from\", \"to\"]], \"source\": \"...\", \"sink\": \"...\", \
\"work_schema\": {{...}}, \"contract\": \"...\"}}",
        statement = render_context(instance),
    )
}

/// One design call, one corrective retry, then the default template.
pub fn design(
    instance: &TaskInstance,
    gateway: &Gateway,
    config: &DesignConfig,
) -> Result<DesignOutcome, GatewayError> {
    let base = design_prompt(instance);
    let mut calls = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    for attempt in 0..2 {
        let user = match errors.last() {
            Some(e) if attempt > 0 => format!(
                "{base}\n\nYour previous design was rejected: {e}\nReturn a corrected design."
            ),
            _ => base.clone(),
        };
        let mut req = ChatRequest::new(Phase::Design, DESIGN_SYSTEM_PROMPT, user);
        req.temperature = config.temperature;
        req.max_output_tokens = config.max_output_tokens;
        let record = gateway.call(req);
        let text = match record.text() {
            Ok(t) => t.to_string(),
            Err(e) => return Err(e.clone()),
        };
        calls.push(record);
        match parse_design(&text) {
            Ok(output) => {
                return Ok(DesignOutcome {
                    output,
                    source: DesignSource::Model,
                    calls,
                    errors,
                })
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    Ok(DesignOutcome {
        output: default_design(instance.kind()),
        source: DesignSource::Fallback,
        calls,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedBackend};

    fn fenced(doc: &Value) -> String {
        format!("Here is the design.\n```json\n{doc}\n```")
    }

    fn eleven_nodes() -> Value {
        let nodes: Vec<Value> = (0..11)
            .map(|i| json!({"id": format!("n{i}"), "role": "worker"}))
            .collect();
        let edges: Vec<Value> = (0..10)
            .map(|i| json!([format!("n{i}"), format!("n{}", i + 1)]))
            .collect();
        json!({"nodes": nodes, "edges": edges, "source": "n0", "sink": "n10",
               "work_schema": {}, "contract": "n0 n1 n2 n3 n4 n5 n6 n7 n8 n9 n10"})
    }

    #[test]
    fn default_designs() {
        for kind in TaskKind::ALL {
            let d = default_design(kind);
            assert!(d.graph.validate().is_ok());
            assert_eq!(d.graph.nodes().len(), 3);
            assert_eq!(d.graph.edges().len(), 2);
            assert_eq!(d, default_design(kind));
            assert_eq!(parse_design(&fenced(&d.to_document())).unwrap(), d);
        }
        assert!(default_design(TaskKind::SixFives).contract.contains("six"));
        assert_eq!(
            default_design(TaskKind::Tol).work_schema["moves"],
            json!([])
        );
        assert!(default_design(TaskKind::Game24)
            .work_schema
            .get("moves")
            .is_none());
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_design("no document here"),
            Err(DesignError::NoDocument)
        );
        let mut doc = default_design(TaskKind::Game24).to_document();
        doc["work_schema"]["ans"] = json!("");
        assert_eq!(
            parse_design(&doc.to_string()),
            Err(DesignError::SchemaShadowsAnswer)
        );
        assert!(matches!(
            parse_design(&eleven_nodes().to_string()),
            Err(DesignError::InvalidGraph(r)) if r.starts_with("node-limit")
        ));
        let mut doc = default_design(TaskKind::Game24).to_document();
        doc["contract"] = json!("generator and validator only");
        assert_eq!(
            parse_design(&doc.to_string()),
            Err(DesignError::ContractMissingNode("formatter".into()))
        );
    }

    #[test]
    fn last_fenced_block_wins() {
        let good = default_design(TaskKind::Game24).to_document();
        let text = format!("```json\n{{\"draft\": true}}\n```\nrevised:\n```json\n{good}\n```");
        assert!(parse_design(&text).is_ok());
    }

    #[test]
    fn design_with_retry_and_fallback() {
        let inst = TaskInstance::game24([4, 9, 10, 13]);
        let good = default_design(TaskKind::Game24);
        let mut custom = good.clone();
        custom.contract.push_str("custom");
        let gw = Gateway::new(ScriptedBackend::new([ScriptEntry::new(
            Phase::Design,
            fenced(&custom.to_document()),
        )]));
        let out = design(&inst, &gw, &DesignConfig::default()).unwrap();
        assert_eq!(out.source, DesignSource::Model);
        assert_eq!(out.output, custom);
        assert_eq!(out.calls.len(), 1);

        let gw = Gateway::new(ScriptedBackend::new([
            ScriptEntry::new(Phase::Design, "prose"),
            ScriptEntry::new(Phase::Design, "more prose"),
        ]));
        let out = design(&inst, &gw, &DesignConfig::default()).unwrap();
        assert_eq!(out.source, DesignSource::Fallback);
        assert_eq!(out.output, good);
        assert_eq!(out.errors.len(), 2);
        assert!(out.calls[1]
            .request
            .user
            .contains("previous design was rejected"));

        let big = fenced(&eleven_nodes());
        let gw = Gateway::new(ScriptedBackend::new([
            ScriptEntry::new(Phase::Design, big.clone()),
            ScriptEntry::new(Phase::Design, big),
        ]));
        let out = design(&inst, &gw, &DesignConfig::default()).unwrap();
        assert_eq!(out.source, DesignSource::Fallback);

        let gw = Gateway::new(ScriptedBackend::new([]));
        assert!(design(&inst, &gw, &DesignConfig::default()).is_err());
    }
}
