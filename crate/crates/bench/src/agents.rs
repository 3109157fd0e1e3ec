//! Offline agent backends. The oracle agents play every role honestly from the
//! workspace they are shown, drawing their proposals from the task oracle; the
//! invalid-generator variant never produces a valid write at generator nodes.

use bigmas_core::default_design;
use bigmas_core::executor::SINK_NOTICE;
use bigmas_core::gateway::{ChatRequest, FnBackend, Gateway, GatewayError, Phase};
use bigmas_core::graph::{classify_role, RoleCategory};
use bigmas_core::workspace::{answer_text, Workspace};
use bigmas_tasks::{oracle_solve, verify, Solution, TaskInstance};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::baselines::{LABEL_BASE, LABEL_REACT, LABEL_TOT_EVALUATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    Oracle,
    InvalidGenerator,
}

/// The workspace embedded in a node or routing prompt.
pub fn workspace_from_prompt(prompt: &str) -> Option<Workspace> {
    let start = prompt.find("<workspace>\n")? + "<workspace>\n".len();
    let end = prompt[start..].find("\n</workspace>")? + start;
    Workspace::from_serialized(&prompt[start..end]).ok()
}

fn prompt_role(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .find_map(|l| l.split_once(" with role: ").map(|(_, r)| r.trim()))
}

fn candidates_from_prompt(prompt: &str) -> Vec<&str> {
    prompt
        .lines()
        .find_map(|l| l.split_once("Candidate next nodes: "))
        .map(|(_, rest)| rest.trim_end_matches('.').split(", ").collect())
        .unwrap_or_default()
}

fn solution_value(sol: &Solution) -> (&'static str, Value) {
    match sol {
        Solution::Expression(e) => ("expr", Value::String(e.to_string())),
        Solution::Moves(_) => (
            "moves",
            serde_json::from_str(&sol.to_string()).expect("moves are JSON"),
        ),
    }
}

fn first_field<'a>(
    work: &'a Map<String, Value>,
    pred: fn(&Value) -> bool,
    prefer: &str,
) -> Option<&'a str> {
    if work.get(prefer).is_some_and(pred) {
        return work.get_key_value(prefer).map(|(k, _)| k.as_str());
    }
    work.iter().find(|(_, v)| pred(v)).map(|(k, _)| k.as_str())
}

fn wire(path: &str, action: &str, payload: Value) -> String {
    json!({"target_path": path, "action": action, "payload": payload}).to_string()
}

/// One honest node response given the visible workspace.
fn node_response(
    instance: &TaskInstance,
    solution: Option<&Solution>,
    mode: AgentMode,
    req: &ChatRequest,
) -> String {
    let Some(ws) = workspace_from_prompt(&req.user) else {
        return "I cannot see the workspace.".into();
    };
    let node = req.node.as_deref().unwrap_or("");
    let category = classify_role(prompt_role(&req.user).unwrap_or(node));
    let work = ws.work();

    if req.user.contains(SINK_NOTICE) {
        // Copy the best verified material forward; an empty payload is what an honest
        // formatter produces when nothing upstream was validated.
        let from_validated = work
            .values()
            .filter(|v| v.is_object())
            .map(answer_text)
            .find(|t| !t.is_empty() && t != "{}" && verify(instance, t).correct);
        return wire(
            "ans",
            "replace",
            Value::String(from_validated.unwrap_or_default()),
        );
    }

    match (category, mode) {
        (RoleCategory::Generator, AgentMode::InvalidGenerator) => {
            wire("no_such_field", "append", json!({"expr": "?"}))
        }
        (RoleCategory::Generator, _) => {
            let Some(list) = first_field(work, Value::is_array, "candidates") else {
                return "No list field to append to.".into();
            };
            let (key, value) = solution
                .map(solution_value)
                .unwrap_or(("expr", json!("no solution")));
            wire(list, "append", json!({ key: value }))
        }
        (RoleCategory::Validator, _) => {
            let Some(map) = first_field(work, Value::is_object, "validated") else {
                return "No map field to update.".into();
            };
            let found = work
                .values()
                .filter_map(Value::as_array)
                .flatten()
                .map(answer_text)
                .find(|c| verify(instance, c).correct);
            let key = solution.map_or("expr", |s| solution_value(s).0);
            let payload = match found {
                Some(c) => {
                    let value = serde_json::from_str::<Value>(&c)
                        .ok()
                        .filter(Value::is_array)
                        .unwrap_or(Value::String(c));
                    json!({ key: value, "ok": true })
                }
                None => json!({}),
            };
            wire(map, "update", payload)
        }
        _ => match first_field(work, Value::is_array, "notes") {
            Some(list) => wire(
                list,
                "append",
                json!({"note": format!("{node} reviewed step {}", ws.sys().step)}),
            ),
            None => match work.keys().next() {
                Some(k) => wire(k, "replace", json!(format!("{node} was here"))),
                None => "Nothing to write.".into(),
            },
        },
    }
}

fn baseline_response(solution: Option<&Solution>, req: &ChatRequest) -> String {
    let answer = solution
        .map(ToString::to_string)
        .unwrap_or_else(|| "no solution".into());
    match req.node.as_deref() {
        Some(LABEL_BASE) => format!("ANSWER: {answer}"),
        Some(LABEL_REACT) => format!("Thought: I know the answer.\nAction: finish[{answer}]"),
        Some(LABEL_TOT_EVALUATE) => "10".into(),
        _ => format!("ANSWER: {answer}"),
    }
}

/// Backend answering every phase for one instance.
pub fn scripted_agents(instance: &TaskInstance, mode: AgentMode) -> Gateway {
    let instance = instance.clone();
    let solution = oracle_solve(&instance);
    let design_doc = format!(
        "```json\n{}\n```",
        default_design(instance.kind()).to_document()
    );
    Gateway::new(FnBackend::new(
        format!(
            "agents:{}",
            serde_json::to_value(mode)
                .expect("mode")
                .as_str()
                .unwrap_or("")
        ),
        move |req: &ChatRequest| -> Result<String, GatewayError> {
            Ok(match req.phase {
                Phase::Design => design_doc.clone(),
                Phase::Routing => candidates_from_prompt(&req.user)
                    .first()
                    .map_or(String::new(), |c| c.to_string()),
                Phase::NodeExecution => node_response(&instance, solution.as_ref(), mode, req),
                Phase::Baseline => baseline_response(solution.as_ref(), req),
            })
        },
    ))
}
