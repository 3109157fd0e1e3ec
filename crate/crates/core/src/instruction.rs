//! Decoding a node's raw text into a [`WriteInstruction`], trying progressively
//! looser strategies until one succeeds.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::extract;
use crate::workspace::{Action, FieldPath, WriteInstruction};

/// Strategy indices, in the order they are tried.
pub const STRATEGY_WHOLE_JSON: u8 = 1;
pub const STRATEGY_FENCED_BLOCK: u8 = 2;
pub const STRATEGY_BALANCED_OBJECT: u8 = 3;
pub const STRATEGY_KEY_LINES: u8 = 4;

/// The shape every node prompt asks for.
pub const INSTRUCTION_FORMAT: &str = r#"{"target_path": "<field or dotted.path>", "action": "append" | "update" | "replace", "payload": <JSON value>}"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<WriteInstruction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_used: Option<u8>,
    /// One entry per strategy that was tried and failed.
    pub diagnostics: Vec<String>,
}

impl ParseOutcome {
    pub fn succeeded(&self) -> bool {
        self.instruction.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("all strategies failed: {}", .0.join("; "))]
pub struct AllStrategiesFailed(pub Vec<String>);

impl ParseOutcome {
    pub fn into_result(self) -> Result<WriteInstruction, AllStrategiesFailed> {
        self.instruction
            .ok_or(AllStrategiesFailed(self.diagnostics))
    }
}

fn path_from_value(v: &Value) -> Result<FieldPath, String> {
    match v {
        Value::String(s) => FieldPath::parse_dotted(s.trim()),
        Value::Array(items) => {
            let segs = items
                .iter()
                .map(|s| {
                    s.as_str()
                        .map(str::to_string)
                        .ok_or("path segment is not text")
                })
                .collect::<Result<Vec<_>, _>>()?;
            FieldPath::new(segs)
        }
        _ => Err("target_path must be text or a list of segments".into()),
    }
}

/// Builds an instruction from an object with `target_path`, `action` and `payload`;
/// other keys are ignored.
pub fn instruction_from_object(obj: &Map<String, Value>) -> Result<WriteInstruction, String> {
    let path = obj.get("target_path").ok_or("missing key target_path")?;
    let action = obj
        .get("action")
        .ok_or("missing key action")?
        .as_str()
        .ok_or("action must be text")?;
    let payload = obj.get("payload").ok_or("missing key payload")?;
    Ok(WriteInstruction::new(
        path_from_value(path)?,
        action.trim().parse::<Action>()?,
        payload.clone(),
    ))
}

fn whole_json(text: &str) -> Result<WriteInstruction, String> {
    let obj = extract::whole_object(text).ok_or("text is not a JSON object")?;
    instruction_from_object(&obj)
}

fn fenced_block(text: &str) -> Result<WriteInstruction, String> {
    let blocks = extract::fenced_blocks(text);
    let last = blocks.last().ok_or("no fenced block")?;
    let obj = extract::whole_object(last).ok_or("last fenced block is not a JSON object")?;
    instruction_from_object(&obj)
}

fn balanced_object(text: &str) -> Result<WriteInstruction, String> {
    let obj = extract::last_object_with_key(text, "action")
        .ok_or("no balanced object with key \"action\"")?;
    instruction_from_object(&obj)
}

/// `header: value` where the header may be decorated with list bullets, bold markers or quotes.
fn header_value<'a>(line: &'a str, header: &str) -> Option<&'a str> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || "-*#>`\"".contains(c));
    let head = trimmed.get(..header.len())?;
    if !head.eq_ignore_ascii_case(header) {
        return None;
    }
    let rest = trimmed[header.len()..].trim_start_matches(|c: char| "*`\"".contains(c));
    rest.strip_prefix(':').map(str::trim)
}

fn strip_decoration(s: &str) -> &str {
    s.trim()
        .trim_end_matches(',')
        .trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c == '*')
        .trim()
}

fn key_lines(text: &str) -> Result<WriteInstruction, String> {
    let lines: Vec<&str> = text.lines().collect();
    let payload_at = lines
        .iter()
        .rposition(|l| header_value(l, "payload").is_some())
        .ok_or("no payload: line")?;
    let before = &lines[..payload_at];
    let path = before
        .iter()
        .rev()
        .find_map(|l| header_value(l, "target_path"))
        .ok_or("no target_path: line before payload")?;
    let action = before
        .iter()
        .rev()
        .find_map(|l| header_value(l, "action"))
        .ok_or("no action: line before payload")?;

    let mut payload_text = header_value(lines[payload_at], "payload")
        .unwrap_or_default()
        .to_string();
    for l in &lines[payload_at + 1..] {
        payload_text.push('\n');
        payload_text.push_str(l);
    }
    let payload_text = payload_text.trim();
    let payload = serde_json::from_str(payload_text)
        .unwrap_or_else(|_| Value::String(strip_decoration(payload_text).to_string()));

    let path_text = strip_decoration(path);
    let path = match serde_json::from_str::<Value>(path_text) {
        Ok(v @ Value::Array(_)) => path_from_value(&v)?,
        _ => FieldPath::parse_dotted(path_text)?,
    };
    Ok(WriteInstruction::new(
        path,
        strip_decoration(action).parse()?,
        payload,
    ))
}

type Strategy = fn(&str) -> Result<WriteInstruction, String>;

const STRATEGIES: [(u8, &str, Strategy); 4] = [
    (STRATEGY_WHOLE_JSON, "whole-json", whole_json),
    (STRATEGY_FENCED_BLOCK, "fenced-block", fenced_block),
    (STRATEGY_BALANCED_OBJECT, "balanced-object", balanced_object),
    (STRATEGY_KEY_LINES, "key-lines", key_lines),
];

/// Tries the four strategies in order and stops at the first success.
pub fn parse_instruction(text: &str) -> ParseOutcome {
    let mut diagnostics = Vec::new();
    for (idx, name, strategy) in STRATEGIES {
        match strategy(text) {
            Ok(instr) => {
                return ParseOutcome {
                    instruction: Some(instr),
                    strategy_used: Some(idx),
                    diagnostics,
                }
            }
            Err(e) => diagnostics.push(format!("{name}: {e}")),
        }
    }
    ParseOutcome {
        instruction: None,
        strategy_used: None,
        diagnostics,
    }
}

/// Runs a single strategy in isolation (1..=4).
pub fn parse_with_strategy(text: &str, strategy: u8) -> Option<WriteInstruction> {
    STRATEGIES
        .iter()
        .find(|(idx, _, _)| *idx == strategy)
        .and_then(|(_, _, f)| f(text).ok())
}
