//! The shared workspace every agent node reads and writes.
//!
//! Four partitions:
//!
//! * `ctx`  read-only problem context, fixed at initialization;
//! * `work` mutable tree of named fields, changed only by validated write instructions;
//! * `sys`  step counter, routing history and correction counts;
//! * `ans`  the answer slot, filled at most once (by the sink node or the fallback resolver).

use std::fmt;
use std::str::FromStr;

use bigmas_tasks::{render_context, TaskInstance};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::graph::AgentGraph;

/// Reserved top-level segment addressing the answer slot.
pub const ANSWER_SEGMENT: &str = "ans";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkspaceError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("malformed workspace document: {0}")]
    Malformed(String),
}

/// Ordered key segments into the work partition. No list indexing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldPath(Vec<String>);

impl FieldPath {
    pub fn new<I, S>(segments: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err("path is empty".into());
        }
        if segments.iter().any(|s| s.trim().is_empty()) {
            return Err("path contains an empty segment".into());
        }
        Ok(Self(segments))
    }

    /// Splits on `.`; escaped dots are not supported.
    pub fn parse_dotted(text: &str) -> Result<Self, String> {
        Self::new(text.trim().split('.').map(str::trim))
    }

    pub fn answer() -> Self {
        Self(vec![ANSWER_SEGMENT.to_string()])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn is_answer(&self) -> bool {
        self.0.len() == 1 && self.0[0] == ANSWER_SEGMENT
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FieldPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Dotted(String),
            Segments(Vec<String>),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Dotted(s) => FieldPath::parse_dotted(&s),
            Raw::Segments(v) => FieldPath::new(v),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Append,
    Update,
    Replace,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Append => "append",
            Action::Update => "update",
            Action::Replace => "replace",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "append" => Ok(Action::Append),
            "update" => Ok(Action::Update),
            "replace" => Ok(Action::Replace),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// A node's only side effect: (target path, action, payload).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteInstruction {
    #[serde(rename = "target_path")]
    pub path: FieldPath,
    pub action: Action,
    pub payload: Value,
}

impl WriteInstruction {
    pub fn new(path: FieldPath, action: Action, payload: Value) -> Self {
        Self {
            path,
            action,
            payload,
        }
    }

    /// Compact JSON in the wire shape nodes are asked to produce.
    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("instruction serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    List,
    Map,
    Scalar,
    Absent,
    AnswerSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownPath,
    AnswerWriteByNonSink,
    TypeMismatch,
    EmptyPayload,
    /// The node's text could not be decoded into an instruction at all.
    ParseError,
    /// The model call for the node failed outright.
    GatewayError,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::UnknownPath => "unknown-path",
            ErrorCode::AnswerWriteByNonSink => "answer-write-by-non-sink",
            ErrorCode::TypeMismatch => "type-mismatch",
            ErrorCode::EmptyPayload => "empty-payload",
            ErrorCode::ParseError => "parse-error",
            ErrorCode::GatewayError => "gateway-error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteError {
    pub code: ErrorCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    pub hint: String,
}

impl WriteError {
    /// Text appended to a node's context when it is asked to correct its output.
    pub fn render(&self) -> String {
        let mut s = format!("error: {}", self.code);
        if let Some(p) = &self.path {
            s.push_str(&format!("\npath: {p}"));
        }
        if let Some(a) = &self.action {
            s.push_str(&format!("\naction: {a}"));
        }
        s.push_str(&format!("\nhint: {}", self.hint));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WriteError>,
}

impl ValidationResult {
    pub fn pass() -> Self {
        Self {
            status: Status::Pass,
            error: None,
        }
    }

    pub fn fail(error: WriteError) -> Self {
        Self {
            status: Status::Fail,
            error: Some(error),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Null, empty text, empty list and empty map all count as empty.
pub fn is_empty_value(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.trim().is_empty(),
        Value::Array(a) => a.is_empty(),
        Value::Object(m) => m.is_empty(),
        Value::Bool(_) | Value::Number(_) => false,
    }
}

/// Text form of an answer payload: strings verbatim, objects by their answer-like field.
pub fn answer_text(payload: &Value) -> String {
    match payload {
        Value::String(s) => s.trim().to_string(),
        Value::Object(m) => {
            for key in ["answer", "expr", "expression", "solution", "moves"] {
                if let Some(v) = m.get(key) {
                    return answer_text(v);
                }
            }
            payload.to_string()
        }
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub from: String,
    pub to: String,
    pub mode: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SysState {
    pub step: usize,
    pub route_history: Vec<RouteEntry>,
    pub corrections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    ctx: Value,
    work: Map<String, Value>,
    sys: SysState,
    ans: Option<String>,
}

fn check_schema(value: &Value, top_level: bool, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                if k.is_empty() {
                    out.push("empty key".into());
                }
                if k.contains('.') {
                    out.push(format!("key {k:?} contains '.'"));
                }
                if top_level && k == ANSWER_SEGMENT {
                    out.push(format!("key {k:?} shadows the answer path"));
                }
                check_schema(v, false, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| check_schema(v, false, out)),
        _ => {}
    }
}

/// Problems with a work-partition template, in document order.
pub fn schema_problems(schema: &Value) -> Vec<String> {
    if !schema.is_object() {
        return vec!["the work schema must be a map".into()];
    }
    let mut out = Vec::new();
    check_schema(schema, true, &mut out);
    out
}

impl Workspace {
    pub fn new(instance: &TaskInstance, schema: &Value) -> Result<Self, WorkspaceError> {
        let ctx = json!({
            "id": instance.id,
            "task": instance.kind().as_str(),
            "statement": render_context(instance),
            "problem": instance.problem,
            "target": instance.target,
        });
        Self::with_context(ctx, schema)
    }

    pub fn with_context(ctx: Value, schema: &Value) -> Result<Self, WorkspaceError> {
        if let Some(problem) = schema_problems(schema).into_iter().next() {
            return Err(WorkspaceError::Schema(problem));
        }
        let work = schema.as_object().cloned().expect("checked above");
        Ok(Self {
            ctx,
            work,
            sys: SysState::default(),
            ans: None,
        })
    }

    pub fn ctx(&self) -> &Value {
        &self.ctx
    }

    pub fn work(&self) -> &Map<String, Value> {
        &self.work
    }

    pub fn sys(&self) -> &SysState {
        &self.sys
    }

    pub fn answer(&self) -> Option<&str> {
        self.ans.as_deref()
    }

    pub fn get(&self, path: &FieldPath) -> Option<&Value> {
        let (first, rest) = path.segments().split_first()?;
        let mut cur = self.work.get(first)?;
        for seg in rest {
            cur = cur.as_object()?.get(seg)?;
        }
        Some(cur)
    }

    fn get_mut(&mut self, path: &FieldPath) -> Option<&mut Value> {
        let (first, rest) = path.segments().split_first()?;
        let mut cur = self.work.get_mut(first)?;
        for seg in rest {
            cur = cur.as_object_mut()?.get_mut(seg)?;
        }
        Some(cur)
    }

    pub fn resolve_path(&self, path: &FieldPath) -> FieldKind {
        if path.is_answer() {
            return FieldKind::AnswerSlot;
        }
        match self.get(path) {
            None => FieldKind::Absent,
            Some(Value::Array(_)) => FieldKind::List,
            Some(Value::Object(_)) => FieldKind::Map,
            Some(_) => FieldKind::Scalar,
        }
    }

    /// Checks the three write conditions: the path exists (or is the answer path and the
    /// writer is the sink), the action suits the field kind, and the payload is non-empty.
    pub fn validate_write(
        &self,
        instr: &WriteInstruction,
        current_node: &str,
        graph: &AgentGraph,
    ) -> ValidationResult {
        let path = instr.path.to_string();
        let err = |code, hint: String| {
            ValidationResult::fail(WriteError {
                code,
                path: Some(path.clone()),
                action: Some(instr.action),
                hint,
            })
        };
        let kind = self.resolve_path(&instr.path);
        match kind {
            FieldKind::Absent => {
                let fields: Vec<&str> = self.work.keys().map(String::as_str).collect();
                return err(
                    ErrorCode::UnknownPath,
                    format!(
                        "path {path:?} does not exist in the work area; existing top-level fields: {fields:?}"
                    ),
                );
            }
            FieldKind::AnswerSlot if current_node != graph.sink() => {
                return err(
                    ErrorCode::AnswerWriteByNonSink,
                    format!(
                        "only the sink node {:?} may write {ANSWER_SEGMENT:?}; write to a work field instead",
                        graph.sink()
                    ),
                );
            }
            _ => {}
        }
        let compatible = match (instr.action, kind) {
            (Action::Append, FieldKind::List) => true,
            (Action::Update, FieldKind::Map) => {
                instr.payload.is_object() || is_empty_value(&instr.payload)
            }
            (Action::Replace, _) => true,
            _ => false,
        };
        if !compatible {
            let hint = match (instr.action, kind) {
                (Action::Update, FieldKind::Map) => {
                    "update requires a key-value map payload".to_string()
                }
                (Action::Update, _) => format!(
                    "update requires a map field but {path:?} is a {}; use append for lists or replace",
                    kind_name(kind)
                ),
                (Action::Append, _) => format!(
                    "append requires a list field but {path:?} is a {}; use update for maps or replace",
                    kind_name(kind)
                ),
                (Action::Replace, _) => unreachable!("replace is always compatible"),
            };
            return err(ErrorCode::TypeMismatch, hint);
        }
        if is_empty_value(&instr.payload) {
            return err(
                ErrorCode::EmptyPayload,
                "the payload is empty; provide a non-empty value".into(),
            );
        }
        ValidationResult::pass()
    }

    /// Applies a write that already passed validation.
    pub fn apply_write(&mut self, instr: &WriteInstruction) -> Result<(), WorkspaceError> {
        if is_empty_value(&instr.payload) {
            return Err(WorkspaceError::Invariant(
                "applying an empty payload".into(),
            ));
        }
        if instr.path.is_answer() {
            if instr.action != Action::Replace {
                return Err(WorkspaceError::Invariant(format!(
                    "{} on the answer slot",
                    instr.action
                )));
            }
            return self.set_answer(answer_text(&instr.payload));
        }
        let target = self.get_mut(&instr.path).ok_or_else(|| {
            WorkspaceError::Invariant(format!("path {} does not exist", instr.path))
        })?;
        match (instr.action, target) {
            (Action::Append, Value::Array(items)) => items.push(instr.payload.clone()),
            (Action::Update, Value::Object(map)) => {
                let Value::Object(payload) = &instr.payload else {
                    return Err(WorkspaceError::Invariant(
                        "update payload is not a map".into(),
                    ));
                };
                for (k, v) in payload {
                    map.insert(k.clone(), v.clone());
                }
            }
            (Action::Replace, slot) => *slot = instr.payload.clone(),
            (action, _) => {
                return Err(WorkspaceError::Invariant(format!(
                    "{action} is incompatible with {}",
                    instr.path
                )))
            }
        }
        Ok(())
    }

    /// Fills the answer slot; fails if it is already filled.
    pub fn set_answer(&mut self, text: String) -> Result<(), WorkspaceError> {
        if self.ans.is_some() {
            return Err(WorkspaceError::Invariant(
                "answer slot already filled".into(),
            ));
        }
        self.ans = Some(text);
        Ok(())
    }

    /// Bookkeeping at the end of one execution step.
    pub fn complete_step(&mut self, node: &str, next: Option<(&str, &str)>, corrections: usize) {
        self.sys.step += 1;
        self.sys.corrections += corrections;
        if let Some((to, mode)) = next {
            self.sys.route_history.push(RouteEntry {
                from: node.to_string(),
                to: to.to_string(),
                mode: mode.to_string(),
            });
        }
    }

    pub fn to_value(&self) -> Value {
        json!({
            "ctx": self.ctx,
            "work": self.work,
            "sys": self.sys,
            "ans": self.ans,
        })
    }

    /// Deterministic key-sorted rendering used in prompts and traces.
    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("workspace serializes")
    }

    pub fn from_serialized(text: &str) -> Result<Self, WorkspaceError> {
        #[derive(Deserialize)]
        struct Doc {
            ctx: Value,
            work: Map<String, Value>,
            sys: SysState,
            ans: Option<String>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| WorkspaceError::Malformed(e.to_string()))?;
        Ok(Self {
            ctx: doc.ctx,
            work: doc.work,
            sys: doc.sys,
            ans: doc.ans,
        })
    }
}

fn kind_name(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::List => "list",
        FieldKind::Map => "map",
        FieldKind::Scalar => "scalar",
        FieldKind::Absent => "missing field",
        FieldKind::AnswerSlot => "answer slot",
    }
}
