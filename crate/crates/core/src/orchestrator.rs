//! Choosing the next node: fixed for a single successor, a model call at branch points.

use serde::{Deserialize, Serialize};

use crate::gateway::{CallRecord, ChatRequest, Gateway, Phase};
use crate::graph::AgentGraph;
use crate::workspace::{Action, Status, Workspace};

/// Steps of history shown to the router.
pub const HISTORY_DIGEST_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    Deterministic,
    Model,
    Fallback,
}

impl RouteMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteMode::Deterministic => "deterministic",
            RouteMode::Model => "model",
            RouteMode::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub next: String,
    pub mode: RouteMode,
    /// Successors offered at this point, in declaration order.
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<CallRecord>,
}

impl RoutingDecision {
    /// Counted as a routing decision in metrics: more than one successor to choose from.
    pub fn is_branching(&self) -> bool {
        self.candidates.len() > 1
    }
}

/// One line of the history digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestEntry {
    pub step: usize,
    pub node: String,
    pub action: Option<Action>,
    pub path: Option<String>,
    pub status: Status,
}

pub fn render_digest(history: &[DigestEntry]) -> String {
    let start = history.len().saturating_sub(HISTORY_DIGEST_LEN);
    let lines: Vec<String> = history[start..]
        .iter()
        .map(|h| {
            format!(
                "step {}: node={} action={} path={} status={}",
                h.step,
                h.node,
                h.action.map_or("-", Action::as_str),
                h.path.as_deref().unwrap_or("-"),
                match h.status {
                    Status::Pass => "pass",
                    Status::Fail => "fail",
                }
            )
        })
        .collect();
    if lines.is_empty() {
        "(no steps yet)".into()
    } else {
        lines.join("\n")
    }
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Byte offsets where `id` occurs in `text` as a whole token (case-insensitive).
fn token_occurrences(text: &str, id: &str) -> Vec<usize> {
    let hay = text.to_lowercase();
    let needle = id.to_lowercase();
    if needle.is_empty() || hay.len() != text.len() {
        // Lowercasing changed byte lengths; fall back to exact case.
        return exact_occurrences(text, id);
    }
    exact_occurrences(&hay, &needle)
}

fn exact_occurrences(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    hay.match_indices(needle)
        .filter(|(i, _)| {
            let before = hay[..*i].chars().next_back();
            let after = hay[i + needle.len()..].chars().next();
            !before.is_some_and(is_token_char) && !after.is_some_and(is_token_char)
        })
        .map(|(i, _)| i)
        .collect()
}

fn bare_line(line: &str) -> &str {
    line.trim()
        .trim_end_matches(['.', ',', ';', '!'])
        .trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c == '*' || c.is_whitespace())
}

/// Matches router text to a candidate: a line consisting solely of an id wins
/// (the last such line), otherwise the candidate occurring last as a whole token.
pub fn parse_route_choice<'a>(text: &str, candidates: &[&'a str]) -> Option<&'a str> {
    for line in text.lines().rev() {
        let bare = bare_line(line);
        if let Some(c) = candidates.iter().find(|c| c.eq_ignore_ascii_case(bare)) {
            return Some(c);
        }
    }
    candidates
        .iter()
        .filter_map(|c| token_occurrences(text, c).last().map(|&pos| (pos, *c)))
        .max_by_key(|&(pos, c)| (pos, c.len()))
        .map(|(_, c)| c)
}

pub const ROUTER_SYSTEM_PROMPT: &str =
    "You are the orchestrator of a multi-agent reasoning system. \
Based on the shared workspace and recent history, choose which agent runs next.";

pub fn routing_prompt(
    ws: &Workspace,
    history: &[DigestEntry],
    current: &str,
    candidates: &[&str],
) -> String {
    format!(
        "Workspace:\n<workspace>\n{}\n</workspace>\n\nRecent steps:\n{}\n\n\
Node {current} just finished. Candidate next nodes: {}.\n\
Reply with exactly one candidate id on the last line.",
        ws.serialize(),
        render_digest(history),
        candidates.join(", ")
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Decides where to go after `current` (which must not be the sink).
pub fn route(
    ws: &Workspace,
    history: &[DigestEntry],
    current: &str,
    graph: &AgentGraph,
    gateway: &Gateway,
    config: &RouterConfig,
) -> RoutingDecision {
    let succ = graph.successors(current).unwrap_or_default();
    let candidates: Vec<String> = succ.iter().map(|s| s.to_string()).collect();
    match succ.as_slice() {
        [] => RoutingDecision {
            next: graph.sink().to_string(),
            mode: RouteMode::Fallback,
            candidates,
            rationale_text: None,
            call: None,
        },
        [only] => RoutingDecision {
            next: only.to_string(),
            mode: RouteMode::Deterministic,
            candidates,
            rationale_text: None,
            call: None,
        },
        [first, ..] => {
            let mut req = ChatRequest::new(
                Phase::Routing,
                ROUTER_SYSTEM_PROMPT,
                routing_prompt(ws, history, current, &succ),
            );
            req.temperature = config.temperature;
            req.max_output_tokens = config.max_output_tokens;
            let record = gateway.call(req);
            let (next, mode, rationale) = match record.text() {
                Ok(text) => match parse_route_choice(text, &succ) {
                    Some(c) => (c.to_string(), RouteMode::Model, Some(text.to_string())),
                    None => (
                        first.to_string(),
                        RouteMode::Fallback,
                        Some(text.to_string()),
                    ),
                },
                Err(_) => (first.to_string(), RouteMode::Fallback, None),
            };
            RoutingDecision {
                next,
                mode,
                candidates,
                rationale_text: rationale,
                call: Some(record),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedBackend};
    use crate::graph::NodeSpec;
    use bigmas_tasks::TaskInstance;
    use serde_json::json;

    fn branching() -> AgentGraph {
        AgentGraph::new(
            ["gen", "refine", "format"]
                .map(|id| NodeSpec::new(id, id))
                .to_vec(),
            vec![
                ("gen".into(), "refine".into()),
                ("gen".into(), "format".into()),
                ("refine".into(), "gen".into()),
            ],
            "gen",
            "format",
        )
    }

    fn ws() -> Workspace {
        Workspace::new(
            &TaskInstance::game24([4, 9, 10, 13]),
            &json!({"candidates": []}),
        )
        .unwrap()
    }

    const CFG: RouterConfig = RouterConfig {
        temperature: 0.7,
        max_output_tokens: 512,
    };

    #[test]
    fn route_choice_parsing() {
        let c = ["refine", "format"];
        assert_eq!(parse_route_choice("choose: format", &c), Some("format"));
        assert_eq!(parse_route_choice("refine then format", &c), Some("format"));
        assert_eq!(parse_route_choice("neither", &["a", "b"]), None);
        assert_eq!(
            parse_route_choice("format is tempting\n**Refine**.", &c),
            Some("refine")
        );
        assert_eq!(parse_route_choice("reformat", &c), None);
        assert_eq!(
            parse_route_choice("gen_2 over gen", &["gen", "gen_2"]),
            Some("gen")
        );
        assert_eq!(
            parse_route_choice("gen over gen_2", &["gen", "gen_2"]),
            Some("gen_2")
        );
    }

    #[test]
    fn single_successor_is_free() {
        let gw = Gateway::new(ScriptedBackend::new([]));
        let d = route(&ws(), &[], "refine", &branching(), &gw, &CFG);
        assert_eq!((d.next.as_str(), d.mode), ("gen", RouteMode::Deterministic));
        assert!(d.call.is_none());
        assert!(!d.is_branching());
    }

    #[test]
    fn branch_by_model_or_fallback() {
        let gw = Gateway::new(ScriptedBackend::new([
            ScriptEntry::new(Phase::Routing, "format"),
            ScriptEntry::new(Phase::Routing, "proceed to the next stage"),
        ]));
        let d = route(&ws(), &[], "gen", &branching(), &gw, &CFG);
        assert_eq!((d.next.as_str(), d.mode), ("format", RouteMode::Model));
        assert!(d
            .call
            .as_ref()
            .unwrap()
            .request
            .user
            .contains("<workspace>"));
        let d = route(&ws(), &[], "gen", &branching(), &gw, &CFG);
        assert_eq!((d.next.as_str(), d.mode), ("refine", RouteMode::Fallback));
        // Exhausted script: a gateway failure also falls back.
        let d = route(&ws(), &[], "gen", &branching(), &gw, &CFG);
        assert_eq!((d.next.as_str(), d.mode), ("refine", RouteMode::Fallback));
        assert!(d.is_branching());
    }

    #[test]
    fn dead_end_routes_to_sink() {
        let g = AgentGraph::new(
            ["a", "b", "z"].map(|id| NodeSpec::new(id, id)).to_vec(),
            vec![("a".into(), "z".into()), ("a".into(), "b".into())],
            "a",
            "z",
        );
        let gw = Gateway::new(ScriptedBackend::new([]));
        let d = route(&ws(), &[], "b", &g, &gw, &CFG);
        assert_eq!((d.next.as_str(), d.mode), ("z", RouteMode::Fallback));
    }

    #[test]
    fn digest_keeps_last_five() {
        let history: Vec<DigestEntry> = (0..8)
            .map(|i| DigestEntry {
                step: i,
                node: format!("n{i}"),
                action: Some(Action::Append),
                path: Some("candidates".into()),
                status: Status::Pass,
            })
            .collect();
        let d = render_digest(&history);
        assert_eq!(d.lines().count(), 5);
        assert!(d.starts_with("step 3: node=n3 action=append path=candidates status=pass"));
    }
}
