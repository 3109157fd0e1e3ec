//! Directed agent graphs with a designated source and sink.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    /// Free-text role descriptor, e.g. "expression generator".
    pub role: String,
    #[serde(default)]
    pub responsibilities: String,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, role: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            role: role.into(),
            responsibilities: String::new(),
        }
    }

    pub fn with_responsibilities(mut self, text: impl Into<String>) -> Self {
        self.responsibilities = text.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeRepr {
    Pair((String, String)),
    Named { from: String, to: String },
}

impl From<EdgeRepr> for (String, String) {
    fn from(e: EdgeRepr) -> Self {
        match e {
            EdgeRepr::Pair(p) => p,
            EdgeRepr::Named { from, to } => (from, to),
        }
    }
}

fn deserialize_edges<'de, D>(d: D) -> Result<Vec<(String, String)>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw: Vec<EdgeRepr> = Vec::deserialize(d)?;
    Ok(raw.into_iter().map(Into::into).collect())
}

/// Interchange form: `{"nodes": [...], "edges": [[from, to], ...], "source": id, "sink": id}`.
/// Edge order is the declaration order and is significant for routing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentGraph {
    nodes: Vec<NodeSpec>,
    #[serde(deserialize_with = "deserialize_edges")]
    edges: Vec<(String, String)>,
    source: String,
    sink: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "rule", content = "detail", rename_all = "kebab-case")]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {0:?} has an empty id or role")]
    EmptyField(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("{0} nodes exceeds the limit of {MAX_NODES}")]
    NodeLimit(usize),
    #[error("source {0:?} is not a declared node")]
    UnknownSource(String),
    #[error("sink {0:?} is not a declared node")]
    UnknownSink(String),
    #[error("source and sink must differ")]
    SourceIsSink,
    #[error("edge endpoint {0:?} is not a declared node")]
    UnknownEndpoint(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("self-loop on the sink")]
    SinkSelfLoop,
    #[error("sink is unreachable from the source")]
    UnreachableSink,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

impl GraphError {
    pub fn rule(&self) -> &'static str {
        match self {
            GraphError::Empty => "empty",
            GraphError::EmptyField(_) => "empty-field",
            GraphError::DuplicateNode(_) => "duplicate-node",
            GraphError::NodeLimit(_) => "node-limit",
            GraphError::UnknownSource(_) => "unknown-source",
            GraphError::UnknownSink(_) => "unknown-sink",
            GraphError::SourceIsSink => "source-is-sink",
            GraphError::UnknownEndpoint(_) => "unknown-endpoint",
            GraphError::DuplicateEdge(..) => "duplicate-edge",
            GraphError::SinkSelfLoop => "sink-self-loop",
            GraphError::UnreachableSink => "unreachable-sink",
            GraphError::UnknownNode(_) => "unknown-node",
        }
    }
}

impl AgentGraph {
    pub fn new(
        nodes: Vec<NodeSpec>,
        edges: Vec<(String, String)>,
        source: impl Into<String>,
        sink: impl Into<String>,
    ) -> Self {
        Self {
            nodes,
            edges,
            source: source.into(),
            sink: sink.into(),
        }
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn sink(&self) -> &str {
        &self.sink
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    /// Checks every structural rule and reports the first one violated.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.id.trim().is_empty() || n.role.trim().is_empty() {
                return Err(GraphError::EmptyField(n.id.clone()));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        if self.nodes.len() > MAX_NODES {
            return Err(GraphError::NodeLimit(self.nodes.len()));
        }
        if !ids.contains(self.source.as_str()) {
            return Err(GraphError::UnknownSource(self.source.clone()));
        }
        if !ids.contains(self.sink.as_str()) {
            return Err(GraphError::UnknownSink(self.sink.clone()));
        }
        if self.source == self.sink {
            return Err(GraphError::SourceIsSink);
        }
        let mut seen = HashSet::new();
        for (from, to) in &self.edges {
            for end in [from, to] {
                if !ids.contains(end.as_str()) {
                    return Err(GraphError::UnknownEndpoint(end.clone()));
                }
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge(from.clone(), to.clone()));
            }
            if from == to && *from == self.sink {
                return Err(GraphError::SinkSelfLoop);
            }
        }
        if !self
            .reachable_from(&self.source)
            .contains(self.sink.as_str())
        {
            return Err(GraphError::UnreachableSink);
        }
        Ok(())
    }

    fn reachable_from<'a>(&'a self, start: &'a str) -> HashSet<&'a str> {
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for (from, to) in &self.edges {
                if from == v && seen.insert(to.as_str()) {
                    queue.push_back(to.as_str());
                }
            }
        }
        seen
    }

    /// Out-neighbours in edge declaration order.
    pub fn successors(&self, v: &str) -> Result<Vec<&str>, GraphError> {
        if self.node(v).is_none() {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|(from, _)| from == v)
            .map(|(_, to)| to.as_str())
            .collect())
    }

    pub fn is_cyclic(&self) -> bool {
        self.nodes.iter().any(|n| {
            self.edges
                .iter()
                .filter(|(from, _)| *from == n.id)
                .any(|(_, to)| self.reachable_from(to).contains(n.id.as_str()))
        })
    }
}

impl fmt::Display for AgentGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.nodes {
            let succ = self.successors(&n.id).unwrap_or_default();
            let tag = if n.id == self.source {
                " (source)"
            } else if n.id == self.sink {
                " (sink)"
            } else {
                ""
            };
            writeln!(f, "- {}{tag}: {} -> {:?}", n.id, n.role, succ)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleCategory {
    Generator,
    Validator,
    Formatter,
    Analyzer,
    Optimizer,
    Other,
}

impl RoleCategory {
    pub const ALL: [RoleCategory; 6] = [
        RoleCategory::Generator,
        RoleCategory::Validator,
        RoleCategory::Formatter,
        RoleCategory::Analyzer,
        RoleCategory::Optimizer,
        RoleCategory::Other,
    ];
}

impl fmt::Display for RoleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

// First matching row wins.
const ROLE_STEMS: [(&[&str], RoleCategory); 5] = [
    (&["generat", "propos", "enumerat"], RoleCategory::Generator),
    (&["valid", "verif", "check"], RoleCategory::Validator),
    (
        &["format", "extract", "final", "answer"],
        RoleCategory::Formatter,
    ),
    (
        &["analy", "select", "plan", "strateg"],
        RoleCategory::Analyzer,
    ),
    (&["optim", "refin", "improv"], RoleCategory::Optimizer),
];

pub fn classify_role(descriptor: &str) -> RoleCategory {
    let lower = descriptor.to_lowercase();
    ROLE_STEMS
        .iter()
        .find(|(stems, _)| stems.iter().any(|s| lower.contains(s)))
        .map_or(RoleCategory::Other, |(_, cat)| *cat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edges(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn nodes(ids: &[&str]) -> Vec<NodeSpec> {
        ids.iter()
            .map(|id| NodeSpec::new(*id, format!("{id} role")))
            .collect()
    }

    #[test]
    fn chain_is_valid() {
        let g = AgentGraph::new(
            nodes(&["src", "mid", "snk"]),
            edges(&[("src", "mid"), ("mid", "snk")]),
            "src",
            "snk",
        );
        assert_eq!(g.validate(), Ok(()));
        assert_eq!(g.successors("mid").unwrap(), ["snk"]);
        assert!(g.successors("snk").unwrap().is_empty());
        assert!(matches!(
            g.successors("zzz"),
            Err(GraphError::UnknownNode(_))
        ));
        assert!(!g.is_cyclic());
    }

    #[test]
    fn node_limit() {
        let ids: Vec<String> = (0..11).map(|i| format!("n{i}")).collect();
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let pairs: Vec<(&str, &str)> = id_refs.windows(2).map(|w| (w[0], w[1])).collect();
        let g = AgentGraph::new(nodes(&id_refs), edges(&pairs), "n0", "n10");
        assert_eq!(g.validate(), Err(GraphError::NodeLimit(11)));
        assert_eq!(g.validate().unwrap_err().rule(), "node-limit");
    }

    #[test]
    fn structural_failures() {
        let n = nodes(&["a", "b", "c"]);
        let cases = [
            (
                AgentGraph::new(n.clone(), edges(&[("a", "b")]), "a", "c"),
                "unreachable-sink",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "c"), ("a", "c")]), "a", "c"),
                "duplicate-edge",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "c"), ("c", "c")]), "a", "c"),
                "sink-self-loop",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "x")]), "a", "c"),
                "unknown-endpoint",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "c")]), "a", "a"),
                "source-is-sink",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "c")]), "q", "c"),
                "unknown-source",
            ),
            (
                AgentGraph::new(n.clone(), edges(&[("a", "c")]), "a", "q"),
                "unknown-sink",
            ),
            (
                AgentGraph::new(nodes(&["a", "a"]), vec![], "a", "a"),
                "duplicate-node",
            ),
            (AgentGraph::new(vec![], vec![], "a", "b"), "empty"),
            (
                AgentGraph::new(
                    vec![NodeSpec::new("a", " "), NodeSpec::new("b", "r")],
                    edges(&[("a", "b")]),
                    "a",
                    "b",
                ),
                "empty-field",
            ),
        ];
        for (g, rule) in cases {
            assert_eq!(g.validate().unwrap_err().rule(), rule, "{g:?}");
        }
    }

    #[test]
    fn cycles_are_allowed() {
        let g = AgentGraph::new(
            nodes(&["gen", "check", "out"]),
            edges(&[("gen", "check"), ("check", "gen"), ("check", "out")]),
            "gen",
            "out",
        );
        assert_eq!(g.validate(), Ok(()));
        assert!(g.is_cyclic());
        assert_eq!(g.successors("check").unwrap(), ["gen", "out"]);
    }

    #[test]
    fn interchange_accepts_both_edge_forms() {
        let text = r#"{"nodes":[{"id":"a","role":"generator"},{"id":"b","role":"formatter"}],
            "edges":[{"from":"a","to":"b"}],"source":"a","sink":"b"}"#;
        let g: AgentGraph = serde_json::from_str(text).unwrap();
        assert_eq!(g.edges(), &edges(&[("a", "b")]));
        let out = serde_json::to_value(&g).unwrap();
        assert_eq!(out["edges"], serde_json::json!([["a", "b"]]));
        assert_eq!(serde_json::from_value::<AgentGraph>(out).unwrap(), g);
    }

    #[test]
    fn role_classification() {
        assert_eq!(
            classify_role("expression generator"),
            RoleCategory::Generator
        );
        assert_eq!(classify_role("validator"), RoleCategory::Validator);
        assert_eq!(
            classify_role("bfs frontier analyzer"),
            RoleCategory::Analyzer
        );
        assert_eq!(classify_role("Answer Formatter"), RoleCategory::Formatter);
        assert_eq!(classify_role("strategy updater"), RoleCategory::Analyzer);
        assert_eq!(classify_role("solution refiner"), RoleCategory::Optimizer);
        assert_eq!(classify_role("move proposer"), RoleCategory::Generator);
        assert_eq!(classify_role("coordinator"), RoleCategory::Other);
        assert_eq!(classify_role(""), RoleCategory::Other);
    }

    proptest! {
        #[test]
        fn classification_is_total_and_deterministic(s in ".*") {
            prop_assert_eq!(classify_role(&s), classify_role(&s));
        }

        #[test]
        fn valid_graphs_reach_sink(n in 2usize..=10, extra in prop::collection::vec((0usize..10, 0usize..10), 0..15)) {
            let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let mut e: Vec<(String, String)> = Vec::new();
            for (a, b) in extra {
                let (a, b) = (a % n, b % n);
                let pair = (ids[a].clone(), ids[b].clone());
                if !e.contains(&pair) {
                    e.push(pair);
                }
            }
            let g = AgentGraph::new(
                ids.iter().map(|i| NodeSpec::new(i.clone(), "worker")).collect(),
                e,
                ids[0].clone(),
                ids[n - 1].clone(),
            );
            if g.validate().is_ok() {
                for id in &ids {
                    prop_assert!(g.successors(id).is_ok());
                }
                prop_assert!(g.reachable_from(g.source()).contains(g.sink()));
            }
        }
    }
}
