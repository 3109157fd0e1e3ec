//! Graph-structured multi-agent execution: a designer builds an agent graph and a
//! workspace schema, an orchestrator routes between nodes, and every node writes
//! through a validated instruction protocol.

pub mod designer;
pub mod executor;
pub mod extract;
pub mod gateway;
pub mod graph;
pub mod instruction;
pub mod orchestrator;
pub mod trace;
pub mod workspace;

pub use designer::{
    default_design, design, parse_design, DesignConfig, DesignError, DesignOutcome, DesignOutput,
    DesignSource,
};
pub use executor::{
    design_and_run, fallback_resolve, run, ExecutionResult, FallbackOutcome, FallbackSource,
    RunConfig, RunError, StepRecord, Termination, EMPTY_ANSWER_MARKER,
};
pub use gateway::{
    CallRecord, ChatBackend, ChatRequest, ChatResponse, FnBackend, Gateway, GatewayError,
    HttpBackend, HttpConfig, Phase, PhaseLimits, ScriptEntry, ScriptedBackend, Usage, UsageLedger,
};
pub use graph::{classify_role, AgentGraph, GraphError, NodeSpec, RoleCategory, MAX_NODES};
pub use instruction::{parse_instruction, ParseOutcome};
pub use orchestrator::{parse_route_choice, route, RouteMode, RoutingDecision};
pub use workspace::{Action, FieldPath, ValidationResult, Workspace, WriteInstruction};
