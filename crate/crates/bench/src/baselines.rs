//! Comparison harnesses sharing the gateway and verifier: a single direct call,
//! a verifier-backed ReAct loop, and a width-1 Tree of Thoughts.

use bigmas_core::gateway::{CallRecord, ChatRequest, Gateway, Phase, DEFAULT_TEMPERATURE};
use bigmas_tasks::{render_context, verify, TaskInstance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Base,
    React,
    Tot,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Base => "base",
            BaselineKind::React => "react",
            BaselineKind::Tot => "tot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub react_max_turns: usize,
    pub tot_max_rounds: usize,
    pub tot_n_thoughts: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            react_max_turns: 10,
            tot_max_rounds: 4,
            tot_n_thoughts: 3,
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub answer: String,
    pub calls: Vec<CallRecord>,
    /// ReAct turns or ToT rounds actually used; 1 for the direct call.
    pub turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Call labels carried in `ChatRequest::node` so backends can tell baseline calls apart.
pub const LABEL_BASE: &str = "base";
pub const LABEL_REACT: &str = "react";
pub const LABEL_TOT_PROPOSE: &str = "tot-propose";
pub const LABEL_TOT_EVALUATE: &str = "tot-evaluate";

const ANSWER_TAG: &str = "ANSWER:";

fn request(label: &str, system: &str, user: String, cfg: &BaselineConfig) -> ChatRequest {
    let mut req = ChatRequest::new(Phase::Baseline, system, user).for_node(label);
    req.temperature = cfg.temperature;
    req.max_output_tokens = cfg.max_output_tokens;
    req
}

/// The last `ANSWER:`-tagged line, else the whole text.
pub fn extract_answer(text: &str) -> String {
    text.lines()
        .rev()
        .find_map(|l| {
            let l = l.trim().trim_start_matches(['*', '#', '-', ' ']);
            let head = l.get(..ANSWER_TAG.len())?;
            head.eq_ignore_ascii_case(ANSWER_TAG).then(|| {
                l[ANSWER_TAG.len()..]
                    .trim()
                    .trim_matches('*')
                    .trim()
                    .to_string()
            })
        })
        .unwrap_or_else(|| text.trim().to_string())
}

const BASE_SYSTEM: &str =
    "Solve the puzzle. Finish with a final line of the form `ANSWER: <answer>`.";

pub fn run_base(
    instance: &TaskInstance,
    gateway: &Gateway,
    cfg: &BaselineConfig,
) -> BaselineResult {
    let call = gateway.call(request(
        LABEL_BASE,
        BASE_SYSTEM,
        render_context(instance),
        cfg,
    ));
    let (answer, error) = match call.text() {
        Ok(t) => (extract_answer(t), None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    BaselineResult {
        answer,
        calls: vec![call],
        turns: 1,
        error,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReactAction {
    Check(String),
    Finish(String),
}

/// First `check[...]` or `finish[...]` in the text; brackets inside the argument must balance.
pub fn parse_react_action(text: &str) -> Option<ReactAction> {
    let lower = text.to_ascii_lowercase();
    let mut best: Option<(usize, ReactAction)> = None;
    for (name, finish) in [("check[", false), ("finish[", true)] {
        let mut from = 0;
        while let Some(rel) = lower[from..].find(name) {
            let start = from + rel;
            from = start + name.len();
            let boundary = lower[..start]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric());
            if !boundary {
                continue;
            }
            let arg_start = start + name.len();
            let mut depth = 1;
            let end = text[arg_start..].char_indices().find_map(|(i, c)| {
                match c {
                    '[' => depth += 1,
                    ']' => depth -= 1,
                    _ => {}
                }
                (depth == 0).then_some(arg_start + i)
            });
            if let Some(end) = end {
                let arg = text[arg_start..end].trim().to_string();
                let action = if finish {
                    ReactAction::Finish(arg)
                } else {
                    ReactAction::Check(arg)
                };
                if best.as_ref().is_none_or(|(pos, _)| start < *pos) {
                    best = Some((start, action));
                }
                break;
            }
        }
    }
    best.map(|(_, a)| a)
}

const REACT_SYSTEM: &str = "Solve the puzzle by interleaving reasoning and actions. Each turn, write \
`Thought: ...` and then exactly one action: `check[<candidate answer>]` to test a candidate against \
the constraints, or `finish[<answer>]` to submit your final answer.";

pub fn run_react(
    instance: &TaskInstance,
    gateway: &Gateway,
    cfg: &BaselineConfig,
) -> BaselineResult {
    let mut transcript = String::new();
    let mut calls = Vec::new();
    let mut last_check: Option<String> = None;
    let mut answer = None;
    let mut error = None;
    for turn in 1..=cfg.react_max_turns {
        let user = format!("{}\n\n{transcript}Turn {turn}:", render_context(instance));
        let call = gateway.call(request(LABEL_REACT, REACT_SYSTEM, user, cfg));
        let text = match call.text() {
            Ok(t) => t.to_string(),
            Err(e) => {
                error = Some(e.to_string());
                calls.push(call);
                break;
            }
        };
        calls.push(call);
        transcript.push_str(text.trim());
        transcript.push('\n');
        match parse_react_action(&text) {
            Some(ReactAction::Finish(a)) => {
                answer = Some(a);
                break;
            }
            Some(ReactAction::Check(c)) => {
                let verdict = verify(instance, &c);
                let obs = if verdict.correct {
                    "the candidate satisfies all constraints".to_string()
                } else {
                    format!("rejected: {}", verdict.reason())
                };
                transcript.push_str(&format!("Observation: {obs}\n"));
                last_check = Some(c);
            }
            None => {
                transcript.push_str("Observation: no action found; use check[...] or finish[...]\n")
            }
        }
    }
    BaselineResult {
        answer: answer.or(last_check).unwrap_or_default(),
        turns: calls.len(),
        calls,
        error,
    }
}

/// First integer in 1..=10 in the text; anything else rates 1.
pub fn parse_rating(text: &str) -> u32 {
    text.split(|c: char| !c.is_ascii_digit())
        .filter_map(|t| t.parse::<u32>().ok())
        .find(|n| (1..=10).contains(n))
        .unwrap_or(1)
}

const TOT_PROPOSE_SYSTEM: &str =
    "You explore candidate solutions to a puzzle. Propose one complete \
candidate answer, improving on the current best if there is one. Finish with `ANSWER: <answer>`.";
const TOT_EVALUATE_SYSTEM: &str =
    "You evaluate candidate answers to a puzzle. Rate how likely the \
candidate is to be fully correct on a scale from 1 to 10. Reply with the number only.";

pub fn run_tot(instance: &TaskInstance, gateway: &Gateway, cfg: &BaselineConfig) -> BaselineResult {
    let context = render_context(instance);
    let mut calls = Vec::new();
    let mut frontier: Option<String> = None;
    // Best rated candidate so far: (rating, answer); earlier candidates win ties.
    let mut best: Option<(u32, String)> = None;
    let mut rounds = 0;
    let mut error = None;

    'rounds: for round in 1..=cfg.tot_max_rounds {
        rounds = round;
        let mut candidates = Vec::new();
        for i in 1..=cfg.tot_n_thoughts {
            let user = format!(
                "{context}\n\nCurrent best candidate: {}\nRound {round}, proposal {i}.",
                frontier.as_deref().unwrap_or("(none)")
            );
            let call = gateway.call(request(LABEL_TOT_PROPOSE, TOT_PROPOSE_SYSTEM, user, cfg));
            let text = call.text().map(extract_answer).map_err(ToString::to_string);
            calls.push(call);
            match text {
                Ok(c) => {
                    if verify(instance, &c).correct {
                        return BaselineResult {
                            answer: c,
                            calls,
                            turns: round,
                            error: None,
                        };
                    }
                    candidates.push(c);
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break 'rounds;
                }
            }
        }
        let mut round_best: Option<(u32, usize)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let user = format!("{context}\n\nCandidate: {c}\nRating (1-10):");
            let call = gateway.call(request(LABEL_TOT_EVALUATE, TOT_EVALUATE_SYSTEM, user, cfg));
            let rating = call.text().map(parse_rating).unwrap_or(1);
            calls.push(call);
            if round_best.is_none_or(|(r, _)| rating > r) {
                round_best = Some((rating, i));
            }
        }
        if let Some((rating, i)) = round_best {
            frontier = Some(candidates[i].clone());
            if best.as_ref().is_none_or(|(r, _)| rating > *r) {
                best = Some((rating, candidates[i].clone()));
            }
        }
    }
    BaselineResult {
        answer: best.map(|(_, a)| a).unwrap_or_default(),
        calls,
        turns: rounds,
        error,
    }
}

pub fn run_baseline(
    kind: BaselineKind,
    instance: &TaskInstance,
    gateway: &Gateway,
    cfg: &BaselineConfig,
) -> BaselineResult {
    match kind {
        BaselineKind::Base => run_base(instance, gateway, cfg),
        BaselineKind::React => run_react(instance, gateway, cfg),
        BaselineKind::Tot => run_tot(instance, gateway, cfg),
    }
}
