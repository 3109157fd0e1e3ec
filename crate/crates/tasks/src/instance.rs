//! Task instances: generation, context rendering, answer verification and oracle solving.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::expr::{evaluate, parse_expression, EvalPolicy, Expr, Rational};
use crate::sixfives::SixFivesOracle;
use crate::tol::{self, TolMove, TolState};
use crate::{game24, sixfives};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Game24,
    SixFives,
    Tol,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Game24, TaskKind::SixFives, TaskKind::Tol];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Game24 => "game24",
            TaskKind::SixFives => "sixfives",
            TaskKind::Tol => "tol",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "game24" | "game-24" | "24" => Ok(TaskKind::Game24),
            "sixfives" | "six-fives" | "six_fives" => Ok(TaskKind::SixFives),
            "tol" | "tower-of-london" | "tower_of_london" => Ok(TaskKind::Tol),
            other => Err(format!(
                "unknown task {other:?} (expected game24, sixfives or tol)"
            )),
        }
    }
}

/// Problem input `x`; the target follows from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "input", rename_all = "lowercase")]
pub enum Problem {
    Game24 {
        numbers: [u32; 4],
    },
    #[serde(rename = "sixfives")]
    SixFives {
        target: i64,
    },
    Tol {
        initial: TolState,
        goal: TolState,
        optimal_length: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub solvable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_length: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    #[serde(flatten)]
    pub problem: Problem,
    pub constraints: String,
    pub target: Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleMeta>,
}

impl TaskInstance {
    pub fn new(id: impl Into<String>, problem: Problem, seed: u64) -> Self {
        let constraints = constraints_text(&problem);
        let target = match &problem {
            Problem::Game24 { .. } => json!({ "value": game24::TARGET }),
            Problem::SixFives { target } => json!({ "value": target }),
            Problem::Tol {
                goal,
                optimal_length,
                ..
            } => json!({ "goal": goal, "optimal_length": optimal_length }),
        };
        Self {
            id: id.into(),
            problem,
            constraints,
            target,
            seed,
            oracle: None,
        }
    }

    pub fn game24(numbers: [u32; 4]) -> Self {
        Self::new(
            format!("game24-{}", numbers.map(|n| n.to_string()).join("-")),
            Problem::Game24 { numbers },
            0,
        )
    }

    pub fn six_fives(target: i64) -> Self {
        Self::new(
            format!("sixfives-{target}"),
            Problem::SixFives { target },
            0,
        )
    }

    /// Builds a ToL instance, labelling it with the BFS distance between the two states.
    pub fn tol(initial: TolState, goal: TolState) -> Self {
        let optimal_length = tol::shortest_path(&initial, &goal)
            .expect("the state graph is connected")
            .len() as u32;
        Self::new(
            format!("tol-{initial}-{goal}"),
            Problem::Tol {
                initial,
                goal,
                optimal_length,
            },
            0,
        )
    }

    pub fn kind(&self) -> TaskKind {
        match self.problem {
            Problem::Game24 { .. } => TaskKind::Game24,
            Problem::SixFives { .. } => TaskKind::SixFives,
            Problem::Tol { .. } => TaskKind::Tol,
        }
    }

    pub fn with_oracle(mut self) -> Self {
        let solution = oracle_solve(&self);
        self.oracle = Some(OracleMeta {
            solvable: solution.is_some(),
            optimal_length: match (&self.problem, &solution) {
                (Problem::Tol { .. }, Some(Solution::Moves(m))) => Some(m.len() as u32),
                _ => None,
            },
            solution: solution.map(|s| s.to_string()),
        });
        self
    }
}

fn constraints_text(problem: &Problem) -> String {
    match problem {
        Problem::Game24 { .. } => "Use each of the four numbers exactly once. Allowed operators: + - * / and parentheses. The expression must evaluate to exactly 24.".into(),
        Problem::SixFives { target } => format!(
            "Use exactly six instances of the digit 5; concatenation such as 55 or 555 is allowed. Allowed operators: + - * / ! (factorial) !! (double factorial) and parentheses. The expression must evaluate to exactly {target}."
        ),
        Problem::Tol { optimal_length, .. } => format!(
            "Each move transfers the top bead of one peg onto another peg. Peg capacities are 3, 2 and 1 (pegs 1, 2, 3). The move sequence must be of minimum length ({optimal_length} moves)."
        ),
    }
}

/// Deterministic natural-language statement of the instance for the read-only context.
pub fn render_context(instance: &TaskInstance) -> String {
    match &instance.problem {
        Problem::Game24 { numbers } => format!(
            "Task: Game24.\nNumbers: {} {} {} {}\nTarget: 24\nConstraints: {}\nAnswer format: a single arithmetic expression such as (a-b)*(c-d).",
            numbers[0], numbers[1], numbers[2], numbers[3], instance.constraints
        ),
        Problem::SixFives { target } => format!(
            "Task: Six Fives.\nTarget: {target}\nConstraints: {}\nYou must use exactly six fives. Allowed operators: +, -, *, /, ! and !!.\nAnswer format: a single arithmetic expression such as 55+5-5*5/5.",
            instance.constraints
        ),
        Problem::Tol {
            initial,
            goal,
            optimal_length,
        } => format!(
            "Task: Tower of London.\nInitial configuration (bottom to top {initial}):\n{}\nGoal configuration (bottom to top {goal}):\n{}\nOptimal number of moves: {optimal_length}\nConstraints: {}\nAnswer format: a JSON list of [from, to] peg pairs such as [[1,3],[2,1]], or one line per move like \"move 1 to 3\".",
            initial.diagram(),
            goal.diagram(),
            instance.constraints
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solution {
    Expression(Expr),
    Moves(Vec<TolMove>),
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Solution::Expression(e) => write!(f, "{e}"),
            Solution::Moves(m) => f.write_str(&tol::moves_to_json(m)),
        }
    }
}

/// Independent ground truth by exhaustive search.
pub fn oracle_solve(instance: &TaskInstance) -> Option<Solution> {
    match &instance.problem {
        Problem::Game24 { numbers } => game24::solve(*numbers).map(Solution::Expression),
        Problem::SixFives { target } => SixFivesOracle::shared()
            .solve(*target)
            .map(Solution::Expression),
        Problem::Tol { initial, goal, .. } => {
            tol::shortest_path(initial, goal).map(Solution::Moves)
        }
    }
}

/// Why an answer was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum Failure {
    EmptyAnswer,
    Syntax {
        message: String,
    },
    DisallowedOperator,
    LiteralMismatch {
        found: Vec<String>,
        expected: Vec<u32>,
    },
    NonFiveDigit {
        literal: String,
    },
    DigitCount {
        found: usize,
    },
    Evaluation {
        message: String,
    },
    WrongValue {
        value: String,
        target: String,
    },
    MoveSyntax {
        message: String,
    },
    IllegalMove {
        index: usize,
        reason: String,
    },
    GoalNotReached,
    NonMinimal {
        length: usize,
        optimal: u32,
    },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::EmptyAnswer => write!(f, "empty answer"),
            Failure::Syntax { message } => write!(f, "{message}"),
            Failure::DisallowedOperator => {
                write!(f, "only + - * / and parentheses are allowed")
            }
            Failure::LiteralMismatch { found, expected } => write!(
                f,
                "numbers used {found:?} do not match the input {expected:?} exactly once each"
            ),
            Failure::NonFiveDigit { literal } => {
                write!(f, "literal {literal} contains a digit other than 5")
            }
            Failure::DigitCount { found } => write!(f, "digit-count {found} != 6"),
            Failure::Evaluation { message } => write!(f, "{message}"),
            Failure::WrongValue { value, target } => {
                write!(f, "expression evaluates to {value}, not {target}")
            }
            Failure::MoveSyntax { message } => write!(f, "{message}"),
            Failure::IllegalMove { index, reason } => {
                write!(f, "move {} is illegal: {reason}", index + 1)
            }
            Failure::GoalNotReached => write!(f, "the final configuration is not the goal"),
            Failure::NonMinimal { length, optimal } => {
                write!(
                    f,
                    "non-minimal: {length} moves but the optimum is {optimal}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

impl Verdict {
    fn pass() -> Self {
        Self {
            correct: true,
            failure: None,
        }
    }

    fn fail(failure: Failure) -> Self {
        Self {
            correct: false,
            failure: Some(failure),
        }
    }

    pub fn reason(&self) -> String {
        match &self.failure {
            None => "correct".into(),
            Some(f) => f.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// When false, any goal-reaching ToL plan is accepted.
    pub require_minimal: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            require_minimal: true,
        }
    }
}

pub fn verify(instance: &TaskInstance, answer: &str) -> Verdict {
    verify_with(instance, answer, VerifyOptions::default())
}

pub fn verify_with(instance: &TaskInstance, answer: &str, options: VerifyOptions) -> Verdict {
    let answer = normalize_answer(answer);
    if answer.is_empty() {
        return Verdict::fail(Failure::EmptyAnswer);
    }
    match &instance.problem {
        Problem::Game24 { numbers } => verify_game24(*numbers, answer),
        Problem::SixFives { target } => verify_six_fives(*target, answer),
        Problem::Tol {
            initial,
            goal,
            optimal_length,
        } => verify_tol(initial, goal, *optimal_length, answer, options),
    }
}

/// Strips code ticks and a trailing `= value` so `(13-9)*(10-4) = 24` is read as the expression.
fn normalize_answer(answer: &str) -> &str {
    let mut s = answer.trim().trim_matches('`').trim();
    if !s.starts_with('[') {
        if let Some(idx) = s.find('=') {
            s = s[..idx].trim();
        }
    }
    s
}

fn verify_game24(numbers: [u32; 4], answer: &str) -> Verdict {
    let expr = match parse_expression(answer) {
        Ok(e) => e,
        Err(e) => {
            return Verdict::fail(Failure::Syntax {
                message: e.to_string(),
            })
        }
    };
    if !expr.is_binary_arithmetic() {
        return Verdict::fail(Failure::DisallowedOperator);
    }
    let found: Vec<String> = expr
        .literals()
        .iter()
        .map(|l| l.digits().to_string())
        .collect();
    let mut used: Vec<Option<u64>> = expr.literals().iter().map(|l| l.value()).collect();
    let mut expected: Vec<Option<u64>> = numbers.iter().map(|n| Some(u64::from(*n))).collect();
    used.sort_unstable();
    expected.sort_unstable();
    // Leading zeros would let "04" pass as 4; compare the written digits too.
    let canonical = expr
        .literals()
        .iter()
        .all(|l| l.value().map(|v| v.to_string()).as_deref() == Some(l.digits()));
    if used != expected || !canonical {
        return Verdict::fail(Failure::LiteralMismatch {
            found,
            expected: numbers.to_vec(),
        });
    }
    check_value(&expr, 24)
}

fn verify_six_fives(target: i64, answer: &str) -> Verdict {
    let expr = match parse_expression(answer) {
        Ok(e) => e,
        Err(e) => {
            return Verdict::fail(Failure::Syntax {
                message: e.to_string(),
            })
        }
    };
    let mut fives = 0;
    for lit in expr.literals() {
        if !lit.digits().bytes().all(|b| b == b'5') {
            return Verdict::fail(Failure::NonFiveDigit {
                literal: lit.digits().to_string(),
            });
        }
        fives += lit.digits().len();
    }
    if fives != sixfives::FIVES {
        return Verdict::fail(Failure::DigitCount { found: fives });
    }
    check_value(&expr, target)
}

fn check_value(expr: &Expr, target: i64) -> Verdict {
    match evaluate(expr, &EvalPolicy::default()) {
        Err(e) => Verdict::fail(Failure::Evaluation {
            message: e.to_string(),
        }),
        Ok(v) if v == Rational::from_integer(target.into()) => Verdict::pass(),
        Ok(v) => Verdict::fail(Failure::WrongValue {
            value: v.to_string(),
            target: target.to_string(),
        }),
    }
}

fn verify_tol(
    initial: &TolState,
    goal: &TolState,
    optimal: u32,
    answer: &str,
    options: VerifyOptions,
) -> Verdict {
    let moves = match tol::parse_moves(answer) {
        Ok(m) => m,
        Err(message) => return Verdict::fail(Failure::MoveSyntax { message }),
    };
    let mut state = initial.clone();
    for (index, m) in moves.iter().enumerate() {
        match tol::apply_move(&state, *m) {
            Ok(next) => state = next,
            Err(e) => {
                return Verdict::fail(Failure::IllegalMove {
                    index,
                    reason: e.to_string(),
                })
            }
        }
    }
    if &state != goal {
        return Verdict::fail(Failure::GoalNotReached);
    }
    if options.require_minimal && moves.len() != optimal as usize {
        return Verdict::fail(Failure::NonMinimal {
            length: moves.len(),
            optimal,
        });
    }
    Verdict::pass()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("seed pool exhausted: {0}")]
    PoolExhausted(String),
}

const GAME24_POOL_SIZE: usize = 1000;
const MAX_DRAWS: usize = 1_000_000;

/// Reproducible instance sampling for one task family.
pub fn generate_instances(
    kind: TaskKind,
    count: usize,
    seed: u64,
) -> Result<Vec<TaskInstance>, GenerateError> {
    if count == 0 {
        return Err(GenerateError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems = match kind {
        TaskKind::Game24 => generate_game24(&mut rng, count)?,
        TaskKind::SixFives => generate_six_fives(&mut rng, count)?,
        TaskKind::Tol => generate_tol(&mut rng, count)?,
    };
    Ok(problems
        .into_iter()
        .enumerate()
        .map(|(i, p)| TaskInstance::new(format!("{kind}-{seed}-{i}"), p, seed).with_oracle())
        .collect())
}

fn draw_tuple(rng: &mut ChaCha8Rng) -> [u32; 4] {
    let mut t = [0; 4].map(|_| rng.gen_range(game24::MIN_NUMBER..=game24::MAX_NUMBER));
    t.sort_unstable();
    t
}

/// Mean and population standard deviation of difficulty over a seeded pool of solvable tuples.
pub fn game24_difficulty_band(rng: &mut ChaCha8Rng) -> Result<(f64, f64), GenerateError> {
    let mut scores = Vec::with_capacity(GAME24_POOL_SIZE);
    let mut draws = 0;
    while scores.len() < GAME24_POOL_SIZE {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(GenerateError::PoolExhausted(
                "game24 difficulty pool".into(),
            ));
        }
        let score = game24::lookup_score(draw_tuple(rng));
        if score > 0 {
            scores.push(score as f64);
        }
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn generate_game24(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Problem>, GenerateError> {
    let (mean, sd) = game24_difficulty_band(rng)?;
    let eligible = game24::score_table()
        .iter()
        .filter(|(_, s)| *s > 0 && (*s as f64 - mean).abs() <= sd)
        .count();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(GenerateError::PoolExhausted("game24 instances".into()));
        }
        let tuple = draw_tuple(rng);
        let score = game24::lookup_score(tuple);
        if score == 0 || (score as f64 - mean).abs() > sd {
            continue;
        }
        // Distinct puzzles while the band still has unused ones.
        if seen.len() < eligible && !seen.insert(tuple) {
            continue;
        }
        out.push(Problem::Game24 { numbers: tuple });
    }
    Ok(out)
}

/// Targets in [1, 100] that the default-cap oracle can solve.
pub fn six_fives_solvable_targets() -> Vec<i64> {
    let oracle = SixFivesOracle::shared();
    (1..=100).filter(|t| oracle.solve(*t).is_some()).collect()
}

fn generate_six_fives(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Problem>, GenerateError> {
    let targets = six_fives_solvable_targets();
    if targets.is_empty() {
        return Err(GenerateError::PoolExhausted(
            "no solvable six fives targets".into(),
        ));
    }
    Ok((0..count)
        .map(|_| Problem::SixFives {
            target: *targets.choose(rng).expect("non-empty"),
        })
        .collect())
}

/// Lengths are stratified round-robin over 1..=8 and then shuffled, so every
/// block of eight instances covers each optimal length once.
fn generate_tol(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Problem>, GenerateError> {
    let states = tol::enumerate_states();
    let mut by_length: Vec<Vec<(usize, usize)>> = vec![Vec::new(); 9];
    for (i, s) in states.iter().enumerate() {
        let dist = tol::distances_from(s);
        for (j, g) in states.iter().enumerate() {
            if let Some(&d) = dist.get(g) {
                if (1..=8).contains(&d) {
                    by_length[d].push((i, j));
                }
            }
        }
    }
    let mut lengths: Vec<usize> = (0..count).map(|i| 1 + i % 8).collect();
    lengths.shuffle(rng);
    let mut out = Vec::with_capacity(count);
    for len in lengths {
        let &(i, j) = by_length[len].choose(rng).ok_or_else(|| {
            GenerateError::PoolExhausted(format!("no ToL pair at distance {len}"))
        })?;
        out.push(Problem::Tol {
            initial: states[i].clone(),
            goal: states[j].clone(),
            optimal_length: len as u32,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::Bead::*;

    #[test]
    fn verify_examples() {
        let g = TaskInstance::game24([4, 9, 10, 13]);
        assert!(verify(&g, "(13-9)*(10-4)").correct);
        assert!(verify(&g, "(13-9)*(10-4) = 24").correct);
        let v = verify(&g, "(12-9)*(10-4)");
        assert!(
            matches!(v.failure, Some(Failure::LiteralMismatch { .. })),
            "{v:?}"
        );
        assert!(matches!(
            verify(&g, "(13-9)*(10-4)*1").failure,
            Some(Failure::LiteralMismatch { .. })
        ));
        assert!(matches!(
            verify(&g, "-(9-13)*(10-4)").failure,
            Some(Failure::DisallowedOperator)
        ));
        assert!(matches!(
            verify(&g, "13+9+10-4").failure,
            Some(Failure::WrongValue { .. })
        ));

        let s30 = TaskInstance::six_fives(30);
        assert!(verify(&s30, "5+5+5+5+5+5").correct);
        let s60 = TaskInstance::six_fives(60);
        let v = verify(&s60, "55+5");
        assert_eq!(v.failure, Some(Failure::DigitCount { found: 3 }));
        assert_eq!(v.reason(), "digit-count 3 != 6");
        assert!(matches!(
            verify(&s60, "56+5-5+5-5+5").failure,
            Some(Failure::NonFiveDigit { .. })
        ));
        assert!(verify(&s60, "55+5+(5-5)*5").correct);
        assert!(verify(&TaskInstance::six_fives(15), "5!!+(5-5)*5*5*5").correct);
    }

    #[test]
    fn tol_verification() {
        let init = TolState::new([vec![Red, Green, Blue], vec![], vec![]]).unwrap();
        let goal = TolState::new([vec![Red, Green], vec![], vec![Blue]]).unwrap();
        let inst = TaskInstance::tol(init, goal);
        assert!(verify(&inst, "[[1,3]]").correct);
        assert!(verify(&inst, "move 1 to 3").correct);
        let long = "[[1,2],[2,3]]";
        assert_eq!(
            verify(&inst, long).failure,
            Some(Failure::NonMinimal {
                length: 2,
                optimal: 1
            })
        );
        assert!(
            verify_with(
                &inst,
                long,
                VerifyOptions {
                    require_minimal: false
                }
            )
            .correct
        );
        assert!(matches!(
            verify(&inst, "[[2,1]]").failure,
            Some(Failure::IllegalMove { .. })
        ));
        assert_eq!(
            verify(&inst, "[[1,2]]").failure,
            Some(Failure::GoalNotReached)
        );
        assert_eq!(verify(&inst, "  ").failure, Some(Failure::EmptyAnswer));
    }

    #[test]
    fn instance_json_shape() {
        let inst = TaskInstance::game24([4, 9, 10, 13]);
        let v = serde_json::to_value(&inst).unwrap();
        assert_eq!(v["kind"], "game24");
        assert_eq!(v["input"]["numbers"], json!([4, 9, 10, 13]));
        assert_eq!(v["target"]["value"], 24);
        let back: TaskInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn instances_round_trip_through_text() {
        for kind in TaskKind::ALL {
            for inst in generate_instances(kind, 5, 3).unwrap() {
                let line = serde_json::to_string(&inst).unwrap();
                let back: TaskInstance = serde_json::from_str(&line).unwrap();
                assert_eq!(back, inst, "{line}");
            }
        }
    }

    #[test]
    fn render_contexts() {
        let g = render_context(&TaskInstance::game24([4, 9, 10, 13]));
        for needle in ["4", "9", "10", "13", "24"] {
            assert!(g.contains(needle));
        }
        let s = render_context(&TaskInstance::six_fives(37));
        assert!(s.contains("exactly six"));
        assert!(s.contains("!!"));
        let init = TolState::new([vec![Red, Green, Blue], vec![], vec![]]).unwrap();
        let goal = TolState::new([vec![Red, Green], vec![], vec![Blue]]).unwrap();
        let t = render_context(&TaskInstance::tol(init.clone(), goal));
        assert!(t.contains(&init.diagram()));
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in TaskKind::ALL {
            let a = generate_instances(kind, 5, 11).unwrap();
            let b = generate_instances(kind, 5, 11).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(
            generate_instances(TaskKind::Tol, 0, 1),
            Err(GenerateError::ZeroCount)
        );
    }

    #[test]
    fn tol_generation_covers_lengths() {
        let insts = generate_instances(TaskKind::Tol, 8, 7).unwrap();
        let mut lengths: Vec<u32> = insts
            .iter()
            .map(|i| match &i.problem {
                Problem::Tol {
                    initial,
                    goal,
                    optimal_length,
                } => {
                    let bfs = tol::shortest_path(initial, goal).unwrap().len() as u32;
                    assert_eq!(bfs, *optimal_length);
                    bfs
                }
                _ => unreachable!(),
            })
            .collect();
        lengths.sort_unstable();
        assert_eq!(lengths, (1..=8).collect::<Vec<_>>());
    }
}
