//! The three verifiable reasoning tasks used by the framework: Game24, Six Fives
//! and Tower of London, each with an exact verifier and an exhaustive oracle.

pub mod expr;
pub mod game24;
pub mod instance;
pub mod sixfives;
pub mod tol;

pub use expr::{evaluate, parse_expression, EvalError, EvalPolicy, Expr, Rational, SyntaxError};
pub use instance::{
    generate_instances, oracle_solve, render_context, verify, verify_with, Failure, GenerateError,
    OracleMeta, Problem, Solution, TaskInstance, TaskKind, Verdict, VerifyOptions,
};
pub use tol::{Bead, TolMove, TolState};
