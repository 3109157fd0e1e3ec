//! Exact-arithmetic expressions shared by Game24 and Six Fives.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | postfix
//! postfix := primary ('!' | '!!')*
//! primary := digits | '(' expr ')'
//! ```
//!
//! `!!` is lexed as a single token, so `5!!!` reads as `(5!!)!`. The symbols
//! `×`, `÷` and `−` are accepted as aliases of `*`, `/` and `-`.

use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational value. The denominator is always positive and coprime with the numerator.
pub type Rational = Ratio<i128>;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul)
    }
}

/// An integer literal exactly as written, e.g. `55` stays one literal with two digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal(String);

impl Literal {
    pub fn new(digits: impl Into<String>) -> Option<Self> {
        let digits = digits.into();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(Self(digits))
    }

    pub fn from_u64(value: u64) -> Self {
        Self(value.to_string())
    }

    pub fn digits(&self) -> &str {
        &self.0
    }

    /// Numeric value, or `None` when it does not fit in 64 bits.
    pub fn value(&self) -> Option<u64> {
        self.0.parse().ok()
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Literal(Literal),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Neg(Box<Expr>),
    Factorial(Box<Expr>),
    DoubleFactorial(Box<Expr>),
}

impl Expr {
    pub fn lit(value: u64) -> Self {
        Expr::Literal(Literal::from_u64(value))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn factorial(inner: Expr) -> Self {
        Expr::Factorial(Box::new(inner))
    }

    pub fn double_factorial(inner: Expr) -> Self {
        Expr::DoubleFactorial(Box::new(inner))
    }

    /// Literals in left-to-right order.
    pub fn literals(&self) -> Vec<&Literal> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals<'a>(&'a self, out: &mut Vec<&'a Literal>) {
        match self {
            Expr::Literal(lit) => out.push(lit),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_literals(out);
                rhs.collect_literals(out);
            }
            Expr::Neg(inner) | Expr::Factorial(inner) | Expr::DoubleFactorial(inner) => {
                inner.collect_literals(out)
            }
        }
    }

    /// True when the tree uses only literals and the four binary operators.
    pub fn is_binary_arithmetic(&self) -> bool {
        match self {
            Expr::Literal(_) => true,
            Expr::Binary { lhs, rhs, .. } => {
                lhs.is_binary_arithmetic() && rhs.is_binary_arithmetic()
            }
            _ => false,
        }
    }

    pub fn evaluate(&self, policy: &EvalPolicy) -> Result<Rational, EvalError> {
        evaluate(self, policy)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Factorial(_) | Expr::DoubleFactorial(_) => 4,
            Expr::Literal(_) => 5,
        }
    }
}

/// Canonical ASCII printer with the minimal parentheses needed to re-parse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(lit) => write!(f, "{lit}"),
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                write_wrapped(f, lhs, lhs.precedence() < p)?;
                write!(f, "{}", op.symbol())?;
                // Equal precedence on the right needs grouping: parsing is left-associative.
                write_wrapped(f, rhs, rhs.precedence() <= p)
            }
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_wrapped(f, inner, inner.precedence() < 3)
            }
            Expr::Factorial(inner) => {
                write_wrapped(f, inner, inner.precedence() < 5)?;
                f.write_str("!")
            }
            Expr::DoubleFactorial(inner) => {
                write_wrapped(f, inner, inner.precedence() < 5)?;
                f.write_str("!!")
            }
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SyntaxError {
    /// Character offset into the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Number(String),
    Plus,
    Minus,
    Star,
    Slash,
    Bang,
    DoubleBang,
    LParen,
    RParen,
}

fn describe(tok: &Token) -> String {
    match tok {
        Token::Number(d) => format!("number {d}"),
        Token::Plus => "'+'".into(),
        Token::Minus => "'-'".into(),
        Token::Star => "'*'".into(),
        Token::Slash => "'/'".into(),
        Token::Bang => "'!'".into(),
        Token::DoubleBang => "'!!'".into(),
        Token::LParen => "'('".into(),
        Token::RParen => "')'".into(),
    }
}

fn lex(text: &str) -> Result<(Vec<(Token, usize)>, usize), SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '0'..='9' => {
                let mut digits = String::new();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    digits.push(chars[i]);
                    i += 1;
                }
                tokens.push((Token::Number(digits), start));
                continue;
            }
            '+' => Token::Plus,
            '-' | '\u{2212}' => Token::Minus,
            '*' | '\u{00d7}' => Token::Star,
            '/' | '\u{00f7}' => Token::Slash,
            '(' => Token::LParen,
            ')' => Token::RParen,
            '!' => {
                if chars.get(i + 1) == Some(&'!') {
                    i += 2;
                    tokens.push((Token::DoubleBang, start));
                    continue;
                }
                Token::Bang
            }
            other => {
                return Err(SyntaxError {
                    offset: start,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        i += 1;
        tokens.push((tok, start));
    }
    Ok((tokens, chars.len()))
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn unexpected(&self) -> SyntaxError {
        match self.peek() {
            Some(tok) => self.error(format!("unexpected {}", describe(tok))),
            None => self.error("unexpected end of input"),
        }
    }

    fn descend(&mut self) -> Result<(), SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.descend()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            self.descend()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Some(Token::Bang) => e = Expr::factorial(e),
                Some(Token::DoubleBang) => e = Expr::double_factorial(e),
                _ => break,
            }
            self.pos += 1;
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().cloned() {
            Some(Token::Number(digits)) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal(digits)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(match self.peek() {
                        None => self.error("missing ')'"),
                        Some(_) => self.unexpected(),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.unexpected()),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    let (tokens, end) = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
        depth: 0,
    };
    let e = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.unexpected());
    }
    Ok(e)
}

/// Guards against factorial blowup and runaway intermediate values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPolicy {
    pub max_factorial_operand: u32,
    /// Bound on |numerator| and denominator of every intermediate value.
    pub max_magnitude: i128,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        Self {
            max_factorial_operand: 20,
            max_magnitude: 1_000_000_000_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivByZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
}

pub fn evaluate(e: &Expr, policy: &EvalPolicy) -> Result<Rational, EvalError> {
    let value = match e {
        Expr::Literal(lit) => {
            let v = lit
                .value()
                .ok_or_else(|| EvalError::Overflow(format!("literal {lit} is too large")))?;
            Rational::from_integer(v as i128)
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = evaluate(lhs, policy)?;
            let b = evaluate(rhs, policy)?;
            apply_binary(*op, &a, &b)?
        }
        Expr::Neg(inner) => -evaluate(inner, policy)?,
        Expr::Factorial(inner) => {
            let n = factorial_operand(&evaluate(inner, policy)?, policy, "!")?;
            Rational::from_integer(checked_product((1..=n).map(i128::from))?)
        }
        Expr::DoubleFactorial(inner) => {
            let n = factorial_operand(&evaluate(inner, policy)?, policy, "!!")?;
            Rational::from_integer(checked_product((1..=n).rev().step_by(2).map(i128::from))?)
        }
    };
    check_magnitude(value, policy)
}

pub(crate) fn apply_binary(op: BinOp, a: &Rational, b: &Rational) -> Result<Rational, EvalError> {
    let overflow = || EvalError::Overflow(format!("{a} {} {b}", op.symbol()));
    match op {
        BinOp::Add => a.checked_add(b).ok_or_else(overflow),
        BinOp::Sub => a.checked_sub(b).ok_or_else(overflow),
        BinOp::Mul => a.checked_mul(b).ok_or_else(overflow),
        BinOp::Div => {
            if b.is_zero() {
                return Err(EvalError::DivByZero);
            }
            a.checked_div(b).ok_or_else(overflow)
        }
    }
}

fn factorial_operand(v: &Rational, policy: &EvalPolicy, op: &str) -> Result<u32, EvalError> {
    if !v.is_integer() || v.is_negative() {
        return Err(EvalError::Domain(format!(
            "{op} requires a non-negative integer, got {v}"
        )));
    }
    match v.to_integer().to_u32() {
        Some(n) if n <= policy.max_factorial_operand => Ok(n),
        _ => Err(EvalError::Overflow(format!(
            "{op} operand {v} exceeds limit {}",
            policy.max_factorial_operand
        ))),
    }
}

fn checked_product(mut factors: impl Iterator<Item = i128>) -> Result<i128, EvalError> {
    factors.try_fold(1i128, |acc, f| {
        acc.checked_mul(f)
            .ok_or_else(|| EvalError::Overflow("factorial overflow".into()))
    })
}

pub(crate) fn check_magnitude(v: Rational, policy: &EvalPolicy) -> Result<Rational, EvalError> {
    let limit = policy.max_magnitude;
    if v.numer().unsigned_abs() > limit.unsigned_abs() || *v.denom() > limit {
        return Err(EvalError::Overflow(format!("{v} exceeds magnitude limit")));
    }
    Ok(v)
}

/// Parses and evaluates in one step; convenience for verifiers.
pub fn eval_str(text: &str, policy: &EvalPolicy) -> Result<Rational, String> {
    let e = parse_expression(text).map_err(|e| e.to_string())?;
    evaluate(&e, policy).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str) -> Result<Rational, EvalError> {
        evaluate(&parse_expression(text).unwrap(), &EvalPolicy::default())
    }

    #[test]
    fn parses_game24_example_tree() {
        let e = parse_expression("(13-9)*(10-4)").unwrap();
        let expected = Expr::binary(
            BinOp::Mul,
            Expr::binary(BinOp::Sub, Expr::lit(13), Expr::lit(9)),
            Expr::binary(BinOp::Sub, Expr::lit(10), Expr::lit(4)),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn double_bang_is_one_token() {
        assert_eq!(
            parse_expression("5!!").unwrap(),
            Expr::double_factorial(Expr::lit(5))
        );
        assert_eq!(
            parse_expression("5!!!").unwrap(),
            Expr::factorial(Expr::double_factorial(Expr::lit(5)))
        );
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse_expression("3+*4").unwrap_err();
        assert_eq!(err.offset, 2);
        assert!(parse_expression("").is_err());
        assert!(parse_expression("(1+2").is_err());
        assert!(parse_expression("1+2)").is_err());
        assert_eq!(parse_expression("1 + x").unwrap_err().offset, 4);
    }

    #[test]
    fn unicode_operators() {
        assert_eq!(
            eval("(13\u{2212}9)\u{00d7}(10\u{2212}4)").unwrap(),
            24.into()
        );
        assert_eq!(eval("12 \u{00f7} 3").unwrap(), 4.into());
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("2+3*4").unwrap(), 14.into());
        assert_eq!(eval("10-4-3").unwrap(), 3.into());
        assert_eq!(eval("-3!").unwrap(), (-6).into());
        assert_eq!(eval("3!*2").unwrap(), 12.into());
        assert_eq!(eval("8/4/2").unwrap(), 1.into());
        assert_eq!(eval("3*-4").unwrap(), (-12).into());
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(eval("(13-9)*(10-4)").unwrap(), 24.into());
        assert_eq!(eval("5!!").unwrap(), 15.into());
        assert_eq!(eval("0!!").unwrap(), 1.into());
        assert_eq!(eval("1!!").unwrap(), 1.into());
        assert_eq!(eval("0!").unwrap(), 1.into());
        assert_eq!(eval("5/(5-5)"), Err(EvalError::DivByZero));
        assert_eq!(eval("1/3+1/6").unwrap(), Rational::new(1, 2));
    }

    #[test]
    fn factorial_domain_and_policy() {
        assert!(matches!(eval("(1/2)!"), Err(EvalError::Domain(_))));
        assert!(matches!(eval("(0-3)!"), Err(EvalError::Domain(_))));
        let tight = EvalPolicy {
            max_factorial_operand: 9,
            ..EvalPolicy::default()
        };
        let e = parse_expression("(5+5)!").unwrap();
        assert!(matches!(evaluate(&e, &tight), Err(EvalError::Overflow(_))));
        assert_eq!(
            evaluate(&e, &EvalPolicy::default()).unwrap(),
            3_628_800.into()
        );
        assert!(matches!(eval("20!"), Err(EvalError::Overflow(_))));
        assert!(matches!(
            eval("99999999999999999999999"),
            Err(EvalError::Overflow(_))
        ));
    }

    #[test]
    fn literal_multisets() {
        let digits = |t: &str| -> Vec<String> {
            parse_expression(t)
                .unwrap()
                .literals()
                .iter()
                .map(|l| l.digits().to_string())
                .collect()
        };
        assert_eq!(digits("(13-9)*(10-4)"), ["13", "9", "10", "4"]);
        assert_eq!(digits("55+5"), ["55", "5"]);
        assert_eq!(digits("5+5+5+5+5+5"), ["5"; 6]);
    }

    #[test]
    fn printer_adds_needed_parens() {
        for text in [
            "(5!)!", "5!!!", "(5!!)!!", "-(3+4)", "(2+3)!", "8-(4-2)", "2*(3*4)", "(-3)!", "--5",
        ] {
            let e = parse_expression(text).unwrap();
            assert_eq!(
                parse_expression(&e.to_string()).unwrap(),
                e,
                "{text} printed as {e}"
            );
        }
        assert_eq!(
            parse_expression("((1+2))*3").unwrap().to_string(),
            "(1+2)*3"
        );
    }

    #[test]
    fn deep_nesting_is_rejected_not_crashing() {
        let text = format!("{}1{}", "(".repeat(10_000), ")".repeat(10_000));
        assert!(parse_expression(&text).is_err());
        let negs = format!("{}1", "-".repeat(10_000));
        assert!(parse_expression(&negs).is_err());
    }

    #[test]
    fn double_factorial_recurrence() {
        for n in 1..=19u64 {
            let df = eval(&format!("{n}!!")).unwrap();
            let prev = eval(&format!("{}!!", n - 1)).unwrap();
            let f = eval(&format!("{n}!")).unwrap();
            assert_eq!(df * prev, f, "n={n}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = (0u64..30).prop_map(Expr::lit);
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, i)| Expr::binary(
                    BinOp::ALL[i],
                    a,
                    b
                )),
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                inner.clone().prop_map(Expr::factorial),
                inner.prop_map(Expr::double_factorial),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            prop_assert_eq!(parse_expression(&e.to_string()).unwrap(), e);
        }

        #[test]
        fn division_is_exact(a in arb_expr(), b in arb_expr()) {
            let policy = EvalPolicy::default();
            if let (Ok(va), Ok(vb)) = (evaluate(&a, &policy), evaluate(&b, &policy)) {
                if !vb.is_zero() {
                    let q = Expr::binary(BinOp::Div, a.clone(), b.clone());
                    let back = Expr::binary(BinOp::Mul, q, b.clone());
                    if let Ok(v) = evaluate(&back, &policy) {
                        prop_assert_eq!(v, va);
                    }
                }
            }
        }
    }
}
