//! Bounded dynamic search for Six Fives.
//!
//! Level `k` holds every exact value reachable with `k` fives: the concatenated atom
//! (5, 55, 555, ...), binary combinations of levels `i + j = k`, and the factorial
//! closure. Only the final level is searched against a specific target, by solving
//! for the missing operand instead of enumerating all pairs.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_traits::{Signed, ToPrimitive, Zero};

use crate::expr::{apply_binary, check_magnitude, BinOp, EvalPolicy, Expr, Literal, Rational};

pub const FIVES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchCaps {
    pub max_factorial_operand: u32,
    pub max_values_per_level: usize,
    pub max_magnitude: i128,
}

impl Default for SearchCaps {
    fn default() -> Self {
        Self {
            max_factorial_operand: 12,
            max_values_per_level: 200_000,
            max_magnitude: EvalPolicy::default().max_magnitude,
        }
    }
}

impl SearchCaps {
    fn policy(&self) -> EvalPolicy {
        EvalPolicy {
            max_factorial_operand: self.max_factorial_operand,
            max_magnitude: self.max_magnitude,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Derivation {
    Atom,
    Factorial(usize),
    DoubleFactorial(usize),
    Binary {
        op: BinOp,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
}

#[derive(Debug, Default)]
struct Level {
    values: Vec<(Rational, Derivation)>,
    index: HashMap<Rational, usize>,
}

impl Level {
    fn insert(&mut self, v: Rational, how: Derivation, cap: usize) -> bool {
        if self.values.len() >= cap || self.index.contains_key(&v) {
            return false;
        }
        self.index.insert(v, self.values.len());
        self.values.push((v, how));
        true
    }
}

fn factorial_of(n: u32, double: bool) -> i128 {
    if double {
        (1..=n as i128).rev().step_by(2).product()
    } else {
        (1..=n as i128).product()
    }
}

fn small_operand(v: &Rational, caps: &SearchCaps) -> Option<u32> {
    if !v.is_integer() || v.is_negative() {
        return None;
    }
    v.to_integer()
        .to_u32()
        .filter(|n| *n <= caps.max_factorial_operand)
}

pub struct SixFivesOracle {
    caps: SearchCaps,
    /// `levels[k - 1]` holds values reachable with exactly `k` fives, for k < 6.
    levels: Vec<Level>,
}

impl SixFivesOracle {
    pub fn new(caps: SearchCaps) -> Self {
        let mut oracle = Self {
            caps,
            levels: Vec::new(),
        };
        for k in 1..FIVES {
            let level = oracle.build_level(k);
            oracle.levels.push(level);
        }
        oracle
    }

    /// Shared instance with default caps.
    pub fn shared() -> &'static SixFivesOracle {
        static ORACLE: OnceLock<SixFivesOracle> = OnceLock::new();
        ORACLE.get_or_init(|| SixFivesOracle::new(SearchCaps::default()))
    }

    pub fn caps(&self) -> &SearchCaps {
        &self.caps
    }

    pub fn level_size(&self, k: usize) -> usize {
        self.levels[k - 1].values.len()
    }

    fn build_level(&self, k: usize) -> Level {
        let cap = self.caps.max_values_per_level;
        let policy = self.caps.policy();
        let mut level = Level::default();
        let atom = Rational::from_integer(repunit_fives(k));
        level.insert(atom, Derivation::Atom, cap);
        for i in 1..k {
            let (left, right) = (&self.levels[i - 1], &self.levels[k - i - 1]);
            for (ai, (a, _)) in left.values.iter().enumerate() {
                for (bi, (b, _)) in right.values.iter().enumerate() {
                    for op in BinOp::ALL {
                        let Ok(v) = apply_binary(op, a, b) else {
                            continue;
                        };
                        if check_magnitude(v, &policy).is_err() {
                            continue;
                        }
                        level.insert(
                            v,
                            Derivation::Binary {
                                op,
                                lhs: (i, ai),
                                rhs: (k - i, bi),
                            },
                            cap,
                        );
                    }
                }
            }
        }
        // Factorial closure: applying ! or !! to small non-negative integers until nothing new appears.
        let mut cursor = 0;
        while cursor < level.values.len() {
            let v = level.values[cursor].0;
            if let Some(n) = small_operand(&v, &self.caps) {
                for double in [false, true] {
                    let f = Rational::from_integer(factorial_of(n, double));
                    if check_magnitude(f, &policy).is_ok() {
                        let how = if double {
                            Derivation::DoubleFactorial(cursor)
                        } else {
                            Derivation::Factorial(cursor)
                        };
                        level.insert(f, how, cap);
                    }
                }
            }
            cursor += 1;
        }
        level
    }

    fn rebuild(&self, k: usize, idx: usize) -> Expr {
        let (_, how) = self.levels[k - 1].values[idx];
        match how {
            Derivation::Atom => Expr::Literal(Literal::new("5".repeat(k)).expect("digits")),
            Derivation::Factorial(inner) => Expr::factorial(self.rebuild(k, inner)),
            Derivation::DoubleFactorial(inner) => Expr::double_factorial(self.rebuild(k, inner)),
            Derivation::Binary { op, lhs, rhs } => {
                Expr::binary(op, self.rebuild(lhs.0, lhs.1), self.rebuild(rhs.0, rhs.1))
            }
        }
    }

    /// An expression with exactly six fives evaluating to `target`, if the search finds one.
    pub fn solve(&self, target: i64) -> Option<Expr> {
        let target = Rational::from_integer(target.into());
        self.solve_exact(&target).or_else(|| {
            // Top-level factorial: n! = target or n!! = target for some small n.
            (0..=self.caps.max_factorial_operand).find_map(|n| {
                let n_q = Rational::from_integer(n.into());
                [false, true].into_iter().find_map(|double| {
                    if Rational::from_integer(factorial_of(n, double)) != target {
                        return None;
                    }
                    let inner = self.solve_exact(&n_q)?;
                    Some(if double {
                        Expr::double_factorial(inner)
                    } else {
                        Expr::factorial(inner)
                    })
                })
            })
        })
    }

    fn solve_exact(&self, target: &Rational) -> Option<Expr> {
        if *target == Rational::from_integer(repunit_fives(FIVES)) {
            return Some(Expr::Literal(
                Literal::new("5".repeat(FIVES)).expect("digits"),
            ));
        }
        for i in 1..FIVES {
            let j = FIVES - i;
            let right = &self.levels[j - 1];
            for (ai, (a, _)) in self.levels[i - 1].values.iter().enumerate() {
                for op in BinOp::ALL {
                    let needed = match op {
                        BinOp::Add => target - a,
                        BinOp::Sub => a - target,
                        BinOp::Mul if a.is_zero() => continue,
                        BinOp::Mul => target / a,
                        BinOp::Div if target.is_zero() => continue,
                        BinOp::Div => a / target,
                    };
                    if let Some(&bi) = right.index.get(&needed) {
                        return Some(Expr::binary(op, self.rebuild(i, ai), self.rebuild(j, bi)));
                    }
                }
            }
        }
        None
    }
}

fn repunit_fives(k: usize) -> i128 {
    (0..k).fold(0i128, |acc, _| acc * 10 + 5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate;

    fn digit_fives(e: &Expr) -> usize {
        e.literals().iter().map(|l| l.digits().len()).sum()
    }

    #[test]
    fn small_levels() {
        let o = SixFivesOracle::new(SearchCaps {
            max_values_per_level: 5_000,
            ..SearchCaps::default()
        });
        // 5, 5! = 120, 5!! = 15
        assert_eq!(o.level_size(1), 3);
        assert!(o.level_size(2) > 10);
    }

    #[test]
    fn finds_all_addition_form_for_thirty() {
        let o = SixFivesOracle::shared();
        let sol = o.solve(30).expect("30 is reachable");
        assert_eq!(digit_fives(&sol), 6);
        assert_eq!(
            evaluate(&sol, &EvalPolicy::default()).unwrap(),
            Rational::from(30)
        );
    }

    #[test]
    fn solutions_use_six_fives() {
        let o = SixFivesOracle::shared();
        for t in [1, 7, 24, 55, 100] {
            if let Some(sol) = o.solve(t) {
                assert_eq!(digit_fives(&sol), 6, "{t}: {sol}");
                assert_eq!(
                    evaluate(&sol, &EvalPolicy::default()).unwrap(),
                    Rational::from(t as i128)
                );
            }
        }
    }
}
