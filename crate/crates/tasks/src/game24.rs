//! Exhaustive Game24 search over every binary tree shape, ordering and operator assignment.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};

use crate::expr::{BinOp, Expr};

pub const TARGET: i64 = 24;
pub const MIN_NUMBER: u32 = 1;
pub const MAX_NUMBER: u32 = 13;

type Q = Ratio<i64>;

fn combine(op: BinOp, a: Q, b: Q) -> Option<Q> {
    match op {
        BinOp::Add => a.checked_add(&b),
        BinOp::Sub => a.checked_sub(&b),
        BinOp::Mul => a.checked_mul(&b),
        BinOp::Div if b.is_zero() => None,
        BinOp::Div => a.checked_div(&b),
    }
}

/// The five full binary trees over four ordered leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    /// ((a x b) y c) z d
    LeftComb,
    /// (a x (b y c)) z d
    LeftInner,
    /// (a x b) y (c z d)
    Balanced,
    /// a x ((b y c) z d)
    RightInner,
    /// a x (b y (c z d))
    RightComb,
}

const SHAPES: [Shape; 5] = [
    Shape::LeftComb,
    Shape::LeftInner,
    Shape::Balanced,
    Shape::RightInner,
    Shape::RightComb,
];

fn eval_shape(shape: Shape, n: [Q; 4], ops: [BinOp; 3]) -> Option<Q> {
    let [a, b, c, d] = n;
    let [x, y, z] = ops;
    match shape {
        Shape::LeftComb => combine(z, combine(y, combine(x, a, b)?, c)?, d),
        Shape::LeftInner => combine(z, combine(x, a, combine(y, b, c)?)?, d),
        Shape::Balanced => combine(y, combine(x, a, b)?, combine(z, c, d)?),
        Shape::RightInner => combine(x, a, combine(z, combine(y, b, c)?, d)?),
        Shape::RightComb => combine(x, a, combine(y, b, combine(z, c, d)?)?),
    }
}

fn build_shape(shape: Shape, n: [u32; 4], ops: [BinOp; 3]) -> Expr {
    let [a, b, c, d] = n.map(|v| Expr::lit(v.into()));
    let [x, y, z] = ops;
    match shape {
        Shape::LeftComb => Expr::binary(z, Expr::binary(y, Expr::binary(x, a, b), c), d),
        Shape::LeftInner => Expr::binary(z, Expr::binary(x, a, Expr::binary(y, b, c)), d),
        Shape::Balanced => Expr::binary(y, Expr::binary(x, a, b), Expr::binary(z, c, d)),
        Shape::RightInner => Expr::binary(x, a, Expr::binary(z, Expr::binary(y, b, c), d)),
        Shape::RightComb => Expr::binary(x, a, Expr::binary(y, b, Expr::binary(z, c, d))),
    }
}

fn distinct_orderings(numbers: [u32; 4]) -> Vec<[u32; 4]> {
    let mut out = BTreeSet::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let idx = [i, j, k, l];
                    let distinct = (0..4).all(|p| (p + 1..4).all(|q| idx[p] != idx[q]));
                    if distinct {
                        out.insert(idx.map(|p| numbers[p]));
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

fn operator_triples() -> impl Iterator<Item = [BinOp; 3]> {
    BinOp::ALL.into_iter().flat_map(|x| {
        BinOp::ALL
            .into_iter()
            .flat_map(move |y| BinOp::ALL.into_iter().map(move |z| [x, y, z]))
    })
}

/// Every expression tree over the four numbers that evaluates to exactly 24, in search order.
pub fn all_solutions(numbers: [u32; 4]) -> Vec<Expr> {
    let target = Q::from_integer(TARGET);
    let mut out = Vec::new();
    for order in distinct_orderings(numbers) {
        let values = order.map(|v| Q::from_integer(v.into()));
        for shape in SHAPES {
            for ops in operator_triples() {
                if eval_shape(shape, values, ops) == Some(target) {
                    out.push(build_shape(shape, order, ops));
                }
            }
        }
    }
    out
}

/// First solving expression in search order, or `None` when the numbers cannot make 24.
pub fn solve(numbers: [u32; 4]) -> Option<Expr> {
    let target = Q::from_integer(TARGET);
    for order in distinct_orderings(numbers) {
        let values = order.map(|v| Q::from_integer(v.into()));
        for shape in SHAPES {
            for ops in operator_triples() {
                if eval_shape(shape, values, ops) == Some(target) {
                    return Some(build_shape(shape, order, ops));
                }
            }
        }
    }
    None
}

/// Fully parenthesized form with operands of `+` and `*` sorted, so commuted variants coincide.
pub fn commutative_key(e: &Expr) -> String {
    match e {
        Expr::Binary { op, lhs, rhs } => {
            let (mut l, mut r) = (commutative_key(lhs), commutative_key(rhs));
            if op.is_commutative() && l > r {
                std::mem::swap(&mut l, &mut r);
            }
            format!("({l}{}{r})", op.symbol())
        }
        other => other.to_string(),
    }
}

/// Number of solving expressions that remain distinct up to commutativity.
pub fn difficulty_score(numbers: [u32; 4]) -> usize {
    all_solutions(numbers)
        .iter()
        .map(commutative_key)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Difficulty score of every sorted 4-multiset over [1, 13], computed once.
pub fn score_table() -> &'static [([u32; 4], usize)] {
    static TABLE: OnceLock<Vec<([u32; 4], usize)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::new();
        for a in MIN_NUMBER..=MAX_NUMBER {
            for b in a..=MAX_NUMBER {
                for c in b..=MAX_NUMBER {
                    for d in c..=MAX_NUMBER {
                        let key = [a, b, c, d];
                        out.push((key, difficulty_score(key)));
                    }
                }
            }
        }
        out
    })
}

pub fn lookup_score(numbers: [u32; 4]) -> usize {
    let mut key = numbers;
    key.sort_unstable();
    let table = score_table();
    let idx = table
        .binary_search_by(|(k, _)| k.cmp(&key))
        .expect("numbers must lie in [1, 13]");
    table[idx].1
}
