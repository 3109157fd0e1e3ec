//! Tower of London: three pegs with capacities (3, 2, 1) holding beads r, g and b.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CAPACITIES: [usize; 3] = [3, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bead {
    #[serde(rename = "r")]
    Red,
    #[serde(rename = "g")]
    Green,
    #[serde(rename = "b")]
    Blue,
}

impl Bead {
    pub const ALL: [Bead; 3] = [Bead::Red, Bead::Green, Bead::Blue];

    pub fn letter(self) -> char {
        match self {
            Bead::Red => 'r',
            Bead::Green => 'g',
            Bead::Blue => 'b',
        }
    }
}

/// Peg contents listed bottom to top.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[Vec<Bead>; 3]", into = "[Vec<Bead>; 3]")]
pub struct TolState {
    pegs: [Vec<Bead>; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("bead {0:?} must appear exactly once")]
    BeadCount(Bead),
    #[error("peg {peg} holds {len} beads but its capacity is {capacity}")]
    OverCapacity {
        peg: usize,
        len: usize,
        capacity: usize,
    },
}

impl TolState {
    pub fn new(pegs: [Vec<Bead>; 3]) -> Result<Self, StateError> {
        for (i, peg) in pegs.iter().enumerate() {
            if peg.len() > CAPACITIES[i] {
                return Err(StateError::OverCapacity {
                    peg: i + 1,
                    len: peg.len(),
                    capacity: CAPACITIES[i],
                });
            }
        }
        for bead in Bead::ALL {
            let count = pegs.iter().flatten().filter(|b| **b == bead).count();
            if count != 1 {
                return Err(StateError::BeadCount(bead));
            }
        }
        Ok(Self { pegs })
    }

    pub fn pegs(&self) -> &[Vec<Bead>; 3] {
        &self.pegs
    }

    /// Multi-line drawing, top row first, pegs left to right.
    pub fn diagram(&self) -> String {
        let mut rows = Vec::new();
        for level in (0..CAPACITIES[0]).rev() {
            let cells: Vec<String> = (0..3)
                .map(|p| {
                    if level >= CAPACITIES[p] {
                        "   ".to_string()
                    } else {
                        match self.pegs[p].get(level) {
                            Some(b) => format!("[{}]", b.letter()),
                            None => "[ ]".to_string(),
                        }
                    }
                })
                .collect();
            rows.push(cells.join(" ").trim_end().to_string());
        }
        rows.push(" 1   2   3".to_string());
        rows.join("\n")
    }
}

impl TryFrom<[Vec<Bead>; 3]> for TolState {
    type Error = StateError;

    fn try_from(pegs: [Vec<Bead>; 3]) -> Result<Self, Self::Error> {
        TolState::new(pegs)
    }
}

impl From<TolState> for [Vec<Bead>; 3] {
    fn from(s: TolState) -> Self {
        s.pegs
    }
}

impl fmt::Display for TolState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pegs: Vec<String> = self
            .pegs
            .iter()
            .map(|p| p.iter().map(|b| b.letter()).collect())
            .collect();
        write!(f, "[{}]", pegs.join("|"))
    }
}

/// Move the top bead of peg `from` onto peg `to`; pegs are numbered 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u8; 2]", into = "[u8; 2]")]
pub struct TolMove {
    pub from: u8,
    pub to: u8,
}

impl From<[u8; 2]> for TolMove {
    fn from([from, to]: [u8; 2]) -> Self {
        TolMove { from, to }
    }
}

impl From<TolMove> for [u8; 2] {
    fn from(m: TolMove) -> Self {
        [m.from, m.to]
    }
}

impl fmt::Display for TolMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "move {} to {}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IllegalMove {
    #[error("peg index out of range or source equals destination")]
    BadPeg,
    #[error("source peg is empty")]
    EmptySource,
    #[error("destination peg is at capacity")]
    CapacityExceeded,
}

pub fn apply_move(s: &TolState, m: TolMove) -> Result<TolState, IllegalMove> {
    if !(1..=3).contains(&m.from) || !(1..=3).contains(&m.to) || m.from == m.to {
        return Err(IllegalMove::BadPeg);
    }
    let (from, to) = (usize::from(m.from - 1), usize::from(m.to - 1));
    if s.pegs[from].is_empty() {
        return Err(IllegalMove::EmptySource);
    }
    if s.pegs[to].len() >= CAPACITIES[to] {
        return Err(IllegalMove::CapacityExceeded);
    }
    let mut next = s.clone();
    let bead = next.pegs[from].pop().expect("checked non-empty");
    next.pegs[to].push(bead);
    Ok(next)
}

pub fn all_moves() -> impl Iterator<Item = TolMove> {
    (1..=3u8).flat_map(|from| {
        (1..=3u8)
            .filter(move |to| *to != from)
            .map(move |to| TolMove { from, to })
    })
}

/// Every legal placement of the three beads, in sorted order.
pub fn enumerate_states() -> Vec<TolState> {
    let mut out = BTreeSet::new();
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for a in 0..=CAPACITIES[0] {
        for b in 0..=CAPACITIES[1] {
            let c = 3 - a as isize - b as isize;
            if c < 0 || c as usize > CAPACITIES[2] {
                continue;
            }
            for perm in perms {
                let beads: Vec<Bead> = perm.iter().map(|i| Bead::ALL[*i]).collect();
                let pegs = [
                    beads[..a].to_vec(),
                    beads[a..a + b].to_vec(),
                    beads[a + b..].to_vec(),
                ];
                out.insert(TolState::new(pegs).expect("enumerated placements are legal"));
            }
        }
    }
    out.into_iter().collect()
}

/// Breadth-first distances from `start` to every reachable state.
pub fn distances_from(start: &TolState) -> HashMap<TolState, usize> {
    let mut dist = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        for m in all_moves() {
            if let Ok(next) = apply_move(&s, m) {
                if !dist.contains_key(&next) {
                    dist.insert(next.clone(), d + 1);
                    queue.push_back(next);
                }
            }
        }
    }
    dist
}

/// A shortest move sequence from `start` to `goal`, or `None` if unreachable.
pub fn shortest_path(start: &TolState, goal: &TolState) -> Option<Vec<TolMove>> {
    let mut parent: HashMap<TolState, Option<(TolState, TolMove)>> =
        HashMap::from([(start.clone(), None)]);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(s) = queue.pop_front() {
        if &s == goal {
            let mut moves = Vec::new();
            let mut cur = s;
            while let Some(Some((prev, m))) = parent.get(&cur).cloned() {
                moves.push(m);
                cur = prev;
            }
            moves.reverse();
            return Some(moves);
        }
        for m in all_moves() {
            if let Ok(next) = apply_move(&s, m) {
                if !parent.contains_key(&next) {
                    parent.insert(next.clone(), Some((s.clone(), m)));
                    queue.push_back(next);
                }
            }
        }
    }
    None
}

/// Parses a move list: either a JSON list of `[from, to]` pairs or lines like `move 1 to 3`.
pub fn parse_moves(text: &str) -> Result<Vec<TolMove>, String> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        if let Ok(pairs) = serde_json::from_str::<Vec<[u8; 2]>>(trimmed) {
            return Ok(pairs.into_iter().map(TolMove::from).collect());
        }
    }
    let mut moves = Vec::new();
    for line in trimmed.lines() {
        let lower = line.to_ascii_lowercase();
        let Some(idx) = lower.find("move") else {
            continue;
        };
        let nums: Vec<u8> = lower[idx + 4..]
            .split(|c: char| !c.is_ascii_digit())
            .filter(|t| !t.is_empty())
            .filter_map(|t| t.parse().ok())
            .collect();
        match nums.as_slice() {
            [from, to, ..] if lower[idx..].contains(" to ") || lower[idx..].contains("->") => moves
                .push(TolMove {
                    from: *from,
                    to: *to,
                }),
            _ => return Err(format!("could not read move from line {line:?}")),
        }
    }
    if moves.is_empty() {
        return Err("no moves found".into());
    }
    Ok(moves)
}

pub fn moves_to_json(moves: &[TolMove]) -> String {
    serde_json::to_string(moves).expect("moves serialize")
}
