//! Small symbolic formulas over three action-value features, the reduced
//! formula spaces `F_n`, and the UCB1 bandit used to pick one of them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::solver::argmax;

/// Value returned by a formula outside its domain. Propagates through every
/// operator so the affected action is never preferred.
pub const PENALTY: f64 = f64::MIN;

pub const MIN_SPACE: usize = 2;
pub const MAX_SPACE: usize = 6;

const VAR_NAMES: [&str; 3] = ["Q0", "Q1", "Q2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Abs,
    Neg,
    Ln,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Abs, UnaryOp::Neg, UnaryOp::Ln, UnaryOp::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Abs => "abs",
            UnaryOp::Neg => "neg",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Abs => a.abs(),
            UnaryOp::Neg => -a,
            UnaryOp::Ln if a > 0.0 => a.ln(),
            UnaryOp::Sqrt if a >= 0.0 => a.sqrt(),
            _ => PENALTY,
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Min,
        BinaryOp::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div if b != 0.0 => a / b,
            BinaryOp::Div => PENALTY,
            BinaryOp::Min => a.min(b),
            BinaryOp::Max => a.max(b),
        }
    }
}

/// Expression tree over the features `Q0`, `Q1`, `Q2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Var(u8),
    Unary(UnaryOp, Box<Formula>),
    Binary(BinaryOp, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(i: u8) -> Formula {
        assert!(i < 3, "feature index {i} out of range");
        Formula::Var(i)
    }

    pub fn unary(op: UnaryOp, a: Formula) -> Formula {
        Formula::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Formula, b: Formula) -> Formula {
        Formula::Binary(op, Box::new(a), Box::new(b))
    }

    /// Number of variables plus operators.
    pub fn tokens(&self) -> usize {
        match self {
            Formula::Var(_) => 1,
            Formula::Unary(_, a) => 1 + a.tokens(),
            Formula::Binary(_, a, b) => 1 + a.tokens() + b.tokens(),
        }
    }

    /// Evaluates the tree. Never panics; out-of-domain or non-finite
    /// intermediate results yield [`PENALTY`].
    pub fn evaluate(&self, q: [f64; 3]) -> f64 {
        let v = match self {
            Formula::Var(i) => q[*i as usize],
            Formula::Unary(op, a) => {
                let a = a.evaluate(q);
                if a == PENALTY {
                    return PENALTY;
                }
                op.apply(a)
            }
            Formula::Binary(op, a, b) => {
                let a = a.evaluate(q);
                if a == PENALTY {
                    return PENALTY;
                }
                let b = b.evaluate(q);
                if b == PENALTY {
                    return PENALTY;
                }
                op.apply(a, b)
            }
        };
        if v.is_finite() {
            v
        } else {
            PENALTY
        }
    }

    /// Which of the three features the formula reads.
    pub fn uses(&self) -> [bool; 3] {
        let mut used = [false; 3];
        self.mark_used(&mut used);
        used
    }

    fn mark_used(&self, used: &mut [bool; 3]) {
        match self {
            Formula::Var(i) => used[*i as usize] = true,
            Formula::Unary(_, a) => a.mark_used(used),
            Formula::Binary(_, a, b) => {
                a.mark_used(used);
                b.mark_used(used);
            }
        }
    }

    /// `argmax_u f(q0[u], q1[u], q2[u])`, lowest index on ties.
    pub fn select(&self, q0: &[f64], q1: &[f64], q2: &[f64]) -> usize {
        let scores: Vec<f64> = (0..q0.len())
            .map(|u| self.evaluate([q0[u], q1[u], q2[u]]))
            .collect();
        argmax(&scores)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Var(i) => f.write_str(VAR_NAMES[*i as usize]),
            Formula::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Formula::Binary(op, a, b) => write!(f, "{}({a}, {b})", op.name()),
        }
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Formula> {
        let mut p = Parser { src: s, pos: 0 };
        let f = p.formula()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.error("trailing input"));
        }
        Ok(f)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::param(format!(
            "cannot parse formula {:?}: {what} at offset {}",
            self.src, self.pos
        ))
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(rest.len());
        let word = &rest[..len];
        if word.is_empty() {
            return Err(self.error("expected a feature or operator"));
        }
        self.pos += len;
        if let Some(i) = VAR_NAMES.iter().position(|&v| v == word) {
            return Ok(Formula::Var(i as u8));
        }
        if let Some(op) = UnaryOp::ALL.into_iter().find(|op| op.name() == word) {
            self.expect('(')?;
            let a = self.formula()?;
            self.expect(')')?;
            return Ok(Formula::unary(op, a));
        }
        if let Some(op) = BinaryOp::ALL.into_iter().find(|op| op.name() == word) {
            self.expect('(')?;
            let a = self.formula()?;
            self.expect(',')?;
            let b = self.formula()?;
            self.expect(')')?;
            return Ok(Formula::binary(op, a, b));
        }
        self.pos -= len;
        Err(self.error(&format!("unknown symbol {word:?}")))
    }
}

/// A reduced formula set `F_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpace {
    pub max_tokens: usize,
    pub formulas: Vec<Formula>,
}

impl StrategySpace {
    pub fn id(&self) -> String {
        format!("F{}", self.max_tokens)
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }
}

/// Cardinalities reported for `F_2` .. `F_6` by the original grammar.
pub const REFERENCE_CARDINALITIES: [(usize, usize); 5] =
    [(2, 12), (3, 43), (4, 226), (5, 1210), (6, 7407)];

/// Number of probe triples used to decide formula equivalence.
pub const PROBE_COUNT: usize = 256;

/// Relative tolerance of the equivalence test.
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// The fixed probe triples: a few hand-picked corner cases, then draws
/// mixing signs, zeros and magnitudes from 1e-2 to 1e2.
pub fn probe_points() -> Vec<[f64; 3]> {
    let mut probes = vec![
        [0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0],
        [-1.0, 0.0, 1.0],
        [2.0, -3.0, 0.5],
        [0.0, 4.0, -2.0],
        [1.5, 1.5, -0.25],
    ];
    let mut rng = seeded(0x5eed_f0f0);
    while probes.len() < PROBE_COUNT {
        let mut triple = [0.0; 3];
        for v in triple.iter_mut() {
            *v = if rng.random_bool(0.08) {
                0.0
            } else {
                let magnitude = 10f64.powf(rng.random_range(-2.0..2.0));
                if rng.random_bool(0.3) {
                    -magnitude
                } else {
                    magnitude
                }
            };
        }
        probes.push(triple);
    }
    probes
}

fn equivalent(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| {
        if x == PENALTY || y == PENALTY {
            x == y
        } else {
            (x - y).abs() <= PROBE_TOLERANCE * 1f64.max(x.abs()).max(y.abs())
        }
    })
}

fn squash(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

const BUCKET_WIDTH: f64 = 1e-6;

/// Every tree with at most `max_tokens` tokens, grouped by token count and
/// sorted by serialization within a group.
pub fn enumerate_all(max_tokens: usize) -> Vec<Formula> {
    let mut by_size: Vec<Vec<Formula>> = vec![Vec::new(); max_tokens + 1];
    if max_tokens == 0 {
        return Vec::new();
    }
    by_size[1] = (0..3).map(Formula::Var).collect();
    for size in 2..=max_tokens {
        let mut level = Vec::new();
        for child in &by_size[size - 1] {
            for op in UnaryOp::ALL {
                level.push(Formula::unary(op, child.clone()));
            }
        }
        for left_size in 1..size - 1 {
            let right_size = size - 1 - left_size;
            for a in &by_size[left_size] {
                for b in &by_size[right_size] {
                    for op in BinaryOp::ALL {
                        level.push(Formula::binary(op, a.clone(), b.clone()));
                    }
                }
            }
        }
        let mut keyed: Vec<(String, Formula)> =
            level.into_iter().map(|f| (f.to_string(), f)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        by_size[size] = keyed.into_iter().map(|(_, f)| f).collect();
    }
    by_size.into_iter().flatten().collect()
}

/// `F_n` for `n` in `1..=6`: all trees with at most `n` tokens, keeping the
/// first formula of every evaluation-equivalence class.
pub fn enumerate_space(max_tokens: usize) -> Result<StrategySpace> {
    if !(1..=MAX_SPACE).contains(&max_tokens) {
        return Err(Error::param(format!(
            "formula spaces are defined for 1..={MAX_SPACE} tokens, got {max_tokens}"
        )));
    }
    let probes = probe_points();
    let mut kept: Vec<Formula> = Vec::new();
    let mut signatures: Vec<Vec<f64>> = Vec::new();
    let mut buckets: HashMap<(Vec<u64>, i64), Vec<usize>> = HashMap::new();
    for f in enumerate_all(max_tokens) {
        let sig: Vec<f64> = probes.iter().map(|&p| f.evaluate(p)).collect();
        let mut mask = vec![0u64; PROBE_COUNT.div_ceil(64)];
        for (i, &v) in sig.iter().enumerate() {
            if v == PENALTY {
                mask[i / 64] |= 1 << (i % 64);
            }
        }
        let first = sig.iter().copied().find(|&v| v != PENALTY).unwrap_or(0.0);
        let slot = (squash(first) / BUCKET_WIDTH).floor() as i64;
        let duplicate = (slot - 1..=slot + 1).any(|s| {
            buckets
                .get(&(mask.clone(), s))
                .is_some_and(|ids| ids.iter().any(|&k| equivalent(&signatures[k], &sig)))
        });
        if !duplicate {
            buckets.entry((mask, slot)).or_default().push(kept.len());
            kept.push(f);
            signatures.push(sig);
        }
    }
    Ok(StrategySpace {
        max_tokens,
        formulas: kept,
    })
}

/// UCB1 bookkeeping over `k` arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Ucb1 {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Ucb1 {
    pub fn new(arms: usize) -> Self {
        Ucb1 {
            sums: vec![0.0; arms],
            counts: vec![0; arms],
        }
    }

    pub fn from_stats(means: &[f64], counts: &[u64]) -> Self {
        Ucb1 {
            sums: means
                .iter()
                .zip(counts)
                .map(|(m, &c)| m * c as f64)
                .collect(),
            counts: counts.to_vec(),
        }
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_pulls(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.sums[arm] / self.counts[arm] as f64
    }

    /// `mean + sqrt(2 ln b / pulls)`; unpulled arms are infinite.
    pub fn index(&self, arm: usize, b: u64) -> f64 {
        if self.counts[arm] == 0 {
            return f64::INFINITY;
        }
        self.mean(arm) + (2.0 * (b as f64).ln() / self.counts[arm] as f64).sqrt()
    }

    /// Arm to pull at round `b` (1-based), lowest index on ties.
    pub fn choose(&self, b: u64) -> usize {
        let idx: Vec<f64> = (0..self.arms()).map(|a| self.index(a, b)).collect();
        argmax(&idx)
    }

    pub fn record(&mut self, arm: usize, reward: f64) {
        self.sums[arm] += reward;
        self.counts[arm] += 1;
    }

    /// Most pulled arm, lowest index on ties.
    pub fn most_drawn(&self) -> usize {
        let mut best = 0;
        for (a, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = a;
            }
        }
        best
    }
}

/// Runs UCB1 for exactly `budget` pulls: every arm once, then the index
/// rule. Returns the final statistics; the selection is
/// [`Ucb1::most_drawn`].
pub fn run_ucb1<F>(arms: usize, budget: u64, mut pull: F) -> Result<Ucb1>
where
    F: FnMut(usize) -> Result<f64>,
{
    if arms == 0 || budget < arms as u64 {
        return Err(Error::Budget { budget, arms });
    }
    let mut bandit = Ucb1::new(arms);
    for arm in 0..arms {
        let r = pull(arm)?;
        bandit.record(arm, r);
    }
    for b in arms as u64 + 1..=budget {
        let arm = bandit.choose(b);
        let r = pull(arm)?;
        bandit.record(arm, r);
    }
    Ok(bandit)
}
