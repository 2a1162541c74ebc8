//! Propositional assumption formulas and their compilation into confidence
//! composition expressions.
//!
//! Grammar (whitespace-insensitive, precedence high to low):
//!
//! ```text
//! implies := or ( "->" implies )?
//! or      := and ( "|" and )*
//! and     := unary ( "&" unary )*
//! unary   := "!" unary | atom
//! atom    := "A" digits | "(" implies ")"
//! ```
//!
//! Variables are written `A1 .. An` and map to zero-based indices.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Confidence;
use crate::error::{Error, Result};

pub const DEFAULT_VARIABLE_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropFormula {
    Var(usize),
    Not(Box<PropFormula>),
    And(Box<PropFormula>, Box<PropFormula>),
    Or(Box<PropFormula>, Box<PropFormula>),
    Implies(Box<PropFormula>, Box<PropFormula>),
}

impl PropFormula {
    pub fn var(i: usize) -> Self {
        PropFormula::Var(i)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: PropFormula) -> Self {
        PropFormula::Not(Box::new(f))
    }

    pub fn and(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        match self {
            PropFormula::Var(i) => assignment[*i],
            PropFormula::Not(f) => !f.eval(assignment),
            PropFormula::And(a, b) => a.eval(assignment) && b.eval(assignment),
            PropFormula::Or(a, b) => a.eval(assignment) || b.eval(assignment),
            PropFormula::Implies(a, b) => !a.eval(assignment) || b.eval(assignment),
        }
    }

    /// Sorted distinct variable indices.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            PropFormula::Var(i) => out.push(*i),
            PropFormula::Not(f) => f.collect_vars(out),
            PropFormula::And(a, b) | PropFormula::Or(a, b) | PropFormula::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn max_variable(&self) -> Option<usize> {
        self.variables().last().copied()
    }
}

impl fmt::Display for PropFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropFormula::Var(i) => write!(f, "A{}", i + 1),
            PropFormula::Not(x) => write!(f, "!{x}"),
            PropFormula::And(a, b) => write!(f, "({a} & {b})"),
            PropFormula::Or(a, b) => write!(f, "({a} | {b})"),
            PropFormula::Implies(a, b) => write!(f, "({a} -> {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Var(usize),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
}

/// Tokens paired with their 1-based character position.
fn tokenize(text: &str, variable_count: Option<usize>) -> Result<Vec<(Token, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let pos = i + 1;
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '!' => {
                out.push((Token::Not, pos));
                i += 1;
            }
            '&' => {
                out.push((Token::And, pos));
                i += 1;
            }
            '|' => {
                out.push((Token::Or, pos));
                i += 1;
            }
            '(' => {
                out.push((Token::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, pos));
                i += 1;
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    out.push((Token::Implies, pos));
                    i += 2;
                } else {
                    return Err(Error::Syntax {
                        position: pos,
                        message: "expected `->`".into(),
                    });
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                let index = name
                    .strip_prefix('A')
                    .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
                if let Some(n) = variable_count {
                    if index > n {
                        return Err(Error::UnknownVariable(name));
                    }
                }
                out.push((Token::Var(index - 1), pos));
            }
            other => {
                return Err(Error::Syntax {
                    position: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            position: self.position(),
            message: message.into(),
        }
    }

    fn implies(&mut self) -> Result<PropFormula> {
        let lhs = self.or()?;
        if self.peek() == Some(&Token::Implies) {
            self.pos += 1;
            let rhs = self.implies()?;
            return Ok(PropFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<PropFormula> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            lhs = PropFormula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<PropFormula> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            lhs = PropFormula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<PropFormula> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(PropFormula::not(self.unary()?))
            }
            Some(Token::Var(i)) => {
                let i = *i;
                self.pos += 1;
                Ok(PropFormula::Var(i))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.implies()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(_) => Err(self.error("expected a variable, `!` or `(`")),
            None => Err(self.error("unexpected end of formula")),
        }
    }
}

pub fn parse_formula(text: &str) -> Result<PropFormula> {
    parse(text, None)
}

/// Like [`parse_formula`], additionally rejecting variables beyond `A{n}`.
pub fn parse_formula_for(text: &str, variable_count: usize) -> Result<PropFormula> {
    parse(text, Some(variable_count))
}

fn parse(text: &str, variable_count: Option<usize>) -> Result<PropFormula> {
    let tokens = tokenize(text, variable_count)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.chars().count() + 1,
    };
    let f = p.implies()?;
    if p.pos != p.tokens.len() {
        return Err(p.error("unexpected token"));
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

/// Disjunction of conjunctions of literals.
pub fn dnf_terms(f: &PropFormula) -> Vec<Vec<Literal>> {
    fn go(f: &PropFormula, negated: bool) -> Vec<Vec<Literal>> {
        match (f, negated) {
            (PropFormula::Var(i), neg) => vec![vec![Literal {
                var: *i,
                positive: !neg,
            }]],
            (PropFormula::Not(x), neg) => go(x, !neg),
            (PropFormula::And(a, b), false) | (PropFormula::Or(a, b), true) => {
                let left = go(a, negated);
                let right = go(b, negated);
                let mut out = Vec::with_capacity(left.len() * right.len());
                for l in &left {
                    for r in &right {
                        let mut t = l.clone();
                        t.extend_from_slice(r);
                        out.push(t);
                    }
                }
                out
            }
            (PropFormula::Or(a, b), false) | (PropFormula::And(a, b), true) => {
                let mut out = go(a, negated);
                out.extend(go(b, negated));
                out
            }
            // a -> b  ==  !a | b ;  !(a -> b)  ==  a & !b
            (PropFormula::Implies(a, b), false) => {
                let mut out = go(a, true);
                out.extend(go(b, false));
                out
            }
            (PropFormula::Implies(a, b), true) => {
                let left = go(a, false);
                let right = go(b, true);
                let mut out = Vec::new();
                for l in &left {
                    for r in &right {
                        let mut t = l.clone();
                        t.extend_from_slice(r);
                        out.push(t);
                    }
                }
                out
            }
        }
    }
    go(f, false)
}

fn literal_formula(l: Literal) -> PropFormula {
    if l.positive {
        PropFormula::Var(l.var)
    } else {
        PropFormula::not(PropFormula::Var(l.var))
    }
}

/// Equivalent formula in disjunctive normal form: implications removed,
/// negations on literals, conjunctions distributed over disjunctions.
pub fn to_dnf(f: &PropFormula) -> PropFormula {
    let terms = dnf_terms(f);
    terms
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(literal_formula)
                .reduce(PropFormula::and)
                .expect("dnf terms are non-empty")
        })
        .reduce(PropFormula::or)
        .expect("dnf has at least one term")
}

/// Expression over monitor outputs. `Conjunction` nodes are resolved by a
/// [`ConjunctionComposer`] at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompositionExpr {
    Constant(f64),
    Monitor(usize),
    /// Signed linear combination.
    Sum(Vec<(f64, CompositionExpr)>),
    /// `1 - e`
    Complement(Box<CompositionExpr>),
    /// Joint probability of the listed (sorted, distinct) assumptions.
    Conjunction(Vec<usize>),
}

impl CompositionExpr {
    pub fn max_monitor(&self) -> Option<usize> {
        match self {
            CompositionExpr::Constant(_) => None,
            CompositionExpr::Monitor(i) => Some(*i),
            CompositionExpr::Sum(terms) => terms.iter().filter_map(|(_, e)| e.max_monitor()).max(),
            CompositionExpr::Complement(e) => e.max_monitor(),
            CompositionExpr::Conjunction(ix) => ix.iter().copied().max(),
        }
    }
}

impl fmt::Display for CompositionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompositionExpr::Constant(c) => write!(f, "{c}"),
            CompositionExpr::Monitor(i) => write!(f, "m{}", i + 1),
            CompositionExpr::Sum(terms) => {
                for (k, (c, e)) in terms.iter().enumerate() {
                    let sign = if *c < 0.0 { "-" } else { "+" };
                    if k == 0 {
                        if *c < 0.0 {
                            write!(f, "-")?;
                        }
                    } else {
                        write!(f, " {sign} ")?;
                    }
                    if c.abs() != 1.0 {
                        write!(f, "{}*", c.abs())?;
                    }
                    write!(f, "{e}")?;
                }
                Ok(())
            }
            CompositionExpr::Complement(e) => write!(f, "1 - ({e})"),
            CompositionExpr::Conjunction(ix) => {
                let names: Vec<String> = ix.iter().map(|i| format!("m{}", i + 1)).collect();
                write!(f, "C({})", names.join(", "))
            }
        }
    }
}

/// Supplies P(A_i and ... and A_j) from the member monitors' values.
pub trait ConjunctionComposer {
    /// `values[k]` is the confidence of assumption `indices[k]`; `indices`
    /// is sorted and has at least two elements.
    fn conjoin(&self, indices: &[usize], values: &[f64]) -> f64;
}

impl<F> ConjunctionComposer for F
where
    F: Fn(&[usize], &[f64]) -> f64,
{
    fn conjoin(&self, indices: &[usize], values: &[f64]) -> f64 {
        self(indices, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compiler {
    pub variable_limit: usize,
}

impl Default for Compiler {
    fn default() -> Self {
        Compiler {
            variable_limit: DEFAULT_VARIABLE_LIMIT,
        }
    }
}

/// Key for a conjunction of literals: (positive mask, negative mask).
type LiteralSet = (u64, u64);

impl Compiler {
    /// Converts to DNF, expands the disjunction by inclusion–exclusion, then
    /// rewrites negated literals inside conjunctions with
    /// `P(X & !B) = P(X) - P(X & B)` until only marginals and conjunctions of
    /// positive assumptions remain.
    pub fn compile(&self, f: &PropFormula) -> Result<CompositionExpr> {
        let vars = f.variables();
        if vars.len() > self.variable_limit {
            return Err(Error::VariableLimit {
                found: vars.len(),
                limit: self.variable_limit,
            });
        }
        if vars.last().is_some_and(|&v| v >= 64) {
            return Err(Error::InvalidArgument(
                "variable index beyond A64 is not supported".into(),
            ));
        }

        // Inclusion–exclusion over DNF terms, accumulated term by term:
        // P(X | T) = P(X) + P(T) - P(X & T), where P(X & T) distributes over
        // the linear form of P(X).
        let mut disjunction: BTreeMap<LiteralSet, i64> = BTreeMap::new();
        for term in dnf_terms(f) {
            let Some(t) = literal_set(&term) else {
                continue;
            };
            let mut next = disjunction.clone();
            *next.entry(t).or_insert(0) += 1;
            for (&k, &c) in &disjunction {
                let joined = (k.0 | t.0, k.1 | t.1);
                if joined.0 & joined.1 == 0 {
                    *next.entry(joined).or_insert(0) -= c;
                }
            }
            next.retain(|_, c| *c != 0);
            disjunction = next;
        }

        // Expand negated literals into signed positive conjunctions.
        let mut positive: BTreeMap<u64, i64> = BTreeMap::new();
        for (&(pos, neg), &coeff) in &disjunction {
            let neg_bits: Vec<u64> = bits(neg).map(|b| 1u64 << b).collect();
            for subset in 0u64..(1u64 << neg_bits.len()) {
                let mut mask = pos;
                let mut sign = 1i64;
                for (k, bit) in neg_bits.iter().enumerate() {
                    if subset & (1 << k) != 0 {
                        mask |= bit;
                        sign = -sign;
                    }
                }
                *positive.entry(mask).or_insert(0) += sign * coeff;
            }
        }
        positive.retain(|_, c| *c != 0);
        Ok(build_expr(positive))
    }
}

pub fn compile(f: &PropFormula) -> Result<CompositionExpr> {
    Compiler::default().compile(f)
}

/// None for contradictory conjunctions (A & !A). Duplicates collapse.
fn literal_set(term: &[Literal]) -> Option<LiteralSet> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for l in term {
        if l.positive {
            pos |= 1 << l.var;
        } else {
            neg |= 1 << l.var;
        }
    }
    (pos & neg == 0).then_some((pos, neg))
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |b| mask & (1u64 << b) != 0)
}

fn mask_expr(mask: u64) -> CompositionExpr {
    let ix: Vec<usize> = bits(mask).collect();
    match ix.len() {
        0 => CompositionExpr::Constant(1.0),
        1 => CompositionExpr::Monitor(ix[0]),
        _ => CompositionExpr::Conjunction(ix),
    }
}

fn build_expr(coeffs: BTreeMap<u64, i64>) -> CompositionExpr {
    let mut terms: Vec<(u64, i64)> = coeffs.into_iter().collect();
    terms.sort_by_key(|&(m, _)| (m.count_ones(), m));
    match terms.as_slice() {
        [] => CompositionExpr::Constant(0.0),
        [(m, 1)] => mask_expr(*m),
        [(0, c)] => CompositionExpr::Constant(*c as f64),
        [(0, 1), (m, -1)] => CompositionExpr::Complement(Box::new(mask_expr(*m))),
        _ => CompositionExpr::Sum(
            terms
                .into_iter()
                .map(|(m, c)| (c as f64, mask_expr(m)))
                .collect(),
        ),
    }
}

/// Numeric value of `e`, with the final result clamped to `[0, 1]`.
pub fn evaluate(
    e: &CompositionExpr,
    ms: &[Confidence],
    conj: &dyn ConjunctionComposer,
) -> Result<Confidence> {
    Ok(Confidence::clamped(evaluate_raw(e, ms, conj)?))
}

/// Unclamped evaluation.
pub fn evaluate_raw(
    e: &CompositionExpr,
    ms: &[Confidence],
    conj: &dyn ConjunctionComposer,
) -> Result<f64> {
    let value_of = |i: usize| ms.get(i).map(|c| c.get()).ok_or(Error::MissingMonitor(i));
    Ok(match e {
        CompositionExpr::Constant(c) => *c,
        CompositionExpr::Monitor(i) => value_of(*i)?,
        CompositionExpr::Sum(terms) => {
            let mut acc = 0.0;
            for (c, t) in terms {
                acc += c * evaluate_raw(t, ms, conj)?;
            }
            acc
        }
        CompositionExpr::Complement(inner) => 1.0 - evaluate_raw(inner, ms, conj)?,
        CompositionExpr::Conjunction(ix) => {
            let values = ix
                .iter()
                .map(|&i| value_of(i))
                .collect::<Result<Vec<f64>>>()?;
            conj.conjoin(ix, &values)
        }
    })
}
