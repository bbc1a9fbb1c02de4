//! Modal formulas over variables and parameters, rules, substitutions.
//!
//! The AST has four primitives: `⊥`, atoms, `→` and `□`. Every other
//! connective is stored as its primitive expansion and re-sugared by the
//! printer, so `print` followed by `parse` gives back the same tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    Parameter,
    Variable,
}

/// A propositional atom. Parameters are fixed by every substitution.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub kind: AtomKind,
    pub name: String,
}

impl Atom {
    pub fn var(name: impl Into<String>) -> Atom {
        Atom { kind: AtomKind::Variable, name: name.into() }
    }

    pub fn par(name: impl Into<String>) -> Atom {
        Atom { kind: AtomKind::Parameter, name: name.into() }
    }

    pub fn is_param(&self) -> bool {
        self.kind == AtomKind::Parameter
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AtomKind::Parameter => write!(f, "${}", self.name),
            AtomKind::Variable => write!(f, "{}", self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Bot,
    Atom(Atom),
    Imp(Box<Formula>, Box<Formula>),
    /// The box modality `□`.
    Nec(Box<Formula>),
}

use Formula::{Bot, Imp, Nec};

impl Formula {
    pub fn var(name: impl Into<String>) -> Formula {
        Formula::Atom(Atom::var(name))
    }

    pub fn par(name: impl Into<String>) -> Formula {
        Formula::Atom(Atom::par(name))
    }

    pub fn bot() -> Formula {
        Bot
    }

    pub fn top() -> Formula {
        Imp(Box::new(Bot), Box::new(Bot))
    }

    pub fn imp(a: Formula, b: Formula) -> Formula {
        Imp(Box::new(a), Box::new(b))
    }

    pub fn not(a: Formula) -> Formula {
        Formula::imp(a, Bot)
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::imp(a, Formula::not(b)))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::imp(Formula::not(a), b)
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::and(Formula::imp(a.clone(), b.clone()), Formula::imp(b, a))
    }

    pub fn nec(a: Formula) -> Formula {
        Nec(Box::new(a))
    }

    pub fn dia(a: Formula) -> Formula {
        Formula::not(Formula::nec(Formula::not(a)))
    }

    /// `⊡a = a ∧ □a`.
    pub fn boxdot(a: Formula) -> Formula {
        Formula::and(a.clone(), Formula::nec(a))
    }

    /// `a ∨ ◇a`.
    pub fn dotdia(a: Formula) -> Formula {
        Formula::or(a.clone(), Formula::dia(a))
    }

    /// Left-nested conjunction; the empty conjunction is `⊤`.
    pub fn conj<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
        let mut it = items.into_iter();
        match it.next() {
            None => Formula::top(),
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Left-nested disjunction; the empty disjunction is `⊥`.
    pub fn disj<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
        let mut it = items.into_iter();
        match it.next() {
            None => Bot,
            Some(first) => it.fold(first, Formula::or),
        }
    }

    /// Number of nodes of the primitive tree.
    pub fn size(&self) -> usize {
        match self {
            Bot | Formula::Atom(_) => 1,
            Imp(a, b) => 1 + a.size() + b.size(),
            Nec(a) => 1 + a.size(),
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Bot => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Imp(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Nec(a) => a.collect_atoms(out),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.atoms().into_iter().filter(|a| !a.is_param()).map(|a| a.name).collect()
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.atoms().into_iter().filter(|a| a.is_param()).map(|a| a.name).collect()
    }

    /// The operand of a negation `a → ⊥`.
    pub fn as_not(&self) -> Option<&Formula> {
        match self {
            Imp(a, b) if **b == Bot => Some(a),
            _ => None,
        }
    }

    pub fn as_and(&self) -> Option<(&Formula, &Formula)> {
        let inner = self.as_not()?;
        match inner {
            Imp(a, nb) => nb.as_not().map(|b| (&**a, b)),
            _ => None,
        }
    }

    pub fn as_or(&self) -> Option<(&Formula, &Formula)> {
        match self {
            Imp(na, b) => na.as_not().map(|a| (a, &**b)),
            _ => None,
        }
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Imp(a, b) if **a == Bot && **b == Bot)
    }

    fn view(&self) -> View<'_> {
        match self {
            Bot => View::Bot,
            Formula::Atom(a) => View::Atom(a),
            Nec(a) => View::Box(a),
            Imp(a, b) => {
                if **a == Bot && **b == Bot {
                    return View::Top;
                }
                if let Some((l, r)) = self.as_and() {
                    if let Nec(inner) = r {
                        if **inner == *l {
                            return View::BoxDot(l);
                        }
                    }
                    if let (Imp(p, q), Imp(q2, p2)) = (l, r) {
                        if p == p2 && q == q2 {
                            return View::Iff(p, q);
                        }
                    }
                    return View::And(l, r);
                }
                if **b == Bot {
                    if let Nec(inner) = &**a {
                        if let Some(x) = inner.as_not() {
                            return View::Dia(x);
                        }
                    }
                    return View::Not(a);
                }
                // conjunctions and diamonds in antecedent position read
                // better as implications than as negated disjuncts
                let plain_neg = matches!(a.view(), View::Not(_));
                if let Some(l) = a.as_not().filter(|_| plain_neg) {
                    if let Some(x) = b.as_not().and_then(|nb| match nb {
                        Nec(inner) => inner.as_not(),
                        _ => None,
                    }) {
                        if x == l {
                            return View::DotDia(l);
                        }
                    }
                    return View::Or(l, b);
                }
                View::Imp(a, b)
            }
        }
    }

    fn write_prec(&self, out: &mut String, min: u8) {
        let v = self.view();
        let prec = v.prec();
        if prec < min {
            out.push('(');
        }
        match v {
            View::Bot => out.push_str("false"),
            View::Top => out.push_str("true"),
            View::Atom(a) => out.push_str(&a.to_string()),
            View::Not(a) => {
                out.push('!');
                a.write_prec(out, 5);
            }
            View::Box(a) => {
                out.push_str("[]");
                a.write_prec(out, 5);
            }
            View::Dia(a) => {
                out.push_str("<>");
                a.write_prec(out, 5);
            }
            View::BoxDot(a) => {
                out.push_str("[.]");
                a.write_prec(out, 5);
            }
            View::DotDia(a) => {
                out.push_str("<.>");
                a.write_prec(out, 5);
            }
            View::And(a, b) => {
                a.write_prec(out, 4);
                out.push_str(" & ");
                b.write_prec(out, 5);
            }
            View::Or(a, b) => {
                a.write_prec(out, 3);
                out.push_str(" | ");
                b.write_prec(out, 4);
            }
            View::Imp(a, b) => {
                a.write_prec(out, 3);
                out.push_str(" -> ");
                b.write_prec(out, 2);
            }
            View::Iff(a, b) => {
                a.write_prec(out, 1);
                out.push_str(" <-> ");
                b.write_prec(out, 2);
            }
        }
        if prec < min {
            out.push(')');
        }
    }
}

enum View<'a> {
    Bot,
    Top,
    Atom(&'a Atom),
    Not(&'a Formula),
    Box(&'a Formula),
    Dia(&'a Formula),
    BoxDot(&'a Formula),
    DotDia(&'a Formula),
    And(&'a Formula, &'a Formula),
    Or(&'a Formula, &'a Formula),
    Imp(&'a Formula, &'a Formula),
    Iff(&'a Formula, &'a Formula),
}

impl View<'_> {
    fn prec(&self) -> u8 {
        match self {
            View::Iff(..) => 1,
            View::Imp(..) => 2,
            View::Or(..) => 3,
            View::And(..) => 4,
            View::Not(_) | View::Box(_) | View::Dia(_) | View::BoxDot(_) | View::DotDia(_) => 5,
            View::Bot | View::Top | View::Atom(_) => 6,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_prec(&mut s, 0);
        f.write_str(&s)
    }
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Formula, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text, &BTreeSet::new()).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Iff,
    Imp,
    Or,
    And,
    Not,
    Box,
    Dia,
    BoxDot,
    DotDia,
    LParen,
    RParen,
    True,
    False,
    Ident(String),
    Param(String),
    Slash,
    Comma,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| ParseError { pos, msg: msg.to_string() };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let (tok, len) = if rest.starts_with("<->") {
            (Tok::Iff, 3)
        } else if rest.starts_with("<.>") {
            (Tok::DotDia, 3)
        } else if rest.starts_with("[.]") {
            (Tok::BoxDot, 3)
        } else if rest.starts_with("->") {
            (Tok::Imp, 2)
        } else if rest.starts_with("[]") {
            (Tok::Box, 2)
        } else if rest.starts_with("<>") {
            (Tok::Dia, 2)
        } else {
            match c {
                '|' => (Tok::Or, 1),
                '&' => (Tok::And, 1),
                '!' => (Tok::Not, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '/' => (Tok::Slash, 1),
                ',' => (Tok::Comma, 1),
                '$' => {
                    let start = i + 1;
                    let mut j = start;
                    if j >= chars.len() || !is_ident_start(chars[j]) {
                        return Err(err(i, "expected identifier after '$'"));
                    }
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    let name: String = chars[start..j].iter().collect();
                    out.push((i, Tok::Param(name)));
                    i = j;
                    continue;
                }
                c if is_ident_start(c) => {
                    let mut j = i;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    let name: String = chars[i..j].iter().collect();
                    let tok = match name.as_str() {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        _ => Tok::Ident(name),
                    };
                    out.push((i, tok));
                    i = j;
                    continue;
                }
                _ => return Err(err(i, &format!("unexpected character '{c}'"))),
            }
        };
        out.push((i, tok));
        i += len;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
    declared: &'a BTreeSet<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn fail<T>(&self, msg: &str) -> Result<T, ParseError> {
        Err(ParseError { pos: self.here(), msg: msg.to_string() })
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.imp()?;
        while self.peek() == Some(&Tok::Iff) {
            self.pos += 1;
            let right = self.imp()?;
            left = Formula::iff(left, right);
        }
        Ok(left)
    }

    fn imp(&mut self) -> Result<Formula, ParseError> {
        let left = self.or()?;
        if self.peek() == Some(&Tok::Imp) {
            self.pos += 1;
            let right = self.imp()?;
            return Ok(Formula::imp(left, right));
        }
        Ok(left)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let right = self.and()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let op = match self.peek() {
            Some(Tok::Not) => Formula::not as fn(Formula) -> Formula,
            Some(Tok::Box) => Formula::nec,
            Some(Tok::Dia) => Formula::dia,
            Some(Tok::BoxDot) => Formula::boxdot,
            Some(Tok::DotDia) => Formula::dotdia,
            _ => return self.atom(),
        };
        self.pos += 1;
        Ok(op(self.unary()?))
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.fail("unexpected end of input"),
        };
        self.pos += 1;
        match tok {
            Tok::True => Ok(Formula::top()),
            Tok::False => Ok(Bot),
            Tok::Param(name) => Ok(Formula::par(name)),
            Tok::Ident(name) => {
                if self.declared.contains(&name) {
                    Ok(Formula::par(name))
                } else {
                    Ok(Formula::var(name))
                }
            }
            Tok::LParen => {
                let inner = self.iff()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.fail("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => {
                self.pos -= 1;
                self.fail("expected a formula")
            }
        }
    }
}

/// Parses a formula. Identifiers in `declared` and `$`-prefixed names are
/// parameters; all other identifiers are variables.
pub fn parse(text: &str, declared: &BTreeSet<String>) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks: &toks, pos: 0, end: text.len(), declared };
    let f = p.iff()?;
    if p.pos != toks.len() {
        return p.fail("trailing input");
    }
    Ok(f)
}

/// Parses with no declared parameters.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    parse(text, &BTreeSet::new())
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

/// A multiple-conclusion rule `Γ / Δ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rule {
    pub premises: Vec<Formula>,
    pub conclusions: Vec<Formula>,
}

fn dedup_keep_order(items: Vec<Formula>) -> Vec<Formula> {
    let mut seen = BTreeSet::new();
    items.into_iter().filter(|f| seen.insert(f.clone())).collect()
}

impl Rule {
    pub fn new(premises: Vec<Formula>, conclusions: Vec<Formula>) -> Rule {
        Rule { premises: dedup_keep_order(premises), conclusions: dedup_keep_order(conclusions) }
    }

    pub fn formulas(&self) -> impl Iterator<Item = &Formula> {
        self.premises.iter().chain(self.conclusions.iter())
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.formulas().flat_map(|f| f.params()).collect()
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.formulas().flat_map(|f| f.vars()).collect()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Formula]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let (l, r) = (list(&self.premises), list(&self.conclusions));
        match (l.is_empty(), r.is_empty()) {
            (true, true) => write!(f, "/"),
            (true, false) => write!(f, "/ {r}"),
            (false, true) => write!(f, "{l} /"),
            (false, false) => write!(f, "{l} / {r}"),
        }
    }
}

fn parse_list(text: &str, offset: usize, declared: &BTreeSet<String>) -> Result<Vec<Formula>, ParseError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut start = 0;
    for piece in text.split(',') {
        let f = parse(piece, declared).map_err(|e| ParseError { pos: e.pos + offset + start, msg: e.msg })?;
        out.push(f);
        start += piece.len() + 1;
    }
    Ok(out)
}

/// Parses `φ1, ..., φk / ψ1, ..., ψl`; either side may be empty.
pub fn parse_rule_with(text: &str, declared: &BTreeSet<String>) -> Result<Rule, ParseError> {
    let slashes: Vec<usize> = text.match_indices('/').map(|(i, _)| i).collect();
    match slashes.as_slice() {
        [] => Err(ParseError { pos: text.len(), msg: "expected '/' in rule".into() }),
        [i] => {
            let prem = parse_list(&text[..*i], 0, declared)?;
            let conc = parse_list(&text[i + 1..], i + 1, declared)?;
            Ok(Rule::new(prem, conc))
        }
        [_, j, ..] => Err(ParseError { pos: *j, msg: "more than one '/' in rule".into() }),
    }
}

pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    parse_rule_with(text, &BTreeSet::new())
}

// ---------------------------------------------------------------------------
// Substitutions
// ---------------------------------------------------------------------------

/// A map from variable names to formulas; identity elsewhere. Parameters
/// cannot be in the domain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Substitution {
    pub map: BTreeMap<String, Formula>,
}

impl Substitution {
    pub fn identity() -> Substitution {
        Substitution::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, Formula)>>(pairs: I) -> Substitution {
        let mut s = Substitution::default();
        for (x, f) in pairs {
            s.insert(x, f);
        }
        s
    }

    /// Maps `x` to `f`; a binding `x ↦ x` is dropped.
    pub fn insert(&mut self, x: impl Into<String>, f: Formula) {
        let x = x.into();
        if f == Formula::var(x.clone()) {
            self.map.remove(&x);
        } else {
            self.map.insert(x, f);
        }
    }

    pub fn get(&self, x: &str) -> Formula {
        self.map.get(x).cloned().unwrap_or_else(|| Formula::var(x))
    }

    pub fn apply(&self, f: &Formula) -> Formula {
        if self.map.is_empty() {
            return f.clone();
        }
        match f {
            Bot => Bot,
            Formula::Atom(a) if !a.is_param() => self.get(&a.name),
            Formula::Atom(_) => f.clone(),
            Imp(a, b) => Formula::imp(self.apply(a), self.apply(b)),
            Nec(a) => Formula::nec(self.apply(a)),
        }
    }

    /// The substitution `x ↦ self(other(x))`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out = Substitution::default();
        let domain: BTreeSet<&String> = self.map.keys().chain(other.map.keys()).collect();
        for x in domain {
            out.insert(x.clone(), self.apply(&other.get(x)));
        }
        out
    }

    pub fn simplified(&self) -> Substitution {
        Substitution::from_pairs(self.map.iter().map(|(x, f)| (x.clone(), simplify(f))))
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.map.iter().map(|(x, g)| format!("{x} := {g}")).collect();
        write!(f, "{{{}}}", parts.join("; "))
    }
}

// ---------------------------------------------------------------------------
// Subformulas and statistics
// ---------------------------------------------------------------------------

fn collect_sub(f: &Formula, out: &mut BTreeSet<(usize, Formula)>) {
    if !out.insert((f.size(), f.clone())) {
        return;
    }
    match f {
        Bot | Formula::Atom(_) => {}
        Imp(a, b) => {
            collect_sub(a, out);
            collect_sub(b, out);
        }
        Nec(a) => collect_sub(a, out),
    }
}

/// All subformulas, ordered by size and then structurally, so every
/// formula comes after its proper subformulas.
pub fn subformulas<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> Vec<Formula> {
    let mut set = BTreeSet::new();
    for f in fs {
        collect_sub(f, &mut set);
    }
    set.into_iter().map(|(_, f)| f).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityStats {
    /// Distinct boxed subformulas of `Γ ∪ Δ`.
    pub b: usize,
    /// `|(Σ∩Par) ∪ {ψ, □ψ : □ψ ∈ Σ}|` with `Σ = Sub(Γ)`.
    pub m: usize,
    /// Total symbol length of `Γ ∪ Δ`.
    pub n: usize,
    pub conclusions: usize,
}

impl ComplexityStats {
    /// `3·2^b·(2^m + |Δ|)`, saturating.
    pub fn model_bound(&self) -> u128 {
        let pow = |k: usize| if k >= 120 { u128::MAX } else { 1u128 << k };
        pow(self.m)
            .saturating_add(self.conclusions as u128)
            .saturating_mul(pow(self.b))
            .saturating_mul(3)
    }
}

pub fn stats(gamma: &[Formula], delta: &[Formula]) -> ComplexityStats {
    let all = subformulas(gamma.iter().chain(delta.iter()));
    let b = all.iter().filter(|f| matches!(f, Nec(_))).count();
    let sigma = subformulas(gamma.iter());
    let mut theta = BTreeSet::new();
    for f in &sigma {
        match f {
            Formula::Atom(a) if a.is_param() => {
                theta.insert(f.clone());
            }
            Nec(inner) => {
                theta.insert((**inner).clone());
                theta.insert(f.clone());
            }
            _ => {}
        }
    }
    let n = gamma.iter().chain(delta.iter()).map(|f| f.size()).sum();
    ComplexityStats { b, m: theta.len(), n, conclusions: delta.len() }
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
enum S {
    T,
    F,
    Atom(Atom),
    Not(Box<S>),
    And(Vec<S>),
    Or(Vec<S>),
    Imp(Box<S>, Box<S>),
    Nec(Box<S>),
}

fn to_s(f: &Formula) -> S {
    match f {
        Bot => S::F,
        Formula::Atom(a) => S::Atom(a.clone()),
        Nec(a) => S::Nec(Box::new(to_s(a))),
        Imp(a, b) => {
            if f.is_top() {
                S::T
            } else if let Some((l, r)) = f.as_and() {
                S::And(vec![to_s(l), to_s(r)])
            } else if **b == Bot {
                S::Not(Box::new(to_s(a)))
            } else if let Some((l, r)) = f.as_or() {
                S::Or(vec![to_s(l), to_s(r)])
            } else {
                S::Imp(Box::new(to_s(a)), Box::new(to_s(b)))
            }
        }
    }
}

fn from_s(s: &S) -> Formula {
    match s {
        S::T => Formula::top(),
        S::F => Bot,
        S::Atom(a) => Formula::Atom(a.clone()),
        S::Not(a) => Formula::not(from_s(a)),
        S::And(xs) => Formula::conj(xs.iter().map(from_s)),
        S::Or(xs) => Formula::disj(xs.iter().map(from_s)),
        S::Imp(a, b) => Formula::imp(from_s(a), from_s(b)),
        S::Nec(a) => Formula::nec(from_s(a)),
    }
}

fn negate(s: S) -> S {
    match s {
        S::T => S::F,
        S::F => S::T,
        S::Not(a) => *a,
        other => S::Not(Box::new(other)),
    }
}

fn is_complement(a: &S, b: &S) -> bool {
    matches!(a, S::Not(x) if **x == *b) || matches!(b, S::Not(x) if **x == *a)
}

/// Flattens, folds constants, removes duplicates and complementary pairs,
/// and applies absorption to an `∧` (`conj = true`) or `∨` list.
fn simp_junction(items: Vec<S>, conj: bool) -> S {
    let (unit, zero) = if conj { (S::T, S::F) } else { (S::F, S::T) };
    let mut flat: Vec<S> = Vec::new();
    let mut stack: Vec<S> = items.into_iter().rev().collect();
    while let Some(x) = stack.pop() {
        match x {
            S::And(ys) if conj => stack.extend(ys.into_iter().rev()),
            S::Or(ys) if !conj => stack.extend(ys.into_iter().rev()),
            x if x == unit => {}
            x if x == zero => return zero,
            x => {
                if !flat.contains(&x) {
                    flat.push(x);
                }
            }
        }
    }
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            if is_complement(&flat[i], &flat[j]) {
                return zero;
            }
        }
    }
    // absorption: a ∧ (a ∨ b) = a and a ∨ (a ∧ b) = a
    let absorbed: Vec<bool> = flat
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let members = match (x, conj) {
                (S::Or(ys), true) | (S::And(ys), false) => ys,
                _ => return false,
            };
            flat.iter().enumerate().any(|(j, y)| j != i && members.contains(y))
        })
        .collect();
    let mut kept: Vec<S> = flat.into_iter().zip(absorbed).filter(|(_, a)| !a).map(|(x, _)| x).collect();
    match kept.len() {
        0 => unit,
        1 => kept.pop().unwrap(),
        _ => {
            if conj {
                S::And(kept)
            } else {
                S::Or(kept)
            }
        }
    }
}

fn simp(s: S) -> S {
    match s {
        S::T | S::F | S::Atom(_) => s,
        S::Not(a) => negate(simp(*a)),
        S::Nec(a) => match simp(*a) {
            S::T => S::T,
            x => S::Nec(Box::new(x)),
        },
        S::And(xs) => simp_junction(xs.into_iter().map(simp).collect(), true),
        S::Or(xs) => simp_junction(xs.into_iter().map(simp).collect(), false),
        S::Imp(a, b) => {
            let (a, b) = (simp(*a), simp(*b));
            match (&a, &b) {
                (S::F, _) | (_, S::T) => S::T,
                (S::T, _) => b,
                (_, S::F) => negate(a),
                _ if a == b => S::T,
                _ => S::Imp(Box::new(a), Box::new(b)),
            }
        }
    }
}

/// Equivalence-preserving cleanup: constant folding, flattening and
/// deduplication of `∧`/`∨`, complementary literals, absorption, `□⊤ = ⊤`.
pub fn simplify(f: &Formula) -> Formula {
    let mut cur = f.clone();
    loop {
        let next = from_s(&simp(to_s(&cur)));
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// The conjunction `P^e` of parameter literals: `p` if `e(p)`, else `¬p`.
pub fn param_literal_conj(params: &[String], e: &BTreeSet<String>) -> Formula {
    Formula::conj(params.iter().map(|p| {
        if e.contains(p) {
            Formula::par(p.clone())
        } else {
            Formula::not(Formula::par(p.clone()))
        }
    }))
}
