//! Admissibility of rules, unification and certificates.
//!
//! Engine A looks for a projective type set below the premises that
//! entails no conclusion; its unifier is the counterexample. Engine B
//! looks for a realizable type set that is pseudoextensible for `base(L)`
//! and refutes every conclusion; the witness is an explicit model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::json;

use crate::formula::{Formula, Rule};
use crate::kripke::{Model, TpSpec};
use crate::logic::{ClusterType, Count, ExtensionCondition, LogicSpec};
use crate::projective::{
    find_unifier, keys_where, normalize, projective_branches, search_type_sets, type_set_formula, Projection,
    SearchMode, StagedRun, Unifier,
};
use crate::typecore::{check_params, low_mask, Saturation, SigmaContext, TypeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    A,
    B,
    Both,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Admissible,
    NotAdmissible,
    Undecided(String),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Admissible => write!(f, "admissible"),
            Verdict::NotAdmissible => write!(f, "not admissible"),
            Verdict::Undecided(why) => write!(f, "undecided ({why})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub verdict: Verdict,
    /// Unifier of the premises unifying no conclusion.
    pub unifier: Option<Unifier>,
    /// Pseudoextensible model refuting the rule.
    pub model: Option<Model>,
}

impl Decision {
    fn admissible() -> Decision {
        Decision { verdict: Verdict::Admissible, unifier: None, model: None }
    }

    fn undecided(why: String) -> Decision {
        Decision { verdict: Verdict::Undecided(why), unifier: None, model: None }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "verdict": self.verdict.to_string(),
            "unifier": self.unifier.as_ref().map(|u| u.to_json()),
            "model": self.model.as_ref().map(|m| serde_json::to_value(m.to_doc()).unwrap()),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdmError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("engines disagree: A says {a}, B says {b}")]
    Disagreement { a: Verdict, b: Verdict },
}

struct Setup {
    ctx: SigmaContext,
    plus: SigmaContext,
    proj: Projection,
    start: BTreeSet<u64>,
}

fn setup(logic: &LogicSpec, rule: &Rule) -> Result<Setup, TypeError> {
    check_params(logic, rule.formulas())?;
    let ctx = SigmaContext::new(rule.premises.iter())?;
    let plus = SigmaContext::new(rule.formulas())?;
    let proj = Projection::new(&plus, &ctx);
    let nodes: Vec<usize> = rule.premises.iter().map(|g| ctx.node_of(g).unwrap()).collect();
    let start = keys_where(&ctx, |k| {
        let full = ctx.eval(k);
        nodes.iter().all(|&i| ctx.holds(full, i))
    });
    Ok(Setup { ctx, plus, proj, start })
}

/// Saturation over the full rule context restricted to `set` on the
/// premise context.
fn refine<'a>(s: &'a Setup, logic: &'a LogicSpec, set: &'a BTreeSet<u64>) -> Result<Saturation<'a>, TypeError> {
    let proj = s.proj.clone();
    Saturation::run(&s.plus, logic, Box::new(move |k, _| set.contains(&proj.apply(k))))
}

fn refutes_all(s: &Setup, sat: &Saturation, rule: &Rule) -> bool {
    rule.conclusions.iter().all(|d| {
        let node = s.plus.node_of(d).unwrap();
        sat.reachable().any(|k| !s.plus.holds(s.plus.eval(k), node))
    })
}

fn wrap(r: Result<Decision, TypeError>) -> Result<Decision, AdmError> {
    match r {
        Ok(d) => Ok(d),
        Err(TypeError::ResourceCap(why)) => Ok(Decision::undecided(why)),
        Err(e) => Err(e.into()),
    }
}

/// Decides `Γ |~_L Δ` with the chosen engine(s).
pub fn admissible(logic: &LogicSpec, rule: &Rule, engine: Engine) -> Result<Decision, AdmError> {
    match engine {
        Engine::A => wrap(engine_a(logic, rule)),
        Engine::B => wrap(engine_b(logic, rule)),
        Engine::Both => {
            let a = wrap(engine_a(logic, rule))?;
            let b = wrap(engine_b(logic, rule))?;
            match (&a.verdict, &b.verdict) {
                (Verdict::Undecided(_), _) => Ok(b),
                (_, Verdict::Undecided(_)) => Ok(a),
                (x, y) if x == y => Ok(Decision { verdict: a.verdict, unifier: a.unifier, model: b.model }),
                (x, y) => Err(AdmError::Disagreement { a: x.clone(), b: y.clone() }),
            }
        }
    }
}

const MAX_NODES: usize = 50_000;

/// First good set below the premises that still refutes every conclusion.
fn witness_set(
    s: &Setup,
    logic: &LogicSpec,
    rule: &Rule,
    violation: &mut dyn FnMut(&BTreeSet<u64>) -> Result<Vec<BTreeSet<u64>>, TypeError>,
) -> Result<Option<BTreeSet<u64>>, TypeError> {
    let mut keep = |u: &BTreeSet<u64>| Ok(refutes_all(s, &refine(s, logic, u)?, rule));
    let found = search_type_sets(&s.ctx, logic, &s.start, violation, &mut keep, SearchMode::First, MAX_NODES)?;
    Ok(found.into_iter().next())
}

fn engine_a(logic: &LogicSpec, rule: &Rule) -> Result<Decision, TypeError> {
    let s = setup(logic, rule)?;
    if let Some(set) = witness_set(&s, logic, rule, &mut |u| projective_branches(&s.ctx, logic, u))? {
        let realizable = normalize(&s.ctx, logic, &keys_where(&s.ctx, |_| true))?;
        let guard = type_set_formula(&s.ctx, &set, &realizable);
        let pred = |k: u64| set.contains(&k);
        let unifier = find_unifier(&s.ctx, logic, &guard, &pred, None)?;
        if !verify_unifier(logic, rule, &unifier)? {
            return Err(TypeError::Inconsistent("engine A witness failed re-verification".into()));
        }
        return Ok(Decision { verdict: Verdict::NotAdmissible, unifier: Some(unifier), model: None });
    }
    Ok(Decision::admissible())
}

/// Exact check that `u` unifies every premise and no conclusion.
pub fn verify_unifier(logic: &LogicSpec, rule: &Rule, u: &Unifier) -> Result<bool, TypeError> {
    let ctx = SigmaContext::new(rule.formulas().chain([&u.guard]))?;
    let gnode = ctx.node_of(&u.guard).unwrap();
    let all = |_: u64| true;
    let guard = |k: u64| ctx.holds(ctx.eval(k), gnode);
    let run = StagedRun::run(&ctx, logic, u, &all, &guard)?;
    let prem = rule.premises.iter().all(|g| run.valid_after(ctx.node_of(g).unwrap()));
    let conc = rule.conclusions.iter().all(|d| !run.valid_after(ctx.node_of(d).unwrap()));
    Ok(prem && conc)
}

fn engine_b(logic: &LogicSpec, rule: &Rule) -> Result<Decision, TypeError> {
    let s = setup(logic, rule)?;
    let base = logic.base();
    let mut violation = |u: &BTreeSet<u64>| Ok(pseudo_branches(&s.ctx, u, &base));
    if let Some(set) = witness_set(&s, logic, rule, &mut violation)? {
        let sat = refine(&s, logic, &set)?;
        let mut pairs: BTreeSet<usize> = BTreeSet::new();
        let mut covered: BTreeSet<u64> = BTreeSet::new();
        for k in sat.reachable() {
            if covered.insert(s.proj.apply(k)) {
                pairs.insert(sat.type_witness(k).unwrap());
            }
        }
        for d in &rule.conclusions {
            let node = s.plus.node_of(d).unwrap();
            let k = sat.reachable().find(|&k| !s.plus.holds(s.plus.eval(k), node)).unwrap();
            pairs.insert(sat.type_witness(k).unwrap());
        }
        let pairs: Vec<usize> = pairs.into_iter().collect();
        let (model, _) = sat.materialize_many(&pairs);
        let report = check_certificate(logic, rule, &model)?;
        if !report.ok() {
            return Err(TypeError::Inconsistent(format!("engine B witness rejected: {report:?}")));
        }
        return Ok(Decision { verdict: Verdict::NotAdmissible, unifier: None, model: Some(model) });
    }
    Ok(Decision::admissible())
}

/// Largest E ⊆ 2^P sizes and X sizes allowed by a condition.
fn limits(t: &ExtensionCondition) -> (Option<usize>, Option<usize>) {
    let n = match t.n {
        Count::Finite(n) => Some(n),
        Count::Infinite => None,
    };
    let k = match t.cluster {
        ClusterType::Irreflexive => Some(0),
        ClusterType::Reflexive(k) => Some(k),
        ClusterType::ReflexiveUnbounded => None,
    };
    (n, k)
}

/// An X whose pseudopredecessor is missing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoViolation {
    pub condition: ExtensionCondition,
    /// Types of the points of X.
    pub witnesses: Vec<u64>,
    /// Parameter valuations of the missing predecessor.
    pub params: Vec<u64>,
}

/// ANDs of at most `n` profiles (all finite sets when `n` is `None`),
/// with witnesses; `n = 0` gives only the empty set.
fn x_profiles(ctx: &SigmaContext, types: &BTreeSet<u64>, n: Option<usize>) -> BTreeMap<u64, Vec<u64>> {
    let mut out = BTreeMap::new();
    if n == Some(0) {
        out.insert(ctx.all_boxes(), vec![]);
        return out;
    }
    let mut single: BTreeMap<u64, u64> = BTreeMap::new();
    for &t in types {
        single.entry(ctx.dotbox_profile(t)).or_insert(t);
    }
    let mut frontier = Vec::new();
    for (&p, &t) in &single {
        out.insert(p, vec![t]);
        frontier.push(p);
    }
    let mut size = 1;
    while !frontier.is_empty() && n.is_none_or(|n| size < n) {
        let mut next = Vec::new();
        for a in frontier {
            for (&p, &t) in &single {
                let c = a & p;
                if !out.contains_key(&c) {
                    let mut w: Vec<u64> = out[&a].clone();
                    w.push(t);
                    out.insert(c, w);
                    next.push(c);
                }
            }
        }
        frontier = next;
        size += 1;
    }
    out
}

fn irreflexive_tpp(ctx: &SigmaContext, types: &BTreeSet<u64>, pi: u64, e: u64) -> bool {
    types.iter().any(|&t| ctx.params_of(t) == e && ctx.boxes_of(t) == pi)
}

fn reflexive_tpp(ctx: &SigmaContext, types: &BTreeSet<u64>, pi: u64, es: &[u64]) -> bool {
    let mut beta = pi;
    loop {
        // per parameter valuation, distinct failure masks of candidates
        let target = pi & !beta;
        let cands: Option<Vec<Vec<u64>>> = es
            .iter()
            .map(|&e| {
                let fails: BTreeSet<u64> = types
                    .iter()
                    .filter(|&&t| ctx.params_of(t) == e && ctx.boxes_of(t) == beta)
                    .map(|&t| ctx.truemask(ctx.eval(t)))
                    .filter(|&m| m & beta == beta)
                    .map(|m| target & !m)
                    .collect();
                (!fails.is_empty()).then(|| fails.into_iter().collect())
            })
            .collect();
        if let Some(cands) = cands {
            if cover(&cands, 0, 0, target) {
                return true;
            }
        }
        if beta == 0 {
            return false;
        }
        beta = (beta - 1) & pi;
    }
}

fn cover(cands: &[Vec<u64>], i: usize, acc: u64, target: u64) -> bool {
    if i == cands.len() {
        return acc & target == target;
    }
    cands[i].iter().any(|&m| cover(cands, i + 1, acc | m, target))
}

/// Type-level pseudoextensibility of a realized type set: the first
/// violation, if any.
pub fn pseudo_violation(ctx: &SigmaContext, types: &BTreeSet<u64>, base: &[ExtensionCondition]) -> Option<PseudoViolation> {
    pseudo_violations(ctx, types, base, true).into_iter().next()
}

/// One violation per condition and failing X-profile.
pub fn pseudo_violations(
    ctx: &SigmaContext,
    types: &BTreeSet<u64>,
    base: &[ExtensionCondition],
    first_only: bool,
) -> Vec<PseudoViolation> {
    let np = ctx.nparams();
    let mut out = Vec::new();
    for t in base {
        let (n, k) = limits(t);
        for (&pi, wit) in &x_profiles(ctx, types, n) {
            let missing: Option<Vec<u64>> = if t.cluster == ClusterType::Irreflexive {
                (0..1u64 << np).find(|&e| !irreflexive_tpp(ctx, types, pi, e)).map(|e| vec![e])
            } else {
                (1..1u64 << (1u64 << np))
                    .map(|eset| (0..1u64 << np).filter(|&e| eset >> e & 1 == 1).collect::<Vec<u64>>())
                    .filter(|es| k.is_none_or(|k| es.len() <= k))
                    .find(|es| !reflexive_tpp(ctx, types, pi, es))
            };
            if let Some(params) = missing {
                out.push(PseudoViolation { condition: *t, witnesses: wit.clone(), params });
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

fn pseudo_branches(ctx: &SigmaContext, types: &BTreeSet<u64>, base: &[ExtensionCondition]) -> Vec<BTreeSet<u64>> {
    let mut out: Vec<BTreeSet<u64>> =
        pseudo_violations(ctx, types, base, false).into_iter().map(|v| v.witnesses.into_iter().collect()).collect();
    out.sort();
    out.dedup();
    out
}

/// Maximal realizability-closed type sets below `start` that are
/// pseudoextensible for `base`.
pub fn maximal_pseudo_sets(
    ctx: &SigmaContext,
    logic: &LogicSpec,
    base: &[ExtensionCondition],
    start: &BTreeSet<u64>,
    max_nodes: usize,
) -> Result<Vec<BTreeSet<u64>>, TypeError> {
    search_type_sets(
        ctx,
        logic,
        start,
        &mut |u| Ok(pseudo_branches(ctx, u, base)),
        &mut |_| Ok(true),
        SearchMode::Maximal,
        max_nodes,
    )
}

/// Pseudoextensibility of a model searched point by point.
pub fn pseudoextensible_model(m: &Model, sigma: &[Formula], base: &[ExtensionCondition]) -> Result<bool, TypeError> {
    let np = sigma.iter().filter(|f| matches!(f, Formula::Atom(a) if a.is_param())).count();
    let points = m.len();
    if points > 12 {
        return Err(TypeError::ResourceCap("model too large for subset search".into()));
    }
    for t in base {
        let (n, k) = limits(t);
        let subsets: Vec<Vec<usize>> = if n == Some(0) {
            vec![vec![]]
        } else {
            (1..1usize << points)
                .map(|s| (0..points).filter(|i| s >> i & 1 == 1).collect::<Vec<_>>())
                .filter(|x| n.is_none_or(|n| x.len() <= n))
                .collect()
        };
        for xs in &subsets {
            if t.cluster == ClusterType::Irreflexive {
                for e in 0..1u64 << np {
                    if m.find_tpp(xs, &TpSpec::Irreflexive(e), sigma)?.is_none() {
                        return Ok(false);
                    }
                }
                continue;
            }
            for eset in 1..1u64 << (1u64 << np) {
                let es: Vec<u64> = (0..1u64 << np).filter(|&e| eset >> e & 1 == 1).collect();
                if k.is_some_and(|k| es.len() > k) {
                    continue;
                }
                if m.find_tpp(xs, &TpSpec::Reflexive(es), sigma)?.is_none() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Outcome of certificate checking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateReport {
    pub l_frame: bool,
    pub premises_valid: bool,
    pub conclusions_refuted: bool,
    pub pseudoextensible: bool,
    pub size: usize,
    /// `3·2^b(2^m+|Δ|)`; reported only.
    pub size_bound: u128,
}

impl CertificateReport {
    pub fn ok(&self) -> bool {
        self.l_frame && self.premises_valid && self.conclusions_refuted && self.pseudoextensible
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "ok": self.ok(),
            "l_frame": self.l_frame,
            "premises_valid": self.premises_valid,
            "conclusions_refuted": self.conclusions_refuted,
            "pseudoextensible": self.pseudoextensible,
            "size": self.size,
            "size_bound": self.size_bound.to_string(),
        })
    }
}

/// Checks that `m` witnesses non-admissibility of `rule` in `L`.
pub fn check_certificate(logic: &LogicSpec, rule: &Rule, m: &Model) -> Result<CertificateReport, TypeError> {
    check_params(logic, rule.formulas())?;
    let l_frame = logic.is_l_frame(m);
    let mut premises_valid = true;
    for g in &rule.premises {
        premises_valid &= m.valid(g)?;
    }
    let mut conclusions_refuted = true;
    for d in &rule.conclusions {
        conclusions_refuted &= !m.valid(d)?;
    }
    let ctx = SigmaContext::new(rule.premises.iter())?;
    let types: BTreeSet<u64> = ctx.model_types(m)?.into_iter().collect();
    let pseudoextensible = pseudo_violation(&ctx, &types, &logic.base()).is_none();
    let st = crate::formula::stats(&rule.premises, &rule.conclusions);
    Ok(CertificateReport {
        l_frame,
        premises_valid,
        conclusions_refuted,
        pseudoextensible,
        size: m.len(),
        size_bound: st.model_bound(),
    })
}

/// Whether the premises have a unifier.
pub fn unifiable(logic: &LogicSpec, gamma: &[Formula]) -> Result<bool, TypeError> {
    let rule = Rule::new(gamma.to_vec(), vec![]);
    let s = setup(logic, &rule)?;
    Ok(witness_set(&s, logic, &rule, &mut |u| projective_branches(&s.ctx, logic, u))?.is_some())
}

/// A complete set of unifiers: one projective unifier per member of the
/// projective approximation of the conjunction.
pub fn unify(logic: &LogicSpec, gamma: &[Formula]) -> Result<Vec<(Formula, Unifier)>, TypeError> {
    let rule = Rule::new(gamma.to_vec(), vec![]);
    let s = setup(logic, &rule)?;
    Ok(crate::projective::approximate(&s.ctx, logic, &s.start)?
        .into_iter()
        .map(|m| (m.formula, m.unifier))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnificationType {
    Unitary,
    Finitary,
}

impl fmt::Display for UnificationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnificationType::Unitary => write!(f, "unitary"),
            UnificationType::Finitary => write!(f, "finitary"),
        }
    }
}

pub fn unification_type(logic: &LogicSpec) -> UnificationType {
    if logic.is_linear() {
        UnificationType::Unitary
    } else {
        UnificationType::Finitary
    }
}

/// `◇⊡x → □⋄̇x`, the axiom of K4.2 with dotted modalities.
pub fn directed_axiom() -> Formula {
    let x = Formula::var("x");
    Formula::imp(Formula::dia(Formula::boxdot(x.clone())), Formula::nec(Formula::dotdia(x)))
}

pub fn directed(logic: &LogicSpec) -> Result<bool, TypeError> {
    crate::typecore::tautology(logic, &directed_axiom())
}

/// Parameter assignments as a low-bit mask helper for callers.
pub fn param_mask(np: usize) -> u64 {
    low_mask(np)
}
