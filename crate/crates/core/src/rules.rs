//! Extension rules, their variants, and bases of admissible rules.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::json;

use crate::formula::{param_literal_conj, subformulas, Formula, Rule};
use crate::logic::{ClusterType, Count, ExtensionCondition, LogicSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Ext,
    /// Antichains of size exactly `n`.
    ExtEq,
    /// Single-conclusion form with a side variable.
    ExtVee,
    /// `ExtVee` applied to `ExtEq`.
    ExtEqVee,
    /// `Γ / Δ, ⊥`.
    ExtBot,
    /// Instances over a fixed subformula set; not a schema.
    PExt,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Ext => "Ext",
            Family::ExtEq => "Ext=",
            Family::ExtVee => "Ext∨",
            Family::ExtEqVee => "Ext=∨",
            Family::ExtBot => "Ext⊥",
            Family::PExt => "PExt",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Irreflexive,
    Reflexive,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Irreflexive => "•",
            Polarity::Reflexive => "◦",
        })
    }
}

/// Names one rule of a family. Valuations are bitmasks over `params`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleSchemaId {
    pub family: Family,
    pub polarity: Polarity,
    pub n: usize,
    pub params: Vec<String>,
    pub e: Vec<u64>,
    pub e0: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rule id: {0}")]
pub struct InvalidId(pub String);

fn valuation_text(params: &[String], e: u64) -> String {
    if params.is_empty() {
        return "⊤".into();
    }
    params
        .iter()
        .enumerate()
        .map(|(i, p)| if e >> i & 1 == 1 { format!("${p}") } else { format!("!${p}") })
        .collect::<Vec<_>>()
        .join("&")
}

impl fmt::Display for RuleSchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let es: Vec<String> = self.e.iter().map(|&e| valuation_text(&self.params, e)).collect();
        write!(f, "{}({},{},{{{}}}", self.family, self.polarity, self.n, es.join(", "))?;
        if let Some(e0) = self.e0 {
            write!(f, ",{}", valuation_text(&self.params, e0))?;
        }
        write!(f, ")")
    }
}

impl RuleSchemaId {
    pub fn irreflexive(family: Family, n: usize, params: &[String], e: u64) -> RuleSchemaId {
        RuleSchemaId { family, polarity: Polarity::Irreflexive, n, params: params.to_vec(), e: vec![e], e0: None }
    }

    pub fn reflexive(family: Family, n: usize, params: &[String], e: &[u64], e0: Option<u64>) -> RuleSchemaId {
        RuleSchemaId { family, polarity: Polarity::Reflexive, n, params: params.to_vec(), e: e.to_vec(), e0 }
    }

    fn equality_form(&self) -> bool {
        matches!(self.family, Family::ExtEq | Family::ExtEqVee)
    }

    pub fn validate(&self) -> Result<(), InvalidId> {
        let bad = |why: &str| Err(InvalidId(format!("{self}: {why}")));
        if self.family == Family::PExt {
            return bad("PExt rules are instances, see pext_rules");
        }
        if self.params.len() > 6 {
            return bad("too many parameters");
        }
        let top = 1u64 << self.params.len();
        if self.e.is_empty() || self.e.iter().any(|&e| e >= top) || self.e.windows(2).any(|w| w[0] >= w[1]) {
            return bad("E must be a nonempty sorted set of valuations");
        }
        match self.polarity {
            Polarity::Irreflexive => {
                if self.e.len() != 1 || self.e0.is_some() {
                    return bad("irreflexive rules take a single valuation");
                }
            }
            Polarity::Reflexive if self.equality_form() => {
                if self.n == 1 || self.e0.is_some() {
                    return bad("reflexive equality rules need n ≠ 1 and no e0");
                }
            }
            Polarity::Reflexive => match self.e0 {
                Some(e0) if self.e.contains(&e0) => {}
                _ => return bad("e0 must belong to E"),
            },
        }
        Ok(())
    }
}

fn lits(params: &[String], e: u64) -> Formula {
    let on: BTreeSet<String> =
        params.iter().enumerate().filter(|(i, _)| e >> i & 1 == 1).map(|(_, p)| p.clone()).collect();
    param_literal_conj(params, &on)
}

/// `a → b`, dropping a trivial guard.
fn guarded(a: Formula, b: Formula) -> Formula {
    if a.is_top() {
        b
    } else {
        Formula::imp(a, b)
    }
}

fn xs(n: usize) -> Vec<Formula> {
    (0..n).map(|i| Formula::var(format!("x{i}"))).collect()
}

/// The schema instance with canonical variables `y`, `x0..`, `z`.
pub fn ext_rule(id: &RuleSchemaId) -> Result<Rule, InvalidId> {
    id.validate()?;
    let y = Formula::var("y");
    let x = xs(id.n);
    let mut front = Vec::new();
    match id.polarity {
        Polarity::Irreflexive => {
            front.push(lits(&id.params, id.e[0]));
            front.push(Formula::nec(y.clone()));
        }
        Polarity::Reflexive => {
            if let Some(e0) = id.e0 {
                front.push(lits(&id.params, e0));
            }
            let ups = Formula::disj(id.e.iter().map(|&e| Formula::nec(guarded(lits(&id.params, e), y.clone()))));
            front.push(Formula::boxdot(Formula::imp(y.clone(), ups)));
            let downs = Formula::disj(
                id.e.iter().map(|&e| Formula::nec(guarded(lits(&id.params, e), Formula::nec(y.clone())))),
            );
            front.push(Formula::boxdot(Formula::imp(downs, y.clone())));
        }
    }
    front.retain(|f| !f.is_top());
    let premise = Formula::imp(Formula::conj(front), Formula::disj(x.iter().cloned().map(Formula::nec)));
    let conclusions: Vec<Formula> = if id.equality_form() {
        (0..id.n)
            .map(|i| {
                let rest = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f.clone());
                Formula::imp(Formula::boxdot(Formula::conj(std::iter::once(y.clone()).chain(rest))), x[i].clone())
            })
            .collect()
    } else {
        x.iter().map(|xi| Formula::imp(Formula::boxdot(y.clone()), xi.clone())).collect()
    };
    let base = Rule::new(vec![premise], conclusions);
    Ok(match id.family {
        Family::Ext | Family::ExtEq => base,
        Family::ExtVee | Family::ExtEqVee => vee(&base, "z"),
        Family::ExtBot => bot(&base),
        Family::PExt => unreachable!(),
    })
}

/// `□z ∨ ⋀□γ / z ∨ ⋁□δ` with `z` fresh.
pub fn vee(rule: &Rule, side: &str) -> Rule {
    let z = Formula::var(side);
    let prem = Formula::or(Formula::nec(z.clone()), Formula::conj(rule.premises.iter().cloned().map(Formula::nec)));
    let conc = Formula::disj(std::iter::once(z).chain(rule.conclusions.iter().cloned().map(Formula::nec)));
    Rule::new(vec![prem], vec![conc])
}

pub fn bot(rule: &Rule) -> Rule {
    let mut c = rule.conclusions.clone();
    c.push(Formula::bot());
    Rule::new(rule.premises.clone(), c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    MultiConclusion,
    SingleConclusion,
    /// Independent multiple-conclusion basis.
    Independent,
    /// Independent single-conclusion basis of a non-linear logic.
    IndependentSingle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisCaps {
    /// Largest `n` emitted when branching is unbounded.
    pub max_n: usize,
    /// Number of parameters used when the parameter set is infinite.
    pub max_params: usize,
}

impl Default for BasisCaps {
    fn default() -> Self {
        BasisCaps { max_n: 3, max_params: 1 }
    }
}

const PARAM_NAMES: &[&str] = &["p", "q", "r", "s"];

fn param_names(logic: &LogicSpec, caps: &BasisCaps) -> Vec<String> {
    match logic.declared_params() {
        Some(ps) => ps.to_vec(),
        None => (0..caps.max_params)
            .map(|i| PARAM_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("p{i}")))
            .collect(),
    }
}

/// Nonempty subsets of `0..2^np` with the given size bounds, ordered by
/// size and then lexicographically.
fn valuation_sets(np: usize, min: usize, max: usize) -> Vec<Vec<u64>> {
    let m = 1usize << np;
    let mut out: Vec<Vec<u64>> = (1u64..1 << m)
        .map(|s| (0..m as u64).filter(|&e| s >> e & 1 == 1).collect::<Vec<_>>())
        .filter(|v: &Vec<u64>| v.len() >= min && v.len() <= max)
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Reflexive cluster sizes `k ≤ 2^|P|` with a type-`⟨(k),n⟩` frame.
fn cluster_sizes(logic: &LogicSpec, n: usize, np: usize) -> Vec<usize> {
    (1..=1usize << np).filter(|&k| logic.has_type_frame(&ExtensionCondition::refl(k, n))).collect()
}

fn largest_n(logic: &LogicSpec, caps: &BasisCaps) -> usize {
    logic.bounded_branching().unwrap_or(caps.max_n)
}

/// The rules of `Ext_{C,n}` over `params` for every `⟨C,n⟩` in the
/// admissibility type set, at one `n`.
fn ext_ids_at(logic: &LogicSpec, n: usize, params: &[String], family: Family) -> Vec<RuleSchemaId> {
    let np = params.len();
    let mut out = Vec::new();
    if logic.has_type_frame(&ExtensionCondition::irr(n)) {
        for e in 0..1u64 << np {
            out.push(RuleSchemaId::irreflexive(family, n, params, e));
        }
    }
    if let Some(&k) = cluster_sizes(logic, n, np).last() {
        for es in valuation_sets(np, 1, k) {
            for &e0 in &es {
                out.push(RuleSchemaId::reflexive(family, n, params, &es, Some(e0)));
            }
        }
    }
    out
}

fn contains_s4(logic: &LogicSpec) -> bool {
    logic.extends(&LogicSpec::preset("S4").unwrap())
}

fn contains_d41(logic: &LogicSpec) -> bool {
    let d41 = LogicSpec::preset("D4").unwrap().join(&LogicSpec::preset("K4.1").unwrap());
    logic.extends(&d41)
}

fn independent_ids_at(logic: &LogicSpec, n: usize, params: &[String]) -> Vec<RuleSchemaId> {
    let np = params.len();
    let mut out = Vec::new();
    if logic.has_type_frame(&ExtensionCondition::irr(n)) {
        for e in 0..1u64 << np {
            out.push(RuleSchemaId::irreflexive(Family::ExtEq, n, params, e));
        }
    }
    for k in cluster_sizes(logic, n, np) {
        for es in valuation_sets(np, k, k) {
            if n != 1 {
                out.push(RuleSchemaId::reflexive(Family::ExtEq, n, params, &es, None));
            } else if !(np == 0 && contains_s4(logic)) {
                for &e0 in &es {
                    out.push(RuleSchemaId::reflexive(Family::Ext, n, params, &es, Some(e0)));
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (a.polarity, a.e.len(), &a.e, a.e0).cmp(&(b.polarity, b.e.len(), &b.e, b.e0))
    });
    out
}

fn single_of(id: RuleSchemaId) -> RuleSchemaId {
    let family = match id.family {
        Family::ExtEq => Family::ExtEqVee,
        _ => Family::ExtVee,
    };
    RuleSchemaId { family, ..id }
}

/// A basis of `L`-admissible rules, ordered by `(n, polarity, |E|, E, e0)`.
/// Finite when the branching is bounded and parameters are finite;
/// otherwise `caps` cut it off.
pub fn basis(logic: &LogicSpec, kind: BasisKind, caps: BasisCaps) -> impl Iterator<Item = (RuleSchemaId, Rule)> + '_ {
    let params = param_names(logic, &caps);
    let top = largest_n(logic, &caps);
    let finite_params = logic.declared_params().is_some();
    let linear = logic.is_linear();
    let np = params.len();
    (0..=top)
        .flat_map(move |n| {
            let ids: Vec<RuleSchemaId> = match kind {
                BasisKind::MultiConclusion => ext_ids_at(logic, n, &params, Family::Ext),
                BasisKind::SingleConclusion if linear => match n {
                    0 => ext_ids_at(logic, 0, &params, Family::ExtBot),
                    1 => ext_ids_at(logic, 1, &params, Family::Ext),
                    _ => vec![],
                },
                BasisKind::SingleConclusion => ext_ids_at(logic, n, &params, Family::ExtVee),
                BasisKind::Independent if finite_params => independent_ids_at(logic, n, &params),
                BasisKind::IndependentSingle if finite_params && !linear => independent_ids_at(logic, n, &params)
                    .into_iter()
                    .filter(|id| {
                        !(n == 0 && np == 0 && id.polarity == Polarity::Reflexive && contains_d41(logic))
                    })
                    .map(single_of)
                    .collect(),
                _ => vec![],
            };
            ids
        })
        .map(|id| {
            let rule = ext_rule(&id).expect("generated ids are valid");
            (id, rule)
        })
}

/// `L` has a finite basis iff it has bounded branching and finitely many
/// parameters; inconsistent logics have the empty basis.
pub fn has_finite_basis(logic: &LogicSpec) -> bool {
    if !logic.consistent() {
        return true;
    }
    logic.declared_params().is_some() && logic.bounded_branching().is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PExtError {
    #[error("too many rule instances ({0}); reduce the boxed subformulas")]
    TooMany(usize),
}

const PEXT_CAP: usize = 200_000;

struct PExtCtx {
    params: Vec<String>,
    bodies: Vec<Formula>,
}

impl PExtCtx {
    fn dotboxes(&self, mask: u64) -> Vec<Formula> {
        self.pick(mask).map(Formula::boxdot).collect()
    }

    fn pick(&self, mask: u64) -> impl Iterator<Item = Formula> + '_ {
        self.bodies.iter().enumerate().filter(move |(i, _)| mask >> i & 1 == 1).map(|(_, f)| f.clone())
    }
}

fn submasks_of(m: u64) -> Vec<u64> {
    let mut out = vec![];
    let mut s = m;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & m;
    }
    out.reverse();
    out
}

/// All multisets of `n` submasks of `m` whose union is `m`, as sorted
/// tuples.
fn covers(m: u64, n: usize) -> Vec<Vec<u64>> {
    let subs = submasks_of(m);
    let mut out = Vec::new();
    fn go(subs: &[u64], from: usize, left: usize, acc: &mut Vec<u64>, m: u64, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            if acc.iter().fold(0, |a, b| a | b) == m {
                out.push(acc.clone());
            }
            return;
        }
        for i in from..subs.len() {
            acc.push(subs[i]);
            go(subs, i, left - 1, acc, m, out);
            acc.pop();
        }
    }
    go(&subs, 0, n, &mut Vec::new(), m, &mut out);
    out
}

/// Conclusions of the rules for a split `B+ ∪ B-`; `None` means one
/// conclusion `⋀⊡B+ → ψ` per `ψ ∈ B-`.
fn conclusion_sets(c: &PExtCtx, plus: u64, minus: u64, n: Count) -> Vec<Vec<Formula>> {
    let ante = Formula::conj(c.dotboxes(plus));
    match n {
        Count::Infinite => vec![c.pick(minus).map(|psi| implied(ante.clone(), psi)).collect()],
        Count::Finite(n) => covers(minus, n)
            .into_iter()
            .map(|tuple| {
                tuple.into_iter().map(|bi| implied(ante.clone(), Formula::disj(c.dotboxes(bi)))).collect()
            })
            .collect(),
    }
}

// `a -> b`, or just `b` when `a` is trivially true
fn implied(a: Formula, b: Formula) -> Formula {
    if a.is_top() { b } else { Formula::imp(a, b) }
}

/// `PExt^Σ_T` for `T = base(L)`, with `Σ` the subformula closure of
/// `sigma`.
pub fn pext_rules(logic: &LogicSpec, sigma: &[Formula]) -> Result<Vec<Rule>, PExtError> {
    pext_rules_for(&logic.base(), sigma)
}

pub fn pext_rules_for(base: &[ExtensionCondition], sigma: &[Formula]) -> Result<Vec<Rule>, PExtError> {
    let sub = subformulas(sigma.iter());
    let mut params: Vec<String> = sub
        .iter()
        .filter_map(|f| match f {
            Formula::Atom(a) if a.is_param() => Some(a.name.clone()),
            _ => None,
        })
        .collect();
    params.sort();
    params.dedup();
    let bodies: Vec<Formula> = sub
        .iter()
        .filter_map(|f| match f {
            Formula::Nec(b) => Some((**b).clone()),
            _ => None,
        })
        .collect();
    if bodies.len() > 12 {
        return Err(PExtError::TooMany(usize::MAX));
    }
    let c = PExtCtx { params, bodies };
    let all = (1u64 << c.bodies.len()) - 1;
    let np = c.params.len();
    let mut out: BTreeSet<Rule> = BTreeSet::new();
    let mut order: Vec<Rule> = Vec::new();
    let mut push = |r: Rule, out: &mut BTreeSet<Rule>| -> Result<(), PExtError> {
        if out.insert(r.clone()) {
            order.push(r);
            if order.len() > PEXT_CAP {
                return Err(PExtError::TooMany(order.len()));
            }
        }
        Ok(())
    };
    for t in base {
        for plus in submasks_of(all) {
            let minus = all & !plus;
            if t.n == Count::Infinite && minus == 0 {
                continue;
            }
            let concs = conclusion_sets(&c, plus, minus, t.n);
            let boxed_minus = || c.pick(minus).map(Formula::nec);
            match t.cluster {
                ClusterType::Irreflexive => {
                    for e in 0..1u64 << np {
                        let ante = Formula::conj(
                            std::iter::once(lits(&c.params, e))
                                .chain(c.pick(plus).map(Formula::nec))
                                .filter(|f| !f.is_top()),
                        );
                        let prem = implied(ante, Formula::disj(boxed_minus()));
                        for cs in &concs {
                            push(Rule::new(vec![prem.clone()], cs.clone()), &mut out)?;
                        }
                    }
                }
                ClusterType::Reflexive(_) | ClusterType::ReflexiveUnbounded => {
                    let kmax = match t.cluster {
                        ClusterType::Reflexive(k) => k,
                        _ => usize::MAX,
                    };
                    for es in valuation_sets(np, 1, kmax) {
                        for prems in reflexive_premise_sets(&c, plus, minus, &es)? {
                            for cs in &concs {
                                push(Rule::new(prems.clone(), cs.clone()), &mut out)?;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(order)
}

/// Every choice of `S`, giving one premise per `(D, f)`.
fn reflexive_premise_sets(c: &PExtCtx, plus: u64, minus: u64, es: &[u64]) -> Result<Vec<Vec<Formula>>, PExtError> {
    // the pairs (D, f) with f : D → E, f as a list of E-indices per member of D
    let mut slots: Vec<(u64, Vec<usize>)> = Vec::new();
    for d in submasks_of(plus) {
        let members: Vec<usize> = (0..c.bodies.len()).filter(|i| d >> i & 1 == 1).collect();
        let count = es.len().pow(members.len() as u32);
        for code in 0..count {
            let mut f = Vec::with_capacity(members.len());
            let mut x = code;
            for _ in &members {
                f.push(x % es.len());
                x /= es.len();
            }
            slots.push((d, f));
        }
    }
    let total = (es.len() as f64).powi(slots.len() as i32);
    if total > PEXT_CAP as f64 {
        return Err(PExtError::TooMany(total as usize));
    }
    let premise = |d: u64, f: &[usize], s: usize| {
        let members: Vec<usize> = (0..c.bodies.len()).filter(|i| d >> i & 1 == 1).collect();
        let ante = Formula::conj(
            std::iter::once(lits(&c.params, es[s])).chain(c.dotboxes(plus & !d)).filter(|f| !f.is_top()),
        );
        let hit = members.iter().zip(f).filter(|&(_, &fi)| fi == s).map(|(&i, _)| c.bodies[i].clone());
        let boxed = c.pick(minus | d).map(Formula::nec);
        implied(ante, Formula::disj(hit.chain(boxed)))
    };
    // premises depend on S only through S(f) per slot, so precompute
    let table: Vec<Vec<Formula>> =
        slots.iter().map(|(d, f)| (0..es.len()).map(|s| premise(*d, f, s)).collect()).collect();
    let mut out = Vec::with_capacity(total as usize);
    let mut choice = vec![0usize; slots.len()];
    loop {
        out.push(choice.iter().enumerate().map(|(i, &s)| table[i][s].clone()).collect());
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] < es.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            break;
        }
    }
    Ok(out)
}

pub fn id_json(id: &RuleSchemaId, rule: &Rule) -> serde_json::Value {
    json!({
        "family": id.family.to_string(),
        "polarity": id.polarity.to_string(),
        "n": id.n,
        "params": id.params,
        "E": id.e.iter().map(|&e| valuation_text(&id.params, e)).collect::<Vec<_>>(),
        "e0": id.e0.map(|e| valuation_text(&id.params, e)),
        "id": id.to_string(),
        "rule": rule.to_string(),
    })
}
