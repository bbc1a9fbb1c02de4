//! Extension conditions, logics given by exclusion bases, frame membership
//! and canonical axioms.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::kripke::ClusterType;
use crate::formula::Formula;
use crate::kripke::{FrameType, Model};

/// `n ∈ ω ∪ {∞}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Count {
    Finite(usize),
    Infinite,
}

impl Count {
    /// The order `≤₀`: 0 is incomparable to everything else.
    pub fn leq0(self, other: Count) -> bool {
        match (self, other) {
            (Count::Finite(0), Count::Finite(0)) => true,
            (Count::Finite(0), _) | (_, Count::Finite(0)) => false,
            (_, Count::Infinite) => true,
            (Count::Infinite, Count::Finite(_)) => false,
            (Count::Finite(a), Count::Finite(b)) => a <= b,
        }
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Count::Finite(n) => Some(n),
            Count::Infinite => None,
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Finite(n) => write!(f, "{n}"),
            Count::Infinite => write!(f, "∞"),
        }
    }
}

/// Cluster order: `•` only below itself, `(k) ⪯ (l)` for `k ≤ l`, and
/// `(∞)` on top of the reflexive ones.
pub fn cluster_leq(a: ClusterType, b: ClusterType) -> bool {
    use ClusterType::*;
    match (a, b) {
        (Irreflexive, Irreflexive) => true,
        (Irreflexive, _) | (_, Irreflexive) => false,
        (_, ReflexiveUnbounded) => true,
        (ReflexiveUnbounded, Reflexive(_)) => false,
        (Reflexive(k), Reflexive(l)) => k <= l,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtensionCondition {
    pub cluster: ClusterType,
    pub n: Count,
}

impl ExtensionCondition {
    pub fn new(cluster: ClusterType, n: Count) -> ExtensionCondition {
        ExtensionCondition { cluster, n }
    }

    pub fn irr(n: usize) -> ExtensionCondition {
        ExtensionCondition::new(ClusterType::Irreflexive, Count::Finite(n))
    }

    pub fn refl(k: usize, n: usize) -> ExtensionCondition {
        ExtensionCondition::new(ClusterType::Reflexive(k), Count::Finite(n))
    }

    pub fn is_finite(&self) -> bool {
        self.cluster != ClusterType::ReflexiveUnbounded && self.n != Count::Infinite
    }

    pub fn of_frame_type(t: FrameType) -> ExtensionCondition {
        ExtensionCondition::new(t.cluster, Count::Finite(t.n))
    }

    /// Least common upper bound, when one exists.
    pub fn lub(&self, other: &ExtensionCondition) -> Option<ExtensionCondition> {
        let cluster = if cluster_leq(self.cluster, other.cluster) {
            other.cluster
        } else if cluster_leq(other.cluster, self.cluster) {
            self.cluster
        } else {
            return None;
        };
        let n = if self.n.leq0(other.n) {
            other.n
        } else if other.n.leq0(self.n) {
            self.n
        } else {
            return None;
        };
        Some(ExtensionCondition { cluster, n })
    }
}

/// `⟨C,n⟩ ⪯ ⟨D,m⟩`.
pub fn ec_leq(a: &ExtensionCondition, b: &ExtensionCondition) -> bool {
    cluster_leq(a.cluster, b.cluster) && a.n.leq0(b.n)
}

impl fmt::Display for ExtensionCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{},{}⟩", self.cluster, self.n)
    }
}

// JSON: cluster is "irr", a positive integer, or "inf"; n is an integer or "inf"
#[derive(Serialize, Deserialize)]
struct EcDoc {
    cluster: serde_json::Value,
    n: serde_json::Value,
}

impl Serialize for ExtensionCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let cluster = match self.cluster {
            ClusterType::Irreflexive => serde_json::json!("irr"),
            ClusterType::Reflexive(k) => serde_json::json!(k),
            ClusterType::ReflexiveUnbounded => serde_json::json!("inf"),
        };
        let n = match self.n {
            Count::Finite(n) => serde_json::json!(n),
            Count::Infinite => serde_json::json!("inf"),
        };
        EcDoc { cluster, n }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExtensionCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = EcDoc::deserialize(d)?;
        let cluster = match &doc.cluster {
            serde_json::Value::String(s) if s == "irr" => ClusterType::Irreflexive,
            serde_json::Value::String(s) if s == "inf" => ClusterType::ReflexiveUnbounded,
            serde_json::Value::Number(k) => match k.as_u64() {
                Some(k) if k >= 1 => ClusterType::Reflexive(k as usize),
                _ => return Err(D::Error::custom("cluster size must be a positive integer")),
            },
            other => return Err(D::Error::custom(format!("bad cluster type {other}"))),
        };
        let n = match &doc.n {
            serde_json::Value::String(s) if s == "inf" => Count::Infinite,
            serde_json::Value::Number(k) => match k.as_u64() {
                Some(k) => Count::Finite(k as usize),
                None => return Err(D::Error::custom("n must be a nonnegative integer")),
            },
            other => return Err(D::Error::custom(format!("bad successor count {other}"))),
        };
        Ok(ExtensionCondition { cluster, n })
    }
}

/// Maximal elements of a finite set: the canonical antichain equivalent
/// to it (the closure of a finite set is its downward closure).
pub fn canonical_antichain(ts: &[ExtensionCondition]) -> Vec<ExtensionCondition> {
    let set: BTreeSet<ExtensionCondition> = ts.iter().copied().collect();
    set.iter().copied().filter(|t| !set.iter().any(|u| u != t && ec_leq(t, u))).collect()
}

/// Minimal elements of a finite set.
pub fn minimal_elements(ts: &[ExtensionCondition]) -> Vec<ExtensionCondition> {
    let set: BTreeSet<ExtensionCondition> = ts.iter().copied().collect();
    set.iter().copied().filter(|t| !set.iter().any(|u| u != t && ec_leq(u, t))).collect()
}

/// Canonical antichain of the closure of a downward closed set of finite
/// conditions given by a membership predicate. The predicate must be
/// constant in `k` beyond `max_k` and in `n` beyond `max_n`; the closure
/// rules then fire exactly when the condition just past the horizon is in.
pub fn canonical_antichain_of<F>(member: F, max_k: usize, max_n: usize) -> Vec<ExtensionCondition>
where
    F: Fn(&ExtensionCondition) -> bool,
{
    let ks = max_k + 1;
    let ns = max_n + 1;
    let mut grid = Vec::new();
    let clusters = std::iter::once(ClusterType::Irreflexive)
        .chain((1..=ks).map(ClusterType::Reflexive))
        .chain(std::iter::once(ClusterType::ReflexiveUnbounded));
    for c in clusters {
        for n in (0..=ns).map(Count::Finite).chain(std::iter::once(Count::Infinite)) {
            let probe = ExtensionCondition {
                cluster: if c == ClusterType::ReflexiveUnbounded { ClusterType::Reflexive(ks + 1) } else { c },
                n: if n == Count::Infinite { Count::Finite(ns + 1) } else { n },
            };
            if member(&probe) {
                grid.push(ExtensionCondition { cluster: c, n });
            }
        }
    }
    canonical_antichain(&grid)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamMode {
    Infinite,
    Finite(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("unknown logic '{0}'")]
    UnknownPreset(String),
    #[error("exclusion basis elements must be finite conditions, got {0}")]
    InfiniteExclusion(ExtensionCondition),
    #[error("malformed logic document: {0}")]
    Json(String),
}

/// A cluster-extensible logic, given by its exclusion basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LogicSpec {
    pub name: Option<String>,
    pub xcb: Vec<ExtensionCondition>,
    pub param_mode: ParamMode,
}

#[derive(Serialize, Deserialize)]
struct LogicDoc {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    xcb: Vec<ExtensionCondition>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

const PRESETS: &[&str] = &[
    "K4", "S4", "K4Grz", "S4Grz", "K4.3", "K4BB_k", "K4BC_k", "S4.1.4", "K4B", "S5", "GL", "GL.3", "S4.3",
    "Triv", "Verum", "Form", "D4", "K4.1", "S4.1",
];

fn both(n: usize) -> [ExtensionCondition; 2] {
    [ExtensionCondition::irr(n), ExtensionCondition::refl(1, n)]
}

impl LogicSpec {
    pub fn new(name: Option<String>, xcb: &[ExtensionCondition], param_mode: ParamMode) -> Result<LogicSpec, LogicError> {
        if let Some(t) = xcb.iter().find(|t| !t.is_finite()) {
            return Err(LogicError::InfiniteExclusion(*t));
        }
        Ok(LogicSpec { name, xcb: minimal_elements(xcb), param_mode })
    }

    /// Names of the built-in logics; `_k` stands for a positive integer.
    pub fn preset_names() -> &'static [&'static str] {
        PRESETS
    }

    pub fn preset(name: &str) -> Result<LogicSpec, LogicError> {
        use ExtensionCondition as E;
        let indexed = |prefix: &str| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            let rest = rest.strip_prefix('_').unwrap_or(rest);
            let rest = rest.trim_start_matches('(').trim_end_matches(')');
            rest.parse::<usize>().ok().filter(|k| *k >= 1)
        };
        let s4 = [E::irr(0), E::irr(1)];
        let xcb: Vec<E> = match name {
            "K4" => vec![],
            "S4" => s4.to_vec(),
            "K4Grz" => vec![E::refl(2, 0), E::refl(2, 1)],
            "S4Grz" => vec![E::irr(0), E::irr(1), E::refl(2, 0), E::refl(2, 1)],
            "K4.3" => both(2).to_vec(),
            "S4.1.4" => vec![E::irr(0), E::irr(1), E::refl(2, 1)],
            "K4B" => both(1).to_vec(),
            "S5" => vec![E::irr(0), E::irr(1), E::refl(1, 1)],
            "GL" => vec![E::refl(1, 0), E::refl(1, 1)],
            "GL.3" => vec![E::refl(1, 0), E::refl(1, 1), E::irr(2)],
            "S4.3" => vec![E::irr(0), E::irr(1), E::refl(1, 2)],
            "Triv" => vec![E::irr(0), E::refl(2, 0), E::irr(1), E::refl(1, 1)],
            "Verum" => vec![E::refl(1, 0), E::irr(1), E::refl(1, 1)],
            "Form" => vec![E::irr(0), E::refl(1, 0), E::irr(1), E::refl(1, 1)],
            "D4" => vec![E::irr(0)],
            "K4.1" => vec![E::refl(2, 0)],
            "S4.1" => vec![E::irr(0), E::irr(1), E::refl(2, 0)],
            _ => {
                if let Some(k) = indexed("K4BB") {
                    both(k + 1).to_vec()
                } else if let Some(k) = indexed("K4BC") {
                    vec![E::refl(k + 1, 0), E::refl(k + 1, 1)]
                } else {
                    return Err(LogicError::UnknownPreset(name.to_string()));
                }
            }
        };
        LogicSpec::new(Some(name.to_string()), &xcb, ParamMode::Infinite)
    }

    pub fn from_json(text: &str) -> Result<LogicSpec, LogicError> {
        let doc: LogicDoc = serde_json::from_str(text).map_err(|e| LogicError::Json(e.to_string()))?;
        let mode = match doc.params {
            None => ParamMode::Infinite,
            Some(serde_json::Value::String(s)) if s == "infinite" => ParamMode::Infinite,
            Some(v) => {
                let ps: Vec<String> = serde_json::from_value(v).map_err(|e| LogicError::Json(e.to_string()))?;
                ParamMode::Finite(ps)
            }
        };
        LogicSpec::new(doc.name, &doc.xcb, mode)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let params = match &self.param_mode {
            ParamMode::Infinite => serde_json::json!("infinite"),
            ParamMode::Finite(ps) => serde_json::json!(ps),
        };
        serde_json::json!({ "name": self.name, "xcb": self.xcb, "params": params })
    }

    pub fn with_params(mut self, mode: ParamMode) -> LogicSpec {
        self.param_mode = mode;
        self
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom".to_string())
    }

    /// Membership in `tp(L)` for any condition, finite or not.
    pub fn in_tp(&self, t: &ExtensionCondition) -> bool {
        !self.xcb.iter().any(|x| ec_leq(x, t))
    }

    /// Membership of a finite condition in `tp(L)`.
    pub fn tp_member(&self, t: &ExtensionCondition) -> bool {
        t.is_finite() && self.in_tp(t)
    }

    /// Whether `L` has a finite frame of type `⟨C,n⟩`.
    pub fn has_type_frame(&self, t: &ExtensionCondition) -> bool {
        if !self.tp_member(t) {
            return false;
        }
        t.n == Count::Finite(0)
            || self.tp_member(&ExtensionCondition::irr(0))
            || self.tp_member(&ExtensionCondition::refl(1, 0))
    }

    fn horizon(&self) -> (usize, usize) {
        let k = self
            .xcb
            .iter()
            .filter_map(|t| match t.cluster {
                ClusterType::Reflexive(k) => Some(k),
                _ => None,
            })
            .max()
            .unwrap_or(1);
        let n = self.xcb.iter().filter_map(|t| t.n.finite()).max().unwrap_or(1);
        (k, n)
    }

    /// `base(L)`: maximal elements of `tp(L)`, with `(∞)` and `∞` where
    /// the closure rules fire.
    pub fn base(&self) -> Vec<ExtensionCondition> {
        let (k, n) = self.horizon();
        canonical_antichain_of(|t| self.in_tp(t), k, n)
    }

    pub fn is_linear(&self) -> bool {
        !self.in_tp(&ExtensionCondition::irr(2)) && !self.in_tp(&ExtensionCondition::refl(1, 2))
    }

    /// Least `k` such that frames have branching at most `k`.
    pub fn bounded_branching(&self) -> Option<usize> {
        let (_, n) = self.horizon();
        (0..=n).find(|&k| !self.in_tp(&ExtensionCondition::irr(k + 1)) && !self.in_tp(&ExtensionCondition::refl(1, k + 1)))
    }

    /// Largest reflexive cluster size allowed with `n` successors; `None`
    /// when even `(1)` is excluded.
    pub fn max_cluster(&self, n: usize) -> Option<Count> {
        let t = |c| ExtensionCondition::new(c, Count::Finite(n));
        if !self.in_tp(&t(ClusterType::Reflexive(1))) {
            return None;
        }
        if self.in_tp(&t(ClusterType::ReflexiveUnbounded)) {
            return Some(Count::Infinite);
        }
        let (k, _) = self.horizon();
        (1..=k).rev().find(|&j| self.in_tp(&t(ClusterType::Reflexive(j)))).map(Count::Finite)
    }

    /// A logic is consistent iff it has a one-point frame.
    pub fn consistent(&self) -> bool {
        self.in_tp(&ExtensionCondition::irr(0)) || self.in_tp(&ExtensionCondition::refl(1, 0))
    }

    /// `self ⊇ other`: every condition excluded by `other` is excluded here.
    pub fn extends(&self, other: &LogicSpec) -> bool {
        other.xcb.iter().all(|t| !self.in_tp(t))
    }

    pub fn is_l_frame(&self, m: &Model) -> bool {
        (0..m.len()).all(|u| self.in_tp(&ExtensionCondition::of_frame_type(m.type_of(u))))
    }

    /// Join of logics: exclusion types are united.
    pub fn join(&self, other: &LogicSpec) -> LogicSpec {
        let all: Vec<ExtensionCondition> = self.xcb.iter().chain(other.xcb.iter()).copied().collect();
        LogicSpec { name: None, xcb: minimal_elements(&all), param_mode: self.param_mode.clone() }
    }

    /// Meet among clx logics: exclusion types are intersected.
    pub fn meet_clx(&self, other: &LogicSpec) -> LogicSpec {
        let all: Vec<ExtensionCondition> =
            self.xcb.iter().flat_map(|a| other.xcb.iter().filter_map(move |b| a.lub(b))).collect();
        LogicSpec { name: None, xcb: minimal_elements(&all), param_mode: self.param_mode.clone() }
    }

    /// The axioms over K4.
    pub fn axiomatize(&self) -> Vec<Formula> {
        self.xcb.iter().map(alpha_axiom).collect()
    }

    /// Parameters declared in finite mode.
    pub fn declared_params(&self) -> Option<&[String]> {
        match &self.param_mode {
            ParamMode::Finite(ps) => Some(ps),
            ParamMode::Infinite => None,
        }
    }
}

impl fmt::Display for LogicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.xcb.iter().map(|t| t.to_string()).collect();
        write!(f, "{} [xcb {{{}}}]", self.display_name(), items.join(", "))
    }
}

/// Structural check: the frame has no point whose generated subframe has
/// a type above `t`.
pub fn validates_alpha(m: &Model, t: &ExtensionCondition) -> bool {
    (0..m.len()).all(|u| !ec_leq(t, &ExtensionCondition::of_frame_type(m.type_of(u))))
}

fn v(prefix: &str, i: usize) -> Formula {
    Formula::var(format!("{prefix}{i}"))
}

/// The canonical axiom excluding frames of type `⪰ t`. Panics on
/// infinite conditions.
pub fn alpha_axiom(t: &ExtensionCondition) -> Formula {
    let n = t.n.finite().expect("finite condition");
    match t.cluster {
        ClusterType::Irreflexive => match n {
            0 => Formula::dia(Formula::top()),
            1 => {
                let y = Formula::var("y");
                Formula::imp(Formula::nec(y.clone()), Formula::or(y, Formula::nec(Formula::bot())))
            }
            _ => {
                let mut pairs = Vec::new();
                for j in 0..n {
                    for i in 0..j {
                        pairs.push(Formula::nec(Formula::or(Formula::boxdot(v("x", i)), Formula::boxdot(v("x", j)))));
                    }
                }
                Formula::imp(Formula::conj(pairs), Formula::disj((0..n).map(|i| Formula::nec(v("x", i)))))
            }
        },
        ClusterType::Reflexive(k) if n == 0 => Formula::disj((0..k).map(|e| {
            let ante = Formula::conj((0..e).map(|d| v("y", d)));
            Formula::dotdia(Formula::nec(Formula::imp(ante, v("y", e))))
        })),
        ClusterType::Reflexive(k) => Formula::imp(Formula::boxdot(beta(k, n)), v("y", 0)),
        ClusterType::ReflexiveUnbounded => panic!("finite condition"),
    }
}

fn beta(k: usize, n: usize) -> Formula {
    let mut parts = Vec::new();
    for e in 0..k {
        for d in 0..e {
            parts.push(Formula::or(v("y", d), v("y", e)));
        }
    }
    for d in 0..k {
        for e in 0..k {
            parts.push(Formula::imp(Formula::nec(v("y", d)), v("y", e)));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                parts.push(Formula::or(v("x", i), Formula::boxdot(v("x", j))));
            }
        }
    }
    for e in 0..k {
        for i in 0..n {
            parts.push(Formula::and(
                Formula::imp(Formula::nec(v("x", i)), v("y", e)),
                Formula::or(v("x", i), Formula::boxdot(v("y", e))),
            ));
        }
    }
    for i in 0..n {
        let ante = Formula::and(v("x", i), Formula::conj((0..k).map(|e| v("y", e))));
        parts.push(Formula::imp(ante, Formula::nec(v("x", i))));
    }
    Formula::conj(parts)
}

impl PartialOrd for LogicSpec {
    /// Inclusion of logics.
    fn partial_cmp(&self, other: &LogicSpec) -> Option<Ordering> {
        match (self.extends(other), other.extends(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Greater),
            (false, true) => Some(Ordering::Less),
            (false, false) => None,
        }
    }
}
