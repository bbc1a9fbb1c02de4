//! Finite transitive Kripke models with parameter and variable atoms.
//!
//! The accessibility relation is stored transitively closed, with a
//! self-loop on every reflexive point, so `succ(u)` is exactly the strict
//! up-set `u↑` and `u⇑ = succ(u) ∪ {u}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::formula::{Atom, AtomKind, Formula, Rule, Substitution};

// ---------------------------------------------------------------------------
// Point sets
// ---------------------------------------------------------------------------

/// A set of point indices as a bitset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointSet {
    words: SmallVec<[u64; 2]>,
}

impl PointSet {
    pub fn empty(n: usize) -> PointSet {
        PointSet { words: SmallVec::from_elem(0, n.div_ceil(64)) }
    }

    pub fn full(n: usize) -> PointSet {
        let mut s = PointSet::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub fn from_iter<I: IntoIterator<Item = usize>>(n: usize, items: I) -> PointSet {
        let mut s = PointSet::empty(n);
        for i in items {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + b)
            })
        })
    }

    pub fn union_with(&mut self, other: &PointSet) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= *b;
        }
    }

    pub fn intersect_with(&mut self, other: &PointSet) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a &= *b;
        }
    }

    pub fn difference_with(&mut self, other: &PointSet) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a &= !*b;
        }
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.words.iter().zip(other.words.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn intersects(&self, other: &PointSet) -> bool {
        self.words.iter().zip(other.words.iter()).any(|(a, b)| a & b != 0)
    }

    fn complement(&self, n: usize) -> PointSet {
        let mut s = PointSet::full(n);
        s.difference_with(self);
        s
    }
}

// ---------------------------------------------------------------------------
// Errors and frame types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("edge endpoint '{0}' is not a point")]
    DanglingEdge(String),
    #[error("duplicate point id '{0}'")]
    DuplicatePoint(String),
    #[error("unknown atom '{0}'")]
    UnknownAtom(String),
    #[error("atom '{0}' has a non-boolean value")]
    NonBoolean(String),
    #[error("valuation search over {vars} variables and {points} points exceeds the cap")]
    CapExceeded { vars: usize, points: usize },
    #[error("malformed model document: {0}")]
    Json(String),
}

/// Type of a cluster: `•`, `(k)` or `(∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterType {
    Irreflexive,
    Reflexive(usize),
    ReflexiveUnbounded,
}

impl ClusterType {
    pub fn is_reflexive(&self) -> bool {
        !matches!(self, ClusterType::Irreflexive)
    }
}

impl fmt::Display for ClusterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterType::Irreflexive => write!(f, "•"),
            ClusterType::Reflexive(k) => write!(f, "({k})"),
            ClusterType::ReflexiveUnbounded => write!(f, "(∞)"),
        }
    }
}

/// Root cluster type and number of immediate successor clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameType {
    pub cluster: ClusterType,
    pub n: usize,
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{},{}⟩", self.cluster, self.n)
    }
}

/// Which kind of tight (pseudo)predecessor to look for. Parameter
/// assignments are bitmasks over the parameter list passed alongside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TpSpec {
    Irreflexive(u64),
    Reflexive(Vec<u64>),
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    params: Vec<String>,
    vars: Vec<String>,
    ids: Vec<String>,
    reflexive: Vec<bool>,
    succ: Vec<PointSet>,
    /// Extension of each atom; parameters first, then variables.
    val: Vec<PointSet>,
    cluster_of: Vec<usize>,
    clusters: Vec<Vec<usize>>,
    /// Immediate successor clusters of each cluster.
    imm: Vec<Vec<usize>>,
}

/// Incremental construction of a [`Model`]; edges are closed on `build`.
#[derive(Clone, Debug, Default)]
pub struct ModelBuilder {
    params: Vec<String>,
    vars: Vec<String>,
    ids: Vec<String>,
    reflexive: Vec<bool>,
    atoms: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl ModelBuilder {
    pub fn new(params: Vec<String>, vars: Vec<String>) -> ModelBuilder {
        ModelBuilder { params, vars, ..Default::default() }
    }

    fn atom_index(&self, a: &Atom) -> Option<usize> {
        match a.kind {
            AtomKind::Parameter => self.params.iter().position(|p| *p == a.name),
            AtomKind::Variable => {
                self.vars.iter().position(|v| *v == a.name).map(|i| i + self.params.len())
            }
        }
    }

    /// Adds a point; returns its index.
    pub fn add_point<'a, I>(&mut self, reflexive: bool, true_atoms: I) -> Result<usize, ModelError>
    where
        I: IntoIterator<Item = &'a Atom>,
    {
        let id = format!("w{}", self.ids.len());
        self.add_named_point(id, reflexive, true_atoms)
    }

    pub fn add_named_point<'a, I>(
        &mut self,
        id: String,
        reflexive: bool,
        true_atoms: I,
    ) -> Result<usize, ModelError>
    where
        I: IntoIterator<Item = &'a Atom>,
    {
        let mut idx = Vec::new();
        for a in true_atoms {
            idx.push(self.atom_index(a).ok_or_else(|| ModelError::UnknownAtom(a.to_string()))?);
        }
        self.ids.push(id);
        self.reflexive.push(reflexive);
        self.atoms.push(idx);
        Ok(self.ids.len() - 1)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        self.edges.push((u, v));
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn build(self) -> Model {
        let n = self.ids.len();
        let mut reach: Vec<PointSet> = vec![PointSet::empty(n); n];
        for &(u, v) in &self.edges {
            reach[u].insert(v);
        }
        for (u, r) in self.reflexive.iter().enumerate() {
            if *r {
                reach[u].insert(u);
            }
        }
        for k in 0..n {
            let rk = reach[k].clone();
            for row in reach.iter_mut() {
                if row.contains(k) {
                    row.union_with(&rk);
                }
            }
        }
        let reflexive: Vec<bool> = (0..n).map(|u| reach[u].contains(u)).collect();
        let natoms = self.params.len() + self.vars.len();
        let mut val = vec![PointSet::empty(n); natoms];
        for (u, atoms) in self.atoms.iter().enumerate() {
            for &a in atoms {
                val[a].insert(u);
            }
        }
        Model::assemble(self.params, self.vars, self.ids, reflexive, reach, val)
    }
}

impl Model {
    fn assemble(
        params: Vec<String>,
        vars: Vec<String>,
        ids: Vec<String>,
        reflexive: Vec<bool>,
        succ: Vec<PointSet>,
        val: Vec<PointSet>,
    ) -> Model {
        let n = ids.len();
        let mut cluster_of = vec![usize::MAX; n];
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for u in 0..n {
            if cluster_of[u] != usize::MAX {
                continue;
            }
            let id = clusters.len();
            let mut members = vec![u];
            cluster_of[u] = id;
            for v in u + 1..n {
                if succ[u].contains(v) && succ[v].contains(u) {
                    cluster_of[v] = id;
                    members.push(v);
                }
            }
            clusters.push(members);
        }
        let mut imm = Vec::with_capacity(clusters.len());
        for members in &clusters {
            let rep = members[0];
            let above: Vec<usize> =
                succ[rep].iter().filter(|&v| cluster_of[v] != cluster_of[rep]).collect();
            let mut ids: Vec<usize> = above
                .iter()
                .filter(|&&k| {
                    !above.iter().any(|&v| succ[v].contains(k) && !succ[k].contains(v))
                })
                .map(|&k| cluster_of[k])
                .collect();
            ids.sort_unstable();
            ids.dedup();
            imm.push(ids);
        }
        Model { params, vars, ids, reflexive, succ, val, cluster_of, clusters, imm }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn id(&self, u: usize) -> &str {
        &self.ids[u]
    }

    pub fn is_reflexive(&self, u: usize) -> bool {
        self.reflexive[u]
    }

    /// `u↑`: the points `u` sees (including `u` when reflexive).
    pub fn succ(&self, u: usize) -> &PointSet {
        &self.succ[u]
    }

    pub fn sees(&self, u: usize, v: usize) -> bool {
        self.succ[u].contains(v)
    }

    /// `X⇑`.
    pub fn up_closure(&self, xs: &[usize]) -> PointSet {
        let mut s = PointSet::empty(self.len());
        for &x in xs {
            s.insert(x);
            s.union_with(&self.succ[x]);
        }
        s
    }

    pub fn atom_index(&self, a: &Atom) -> Option<usize> {
        match a.kind {
            AtomKind::Parameter => self.params.iter().position(|p| *p == a.name),
            AtomKind::Variable => {
                self.vars.iter().position(|v| *v == a.name).map(|i| i + self.params.len())
            }
        }
    }

    pub fn atoms(&self) -> Vec<Atom> {
        self.params
            .iter()
            .map(|p| Atom::par(p.clone()))
            .chain(self.vars.iter().map(|v| Atom::var(v.clone())))
            .collect()
    }

    pub fn truth(&self, a: &Atom) -> Option<&PointSet> {
        self.atom_index(a).map(|i| &self.val[i])
    }

    pub fn true_atoms(&self, u: usize) -> Vec<Atom> {
        self.atoms().into_iter().enumerate().filter(|(i, _)| self.val[*i].contains(u)).map(|(_, a)| a).collect()
    }

    /// Bitmask of the parameters in `ps` true at `u`; unknown names are false.
    pub fn params_at(&self, u: usize, ps: &[String]) -> u64 {
        let mut e = 0u64;
        for (i, p) in ps.iter().enumerate() {
            if self.truth(&Atom::par(p.clone())).is_some_and(|s| s.contains(u)) {
                e |= 1 << i;
            }
        }
        e
    }

    pub fn cluster_of(&self, u: usize) -> usize {
        self.cluster_of[u]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster(&self, u: usize) -> &[usize] {
        &self.clusters[self.cluster_of[u]]
    }

    /// Immediate successor clusters of cluster `c`.
    pub fn immediate(&self, c: usize) -> &[usize] {
        &self.imm[c]
    }

    fn cluster_sees(&self, c: usize, d: usize) -> bool {
        c != d && self.sees(self.clusters[c][0], self.clusters[d][0])
    }

    pub fn cluster_type(&self, u: usize) -> ClusterType {
        if self.reflexive[u] {
            ClusterType::Reflexive(self.cluster(u).len())
        } else {
            ClusterType::Irreflexive
        }
    }

    /// Type of the submodel generated by `u`.
    pub fn type_of(&self, u: usize) -> FrameType {
        FrameType { cluster: self.cluster_type(u), n: self.imm[self.cluster_of[u]].len() }
    }

    /// Length of the longest chain of clusters.
    pub fn depth(&self) -> usize {
        let mut memo = vec![0usize; self.clusters.len()];
        let mut order: Vec<usize> = (0..self.clusters.len()).collect();
        // clusters seeing more points come first in any chain
        order.sort_by_key(|&c| self.succ[self.clusters[c][0]].len());
        for &c in &order {
            let best = self.imm[c].iter().map(|&d| memo[d]).max().unwrap_or(0);
            memo[c] = best + 1;
        }
        memo.into_iter().max().unwrap_or(0)
    }

    pub fn branching(&self) -> usize {
        self.imm.iter().map(|v| v.len()).max().unwrap_or(0)
    }

    pub fn max_cluster(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// Largest antichain inside some rooted subframe.
    pub fn width(&self) -> usize {
        (0..self.clusters.len())
            .map(|c| {
                let rep = self.clusters[c][0];
                let mut cs: Vec<usize> =
                    self.up_closure(&[rep]).iter().map(|v| self.cluster_of[v]).collect();
                cs.sort_unstable();
                cs.dedup();
                self.max_cluster_antichain(&cs)
            })
            .max()
            .unwrap_or(0)
    }

    /// Dilworth: size of a maximum antichain of clusters equals the number
    /// of clusters minus a maximum matching in the comparability graph.
    fn max_cluster_antichain(&self, cs: &[usize]) -> usize {
        let k = cs.len();
        let adj: Vec<Vec<usize>> = (0..k)
            .map(|i| (0..k).filter(|&j| self.cluster_sees(cs[i], cs[j])).collect())
            .collect();
        let mut mate: Vec<Option<usize>> = vec![None; k];
        fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], mate: &mut [Option<usize>]) -> bool {
            for &j in &adj[i] {
                if seen[j] {
                    continue;
                }
                seen[j] = true;
                if mate[j].is_none_or(|m| augment(m, adj, seen, mate)) {
                    mate[j] = Some(i);
                    return true;
                }
            }
            false
        }
        let mut matched = 0;
        for i in 0..k {
            let mut seen = vec![false; k];
            if augment(i, &adj, &mut seen, &mut mate) {
                matched += 1;
            }
        }
        k - matched
    }

    /// Distinct points that are pairwise non-related.
    pub fn is_antichain(&self, xs: &[usize]) -> bool {
        xs.iter().all(|&u| xs.iter().all(|&v| u == v || !self.sees(u, v)))
    }

    /// Roots of the model: points seeing every other point.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.up_closure(&[u]).len() == self.len()).collect()
    }

    /// The submodel on the given points (which should be upward closed for
    /// satisfaction to be preserved).
    pub fn restrict(&self, keep: &[usize]) -> Model {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let index: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let n = keep.len();
        let succ = keep
            .iter()
            .map(|&u| PointSet::from_iter(n, self.succ[u].iter().filter_map(|v| index.get(&v).copied())))
            .collect();
        let val = self
            .val
            .iter()
            .map(|s| PointSet::from_iter(n, s.iter().filter_map(|v| index.get(&v).copied())))
            .collect();
        Model::assemble(
            self.params.clone(),
            self.vars.clone(),
            keep.iter().map(|&u| self.ids[u].clone()).collect(),
            keep.iter().map(|&u| self.reflexive[u]).collect(),
            succ,
            val,
        )
    }

    /// The submodel generated by `u`.
    pub fn generated(&self, u: usize) -> Model {
        let pts: Vec<usize> = self.up_closure(&[u]).iter().collect();
        self.restrict(&pts)
    }

    /// Same frame and parameters, variables replaced by `vars` with the
    /// given extensions.
    pub fn with_vars(&self, vars: Vec<String>, ext: Vec<PointSet>) -> Model {
        let mut m = self.clone();
        m.val.truncate(self.params.len());
        m.val.extend(ext);
        m.vars = vars;
        m
    }

    /// Evaluates formulas; returns the set of points where each is true.
    pub fn eval_all(&self, fs: &[Formula]) -> Result<Vec<PointSet>, ModelError> {
        Compiled::new(fs).eval(self)
    }

    pub fn eval(&self, f: &Formula) -> Result<PointSet, ModelError> {
        Ok(self.eval_all(std::slice::from_ref(f))?.pop().unwrap())
    }

    pub fn sat(&self, u: usize, f: &Formula) -> Result<bool, ModelError> {
        Ok(self.eval(f)?.contains(u))
    }

    /// True iff `f` holds at every point.
    pub fn valid(&self, f: &Formula) -> Result<bool, ModelError> {
        Ok(self.eval(f)?.len() == self.len())
    }

    /// The model `σ(M)`: `x` holds at `u` iff `σ(x)` holds at `u` in `M`.
    pub fn transform(&self, sigma: &Substitution) -> Result<Model, ModelError> {
        let images: Vec<Formula> = self.vars.iter().map(|x| sigma.get(x)).collect();
        let ext = self.eval_all(&images)?;
        Ok(self.with_vars(self.vars.clone(), ext))
    }

    /// The rule under this model's own valuation: all premises globally
    /// true implies some conclusion globally true.
    pub fn rule_holds(&self, rule: &Rule) -> Result<bool, ModelError> {
        let fs: Vec<Formula> = rule.formulas().cloned().collect();
        let ext = self.eval_all(&fs)?;
        Ok(rule_holds_on(self.len(), rule.premises.len(), &ext))
    }

    /// Frame validity of a rule with the parameter valuation fixed: every
    /// valuation of the rule's variables satisfies [`Model::rule_holds`].
    pub fn rule_valid(&self, rule: &Rule) -> Result<bool, ModelError> {
        self.rule_valid_capped(rule, 6, 24)
    }

    pub fn rule_valid_capped(&self, rule: &Rule, max_vars: usize, max_bits: usize) -> Result<bool, ModelError> {
        let vars: Vec<String> = rule.vars().into_iter().collect();
        let n = self.len();
        if vars.len() > max_vars || vars.len() * n > max_bits {
            return Err(ModelError::CapExceeded { vars: vars.len(), points: n });
        }
        for p in rule.params() {
            if self.truth(&Atom::par(p.clone())).is_none() {
                return Err(ModelError::UnknownAtom(format!("${p}")));
            }
        }
        let fs: Vec<Formula> = rule.formulas().cloned().collect();
        let prog = Compiled::new(&fs);
        let bits = vars.len() * n;
        for code in 0u64..(1u64 << bits) {
            let ext: Vec<PointSet> = (0..vars.len())
                .map(|i| PointSet::from_iter(n, (0..n).filter(|u| code >> (i * n + u) & 1 == 1)))
                .collect();
            let m = self.with_vars(vars.clone(), ext);
            let vals = prog.eval(&m)?;
            if !rule_holds_on(n, rule.premises.len(), &vals) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Tight predecessor of `xs` for the given spec, with parameter
    /// assignments read over `ps`.
    pub fn find_tp(&self, xs: &[usize], ps: &[String], spec: &TpSpec) -> Option<Vec<usize>> {
        let target = self.up_closure(xs);
        let n = self.len();
        match spec {
            TpSpec::Irreflexive(e) => (0..n)
                .find(|&u| self.params_at(u, ps) == *e && self.succ[u] == target)
                .map(|u| vec![u]),
            TpSpec::Reflexive(es) => {
                for members in &self.clusters {
                    let rep = members[0];
                    if !self.reflexive[rep] {
                        continue;
                    }
                    let mut above = self.succ[rep].clone();
                    if target.contains(rep) {
                        // the cluster sits inside X⇑; any points of it will do
                        if above != target {
                            continue;
                        }
                        let pick: Option<Vec<usize>> = es
                            .iter()
                            .map(|e| members.iter().copied().find(|&u| self.params_at(u, ps) == *e))
                            .collect();
                        if pick.is_some() {
                            return pick;
                        }
                        continue;
                    }
                    for &m in members {
                        above.remove(m);
                    }
                    if above != target || members.len() != es.len() {
                        continue;
                    }
                    let pick: Option<Vec<usize>> = es
                        .iter()
                        .map(|e| members.iter().copied().find(|&u| self.params_at(u, ps) == *e))
                        .collect();
                    if let Some(p) = pick {
                        let distinct: BTreeSet<usize> = p.iter().copied().collect();
                        if distinct.len() == members.len() {
                            return Some(p);
                        }
                    }
                }
                None
            }
        }
    }

    /// Tight pseudopredecessor of `xs` with respect to the subformula-closed
    /// set `sigma`; parameter assignments are over `Σ ∩ Par` in name order.
    pub fn find_tpp(&self, xs: &[usize], spec: &TpSpec, sigma: &[Formula]) -> Result<Option<Vec<usize>>, ModelError> {
        let ps: Vec<String> = sigma
            .iter()
            .filter_map(|f| match f {
                Formula::Atom(a) if a.is_param() => Some(a.name.clone()),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let boxed: Vec<Formula> = sigma
            .iter()
            .filter_map(|f| match f {
                Formula::Nec(inner) => Some((**inner).clone()),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let nb = boxed.len();
        let mut fs = boxed.clone();
        fs.extend(boxed.iter().map(|b| Formula::nec(b.clone())));
        let ext = self.eval_all(&fs)?;
        let n = self.len();
        let holds = |u: usize, i: usize| ext[i].contains(u);
        let nec = |u: usize, i: usize| ext[nb + i].contains(u);
        // ψ with every w ∈ X satisfying ⊡ψ
        let bx: Vec<bool> = (0..nb).map(|i| xs.iter().all(|&w| holds(w, i) && nec(w, i))).collect();
        let box_profile = |u: usize| -> Vec<bool> { (0..nb).map(|i| nec(u, i)).collect() };
        match spec {
            TpSpec::Irreflexive(e) => {
                Ok((0..n).find(|&u| self.params_at(u, &ps) == *e && box_profile(u) == bx).map(|u| vec![u]))
            }
            TpSpec::Reflexive(es) => {
                let mut profiles: Vec<Vec<bool>> = (0..n).map(box_profile).collect();
                profiles.sort();
                profiles.dedup();
                for beta in profiles {
                    if (0..nb).any(|i| beta[i] && !bx[i]) {
                        continue;
                    }
                    let open: Vec<usize> = (0..nb).filter(|&i| bx[i] && !beta[i]).collect();
                    // per e: candidates with the right box profile satisfying β,
                    // deduplicated by which open formulas they refute
                    let mut cands: Vec<Vec<(u64, usize)>> = Vec::new();
                    for e in es {
                        let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
                        for u in 0..n {
                            if self.params_at(u, &ps) != *e || box_profile(u) != beta {
                                continue;
                            }
                            if (0..nb).any(|i| beta[i] && !holds(u, i)) {
                                continue;
                            }
                            let fails = open
                                .iter()
                                .enumerate()
                                .filter(|(_, &i)| !holds(u, i))
                                .fold(0u64, |acc, (k, _)| acc | 1 << k);
                            seen.entry(fails).or_insert(u);
                        }
                        cands.push(seen.into_iter().collect());
                    }
                    if cands.iter().any(|c| c.is_empty()) {
                        continue;
                    }
                    let want = if open.is_empty() { 0 } else { (1u64 << open.len()) - 1 };
                    if let Some(pick) = cover_search(&cands, want) {
                        return Ok(Some(pick));
                    }
                }
                Ok(None)
            }
        }
    }

    pub fn to_doc(&self) -> ModelDoc {
        let points = (0..self.len())
            .map(|u| PointDoc {
                id: self.ids[u].clone(),
                reflexive: self.reflexive[u],
                true_atoms: TrueAtoms::List(self.true_atoms(u).iter().map(|a| a.to_string()).collect()),
            })
            .collect();
        let mut edges = Vec::new();
        for u in 0..self.len() {
            for v in self.succ[u].iter() {
                if u != v {
                    edges.push((self.ids[u].clone(), self.ids[v].clone()));
                }
            }
        }
        ModelDoc { params: self.params.clone(), vars: self.vars.clone(), points, edges }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Model, ModelError> {
        let mut b = ModelBuilder::new(doc.params.clone(), doc.vars.clone());
        let mut index: HashMap<&str, usize> = HashMap::new();
        for p in &doc.points {
            let names: Vec<String> = match &p.true_atoms {
                TrueAtoms::List(v) => v.clone(),
                TrueAtoms::Map(m) => {
                    let mut out = Vec::new();
                    for (k, v) in m {
                        match v {
                            serde_json::Value::Bool(true) => out.push(k.clone()),
                            serde_json::Value::Bool(false) => {}
                            _ => return Err(ModelError::NonBoolean(k.clone())),
                        }
                    }
                    out
                }
            };
            let mut atoms = Vec::new();
            for name in names {
                let atom = if let Some(stripped) = name.strip_prefix('$') {
                    Atom::par(stripped)
                } else if doc.params.contains(&name) && !doc.vars.contains(&name) {
                    Atom::par(name)
                } else {
                    Atom::var(name)
                };
                atoms.push(atom);
            }
            if index.contains_key(p.id.as_str()) {
                return Err(ModelError::DuplicatePoint(p.id.clone()));
            }
            let u = b.add_named_point(p.id.clone(), p.reflexive, &atoms)?;
            index.insert(&p.id, u);
        }
        for (u, v) in &doc.edges {
            let iu = *index.get(u.as_str()).ok_or_else(|| ModelError::DanglingEdge(u.clone()))?;
            let iv = *index.get(v.as_str()).ok_or_else(|| ModelError::DanglingEdge(v.clone()))?;
            b.add_edge(iu, iv);
        }
        Ok(b.build())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        Model::from_doc(&doc)
    }
}

fn rule_holds_on(n: usize, nprem: usize, ext: &[PointSet]) -> bool {
    let global = |s: &PointSet| s.len() == n;
    !ext[..nprem].iter().all(global) || ext[nprem..].iter().any(global)
}

/// Picks one candidate per slot so that the union of failure masks is `want`.
fn cover_search(cands: &[Vec<(u64, usize)>], want: u64) -> Option<Vec<usize>> {
    fn go(k: usize, acc: u64, cands: &[Vec<(u64, usize)>], want: u64, pick: &mut Vec<usize>) -> bool {
        if k == cands.len() {
            return acc == want;
        }
        for &(mask, u) in &cands[k] {
            pick.push(u);
            if go(k + 1, acc | mask, cands, want, pick) {
                return true;
            }
            pick.pop();
        }
        false
    }
    let mut pick = Vec::new();
    go(0, 0, cands, want, &mut pick).then_some(pick)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrueAtoms {
    List(Vec<String>),
    Map(BTreeMap<String, serde_json::Value>),
}

impl Default for TrueAtoms {
    fn default() -> Self {
        TrueAtoms::List(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointDoc {
    pub id: String,
    #[serde(default)]
    pub reflexive: bool,
    #[serde(default)]
    pub true_atoms: TrueAtoms,
}

/// The JSON form of a model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub vars: Vec<String>,
    pub points: Vec<PointDoc>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

// ---------------------------------------------------------------------------
// Compiled evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Node {
    Bot,
    Atom(Atom),
    Imp(usize, usize),
    Nec(usize),
}

/// A set of formulas flattened into a shared DAG for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Compiled {
    nodes: Vec<Node>,
    roots: Vec<usize>,
}

impl Compiled {
    pub fn new(fs: &[Formula]) -> Compiled {
        let mut memo: HashMap<&Formula, usize> = HashMap::new();
        let mut nodes = Vec::new();
        fn go<'a>(f: &'a Formula, memo: &mut HashMap<&'a Formula, usize>, nodes: &mut Vec<Node>) -> usize {
            if let Some(&i) = memo.get(f) {
                return i;
            }
            let node = match f {
                Formula::Bot => Node::Bot,
                Formula::Atom(a) => Node::Atom(a.clone()),
                Formula::Imp(a, b) => {
                    let ia = go(a, memo, nodes);
                    let ib = go(b, memo, nodes);
                    Node::Imp(ia, ib)
                }
                Formula::Nec(a) => Node::Nec(go(a, memo, nodes)),
            };
            nodes.push(node);
            memo.insert(f, nodes.len() - 1);
            nodes.len() - 1
        }
        let roots = fs.iter().map(|f| go(f, &mut memo, &mut nodes)).collect();
        Compiled { nodes, roots }
    }

    pub fn eval(&self, m: &Model) -> Result<Vec<PointSet>, ModelError> {
        let n = m.len();
        let mut ext: Vec<PointSet> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let s = match node {
                Node::Bot => PointSet::empty(n),
                Node::Atom(a) => m.truth(a).cloned().ok_or_else(|| ModelError::UnknownAtom(a.to_string()))?,
                Node::Imp(a, b) => {
                    let mut s = ext[*a].complement(n);
                    s.union_with(&ext[*b]);
                    s
                }
                Node::Nec(a) => {
                    let inner = &ext[*a];
                    PointSet::from_iter(n, (0..n).filter(|&u| m.succ[u].is_subset(inner)))
                }
            };
            ext.push(s);
        }
        Ok(self.roots.iter().map(|&r| ext[r].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, parse_rule};

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    /// Builds a parameter-free model from reflexivity flags, edges and the
    /// points where `x` holds.
    fn frame(refl: &[bool], edges: &[(usize, usize)], x: &[usize]) -> Model {
        let mut b = ModelBuilder::new(vec!["p".into()], vec!["x".into()]);
        let xa = Atom::var("x");
        for (u, r) in refl.iter().enumerate() {
            let atoms: Vec<&Atom> = if x.contains(&u) { vec![&xa] } else { vec![] };
            b.add_point(*r, atoms).unwrap();
        }
        for &(u, v) in edges {
            b.add_edge(u, v);
        }
        b.build()
    }

    #[test]
    fn load_examples() {
        let m = Model::from_json(r#"{"points":[{"id":"u"}]}"#).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.succ(0).is_empty());

        let m = Model::from_json(r#"{"points":[{"id":"u"},{"id":"v"}],"edges":[["u","v"],["v","u"]]}"#).unwrap();
        assert_eq!(m.clusters().len(), 1);
        assert!(m.is_reflexive(0) && m.is_reflexive(1));
        assert_eq!(m.type_of(0), FrameType { cluster: ClusterType::Reflexive(2), n: 0 });

        let m = Model::from_json(r#"{"points":[{"id":"u"},{"id":"v"},{"id":"w"}],"edges":[["u","v"],["v","w"]]}"#)
            .unwrap();
        assert!(m.sees(0, 2));
        let again = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            Model::from_json(r#"{"points":[{"id":"u"}],"edges":[["u","z"]]}"#),
            Err(ModelError::DanglingEdge(_))
        ));
        assert!(matches!(
            Model::from_json(r#"{"vars":["x"],"points":[{"id":"u","true_atoms":{"x":3}}]}"#),
            Err(ModelError::NonBoolean(_))
        ));
        assert!(matches!(
            Model::from_json(r#"{"points":[{"id":"u","true_atoms":["q"]}]}"#),
            Err(ModelError::UnknownAtom(_))
        ));
    }

    #[test]
    fn satisfaction() {
        let irr = frame(&[false], &[], &[]);
        assert!(irr.sat(0, &f("[]false")).unwrap());
        let refl = frame(&[true], &[], &[0]);
        assert!(refl.sat(0, &f("[.]x")).unwrap());
        let chain = frame(&[false, false], &[(0, 1)], &[1]);
        assert!(chain.sat(0, &f("<>x")).unwrap());
        assert!(!chain.sat(0, &f("x")).unwrap());
        assert!(matches!(chain.sat(0, &f("zz")), Err(ModelError::UnknownAtom(_))));
    }

    #[test]
    fn frame_statistics() {
        let chain = frame(&[false; 3], &[(0, 1), (1, 2)], &[]);
        assert_eq!(chain.type_of(0), FrameType { cluster: ClusterType::Irreflexive, n: 1 });
        assert_eq!(chain.depth(), 3);
        let fork = frame(&[false; 3], &[(0, 1), (0, 2)], &[]);
        assert_eq!(fork.type_of(0).n, 2);
        assert_eq!((fork.branching(), fork.width(), fork.depth()), (2, 2, 2));
        let cl = frame(&[true, true], &[(0, 1), (1, 0)], &[]);
        assert_eq!((cl.depth(), cl.max_cluster(), cl.width()), (1, 2, 1));
    }

    #[test]
    fn transform_basics() {
        let m = frame(&[false, true], &[(0, 1)], &[1]);
        assert_eq!(m.transform(&Substitution::identity()).unwrap(), m);
        let top = Substitution::from_pairs([("x".to_string(), Formula::top())]);
        let t = m.transform(&top).unwrap();
        assert_eq!(t.truth(&Atom::var("x")).unwrap().len(), 2);
        let bx = Substitution::from_pairs([("x".to_string(), f("[]x"))]);
        let t = m.transform(&bx).unwrap();
        assert!(t.sat(0, &f("x")).unwrap());
    }

    #[test]
    fn rule_validity() {
        let m = frame(&[false, false], &[(0, 1)], &[]);
        assert!(m.rule_valid(&parse_rule("x / x").unwrap()).unwrap());
        let irr = frame(&[false], &[], &[]);
        assert!(!irr.rule_valid(&parse_rule("[]false / false").unwrap()).unwrap());
        let fork = frame(&[false; 3], &[(0, 1), (0, 2)], &[]);
        let ext2 = parse_rule("[]y -> []x0 | []x1 / [.]y -> x0, [.]y -> x1").unwrap();
        // the two leaves have the root as tp; each leaf alone has no tp
        // (leaves see nothing, and only an irreflexive predecessor of one
        // leaf would do)
        assert!(!fork.rule_valid(&ext2).unwrap());
    }

    #[test]
    fn tight_predecessors() {
        // reflexive smallest element is its own tp
        let mut b = ModelBuilder::new(vec!["p".into()], vec![]);
        let p = Atom::par("p");
        b.add_point(true, [&p]).unwrap();
        let m = b.build();
        let ps = vec!["p".to_string()];
        assert_eq!(m.find_tp(&[0], &ps, &TpSpec::Reflexive(vec![1])), Some(vec![0]));
        assert_eq!(m.find_tp(&[0], &ps, &TpSpec::Irreflexive(1)), Some(vec![0]));
        assert_eq!(m.find_tp(&[0], &ps, &TpSpec::Irreflexive(0)), None);

        let fork = frame(&[false; 3], &[(0, 1), (0, 2)], &[]);
        assert_eq!(fork.find_tp(&[1, 2], &ps, &TpSpec::Irreflexive(0)), Some(vec![0]));
        let anti = frame(&[false; 2], &[], &[]);
        assert_eq!(anti.find_tp(&[0, 1], &ps, &TpSpec::Irreflexive(0)), None);
    }

    #[test]
    fn tp_is_tpp() {
        let fork = frame(&[false, true, false], &[(0, 1), (0, 2)], &[1]);
        let sigma = crate::formula::subformulas([&f("[]x -> [](x | $p)"), &f("$p")]);
        let ps = vec!["p".to_string()];
        for xs in [vec![1, 2], vec![1], vec![2], vec![]] {
            for spec in [TpSpec::Irreflexive(0), TpSpec::Reflexive(vec![0])] {
                if fork.find_tp(&xs, &ps, &spec).is_some() {
                    assert!(fork.find_tpp(&xs, &spec, &sigma).unwrap().is_some());
                }
            }
        }
        // X = ∅: any point with e satisfying every □ψ
        let sigma = crate::formula::subformulas([&f("[]x")]);
        assert_eq!(fork.find_tpp(&[], &TpSpec::Irreflexive(0), &sigma).unwrap(), Some(vec![1]));
    }
}
