//! Projective formulas, Löwenheim unifiers and projective approximations.
//!
//! Projectivity is decided by the model extension property at the level
//! of Σ-types: every way of putting a root cluster (one point per
//! parameter valuation) over models of the formula must admit a choice of
//! variable values making the root types good again. Unifiers are kept in
//! factored form and verified exactly by saturating over the stages of the
//! substitution instead of expanding it.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde_json::json;

use crate::formula::{param_literal_conj, subformulas, Formula, Substitution};
use crate::kripke::{Model, ModelError};
use crate::logic::{ClusterType, Count, ExtensionCondition, LogicSpec};
use crate::typecore::{check_params, low_mask, Saturation, SigmaContext, TypeError};

/// Largest `|V|·2^|P|` for which the table family is enumerated.
pub const TABLE_CAP: usize = 8;

/// One Boolean function of the parameters per variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BooleanTable {
    pub params: Vec<String>,
    pub vars: Vec<String>,
    /// Indexed by parameter assignment (bit `i` for `params[i]`); bit `j`
    /// of a row is the value of `vars[j]`.
    pub rows: Vec<u64>,
}

impl BooleanTable {
    /// Every table over the given atoms, in lexicographic order.
    pub fn all(params: &[String], vars: &[String]) -> Result<Vec<BooleanTable>, TypeError> {
        let np = params.len();
        let nv = vars.len();
        if np > 6 || nv << np > TABLE_CAP {
            return Err(TypeError::ResourceCap(format!("{nv} variables over {np} parameters")));
        }
        let width = nv << np;
        Ok((0..1u64 << width)
            .map(|t| BooleanTable {
                params: params.to_vec(),
                vars: vars.to_vec(),
                rows: (0..1usize << np).map(|e| t >> (e * nv) & low_mask(nv)).collect(),
            })
            .collect())
    }

    pub fn value(&self, e: u64, var: usize) -> bool {
        self.rows[e as usize] >> var & 1 == 1
    }

    /// `d_x` as a full disjunctive normal form over the parameters.
    pub fn dnf(&self, var: usize) -> Formula {
        let terms: Vec<Formula> = (0..self.rows.len() as u64)
            .filter(|&e| self.value(e, var))
            .map(|e| {
                let on: BTreeSet<String> =
                    self.params.iter().enumerate().filter(|(i, _)| e >> i & 1 == 1).map(|(_, p)| p.clone()).collect();
                param_literal_conj(&self.params, &on)
            })
            .collect();
        if terms.is_empty() {
            Formula::bot()
        } else {
            Formula::disj(terms)
        }
    }
}

/// `x ↦ (⊡φ ∧ x) ∨ (¬⊡φ ∧ d_x)` for each variable of the table.
pub fn loewenheim(phi: &Formula, table: &BooleanTable) -> Substitution {
    let guard = Formula::boxdot(phi.clone());
    Substitution::from_pairs(table.vars.iter().enumerate().map(|(j, x)| {
        let keep = Formula::and(guard.clone(), Formula::var(x.clone()));
        let reset = Formula::and(Formula::not(guard.clone()), table.dnf(j));
        (x.clone(), Formula::or(keep, reset))
    }))
}

/// Number of θ rounds guaranteed to unify a projective formula:
/// `(|B|+1)(2^|P|+1)` with `B` its boxed subformulas and `P` its parameters.
pub fn n_bound(phi: &Formula) -> usize {
    let sub = subformulas([phi]);
    let b = sub.iter().filter(|f| matches!(f, Formula::Nec(_))).count();
    let p = phi.params().len().min(20);
    (b + 1) * ((1usize << p) + 1)
}

/// A composite of Löwenheim substitutions `(τ_1 ∘ … ∘ τ_m)^power`, all
/// sharing one guard formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unifier {
    pub guard: Formula,
    pub tables: Vec<BooleanTable>,
    pub power: usize,
}

impl Unifier {
    /// The full θ family for a formula, raised to the given power.
    pub fn theta(phi: &Formula, power: usize) -> Result<Unifier, TypeError> {
        let params: Vec<String> = phi.params().into_iter().collect();
        let vars: Vec<String> = phi.vars().into_iter().collect();
        Ok(Unifier { guard: phi.clone(), tables: BooleanTable::all(&params, &vars)?, power })
    }

    pub fn vars(&self) -> Vec<String> {
        self.tables.first().map(|t| t.vars.clone()).unwrap_or_default()
    }

    pub fn params(&self) -> Vec<String> {
        self.tables.first().map(|t| t.params.clone()).unwrap_or_default()
    }

    pub fn stages(&self) -> usize {
        self.tables.len() * self.power
    }

    /// The factors in application order: the model transform applies the
    /// first factor first.
    pub fn factors(&self) -> Vec<Substitution> {
        let round: Vec<Substitution> = self.tables.iter().map(|t| loewenheim(&self.guard, t)).collect();
        (0..self.power).flat_map(|_| round.iter().cloned()).collect()
    }

    /// `transform(M, σ)`, one factor at a time.
    pub fn transform(&self, m: &Model) -> Result<Model, ModelError> {
        let mut cur = m.clone();
        for f in self.factors() {
            cur = cur.transform(&f)?;
        }
        Ok(cur)
    }

    /// The composite as a single substitution, if it stays below `max_size`
    /// symbols per variable after simplification.
    pub fn expand(&self, max_size: usize) -> Option<Substitution> {
        let mut acc = Substitution::identity();
        for f in self.factors() {
            acc = acc.compose(&f).simplified();
            if acc.map.values().any(|g| g.size() > max_size) {
                return None;
            }
        }
        Some(acc)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let expanded = self.expand(400).map(|s| {
            s.map.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.to_string()))).collect::<serde_json::Map<_, _>>()
        });
        json!({
            "guard": self.guard.to_string(),
            "params": self.params(),
            "vars": self.vars(),
            "tables": self.tables.iter().map(|t| t.rows.clone()).collect::<Vec<_>>(),
            "power": self.power,
            "expanded": expanded,
        })
    }
}

impl fmt::Display for Unifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.expand(400) {
            return write!(f, "{s}");
        }
        write!(
            f,
            "(θ_1 ∘ … ∘ θ_{})^{} with θ_i(x) = ([.]g & x) | (![.]g & d_i(x)), g = {}",
            self.tables.len(),
            self.power,
            self.guard
        )
    }
}

// ---------------------------------------------------------------------------
// staged saturation

#[derive(Clone, Debug)]
struct StagedPair {
    reflexive: bool,
    root: Vec<Vec<u64>>,
    profile: Vec<u64>,
}

/// Saturation over joint types: the Σ-types a point has in each of the
/// models `M, τ_1(M), τ_2(τ_1(M)), …` produced by the factors of a
/// unifier. A point's joint type is fixed by its original atoms, the
/// joint profile it sees and its cluster, so the construction mirrors
/// ordinary saturation.
pub struct StagedRun<'a> {
    ctx: &'a SigmaContext,
    logic: &'a LogicSpec,
    allowed: &'a dyn Fn(u64) -> bool,
    guard: &'a dyn Fn(u64) -> bool,
    subst: u64,
    /// Per stage: context parameter bits → new atom bits under `subst`.
    rows: Vec<Vec<u64>>,
    pairs: Vec<StagedPair>,
    profiles: BTreeMap<Vec<u64>, usize>,
    joint: HashSet<Vec<u64>>,
    max_pairs: usize,
}

impl<'a> StagedRun<'a> {
    /// Runs the staged saturation for `unifier` over `ctx`. `guard` must
    /// agree with the unifier's guard formula on every realizable type and
    /// `allowed` restricts the types of the original model.
    pub fn run(
        ctx: &'a SigmaContext,
        logic: &'a LogicSpec,
        unifier: &Unifier,
        allowed: &'a dyn Fn(u64) -> bool,
        guard: &'a dyn Fn(u64) -> bool,
    ) -> Result<StagedRun<'a>, TypeError> {
        if ctx.natoms() + ctx.nboxes() + 1 > 64 || ctx.nboxes() + 1 > 64 {
            return Err(TypeError::ResourceCap("context too wide for staged saturation".into()));
        }
        let uparams = unifier.params();
        let uvars = unifier.vars();
        let pos = |name: &str, param: bool| ctx.atoms().iter().position(|a| a.name == name && a.is_param() == param);
        let param_pos: Vec<Option<usize>> = uparams.iter().map(|p| pos(p, true)).collect();
        let var_pos: Vec<Option<usize>> = uvars.iter().map(|x| pos(x, false)).collect();
        let subst = var_pos.iter().flatten().fold(0u64, |m, &i| m | 1 << i);
        let np = ctx.nparams();
        let mut rows = Vec::new();
        for _ in 0..unifier.power {
            for t in &unifier.tables {
                let row: Vec<u64> = (0..1u64 << np)
                    .map(|c| {
                        let e = param_pos
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| p.is_some_and(|i| c >> i & 1 == 1))
                            .fold(0u64, |acc, (i, _)| acc | 1 << i);
                        var_pos
                            .iter()
                            .enumerate()
                            .filter_map(|(j, p)| p.map(|i| (j, i)))
                            .filter(|&(j, _)| t.value(e, j))
                            .fold(0u64, |acc, (_, i)| acc | 1 << i)
                    })
                    .collect();
                rows.push(row);
            }
        }
        let mut run = StagedRun {
            ctx,
            logic,
            allowed,
            guard,
            subst,
            rows,
            pairs: Vec::new(),
            profiles: BTreeMap::new(),
            joint: HashSet::new(),
            max_pairs: 20_000,
        };
        run.saturate()?;
        Ok(run)
    }

    fn stages(&self) -> usize {
        self.rows.len()
    }

    fn shift(&self) -> usize {
        self.ctx.natoms() + self.ctx.nboxes()
    }

    fn step_atoms(&self, k: usize, atoms: u64, keep: bool) -> u64 {
        if keep {
            atoms
        } else {
            let p = atoms & low_mask(self.ctx.nparams());
            (atoms & !self.subst) | self.rows[k][p as usize]
        }
    }

    fn irreflexive(&self, above: &[u64], a: u64) -> Option<(Vec<u64>, Vec<u64>)> {
        let ctx = self.ctx;
        let nb = ctx.nboxes();
        let (mut joint, mut prof) = (Vec::new(), Vec::new());
        let mut atoms = a;
        for k in 0..=self.stages() {
            let boxes = above[k] & ctx.all_boxes();
            let key = ctx.key(atoms, boxes);
            if k == 0 && !(self.allowed)(key) {
                return None;
            }
            let gb = (self.guard)(key) && above[k] >> nb & 1 == 1;
            joint.push(key | (gb as u64) << self.shift());
            prof.push(boxes & ctx.truemask(ctx.eval(key)) | (gb as u64) << nb);
            if k < self.stages() {
                atoms = self.step_atoms(k, atoms, gb);
            }
        }
        Some((joint, prof))
    }

    fn reflexive(&self, above: &[u64], members: &[u64]) -> Option<(Vec<Vec<u64>>, Vec<u64>)> {
        let ctx = self.ctx;
        let nb = ctx.nboxes();
        let mut joints: Vec<Vec<u64>> = vec![Vec::new(); members.len()];
        let mut prof = Vec::new();
        let mut atoms = members.to_vec();
        for k in 0..=self.stages() {
            let (beta, keys) = ctx.reflexive_root(above[k] & ctx.all_boxes(), &atoms);
            if k == 0 && !keys.iter().all(|&key| (self.allowed)(key)) {
                return None;
            }
            let g = above[k] >> nb & 1 == 1 && keys.iter().all(|&key| (self.guard)(key));
            for (j, &key) in keys.iter().enumerate() {
                joints[j].push(key | (g as u64) << self.shift());
            }
            prof.push(beta | (g as u64) << nb);
            if k < self.stages() {
                for a in atoms.iter_mut() {
                    *a = self.step_atoms(k, *a, g);
                }
            }
        }
        Some((joints, prof))
    }

    fn configs(&self) -> Vec<(Vec<u64>, usize, Vec<usize>)> {
        let all = vec![low_mask(self.ctx.nboxes() + 1); self.stages() + 1];
        let mut out = vec![(all, 0, vec![])];
        let mut best: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        let mut frontier = Vec::new();
        for (p, &w) in &self.profiles {
            best.insert(p.clone(), vec![w]);
            frontier.push(p.clone());
        }
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for a in frontier {
                for (p, &w) in &self.profiles {
                    let c: Vec<u64> = a.iter().zip(p).map(|(x, y)| x & y).collect();
                    if !best.contains_key(&c) {
                        let mut g = best[&a].clone();
                        g.push(w);
                        best.insert(c.clone(), g);
                        next.push(c);
                    }
                }
            }
            frontier = next;
        }
        out.extend(best.into_iter().map(|(a, g)| (a, g.len(), g)));
        out
    }

    fn record(&mut self, pair: StagedPair) -> Result<bool, TypeError> {
        let new_profile = !self.profiles.contains_key(&pair.profile);
        let new_joint = pair.root.iter().any(|j| !self.joint.contains(j));
        if !new_profile && !new_joint {
            return Ok(false);
        }
        if self.pairs.len() >= self.max_pairs {
            return Err(TypeError::ResourceCap(format!("{} staged pairs", self.pairs.len())));
        }
        let id = self.pairs.len();
        self.profiles.entry(pair.profile.clone()).or_insert(id);
        self.joint.extend(pair.root.iter().cloned());
        self.pairs.push(pair);
        Ok(true)
    }

    fn saturate(&mut self) -> Result<(), TypeError> {
        let natoms = self.ctx.natoms();
        let universe: Vec<u64> = (0..1u64 << natoms).collect();
        loop {
            let mut changed = false;
            for (above, n, _) in self.configs() {
                if self.logic.tp_member(&ExtensionCondition::irr(n)) {
                    for &a in &universe {
                        if let Some((joint, profile)) = self.irreflexive(&above, a) {
                            changed |= self.record(StagedPair { reflexive: false, root: vec![joint], profile })?;
                        }
                    }
                }
                let kmax = match self.logic.max_cluster(n) {
                    None => continue,
                    Some(Count::Infinite) => universe.len(),
                    Some(Count::Finite(k)) => k.min(universe.len()),
                };
                let mut budget: usize = 400_000;
                for size in 1..=kmax {
                    let mut combo: Vec<usize> = (0..size).collect();
                    loop {
                        if budget == 0 {
                            return Err(TypeError::ResourceCap("reflexive cluster enumeration".into()));
                        }
                        budget -= 1;
                        let members: Vec<u64> = combo.iter().map(|&i| universe[i]).collect();
                        if let Some((joints, profile)) = self.reflexive(&above, &members) {
                            changed |= self.record(StagedPair { reflexive: true, root: joints, profile })?;
                        }
                        if !next_combination(&mut combo, universe.len()) {
                            break;
                        }
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Joint types realized in some finite L-model.
    pub fn reachable(&self) -> impl Iterator<Item = &Vec<u64>> {
        self.joint.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    fn final_key(&self, joint: &[u64]) -> u64 {
        joint[self.stages()] & low_mask(self.shift())
    }

    /// Whether `node` holds everywhere in every transformed model, i.e.
    /// the substitution image of the formula at `node` is valid.
    pub fn valid_after(&self, node: usize) -> bool {
        self.joint.iter().all(|j| self.ctx.holds(self.ctx.eval(self.final_key(j)), node))
    }

    /// Whether the substitution leaves every variable's value unchanged.
    pub fn identity_on_vars(&self) -> bool {
        self.joint.iter().all(|j| (j[0] ^ self.final_key(j)) & self.subst == 0)
    }

    /// Whether a reachable reflexive pair exists; used by tests.
    pub fn has_reflexive(&self) -> bool {
        self.pairs.iter().any(|p| p.reflexive)
    }
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// model extension property

/// Root cluster of an extension: parameter valuations of its points, in
/// the context's parameter bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RootSpec {
    Irreflexive(u64),
    Reflexive(Vec<u64>),
}

/// A root cluster over saturation generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtConfig {
    pub root: RootSpec,
    pub above: u64,
    pub n: usize,
    pub gens: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MepFailure {
    pub config: ExtConfig,
    /// Types realized above the new root.
    pub cone: BTreeSet<u64>,
    /// Types one of which every projective subset must drop: root types
    /// of irreflexive generators, whole cones of reflexive ones.
    pub branch: BTreeSet<u64>,
}

fn absorbed(sat: &Saturation, cfg_n: usize, gens: &[usize], params: &[u64]) -> bool {
    if cfg_n != 1 {
        return false;
    }
    let g = &sat.pairs()[gens[0]];
    g.reflexive && params.iter().all(|e| g.root.iter().any(|&k| sat.ctx.params_of(k) == *e))
}

/// Extensions with no variable re-valuation of the root landing in `good`.
/// With `first_only` the search stops at the first failure.
pub fn mep_failures(sat: &Saturation, good: &dyn Fn(u64) -> bool, first_only: bool) -> Result<Vec<MepFailure>, TypeError> {
    let ctx = sat.ctx;
    let logic = sat.logic;
    let np = ctx.nparams();
    let nv = ctx.natoms() - np;
    let mut out = Vec::new();
    for cfg in sat.configs() {
        let cone = || cfg.gens.iter().flat_map(|&g| sat.cone(g)).collect::<BTreeSet<u64>>();
        let branch = || {
            cfg.gens
                .iter()
                .flat_map(|&g| {
                    let p = &sat.pairs()[g];
                    if p.reflexive {
                        sat.cone(g)
                    } else {
                        p.root.iter().copied().collect()
                    }
                })
                .collect::<BTreeSet<u64>>()
        };
        if logic.tp_member(&ExtensionCondition::irr(cfg.n)) {
            for e in 0..1u64 << np {
                if absorbed(sat, cfg.n, &cfg.gens, &[e]) {
                    continue;
                }
                let ok = (0..1u64 << nv).any(|v| good(ctx.key(e | v << np, cfg.above)));
                if !ok {
                    out.push(MepFailure {
                        config: ExtConfig { root: RootSpec::Irreflexive(e), above: cfg.above, n: cfg.n, gens: cfg.gens.clone() },
                        cone: cone(),
                        branch: branch(),
                    });
                    if first_only {
                        return Ok(out);
                    }
                }
            }
        }
        let kmax = match logic.max_cluster(cfg.n) {
            None => continue,
            Some(Count::Infinite) => usize::MAX,
            Some(Count::Finite(k)) => k,
        };
        for eset in 1..1u64 << (1u64 << np) {
            let es: Vec<u64> = (0..1u64 << np).filter(|&e| eset >> e & 1 == 1).collect();
            if es.len() > kmax || absorbed(sat, cfg.n, &cfg.gens, &es) {
                continue;
            }
            if nv * es.len() > 24 {
                return Err(TypeError::ResourceCap("root re-valuation search".into()));
            }
            let ok = (0..1u64 << (nv * es.len())).any(|choice| {
                let members: Vec<u64> =
                    es.iter().enumerate().map(|(i, &e)| e | (choice >> (i * nv) & low_mask(nv)) << np).collect();
                let (_, keys) = ctx.reflexive_root(cfg.above, &members);
                keys.iter().all(|&k| good(k))
            });
            if !ok {
                out.push(MepFailure {
                    config: ExtConfig { root: RootSpec::Reflexive(es), above: cfg.above, n: cfg.n, gens: cfg.gens.clone() },
                    cone: cone(),
                    branch: branch(),
                });
                if first_only {
                    return Ok(out);
                }
            }
        }
    }
    Ok(out)
}

/// Materializes a failing extension: the generators under a root whose
/// parameters follow the spec and whose variables are all false.
pub fn failure_model(sat: &Saturation, cfg: &ExtConfig) -> Model {
    match &cfg.root {
        RootSpec::Irreflexive(e) => sat.materialize_extension(&cfg.gens, false, &[*e]).0,
        RootSpec::Reflexive(es) => sat.materialize_extension(&cfg.gens, true, es).0,
    }
}

/// Types realized in L-models all of whose types lie in `set`.
pub fn normalize(ctx: &SigmaContext, logic: &LogicSpec, set: &BTreeSet<u64>) -> Result<BTreeSet<u64>, TypeError> {
    let s = set.clone();
    let sat = Saturation::run(ctx, logic, Box::new(move |k, _| s.contains(&k)))?;
    Ok(sat.reachable().collect())
}

/// Whether the formula "every point has a type in `set`" is projective;
/// on failure, the cheapest failing extension.
pub fn set_projectivity(ctx: &SigmaContext, logic: &LogicSpec, set: &BTreeSet<u64>) -> Result<Option<MepFailure>, TypeError> {
    let s = set.clone();
    let sat = Saturation::run(ctx, logic, Box::new(move |k, _| s.contains(&k)))?;
    let fails = mep_failures(&sat, &|k| set.contains(&k), false)?;
    Ok(fails.into_iter().min_by_key(|f| (f.branch.len(), f.cone.len())))
}

/// What a set search returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    /// Stop at the first good set.
    First,
    /// Collect all inclusion-maximal good sets.
    Maximal,
}

/// Searches realizability-closed subsets of `start` that have no
/// violation. `violations` lists, for each violation, types one of which
/// must go; `keep` prunes sets and must be monotone, so that a rejected
/// set has no good subset.
///
/// Branching partitions the space: the i-th child drops the i-th
/// candidate and keeps the earlier ones, so no subset is visited twice
/// and a violation among kept types closes the branch.
pub fn search_type_sets(
    ctx: &SigmaContext,
    logic: &LogicSpec,
    start: &BTreeSet<u64>,
    violations: &mut dyn FnMut(&BTreeSet<u64>) -> Result<Vec<BTreeSet<u64>>, TypeError>,
    keep: &mut dyn FnMut(&BTreeSet<u64>) -> Result<bool, TypeError>,
    mode: SearchMode,
    max_nodes: usize,
) -> Result<Vec<BTreeSet<u64>>, TypeError> {
    let mut found: Vec<BTreeSet<u64>> = Vec::new();
    let mut seen: HashSet<(BTreeSet<u64>, BTreeSet<u64>)> = HashSet::new();
    let mut stack = vec![(normalize(ctx, logic, start)?, BTreeSet::new())];
    let mut nodes = 0;
    while let Some((u, kept)) = stack.pop() {
        if !kept.is_subset(&u) || found.iter().any(|f| u.is_subset(f)) || !seen.insert((u.clone(), kept.clone())) {
            continue;
        }
        nodes += 1;
        if nodes > max_nodes {
            return Err(TypeError::ResourceCap(format!("{nodes} candidate type sets")));
        }
        if !keep(&u)? {
            continue;
        }
        let vs = violations(&u)?;
        if vs.is_empty() {
            found.retain(|f| !f.is_subset(&u));
            found.push(u);
            if mode == SearchMode::First {
                break;
            }
            continue;
        }
        let free: Vec<Vec<u64>> = vs.iter().map(|b| b.difference(&kept).copied().collect()).collect();
        let pick = free.iter().min_by_key(|f| f.len()).unwrap();
        let mut children = Vec::new();
        let mut k = kept.clone();
        for &t in pick {
            let mut smaller = u.clone();
            smaller.remove(&t);
            children.push((normalize(ctx, logic, &smaller)?, k.clone()));
            k.insert(t);
        }
        // the least constrained child is explored first
        stack.extend(children.into_iter().rev());
    }
    found.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    Ok(found)
}

/// Branch sets of all MEP failures of a type set.
pub fn projective_branches(ctx: &SigmaContext, logic: &LogicSpec, set: &BTreeSet<u64>) -> Result<Vec<BTreeSet<u64>>, TypeError> {
    let s = set.clone();
    let sat = Saturation::run(ctx, logic, Box::new(move |k, _| s.contains(&k)))?;
    let mut out: Vec<BTreeSet<u64>> = mep_failures(&sat, &|k| set.contains(&k), false)?.into_iter().map(|f| f.branch).collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// All inclusion-maximal projective type sets below `start`, each closed
/// under realizability.
pub fn maximal_projective_sets(
    ctx: &SigmaContext,
    logic: &LogicSpec,
    start: &BTreeSet<u64>,
    max_nodes: usize,
) -> Result<Vec<BTreeSet<u64>>, TypeError> {
    search_type_sets(
        ctx,
        logic,
        start,
        &mut |u| projective_branches(ctx, logic, u),
        &mut |_| Ok(true),
        SearchMode::Maximal,
        max_nodes,
    )
}

/// A small formula true exactly at the types of `on` among `realizable`;
/// unrealizable types are don't-cares. Built from implicants over the
/// atoms and boxed members of Σ.
pub fn type_set_formula(ctx: &SigmaContext, on: &BTreeSet<u64>, realizable: &BTreeSet<u64>) -> Formula {
    let off: Vec<u64> = realizable.iter().copied().filter(|k| !on.contains(k)).collect();
    let width = ctx.natoms() + ctx.nboxes();
    let full = low_mask(width);
    let mut cubes: Vec<(u64, u64)> = Vec::new();
    for &k in on {
        if cubes.iter().any(|&(m, v)| k & m == v) {
            continue;
        }
        let mut mask = full;
        for bit in (0..width).rev() {
            let trial = mask & !(1 << bit);
            if !off.iter().any(|&o| o & trial == k & trial) {
                mask = trial;
            }
        }
        cubes.push((mask, k & mask));
    }
    // drop cubes covered by the others on the on-set
    let mut i = 0;
    while i < cubes.len() {
        let (m, v) = cubes[i];
        let redundant = on
            .iter()
            .filter(|&&k| k & m == v)
            .all(|&k| cubes.iter().enumerate().any(|(j, &(m2, v2))| j != i && k & m2 == v2));
        if redundant {
            cubes.remove(i);
        } else {
            i += 1;
        }
    }
    if cubes.is_empty() {
        return Formula::bot();
    }
    let gens: Vec<Formula> = ctx
        .atoms()
        .iter()
        .map(|a| Formula::Atom(a.clone()))
        .chain(ctx.formulas().iter().filter(|f| matches!(f, Formula::Nec(_))).cloned())
        .collect();
    Formula::disj(cubes.iter().map(|&(m, v)| {
        let lits: Vec<Formula> = (0..width)
            .filter(|b| m >> b & 1 == 1)
            .map(|b| if v >> b & 1 == 1 { gens[b].clone() } else { Formula::not(gens[b].clone()) })
            .collect();
        if lits.is_empty() {
            Formula::top()
        } else {
            Formula::conj(lits)
        }
    }))
}

/// Every key over the context satisfying `pred`.
pub fn keys_where(ctx: &SigmaContext, pred: impl Fn(u64) -> bool) -> BTreeSet<u64> {
    (0..1u64 << (ctx.natoms() + ctx.nboxes())).filter(|&k| pred(k)).collect()
}

/// Searches the smallest power `r ≤ bound` for which the θ family over
/// `guard` (a formula, with `guard_pred` its truth on Σ-types) unifies it.
/// Both clauses of the projectivity equation are verified.
pub fn find_unifier(
    ctx: &SigmaContext,
    logic: &LogicSpec,
    guard: &Formula,
    guard_pred: &dyn Fn(u64) -> bool,
    guard_node: Option<usize>,
) -> Result<Unifier, TypeError> {
    let bound = n_bound(guard);
    let all = |_: u64| true;
    for r in 1..=bound {
        let u = Unifier::theta(guard, r)?;
        let run = StagedRun::run(ctx, logic, &u, &all, guard_pred)?;
        let unifies = match guard_node {
            Some(node) => run.valid_after(node),
            None => run.reachable().all(|j| guard_pred(j[u.stages()] & low_mask(ctx.natoms() + ctx.nboxes()))),
        };
        if !unifies {
            continue;
        }
        let fixed = StagedRun::run(ctx, logic, &u, guard_pred, guard_pred)?;
        if !fixed.identity_on_vars() {
            return Err(TypeError::Inconsistent("unifier moves variables under its own guard".into()));
        }
        return Ok(u);
    }
    Err(TypeError::Inconsistent(format!("no θ power up to {bound} unifies {guard}")))
}

/// Outcome of a projectivity check.
#[derive(Clone, Debug)]
pub enum Projectivity {
    Projective(Unifier),
    NotProjective { config: ExtConfig, model: Model },
}

/// Decides whether `φ` is projective in `L`.
pub fn projective(logic: &LogicSpec, phi: &Formula) -> Result<Projectivity, TypeError> {
    check_params(logic, [phi])?;
    let ctx = SigmaContext::new([phi])?;
    let node = ctx.node_of(phi).unwrap();
    let sat = Saturation::run(&ctx, logic, Box::new(move |_, full| full >> node & 1 == 1))?;
    let good = |k: u64| ctx.holds(ctx.eval(k), node);
    if let Some(f) = mep_failures(&sat, &good, true)?.into_iter().next() {
        let model = failure_model(&sat, &f.config);
        return Ok(Projectivity::NotProjective { config: f.config, model });
    }
    Ok(Projectivity::Projective(find_unifier(&ctx, logic, phi, &good, Some(node))?))
}

/// Member of a projective approximation.
#[derive(Clone, Debug)]
pub struct ApproxMember {
    pub types: BTreeSet<u64>,
    pub formula: Formula,
    pub unifier: Unifier,
}

/// Maximal projective Boolean combinations of subformulas below `φ`;
/// their unifiers form a complete set of unifiers of `φ`.
pub fn projective_approximation(logic: &LogicSpec, phi: &Formula) -> Result<Vec<ApproxMember>, TypeError> {
    check_params(logic, [phi])?;
    let ctx = SigmaContext::new([phi])?;
    let node = ctx.node_of(phi).unwrap();
    let start = keys_where(&ctx, |k| ctx.holds(ctx.eval(k), node));
    approximate(&ctx, logic, &start)
}

/// Approximation members for an arbitrary start set over `ctx`.
pub fn approximate(ctx: &SigmaContext, logic: &LogicSpec, start: &BTreeSet<u64>) -> Result<Vec<ApproxMember>, TypeError> {
    let realizable = normalize(ctx, logic, &keys_where(ctx, |_| true))?;
    maximal_projective_sets(ctx, logic, start, 50_000)?
        .into_iter()
        .map(|types| {
            let formula = type_set_formula(ctx, &types, &realizable);
            let pred = |k: u64| types.contains(&k);
            let unifier = find_unifier(ctx, logic, &formula, &pred, None)?;
            Ok(ApproxMember { types, formula, unifier })
        })
        .collect()
}

/// Maps keys of a larger context onto a smaller one sharing its atoms and
/// boxes.
#[derive(Clone, Debug)]
pub struct Projection {
    atoms: Vec<(usize, usize)>,
    boxes: Vec<(usize, usize)>,
}

impl Projection {
    pub fn new(from: &SigmaContext, to: &SigmaContext) -> Projection {
        let atoms = to
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| (from.atoms().iter().position(|b| b == a).expect("atom present"), i))
            .collect();
        let from_boxes: Vec<&Formula> = from.formulas().iter().filter(|f| matches!(f, Formula::Nec(_))).collect();
        let boxes = to
            .formulas()
            .iter()
            .filter(|f| matches!(f, Formula::Nec(_)))
            .enumerate()
            .map(|(j, f)| (from_boxes.iter().position(|g| *g == f).expect("box present"), j))
            .collect();
        Projection { atoms: boxes_shift(atoms, 0, 0), boxes: boxes_shift(boxes, from.natoms(), to.natoms()) }
    }

    pub fn apply(&self, key: u64) -> u64 {
        self.atoms
            .iter()
            .chain(self.boxes.iter())
            .filter(|&&(src, _)| key >> src & 1 == 1)
            .fold(0u64, |acc, &(_, dst)| acc | 1 << dst)
    }
}

fn boxes_shift(v: Vec<(usize, usize)>, from: usize, to: usize) -> Vec<(usize, usize)> {
    v.into_iter().map(|(a, b)| (a + from, b + to)).collect()
}

/// Whether every L-model whose `ctx`-types lie in `set` validates `phi`.
pub fn set_entails(ctx: &SigmaContext, logic: &LogicSpec, set: &BTreeSet<u64>, phi: &Formula) -> Result<bool, TypeError> {
    let big = SigmaContext::new(ctx.formulas().iter().chain([phi]))?;
    let proj = Projection::new(&big, ctx);
    let s = set.clone();
    let sat = Saturation::run(&big, logic, Box::new(move |k, _| s.contains(&proj.apply(k))))?;
    let node = big.node_of(phi).unwrap();
    let refuted = sat.reachable().any(|k| !big.holds(big.eval(k), node));
    Ok(!refuted)
}

/// Whether `phi` globally entails that every `ctx`-type lies in `set`.
pub fn entails_set(ctx: &SigmaContext, logic: &LogicSpec, phi: &Formula, set: &BTreeSet<u64>) -> Result<bool, TypeError> {
    let big = SigmaContext::new(ctx.formulas().iter().chain([phi]))?;
    let proj = Projection::new(&big, ctx);
    let node = big.node_of(phi).unwrap();
    let sat = Saturation::run(&big, logic, Box::new(move |_, full| full >> node & 1 == 1))?;
    let escaped = sat.reachable().any(|k| !set.contains(&proj.apply(k)));
    Ok(!escaped)
}

/// Convenience: `Some(unifier)` when projective.
pub fn projective_unifier(logic: &LogicSpec, phi: &Formula) -> Result<Option<Unifier>, TypeError> {
    Ok(match projective(logic, phi)? {
        Projectivity::Projective(u) => Some(u),
        Projectivity::NotProjective { .. } => None,
    })
}

/// Root cluster type of an extension config.
pub fn config_type(cfg: &ExtConfig) -> ExtensionCondition {
    match &cfg.root {
        RootSpec::Irreflexive(_) => ExtensionCondition::irr(cfg.n),
        RootSpec::Reflexive(es) => ExtensionCondition::new(ClusterType::Reflexive(es.len()), Count::Finite(cfg.n)),
    }
}
