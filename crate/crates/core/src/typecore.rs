//! Σ-types and the saturation engine.
//!
//! A Σ-type is fixed by its atom values and the values of its boxed
//! members, so it is stored as a `u64` key: atom bits first, then one bit
//! per `□ψ ∈ Σ`. Saturation builds, bottom-up, every way a root cluster can
//! sit on top of already realizable rooted models; all that matters about
//! the models above a new root is which `ψ` hold everywhere in them (their
//! *profile*), plus how many of them there are.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::formula::{subformulas, Atom, Formula};
use crate::kripke::{Model, ModelBuilder, ModelError, PointSet};
use crate::logic::{ClusterType, Count, ExtensionCondition, LogicSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("resource cap reached: {0}")]
    ResourceCap(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("parameter '{0}' is not declared by the logic")]
    UndeclaredParam(String),
    #[error("internal check failed: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Node {
    Bot,
    Atom(usize),
    Imp(usize, usize),
    /// Box number and child node.
    Box(usize, usize),
}

/// Limits on context size and saturation work.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_atoms: usize,
    pub max_boxes: usize,
    pub max_nodes: usize,
    pub max_pairs: usize,
}

impl Default for Caps {
    fn default() -> Caps {
        Caps { max_atoms: 14, max_boxes: 24, max_nodes: 128, max_pairs: 20_000 }
    }
}

/// A subformula-closed set with its atoms and boxed members indexed.
#[derive(Clone, Debug)]
pub struct SigmaContext {
    formulas: Vec<Formula>,
    index: HashMap<Formula, usize>,
    nodes: Vec<Node>,
    atoms: Vec<Atom>,
    nparams: usize,
    /// Node index of each `□ψ`.
    boxes: Vec<usize>,
    /// Node index of each `ψ` with `□ψ ∈ Σ`.
    children: Vec<usize>,
}

/// Full truth assignment of a type over Σ, one bit per node.
pub type Assignment = u128;

impl SigmaContext {
    pub fn new<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> Result<SigmaContext, TypeError> {
        SigmaContext::with_caps(fs, &Caps::default())
    }

    pub fn with_caps<'a, I: IntoIterator<Item = &'a Formula>>(fs: I, caps: &Caps) -> Result<SigmaContext, TypeError> {
        let formulas = subformulas(fs);
        if formulas.len() > caps.max_nodes.min(128) {
            return Err(TypeError::ResourceCap(format!("|Σ| = {} subformulas", formulas.len())));
        }
        let mut atoms: Vec<Atom> = formulas
            .iter()
            .filter_map(|f| match f {
                Formula::Atom(a) => Some(a.clone()),
                _ => None,
            })
            .collect();
        atoms.sort();
        let nparams = atoms.iter().filter(|a| a.is_param()).count();
        let index: HashMap<Formula, usize> = formulas.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        let mut boxes = Vec::new();
        let mut children = Vec::new();
        let nodes = formulas
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                Formula::Bot => Node::Bot,
                Formula::Atom(a) => Node::Atom(atoms.iter().position(|b| b == a).unwrap()),
                Formula::Imp(a, b) => Node::Imp(index[&**a], index[&**b]),
                Formula::Nec(a) => {
                    boxes.push(i);
                    children.push(index[&**a]);
                    Node::Box(boxes.len() - 1, index[&**a])
                }
            })
            .collect();
        if atoms.len() > caps.max_atoms || boxes.len() > caps.max_boxes || atoms.len() + boxes.len() > 64 {
            return Err(TypeError::ResourceCap(format!("{} atoms and {} boxes", atoms.len(), boxes.len())));
        }
        Ok(SigmaContext { formulas, index, nodes, atoms, nparams, boxes, children })
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn node_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    /// Atoms of Σ: parameters first, each group in name order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn natoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn nparams(&self) -> usize {
        self.nparams
    }

    pub fn param_names(&self) -> Vec<String> {
        self.atoms[..self.nparams].iter().map(|a| a.name.clone()).collect()
    }

    pub fn var_names(&self) -> Vec<String> {
        self.atoms[self.nparams..].iter().map(|a| a.name.clone()).collect()
    }

    pub fn nboxes(&self) -> usize {
        self.boxes.len()
    }

    /// The formulas `ψ` with `□ψ ∈ Σ`, in box order.
    pub fn boxed_children(&self) -> Vec<&Formula> {
        self.children.iter().map(|&i| &self.formulas[i]).collect()
    }

    pub fn all_boxes(&self) -> u64 {
        low_mask(self.boxes.len())
    }

    pub fn atom_mask(&self) -> u64 {
        low_mask(self.atoms.len())
    }

    pub fn key(&self, atoms: u64, boxes: u64) -> u64 {
        atoms | boxes << self.atoms.len()
    }

    pub fn atoms_of(&self, key: u64) -> u64 {
        key & self.atom_mask()
    }

    pub fn boxes_of(&self, key: u64) -> u64 {
        key >> self.atoms.len()
    }

    pub fn params_of(&self, key: u64) -> u64 {
        key & low_mask(self.nparams)
    }

    /// Truth values of every member of Σ under the type `key`.
    pub fn eval(&self, key: u64) -> Assignment {
        let mut out: Assignment = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Bot => false,
                Node::Atom(a) => key >> a & 1 == 1,
                Node::Imp(a, b) => out >> a & 1 == 0 || out >> b & 1 == 1,
                Node::Box(j, _) => key >> (self.atoms.len() + j) & 1 == 1,
            };
            if v {
                out |= 1 << i;
            }
        }
        out
    }

    pub fn holds(&self, full: Assignment, node: usize) -> bool {
        full >> node & 1 == 1
    }

    pub fn holds_formula(&self, key: u64, f: &Formula) -> Option<bool> {
        self.node_of(f).map(|i| self.holds(self.eval(key), i))
    }

    /// Which boxed children `ψ` are true: bit `j` for `□ψ_j`.
    pub fn truemask(&self, full: Assignment) -> u64 {
        self.children
            .iter()
            .enumerate()
            .filter(|(_, &c)| full >> c & 1 == 1)
            .fold(0, |acc, (j, _)| acc | 1 << j)
    }

    /// `{ψ : ⊡ψ holds}` as a box mask.
    pub fn dotbox_profile(&self, key: u64) -> u64 {
        self.boxes_of(key) & self.truemask(self.eval(key))
    }

    /// Root type of an irreflexive point with atoms `a` seeing profile `above`.
    pub fn irreflexive_root(&self, above: u64, atoms: u64) -> u64 {
        self.key(atoms, above)
    }

    /// Box values of a reflexive cluster with the given atom assignments
    /// seeing profile `above`, and the resulting member types. Boxes are
    /// settled in subformula order, so each child is evaluated only after
    /// the boxes inside it.
    pub fn reflexive_root(&self, above: u64, members: &[u64]) -> (u64, Vec<u64>) {
        let mut beta = 0u64;
        for j in 0..self.boxes.len() {
            if above >> j & 1 == 0 {
                continue;
            }
            let trial = beta | 1 << j;
            // the child of box j only depends on boxes of lower index
            let ok = members.iter().all(|&a| self.holds(self.eval(self.key(a, trial)), self.children[j]));
            if ok {
                beta = trial;
            }
        }
        (beta, members.iter().map(|&a| self.key(a, beta)).collect())
    }

    /// The Σ-type of point `u` of `m`; atoms of Σ missing from `m` are false.
    pub fn type_of_point(&self, m: &Model, u: usize, ext: &[PointSet]) -> u64 {
        let mut key = 0u64;
        for (i, a) in self.atoms.iter().enumerate() {
            if m.truth(a).is_some_and(|s| s.contains(u)) {
                key |= 1 << i;
            }
        }
        for (j, _) in self.boxes.iter().enumerate() {
            if ext[j].contains(u) {
                key |= 1 << (self.atoms.len() + j);
            }
        }
        key
    }

    /// Σ-types of all points of a model.
    pub fn model_types(&self, m: &Model) -> Result<Vec<u64>, ModelError> {
        let bs: Vec<Formula> = self.boxes.iter().map(|&i| self.formulas[i].clone()).collect();
        let ext = m.eval_all(&bs)?;
        Ok((0..m.len()).map(|u| self.type_of_point(m, u, &ext)).collect())
    }

    /// The conjunction `Σ^e` describing a type over the given members.
    pub fn type_formula(&self, key: u64, members: &[usize]) -> Formula {
        let full = self.eval(key);
        Formula::conj(members.iter().map(|&i| {
            let f = self.formulas[i].clone();
            if self.holds(full, i) {
                f
            } else {
                Formula::not(f)
            }
        }))
    }

    /// Atoms and boxed formulas: the members that determine a type.
    pub fn generators(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Atom(_) | Node::Box(..)))
            .collect();
        v.sort_unstable();
        v
    }
}

pub fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut cur = Some(mask);
    std::iter::from_fn(move || {
        let c = cur?;
        cur = if c == 0 { None } else { Some((c - 1) & mask) };
        Some(c)
    })
}

/// How a saturation pair's root cluster is built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub reflexive: bool,
    /// Root cluster types, one per point.
    pub root: Vec<u64>,
    /// Pairs whose models sit directly above the root.
    pub gens: Vec<usize>,
    /// Profile seen from the root: `ψ` true throughout the generators.
    pub above: u64,
    /// `ψ` true throughout this pair's model.
    pub profile: u64,
}

/// A generator choice: profile seen from a new root, minimal number of
/// generators achieving it, and one such generator set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub above: u64,
    pub n: usize,
    pub gens: Vec<usize>,
}

pub type Allowed<'a> = Box<dyn Fn(u64, Assignment) -> bool + 'a>;

/// Least fixpoint of root attachment over a set of allowed types.
pub struct Saturation<'a> {
    pub ctx: &'a SigmaContext,
    pub logic: &'a LogicSpec,
    allowed: Allowed<'a>,
    caps: Caps,
    pairs: Vec<Pair>,
    profile_witness: BTreeMap<u64, usize>,
    type_witness: BTreeMap<u64, usize>,
    configs: Vec<Config>,
    /// Allowed types per box mask: (atom bits, truemask).
    cache: HashMap<u64, Vec<(u64, u64)>>,
}

impl<'a> Saturation<'a> {
    pub fn run(ctx: &'a SigmaContext, logic: &'a LogicSpec, allowed: Allowed<'a>) -> Result<Saturation<'a>, TypeError> {
        Saturation::run_with_caps(ctx, logic, allowed, Caps::default())
    }

    pub fn run_with_caps(
        ctx: &'a SigmaContext,
        logic: &'a LogicSpec,
        allowed: Allowed<'a>,
        caps: Caps,
    ) -> Result<Saturation<'a>, TypeError> {
        let mut s = Saturation {
            ctx,
            logic,
            allowed,
            caps,
            pairs: Vec::new(),
            profile_witness: BTreeMap::new(),
            type_witness: BTreeMap::new(),
            configs: Vec::new(),
            cache: HashMap::new(),
        };
        s.saturate()?;
        Ok(s)
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Every type realized in some finite rooted L-model over allowed types.
    pub fn reachable(&self) -> impl Iterator<Item = u64> + '_ {
        self.type_witness.keys().copied()
    }

    pub fn is_reachable(&self, key: u64) -> bool {
        self.type_witness.contains_key(&key)
    }

    pub fn type_witness(&self, key: u64) -> Option<usize> {
        self.type_witness.get(&key).copied()
    }

    pub fn profiles(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.profile_witness.iter().map(|(p, w)| (*p, *w))
    }

    /// Generator choices, including the empty one (`n = 0`).
    pub fn configs(&self) -> &[Config] {
        &self.configs
    }

    fn allowed_with_boxes(&mut self, boxes: u64) -> &[(u64, u64)] {
        let ctx = self.ctx;
        let allowed = &self.allowed;
        self.cache.entry(boxes).or_insert_with(|| {
            (0..1u64 << ctx.natoms())
                .filter_map(|a| {
                    let key = ctx.key(a, boxes);
                    let full = ctx.eval(key);
                    allowed(key, full).then(|| (a, ctx.truemask(full)))
                })
                .collect()
        })
    }

    fn add_pair(&mut self, pair: Pair) -> Result<usize, TypeError> {
        if self.pairs.len() >= self.caps.max_pairs {
            return Err(TypeError::ResourceCap(format!("{} saturation pairs", self.pairs.len())));
        }
        self.pairs.push(pair);
        Ok(self.pairs.len() - 1)
    }

    /// Minimal generator counts for every achievable above-profile.
    fn compute_configs(&self) -> Vec<Config> {
        let all = self.ctx.all_boxes();
        let mut out = vec![Config { above: all, n: 0, gens: vec![] }];
        let mut best: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut frontier: Vec<u64> = Vec::new();
        for (&p, &w) in &self.profile_witness {
            best.insert(p, vec![w]);
            frontier.push(p);
        }
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for a in frontier {
                for (&p, &w) in &self.profile_witness {
                    let c = a & p;
                    if !best.contains_key(&c) {
                        let mut g = best[&a].clone();
                        g.push(w);
                        best.insert(c, g);
                        next.push(c);
                    }
                }
            }
            frontier = next;
        }
        out.extend(best.into_iter().map(|(above, gens)| Config { above, n: gens.len(), gens }));
        out
    }

    fn saturate(&mut self) -> Result<(), TypeError> {
        loop {
            self.configs = self.compute_configs();
            let mut changed = false;
            let configs = self.configs.clone();
            for cfg in &configs {
                changed |= self.attach_irreflexive(cfg)?;
                changed |= self.attach_reflexive(cfg)?;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    fn attach_irreflexive(&mut self, cfg: &Config) -> Result<bool, TypeError> {
        let t = ExtensionCondition::new(ClusterType::Irreflexive, Count::Finite(cfg.n));
        if !self.logic.tp_member(&t) {
            return Ok(false);
        }
        let mut changed = false;
        let cands = self.allowed_with_boxes(cfg.above).to_vec();
        for (a, truth) in cands {
            let key = self.ctx.key(a, cfg.above);
            let profile = cfg.above & truth;
            let new_type = !self.type_witness.contains_key(&key);
            let new_profile = !self.profile_witness.contains_key(&profile);
            if new_type || new_profile {
                let id = self.add_pair(Pair {
                    reflexive: false,
                    root: vec![key],
                    gens: cfg.gens.clone(),
                    above: cfg.above,
                    profile,
                })?;
                self.type_witness.entry(key).or_insert(id);
                self.profile_witness.entry(profile).or_insert(id);
                changed = true;
            }
        }
        Ok(changed)
    }

    fn attach_reflexive(&mut self, cfg: &Config) -> Result<bool, TypeError> {
        let kmax = match self.logic.max_cluster(cfg.n) {
            None => return Ok(false),
            Some(Count::Infinite) => usize::MAX,
            Some(Count::Finite(k)) => k,
        };
        let mut changed = false;
        for beta in submasks(cfg.above) {
            let cands: Vec<(u64, u64)> = self
                .allowed_with_boxes(beta)
                .iter()
                .copied()
                .filter(|&(_, truth)| truth & beta == beta)
                .collect();
            if cands.is_empty() {
                continue;
            }
            let target = cfg.above & !beta;
            let fails: Vec<u64> = cands.iter().map(|&(_, truth)| target & !truth).collect();
            let cover = CoverTable::new(target, &fails);
            for (i, &(a, _)) in cands.iter().enumerate() {
                let new_profile = !self.profile_witness.contains_key(&beta);
                if self.type_witness.contains_key(&self.ctx.key(a, beta)) && !new_profile {
                    continue;
                }
                let Some(rest) = cover.min_with(fails[i]) else { continue };
                let mut members: Vec<u64> = vec![a];
                members.extend(rest.iter().map(|&j| cands[j].0));
                members.sort_unstable();
                members.dedup();
                if members.len() > kmax {
                    continue;
                }
                let root = members.iter().map(|&m| self.ctx.key(m, beta)).collect();
                let id = self.add_pair(Pair { reflexive: true, root, gens: cfg.gens.clone(), above: cfg.above, profile: beta })?;
                for &m in &members {
                    self.type_witness.entry(self.ctx.key(m, beta)).or_insert(id);
                }
                self.profile_witness.entry(beta).or_insert(id);
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Types realized in the model of a pair (its cone).
    pub fn cone(&self, pair: usize) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![pair];
        while let Some(p) = stack.pop() {
            if !seen.insert(p) {
                continue;
            }
            out.extend(self.pairs[p].root.iter().copied());
            stack.extend(self.pairs[p].gens.iter().copied());
        }
        out
    }

    /// Realized type sets of nonempty generator families, deduplicated by
    /// the realized set together with whether one generator suffices.
    pub fn realizable_type_sets(&self) -> Result<Vec<(Vec<usize>, BTreeSet<u64>)>, TypeError> {
        let cones: Vec<(usize, BTreeSet<u64>)> = {
            let mut by_cone: BTreeMap<BTreeSet<u64>, usize> = BTreeMap::new();
            for p in 0..self.pairs.len() {
                by_cone.entry(self.cone(p)).or_insert(p);
            }
            by_cone.into_iter().map(|(c, p)| (p, c)).collect()
        };
        let mut best: BTreeMap<BTreeSet<u64>, Vec<usize>> = BTreeMap::new();
        let mut frontier: Vec<BTreeSet<u64>> = Vec::new();
        for (p, c) in &cones {
            if !best.contains_key(c) {
                best.insert(c.clone(), vec![*p]);
                frontier.push(c.clone());
            }
        }
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for u in frontier {
                for (p, c) in &cones {
                    let merged: BTreeSet<u64> = u.union(c).copied().collect();
                    if !best.contains_key(&merged) {
                        if best.len() >= self.caps.max_pairs {
                            return Err(TypeError::ResourceCap("realizable type sets".into()));
                        }
                        let mut g = best[&u].clone();
                        g.push(*p);
                        best.insert(merged.clone(), g);
                        next.push(merged);
                    }
                }
            }
            frontier = next;
        }
        Ok(best.into_iter().map(|(c, g)| (g, c)).collect())
    }

    /// Builds explicit models for the given pairs in one shared model and
    /// returns it with the root cluster points of each pair.
    pub fn materialize_many(&self, pairs: &[usize]) -> (Model, Vec<Vec<usize>>) {
        let mut b = ModelBuilder::new(self.ctx.param_names(), self.ctx.var_names());
        let mut memo: HashMap<usize, Vec<usize>> = HashMap::new();
        let roots = pairs.iter().map(|&p| self.build(p, &mut b, &mut memo)).collect();
        (b.build(), roots)
    }

    /// Rooted model of a pair, with its root cluster.
    pub fn materialize(&self, pair: usize) -> (Model, Vec<usize>) {
        let (m, roots) = self.materialize_many(&[pair]);
        let root = roots[0].clone();
        let keep: Vec<usize> = m.up_closure(&root).iter().collect();
        let sub = m.restrict(&keep);
        let root = root.iter().map(|r| keep.iter().position(|k| k == r).unwrap()).collect();
        (sub, root)
    }

    /// A model made of the given generators under a fresh root cluster
    /// whose points carry the given atom bits; returns the root points.
    pub fn materialize_extension(&self, gens: &[usize], reflexive: bool, root_atoms: &[u64]) -> (Model, Vec<usize>) {
        let mut b = ModelBuilder::new(self.ctx.param_names(), self.ctx.var_names());
        let mut memo: HashMap<usize, Vec<usize>> = HashMap::new();
        let gen_roots: Vec<Vec<usize>> = gens.iter().map(|&g| self.build(g, &mut b, &mut memo)).collect();
        let atoms = self.ctx.atoms();
        let pts: Vec<usize> = root_atoms
            .iter()
            .map(|&bits| {
                let on: Vec<&Atom> = atoms.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, a)| a).collect();
                b.add_point(reflexive, on).expect("context atoms are declared")
            })
            .collect();
        for &u in &pts {
            if reflexive {
                for &v in &pts {
                    b.add_edge(u, v);
                }
            }
            for g in &gen_roots {
                b.add_edge(u, g[0]);
            }
        }
        (b.build(), pts)
    }

    fn build(&self, p: usize, b: &mut ModelBuilder, memo: &mut HashMap<usize, Vec<usize>>) -> Vec<usize> {
        if let Some(r) = memo.get(&p) {
            return r.clone();
        }
        let pair = &self.pairs[p];
        let gen_roots: Vec<Vec<usize>> = pair.gens.iter().map(|&g| self.build(g, b, memo)).collect();
        let atoms = self.ctx.atoms();
        let pts: Vec<usize> = pair
            .root
            .iter()
            .map(|&key| {
                let true_atoms: Vec<&Atom> = atoms.iter().enumerate().filter(|(i, _)| key >> i & 1 == 1).map(|(_, a)| a).collect();
                b.add_point(pair.reflexive, true_atoms).expect("context atoms are declared")
            })
            .collect();
        for &u in &pts {
            if pair.reflexive {
                for &v in &pts {
                    b.add_edge(u, v);
                }
            }
            for g in &gen_roots {
                b.add_edge(u, g[0]);
            }
        }
        memo.insert(p, pts.clone());
        pts
    }
}

/// Breadth-first table of unions of failure masks within `target`.
struct CoverTable {
    target: u64,
    /// Reached union → (count, chosen candidate indices).
    reached: BTreeMap<u64, Vec<usize>>,
}

impl CoverTable {
    fn new(target: u64, fails: &[u64]) -> CoverTable {
        let mut distinct: BTreeMap<u64, usize> = BTreeMap::new();
        for (i, &f) in fails.iter().enumerate() {
            distinct.entry(f).or_insert(i);
        }
        let mut reached: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        reached.insert(0, vec![]);
        let mut queue = VecDeque::from([0u64]);
        while let Some(s) = queue.pop_front() {
            if s == target {
                continue;
            }
            for (&f, &i) in &distinct {
                let t = s | f;
                if !reached.contains_key(&t) {
                    let mut path = reached[&s].clone();
                    path.push(i);
                    reached.insert(t, path);
                    queue.push_back(t);
                }
            }
        }
        CoverTable { target, reached }
    }

    /// Fewest extra candidates covering the target together with `base`.
    fn min_with(&self, base: u64) -> Option<Vec<usize>> {
        self.reached
            .iter()
            .filter(|(&s, _)| (s | base) & self.target == self.target)
            .map(|(_, path)| path)
            .min_by_key(|p| p.len())
            .cloned()
    }
}

/// Checks that finite-mode logics declare the parameters used.
pub fn check_params<'a, I: IntoIterator<Item = &'a Formula>>(logic: &LogicSpec, fs: I) -> Result<(), TypeError> {
    if let Some(declared) = logic.declared_params() {
        for f in fs {
            for p in f.params() {
                if !declared.contains(&p) {
                    return Err(TypeError::UndeclaredParam(p));
                }
            }
        }
    }
    Ok(())
}

/// Allowed types: those satisfying every member of `gamma`.
pub fn satisfying<'a>(ctx: &'a SigmaContext, gamma: &[Formula]) -> Allowed<'a> {
    let nodes: Vec<usize> = gamma.iter().filter_map(|g| ctx.node_of(g)).collect();
    Box::new(move |_, full| nodes.iter().all(|&i| full >> i & 1 == 1))
}

/// Outcome of a global consequence check.
pub struct Consequence {
    pub valid: bool,
    ctx: SigmaContext,
    gamma: Vec<Formula>,
    phi: Formula,
}

/// `Γ ⊢_L φ` as a global consequence.
pub fn consequence(logic: &LogicSpec, gamma: &[Formula], phi: &Formula) -> Result<bool, TypeError> {
    Ok(consequence_full(logic, gamma, phi)?.valid)
}

pub fn tautology(logic: &LogicSpec, phi: &Formula) -> Result<bool, TypeError> {
    consequence(logic, &[], phi)
}

pub fn consequence_full(logic: &LogicSpec, gamma: &[Formula], phi: &Formula) -> Result<Consequence, TypeError> {
    check_params(logic, gamma.iter().chain(std::iter::once(phi)))?;
    let ctx = SigmaContext::new(gamma.iter().chain(std::iter::once(phi)))?;
    let valid = {
        let sat = Saturation::run(&ctx, logic, satisfying(&ctx, gamma))?;
        let node = ctx.node_of(phi).unwrap();
        let refuted = sat.reachable().any(|k| !ctx.holds(ctx.eval(k), node));
        !refuted
    };
    Ok(Consequence { valid, ctx, gamma: gamma.to_vec(), phi: phi.clone() })
}

/// A rooted L-model with `Γ` true everywhere and `φ` false at the root,
/// reduced by selective filtration.
pub fn countermodel(logic: &LogicSpec, gamma: &[Formula], phi: &Formula) -> Result<Option<Model>, TypeError> {
    let c = consequence_full(logic, gamma, phi)?;
    if c.valid {
        return Ok(None);
    }
    let ctx = &c.ctx;
    let sat = Saturation::run(ctx, logic, satisfying(ctx, &c.gamma))?;
    let node = ctx.node_of(&c.phi).unwrap();
    let bad = sat.reachable().find(|&k| !ctx.holds(ctx.eval(k), node)).unwrap();
    let (m, _) = sat.materialize(sat.type_witness(bad).unwrap());
    let refuting = m.eval(&c.phi)?;
    let root = (0..m.len()).find(|&u| !refuting.contains(u)).unwrap();
    Ok(Some(selective_filtration(&m.generated(root), &c.gamma, &c.phi)?))
}

/// Extracts a small tree of clusters from a finite model in which `Γ`
/// holds everywhere and `φ` fails somewhere: clusters are chosen by their
/// critical formulas and successors by minimal boxed-truth sets.
pub fn selective_filtration(w: &Model, gamma: &[Formula], phi: &Formula) -> Result<Model, TypeError> {
    let mut b_set: Vec<Formula> = vec![phi.clone()];
    for f in subformulas(gamma.iter().chain(std::iter::once(phi))) {
        if let Formula::Nec(inner) = f {
            if !b_set.contains(&inner) {
                b_set.push(*inner);
            }
        }
    }
    let nb = b_set.len();
    let dotboxed: Vec<Formula> = b_set.iter().map(|f| Formula::boxdot(f.clone())).collect();
    let mut all = b_set.clone();
    all.extend(dotboxed);
    let ext = w.eval_all(&all)?;
    let n = w.len();
    let bdt: Vec<u64> = (0..n)
        .map(|u| (0..nb).filter(|&i| ext[nb + i].contains(u)).fold(0u64, |acc, i| acc | 1 << i))
        .collect();
    let holds = |u: usize, i: usize| ext[i].contains(u);
    let full = low_mask(nb);
    // strictly above: v with u < v and not v < u
    let strictly_above = |u: usize| -> Vec<usize> { w.succ(u).iter().filter(|&v| !w.sees(v, u)).collect() };
    let crit = |u: usize| -> u64 {
        let inter = strictly_above(u).iter().fold(full, |acc, &v| acc & bdt[v]);
        inter & !bdt[u]
    };
    // root cluster: maximal point above the root refuting ⊡φ
    let start = w.roots().first().copied().unwrap_or(0);
    let mut d_root = start;
    loop {
        let next = strictly_above(d_root).into_iter().find(|&v| bdt[v] & 1 == 0);
        match next {
            Some(v) => d_root = v,
            None => break,
        }
    }
    debug_assert!(crit(d_root) & 1 == 1);

    let mut out = ModelBuilder::new(w.params().to_vec(), w.vars().to_vec());
    let mut stack: Vec<(usize, Option<Vec<usize>>)> = vec![(d_root, None)];
    while let Some((d, parent)) = stack.pop() {
        let cluster: Vec<usize> = w.cluster(d).to_vec();
        let cr = crit(d);
        let chosen: Vec<usize> = if cr == 0 {
            vec![cluster[0]]
        } else {
            // ⊆-minimal subset refuting every critical formula
            let refutes = |u: usize| (0..nb).filter(|&i| cr >> i & 1 == 1 && !holds(u, i)).fold(0u64, |a, i| a | 1 << i);
            let mut keep: Vec<usize> = cluster.iter().copied().filter(|&u| refutes(u) != 0).collect();
            let mut i = 0;
            while i < keep.len() {
                let others = keep.iter().enumerate().filter(|(j, _)| *j != i).fold(0u64, |a, (_, &u)| a | refutes(u));
                if others & cr == cr {
                    keep.remove(i);
                } else {
                    i += 1;
                }
            }
            keep
        };
        let refl = w.is_reflexive(d);
        let pts: Vec<usize> = chosen
            .iter()
            .map(|&u| out.add_point(refl, w.true_atoms(u).iter()).expect("same atoms"))
            .collect();
        if refl {
            for &a in &pts {
                for &c in &pts {
                    out.add_edge(a, c);
                }
            }
        }
        if let Some(par) = parent {
            for &p in &par {
                for &a in &pts {
                    out.add_edge(p, a);
                }
            }
        }
        // successors: ⊆-minimal bdt sets strictly above, pruned
        let above = strictly_above(d);
        let mut sets: Vec<u64> = above.iter().map(|&v| bdt[v]).collect::<BTreeSet<_>>().into_iter().collect();
        sets = sets.iter().copied().filter(|&s| !sets.iter().any(|&t| t != s && t & s == t)).collect();
        loop {
            if sets.len() < 2 {
                break;
            }
            let drop = (0..sets.len()).find(|&i| {
                let inter = sets.iter().enumerate().filter(|(j, _)| *j != i).fold(full, |a, (_, &s)| a & s);
                sets[i] & inter == inter
            });
            match drop {
                Some(i) => {
                    sets.remove(i);
                }
                None => break,
            }
        }
        for &dset in sets.iter().rev() {
            // a maximal cluster above d with this bdt
            let cands: Vec<usize> = above.iter().copied().filter(|&v| bdt[v] == dset).collect();
            let top = cands
                .iter()
                .copied()
                .find(|&v| !cands.iter().any(|&x| w.sees(v, x) && !w.sees(x, v)))
                .unwrap();
            stack.push((top, Some(pts.clone())));
        }
    }
    Ok(out.build())
}

/// Size, depth, cluster and branching bounds for countermodels, with
/// `b` the number of boxed subformulas of `Γ ∪ {□φ}`.
pub fn countermodel_bounds(gamma: &[Formula], phi: &Formula) -> (usize, u128, usize, usize, usize) {
    let boxed = Formula::nec(phi.clone());
    let b = subformulas(gamma.iter().chain(std::iter::once(&boxed))).iter().filter(|f| matches!(f, Formula::Nec(_))).count();
    let size = if b == 0 { 2 } else { 3u128.saturating_mul(1u128 << (b - 1).min(120)) };
    (b, size, b + 1, b, (b.max(1) - 1).max(1))
}

impl Consequence {
    pub fn context(&self) -> &SigmaContext {
        &self.ctx
    }
}
