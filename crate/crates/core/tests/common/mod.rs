//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's model checker: frames are bit rows, formulas are
//! evaluated directly on them.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use clx::formula::{Atom, Formula};
use clx::kripke::{Model, ModelBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Base seed for every randomized test; override with `CLX_SEED`.
pub fn seed() -> u64 {
    std::env::var("CLX_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed_c1a5)
}

pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed() ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// A finite transitive frame; `rows[u]` is the successor mask of `u`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub rows: Vec<u8>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn all(&self) -> u8 {
        ((1u16 << self.len()) - 1) as u8
    }

    pub fn sees(&self, u: usize, v: usize) -> bool {
        self.rows[u] >> v & 1 == 1
    }

    pub fn reflexive(&self, u: usize) -> bool {
        self.sees(u, u)
    }

    pub fn cluster(&self, u: usize) -> u8 {
        (0..self.len())
            .filter(|&v| v == u || (self.sees(u, v) && self.sees(v, u)))
            .fold(0, |m, v| m | 1 << v)
    }

    /// Successors strictly above the cluster of `u`.
    pub fn strictly_above(&self, u: usize) -> u8 {
        self.rows[u] & !self.cluster(u)
    }

    pub fn is_final(&self, u: usize) -> bool {
        self.strictly_above(u) == 0
    }

    /// Number of immediate successor clusters of `u`.
    pub fn branching_at(&self, u: usize) -> usize {
        let above = self.strictly_above(u);
        let mut seen = 0u8;
        let mut count = 0;
        for v in bits(above) {
            if seen >> v & 1 == 1 {
                continue;
            }
            // v is immediate if nothing strictly above u sits strictly below v
            let between = bits(above).any(|w| self.strictly_above(w) >> v & 1 == 1);
            if !between {
                seen |= self.cluster(v);
                count += 1;
            }
        }
        count
    }

    pub fn depth_one(&self) -> bool {
        (0..self.len()).all(|u| self.is_final(u))
    }

    pub fn width_one(&self) -> bool {
        (0..self.len()).all(|u| {
            bits(self.rows[u]).all(|v| bits(self.rows[u]).all(|w| v == w || self.sees(v, w) || self.sees(w, v)))
        })
    }

    pub fn max_cluster(&self) -> usize {
        (0..self.len()).map(|u| self.cluster(u).count_ones() as usize).max().unwrap_or(0)
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&u| (self.rows[u] | self.cluster(u)) == self.all()).collect()
    }

    pub fn rooted(&self) -> bool {
        !self.roots().is_empty()
    }

    /// Upward closure `X⇑` of a point set.
    pub fn up(&self, xs: u8) -> u8 {
        bits(xs).fold(xs, |m, v| m | self.rows[v])
    }

    fn code_under(&self, perm: &[usize]) -> u64 {
        let mut code = 0u64;
        for (u, &r) in self.rows.iter().enumerate() {
            for v in bits(r) {
                code |= 1 << (8 * perm[u] + perm[v]);
            }
        }
        code
    }

    /// Canonical representative of the isomorphism class.
    pub fn canonical(&self) -> Frame {
        let n = self.len();
        let perms = permutations(n);
        let best = perms.iter().map(|p| self.code_under(p)).min().unwrap();
        Frame { rows: (0..n).map(|u| (best >> (8 * u)) as u8).collect() }
    }

    pub fn model(&self, params: &[&str], vars: &[&str], val: &Valuation) -> Model {
        let mut b = ModelBuilder::new(params.iter().map(|s| s.to_string()).collect(), vars.iter().map(|s| s.to_string()).collect());
        for u in 0..self.len() {
            let atoms: Vec<Atom> = val.atoms.iter().zip(&val.ext).filter(|(_, e)| *e >> u & 1 == 1).map(|(a, _)| a.clone()).collect();
            b.add_point(self.reflexive(u), atoms.iter()).unwrap();
        }
        for u in 0..self.len() {
            for v in bits(self.rows[u]) {
                if u != v {
                    b.add_edge(u, v);
                }
            }
        }
        b.build()
    }
}

pub fn bits(m: u8) -> impl Iterator<Item = usize> + Clone {
    (0..8).filter(move |i| m >> i & 1 == 1)
}

/// All permutations of `0..n`, cached.
pub fn permutations(n: usize) -> &'static [Vec<usize>] {
    static CACHE: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    &CACHE.get_or_init(|| (0..=6).map(build_permutations).collect())[n]
}

fn build_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in build_permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn transitive(rows: &[u8]) -> bool {
    rows.iter().all(|&r| {
        let mut rest = r;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            if rows[v] & !r != 0 {
                return false;
            }
            rest &= rest - 1;
        }
        true
    })
}

/// Every transitive relation on `n` labelled points.
pub fn labelled_frames(n: usize) -> Vec<Frame> {
    assert!(n <= 5);
    let mask = (1u32 << n) - 1;
    let mut out = Vec::new();
    let mut rows = [0u8; 5];
    for code in 0u32..1 << (n * n) {
        for (u, r) in rows.iter_mut().enumerate().take(n) {
            *r = (code >> (u * n) & mask) as u8;
        }
        if transitive(&rows[..n]) {
            out.push(Frame { rows: rows[..n].to_vec() });
        }
    }
    out
}

/// Transitive frames with 1..=`n` points up to isomorphism, smaller
/// frames first.
pub fn frames_up_to(n: usize) -> &'static [Frame] {
    static CACHE: OnceLock<(Vec<Frame>, Vec<usize>)> = OnceLock::new();
    let (flat, ends) = CACHE.get_or_init(|| {
        let mut flat = Vec::new();
        let mut ends = vec![0];
        for k in 1..=5 {
            let set: BTreeSet<Vec<u8>> = labelled_frames(k).iter().map(|f| f.canonical().rows).collect();
            flat.extend(set.into_iter().map(|rows| Frame { rows }));
            ends.push(flat.len());
        }
        (flat, ends)
    });
    &flat[..ends[n]]
}

pub fn rooted_frames_up_to(n: usize) -> Vec<Frame> {
    frames_up_to(n).iter().filter(|f| f.rooted()).cloned().collect()
}

// ---------------------------------------------------------------------------
// Frame conditions, coded from the usual descriptions of each logic
// ---------------------------------------------------------------------------

pub fn frame_condition(logic: &str, f: &Frame) -> bool {
    let n = f.len();
    let pts = 0..n;
    let refl = pts.clone().all(|u| f.reflexive(u));
    let irr = pts.clone().all(|u| !f.reflexive(u));
    let no_proper = f.max_cluster() <= 1;
    let final_refl = pts.clone().all(|u| !f.is_final(u) || f.reflexive(u));
    let final_small = pts.clone().all(|u| !f.is_final(u) || f.cluster(u).count_ones() == 1);
    let branching = |k: usize| pts.clone().all(|u| f.branching_at(u) <= k);
    let inner_proper = pts.clone().any(|u| !f.is_final(u) && f.cluster(u).count_ones() > 1);
    let indexed = |prefix: &str| logic.strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok());
    match logic {
        "K4" => true,
        "S4" => refl,
        "D4" => final_refl,
        "GL" => irr,
        "K4Grz" => no_proper,
        "S4Grz" => refl && no_proper,
        "K4.1" => final_small,
        "S4.1" => refl && final_small,
        "K4.3" => f.width_one(),
        "GL.3" => irr && f.width_one(),
        "S4.3" => refl && f.width_one(),
        "K4B" => f.depth_one(),
        "S5" => refl && f.depth_one(),
        "S4.1.4" => refl && !inner_proper,
        "Triv" => pts.clone().all(|u| f.rows[u] == 1 << u),
        "Verum" => pts.clone().all(|u| f.rows[u] == 0),
        "Form" => n == 0,
        _ => {
            if let Some(k) = indexed("K4BB_") {
                branching(k)
            } else if let Some(k) = indexed("K4BC_") {
                f.max_cluster() <= k
            } else {
                panic!("no frame condition for {logic}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Extensions of atoms as point masks.
#[derive(Clone, Debug, Default)]
pub struct Valuation {
    pub atoms: Vec<Atom>,
    pub ext: Vec<u8>,
}

impl Valuation {
    pub fn new(atoms: &[Atom], ext: &[u8]) -> Valuation {
        Valuation { atoms: atoms.to_vec(), ext: ext.to_vec() }
    }

    pub fn get(&self, a: &Atom) -> u8 {
        self.atoms.iter().position(|b| b == a).map(|i| self.ext[i]).expect("atom without a value")
    }

    pub fn set(&mut self, a: &Atom, e: u8) {
        match self.atoms.iter().position(|b| b == a) {
            Some(i) => self.ext[i] = e,
            None => {
                self.atoms.push(a.clone());
                self.ext.push(e);
            }
        }
    }
}

pub fn eval(f: &Frame, phi: &Formula, val: &Valuation) -> u8 {
    let all = f.all();
    match phi {
        Formula::Bot => 0,
        Formula::Atom(a) => val.get(a) & all,
        Formula::Imp(a, b) => (!eval(f, a, val) | eval(f, b, val)) & all,
        Formula::Nec(a) => {
            let inner = eval(f, a, val);
            (0..f.len()).filter(|&u| f.rows[u] & !inner == 0).fold(0, |m, u| m | 1 << u)
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Bot,
    Atom(usize),
    Imp(usize, usize),
    Nec(usize),
}

/// Formulas flattened into a shared DAG over atom indices, for hot loops.
#[derive(Clone, Debug)]
pub struct Prog {
    pub atoms: Vec<Atom>,
    ops: Vec<Op>,
    pub roots: Vec<usize>,
}

impl Prog {
    pub fn new(fs: &[&Formula]) -> Prog {
        let atoms = atoms_of(fs.iter().copied());
        let mut ops = Vec::new();
        let mut index: BTreeMap<Formula, usize> = BTreeMap::new();
        fn go(f: &Formula, atoms: &[Atom], ops: &mut Vec<Op>, index: &mut BTreeMap<Formula, usize>) -> usize {
            if let Some(&i) = index.get(f) {
                return i;
            }
            let op = match f {
                Formula::Bot => Op::Bot,
                Formula::Atom(a) => Op::Atom(atoms.iter().position(|b| b == a).unwrap()),
                Formula::Imp(a, b) => {
                    let a = go(a, atoms, ops, index);
                    Op::Imp(a, go(b, atoms, ops, index))
                }
                Formula::Nec(a) => Op::Nec(go(a, atoms, ops, index)),
            };
            ops.push(op);
            index.insert(f.clone(), ops.len() - 1);
            ops.len() - 1
        }
        let roots = fs.iter().map(|f| go(f, &atoms, &mut ops, &mut index)).collect();
        Prog { atoms, ops, roots }
    }

    /// Extensions of every node; `ext[i]` is the extension of `atoms[i]`.
    pub fn run(&self, f: &Frame, ext: &[u8], out: &mut Vec<u8>) {
        let all = f.all();
        out.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Bot => 0,
                Op::Atom(i) => ext[i] & all,
                Op::Imp(a, b) => (!out[a] | out[b]) & all,
                Op::Nec(a) => {
                    let inner = out[a];
                    let mut m = 0;
                    for (u, &r) in f.rows.iter().enumerate() {
                        if r & !inner == 0 {
                            m |= 1 << u;
                        }
                    }
                    m
                }
            };
            out.push(v);
        }
    }

    pub fn root(&self, out: &[u8], i: usize) -> u8 {
        out[self.roots[i]]
    }
}

/// Atom extensions for every valuation code of `k` atoms on `n` points.
pub fn ext_of(code: u64, n: usize, k: usize, buf: &mut Vec<u8>) {
    buf.clear();
    buf.extend((0..k).map(|i| (code >> (i * n) & ((1 << n) - 1)) as u8));
}

pub fn valid(f: &Frame, phi: &Formula, val: &Valuation) -> bool {
    eval(f, phi, val) == f.all()
}

/// Model-level rule truth: all premises valid forces some conclusion valid.
pub fn rule_holds(f: &Frame, premises: &[Formula], conclusions: &[Formula], val: &Valuation) -> bool {
    !premises.iter().all(|g| valid(f, g, val)) || conclusions.iter().any(|d| valid(f, d, val))
}

/// Every valuation of `atoms` on the frame.
pub fn valuations(f: &Frame, atoms: &[Atom]) -> impl Iterator<Item = Valuation> {
    let n = f.len();
    let total = 1u64 << (n * atoms.len());
    let atoms = atoms.to_vec();
    (0..total).map(move |code| {
        let ext = (0..atoms.len()).map(|i| (code >> (i * n) & ((1 << n) - 1)) as u8).collect::<Vec<_>>();
        Valuation { atoms: atoms.clone(), ext }
    })
}

pub fn atoms_of<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> Vec<Atom> {
    let mut out = BTreeSet::new();
    fn walk(f: &Formula, out: &mut BTreeSet<Atom>) {
        match f {
            Formula::Bot => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Imp(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Formula::Nec(a) => walk(a, out),
        }
    }
    for f in fs {
        walk(f, &mut out);
    }
    out.into_iter().collect()
}

pub fn subterms<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> BTreeSet<Formula> {
    let mut out = BTreeSet::new();
    fn walk(f: &Formula, out: &mut BTreeSet<Formula>) {
        if !out.insert(f.clone()) {
            return;
        }
        match f {
            Formula::Imp(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Formula::Nec(a) => walk(a, out),
            _ => {}
        }
    }
    for f in fs {
        walk(f, &mut out);
    }
    out
}

pub fn boxed_count<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> usize {
    subterms(fs).iter().filter(|f| matches!(f, Formula::Nec(_))).count()
}

/// Bounded semantic consequence: in every rooted model on the given frames
/// where all of `gamma` is valid, so is `phi`.
pub fn bounded_consequence(frames: &[Frame], gamma: &[Formula], phi: &Formula) -> bool {
    let mut fs: Vec<&Formula> = gamma.iter().collect();
    fs.push(phi);
    let prog = Prog::new(&fs);
    let k = prog.atoms.len();
    let (mut ext, mut out) = (Vec::new(), Vec::new());
    frames.iter().all(|f| {
        let n = f.len();
        (0..1u64 << (n * k)).all(|code| {
            ext_of(code, n, k, &mut ext);
            prog.run(f, &ext, &mut out);
            let all = f.all();
            !(0..gamma.len()).all(|i| prog.root(&out, i) == all) || prog.root(&out, gamma.len()) == all
        })
    })
}

/// Validity of `φ` on a frame, over every valuation.
pub fn frame_valid(f: &Frame, phi: &Formula) -> bool {
    let prog = Prog::new(&[phi]);
    let k = prog.atoms.len();
    let n = f.len();
    let (mut ext, mut out) = (Vec::new(), Vec::new());
    (0..1u64 << (n * k)).all(|code| {
        ext_of(code, n, k, &mut ext);
        prog.run(f, &ext, &mut out);
        prog.root(&out, 0) == f.all()
    })
}

// ---------------------------------------------------------------------------
// Formula generation
// ---------------------------------------------------------------------------

pub fn var(name: &str) -> Formula {
    Formula::var(name)
}

pub fn par(name: &str) -> Formula {
    Formula::par(name)
}

/// All formulas over the primitive connectives with at most `max_sub`
/// distinct subformulas, built from the given atoms and `⊥`.
pub fn small_formulas(leaves: &[Formula], max_sub: usize) -> Vec<Formula> {
    let mut known: BTreeMap<Formula, BTreeSet<Formula>> = BTreeMap::new();
    let mut frontier: Vec<Formula> = Vec::new();
    for leaf in leaves.iter().cloned().chain(std::iter::once(Formula::Bot)) {
        known.insert(leaf.clone(), [leaf.clone()].into_iter().collect());
        frontier.push(leaf);
    }
    loop {
        let current: Vec<(Formula, BTreeSet<Formula>)> = known.iter().map(|(f, s)| (f.clone(), s.clone())).collect();
        let mut added = Vec::new();
        for (f, s) in &current {
            let g = Formula::nec(f.clone());
            if !known.contains_key(&g) && s.len() < max_sub {
                let mut t = s.clone();
                t.insert(g.clone());
                added.push((g, t));
            }
            for (h, r) in &current {
                let g = Formula::Imp(Box::new(f.clone()), Box::new(h.clone()));
                if known.contains_key(&g) {
                    continue;
                }
                let t: BTreeSet<Formula> = s.union(r).cloned().chain(std::iter::once(g.clone())).collect();
                if t.len() <= max_sub {
                    added.push((g, t));
                }
            }
        }
        if added.is_empty() {
            break;
        }
        for (g, t) in added {
            known.insert(g, t);
        }
    }
    known.into_keys().collect()
}

/// Renames variables in order of first appearance so that formulas equal
/// up to renaming collapse.
pub fn rename_canonically(f: &Formula) -> Formula {
    fn order(f: &Formula, out: &mut Vec<String>) {
        match f {
            Formula::Atom(a) if !a.is_param() => {
                if !out.contains(&a.name) {
                    out.push(a.name.clone());
                }
            }
            Formula::Imp(a, b) => {
                order(a, out);
                order(b, out);
            }
            Formula::Nec(a) => order(a, out),
            _ => {}
        }
    }
    fn apply(f: &Formula, names: &[String]) -> Formula {
        match f {
            Formula::Atom(a) if !a.is_param() => {
                let i = names.iter().position(|n| *n == a.name).unwrap();
                Formula::var(format!("v{i}"))
            }
            Formula::Imp(a, b) => Formula::Imp(Box::new(apply(a, names)), Box::new(apply(b, names))),
            Formula::Nec(a) => Formula::nec(apply(a, names)),
            other => other.clone(),
        }
    }
    let mut names = Vec::new();
    order(f, &mut names);
    apply(f, &names)
}

pub fn dedup_up_to_renaming(fs: Vec<Formula>) -> Vec<Formula> {
    let mut seen = HashSet::new();
    fs.into_iter().filter(|f| seen.insert(rename_canonically(f))).collect()
}

/// A random formula in the sugared connectives.
pub fn random_formula(rng: &mut impl Rng, depth: usize, leaves: &[Formula]) -> Formula {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..10) {
            0 => Formula::bot(),
            1 => Formula::top(),
            _ => leaves[rng.gen_range(0..leaves.len())].clone(),
        };
    }
    let sub = |rng: &mut _| random_formula(rng, depth - 1, leaves);
    match rng.gen_range(0..8) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => Formula::imp(sub(rng), sub(rng)),
        4 | 5 => Formula::nec(sub(rng)),
        6 => Formula::dia(sub(rng)),
        _ => Formula::boxdot(sub(rng)),
    }
}

/// A random transitive frame with 1..=`max` points.
pub fn random_frame(rng: &mut impl Rng, max: usize) -> Frame {
    let n = rng.gen_range(1..=max);
    loop {
        let mut rows: Vec<u8> = (0..n).map(|_| rng.gen::<u8>() & ((1u16 << n) - 1) as u8).collect();
        // close transitively
        loop {
            let next: Vec<u8> = rows.iter().map(|&r| bits(r).fold(r, |m, v| m | rows[v])).collect();
            if next == rows {
                break;
            }
            rows = next;
        }
        // thin out so that not everything collapses into one cluster
        if rng.gen_bool(0.3) || rows.iter().any(|&r| r.count_ones() < n as u32) {
            return Frame { rows };
        }
    }
}

pub fn random_valuation(rng: &mut impl Rng, f: &Frame, atoms: &[Atom]) -> Valuation {
    Valuation { atoms: atoms.to_vec(), ext: atoms.iter().map(|_| rng.gen::<u8>() & f.all()).collect() }
}
