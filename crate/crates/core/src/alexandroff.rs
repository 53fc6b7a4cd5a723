//! Finite Alexandroff dynamical systems.
//!
//! A finite poset carries the down-set topology: the open sets are the
//! downward-closed sets, the interior of `S` is `{x : ↓x ⊆ S}` and the
//! closure of `S` is its up-closure. A system adds a monotone self-map.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::Formula;

/// A set of points, as a bitset over element indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointSet(pub u64);

impl PointSet {
    pub const EMPTY: PointSet = PointSet(0);

    pub fn singleton(i: usize) -> PointSet {
        PointSet(1 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> PointSet {
        PointSet(it.into_iter().fold(0, |acc, i| acc | 1 << i))
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn is_subset(self, other: PointSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: PointSet) -> PointSet {
        PointSet(self.0 | other.0)
    }

    pub fn intersect(self, other: PointSet) -> PointSet {
        PointSet(self.0 & other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }
}

/// A finite partial order; `down[x]` is the set of `y ≼ x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FinitePoset {
    names: Vec<String>,
    down: Vec<PointSet>,
}

impl FinitePoset {
    /// Builds the reflexive-transitive closure of `pairs` (`(a, b)` means
    /// `a ≼ b`) and checks antisymmetry.
    pub fn from_pairs(names: Vec<String>, pairs: &[(usize, usize)]) -> Result<FinitePoset> {
        let n = names.len();
        if n == 0 || n > 64 {
            return Err(Error::InvalidSystem(format!(
                "a system needs between 1 and 64 points, got {n}"
            )));
        }
        let mut down: Vec<PointSet> = (0..n).map(PointSet::singleton).collect();
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidSystem(format!("pair ({a}, {b}) out of range")));
            }
            down[b] = down[b].union(PointSet::singleton(a));
        }
        loop {
            let mut changed = false;
            for x in 0..n {
                let mut acc = down[x];
                for y in down[x].iter() {
                    acc = acc.union(down[y]);
                }
                if acc != down[x] {
                    down[x] = acc;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let poset = FinitePoset { names, down };
        for a in 0..n {
            for b in a + 1..n {
                if poset.leq(a, b) && poset.leq(b, a) {
                    return Err(Error::InvalidSystem(format!(
                        "antisymmetry violated by ({}, {})",
                        poset.names[a], poset.names[b]
                    )));
                }
            }
        }
        Ok(poset)
    }

    pub fn antichain(n: usize) -> FinitePoset {
        FinitePoset::from_pairs(default_names(n), &[]).expect("antichain is a poset")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.down[b].contains(a)
    }

    pub fn down(&self, x: usize) -> PointSet {
        self.down[x]
    }

    pub fn up(&self, x: usize) -> PointSet {
        PointSet::from_indices((0..self.len()).filter(|&y| self.leq(x, y)))
    }

    pub fn all(&self) -> PointSet {
        PointSet(if self.len() == 64 {
            u64::MAX
        } else {
            (1 << self.len()) - 1
        })
    }

    pub fn is_open(&self, s: PointSet) -> bool {
        s.iter().all(|x| self.down[x].is_subset(s))
    }

    /// The largest open subset of `s`.
    pub fn interior(&self, s: PointSet) -> PointSet {
        PointSet::from_indices((0..self.len()).filter(|&x| self.down[x].is_subset(s)))
    }

    /// The smallest closed superset of `s`: its up-closure.
    pub fn closure(&self, s: PointSet) -> PointSet {
        s.iter().fold(PointSet::EMPTY, |acc, x| acc.union(self.up(x)))
    }

    /// Every open set, in increasing numeric order.
    pub fn open_sets(&self) -> Vec<PointSet> {
        let mut out = Vec::new();
        // Deciding points in index order; a point can join only if its whole
        // down-set is already decided in, so recurse over a linear extension.
        let mut ext: Vec<usize> = (0..self.len()).collect();
        ext.sort_by_key(|&x| (self.down[x].len(), x));
        fn go(p: &FinitePoset, ext: &[usize], k: usize, cur: PointSet, out: &mut Vec<PointSet>) {
            if k == ext.len() {
                out.push(cur);
                return;
            }
            let x = ext[k];
            go(p, ext, k + 1, cur, out);
            let strict = PointSet(p.down[x].0 & !(1 << x));
            if strict.is_subset(cur) {
                go(p, ext, k + 1, cur.union(PointSet::singleton(x)), out);
            }
        }
        go(self, &ext, 0, PointSet::EMPTY, &mut out);
        out.sort();
        out
    }

    /// Whether `a` and `b` are comparable.
    pub fn comparable(&self, a: usize, b: usize) -> bool {
        self.leq(a, b) || self.leq(b, a)
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// A finite poset with a monotone self-map.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiniteSystem {
    poset: FinitePoset,
    map: Vec<usize>,
}

impl FiniteSystem {
    pub fn new(poset: FinitePoset, map: Vec<usize>) -> Result<FiniteSystem> {
        if map.len() != poset.len() {
            return Err(Error::InvalidSystem(format!(
                "map has {} entries for {} points",
                map.len(),
                poset.len()
            )));
        }
        if let Some(&bad) = map.iter().find(|&&y| y >= poset.len()) {
            return Err(Error::InvalidSystem(format!("map value {bad} out of range")));
        }
        let system = FiniteSystem { poset, map };
        system.check()?;
        Ok(system)
    }

    /// Checks the poset axioms and monotonicity of the map.
    pub fn check(&self) -> Result<()> {
        let p = &self.poset;
        let n = p.len();
        for a in 0..n {
            if !p.leq(a, a) {
                return Err(Error::InvalidSystem(format!("{} ≼ itself fails", p.names[a])));
            }
            for b in 0..n {
                if a != b && p.leq(a, b) && p.leq(b, a) {
                    return Err(Error::InvalidSystem(format!(
                        "antisymmetry violated by ({}, {})",
                        p.names[a], p.names[b]
                    )));
                }
                for c in 0..n {
                    if p.leq(a, b) && p.leq(b, c) && !p.leq(a, c) {
                        return Err(Error::InvalidSystem("order is not transitive".into()));
                    }
                }
                if p.leq(a, b) && !p.leq(self.map[a], self.map[b]) {
                    return Err(Error::InvalidSystem(format!(
                        "map is not monotone on ({}, {})",
                        p.names[a], p.names[b]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn poset(&self) -> &FinitePoset {
        &self.poset
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.poset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poset.is_empty()
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    /// `f⁻¹(s)`.
    pub fn preimage(&self, s: PointSet) -> PointSet {
        PointSet::from_indices((0..self.len()).filter(|&x| s.contains(self.map[x])))
    }

    /// The forward orbit of `x`, including `x`.
    pub fn orbit(&self, x: usize) -> PointSet {
        let mut seen = PointSet::singleton(x);
        let mut y = self.map[x];
        while !seen.contains(y) {
            seen = seen.union(PointSet::singleton(y));
            y = self.map[y];
        }
        seen
    }
}

/// Open set assigned to each atom.
pub type Valuation = BTreeMap<String, PointSet>;

/// The truth set of `phi`.
pub fn evaluate(system: &FiniteSystem, val: &Valuation, phi: &Formula) -> Result<PointSet> {
    let p = system.poset();
    let all = p.all();
    Ok(match phi {
        Formula::Bottom => PointSet::EMPTY,
        Formula::Atom(name) => *val
            .get(name)
            .ok_or_else(|| Error::MissingAtom(name.clone()))?,
        Formula::And(a, b) => evaluate(system, val, a)?.intersect(evaluate(system, val, b)?),
        Formula::Or(a, b) => evaluate(system, val, a)?.union(evaluate(system, val, b)?),
        Formula::Implies(a, b) => {
            let sa = evaluate(system, val, a)?;
            let sb = evaluate(system, val, b)?;
            p.interior(PointSet((all.0 & !sa.0) | sb.0))
        }
        Formula::Next(a) => system.preimage(evaluate(system, val, a)?),
        Formula::Eventually(a) => {
            let base = evaluate(system, val, a)?;
            let mut z = base;
            loop {
                let next = base.union(system.preimage(z));
                if next == z {
                    break z;
                }
                z = next;
            }
        }
        Formula::Henceforth(a) => {
            let base = evaluate(system, val, a)?;
            let mut z = base;
            loop {
                let next = base.intersect(system.preimage(z));
                if next == z {
                    break p.interior(z);
                }
                z = next;
            }
        }
        Formula::Forall(a) => {
            if evaluate(system, val, a)? == all {
                all
            } else {
                PointSet::EMPTY
            }
        }
        Formula::Exists(a) => {
            if evaluate(system, val, a)?.is_empty() {
                PointSet::EMPTY
            } else {
                all
            }
        }
    })
}

/// Default bound on the number of formula evaluations in a validity check.
pub const MAX_EVALUATIONS: u64 = 1 << 20;

/// The first valuation (in canonical order) and point falsifying `phi`.
pub fn falsifying_valuation(
    system: &FiniteSystem,
    phi: &Formula,
    max_evaluations: u64,
) -> Result<Option<(Valuation, usize)>> {
    let atoms: Vec<String> = phi.atoms().into_iter().collect();
    let opens = system.poset().open_sets();
    let total = (opens.len() as u64).checked_pow(atoms.len() as u32);
    match total {
        Some(t) if t <= max_evaluations => {}
        _ => {
            return Err(Error::CapExceeded(format!(
                "{} open sets over {} atoms exceeds {max_evaluations} evaluations",
                opens.len(),
                atoms.len()
            )))
        }
    }
    let all = system.poset().all();
    let mut digits = vec![0usize; atoms.len()];
    loop {
        let val: Valuation = atoms
            .iter()
            .zip(&digits)
            .map(|(a, &d)| (a.clone(), opens[d]))
            .collect();
        let truth = evaluate(system, &val, phi)?;
        if truth != all {
            let point = (0..system.len()).find(|&x| !truth.contains(x)).unwrap();
            return Ok(Some((val, point)));
        }
        // Odometer with the last atom varying fastest.
        let mut k = atoms.len();
        loop {
            if k == 0 {
                return Ok(None);
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < opens.len() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Whether `phi` holds everywhere under every open valuation.
pub fn is_valid_on_system(system: &FiniteSystem, phi: &Formula, max_evaluations: u64) -> Result<bool> {
    Ok(falsifying_valuation(system, phi, max_evaluations)?.is_none())
}

/// Options for system enumeration.
#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    pub max_points: usize,
    /// Keep one system per isomorphism class (applied for `n ≥ 3`).
    pub dedup: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            max_points: 4,
            dedup: false,
        }
    }
}

/// All labelled systems on `n` points, posets in increasing relation-mask
/// order and maps in lexicographic order.
pub fn enumerate_systems(n: usize, opts: &EnumerateOptions) -> Result<Vec<FiniteSystem>> {
    if n == 0 || n > opts.max_points {
        return Err(Error::CapExceeded(format!(
            "system enumeration supports 1..={} points, got {n}",
            opts.max_points
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let perms = permutations(n);
    for mask in 0u64..1 << pairs.len() {
        let rel: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| pairs[k])
            .collect();
        // Keep only masks that are already reflexive-transitive partial orders.
        let poset = match FinitePoset::from_pairs(default_names(n), &rel) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let closed = pairs
            .iter()
            .enumerate()
            .all(|(k, &(a, b))| poset.leq(a, b) == (mask >> k & 1 == 1));
        if !closed {
            continue;
        }
        let mut map = vec![0usize; n];
        loop {
            let monotone = (0..n).all(|a| {
                (0..n).all(|b| !poset.leq(a, b) || poset.leq(map[a], map[b]))
            });
            if monotone {
                let keep = !opts.dedup || n < 3 || seen.insert(canonical_key(&poset, &map, &perms));
                if keep {
                    out.push(FiniteSystem {
                        poset: poset.clone(),
                        map: map.clone(),
                    });
                }
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                map[k] += 1;
                if map[k] < n {
                    break;
                }
                map[k] = 0;
            }
            if map.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    Ok(out)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Least (relation, map) encoding over all relabellings.
fn canonical_key(p: &FinitePoset, map: &[usize], perms: &[Vec<usize>]) -> (Vec<bool>, Vec<usize>) {
    let n = p.len();
    perms
        .iter()
        .map(|perm| {
            let mut inv = vec![0; n];
            for (i, &j) in perm.iter().enumerate() {
                inv[j] = i;
            }
            let rel: Vec<bool> = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .map(|(a, b)| p.leq(inv[a], inv[b]))
                .collect();
            let m: Vec<usize> = (0..n).map(|a| perm[map[inv[a]]]).collect();
            (rel, m)
        })
        .min()
        .expect("at least one permutation")
}

/// A falsifying system, valuation and point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Countermodel {
    pub system: FiniteSystem,
    pub valuation: Valuation,
    pub point: usize,
}

/// Searches systems of `1..=max_points` points in canonical order for a
/// countermodel. Systems with three or more points are taken up to
/// isomorphism.
pub fn find_countermodel(
    phi: &Formula,
    max_points: usize,
    max_evaluations: u64,
) -> Result<Option<Countermodel>> {
    let opts = EnumerateOptions {
        max_points: max_points.max(1),
        dedup: true,
    };
    let mut budget = max_evaluations;
    for n in 1..=max_points {
        for system in enumerate_systems(n, &opts)? {
            let opens = system.poset().open_sets().len() as u64;
            let cost = opens
                .checked_pow(phi.atoms().len() as u32)
                .unwrap_or(u64::MAX);
            if cost > budget {
                return Err(Error::CapExceeded(format!(
                    "countermodel search exceeded {max_evaluations} evaluations"
                )));
            }
            budget -= cost;
            if let Some((valuation, point)) = falsifying_valuation(&system, phi, cost)? {
                return Ok(Some(Countermodel {
                    system,
                    valuation,
                    point,
                }));
            }
        }
    }
    Ok(None)
}

/// Dynamical properties of a system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analysis {
    pub minimal: bool,
    pub recurrent: bool,
    pub connected: bool,
}

pub fn analyze(system: &FiniteSystem) -> Analysis {
    let p = system.poset();
    let n = system.len();
    let all = p.all();
    let minimal = (0..n).all(|x| p.closure(system.orbit(x)) == all);
    // Every nonempty open set contains some ↓x, so principal opens suffice.
    let recurrent = (0..n).all(|x| {
        let u = p.down(x);
        u.iter().any(|y| {
            let mut z = system.apply(y);
            for _ in 0..n {
                if u.contains(z) {
                    return true;
                }
                z = system.apply(z);
            }
            false
        })
    });
    let mut reached = PointSet::singleton(0);
    let mut frontier = vec![0];
    while let Some(x) = frontier.pop() {
        for y in 0..n {
            if !reached.contains(y) && p.comparable(x, y) {
                reached = reached.union(PointSet::singleton(y));
                frontier.push(y);
            }
        }
    }
    Analysis {
        minimal,
        recurrent,
        connected: reached == all,
    }
}

/// A random system on `n` points, determined by `seed`.
pub fn random_system(n: usize, seed: u64) -> FiniteSystem {
    assert!((1..=64).contains(&n), "random_system needs 1..=64 points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.3) {
                pairs.push((a, b));
            }
        }
    }
    let poset = FinitePoset::from_pairs(default_names(n), &pairs).expect("a DAG closes to a poset");
    for _ in 0..100 {
        if let Some(map) = random_monotone_map(&poset, &mut rng) {
            return FiniteSystem { poset, map };
        }
    }
    let map = (0..n).collect();
    FiniteSystem { poset, map }
}

/// Assigns images from the top down; each image must lie below the images of
/// all points above. Fails when those images have no common lower bound.
fn random_monotone_map<R: Rng>(p: &FinitePoset, rng: &mut R) -> Option<Vec<usize>> {
    let n = p.len();
    let mut map = vec![usize::MAX; n];
    // Edges only go from lower to higher indices, so higher indices come first.
    for x in (0..n).rev() {
        let mut allowed = p.all();
        for z in x + 1..n {
            if p.leq(x, z) {
                allowed = allowed.intersect(p.down(map[z]));
            }
        }
        let options: Vec<usize> = allowed.iter().collect();
        if options.is_empty() {
            return None;
        }
        map[x] = options[rng.gen_range(0..options.len())];
    }
    Some(map)
}

/// A uniformly chosen open set.
pub fn random_open_set<R: Rng>(p: &FinitePoset, rng: &mut R) -> PointSet {
    let opens = p.open_sets();
    opens[rng.gen_range(0..opens.len())]
}

#[derive(Serialize, Deserialize)]
struct SystemJson {
    elements: Vec<String>,
    order: Vec<(String, String)>,
    map: BTreeMap<String, String>,
    #[serde(default)]
    valuation: BTreeMap<String, Vec<String>>,
}

/// Parses a system file.
pub fn system_from_json(text: &str) -> Result<(FiniteSystem, Valuation)> {
    let raw: SystemJson = serde_json::from_str(text).map_err(|e| {
        Error::schema(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let mut seen = BTreeSet::new();
    for (i, e) in raw.elements.iter().enumerate() {
        if !seen.insert(e.as_str()) {
            return Err(Error::schema(format!("elements[{i}]"), format!("duplicate element {e:?}")));
        }
    }
    let find = |path: String, name: &str| {
        raw.elements
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| Error::schema(path, format!("unknown element {name:?}")))
    };
    let mut pairs = Vec::new();
    for (i, (a, b)) in raw.order.iter().enumerate() {
        pairs.push((find(format!("order[{i}][0]"), a)?, find(format!("order[{i}][1]"), b)?));
    }
    let poset = FinitePoset::from_pairs(raw.elements.clone(), &pairs)?;
    let mut map = vec![usize::MAX; poset.len()];
    for (k, v) in &raw.map {
        let x = find(format!("map.{k}"), k)?;
        map[x] = find(format!("map.{k}"), v)?;
    }
    if let Some(x) = map.iter().position(|&v| v == usize::MAX) {
        return Err(Error::schema("map", format!("no image for {:?}", raw.elements[x])));
    }
    let system = FiniteSystem::new(poset, map)?;
    let mut val = Valuation::new();
    for (atom, members) in &raw.valuation {
        let mut s = PointSet::EMPTY;
        for (i, m) in members.iter().enumerate() {
            s = s.union(PointSet::singleton(find(format!("valuation.{atom}[{i}]"), m)?));
        }
        if !system.poset().is_open(s) {
            return Err(Error::InvalidSystem(format!(
                "valuation of {atom} is not downward closed"
            )));
        }
        val.insert(atom.clone(), s);
    }
    Ok((system, val))
}

/// Serializes a system; `order` lists every strict pair.
pub fn system_to_json(system: &FiniteSystem, val: &Valuation) -> String {
    let p = system.poset();
    let names = p.names();
    let n = p.len();
    let order = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && p.leq(a, b))
        .map(|(a, b)| (names[a].clone(), names[b].clone()))
        .collect();
    let map = (0..n)
        .map(|x| (names[x].clone(), names[system.apply(x)].clone()))
        .collect();
    let valuation = val
        .iter()
        .map(|(k, s)| (k.clone(), s.iter().map(|x| names[x].clone()).collect()))
        .collect();
    let raw = SystemJson {
        elements: names.to_vec(),
        order,
        map,
        valuation,
    };
    serde_json::to_string_pretty(&raw).expect("system serializes")
}
