//! Σ-moments: finite rooted trees of types.
//!
//! A [`Moment`] is stored canonically (children sorted), so two moments are
//! isomorphic exactly when they are equal. Nodes are addressed by preorder
//! position; node 0 is the root. The order on nodes has the root on top:
//! `v ≼ w` when `w` is an ancestor-or-self of `v`, and labels grow downward.
//!
//! Irreducibility is decided by a local criterion. A moment is reducible iff
//! (a) some node has a child with the same label, or (b) the subtree of some
//! node maps monotonically and label-preservingly into the subtree of one of
//! its siblings. Both conditions give a proper reduction directly. Conversely,
//! take a proper reduction π and a highest node `y` it moves: the parent of
//! `y` is fixed, so `π(y)` lies in the parent, below `y` (forcing (a)), or in
//! a sibling's subtree (forcing (b)). The brute-force search in the tests
//! cross-checks this.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{SigmaContext, TypeSet};

/// A finite labelled tree in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Moment {
    label: TypeSet,
    children: Vec<Moment>,
}

impl Moment {
    pub fn leaf(label: TypeSet) -> Moment {
        Moment {
            label,
            children: Vec::new(),
        }
    }

    /// Builds a tree without checking moment conditions.
    pub fn new(label: TypeSet, mut children: Vec<Moment>) -> Moment {
        children.sort();
        Moment { label, children }
    }

    pub fn label(&self) -> TypeSet {
        self.label
    }

    pub fn children(&self) -> &[Moment] {
        &self.children
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Moment::size).sum::<usize>()
    }

    /// Number of nodes on a longest root-to-leaf chain.
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(Moment::height).max().unwrap_or(0)
    }

    /// Nodes in preorder.
    pub fn nodes(&self) -> Vec<&Moment> {
        let mut out = Vec::with_capacity(self.size());
        fn walk<'a>(m: &'a Moment, out: &mut Vec<&'a Moment>) {
            out.push(m);
            for c in &m.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// The restriction to the down-set of preorder node `w`.
    pub fn submoment(&self, w: usize) -> Result<Moment> {
        self.nodes()
            .get(w)
            .map(|m| (*m).clone())
            .ok_or(Error::UnknownNode(w))
    }

    /// All distinct submoments, including `self`.
    pub fn submoments(&self) -> BTreeSet<Moment> {
        self.nodes().into_iter().cloned().collect()
    }

    /// Whether `self ≼_Σ other`, i.e. `self` is a submoment of `other`.
    pub fn is_submoment_of(&self, other: &Moment) -> bool {
        other.nodes().into_iter().any(|n| n == self)
    }

    /// Checks types, label continuity and revocation.
    pub fn check(&self, sigma: &SigmaContext) -> std::result::Result<(), String> {
        let flat = Flat::new(self);
        for i in 0..flat.len() {
            let l = flat.label(i);
            if !sigma.is_type(l) {
                return Err(format!("node {i}: {} is not a type", sigma.display_set(l)));
            }
            for &c in &flat.kids[i] {
                if !l.is_subset(flat.label(c)) {
                    return Err(format!("node {c}: label does not contain its parent's"));
                }
            }
            for d in sigma.defects(l).iter() {
                if !(i + 1..flat.end[i]).any(|j| sigma.revokes(flat.label(j), d)) {
                    return Err(format!(
                        "node {i}: defect {} is not revoked",
                        sigma.formula(d)
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether no proper reduction exists.
    pub fn is_irreducible(&self) -> bool {
        let flat = Flat::new(self);
        if flat.equal_label_child().is_some() {
            return false;
        }
        flat.embedded_sibling().is_none()
    }

    /// The irreducible reduct; unique up to isomorphism and of minimal size.
    pub fn reduce(&self) -> Moment {
        let mut m = self.clone();
        while let Some(next) = reduce_step(&m) {
            m = next;
        }
        m
    }

    /// Renders the tree with formulas, one node per line.
    pub fn render(&self, sigma: &SigmaContext) -> String {
        let mut out = String::new();
        fn go(m: &Moment, sigma: &SigmaContext, depth: usize, out: &mut String) {
            out.push_str(&"  ".repeat(depth));
            out.push_str(&sigma.display_set(m.label));
            out.push('\n');
            for c in &m.children {
                go(c, sigma, depth + 1, out);
            }
        }
        go(self, sigma, 0, &mut out);
        out
    }
}

/// Grafts `children` under a new root labelled `phi`, checking the kit
/// conditions: `phi` is contained in every child root label and every defect
/// of `phi` is missing from some child root label.
pub fn graft<I>(sigma: &SigmaContext, phi: TypeSet, children: I) -> Result<Moment>
where
    I: IntoIterator<Item = Moment>,
{
    let set: BTreeSet<Moment> = children.into_iter().collect();
    for (k, u) in set.iter().enumerate() {
        if !phi.is_subset(u.label) {
            return Err(Error::NotAKit(format!(
                "child {k} has root label {}, which does not contain {}",
                sigma.display_set(u.label),
                sigma.display_set(phi)
            )));
        }
    }
    for d in sigma.defects(phi).iter() {
        if !set.iter().any(|u| !u.label.contains(d)) {
            return Err(Error::NotAKit(format!(
                "defect {} is not revoked by any child",
                sigma.formula(d)
            )));
        }
    }
    Ok(Moment {
        label: phi,
        children: set.into_iter().collect(),
    })
}

/// Whether `w` is a temporal successor of `v`: some sensible, continuous
/// relation between their nodes relates the roots.
///
/// The pairs `(a, b)` with sensible labels such that every child of `a` has a
/// related node below `b` form the largest such relation; it is computed
/// bottom-up over `a`.
pub fn temporal_successor(sigma: &SigmaContext, v: &Moment, w: &Moment) -> bool {
    let fv = Flat::new(v);
    let fw = Flat::new(w);
    let mut rel = vec![vec![false; fw.len()]; fv.len()];
    for a in (0..fv.len()).rev() {
        for b in 0..fw.len() {
            rel[a][b] = sigma.sensible_pair(fv.label(a), fw.label(b))
                && fv.kids[a]
                    .iter()
                    .all(|&c| (b..fw.end[b]).any(|b2| rel[c][b2]));
        }
    }
    rel[0][0]
}

/// Preorder view of a moment.
pub(crate) struct Flat<'a> {
    nodes: Vec<&'a Moment>,
    kids: Vec<Vec<usize>>,
    /// `end[i]` is one past the last node below `i`.
    end: Vec<usize>,
}

impl<'a> Flat<'a> {
    pub(crate) fn new(m: &'a Moment) -> Flat<'a> {
        let mut flat = Flat {
            nodes: Vec::new(),
            kids: Vec::new(),
            end: Vec::new(),
        };
        flat.push(m);
        flat
    }

    fn push(&mut self, m: &'a Moment) -> usize {
        let i = self.nodes.len();
        self.nodes.push(m);
        self.kids.push(Vec::new());
        self.end.push(0);
        for c in &m.children {
            let j = self.push(c);
            self.kids[i].push(j);
        }
        self.end[i] = self.nodes.len();
        i
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn label(&self, i: usize) -> TypeSet {
        self.nodes[i].label
    }

    fn equal_label_child(&self) -> Option<(usize, usize)> {
        (0..self.len()).find_map(|i| {
            self.kids[i]
                .iter()
                .find(|&&c| self.label(c) == self.label(i))
                .map(|&c| (i, c))
        })
    }

    /// `emb[a][t]`: the subtree at `a` maps into the subtree at `t` with `a ↦ t`.
    fn embeddings(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut emb = vec![vec![false; n]; n];
        for a in (0..n).rev() {
            for t in 0..n {
                emb[a][t] = self.label(a) == self.label(t)
                    && self.kids[a]
                        .iter()
                        .all(|&c| (t..self.end[t]).any(|t2| emb[c][t2]));
            }
        }
        emb
    }

    /// A pair of distinct siblings `(x, s)` where `x` embeds below `s`.
    fn embedded_sibling(&self) -> Option<(usize, usize)> {
        let emb = self.embeddings();
        for i in 0..self.len() {
            for &x in &self.kids[i] {
                for &s in &self.kids[i] {
                    if x != s && (s..self.end[s]).any(|t| emb[x][t]) {
                        return Some((x, s));
                    }
                }
            }
        }
        None
    }
}

fn reduce_step(m: &Moment) -> Option<Moment> {
    if let Some(k) = m.children.iter().position(|c| c.label == m.label) {
        let mut children = m.children.clone();
        let absorbed = children.remove(k);
        children.extend(absorbed.children);
        return Some(Moment::new(m.label, children));
    }
    for (k, x) in m.children.iter().enumerate() {
        for (j, s) in m.children.iter().enumerate() {
            if k != j && embeds_below(x, s) {
                let mut children = m.children.clone();
                children.remove(k);
                return Some(Moment::new(m.label, children));
            }
        }
    }
    for (k, c) in m.children.iter().enumerate() {
        if let Some(r) = reduce_step(c) {
            let mut children = m.children.clone();
            children[k] = r;
            return Some(Moment::new(m.label, children));
        }
    }
    None
}

/// Whether `x` maps monotonically and label-preservingly into the nodes of `t`.
pub fn embeds_below(x: &Moment, t: &Moment) -> bool {
    let joint = Moment {
        label: TypeSet::EMPTY,
        children: vec![x.clone(), t.clone()],
    };
    let flat = Flat::new(&joint);
    let emb = flat.embeddings();
    let (xi, ti) = (1, flat.end[1]);
    (ti..flat.end[ti]).any(|t2| emb[xi][t2])
}

/// Handle of an interned moment.
pub type MomentId = u32;

/// Resource limits for enumeration.
#[derive(Clone, Debug)]
pub struct Caps {
    pub max_moments: usize,
    /// Defaults to #Σ+1, which every irreducible respects.
    pub max_height: Option<usize>,
    pub deadline: Option<Instant>,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_moments: 50_000,
            max_height: None,
            deadline: None,
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    label: TypeSet,
    children: Vec<MomentId>,
    height: usize,
    size: usize,
}

/// Interned moments with handle equality equivalent to isomorphism.
#[derive(Clone, Debug)]
pub struct MomentStore {
    sigma: SigmaContext,
    entries: Vec<Entry>,
    index: HashMap<(TypeSet, Vec<MomentId>), MomentId>,
    below: Vec<Vec<MomentId>>,
    incomplete: Option<String>,
}

impl MomentStore {
    pub fn new(sigma: SigmaContext) -> MomentStore {
        MomentStore {
            sigma,
            entries: Vec::new(),
            index: HashMap::new(),
            below: Vec::new(),
            incomplete: None,
        }
    }

    pub fn sigma(&self) -> &SigmaContext {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = MomentId> {
        0..self.entries.len() as MomentId
    }

    /// False when a cap stopped enumeration early.
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_none()
    }

    pub fn incomplete_reason(&self) -> Option<&str> {
        self.incomplete.as_deref()
    }

    pub fn label(&self, id: MomentId) -> TypeSet {
        self.entries[id as usize].label
    }

    pub fn children(&self, id: MomentId) -> &[MomentId] {
        &self.entries[id as usize].children
    }

    pub fn height(&self, id: MomentId) -> usize {
        self.entries[id as usize].height
    }

    pub fn size(&self, id: MomentId) -> usize {
        self.entries[id as usize].size
    }

    /// Handles of all submoments, including `id`, in increasing order.
    pub fn below(&self, id: MomentId) -> &[MomentId] {
        &self.below[id as usize]
    }

    pub fn get(&self, m: &Moment) -> Option<MomentId> {
        let mut kids = Vec::with_capacity(m.children.len());
        for c in &m.children {
            kids.push(self.get(c)?);
        }
        kids.sort_unstable();
        self.index.get(&(m.label, kids)).copied()
    }

    pub fn intern(&mut self, m: &Moment) -> MomentId {
        let kids: Vec<MomentId> = m.children.iter().map(|c| self.intern(c)).collect();
        self.intern_node(m.label, kids)
    }

    fn intern_node(&mut self, label: TypeSet, mut kids: Vec<MomentId>) -> MomentId {
        kids.sort_unstable();
        if let Some(&id) = self.index.get(&(label, kids.clone())) {
            return id;
        }
        let id = self.entries.len() as MomentId;
        let height = 1 + kids.iter().map(|&k| self.height(k)).max().unwrap_or(0);
        let size = 1 + kids.iter().map(|&k| self.size(k)).sum::<usize>();
        let mut below: Vec<MomentId> = kids
            .iter()
            .flat_map(|&k| self.below[k as usize].iter().copied())
            .collect();
        below.push(id);
        below.sort_unstable();
        below.dedup();
        self.below.push(below);
        self.index.insert((label, kids.clone()), id);
        self.entries.push(Entry {
            label,
            children: kids,
            height,
            size,
        });
        id
    }

    /// Materializes the canonical tree of `id`.
    pub fn moment(&self, id: MomentId) -> Moment {
        let e = &self.entries[id as usize];
        Moment::new(e.label, e.children.iter().map(|&c| self.moment(c)).collect())
    }

    /// Whether `a` maps into some node of `b`.
    fn embeds(&self, a: MomentId, b: MomentId, memo: &mut HashMap<(MomentId, MomentId), bool>) -> bool {
        if !self.label(b).is_subset(self.label(a)) {
            return false;
        }
        self.below(b)
            .iter()
            .any(|&t| self.embeds_at(a, t, memo))
    }

    fn embeds_at(
        &self,
        a: MomentId,
        t: MomentId,
        memo: &mut HashMap<(MomentId, MomentId), bool>,
    ) -> bool {
        if self.label(a) != self.label(t) {
            return false;
        }
        if a == t {
            return true;
        }
        if let Some(&r) = memo.get(&(a, t)) {
            return r;
        }
        let r = self
            .children(a)
            .iter()
            .all(|&c| self.below(t).iter().any(|&t2| self.embeds_at(c, t2, memo)));
        memo.insert((a, t), r);
        r
    }
}

/// Enumerates all irreducible Σ-moments.
pub fn enumerate_irreducibles(sigma: &SigmaContext, caps: &Caps) -> MomentStore {
    let types = sigma.enumerate_types();
    enumerate_irreducibles_over(sigma, &types, caps)
}

/// Enumerates the irreducible Σ-moments all of whose node labels lie in `types`.
///
/// Types are processed by decreasing size, so every candidate child (root
/// label strictly larger) is already interned. For each root type the
/// children range over antichains under mutual non-embedding that revoke
/// every defect; by the local criterion the graft is then irreducible.
pub fn enumerate_irreducibles_over(
    sigma: &SigmaContext,
    types: &[TypeSet],
    caps: &Caps,
) -> MomentStore {
    let mut order: Vec<TypeSet> = types.iter().copied().filter(|&t| sigma.is_type(t)).collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    order.dedup();
    let max_height = caps.max_height.unwrap_or(sigma.len() + 1);
    let mut gen = Generator {
        store: MomentStore::new(sigma.clone()),
        memo: HashMap::new(),
        caps,
        max_height,
        ticks: 0,
    };
    for phi in order {
        let cands: Vec<MomentId> = gen
            .store
            .ids()
            .filter(|&id| phi.is_strict_subset(gen.store.label(id)))
            .collect();
        let defects = sigma.defects(phi);
        let cover: Vec<TypeSet> = cands
            .iter()
            .map(|&c| TypeSet(defects.0 & !gen.store.label(c).0))
            .collect();
        let mut reach = vec![TypeSet::EMPTY; cands.len() + 1];
        for i in (0..cands.len()).rev() {
            reach[i] = reach[i + 1].union(cover[i]);
        }
        let mut chosen = Vec::new();
        let job = Job {
            phi,
            defects,
            cands: &cands,
            cover: &cover,
            reach: &reach,
        };
        if gen.extend(&job, 0, &mut chosen, TypeSet::EMPTY).is_err() {
            break;
        }
    }
    gen.store
}

struct Generator<'c> {
    store: MomentStore,
    memo: HashMap<(MomentId, MomentId), bool>,
    caps: &'c Caps,
    max_height: usize,
    ticks: u64,
}

struct Job<'a> {
    phi: TypeSet,
    defects: TypeSet,
    cands: &'a [MomentId],
    cover: &'a [TypeSet],
    reach: &'a [TypeSet],
}

struct Stop;

impl Generator<'_> {
    fn extend(
        &mut self,
        job: &Job<'_>,
        i: usize,
        chosen: &mut Vec<MomentId>,
        covered: TypeSet,
    ) -> std::result::Result<(), Stop> {
        self.ticks += 1;
        if self.ticks.is_multiple_of(4096) {
            if let Some(deadline) = self.caps.deadline {
                if Instant::now() >= deadline {
                    self.store.incomplete = Some("deadline reached".into());
                    return Err(Stop);
                }
            }
        }
        if !job.defects.is_subset(covered.union(job.reach[i])) {
            return Ok(());
        }
        if i == job.cands.len() {
            return self.emit(job.phi, chosen);
        }
        let c = job.cands[i];
        let compatible = chosen.iter().all(|&o| {
            !self.store.embeds(c, o, &mut self.memo) && !self.store.embeds(o, c, &mut self.memo)
        });
        if compatible {
            chosen.push(c);
            let r = self.extend(job, i + 1, chosen, covered.union(job.cover[i]));
            chosen.pop();
            r?;
        }
        self.extend(job, i + 1, chosen, covered)
    }

    fn emit(&mut self, phi: TypeSet, chosen: &[MomentId]) -> std::result::Result<(), Stop> {
        let height = 1 + chosen.iter().map(|&k| self.store.height(k)).max().unwrap_or(0);
        if height > self.max_height {
            self.store.incomplete = Some(format!("moment of height {height} exceeds the cap"));
            return Ok(());
        }
        if self.store.len() >= self.caps.max_moments {
            self.store.incomplete = Some(format!(
                "more than {} irreducible moments",
                self.caps.max_moments
            ));
            return Err(Stop);
        }
        self.store.intern_node(phi, chosen.to_vec());
        Ok(())
    }
}

/// The temporal-successor relation on a store, as sorted successor lists.
#[derive(Clone, Debug)]
pub struct SuccessorTable {
    succ: Vec<Vec<MomentId>>,
}

impl SuccessorTable {
    /// Computes `S_Σ` on all pairs, children before parents.
    pub fn new(store: &MomentStore) -> SuccessorTable {
        let sigma = store.sigma();
        let mut by_label: HashMap<TypeSet, Vec<MomentId>> = HashMap::new();
        for id in store.ids() {
            by_label.entry(store.label(id)).or_default().push(id);
        }
        let mut labels: Vec<TypeSet> = by_label.keys().copied().collect();
        labels.sort();
        let mut order: Vec<MomentId> = store.ids().collect();
        order.sort_by_key(|&id| (store.height(id), id));
        let mut succ: Vec<Vec<MomentId>> = vec![Vec::new(); store.len()];
        for v in order {
            let lv = store.label(v);
            let mut out = Vec::new();
            for &lw in &labels {
                if !sigma.sensible_pair(lv, lw) {
                    continue;
                }
                for &w in &by_label[&lw] {
                    let ok = store.children(v).iter().all(|&c| {
                        let sc = &succ[c as usize];
                        store
                            .below(w)
                            .iter()
                            .any(|t| sc.binary_search(t).is_ok())
                    });
                    if ok {
                        out.push(w);
                    }
                }
            }
            out.sort_unstable();
            succ[v as usize] = out;
        }
        SuccessorTable { succ }
    }

    pub fn successors(&self, v: MomentId) -> &[MomentId] {
        &self.succ[v as usize]
    }

    pub fn holds(&self, v: MomentId, w: MomentId) -> bool {
        self.succ[v as usize].binary_search(&w).is_ok()
    }
}

#[derive(Serialize, Deserialize)]
struct MomentJson {
    label: Vec<usize>,
    children: Vec<MomentJson>,
}

impl From<&Moment> for MomentJson {
    fn from(m: &Moment) -> Self {
        MomentJson {
            label: m.label.to_indices(),
            children: m.children.iter().map(MomentJson::from).collect(),
        }
    }
}

impl MomentJson {
    fn into_moment(self) -> std::result::Result<Moment, String> {
        if let Some(&i) = self.label.iter().find(|&&i| i >= 64) {
            return Err(format!("label index {i} out of range"));
        }
        let mut children = Vec::with_capacity(self.children.len());
        for c in self.children {
            children.push(c.into_moment()?);
        }
        Ok(Moment::new(TypeSet::from_indices(self.label), children))
    }
}

impl Serialize for Moment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MomentJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Moment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MomentJson::deserialize(d)?
            .into_moment()
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::formula::Formula;

    pub(crate) fn sigma(text: &str) -> SigmaContext {
        SigmaContext::new(&Formula::parse(text).unwrap()).unwrap()
    }

    pub(crate) fn set(s: &SigmaContext, items: &[&str]) -> TypeSet {
        let fs: Vec<Formula> = items.iter().map(|t| Formula::parse(t).unwrap()).collect();
        s.set_of(&fs).unwrap()
    }

    pub(crate) const PHI: &str = "A(~p | <>p) -> (~<>p | <>p)";

    /// The labels u, v, w of the worked falsifying quasimodel.
    pub(crate) fn worked_labels(s: &SigmaContext) -> (TypeSet, TypeSet, TypeSet) {
        let all = "A(~p | <>p)";
        let theta = "~<>p | <>p";
        (
            set(s, &[all, "~p | <>p", "~p"]),
            set(s, &["<>p", "~p", "~p | <>p", PHI, theta, all]),
            set(s, &["p", "~p | <>p", PHI, theta, all, "<>p"]),
        )
    }

    /// Every idempotent, monotone, label-preserving self-map, by search.
    /// Returns the images (as node masks) of all such maps.
    fn reduction_images(m: &Moment) -> Vec<Vec<usize>> {
        let nodes = m.nodes();
        let n = nodes.len();
        let flat = Flat::new(m);
        let mut parent = vec![usize::MAX; n];
        for i in 0..n {
            for &c in &flat.kids[i] {
                parent[c] = i;
            }
        }
        let below = |a: usize, b: usize| b <= a && a < flat.end[b];
        let mut out = Vec::new();
        let mut pi = vec![0usize; n];
        fn go(
            i: usize,
            n: usize,
            pi: &mut Vec<usize>,
            parent: &[usize],
            flat: &Flat<'_>,
            below: &dyn Fn(usize, usize) -> bool,
            out: &mut Vec<Vec<usize>>,
        ) {
            if i == n {
                if (0..n).all(|j| pi[pi[j]] == pi[j]) {
                    let mut img: Vec<usize> = pi.clone();
                    img.sort_unstable();
                    img.dedup();
                    out.push(img);
                }
                return;
            }
            for t in 0..n {
                if flat.label(t) != flat.label(i) {
                    continue;
                }
                if i > 0 && !below(t, pi[parent[i]]) {
                    continue;
                }
                pi[i] = t;
                go(i + 1, n, pi, parent, flat, below, out);
            }
        }
        go(0, n, &mut pi, &parent, &flat, &below, &mut out);
        out
    }

    /// The sub-collection `img` with the induced tree order.
    fn restrict(m: &Moment, img: &[usize]) -> Moment {
        let flat = Flat::new(m);
        let keep: BTreeSet<usize> = img.iter().copied().collect();
        fn build(i: usize, flat: &Flat<'_>, keep: &BTreeSet<usize>) -> Vec<Moment> {
            let mut kids = Vec::new();
            for &c in &flat.kids[i] {
                kids.extend(build(c, flat, keep));
            }
            if keep.contains(&i) {
                vec![Moment::new(flat.label(i), kids)]
            } else {
                kids
            }
        }
        let mut top = build(0, &flat, &keep);
        assert_eq!(top.len(), 1, "image lacks a greatest element");
        top.pop().unwrap()
    }

    pub(crate) fn brute_irreducible(m: &Moment) -> bool {
        let n = m.size();
        reduction_images(m).iter().all(|img| img.len() == n)
    }

    fn brute_reduce(m: &Moment) -> Moment {
        let imgs = reduction_images(m);
        let min = imgs.iter().map(Vec::len).min().unwrap();
        imgs.iter()
            .filter(|i| i.len() == min)
            .map(|i| restrict(m, i))
            .min()
            .unwrap()
    }

    /// Every moment over Σ with at most `max_nodes` nodes.
    pub(crate) fn all_moments(s: &SigmaContext, max_nodes: usize) -> Vec<Moment> {
        let types = s.enumerate_types();
        // trees[k]: trees (continuity only) with exactly k nodes, any root.
        let mut trees: Vec<Vec<Moment>> = vec![Vec::new(); max_nodes + 1];
        for k in 1..=max_nodes {
            let mut acc = BTreeSet::new();
            for &t in &types {
                for kids in forests(&trees, k - 1, t) {
                    acc.insert(Moment::new(t, kids));
                }
            }
            trees[k] = acc.into_iter().collect();
        }
        trees
            .into_iter()
            .flatten()
            .filter(|m| m.check(s).is_ok())
            .collect()
    }

    /// Multisets of trees with `k` nodes in total, each root containing `t`.
    fn forests(trees: &[Vec<Moment>], k: usize, t: TypeSet) -> Vec<Vec<Moment>> {
        fn go(
            trees: &[Vec<Moment>],
            k: usize,
            t: TypeSet,
            min: Option<&Moment>,
            out: &mut Vec<Vec<Moment>>,
            cur: &mut Vec<Moment>,
        ) {
            if k == 0 {
                out.push(cur.clone());
                return;
            }
            for size in 1..=k {
                for tree in &trees[size] {
                    if !t.is_subset(tree.label()) {
                        continue;
                    }
                    if let Some(m) = min {
                        if (tree.size(), tree) < (m.size(), m) {
                            continue;
                        }
                    }
                    cur.push(tree.clone());
                    go(trees, k - size, t, Some(tree), out, cur);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(trees, k, t, None, &mut out, &mut Vec::new());
        out
    }

    /// Every relation between the nodes of `v` and `w`, by search.
    fn brute_successor(s: &SigmaContext, v: &Moment, w: &Moment) -> bool {
        let fv = Flat::new(v);
        let fw = Flat::new(w);
        let pairs: Vec<(usize, usize)> = (0..fv.len())
            .flat_map(|a| (0..fw.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| s.sensible_pair(fv.label(a), fw.label(b)))
            .collect();
        (0u64..1 << pairs.len()).any(|mask| {
            let rel: Vec<(usize, usize)> = (0..pairs.len())
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| pairs[k])
                .collect();
            rel.contains(&(0, 0))
                && rel.iter().all(|&(a, b)| {
                    (a..fv.end[a]).all(|a2| {
                        (b..fw.end[b]).any(|b2| rel.contains(&(a2, b2)))
                    })
                })
        })
    }

    #[test]
    fn graft_checks_the_kit() {
        let s = sigma(PHI);
        let (u, v, _) = worked_labels(&s);
        assert!(matches!(graft(&s, u, []), Err(Error::NotAKit(_))));
        let m_u = graft(&s, u, [Moment::leaf(v)]).unwrap();
        assert_eq!(m_u.size(), 2);
        assert_eq!(m_u.label(), u);
        assert!(m_u.check(&s).is_ok());
        assert_eq!(m_u.submoment(1).unwrap(), Moment::leaf(v));
        assert_eq!(m_u.submoment(0).unwrap(), m_u);
        assert!(matches!(m_u.submoment(2), Err(Error::UnknownNode(2))));
        let plain = sigma("p");
        assert_eq!(graft(&plain, TypeSet(0), []).unwrap(), Moment::leaf(TypeSet(0)));
        let bad = graft(&plain, TypeSet(1), [Moment::leaf(TypeSet(0))]);
        assert!(matches!(bad, Err(Error::NotAKit(_))));
    }

    #[test]
    fn submoment_of_a_chain() {
        let c = Moment::new(
            TypeSet(0),
            vec![Moment::new(TypeSet(1), vec![Moment::leaf(TypeSet(3))])],
        );
        assert_eq!(
            c.submoment(1).unwrap(),
            Moment::new(TypeSet(1), vec![Moment::leaf(TypeSet(3))])
        );
        assert_eq!(c.height(), 3);
        assert!(c.submoment(2).unwrap().is_submoment_of(&c));
    }

    #[test]
    fn irreducibility_examples() {
        let e = TypeSet(0);
        assert!(Moment::leaf(e).is_irreducible());
        assert!(!Moment::new(e, vec![Moment::leaf(e)]).is_irreducible());
        let t = Moment::new(TypeSet(1), vec![Moment::leaf(TypeSet(3))]);
        let dup = Moment::new(e, vec![t.clone(), t.clone()]);
        assert!(!dup.is_irreducible());
        assert_eq!(dup.reduce(), Moment::new(e, vec![t]));
        assert_eq!(Moment::new(e, vec![Moment::leaf(e)]).reduce(), Moment::leaf(e));
    }

    #[test]
    fn strict_growth_and_distinct_siblings_do_not_imply_irreducible() {
        // The leaf {p,q} embeds into the subtree of its sibling {q}.
        let s = sigma("p & q");
        let q = set(&s, &["q"]);
        let pq = set(&s, &["p", "q", "p & q"]);
        let m = Moment::new(
            TypeSet::EMPTY,
            vec![Moment::new(q, vec![Moment::leaf(pq)]), Moment::leaf(pq)],
        );
        assert!(m.check(&s).is_ok());
        assert!(!m.is_irreducible());
        assert!(!brute_irreducible(&m));
    }

    #[test]
    fn irreducibility_matches_reduction_search() {
        for text in ["<>p", "p & q", "p -> q", "Xp"] {
            let s = sigma(text);
            for m in all_moments(&s, 5) {
                assert_eq!(m.is_irreducible(), brute_irreducible(&m), "{m:?}");
            }
        }
    }

    #[test]
    fn reduce_matches_reduction_search() {
        for text in ["<>p", "p & q", "p -> q"] {
            let s = sigma(text);
            for m in all_moments(&s, 5) {
                let r = m.reduce();
                assert_eq!(r, brute_reduce(&m), "{m:?}");
                assert!(r.is_irreducible());
                assert_eq!(r.label(), m.label());
                assert!(r.size() <= m.size());
                assert!(r.check(&s).is_ok());
            }
        }
    }

    #[test]
    fn enumeration_counts() {
        let caps = Caps::default();
        let empty = SigmaContext::from_formulas(vec![]).unwrap();
        assert_eq!(enumerate_irreducibles(&empty, &caps).len(), 1);
        let p = sigma("p");
        let store = enumerate_irreducibles(&p, &caps);
        assert!(store.is_complete());
        let got: BTreeSet<Moment> = store.ids().map(|id| store.moment(id)).collect();
        let want: BTreeSet<Moment> = [
            Moment::leaf(TypeSet(0)),
            Moment::leaf(TypeSet(1)),
            Moment::new(TypeSet(0), vec![Moment::leaf(TypeSet(1))]),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for text in ["p", "<>p", "Xp", "p -> q"] {
            let s = sigma(text);
            let store = enumerate_irreducibles(&s, &Caps::default());
            assert!(store.is_complete());
            let limit = 5;
            let got: BTreeSet<Moment> = store
                .ids()
                .map(|id| store.moment(id))
                .filter(|m| m.size() <= limit)
                .collect();
            let brute: BTreeSet<Moment> = all_moments(&s, limit)
                .into_iter()
                .filter(brute_irreducible)
                .collect();
            assert_eq!(got, brute, "{text}");
        }
    }

    #[test]
    fn enumerated_irreducibles_are_well_formed() {
        let s = sigma("<>p");
        let store = enumerate_irreducibles(&s, &Caps::default());
        let chain = Moment::new(
            TypeSet(0),
            vec![Moment::new(TypeSet(0b10), vec![Moment::leaf(TypeSet(0b11))])],
        );
        assert!(store.get(&chain).is_some());
        for id in store.ids() {
            let m = store.moment(id);
            assert!(m.check(&s).is_ok());
            assert!(m.is_irreducible());
            assert!(m.height() <= s.len() + 1);
            for sub in m.submoments() {
                assert!(store.get(&sub).is_some());
            }
            assert_eq!(store.get(&m), Some(id));
        }
    }

    #[test]
    fn capped_enumeration_is_flagged() {
        let s = sigma("p -> q");
        let caps = Caps {
            max_moments: 3,
            ..Caps::default()
        };
        let store = enumerate_irreducibles(&s, &caps);
        assert!(!store.is_complete());
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn worked_example_successors() {
        let s = sigma(PHI);
        let (u, v, w) = worked_labels(&s);
        let m_v = Moment::leaf(v);
        let m_w = Moment::leaf(w);
        let m_u = graft(&s, u, [m_v.clone()]).unwrap();
        assert!(temporal_successor(&s, &m_u, &m_u));
        assert!(temporal_successor(&s, &m_v, &m_v));
        assert!(temporal_successor(&s, &m_v, &m_w));
        assert!(temporal_successor(&s, &m_w, &m_w));
        assert!(!temporal_successor(&s, &m_u, &m_v));
        let x = sigma("Xp");
        let nx = set(&x, &["Xp"]);
        let p = set(&x, &["p"]);
        assert!(temporal_successor(&x, &Moment::leaf(nx), &Moment::leaf(p)));
        assert!(!temporal_successor(&x, &Moment::leaf(nx), &Moment::leaf(TypeSet::EMPTY)));
    }

    #[test]
    fn successor_matches_relation_search() {
        for text in ["Xp", "<>p"] {
            let s = sigma(text);
            let ms = all_moments(&s, 4);
            for v in &ms {
                for w in &ms {
                    assert_eq!(
                        temporal_successor(&s, v, w),
                        brute_successor(&s, v, w),
                        "{v:?} {w:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn successor_table_matches_tree_relation() {
        for text in ["<>p", "Xp -> p", "p -> q"] {
            let s = sigma(text);
            let store = enumerate_irreducibles(&s, &Caps::default());
            let table = SuccessorTable::new(&store);
            for a in store.ids() {
                for b in store.ids() {
                    assert_eq!(
                        table.holds(a, b),
                        temporal_successor(&s, &store.moment(a), &store.moment(b))
                    );
                }
            }
        }
    }

    #[test]
    fn successor_is_forward_confluent() {
        let s = sigma("<>p");
        let store = enumerate_irreducibles(&s, &Caps::default());
        let table = SuccessorTable::new(&store);
        for v in store.ids() {
            for &w in table.successors(v) {
                for &v2 in store.below(v) {
                    assert!(store.below(w).iter().any(|&w2| table.holds(v2, w2)));
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = sigma(PHI);
        let (u, v, _) = worked_labels(&s);
        let m = graft(&s, u, [Moment::leaf(v)]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(
            text,
            r#"{"label":[2,4,5],"children":[{"label":[2,3,4,5,7,8],"children":[]}]}"#
        );
        let back: Moment = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
