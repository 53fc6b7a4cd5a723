//! Quasimodels, the decision procedure and falsification certificates.
//!
//! A quasimodel here is a finite set of moments closed under submoments,
//! ordered by the submoment relation, with a successor relation `S` between
//! worlds. The decision procedure searches, for each universal profile `A`,
//! the greatest set of irreducible moments that can carry a quasimodel with
//! profile `A`, then checks whether it can falsify the input.
//!
//! Two reductions keep the search small and are both exact:
//!
//! * Every node label of every world of a quasimodel with profile `A` lies in
//!   the greatest set of types `T` that agree with `A`, have a sensible
//!   successor in `T`, have every defect revoked by a larger type in `T`, and
//!   realize every eventuality along sensible paths in `T`. Enumeration is
//!   restricted to moments labelled from `T`.
//! * If no type of `T` lacks the target (or lacks `ψ` for some `∀ψ ∉ A`),
//!   the profile is refuted without enumerating any moment.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alexandroff::{evaluate, FiniteSystem, Valuation};
use crate::error::{Error, Result};
use crate::formula::{Formula, Fragment, Modality};
use crate::moments::{
    enumerate_irreducibles_over, Caps, Moment, MomentId, MomentStore, SuccessorTable,
};
use crate::types::{SigmaContext, TypeSet};

/// The set of `∀`-formulas assumed to hold everywhere, as a subset of Σ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UniversalProfile(pub TypeSet);

impl UniversalProfile {
    /// All profiles of Σ, in binary counting order over the `∀`-formulas.
    pub fn all(sigma: &SigmaContext) -> Result<Vec<UniversalProfile>> {
        let foralls = sigma.foralls();
        if foralls.len() > 20 {
            return Err(Error::CapExceeded(format!(
                "{} universal formulas give too many profiles",
                foralls.len()
            )));
        }
        Ok((0u64..1 << foralls.len())
            .map(|bits| {
                UniversalProfile(TypeSet::from_indices(
                    (0..foralls.len())
                        .filter(|k| bits >> k & 1 == 1)
                        .map(|k| foralls[k]),
                ))
            })
            .collect())
    }

    pub fn set(self) -> TypeSet {
        self.0
    }

    /// Whether a node label respects the profile.
    pub fn admits(self, sigma: &SigmaContext, label: TypeSet) -> bool {
        label.intersect(sigma.forall_mask()) == self.0
            && self.0.iter().all(|i| label.contains(sigma.body(i)))
    }
}

/// The greatest set of types that can label nodes of a quasimodel with the
/// given profile, in increasing numeric order.
pub fn viable_types(sigma: &SigmaContext, profile: UniversalProfile) -> Vec<TypeSet> {
    let types: Vec<TypeSet> = sigma
        .enumerate_types()
        .into_iter()
        .filter(|&t| profile.admits(sigma, t))
        .collect();
    let n = types.len();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| sigma.sensible_pair(types[i], types[j]))
                .collect()
        })
        .collect();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if alive[i] && !succ[i].iter().any(|&j| alive[j]) {
                alive[i] = false;
                changed = true;
            }
        }
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let t = types[i];
            let revoked = sigma.defects(t).iter().all(|d| {
                (0..n).any(|j| alive[j] && t.is_strict_subset(types[j]) && sigma.revokes(types[j], d))
            });
            if !revoked {
                alive[i] = false;
                changed = true;
            }
        }
        for &e in sigma.eventualities() {
            let body = sigma.body(e);
            let good = least_fixpoint(n, &alive, |i| types[i].contains(body), |i| &succ[i]);
            for i in 0..n {
                if alive[i] && types[i].contains(e) && !good[i] {
                    alive[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| alive[i]).map(|i| types[i]).collect()
}

/// Nodes among `alive` that reach a `base` node along alive successors.
fn least_fixpoint<'s>(
    n: usize,
    alive: &[bool],
    base: impl Fn(usize) -> bool,
    succ: impl Fn(usize) -> &'s [usize],
) -> Vec<bool> {
    let mut good: Vec<bool> = (0..n).map(|i| alive[i] && base(i)).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if alive[i] && !good[i] && succ(i).iter().any(|&j| good[j]) {
                good[i] = true;
                changed = true;
            }
        }
        if !changed {
            return good;
        }
    }
}

/// Order in which the two removal rules of [`prune_profile`] are applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneOrder {
    SerialityFirst,
    EventualityFirst,
}

/// The greatest downward-closed set of moments in `store` whose node labels
/// respect `profile`, in which every moment has a successor and every
/// eventuality of a root label is realized. Returns the surviving handles in
/// increasing order.
pub fn prune_profile(
    store: &MomentStore,
    table: &SuccessorTable,
    profile: UniversalProfile,
    order: PruneOrder,
) -> Vec<MomentId> {
    let sigma = store.sigma();
    let n = store.len();
    let mut live: Vec<bool> = store
        .ids()
        .map(|id| {
            store
                .below(id)
                .iter()
                .all(|&b| profile.admits(sigma, store.label(b)))
        })
        .collect();
    let mut preds: Vec<Vec<MomentId>> = vec![Vec::new(); n];
    for v in store.ids() {
        for &w in table.successors(v) {
            preds[w as usize].push(v);
        }
    }
    loop {
        let changed = match order {
            PruneOrder::SerialityFirst => {
                let a = remove_nonserial(store, table, &mut live);
                let b = remove_unrealized(store, &preds, &mut live);
                a | b
            }
            PruneOrder::EventualityFirst => {
                let a = remove_unrealized(store, &preds, &mut live);
                let b = remove_nonserial(store, table, &mut live);
                a | b
            }
        };
        if !changed {
            break;
        }
    }
    store.ids().filter(|&id| live[id as usize]).collect()
}

/// Kills every moment with a dead submoment. Children have smaller handles.
fn cascade(store: &MomentStore, live: &mut [bool]) -> bool {
    let mut changed = false;
    for id in store.ids() {
        let i = id as usize;
        if live[i] && store.children(id).iter().any(|&c| !live[c as usize]) {
            live[i] = false;
            changed = true;
        }
    }
    changed
}

fn remove_nonserial(store: &MomentStore, table: &SuccessorTable, live: &mut [bool]) -> bool {
    let mut changed = false;
    loop {
        let mut round = false;
        for id in store.ids() {
            let i = id as usize;
            if live[i] && !table.successors(id).iter().any(|&w| live[w as usize]) {
                live[i] = false;
                round = true;
            }
        }
        round |= cascade(store, live);
        if !round {
            return changed;
        }
        changed = true;
    }
}

fn remove_unrealized(store: &MomentStore, preds: &[Vec<MomentId>], live: &mut [bool]) -> bool {
    let sigma = store.sigma();
    let mut changed = false;
    for &e in sigma.eventualities() {
        let body = sigma.body(e);
        let mut good: Vec<bool> = store
            .ids()
            .map(|id| live[id as usize] && store.label(id).contains(body))
            .collect();
        let mut queue: VecDeque<MomentId> = store.ids().filter(|&id| good[id as usize]).collect();
        while let Some(w) = queue.pop_front() {
            for &v in &preds[w as usize] {
                let i = v as usize;
                if live[i] && !good[i] {
                    good[i] = true;
                    queue.push_back(v);
                }
            }
        }
        for id in store.ids() {
            let i = id as usize;
            if live[i] && store.label(id).contains(e) && !good[i] {
                live[i] = false;
                changed = true;
            }
        }
    }
    cascade(store, live) | changed
}

/// A finite quasimodel candidate: worlds are moments, `order` lists the
/// pairs `(a, b)` with `a ≼ b` (reflexive pairs included) and `s_edges` the
/// successor relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quasimodel {
    pub sigma: SigmaContext,
    pub worlds: Vec<Moment>,
    pub order: BTreeSet<(usize, usize)>,
    pub s_edges: BTreeSet<(usize, usize)>,
    pub profile: TypeSet,
}

impl Quasimodel {
    /// Builds a quasimodel with the submoment order computed from `worlds`.
    pub fn from_worlds(
        sigma: SigmaContext,
        worlds: Vec<Moment>,
        s_edges: BTreeSet<(usize, usize)>,
        profile: TypeSet,
    ) -> Quasimodel {
        let order = submoment_pairs(&worlds);
        Quasimodel {
            sigma,
            worlds,
            order,
            s_edges,
            profile,
        }
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    pub fn label(&self, w: usize) -> TypeSet {
        self.worlds[w].label()
    }

    pub fn index_of(&self, m: &Moment) -> Option<usize> {
        self.worlds.iter().position(|w| w == m)
    }

    pub fn successors(&self, w: usize) -> Vec<usize> {
        self.s_edges
            .range((w, 0)..(w + 1, 0))
            .map(|&(_, b)| b)
            .collect()
    }

    /// Worlds whose root label lacks Σ-formula `i`.
    pub fn falsifiers(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&w| !self.label(w).contains(i)).collect()
    }

    /// A Graphviz rendering: solid edges for `S`, dashed for covering `≼`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph quasimodel {\n  node [shape=box];\n");
        for (w, m) in self.worlds.iter().enumerate() {
            out.push_str(&format!(
                "  w{w} [label=\"{w}: {}\"];\n",
                dot_escape(&self.sigma.display_set(m.label()))
            ));
        }
        for &(a, b) in &self.s_edges {
            out.push_str(&format!("  w{a} -> w{b};\n"));
        }
        for &(a, b) in &self.order {
            let covering = a != b
                && !self
                    .order
                    .iter()
                    .any(|&(c, d)| d == b && c != a && c != b && self.order.contains(&(a, c)));
            if covering {
                out.push_str(&format!("  w{b} -> w{a} [style=dashed, arrowhead=none];\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn submoment_pairs(worlds: &[Moment]) -> BTreeSet<(usize, usize)> {
    let index: HashMap<&Moment, usize> = worlds.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut order = BTreeSet::new();
    for (b, m) in worlds.iter().enumerate() {
        for s in m.submoments() {
            if let Some(&a) = index.get(&s) {
                order.insert((a, b));
            }
        }
    }
    order
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// A Graphviz rendering of a single moment as a tree.
pub fn moment_to_dot(sigma: &SigmaContext, m: &Moment) -> String {
    let mut out = String::from("digraph moment {\n  node [shape=box];\n");
    let nodes = m.nodes();
    let mut next = 1;
    let mut stack = vec![(0usize, m)];
    while let Some((id, node)) = stack.pop() {
        out.push_str(&format!(
            "  n{id} [label=\"{}\"];\n",
            dot_escape(&sigma.display_set(node.label()))
        ));
        for c in node.children() {
            out.push_str(&format!("  n{id} -> n{next};\n"));
            stack.push((next, c));
            next += 1;
        }
    }
    debug_assert_eq!(next, nodes.len());
    out.push_str("}\n");
    out
}

/// Conditions checked on quasimodels and certificates, in checking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    Type,
    Continuity,
    Revocation,
    DistinctWorlds,
    Order,
    DownwardClosure,
    Sensible,
    Seriality,
    Confluence,
    OmegaSensible,
    Honesty,
    Profile,
    Sigma,
    Target,
    Witness,
    Lasso,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Clause::Type => "type",
            Clause::Continuity => "continuity",
            Clause::Revocation => "revocation",
            Clause::DistinctWorlds => "distinct worlds",
            Clause::Order => "order",
            Clause::DownwardClosure => "downward closure",
            Clause::Sensible => "sensibility",
            Clause::Confluence => "confluence",
            Clause::Seriality => "seriality",
            Clause::OmegaSensible => "omega-sensibility",
            Clause::Honesty => "honesty",
            Clause::Profile => "profile",
            Clause::Sigma => "sigma",
            Clause::Target => "target",
            Clause::Witness => "witness",
            Clause::Lasso => "lasso",
        };
        f.write_str(name)
    }
}

/// The first failed clause and what failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.clause, self.message)
    }
}

fn fail<T>(clause: Clause, message: impl Into<String>) -> std::result::Result<T, Violation> {
    Err(Violation {
        clause,
        message: message.into(),
    })
}

/// Checks every quasimodel condition from the raw data.
pub fn check_quasimodel(q: &Quasimodel) -> std::result::Result<(), Violation> {
    let sigma = &q.sigma;
    let n = q.len();
    if n == 0 {
        return fail(Clause::Seriality, "the quasimodel has no worlds");
    }
    for (w, m) in q.worlds.iter().enumerate() {
        for node in m.nodes() {
            if !sigma.is_type(node.label()) {
                return fail(
                    Clause::Type,
                    format!("world {w}: {} is not a type", sigma.display_set(node.label())),
                );
            }
        }
    }
    for (w, m) in q.worlds.iter().enumerate() {
        for node in m.nodes() {
            for c in node.children() {
                if !node.label().is_subset(c.label()) {
                    return fail(
                        Clause::Continuity,
                        format!("world {w}: a child label does not contain its parent's"),
                    );
                }
            }
        }
    }
    for (w, m) in q.worlds.iter().enumerate() {
        for node in m.nodes() {
            for d in sigma.defects(node.label()).iter() {
                let revoked = node.nodes()[1..]
                    .iter()
                    .any(|x| sigma.revokes(x.label(), d));
                if !revoked {
                    return fail(
                        Clause::Revocation,
                        format!("world {w}: defect {} is not revoked", sigma.formula(d)),
                    );
                }
            }
        }
    }
    let mut seen = HashMap::new();
    for (w, m) in q.worlds.iter().enumerate() {
        if let Some(prev) = seen.insert(m, w) {
            return fail(Clause::DistinctWorlds, format!("worlds {prev} and {w} coincide"));
        }
    }
    if let Some(&(a, b)) = q.order.iter().find(|&&(a, b)| a >= n || b >= n) {
        return fail(Clause::Order, format!("pair ({a}, {b}) names a missing world"));
    }
    let expected = submoment_pairs(&q.worlds);
    if let Some(&(a, b)) = expected.symmetric_difference(&q.order).next() {
        let msg = if expected.contains(&(a, b)) {
            format!("missing pair ({a}, {b}) of the submoment order")
        } else {
            format!("pair ({a}, {b}) is not a submoment pair")
        };
        return fail(Clause::Order, msg);
    }
    for (w, m) in q.worlds.iter().enumerate() {
        for s in m.submoments() {
            if !seen.contains_key(&s) {
                return fail(
                    Clause::DownwardClosure,
                    format!("a submoment of world {w} is not a world"),
                );
            }
        }
    }
    // With downward closure, world-level continuity and revocation follow
    // from the moment conditions; checked directly all the same.
    for &(a, b) in &q.order {
        if !q.label(b).is_subset(q.label(a)) {
            return fail(
                Clause::Continuity,
                format!("world {a} ≼ {b} but its label is not larger"),
            );
        }
    }
    for w in 0..n {
        for d in sigma.defects(q.label(w)).iter() {
            let revoked = q
                .order
                .iter()
                .any(|&(a, b)| b == w && sigma.revokes(q.label(a), d));
            if !revoked {
                return fail(
                    Clause::Revocation,
                    format!("defect {} of world {w} has no revoking world below", sigma.formula(d)),
                );
            }
        }
    }
    if let Some(&(a, b)) = q.s_edges.iter().find(|&&(a, b)| a >= n || b >= n) {
        return fail(Clause::Sensible, format!("edge ({a}, {b}) names a missing world"));
    }
    for &(a, b) in &q.s_edges {
        if !sigma.sensible_pair(q.label(a), q.label(b)) {
            return fail(Clause::Sensible, format!("edge ({a}, {b}) is not sensible"));
        }
    }
    for w in 0..n {
        if q.s_edges.range((w, 0)..(w + 1, 0)).next().is_none() {
            return fail(Clause::Seriality, format!("world {w} has no successor"));
        }
    }
    for &(w, v) in &q.s_edges {
        for &(w2, top) in &q.order {
            if top != w {
                continue;
            }
            let completed = q
                .s_edges
                .range((w2, 0)..(w2 + 1, 0))
                .any(|&(_, v2)| q.order.contains(&(v2, v)));
            if !completed {
                return fail(
                    Clause::Confluence,
                    format!("{w2} ≼ {w} S {v} has no matching successor of {w2} below {v}"),
                );
            }
        }
    }
    for &e in sigma.eventualities() {
        let body = sigma.body(e);
        let alive = vec![true; n];
        let succ: Vec<Vec<usize>> = (0..n).map(|w| q.successors(w)).collect();
        let good = least_fixpoint(n, &alive, |w| q.label(w).contains(body), |w| &succ[w]);
        if let Some(w) = (0..n).find(|&w| q.label(w).contains(e) && !good[w]) {
            return fail(
                Clause::OmegaSensible,
                format!("{} at world {w} is never realized", sigma.formula(e)),
            );
        }
    }
    for &f in sigma.foralls() {
        let body = sigma.body(f);
        let everywhere = (0..n).all(|w| q.label(w).contains(body));
        if let Some(w) = (0..n).find(|&w| q.label(w).contains(f) != everywhere) {
            return fail(
                Clause::Honesty,
                format!("{} at world {w} disagrees with its body", sigma.formula(f)),
            );
        }
    }
    if !q.profile.is_subset(sigma.forall_mask()) {
        return fail(Clause::Profile, "profile contains a non-universal formula");
    }
    if let Some(w) = (0..n).find(|&w| q.label(w).intersect(sigma.forall_mask()) != q.profile) {
        return fail(Clause::Profile, format!("world {w} disagrees with the profile"));
    }
    Ok(())
}

/// An ultimately periodic path: `prefix` followed by `loop_` repeated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lasso {
    pub prefix: Vec<usize>,
    #[serde(rename = "loop")]
    pub loop_: Vec<usize>,
}

impl Lasso {
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.prefix.iter().chain(&self.loop_).copied()
    }
}

/// Successor lists and root labels, shared by quasimodels and stores.
struct Graph {
    labels: Vec<TypeSet>,
    succ: Vec<Vec<usize>>,
}

impl Graph {
    fn of_quasimodel(q: &Quasimodel) -> Graph {
        Graph {
            labels: (0..q.len()).map(|w| q.label(w)).collect(),
            succ: (0..q.len()).map(|w| q.successors(w)).collect(),
        }
    }

    fn of_store(store: &MomentStore, table: &SuccessorTable, live: &[bool]) -> Graph {
        Graph {
            labels: store.ids().map(|id| store.label(id)).collect(),
            succ: store
                .ids()
                .map(|id| {
                    if !live[id as usize] {
                        return Vec::new();
                    }
                    table
                        .successors(id)
                        .iter()
                        .filter(|&&w| live[w as usize])
                        .map(|&w| w as usize)
                        .collect()
                })
                .collect(),
        }
    }

    /// Steps from each node to the nearest node containing `body`.
    fn distances(&self, body: usize) -> Vec<u32> {
        let n = self.labels.len();
        let mut preds = vec![Vec::new(); n];
        for (v, succ) in self.succ.iter().enumerate() {
            for &w in succ {
                preds[w].push(v);
            }
        }
        let mut dist = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for v in 0..n {
            if self.labels[v].contains(body) {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(w) = queue.pop_front() {
            for &v in &preds[w] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[w] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Round-robin over pending eventualities; each step toward the current
    /// target moves to the least successor one step closer to realizing it.
    /// The path closes when a (node, target) state repeats.
    fn lasso(&self, sigma: &SigmaContext, start: usize) -> std::result::Result<Lasso, String> {
        let evs: Vec<(usize, usize)> = sigma
            .eventualities()
            .iter()
            .map(|&e| (e, sigma.body(e)))
            .collect();
        let dists: Vec<Vec<u32>> = evs.iter().map(|&(_, b)| self.distances(b)).collect();
        let m = evs.len();
        let pending = |x: usize, k: usize| {
            let (e, b) = evs[k];
            self.labels[x].contains(e) && !self.labels[x].contains(b)
        };
        let normalize = |x: usize, k: usize| (0..m).map(|s| (k + s) % m).find(|&j| pending(x, j)).unwrap_or(0);
        let mut path = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        let mut x = start;
        let mut k = normalize(x, 0);
        loop {
            if let Some(&pos) = seen.get(&(x, k)) {
                let loop_ = path.split_off(pos);
                return Ok(Lasso {
                    prefix: path,
                    loop_,
                });
            }
            seen.insert((x, k), path.len());
            path.push(x);
            let succ = &self.succ[x];
            if succ.is_empty() {
                return Err(format!("world {x} has no successor"));
            }
            if m > 0 && pending(x, k) {
                let d = dists[k][x];
                if d == u32::MAX {
                    return Err(format!("{} at world {x} cannot be realized", sigma.formula(evs[k].0)));
                }
                let next = *succ
                    .iter()
                    .find(|&&s| dists[k][s] == d - 1)
                    .expect("a successor on a shortest path");
                k = if d == 1 { normalize(next, (k + 1) % m) } else { normalize(next, k) };
                x = next;
            } else {
                x = succ[0];
                k = if m > 0 { normalize(x, k) } else { 0 };
            }
        }
    }
}

/// A lasso from `w0` along `S` whose unrolling realizes every eventuality.
pub fn build_realizing_path(q: &Quasimodel, w0: usize) -> Result<Lasso> {
    if w0 >= q.len() {
        return Err(Error::Precondition(format!("no world {w0}")));
    }
    Graph::of_quasimodel(q)
        .lasso(&q.sigma, w0)
        .map_err(Error::Precondition)
}

/// Given an `S`-path `w0..wn` and `v0 ≼ w0`, an `S`-path `v0..vn` with
/// `vi ≼ wi`, choosing the least world at each step.
pub fn complete_path_below(q: &Quasimodel, path: &[usize], v0: usize) -> Result<Vec<usize>> {
    let Some(&w0) = path.first() else {
        return Err(Error::Precondition("empty path".into()));
    };
    if !q.order.contains(&(v0, w0)) {
        return Err(Error::Precondition(format!("world {v0} is not below {w0}")));
    }
    if let Some(pair) = path.windows(2).find(|p| !q.s_edges.contains(&(p[0], p[1]))) {
        return Err(Error::Precondition(format!(
            "({}, {}) is not an S-edge",
            pair[0], pair[1]
        )));
    }
    let mut out = vec![v0];
    for &w in &path[1..] {
        let v = *out.last().unwrap();
        let next = q
            .successors(v)
            .into_iter()
            .find(|&u| q.order.contains(&(u, w)))
            .ok_or_else(|| {
                Error::Precondition(format!("no successor of {v} lies below {w}; S is not confluent"))
            })?;
        out.push(next);
    }
    Ok(out)
}

/// A falsifying quasimodel with a witness world and realizing lassos.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub quasimodel: Quasimodel,
    pub witness: usize,
    pub target: Formula,
    pub lassos: BTreeMap<usize, Lasso>,
}

#[derive(Serialize, Deserialize)]
struct WorldJson {
    id: usize,
    moment: Moment,
}

#[derive(Serialize, Deserialize)]
struct QuasimodelJson {
    sigma: Vec<String>,
    profile: Vec<usize>,
    worlds: Vec<WorldJson>,
    order: Vec<(usize, usize)>,
    s_edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    sigma: Vec<String>,
    profile: Vec<usize>,
    worlds: Vec<WorldJson>,
    order: Vec<(usize, usize)>,
    s_edges: Vec<(usize, usize)>,
    witness: usize,
    target: String,
    lassos: BTreeMap<usize, Lasso>,
}

fn worlds_json(q: &Quasimodel) -> Vec<WorldJson> {
    q.worlds
        .iter()
        .enumerate()
        .map(|(id, m)| WorldJson { id, moment: m.clone() })
        .collect()
}

fn sigma_strings(sigma: &SigmaContext) -> Vec<String> {
    sigma.formulas().iter().map(|f| f.to_string()).collect()
}

fn parse_sigma(items: &[String]) -> Result<SigmaContext> {
    let mut fs = Vec::with_capacity(items.len());
    for (i, s) in items.iter().enumerate() {
        fs.push(Formula::parse(s).map_err(|e| Error::schema(format!("sigma[{i}]"), e.to_string()))?);
    }
    SigmaContext::from_formulas(fs).map_err(|e| Error::schema("sigma", e.to_string()))
}

fn parse_worlds(worlds: Vec<WorldJson>) -> Result<Vec<Moment>> {
    worlds
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            if w.id != i {
                Err(Error::schema(format!("worlds[{i}].id"), format!("expected {i}, found {}", w.id)))
            } else {
                Ok(w.moment)
            }
        })
        .collect()
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })
}

impl Quasimodel {
    pub fn to_json(&self) -> String {
        let raw = QuasimodelJson {
            sigma: sigma_strings(&self.sigma),
            profile: self.profile.to_indices(),
            worlds: worlds_json(self),
            order: self.order.iter().copied().collect(),
            s_edges: self.s_edges.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&raw).expect("quasimodel serializes")
    }

    pub fn from_json(text: &str) -> Result<Quasimodel> {
        let raw: QuasimodelJson = parse_json(text)?;
        Ok(Quasimodel {
            sigma: parse_sigma(&raw.sigma)?,
            worlds: parse_worlds(raw.worlds)?,
            order: raw.order.into_iter().collect(),
            s_edges: raw.s_edges.into_iter().collect(),
            profile: TypeSet::from_indices(raw.profile),
        })
    }
}

impl Certificate {
    pub fn to_json(&self) -> String {
        let q = &self.quasimodel;
        let raw = CertificateJson {
            sigma: sigma_strings(&q.sigma),
            profile: q.profile.to_indices(),
            worlds: worlds_json(q),
            order: q.order.iter().copied().collect(),
            s_edges: q.s_edges.iter().copied().collect(),
            witness: self.witness,
            target: self.target.to_string(),
            lassos: self.lassos.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Certificate> {
        let raw: CertificateJson = parse_json(text)?;
        if let Some(&i) = raw.profile.iter().find(|&&i| i >= 64) {
            return Err(Error::schema("profile", format!("index {i} out of range")));
        }
        let target = Formula::parse(&raw.target).map_err(|e| Error::schema("target", e.to_string()))?;
        Ok(Certificate {
            quasimodel: Quasimodel {
                sigma: parse_sigma(&raw.sigma)?,
                worlds: parse_worlds(raw.worlds)?,
                order: raw.order.into_iter().collect(),
                s_edges: raw.s_edges.into_iter().collect(),
                profile: TypeSet::from_indices(raw.profile),
            },
            witness: raw.witness,
            target,
            lassos: raw.lassos,
        })
    }
}

/// Re-derives Σ from `phi` and checks every condition of `cert`.
pub fn verify_certificate(cert: &Certificate, phi: &Formula) -> std::result::Result<(), Violation> {
    let target = phi.eliminate_exists();
    let sigma = match SigmaContext::new(&target) {
        Ok(s) => s,
        Err(e) => return fail(Clause::Sigma, e.to_string()),
    };
    let q = &cert.quasimodel;
    if q.sigma != sigma {
        return fail(Clause::Sigma, "closure does not match the formula's subformulas");
    }
    if cert.target != target {
        return fail(Clause::Target, format!("certificate targets {}", cert.target));
    }
    check_quasimodel(q)?;
    let top = sigma.top().expect("closure of a formula is nonempty");
    if cert.witness >= q.len() {
        return fail(Clause::Witness, format!("no world {}", cert.witness));
    }
    if q.label(cert.witness).contains(top) {
        return fail(Clause::Witness, format!("world {} satisfies the target", cert.witness));
    }
    for w in 0..q.len() {
        let Some(lasso) = cert.lassos.get(&w) else {
            return fail(Clause::Lasso, format!("world {w} has no lasso"));
        };
        check_lasso(q, w, lasso).map_err(|message| Violation {
            clause: Clause::Lasso,
            message: format!("world {w}: {message}"),
        })?;
    }
    if let Some(&w) = cert.lassos.keys().find(|&&w| w >= q.len()) {
        return fail(Clause::Lasso, format!("lasso for missing world {w}"));
    }
    Ok(())
}

fn check_lasso(q: &Quasimodel, w: usize, lasso: &Lasso) -> std::result::Result<(), String> {
    if lasso.loop_.is_empty() {
        return Err("empty loop".into());
    }
    let path: Vec<usize> = lasso.positions().collect();
    if path[0] != w {
        return Err(format!("starts at {} instead", path[0]));
    }
    if let Some(&x) = path.iter().find(|&&x| x >= q.len()) {
        return Err(format!("no world {x}"));
    }
    let closing = (*lasso.loop_.last().unwrap(), lasso.loop_[0]);
    for pair in path.windows(2).map(|p| (p[0], p[1])).chain([closing]) {
        if !q.s_edges.contains(&pair) {
            return Err(format!("({}, {}) is not an S-edge", pair.0, pair.1));
        }
    }
    let sigma = &q.sigma;
    let start = lasso.prefix.len();
    for &e in sigma.eventualities() {
        let body = sigma.body(e);
        let in_loop = lasso.loop_.iter().any(|&x| q.label(x).contains(body));
        for (i, &x) in path.iter().enumerate() {
            if !q.label(x).contains(e) {
                continue;
            }
            let realized = if i >= start {
                in_loop
            } else {
                in_loop || path[i..start].iter().any(|&y| q.label(y).contains(body))
            };
            if !realized {
                return Err(format!("{} at position {i} is never realized", sigma.formula(e)));
            }
        }
    }
    Ok(())
}

/// Options for [`decide`].
#[derive(Clone, Debug, Default)]
pub struct DecideOptions {
    pub caps: Caps,
    /// Worker threads for the profile search; `None` uses the default pool.
    pub threads: Option<usize>,
    pub timeout: Option<Duration>,
}

/// The outcome of [`decide`].
#[derive(Clone, Debug)]
pub enum Verdict {
    Valid,
    Falsifiable(Box<Certificate>),
    ResourceLimit(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Valid => "VALID",
            Verdict::Falsifiable(_) => "FALSIFIABLE",
            Verdict::ResourceLimit(_) => "RESOURCE_LIMIT",
        }
    }
}

/// Search statistics. All counts are deterministic given caps that do not
/// involve time.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DecideStats {
    pub sigma_size: usize,
    pub profiles: usize,
    /// Profiles refuted from the viable types alone.
    pub refuted_by_types: usize,
    /// Irreducible moments enumerated over all searched profiles.
    pub moments: usize,
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub verdict: Verdict,
    pub stats: DecideStats,
}

type Refutation = (bool, usize, Option<String>);

enum ProfileOutcome {
    Refuted { by_types: bool, moments: usize, incomplete: Option<String> },
    Found(Box<Certificate>, usize),
}

/// Decides validity of `phi` over dynamical systems.
pub fn decide(phi: &Formula, opts: &DecideOptions) -> Result<Decision> {
    let target = phi.eliminate_exists();
    if !target.fragment().is_subset(&Fragment::decidable()) {
        let modality = if target.fragment().contains(Modality::Henceforth) { "[]" } else { "E" };
        return Err(Error::Fragment {
            formula: phi.to_string(),
            modality: modality.into(),
        });
    }
    let sigma = SigmaContext::new(&target)?;
    let profiles = UniversalProfile::all(&sigma)?;
    let mut caps = opts.caps.clone();
    if let Some(t) = opts.timeout {
        caps.deadline = Some(Instant::now() + t);
    }
    // Per refuted profile: refuted from types alone, moments, incompleteness.
    let outcomes: Mutex<BTreeMap<usize, Refutation>> = Mutex::new(BTreeMap::new());
    let search = || {
        profiles
            .par_iter()
            .enumerate()
            .map(|(i, &profile)| (i, search_profile(&sigma, &target, profile, &caps)))
            .find_map_first(|(i, outcome)| match outcome {
                Ok(ProfileOutcome::Found(cert, moments)) => Some(Ok((i, cert, moments))),
                Ok(ProfileOutcome::Refuted { by_types, moments, incomplete }) => {
                    outcomes.lock().unwrap().insert(i, (by_types, moments, incomplete));
                    None
                }
                Err(e) => Some(Err(e)),
            })
    };
    let found = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Invariant(e.to_string()))?
            .install(search),
        None => search(),
    };
    let outcomes = outcomes.into_inner().unwrap();
    let mut stats = DecideStats {
        sigma_size: sigma.len(),
        profiles: profiles.len(),
        refuted_by_types: outcomes.values().filter(|o| o.0).count(),
        moments: outcomes.values().map(|o| o.1).sum(),
        complete: outcomes.values().all(|o| o.2.is_none()),
    };
    let verdict = match found {
        Some(Err(e)) => return Err(e),
        Some(Ok((i, cert, moments))) => {
            // Only profiles before the winner are reported, so the counts do
            // not depend on scheduling.
            let earlier: Vec<_> = outcomes.range(..i).map(|(_, o)| o).collect();
            stats.refuted_by_types = earlier.iter().filter(|o| o.0).count();
            stats.moments = earlier.iter().map(|o| o.1).sum::<usize>() + moments;
            stats.complete = earlier.iter().all(|o| o.2.is_none());
            Verdict::Falsifiable(cert)
        }
        None => match outcomes.values().find_map(|o| o.2.clone()) {
            Some(reason) => Verdict::ResourceLimit(reason),
            None => Verdict::Valid,
        },
    };
    Ok(Decision { verdict, stats })
}

fn search_profile(
    sigma: &SigmaContext,
    target: &Formula,
    profile: UniversalProfile,
    caps: &Caps,
) -> Result<ProfileOutcome> {
    let top = sigma.top().expect("closure of a formula is nonempty");
    let types = viable_types(sigma, profile);
    let missing: Vec<usize> = std::iter::once(top)
        .chain(
            sigma
                .foralls()
                .iter()
                .filter(|&&f| !profile.0.contains(f))
                .map(|&f| sigma.body(f)),
        )
        .collect();
    if !missing.iter().all(|&i| types.iter().any(|t| !t.contains(i))) {
        return Ok(ProfileOutcome::Refuted {
            by_types: true,
            moments: 0,
            incomplete: None,
        });
    }
    // Truncated stores are downward closed, so a falsifier found in a small
    // one is genuine; most falsifiable inputs never need the full store.
    let mut stages: Vec<usize> = [1_000, 10_000]
        .into_iter()
        .filter(|&m| m < caps.max_moments)
        .collect();
    stages.push(caps.max_moments);
    let mut last = None;
    for max_moments in stages {
        let stage = Caps {
            max_moments,
            ..caps.clone()
        };
        let store = enumerate_irreducibles_over(sigma, &types, &stage);
        let table = SuccessorTable::new(&store);
        let live = prune_profile(&store, &table, profile, PruneOrder::SerialityFirst);
        let witnesses: Option<Vec<MomentId>> = missing
            .iter()
            .map(|&i| live.iter().copied().find(|&id| !store.label(id).contains(i)))
            .collect();
        if let Some(witnesses) = witnesses {
            let cert = certificate(&store, &table, &live, profile, &witnesses, target)?;
            return Ok(ProfileOutcome::Found(Box::new(cert), store.len()));
        }
        let complete = store.is_complete();
        last = Some(ProfileOutcome::Refuted {
            by_types: false,
            moments: store.len(),
            incomplete: store.incomplete_reason().map(str::to_string),
        });
        if complete {
            break;
        }
    }
    Ok(last.expect("at least one stage"))
}

/// Trims the fixpoint to the worlds needed by the witnesses and their
/// lassos, closed under submoments.
fn certificate(
    store: &MomentStore,
    table: &SuccessorTable,
    live_ids: &[MomentId],
    profile: UniversalProfile,
    witnesses: &[MomentId],
    target: &Formula,
) -> Result<Certificate> {
    let sigma = store.sigma();
    let mut live = vec![false; store.len()];
    for &id in live_ids {
        live[id as usize] = true;
    }
    let graph = Graph::of_store(store, table, &live);
    let mut chosen: BTreeSet<MomentId> = BTreeSet::new();
    let mut work: Vec<MomentId> = witnesses.to_vec();
    while let Some(w) = work.pop() {
        if !chosen.insert(w) {
            continue;
        }
        let lasso = graph
            .lasso(sigma, w as usize)
            .map_err(|e| Error::Invariant(format!("fixpoint world without a lasso: {e}")))?;
        for x in lasso.positions() {
            work.push(x as MomentId);
        }
        work.extend(store.below(w).iter().copied());
    }
    let mut worlds: Vec<(Moment, MomentId)> = chosen.iter().map(|&id| (store.moment(id), id)).collect();
    worlds.sort();
    let index: HashMap<MomentId, usize> = worlds.iter().enumerate().map(|(i, &(_, id))| (id, i)).collect();
    let mut s_edges = BTreeSet::new();
    for (i, &(_, a)) in worlds.iter().enumerate() {
        for b in table.successors(a) {
            if let Some(&j) = index.get(b) {
                s_edges.insert((i, j));
            }
        }
    }
    let witness = index[&witnesses[0]];
    let q = Quasimodel::from_worlds(
        sigma.clone(),
        worlds.into_iter().map(|(m, _)| m).collect(),
        s_edges,
        profile.0,
    );
    let mut lassos = BTreeMap::new();
    for w in 0..q.len() {
        lassos.insert(w, build_realizing_path(&q, w)?);
    }
    let cert = Certificate {
        quasimodel: q,
        witness,
        target: target.clone(),
        lassos,
    };
    verify_certificate(&cert, target)
        .map_err(|v| Error::Invariant(format!("emitted certificate fails {v}")))?;
    Ok(cert)
}

/// The quasimodel of irreducible moments simulated by points of `system`.
///
/// A moment simulates a point when their labels agree and every child of the
/// moment simulates some point below. Worlds are the simulating moments,
/// edges are the temporal successors among them.
pub fn extract_quasimodel(system: &FiniteSystem, val: &Valuation, sigma: &SigmaContext) -> Result<Quasimodel> {
    if let Some(f) = sigma.formulas().iter().find(|f| matches!(f, Formula::Henceforth(_) | Formula::Exists(_))) {
        return Err(Error::Fragment {
            formula: f.to_string(),
            modality: if matches!(f, Formula::Henceforth(_)) { "[]" } else { "E" }.into(),
        });
    }
    system.check()?;
    let n = system.len();
    let mut labels = vec![TypeSet::EMPTY; n];
    for (i, f) in sigma.formulas().iter().enumerate() {
        let truth = evaluate(system, val, f)?;
        for (x, l) in labels.iter_mut().enumerate() {
            if truth.contains(x) {
                l.insert(i);
            }
        }
    }
    let mut types: Vec<TypeSet> = labels.clone();
    types.sort();
    types.dedup();
    let store = enumerate_irreducibles_over(sigma, &types, &Caps::default());
    if let Some(reason) = store.incomplete_reason() {
        return Err(Error::CapExceeded(reason.to_string()));
    }
    let p = system.poset();
    let mut chi = vec![vec![false; n]; store.len()];
    for id in store.ids() {
        for x in 0..n {
            chi[id as usize][x] = store.label(id) == labels[x]
                && store.children(id).iter().all(|&c| {
                    p.down(x).iter().any(|y| chi[c as usize][y])
                });
        }
    }
    for x in 0..n {
        if !store.ids().any(|id| chi[id as usize][x]) {
            return Err(Error::Invariant(format!("point {} is simulated by no moment", p.names()[x])));
        }
    }
    let table = SuccessorTable::new(&store);
    let dom: Vec<MomentId> = store.ids().filter(|&id| chi[id as usize].iter().any(|&b| b)).collect();
    for &m in &dom {
        for x in (0..n).filter(|&x| chi[m as usize][x]) {
            let fx = system.apply(x);
            if !table.successors(m).iter().any(|&m2| chi[m2 as usize][fx]) {
                return Err(Error::Invariant(format!(
                    "simulation is not dynamic at point {}",
                    p.names()[x]
                )));
            }
        }
    }
    let mut worlds: Vec<(Moment, MomentId)> = dom.iter().map(|&id| (store.moment(id), id)).collect();
    worlds.sort();
    let index: HashMap<MomentId, usize> = worlds.iter().enumerate().map(|(i, &(_, id))| (id, i)).collect();
    let mut s_edges = BTreeSet::new();
    for (i, &(_, a)) in worlds.iter().enumerate() {
        for b in table.successors(a) {
            if let Some(&j) = index.get(b) {
                s_edges.insert((i, j));
            }
        }
    }
    let profile = sigma
        .foralls()
        .iter()
        .copied()
        .filter(|&f| labels.iter().all(|l| l.contains(f)));
    let q = Quasimodel::from_worlds(
        sigma.clone(),
        worlds.into_iter().map(|(m, _)| m).collect(),
        s_edges,
        TypeSet::from_indices(profile),
    );
    check_quasimodel(&q).map_err(|v| Error::Invariant(format!("extracted quasimodel fails {v}")))?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alexandroff::{find_countermodel, random_system, random_open_set, MAX_EVALUATIONS};
    use crate::alexandroff::tests::minimal5;
    use crate::moments::tests::{set, sigma, worked_labels, PHI};
    use crate::moments::{enumerate_irreducibles, graft};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(text: &str) -> Formula {
        Formula::parse(text).unwrap()
    }

    /// The worked quasimodel: worlds m_v, m_w, m_u in moment order.
    fn worked() -> (Quasimodel, [usize; 3]) {
        let s = sigma(PHI);
        let (u, v, w) = worked_labels(&s);
        let mv = Moment::leaf(v);
        let mw = Moment::leaf(w);
        let mu = graft(&s, u, [mv.clone()]).unwrap();
        let mut worlds = vec![mu.clone(), mv.clone(), mw.clone()];
        worlds.sort();
        let ix = |m: &Moment| worlds.iter().position(|x| x == m).unwrap();
        let (iu, iv, iw) = (ix(&mu), ix(&mv), ix(&mw));
        let edges = [(iu, iu), (iv, iv), (iv, iw), (iw, iw)].into_iter().collect();
        let profile = set(&s, &["A(~p | <>p)"]);
        (Quasimodel::from_worlds(s, worlds, edges, profile), [iu, iv, iw])
    }

    #[test]
    fn worked_quasimodel_passes() {
        let (q, [u, v, _]) = worked();
        check_quasimodel(&q).unwrap();
        assert!(q.order.contains(&(v, u)));
        let top = q.sigma.top().unwrap();
        assert_eq!(q.falsifiers(top), vec![u]);
    }

    #[test]
    fn checker_names_the_failed_clause() {
        let (q, [_, _, w]) = worked();
        // Dropping m_w leaves the eventuality at m_v unrealized.
        let keep: Vec<usize> = (0..3).filter(|&i| i != w).collect();
        let remap = |i: usize| keep.iter().position(|&k| k == i).unwrap();
        let worlds = keep.iter().map(|&i| q.worlds[i].clone()).collect();
        let edges = q
            .s_edges
            .iter()
            .filter(|&&(a, b)| a != w && b != w)
            .map(|&(a, b)| (remap(a), remap(b)))
            .collect();
        let dropped = Quasimodel::from_worlds(q.sigma.clone(), worlds, edges, q.profile);
        assert_eq!(check_quasimodel(&dropped).unwrap_err().clause, Clause::OmegaSensible);

        let s = &q.sigma;
        let (u, _, _) = worked_labels(s);
        let lone = Quasimodel::from_worlds(s.clone(), vec![Moment::leaf(u)], [(0, 0)].into(), q.profile);
        assert_eq!(check_quasimodel(&lone).unwrap_err().clause, Clause::Revocation);

        let mut bad = q.clone();
        bad.s_edges.retain(|&(a, _)| a != 0);
        assert_eq!(check_quasimodel(&bad).unwrap_err().clause, Clause::Seriality);

        let mut bad = q.clone();
        bad.order.remove(&(0, 0));
        assert_eq!(check_quasimodel(&bad).unwrap_err().clause, Clause::Order);

        let mut bad = q.clone();
        bad.profile = TypeSet::EMPTY;
        assert_eq!(check_quasimodel(&bad).unwrap_err().clause, Clause::Profile);
    }

    #[test]
    fn realizing_paths_on_the_worked_quasimodel() {
        let (q, [u, v, w]) = worked();
        assert_eq!(
            build_realizing_path(&q, u).unwrap(),
            Lasso { prefix: vec![], loop_: vec![u] }
        );
        let lasso = build_realizing_path(&q, v).unwrap();
        assert_eq!(lasso.prefix, vec![v]);
        assert_eq!(lasso.loop_, vec![w]);
        for x in 0..q.len() {
            check_lasso(&q, x, &build_realizing_path(&q, x).unwrap()).unwrap();
        }
    }

    #[test]
    fn path_completion() {
        let (q, [u, v, w]) = worked();
        assert_eq!(complete_path_below(&q, &[u, u], v).unwrap(), vec![v, v]);
        assert_eq!(complete_path_below(&q, &[v, w], v).unwrap(), vec![v, w]);
        assert_eq!(complete_path_below(&q, &[u], v).unwrap(), vec![v]);
        assert!(complete_path_below(&q, &[u, w], u).is_err());
        assert!(complete_path_below(&q, &[v], u).is_err());
    }

    #[test]
    fn viable_types_of_the_flagship() {
        let s = sigma(PHI);
        let (u, v, w) = worked_labels(&s);
        let all = UniversalProfile::all(&s).unwrap();
        assert_eq!(all.len(), 2);
        let with = viable_types(&s, all[1]);
        for t in [u, v, w] {
            assert!(with.contains(&t));
        }
        // Without the universal, every viable type contains the target.
        let top = s.top().unwrap();
        assert!(viable_types(&s, all[0]).iter().all(|t| t.contains(top)));
    }

    #[test]
    fn pruning_examples() {
        let s = sigma("Xp");
        let store = enumerate_irreducibles(&s, &Caps::default());
        let table = SuccessorTable::new(&store);
        let p = UniversalProfile(TypeSet::EMPTY);
        assert_eq!(
            prune_profile(&store, &table, p, PruneOrder::SerialityFirst).len(),
            store.len()
        );

        let s = sigma("<>#");
        let store = enumerate_irreducibles(&s, &Caps::default());
        let table = SuccessorTable::new(&store);
        let live = prune_profile(&store, &table, p, PruneOrder::SerialityFirst);
        let ev = s.index_of(&f("<>#")).unwrap();
        assert!(!live.is_empty());
        assert!(live.iter().all(|&id| !store.label(id).contains(ev)));
        assert!(store.ids().any(|id| store.label(id).contains(ev)));
    }

    #[test]
    fn flagship_fixpoint_contains_the_worked_moments() {
        let s = sigma(PHI);
        let profile = UniversalProfile::all(&s).unwrap()[1];
        let store = enumerate_irreducibles_over(&s, &viable_types(&s, profile), &Caps::default());
        assert!(store.is_complete());
        let table = SuccessorTable::new(&store);
        let live = prune_profile(&store, &table, profile, PruneOrder::SerialityFirst);
        let (q, _) = worked();
        for m in &q.worlds {
            let id = store.get(&m.reduce()).expect("reduct is enumerated");
            assert!(live.contains(&id));
        }
        let top = s.top().unwrap();
        assert!(live.iter().any(|&id| !store.label(id).contains(top)));
    }

    #[test]
    fn prune_order_does_not_matter() {
        for text in ["<>p", "Xp -> p", "<>p -> p", "A(p | ~p) -> Ap | A~p", "X<>p -> <>Xp"] {
            let s = sigma(text);
            for profile in UniversalProfile::all(&s).unwrap() {
                let store = enumerate_irreducibles_over(&s, &viable_types(&s, profile), &Caps::default());
                let table = SuccessorTable::new(&store);
                let a = prune_profile(&store, &table, profile, PruneOrder::SerialityFirst);
                let b = prune_profile(&store, &table, profile, PruneOrder::EventualityFirst);
                assert_eq!(a, b, "{text}");
                for &id in &a {
                    assert!(store.below(id).iter().all(|x| a.contains(x)), "{text}");
                }
            }
        }
    }

    fn verdict(text: &str) -> Verdict {
        decide(&f(text), &DecideOptions::default()).unwrap().verdict
    }

    #[test]
    fn decide_examples() {
        assert!(matches!(verdict("p -> p"), Verdict::Valid));
        assert!(matches!(verdict("<>p <-> (p | X<>p)"), Verdict::Valid));
        for text in [PHI, "Xp -> p", "<>p -> p", "p | ~p"] {
            match verdict(text) {
                Verdict::Falsifiable(cert) => verify_certificate(&cert, &f(text)).unwrap(),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            decide(&f("[]p -> p"), &DecideOptions::default()),
            Err(Error::Fragment { .. })
        ));
    }

    #[test]
    fn capped_search_is_not_valid() {
        let opts = DecideOptions {
            caps: Caps { max_moments: 1, ..Caps::default() },
            ..DecideOptions::default()
        };
        let d = decide(&f(PHI), &opts).unwrap();
        assert!(matches!(d.verdict, Verdict::ResourceLimit(_)));
        assert!(!d.stats.complete);
        // Refuted from types alone, so the cap never matters.
        let d = decide(&f("X(p -> q) -> Xp -> Xq"), &opts).unwrap();
        assert!(matches!(d.verdict, Verdict::Valid));
    }

    #[test]
    fn tampered_certificates_fail() {
        let Verdict::Falsifiable(cert) = verdict(PHI) else { panic!() };
        let phi = f(PHI);
        let text = cert.to_json();
        assert_eq!(Certificate::from_json(&text).unwrap(), *cert);

        let mut bad = (*cert).clone();
        let top = bad.quasimodel.sigma.top().unwrap();
        let w = bad.witness;
        let m = &bad.quasimodel.worlds[w];
        bad.quasimodel.worlds[w] = Moment::new(m.label().with(top), m.children().to_vec());
        assert!(verify_certificate(&bad, &phi).is_err());

        let mut bad = (*cert).clone();
        bad.quasimodel.s_edges.retain(|&(a, _)| a != 0);
        assert_eq!(verify_certificate(&bad, &phi).unwrap_err().clause, Clause::Seriality);

        assert_eq!(verify_certificate(&cert, &f("Xp -> p")).unwrap_err().clause, Clause::Sigma);

        let mut bad = (*cert).clone();
        bad.lassos.remove(&0);
        assert_eq!(verify_certificate(&bad, &phi).unwrap_err().clause, Clause::Lasso);
    }

    #[test]
    fn extraction_examples() {
        let one = FiniteSystem::new(crate::alexandroff::FinitePoset::antichain(1), vec![0]).unwrap();
        let val: Valuation = [("p".to_string(), one.poset().all())].into();
        let s = sigma("p");
        let q = extract_quasimodel(&one, &val, &s).unwrap();
        assert_eq!(q.worlds, vec![Moment::leaf(TypeSet::from_indices([0]))]);

        let phi = f("Xp -> p");
        let cm = find_countermodel(&phi, 3, MAX_EVALUATIONS).unwrap().unwrap();
        let s = SigmaContext::new(&phi).unwrap();
        let q = extract_quasimodel(&cm.system, &cm.valuation, &s).unwrap();
        assert!(!q.falsifiers(s.top().unwrap()).is_empty());

        let (x, val) = minimal5();
        let phi = f("(Xp -> Xq) -> X(p -> q)");
        let s = SigmaContext::new(&phi).unwrap();
        let q = extract_quasimodel(&x, &val, &s).unwrap();
        assert!(!q.falsifiers(s.top().unwrap()).is_empty());
    }

    #[test]
    fn extraction_falsifies_what_the_system_falsifies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frag = Fragment::decidable();
        for seed in 0..40 {
            let x = random_system(4, seed);
            let val: Valuation = [
                ("p".to_string(), random_open_set(x.poset(), &mut rng)),
                ("q".to_string(), random_open_set(x.poset(), &mut rng)),
            ]
            .into();
            let phi = crate::formula::random_formula(&mut rng, 3, &["p", "q"], frag);
            let s = SigmaContext::new(&phi).unwrap();
            let q = extract_quasimodel(&x, &val, &s).unwrap();
            for (i, g) in s.formulas().iter().enumerate() {
                let everywhere = evaluate(&x, &val, g).unwrap() == x.poset().all();
                assert_eq!(q.falsifiers(i).is_empty(), everywhere, "{g} on seed {seed}");
            }
        }
    }
}
