//! Subformula closures, Σ-types, defects and sensible pairs.
//!
//! A [`SigmaContext`] fixes an index order on a subformula-closed set Σ
//! (post-order of first occurrence). Every label is a [`TypeSet`]: a bitset
//! over those indices, so Σ is limited to 64 formulas.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::formula::Formula;

/// Formula node of Σ with children replaced by their indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Bottom,
    Atom,
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Next(usize),
    Eventually(usize),
    Henceforth(usize),
    Forall(usize),
    Exists(usize),
}

/// A set of Σ indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeSet(pub u64);

impl TypeSet {
    pub const EMPTY: TypeSet = TypeSet(0);

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> TypeSet {
        let mut t = TypeSet::EMPTY;
        for i in indices {
            t.insert(i);
        }
        t
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1 << i);
    }

    #[inline]
    pub fn with(mut self, i: usize) -> TypeSet {
        self.insert(i);
        self
    }

    #[inline]
    pub fn is_subset(self, other: TypeSet) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn is_strict_subset(self, other: TypeSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 & other.0)
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    pub fn to_indices(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for TypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A subformula-closed set of formulas with a fixed index order.
#[derive(Clone, Debug)]
pub struct SigmaContext {
    formulas: Vec<Formula>,
    nodes: Vec<Node>,
    index: HashMap<Formula, usize>,
    implications: Vec<usize>,
    nexts: Vec<usize>,
    eventualities: Vec<usize>,
    foralls: Vec<usize>,
    forall_mask: TypeSet,
}

impl PartialEq for SigmaContext {
    fn eq(&self, other: &Self) -> bool {
        self.formulas == other.formulas
    }
}

impl Eq for SigmaContext {}

impl SigmaContext {
    /// The subformula closure of `phi`, indexed in post-order of first occurrence.
    pub fn new(phi: &Formula) -> Result<SigmaContext> {
        let mut formulas = Vec::new();
        let mut index = HashMap::new();
        fn visit(f: &Formula, out: &mut Vec<Formula>, index: &mut HashMap<Formula, usize>) {
            if index.contains_key(f) {
                return;
            }
            for c in f.children() {
                visit(c, out, index);
            }
            index.insert(f.clone(), out.len());
            out.push(f.clone());
        }
        visit(phi, &mut formulas, &mut index);
        SigmaContext::build(formulas)
    }

    /// Rebuilds a context from an explicit list, which must be subformula
    /// closed with children listed before parents and no duplicates.
    pub fn from_formulas(formulas: Vec<Formula>) -> Result<SigmaContext> {
        SigmaContext::build(formulas)
    }

    fn build(formulas: Vec<Formula>) -> Result<SigmaContext> {
        if formulas.len() > 64 {
            return Err(Error::SigmaTooLarge(formulas.len()));
        }
        let mut index = HashMap::new();
        let mut nodes = Vec::with_capacity(formulas.len());
        for (i, f) in formulas.iter().enumerate() {
            let look = |g: &Formula| {
                index.get(g).copied().ok_or_else(|| {
                    Error::SigmaMismatch(format!("{g} is not listed before {f}"))
                })
            };
            let node = match f {
                Formula::Bottom => Node::Bottom,
                Formula::Atom(_) => Node::Atom,
                Formula::And(a, b) => Node::And(look(a)?, look(b)?),
                Formula::Or(a, b) => Node::Or(look(a)?, look(b)?),
                Formula::Implies(a, b) => Node::Implies(look(a)?, look(b)?),
                Formula::Next(a) => Node::Next(look(a)?),
                Formula::Eventually(a) => Node::Eventually(look(a)?),
                Formula::Henceforth(a) => Node::Henceforth(look(a)?),
                Formula::Forall(a) => Node::Forall(look(a)?),
                Formula::Exists(a) => Node::Exists(look(a)?),
            };
            if index.insert(f.clone(), i).is_some() {
                return Err(Error::SigmaMismatch(format!("{f} listed twice")));
            }
            nodes.push(node);
        }
        let pick = |pred: fn(&Node) -> bool| -> Vec<usize> {
            (0..nodes.len()).filter(|&i| pred(&nodes[i])).collect()
        };
        let implications = pick(|n| matches!(n, Node::Implies(..)));
        let nexts = pick(|n| matches!(n, Node::Next(_)));
        let eventualities = pick(|n| matches!(n, Node::Eventually(_)));
        let foralls = pick(|n| matches!(n, Node::Forall(_)));
        let forall_mask = TypeSet::from_indices(foralls.iter().copied());
        Ok(SigmaContext {
            formulas,
            nodes,
            index,
            implications,
            nexts,
            eventualities,
            foralls,
            forall_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn formula(&self, i: usize) -> &Formula {
        &self.formulas[i]
    }

    pub fn node(&self, i: usize) -> Node {
        self.nodes[i]
    }

    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    /// The last formula in index order; for a closure built by [`SigmaContext::new`]
    /// this is the formula itself.
    pub fn top(&self) -> Option<usize> {
        self.len().checked_sub(1)
    }

    pub fn implications(&self) -> &[usize] {
        &self.implications
    }

    pub fn nexts(&self) -> &[usize] {
        &self.nexts
    }

    pub fn eventualities(&self) -> &[usize] {
        &self.eventualities
    }

    pub fn foralls(&self) -> &[usize] {
        &self.foralls
    }

    pub fn forall_mask(&self) -> TypeSet {
        self.forall_mask
    }

    pub fn full(&self) -> TypeSet {
        if self.len() == 64 {
            TypeSet(u64::MAX)
        } else {
            TypeSet((1u64 << self.len()) - 1)
        }
    }

    /// Body index of a unary node.
    pub fn body(&self, i: usize) -> usize {
        match self.nodes[i] {
            Node::Next(a)
            | Node::Eventually(a)
            | Node::Henceforth(a)
            | Node::Forall(a)
            | Node::Exists(a) => a,
            n => panic!("node {i} ({n:?}) is not unary"),
        }
    }

    /// Antecedent and consequent of an implication node.
    pub fn implication(&self, i: usize) -> (usize, usize) {
        match self.nodes[i] {
            Node::Implies(a, b) => (a, b),
            n => panic!("node {i} ({n:?}) is not an implication"),
        }
    }

    /// Builds a set from formulas that must all lie in Σ.
    pub fn set_of(&self, formulas: &[Formula]) -> Result<TypeSet> {
        let mut t = TypeSet::EMPTY;
        for f in formulas {
            let i = self
                .index_of(f)
                .ok_or_else(|| Error::SigmaMismatch(format!("{f} is not in sigma")))?;
            t.insert(i);
        }
        Ok(t)
    }

    pub fn formulas_of(&self, t: TypeSet) -> Vec<&Formula> {
        t.iter().map(|i| &self.formulas[i]).collect()
    }

    pub fn display_set(&self, t: TypeSet) -> String {
        let parts: Vec<String> = t.iter().map(|i| self.formulas[i].to_string()).collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// Checks the type conditions directly, formula by formula.
    pub fn is_type(&self, t: TypeSet) -> bool {
        if !t.is_subset(self.full()) {
            return false;
        }
        (0..self.len()).all(|i| {
            let has = t.contains(i);
            match self.nodes[i] {
                Node::Bottom => !has,
                Node::And(a, b) => has == (t.contains(a) && t.contains(b)),
                Node::Or(a, b) => has == (t.contains(a) || t.contains(b)),
                Node::Implies(a, b) => {
                    (!has || !t.contains(a) || t.contains(b)) && (!t.contains(b) || has)
                }
                Node::Eventually(a) => !t.contains(a) || has,
                _ => true,
            }
        })
    }

    /// All Σ-types in increasing numeric order.
    pub fn enumerate_types(&self) -> Vec<TypeSet> {
        let mut out = Vec::new();
        self.extend_types(0, TypeSet::EMPTY, &mut out);
        out.sort();
        out
    }

    fn extend_types(&self, i: usize, t: TypeSet, out: &mut Vec<TypeSet>) {
        if i == self.len() {
            out.push(t);
            return;
        }
        // Children precede parents, so a node's constraints only involve
        // memberships already decided.
        let forced = match self.nodes[i] {
            Node::Bottom => Some(false),
            Node::And(a, b) => Some(t.contains(a) && t.contains(b)),
            Node::Or(a, b) => Some(t.contains(a) || t.contains(b)),
            Node::Implies(_, b) if t.contains(b) => Some(true),
            Node::Implies(a, _) if t.contains(a) => Some(false),
            Node::Eventually(a) if t.contains(a) => Some(true),
            _ => None,
        };
        match forced {
            Some(true) => self.extend_types(i + 1, t.with(i), out),
            Some(false) => self.extend_types(i + 1, t, out),
            None => {
                self.extend_types(i + 1, t, out);
                self.extend_types(i + 1, t.with(i), out);
            }
        }
    }

    /// Implications `a -> b` of Σ with neither the implication nor `a` in `t`.
    pub fn defects(&self, t: TypeSet) -> TypeSet {
        let mut d = TypeSet::EMPTY;
        for &i in &self.implications {
            let (a, _) = self.implication(i);
            if !t.contains(i) && !t.contains(a) {
                d.insert(i);
            }
        }
        d
    }

    /// Whether `u` revokes the defect `delta`: antecedent in, consequent out.
    pub fn revokes(&self, u: TypeSet, delta: usize) -> bool {
        let (a, b) = self.implication(delta);
        u.contains(a) && !u.contains(b)
    }

    /// Whether `(now, next)` is a sensible pair.
    pub fn sensible_pair(&self, now: TypeSet, next: TypeSet) -> bool {
        if (now.0 ^ next.0) & self.forall_mask.0 != 0 {
            return false;
        }
        for &i in &self.nexts {
            if now.contains(i) != next.contains(self.body(i)) {
                return false;
            }
        }
        for &i in &self.eventualities {
            let a = self.body(i);
            if now.contains(i) != (now.contains(a) || next.contains(i)) {
                return false;
            }
        }
        true
    }
}
