//! The normal form: congruence closure over nodes (recursive structure,
//! equivalent successors, equivalent targets), then one summary node per
//! class with merged shape and store.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::heap::{AbstractHeap, AbstractNode, AddrEntry, Nid, RootKind, Shape};
use crate::ir::{Label, TypeId};
use crate::Ctx;

/// Union-find over node indices with cached type unions and the recursive
/// components those types belong to.
#[derive(Clone, Debug)]
pub struct Partition {
    parent: Vec<usize>,
    rank: Vec<u8>,
    types: Vec<BTreeSet<TypeId>>,
    rec: Vec<BTreeSet<u32>>,
}

impl Partition {
    pub fn new(ctx: &Ctx, types: Vec<BTreeSet<TypeId>>) -> Self {
        let n = types.len();
        let rec = types
            .iter()
            .map(|ts| ts.iter().filter_map(|&t| ctx.rec.class_of(t)).collect())
            .collect();
        Partition {
            parent: (0..n).collect(),
            rank: vec![0; n],
            types,
            rec,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merges two classes; returns the new representative.
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        let (hi, lo) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.parent[lo] = hi;
        let moved = std::mem::take(&mut self.types[lo]);
        self.types[hi].extend(moved);
        let moved = std::mem::take(&mut self.rec[lo]);
        self.rec[hi].extend(moved);
        hi
    }

    /// Cached type union of the class of `x`.
    pub fn class_types(&mut self, x: usize) -> &BTreeSet<TypeId> {
        let r = self.find(x);
        &self.types[r]
    }

    /// The type unions of the two classes intersect.
    pub fn compatible(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        !self.types[a].is_disjoint(&self.types[b])
    }

    /// Some type of one class is recursively related to some type of the
    /// other.
    pub fn types_recursive(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        !self.rec[a].is_disjoint(&self.rec[b])
    }

    pub fn class_count(&mut self) -> usize {
        (0..self.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Nodes in canonical order plus their partition.
#[derive(Clone, Debug)]
pub struct Closure {
    pub order: Vec<Nid>,
    pub index: HashMap<Nid, usize>,
    pub partition: Partition,
}

impl Closure {
    /// Classes as node-id lists, ordered by their first member.
    pub fn classes(&mut self) -> Vec<Vec<Nid>> {
        let mut by_root: BTreeMap<usize, Vec<Nid>> = BTreeMap::new();
        let mut first: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &n) in self.order.iter().enumerate() {
            let r = self.partition.find(i);
            first.entry(r).or_insert(i);
            by_root.entry(r).or_default().push(n);
        }
        let mut classes: Vec<(usize, Vec<Nid>)> =
            by_root.into_iter().map(|(r, ms)| (first[&r], ms)).collect();
        classes.sort();
        classes.into_iter().map(|(_, ms)| ms).collect()
    }

    pub fn class_of(&mut self, n: Nid) -> usize {
        let i = self.index[&n];
        self.partition.find(i)
    }
}

/// Recursive-structure relation between the classes of `a` and `b`: their
/// types are recursively related and some edge runs from the first class
/// into the second.
pub fn recursive_related(h: &AbstractHeap, c: &mut Closure, a: Nid, b: Nid) -> bool {
    let (ca, cb) = (c.class_of(a), c.class_of(b));
    if ca == cb || !c.partition.types_recursive(ca, cb) {
        return false;
    }
    h.edges().any(|(s, _, _, t)| c.class_of(s) == ca && c.class_of(t) == cb)
}

/// Equivalent successors: same label and compatible classes.
pub fn equivalent_successors(c: &mut Closure, a: Nid, la: Label, b: Nid, lb: Label) -> bool {
    let (ca, cb) = (c.class_of(a), c.class_of(b));
    la == lb && c.partition.compatible(ca, cb)
}

/// Equivalent targets of one root: compatible classes, and either the root
/// is a static or neither class has a predecessor outside itself.
pub fn equivalent_targets(h: &AbstractHeap, c: &mut Closure, a: Nid, b: Nid, root: RootKind) -> bool {
    let (ca, cb) = (c.class_of(a), c.class_of(b));
    if !c.partition.compatible(ca, cb) {
        return false;
    }
    if root == RootKind::Static {
        return true;
    }
    let ext = external_preds(h, c);
    !ext.contains(&ca) && !ext.contains(&cb)
}

/// Classes with an incoming edge from a different class.
fn external_preds(h: &AbstractHeap, c: &mut Closure) -> HashSet<usize> {
    let mut out = HashSet::new();
    for (s, _, _, t) in h.edges() {
        let (cs, ct) = (c.class_of(s), c.class_of(t));
        if cs != ct {
            out.insert(ct);
        }
    }
    out
}

/// Coarsest partition of the (garbage-free) heap in which no two classes are
/// related by recursive structure, equivalent successors, or equivalent
/// targets.
///
/// Runs deterministic passes over edges, labels, and roots until a pass
/// merges nothing.
pub fn congruence_closure(ctx: &Ctx, h: &AbstractHeap) -> Closure {
    let order = h.canonical_order(ctx.program);
    let index: HashMap<Nid, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let types = order.iter().map(|n| h.nodes[n].types.clone()).collect();
    let mut p = Partition::new(ctx, types);

    let mut edges: Vec<(usize, Label, usize)> = Vec::with_capacity(h.nodes.len());
    for (s, l, _, t) in h.edges() {
        edges.push((index[&s], l, index[&t]));
    }
    let roots: Vec<(RootKind, Vec<usize>)> = h
        .roots()
        .map(|(k, _, a)| (k, h.store[&a].targets.iter().map(|t| index[t]).collect()))
        .collect();

    loop {
        let mut changed = false;

        for &(s, _, t) in &edges {
            let (cs, ct) = (p.find(s), p.find(t));
            if cs != ct && p.types_recursive(cs, ct) {
                p.union(cs, ct);
                changed = true;
            }
        }

        let mut succ: BTreeMap<(usize, Label), Vec<usize>> = BTreeMap::new();
        for &(s, l, t) in &edges {
            let cs = p.find(s);
            succ.entry((cs, l)).or_default().push(t);
        }
        for (_, targets) in succ {
            changed |= merge_compatible(&mut p, &targets);
        }

        let mut ext = vec![false; p.len()];
        for &(s, _, t) in &edges {
            let (cs, ct) = (p.find(s), p.find(t));
            if cs != ct {
                ext[ct] = true;
            }
        }
        for (kind, targets) in &roots {
            let eligible: Vec<usize> = match kind {
                RootKind::Static => targets.clone(),
                RootKind::Var => targets
                    .iter()
                    .copied()
                    .filter(|&t| {
                        let c = p.find(t);
                        !ext[c]
                    })
                    .collect(),
            };
            changed |= merge_compatible(&mut p, &eligible);
        }

        if !changed {
            break;
        }
    }
    Closure {
        order,
        index,
        partition: p,
    }
}

/// Merges every compatible pair among the classes of `members`.
fn merge_compatible(p: &mut Partition, members: &[usize]) -> bool {
    let mut changed = false;
    let mut reps: Vec<usize> = Vec::new();
    for &m in members {
        let mut c = p.find(m);
        let mut keep = Vec::with_capacity(reps.len() + 1);
        for r in reps {
            let r = p.find(r);
            if r == c {
                continue;
            }
            if p.compatible(r, c) {
                c = p.union(r, c);
                changed = true;
            } else {
                keep.push(r);
            }
        }
        keep.push(c);
        reps = keep;
    }
    changed
}

/// Shape contributed by the edges between distinct members of a class.
///
/// `tree` requires: every address carrying an internal edge is injective,
/// each member is the target of at most one internal (source, label) pair,
/// the member graph is acyclic, and every internal target has shape `none`.
/// A member's own self-edges are accounted for by its shape.
pub fn structural_shape(h: &AbstractHeap, members: &[Nid]) -> Shape {
    let set: BTreeSet<Nid> = members.iter().copied().collect();
    let mut internal = false;
    let mut in_pairs: BTreeMap<Nid, BTreeSet<(Nid, Label)>> = BTreeMap::new();
    let mut succ: BTreeMap<Nid, Vec<Nid>> = BTreeMap::new();
    let mut tree = true;
    for &s in members {
        for (&l, &a) in &h.nodes[&s].fields {
            let e = &h.store[&a];
            for &t in &e.targets {
                if t == s || !set.contains(&t) {
                    continue;
                }
                internal = true;
                if !e.injective || h.nodes[&t].shape != Shape::None {
                    tree = false;
                }
                in_pairs.entry(t).or_default().insert((s, l));
                succ.entry(s).or_default().push(t);
            }
        }
    }
    if !internal {
        return Shape::None;
    }
    if !tree || in_pairs.values().any(|ps| ps.len() > 1) {
        return Shape::Any;
    }
    // In-degree is at most one, so the member graph is acyclic iff walking
    // from the in-degree-zero members reaches everything.
    let mut seen = BTreeSet::new();
    let mut stack: Vec<Nid> = members.iter().copied().filter(|m| !in_pairs.contains_key(m)).collect();
    while let Some(m) = stack.pop() {
        if seen.insert(m) {
            if let Some(ts) = succ.get(&m) {
                stack.extend(ts.iter().copied());
            }
        }
    }
    if seen.len() == set.len() {
        Shape::Tree
    } else {
        Shape::Any
    }
}

/// Builds one summary node per class. Nodes and addresses are numbered
/// afresh in class order.
pub fn summarize(ctx: &Ctx, h: &AbstractHeap, closure: &mut Closure) -> AbstractHeap {
    let classes = closure.classes();
    let mut phi: HashMap<Nid, Nid> = HashMap::new();
    for (i, ms) in classes.iter().enumerate() {
        for &m in ms {
            phi.insert(m, i as Nid);
        }
    }
    let map = |ts: &BTreeSet<Nid>| -> BTreeSet<Nid> { ts.iter().map(|t| phi[t]).collect() };

    let mut out = AbstractHeap::new();
    for (kind, name, a) in h.roots() {
        out.bind_root(kind, name, map(&h.store[&a].targets));
    }
    for (i, ms) in classes.iter().enumerate() {
        let mut types = BTreeSet::new();
        let mut shape = structural_shape(h, ms);
        for m in ms {
            let node = &h.nodes[m];
            types.extend(node.types.iter().copied());
            shape = shape.join(node.shape);
        }
        let labels = ctx.program.field_labels(&types);
        let mut fields = BTreeMap::new();
        for l in labels {
            let mut entry = AddrEntry::empty();
            let mut seen: HashSet<Nid> = HashSet::new();
            for m in ms {
                let Some(a) = h.nodes[m].fields.get(&l) else {
                    continue;
                };
                let e = &h.store[a];
                entry.injective &= e.injective;
                for &t in &e.targets {
                    if !seen.insert(t) {
                        entry.injective = false;
                    }
                    entry.targets.insert(phi[&t]);
                }
            }
            fields.insert(l, out.fresh_addr(entry));
        }
        out.insert_node_at(
            i as Nid,
            AbstractNode {
                types,
                shape,
                fields,
            },
        );
    }
    out
}

/// Garbage collection, congruence closure, summarization.
pub fn normalize(ctx: &Ctx, h: &AbstractHeap) -> AbstractHeap {
    let mut cur = h.clone();
    cur.gc_unreachable();
    loop {
        let mut closure = congruence_closure(ctx, &cur);
        let merged = closure.partition.class_count() < closure.order.len();
        let next = summarize(ctx, &cur, &mut closure);
        if !merged {
            return next;
        }
        cur = next;
    }
}

/// Checks the normal-form conditions on a heap: everything reachable, and
/// no two distinct nodes related by recursive structure, equivalent
/// successors, or equivalent targets.
pub fn check_normal_form(ctx: &Ctx, h: &AbstractHeap) -> Result<(), String> {
    let live = h.reachable_nodes();
    if live.len() != h.nodes.len() {
        return Err(format!("{} unreachable node(s)", h.nodes.len() - live.len()));
    }
    let rec_related = |a: Nid, b: Nid| {
        h.nodes[&a].types.iter().any(|&x| {
            h.nodes[&b]
                .types
                .iter()
                .any(|&y| ctx.rec.related(x, y))
        })
    };
    let compatible = |a: Nid, b: Nid| !h.nodes[&a].types.is_disjoint(&h.nodes[&b].types);
    let mut external: BTreeSet<Nid> = BTreeSet::new();
    for (s, l, _, t) in h.edges() {
        if s != t {
            external.insert(t);
            if rec_related(s, t) {
                return Err(format!("edge {s}.{:?} -> {t} joins a recursive structure", l));
            }
        }
    }
    let pairwise = |ts: &[Nid]| -> Option<(Nid, Nid)> {
        for (i, &a) in ts.iter().enumerate() {
            for &b in &ts[i + 1..] {
                if compatible(a, b) {
                    return Some((a, b));
                }
            }
        }
        None
    };
    for (&n, node) in &h.nodes {
        for (l, a) in &node.fields {
            let ts: Vec<Nid> = h.store[a].targets.iter().copied().collect();
            if let Some((x, y)) = pairwise(&ts) {
                return Err(format!("{x} and {y} are equivalent successors of {n} on {l:?}"));
            }
        }
    }
    for (kind, name, a) in h.roots() {
        let ts: Vec<Nid> = h.store[&a]
            .targets
            .iter()
            .copied()
            .filter(|t| kind == RootKind::Static || !external.contains(t))
            .collect();
        if let Some((x, y)) = pairwise(&ts) {
            return Err(format!("{x} and {y} are equivalent targets of {name}"));
        }
    }
    Ok(())
}
