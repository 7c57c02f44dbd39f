use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{ConcreteHeap, Oid, SlotLabel};
use crate::heap::{AbstractHeap, Addr, Nid, Shape};

/// `mu`: the object-to-node map proving membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingWitness {
    pub mu: BTreeMap<Oid, Nid>,
}

/// The first membership condition that cannot be met, checked in the order
/// Embed, Typing, Injective, Shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GammaFailure {
    Embed,
    Typing,
    Injective,
    Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GammaError {
    #[error("no embedding: {0:?} cannot be satisfied")]
    NotMember(GammaFailure),
    #[error("embedding search exceeded {0} node assignments")]
    Budget(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GammaOptions {
    /// Upper bound on tentative object-to-node assignments.
    pub max_assignments: u64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            max_assignments: 1_000_000,
        }
    }
}

/// Decides whether `heap` is in the concretization of `abs` by searching
/// for an embedding `mu` that satisfies Embed, Typing, Injective, and Shape.
pub fn gamma_member(
    heap: &ConcreteHeap,
    abs: &AbstractHeap,
    opts: &GammaOptions,
) -> Result<EmbeddingWitness, GammaError> {
    let problem = Problem::new(heap, abs);
    match problem.solve(GammaFailure::Shape, opts.max_assignments)? {
        Some(mu) => Ok(EmbeddingWitness { mu }),
        None => {
            for level in [GammaFailure::Embed, GammaFailure::Typing, GammaFailure::Injective] {
                if problem.solve(level, opts.max_assignments)?.is_none() {
                    return Err(GammaError::NotMember(level));
                }
            }
            Err(GammaError::NotMember(GammaFailure::Shape))
        }
    }
}

struct Problem<'a> {
    heap: &'a ConcreteHeap,
    abs: &'a AbstractHeap,
    order: Vec<Oid>,
    out_ptrs: HashMap<Oid, Vec<(SlotLabel, Oid)>>,
    in_ptrs: HashMap<Oid, Vec<(Oid, SlotLabel)>>,
    /// Root addresses each object must be a target of; `None` marks a
    /// concrete root with no abstract counterpart.
    root_addrs: HashMap<Oid, Vec<Option<Addr>>>,
}

struct Search<'a, 'p> {
    p: &'p Problem<'a>,
    level: GammaFailure,
    mu: HashMap<Oid, Nid>,
    /// `(address, target)` claimed by an injective address, with the
    /// concrete pointer source that claimed it.
    claims: HashMap<(Addr, Oid), (Oid, SlotLabel)>,
    indeg: HashMap<Oid, u32>,
    region: HashMap<Nid, BTreeSet<Oid>>,
    assignments: u64,
    budget: u64,
}

impl<'a> Problem<'a> {
    fn new(heap: &'a ConcreteHeap, abs: &'a AbstractHeap) -> Self {
        let mut out_ptrs: HashMap<Oid, Vec<(SlotLabel, Oid)>> = HashMap::new();
        let mut in_ptrs: HashMap<Oid, Vec<(Oid, SlotLabel)>> = HashMap::new();
        for (s, l, t) in heap.pointers() {
            out_ptrs.entry(s).or_default().push((l, t));
            in_ptrs.entry(t).or_default().push((s, l));
        }
        let mut root_addrs: HashMap<Oid, Vec<Option<Addr>>> = HashMap::new();
        let mut order = Vec::with_capacity(heap.objects.len());
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for r in heap.roots() {
            let map = if r.is_static { &abs.statics } else { &abs.env };
            root_addrs
                .entry(r.target)
                .or_default()
                .push(map.get(r.name).copied());
            if seen.insert(r.target) {
                queue.push_back(r.target);
            }
        }
        loop {
            while let Some(o) = queue.pop_front() {
                order.push(o);
                for &(_, t) in out_ptrs.get(&o).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen.insert(t) {
                        queue.push_back(t);
                    }
                }
            }
            match heap.objects.keys().find(|o| !seen.contains(o)) {
                Some(&o) => {
                    seen.insert(o);
                    queue.push_back(o);
                }
                None => break,
            }
        }
        Problem {
            heap,
            abs,
            order,
            out_ptrs,
            in_ptrs,
            root_addrs,
        }
    }

    fn solve(&self, level: GammaFailure, budget: u64) -> Result<Option<BTreeMap<Oid, Nid>>, GammaError> {
        let mut s = Search {
            p: self,
            level,
            mu: HashMap::new(),
            claims: HashMap::new(),
            indeg: HashMap::new(),
            region: HashMap::new(),
            assignments: 0,
            budget,
        };
        if s.go(0)? {
            Ok(Some(s.mu.into_iter().collect()))
        } else {
            Ok(None)
        }
    }

    fn outs(&self, o: Oid) -> &[(SlotLabel, Oid)] {
        self.out_ptrs.get(&o).map(Vec::as_slice).unwrap_or(&[])
    }

    fn ins(&self, o: Oid) -> &[(Oid, SlotLabel)] {
        self.in_ptrs.get(&o).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Search<'_, '_> {
    fn go(&mut self, i: usize) -> Result<bool, GammaError> {
        let Some(&o) = self.p.order.get(i) else {
            return Ok(true);
        };
        for n in self.candidates(o) {
            if !self.admissible(o, n) {
                continue;
            }
            self.assignments += 1;
            if self.assignments > self.budget {
                return Err(GammaError::Budget(self.budget));
            }
            let undo = self.assign(o, n);
            if self.level >= GammaFailure::Shape && !self.shape_ok(o, n) {
                self.unassign(o, n, undo);
                continue;
            }
            if self.go(i + 1)? {
                return Ok(true);
            }
            self.unassign(o, n, undo);
        }
        Ok(false)
    }

    /// Nodes worth trying for `o`: targets of a constraining root or of an
    /// already-mapped predecessor, else every node.
    fn candidates(&self, o: Oid) -> Vec<Nid> {
        let abs = self.p.abs;
        if let Some(addrs) = self.p.root_addrs.get(&o) {
            return match addrs[0] {
                Some(a) => abs.store[&a].targets.iter().copied().collect(),
                None => Vec::new(),
            };
        }
        for &(src, l) in self.p.ins(o) {
            if let Some(&m) = self.mu.get(&src) {
                return match abs.nodes[&m].fields.get(&l.abstract_label()) {
                    Some(a) => abs.store[a].targets.iter().copied().collect(),
                    None => Vec::new(),
                };
            }
        }
        abs.nodes.keys().copied().collect()
    }

    fn target_ok(&self, src_node: Nid, l: SlotLabel, target_node: Nid) -> bool {
        let abs = self.p.abs;
        match abs.nodes[&src_node].fields.get(&l.abstract_label()) {
            Some(a) => abs.store[a].targets.contains(&target_node),
            None => false,
        }
    }

    /// Embed, Typing, and Injective checks for mapping `o` to `n`.
    fn admissible(&self, o: Oid, n: Nid) -> bool {
        let abs = self.p.abs;
        let node = &abs.nodes[&n];
        if self.level >= GammaFailure::Typing && !node.types.contains(&self.p.heap.objects[&o].ty) {
            return false;
        }
        if let Some(addrs) = self.p.root_addrs.get(&o) {
            for a in addrs {
                match a {
                    Some(a) if abs.store[a].targets.contains(&n) => {}
                    _ => return false,
                }
            }
        }
        for &(src, l) in self.p.ins(o) {
            if let Some(&m) = self.mu.get(&src) {
                if !self.target_ok(m, l, n) {
                    return false;
                }
            }
        }
        for &(l, t) in self.p.outs(o) {
            if !node.fields.contains_key(&l.abstract_label()) {
                return false;
            }
            let tn = if t == o { Some(n) } else { self.mu.get(&t).copied() };
            if let Some(tn) = tn {
                if !self.target_ok(n, l, tn) {
                    return false;
                }
            }
        }
        if self.level >= GammaFailure::Injective {
            let mut local: HashMap<(Addr, Oid), SlotLabel> = HashMap::new();
            for &(l, t) in self.p.outs(o) {
                let a = node.fields[&l.abstract_label()];
                if !abs.store[&a].injective {
                    continue;
                }
                if self.claims.contains_key(&(a, t)) {
                    return false;
                }
                if local.insert((a, t), l).is_some() {
                    return false;
                }
            }
        }
        true
    }

    fn assign(&mut self, o: Oid, n: Nid) -> Vec<(Addr, Oid)> {
        self.mu.insert(o, n);
        self.region.entry(n).or_default().insert(o);
        let mut claimed = Vec::new();
        if self.level >= GammaFailure::Injective {
            let node = &self.p.abs.nodes[&n];
            for &(l, t) in self.p.outs(o) {
                let a = node.fields[&l.abstract_label()];
                if self.p.abs.store[&a].injective {
                    self.claims.insert((a, t), (o, l));
                    claimed.push((a, t));
                }
            }
        }
        claimed
    }

    fn unassign(&mut self, o: Oid, n: Nid, claimed: Vec<(Addr, Oid)>) {
        self.mu.remove(&o);
        self.indeg.remove(&o);
        if let Some(r) = self.region.get_mut(&n) {
            r.remove(&o);
        }
        for k in claimed {
            self.claims.remove(&k);
        }
        self.recount_indeg(n);
    }

    fn recount_indeg(&mut self, n: Nid) {
        let members: Vec<Oid> = self.region.get(&n).map(|r| r.iter().copied().collect()).unwrap_or_default();
        for &m in &members {
            self.indeg.remove(&m);
        }
        for &m in &members {
            for &(_, t) in self.p.outs(m) {
                if self.mu.get(&t) == Some(&n) {
                    *self.indeg.entry(t).or_default() += 1;
                }
            }
        }
    }

    /// Shape check for region `n` after adding `o`.
    fn shape_ok(&mut self, o: Oid, n: Nid) -> bool {
        let shape = self.p.abs.nodes[&n].shape;
        let internal_out: Vec<Oid> = self
            .p
            .outs(o)
            .iter()
            .filter(|(_, t)| self.mu.get(t) == Some(&n))
            .map(|&(_, t)| t)
            .collect();
        let internal_in: Vec<Oid> = self
            .p
            .ins(o)
            .iter()
            .filter(|(s, _)| *s != o && self.mu.get(s) == Some(&n))
            .map(|&(s, _)| s)
            .collect();
        if internal_out.is_empty() && internal_in.is_empty() {
            return true;
        }
        match shape {
            Shape::Any => true,
            Shape::None => false,
            Shape::Tree => {
                for &t in &internal_out {
                    *self.indeg.entry(t).or_default() += 1;
                }
                *self.indeg.entry(o).or_default() += internal_in.len() as u32;
                let region = &self.region[&n];
                if region.iter().any(|m| self.indeg.get(m).copied().unwrap_or(0) > 1) {
                    return false;
                }
                // Any new cycle passes through `o`.
                let mut stack = internal_out;
                let mut seen = BTreeSet::new();
                while let Some(x) = stack.pop() {
                    if x == o {
                        return false;
                    }
                    if !seen.insert(x) {
                        continue;
                    }
                    for &(_, t) in self.p.outs(x) {
                        if self.mu.get(&t) == Some(&n) {
                            stack.push(t);
                        }
                    }
                }
                true
            }
        }
    }
}
