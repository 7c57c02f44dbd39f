//! Equality of normal forms via root-driven isomorphism, and the upper
//! approximation used as join.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::heap::{AbstractHeap, AbstractNode, Addr, AddrEntry, Nid, RootKind};
use crate::normal::{check_normal_form, normalize};
use crate::Ctx;

/// A bijection between the nodes of two heaps found by
/// [`find_isomorphism`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsoWitness {
    pub phi: BTreeMap<Nid, Nid>,
    /// Node pairings plus address-pair visits made by the first sweep.
    pub visits: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IsoError {
    #[error("not isomorphic: {0}")]
    NotIsomorphic(String),
    #[error("{side} heap is not in normal form: {reason}")]
    NotNormal { side: &'static str, reason: String },
}

fn fail<T>(msg: impl Into<String>) -> Result<T, IsoError> {
    Err(IsoError::NotIsomorphic(msg.into()))
}

struct Matcher<'a> {
    h1: &'a AbstractHeap,
    h2: &'a AbstractHeap,
    phi: HashMap<Nid, Nid>,
    inv: HashMap<Nid, Nid>,
    queue: VecDeque<(Addr, Addr)>,
    visits: usize,
}

enum Step {
    Done,
    Ambiguous,
}

impl Matcher<'_> {
    fn pair(&mut self, a: Nid, b: Nid) -> Result<(), IsoError> {
        self.phi.insert(a, b);
        self.inv.insert(b, a);
        self.visits += 1;
        let (na, nb) = (&self.h1.nodes[&a], &self.h2.nodes[&b]);
        if na.fields.len() != nb.fields.len() {
            return fail(format!("nodes {a} and {b} have different labels"));
        }
        for (l, &fa) in &na.fields {
            match nb.fields.get(l) {
                Some(&fb) => self.queue.push_back((fa, fb)),
                None => return fail(format!("nodes {a} and {b} have different labels")),
            }
        }
        Ok(())
    }

    /// Pairs the targets of two corresponding addresses. Targets whose
    /// partner is not yet determined by type-set overlap are reported as
    /// ambiguous and retried once more of the graph is paired.
    fn step(&mut self, a1: Addr, a2: Addr, strict: bool) -> Result<Step, IsoError> {
        let t1 = &self.h1.store[&a1].targets;
        let t2 = &self.h2.store[&a2].targets;
        if t1.len() != t2.len() {
            return fail(format!("addresses {a1} and {a2} have different target counts"));
        }
        let mut ambiguous = false;
        for &x in t1 {
            if let Some(y) = self.phi.get(&x) {
                if !t2.contains(y) {
                    return fail(format!("node {x} is paired with {y}, which address {a2} does not target"));
                }
                continue;
            }
            let tx = &self.h1.nodes[&x].types;
            let cands: Vec<Nid> = t2
                .iter()
                .copied()
                .filter(|y| !self.inv.contains_key(y))
                .filter(|y| !self.h2.nodes[y].types.is_disjoint(tx))
                .collect();
            let pick = match cands.len() {
                0 => return fail(format!("no partner for node {x} under address {a1}")),
                1 => Some(cands[0]),
                _ if strict => {
                    let sig = signature(self.h1, x);
                    let same: Vec<Nid> = cands
                        .iter()
                        .copied()
                        .filter(|&y| signature(self.h2, y) == sig)
                        .collect();
                    match same.first() {
                        Some(&y) => Some(y),
                        None => return fail(format!("no partner for node {x} under address {a1}")),
                    }
                }
                _ => None,
            };
            match pick {
                Some(y) => self.pair(x, y)?,
                None => ambiguous = true,
            }
        }
        Ok(if ambiguous { Step::Ambiguous } else { Step::Done })
    }

    fn drain(&mut self, deferred: &mut Vec<(Addr, Addr)>, strict: bool) -> Result<bool, IsoError> {
        let mut progress = false;
        while let Some((a1, a2)) = self.queue.pop_front() {
            self.visits += 1;
            let before = self.phi.len();
            match self.step(a1, a2, strict)? {
                Step::Done => {}
                Step::Ambiguous => deferred.push((a1, a2)),
            }
            progress |= self.phi.len() > before;
        }
        Ok(progress)
    }
}

/// Local description used only to break ties between type-compatible
/// siblings that nothing else distinguishes.
fn signature(h: &AbstractHeap, n: Nid) -> (BTreeSet<crate::TypeId>, crate::Shape, Vec<(crate::Label, bool, usize)>) {
    let node = &h.nodes[&n];
    let fields = node
        .fields
        .iter()
        .map(|(l, a)| (*l, h.store[a].injective, h.store[a].targets.len()))
        .collect();
    (node.types.clone(), node.shape, fields)
}

/// Pairs nodes breadth-first from same-named roots, matching each target to
/// the unique type-compatible target on the other side.
pub fn find_isomorphism(ctx: &Ctx, h1: &AbstractHeap, h2: &AbstractHeap) -> Result<IsoWitness, IsoError> {
    check_normal_form(ctx, h1).map_err(|reason| IsoError::NotNormal { side: "left", reason })?;
    check_normal_form(ctx, h2).map_err(|reason| IsoError::NotNormal { side: "right", reason })?;
    match_heaps(h1, h2)
}

/// [`find_isomorphism`] without the normal-form precondition check.
pub fn match_heaps(h1: &AbstractHeap, h2: &AbstractHeap) -> Result<IsoWitness, IsoError> {
    if !h1.env.keys().eq(h2.env.keys()) || !h1.statics.keys().eq(h2.statics.keys()) {
        return fail("root sets differ");
    }
    if h1.nodes.len() != h2.nodes.len() {
        return fail("node counts differ");
    }
    let mut m = Matcher {
        h1,
        h2,
        phi: HashMap::new(),
        inv: HashMap::new(),
        queue: VecDeque::new(),
        visits: 0,
    };
    for ((_, _, a1), (_, _, a2)) in h1.roots().zip(h2.roots()) {
        m.queue.push_back((a1, a2));
    }
    let mut deferred = Vec::new();
    m.drain(&mut deferred, false)?;
    let visits = m.visits;
    let mut strict = false;
    while !deferred.is_empty() {
        m.queue.extend(deferred.drain(..));
        let progress = m.drain(&mut deferred, strict)?;
        if !progress {
            if strict {
                return fail("ambiguous pairing");
            }
            strict = true;
        }
    }
    if m.phi.len() != h1.nodes.len() {
        return fail("some nodes are unreachable from the roots");
    }
    Ok(IsoWitness {
        phi: m.phi.into_iter().collect(),
        visits,
    })
}

/// Equality of normal forms: isomorphic with equal types, shapes, label
/// sets, injectivity flags, and mapped target sets.
pub fn abs_equal(ctx: &Ctx, h1: &AbstractHeap, h2: &AbstractHeap) -> Result<bool, IsoError> {
    check_normal_form(ctx, h1).map_err(|reason| IsoError::NotNormal { side: "left", reason })?;
    check_normal_form(ctx, h2).map_err(|reason| IsoError::NotNormal { side: "right", reason })?;
    Ok(equal_unchecked(h1, h2))
}

/// [`abs_equal`] without the normal-form precondition check.
pub fn equal_unchecked(h1: &AbstractHeap, h2: &AbstractHeap) -> bool {
    let Ok(w) = match_heaps(h1, h2) else {
        return false;
    };
    let phi = &w.phi;
    let mapped = |ts: &BTreeSet<Nid>| -> BTreeSet<Nid> { ts.iter().map(|t| phi[t]).collect() };
    for ((_, _, a1), (_, _, a2)) in h1.roots().zip(h2.roots()) {
        if mapped(&h1.store[&a1].targets) != h2.store[&a2].targets {
            return false;
        }
    }
    for (n1, &n2) in phi {
        let (x, y) = (&h1.nodes[n1], &h2.nodes[&n2]);
        if x.types != y.types || x.shape != y.shape || !x.fields.keys().eq(y.fields.keys()) {
            return false;
        }
        for (l, a1) in &x.fields {
            let (e1, e2) = (&h1.store[a1], &h2.store[&y.fields[l]]);
            if e1.injective != e2.injective || mapped(&e1.targets) != e2.targets {
                return false;
            }
        }
    }
    true
}

/// Copies every node of `src` into `out` under fresh ids and addresses.
pub(crate) fn copy_nodes(out: &mut AbstractHeap, src: &AbstractHeap) -> HashMap<Nid, Nid> {
    let mut ids: HashMap<Nid, Nid> = HashMap::new();
    let mut pending = Vec::new();
    for (&n, node) in &src.nodes {
        let fields: BTreeMap<_, _> = node
            .fields
            .iter()
            .map(|(l, a)| (*l, (out.fresh_addr(AddrEntry::empty()), *a)))
            .collect();
        let new = out.insert_node(AbstractNode {
            types: node.types.clone(),
            shape: node.shape,
            fields: fields.iter().map(|(l, (na, _))| (*l, *na)).collect(),
        });
        ids.insert(n, new);
        pending.extend(fields.into_values());
    }
    for (na, a) in pending {
        let e = &src.store[&a];
        *out.entry_mut(na) = AddrEntry {
            injective: e.injective,
            targets: e.targets.iter().map(|t| ids[t]).collect(),
        };
    }
    ids
}

/// Disjoint union of both heaps with each root bound to the union of its
/// targets on either side, then normalized.
pub fn upper_approx(ctx: &Ctx, h1: &AbstractHeap, h2: &AbstractHeap) -> AbstractHeap {
    normalize(ctx, &disjoint_union(h1, h2))
}

/// The un-normalized disjoint union behind [`upper_approx`].
pub fn disjoint_union(h1: &AbstractHeap, h2: &AbstractHeap) -> AbstractHeap {
    let mut out = AbstractHeap::new();
    let m1 = copy_nodes(&mut out, h1);
    let m2 = copy_nodes(&mut out, h2);
    let mut roots: BTreeMap<(RootKind, String), BTreeSet<Nid>> = BTreeMap::new();
    for (h, m) in [(h1, &m1), (h2, &m2)] {
        for (k, name, a) in h.roots() {
            roots
                .entry((k, name.to_string()))
                .or_default()
                .extend(h.store[&a].targets.iter().map(|t| m[t]));
        }
    }
    for ((k, name), ts) in roots {
        out.bind_root(k, &name, ts);
    }
    out
}
