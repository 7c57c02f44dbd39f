use std::collections::{BTreeMap, BTreeSet};

use super::{ConcreteHeap, Oid, Pointer, SlotLabel};
use crate::heap::Shape;
use crate::ir::FieldId;

/// Non-null pointers from objects in `c1` to objects in `c2`.
pub fn pointers_between(c1: &BTreeSet<Oid>, c2: &BTreeSet<Oid>, heap: &ConcreteHeap) -> BTreeSet<Pointer> {
    let mut out = BTreeSet::new();
    for &o in c1 {
        let Some(obj) = heap.objects.get(&o) else {
            continue;
        };
        for (&s, v) in &obj.slots {
            if let Some(t) = v.as_ref() {
                if c2.contains(&t) {
                    out.insert((o, s, t));
                }
            }
        }
    }
    out
}

/// Distinct sources reach distinct targets through field `field`.
pub fn check_injective(c1: &BTreeSet<Oid>, c2: &BTreeSet<Oid>, field: FieldId, heap: &ConcreteHeap) -> bool {
    let mut seen: BTreeMap<Oid, Oid> = BTreeMap::new();
    for (s, l, t) in pointers_between(c1, c2, heap) {
        if l != SlotLabel::Field(field) {
            continue;
        }
        match seen.insert(t, s) {
            Some(prev) if prev != s => return false,
            _ => {}
        }
    }
    true
}

/// Distinct array indices hold distinct targets.
pub fn check_array_injective(c1: &BTreeSet<Oid>, c2: &BTreeSet<Oid>, heap: &ConcreteHeap) -> bool {
    let mut seen: BTreeMap<Oid, u32> = BTreeMap::new();
    for (_, l, t) in pointers_between(c1, c2, heap) {
        let SlotLabel::Index(i) = l else {
            continue;
        };
        match seen.insert(t, i) {
            Some(prev) if prev != i => return false,
            _ => {}
        }
    }
    true
}

/// Shape of the subgraph induced by `c`: `none` without internal pointers,
/// `tree` when it is a forest (acyclic, at most one internal pointer into
/// each object), `any` otherwise.
pub fn shape_of(c: &BTreeSet<Oid>, heap: &ConcreteHeap) -> Shape {
    let internal = pointers_between(c, c, heap);
    if internal.is_empty() {
        return Shape::None;
    }
    let mut indeg: BTreeMap<Oid, usize> = BTreeMap::new();
    let mut succ: BTreeMap<Oid, Vec<Oid>> = BTreeMap::new();
    for &(s, _, t) in &internal {
        *indeg.entry(t).or_default() += 1;
        succ.entry(s).or_default().push(t);
    }
    if indeg.values().any(|&d| d > 1) {
        return Shape::Any;
    }
    // With in-degree at most one, a cycle is the only way to fail; every
    // object on a cycle has in-degree exactly one, so peel from the
    // in-degree-zero objects and see whether everything gets visited.
    let mut visited = BTreeSet::new();
    let mut stack: Vec<Oid> = c.iter().copied().filter(|o| !indeg.contains_key(o)).collect();
    while let Some(o) = stack.pop() {
        if !visited.insert(o) {
            continue;
        }
        if let Some(ts) = succ.get(&o) {
            stack.extend(ts.iter().copied());
        }
    }
    if visited.len() == c.len() {
        Shape::Tree
    } else {
        Shape::Any
    }
}
