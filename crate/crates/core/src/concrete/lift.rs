use std::collections::{BTreeMap, BTreeSet};

use super::{check_array_injective, shape_of, ConcreteHeap, Oid};
use crate::heap::{AbstractHeap, AbstractNode, AddrEntry, Nid, RootKind};
use crate::ir::Label;
use crate::normal::normalize;
use crate::Ctx;

/// One abstract node per object (node id = oid), one address per label.
///
/// Field addresses hold at most one pointer and are injective; the `[]`
/// address of an array is injective iff no two indices share a target. A
/// node's shape is the shape of its own one-object region, so an object
/// pointing at itself gets `any`.
pub fn iso_lift(ctx: &Ctx, heap: &ConcreteHeap) -> AbstractHeap {
    let program = ctx.program;
    let mut h = AbstractHeap::new();
    let all: BTreeSet<Oid> = heap.objects.keys().copied().collect();
    for o in heap.objects.values() {
        let types = BTreeSet::from([o.ty]);
        let mut targets: BTreeMap<Label, BTreeSet<Nid>> = program
            .field_labels(&types)
            .into_iter()
            .map(|l| (l, BTreeSet::new()))
            .collect();
        for (s, v) in &o.slots {
            if let Some(t) = v.as_ref() {
                targets.entry(s.abstract_label()).or_default().insert(t);
            }
        }
        let single = BTreeSet::from([o.oid]);
        let fields = targets
            .into_iter()
            .map(|(l, ts)| {
                let injective = match l {
                    Label::Array => check_array_injective(&single, &all, heap),
                    Label::Field(_) => true,
                };
                (l, h.fresh_addr(AddrEntry { injective, targets: ts }))
            })
            .collect();
        let shape = shape_of(&single, heap);
        h.insert_node_at(
            o.oid,
            AbstractNode {
                types,
                shape,
                fields,
            },
        );
    }
    let mut roots: BTreeMap<(bool, &str), BTreeSet<Nid>> = BTreeMap::new();
    for (n, v) in &heap.env {
        roots.entry((false, n)).or_default().extend(v.iter().copied());
    }
    for (n, vs) in &heap.frames {
        roots.entry((false, n)).or_default().extend(vs.iter().flatten().copied());
    }
    for (n, v) in &heap.statics {
        roots.entry((true, n)).or_default().extend(v.iter().copied());
    }
    for ((is_static, name), ts) in roots {
        let kind = if is_static { RootKind::Static } else { RootKind::Var };
        h.bind_root(kind, name, ts);
    }
    h
}

/// The abstraction function: iso-lift, then normalize.
pub fn abstract_lift(ctx: &Ctx, heap: &ConcreteHeap) -> AbstractHeap {
    normalize(ctx, &iso_lift(ctx, heap))
}
