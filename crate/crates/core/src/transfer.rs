//! Transfer functions. Variable and static cells are updated strongly,
//! heap cells weakly.

use std::collections::BTreeSet;

use crate::heap::{AbstractHeap, Nid, RootKind, Shape};
use crate::ir::{FieldType, Label, Method, Stmt, TypeId};
use crate::Ctx;

/// Deliberate defects for checking that the soundness sweep notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Stores keep the old injectivity flag even when the new target
    /// overlaps the old target set.
    StoreInjectivity,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "store-injectivity" => Ok(Fault::StoreInjectivity),
            _ => Err(format!("unknown fault `{s}`")),
        }
    }
}

/// `v = new T`: a fresh node with empty injective fields.
pub fn tf_alloc(ctx: &Ctx, h: &mut AbstractHeap, v: &str, ty: TypeId) -> Nid {
    let n = h.fresh_node(ctx.program, BTreeSet::from([ty]), Shape::None);
    h.bind_var(v, BTreeSet::from([n]));
    n
}

/// Union of `label` targets over `nodes`; nodes lacking the label add
/// nothing.
pub fn load_targets(h: &AbstractHeap, nodes: &BTreeSet<Nid>, label: Label) -> BTreeSet<Nid> {
    let mut out = BTreeSet::new();
    for &n in nodes {
        if let Some(e) = h.field_entry(n, label) {
            out.extend(e.targets.iter().copied());
        }
    }
    out
}

/// `v = w.label`
pub fn tf_load(h: &mut AbstractHeap, v: &str, w: &str, label: Label) {
    let ts = load_targets(h, &h.var_targets(w), label);
    h.bind_var(v, ts);
}

/// `v.label = w`: weak update of every cell `v` may name.
pub fn tf_store(h: &mut AbstractHeap, v: &str, label: Label, w: &str, fault: Option<Fault>) {
    let src = h.var_targets(w);
    for n in h.var_targets(v) {
        let Some(&a) = h.nodes[&n].fields.get(&label) else {
            continue;
        };
        if src.contains(&n) {
            h.nodes.get_mut(&n).expect("live node").shape = Shape::Any;
        }
        let e = h.entry_mut(a);
        let overlap = !e.targets.is_disjoint(&src);
        if fault != Some(Fault::StoreInjectivity) {
            e.injective &= !overlap;
        }
        e.targets.extend(src.iter().copied());
    }
}

/// `v = w`
pub fn tf_copy(h: &mut AbstractHeap, v: &str, w: &str) {
    let ts = h.var_targets(w);
    h.bind_var(v, ts);
}

/// `v = null`
pub fn tf_null(h: &mut AbstractHeap, v: &str) {
    h.bind_var(v, BTreeSet::new());
}

/// `v = w[i]`
pub fn tf_array_load(h: &mut AbstractHeap, v: &str, w: &str) {
    tf_load(h, v, w, Label::Array)
}

/// `v[i] = w`
pub fn tf_array_store(h: &mut AbstractHeap, v: &str, w: &str, fault: Option<Fault>) {
    tf_store(h, v, Label::Array, w, fault)
}

/// `v = s`
pub fn tf_static_read(h: &mut AbstractHeap, v: &str, s: &str) {
    let ts = h.root_targets(RootKind::Static, s);
    h.bind_var(v, ts);
}

/// `s = v`: statics are single cells, so this is a strong update.
pub fn tf_static_write(h: &mut AbstractHeap, s: &str, v: &str) {
    let ts = h.var_targets(v);
    h.bind_root(RootKind::Static, s, ts);
}

fn is_ref(m: &Method, v: &str) -> bool {
    matches!(m.var_type(v), Some(FieldType::Ref(_)))
}

/// Applies a straight-line statement of `method`. Calls and terminators are
/// the driver's business and leave the heap untouched here; so do
/// statements that only move integers.
pub fn apply(ctx: &Ctx, method: &Method, h: &mut AbstractHeap, stmt: &Stmt, fault: Option<Fault>) {
    match stmt {
        Stmt::New { dst, ty } | Stmt::NewArray { dst, ty, .. } => {
            tf_alloc(ctx, h, dst, *ty);
        }
        Stmt::Copy { dst, src } if is_ref(method, dst) => tf_copy(h, dst, src),
        Stmt::StaticRead { dst, name } if is_ref(method, dst) => tf_static_read(h, dst, name),
        Stmt::StaticWrite { name, src } if is_ref(method, src) => tf_static_write(h, name, src),
        Stmt::Null { dst } => tf_null(h, dst),
        Stmt::Load { dst, src, field } if is_ref(method, dst) => {
            tf_load(h, dst, src, Label::Field(*field))
        }
        Stmt::Store { dst, field, src } if is_ref(method, src) => {
            tf_store(h, dst, Label::Field(*field), src, fault)
        }
        Stmt::ArrayLoad { dst, array, .. } => tf_array_load(h, dst, array),
        Stmt::ArrayStore { array, src, .. } => tf_array_store(h, array, src, fault),
        _ => {}
    }
}

/// Narrows the state for the branch taken by `if isnull v`: `v` has no
/// target on the null branch, and the other branch is infeasible when `v`
/// has none to begin with. `None` marks an infeasible branch.
pub fn refine_isnull(h: &AbstractHeap, v: &str, is_null: bool) -> Option<AbstractHeap> {
    if is_null {
        let mut out = h.clone();
        if out.env.contains_key(v) {
            out.bind_var(v, BTreeSet::new());
        }
        Some(out)
    } else if h.var_targets(v).is_empty() {
        None
    } else {
        Some(h.clone())
    }
}
