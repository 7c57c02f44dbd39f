//! Concrete heaps, the reference interpreter, the concrete shape and
//! injectivity predicates, the abstraction function, and the
//! concretization check.

mod gamma;
mod interp;
mod lift;
mod predicates;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::ir::{FieldId, Label, Program, ProgramPoint, TypeId};

pub use gamma::{gamma_member, EmbeddingWitness, GammaError, GammaFailure, GammaOptions};
pub use interp::{
    interpret, Interpretation, Machine, PointFilter, RuntimeError, RuntimeFault,
};
pub use lift::{abstract_lift, iso_lift};
pub use predicates::{check_array_injective, check_injective, pointers_between, shape_of};

pub type Oid = u32;

/// A concrete slot: a named field or an array index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotLabel {
    Field(FieldId),
    Index(u32),
}

impl SlotLabel {
    /// The abstract label this slot is embedded under.
    pub fn abstract_label(self) -> Label {
        match self {
            SlotLabel::Field(f) => Label::Field(f),
            SlotLabel::Index(_) => Label::Array,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Ref(Oid),
    Int(i64),
}

impl Value {
    pub fn as_ref(self) -> Option<Oid> {
        match self {
            Value::Ref(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteObject {
    pub oid: Oid,
    pub ty: TypeId,
    pub slots: BTreeMap<SlotLabel, Value>,
}

/// A non-null pointer `(source, slot, target)`.
pub type Pointer = (Oid, SlotLabel, Oid);

/// Roots plus the objects reachable from them.
///
/// `env` holds the reference locals of the executing method; `frames` holds
/// the reference locals of suspended callers under the names `^method.var`,
/// one value per suspended activation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcreteHeap {
    pub env: BTreeMap<String, Option<Oid>>,
    pub frames: BTreeMap<String, Vec<Option<Oid>>>,
    pub statics: BTreeMap<String, Option<Oid>>,
    pub objects: BTreeMap<Oid, ConcreteObject>,
}

/// Root cell of a concrete heap as seen by the abstraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteRoot<'a> {
    pub is_static: bool,
    pub name: &'a str,
    pub target: Oid,
}

impl ConcreteHeap {
    /// Non-null root cells: env, then frames, then statics.
    pub fn roots(&self) -> Vec<ConcreteRoot<'_>> {
        let mut out = Vec::new();
        for (n, v) in &self.env {
            if let Some(t) = v {
                out.push(ConcreteRoot {
                    is_static: false,
                    name: n,
                    target: *t,
                });
            }
        }
        for (n, vs) in &self.frames {
            for t in vs.iter().flatten() {
                out.push(ConcreteRoot {
                    is_static: false,
                    name: n,
                    target: *t,
                });
            }
        }
        for (n, v) in &self.statics {
            if let Some(t) = v {
                out.push(ConcreteRoot {
                    is_static: true,
                    name: n,
                    target: *t,
                });
            }
        }
        out
    }

    /// All non-null pointers between objects, in oid/slot order.
    pub fn pointers(&self) -> Vec<Pointer> {
        let mut out = Vec::new();
        for o in self.objects.values() {
            for (&s, v) in &o.slots {
                if let Value::Ref(t) = v {
                    out.push((o.oid, s, *t));
                }
            }
        }
        out
    }

    pub fn object(&self, oid: Oid) -> &ConcreteObject {
        &self.objects[&oid]
    }

    /// Objects reachable from the roots.
    pub fn reachable(&self) -> BTreeSet<Oid> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for r in self.roots() {
            if seen.insert(r.target) {
                queue.push_back(r.target);
            }
        }
        while let Some(o) = queue.pop_front() {
            if let Some(obj) = self.objects.get(&o) {
                for v in obj.slots.values() {
                    if let Value::Ref(t) = v {
                        if seen.insert(*t) {
                            queue.push_back(*t);
                        }
                    }
                }
            }
        }
        seen
    }

    /// Drops objects not reachable from a root.
    pub fn restrict_to_reachable(&mut self) {
        let live = self.reachable();
        self.objects.retain(|o, _| live.contains(o));
    }

    /// True when every referenced oid is present.
    pub fn is_closed(&self) -> bool {
        self.roots().iter().all(|r| self.objects.contains_key(&r.target))
            && self
                .pointers()
                .iter()
                .all(|(_, _, t)| self.objects.contains_key(t))
    }

    /// Line-oriented dump: env, frame, and static lines, then one line per
    /// object as `oid:Type {label=oid|null, ...}`.
    pub fn dump(&self, program: &Program) -> String {
        let val = |v: &Option<Oid>| match v {
            Some(o) => o.to_string(),
            None => "null".to_string(),
        };
        let mut out = String::new();
        for (n, v) in &self.env {
            let _ = writeln!(out, "env {n} = {}", val(v));
        }
        for (n, vs) in &self.frames {
            let vals: Vec<String> = vs.iter().map(val).collect();
            let _ = writeln!(out, "frame {n} = {}", vals.join(", "));
        }
        for (n, v) in &self.statics {
            let _ = writeln!(out, "static {n} = {}", val(v));
        }
        for o in self.objects.values() {
            let slots: Vec<String> = o
                .slots
                .iter()
                .map(|(s, v)| {
                    let name = match s {
                        SlotLabel::Field(f) => program.field_name(*f).to_string(),
                        SlotLabel::Index(i) => i.to_string(),
                    };
                    let v = match v {
                        Value::Null => "null".to_string(),
                        Value::Ref(t) => t.to_string(),
                        Value::Int(k) => format!("#{k}"),
                    };
                    format!("{name}={v}")
                })
                .collect();
            let _ = writeln!(out, "{}:{} {{{}}}", o.oid, program.type_name(o.ty), slots.join(", "));
        }
        out
    }
}

/// Heap captured just before the statement at `point` executed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub point: ProgramPoint,
    pub heap: ConcreteHeap,
}
