//! Heap generators shared by the benchmarks and the scaling check.

use std::collections::BTreeMap;

use shir_core::concrete::{iso_lift, ConcreteHeap, ConcreteObject, SlotLabel, Value};
use shir_core::{AbstractHeap, Ctx, Program};

pub const LIST_SRC: &str = "class Cell { next: Cell; data: Item; }\nclass Item;\n\
    method main() {\n  var head: Cell;\nentry:\n  return\n}\n";

pub fn list_program() -> Program {
    Program::load(LIST_SRC).expect("list program parses")
}

/// `n` cells linked through `next`, each with a private `Item`, rooted at
/// `head`.
pub fn list_concrete(p: &Program, n: u32) -> ConcreteHeap {
    let cell = p.type_id("Cell").unwrap();
    let item = p.type_id("Item").unwrap();
    let next = SlotLabel::Field(p.field_id("next").unwrap());
    let data = SlotLabel::Field(p.field_id("data").unwrap());
    let mut h = ConcreteHeap::default();
    for i in 0..n {
        let (c, d) = (2 * i, 2 * i + 1);
        let succ = if i + 1 < n { Value::Ref(c + 2) } else { Value::Null };
        h.objects.insert(
            c,
            ConcreteObject {
                oid: c,
                ty: cell,
                slots: BTreeMap::from([(next, succ), (data, Value::Ref(d))]),
            },
        );
        h.objects.insert(
            d,
            ConcreteObject {
                oid: d,
                ty: item,
                slots: BTreeMap::new(),
            },
        );
    }
    h.env.insert("head".into(), (n > 0).then_some(0));
    h
}

/// One abstract node per object of [`list_concrete`]: the input to
/// `normalize` when abstracting that heap.
pub fn list_heap(ctx: &Ctx, n: u32) -> AbstractHeap {
    iso_lift(ctx, &list_concrete(ctx.program, n))
}
