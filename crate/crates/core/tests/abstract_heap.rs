use std::collections::BTreeSet;

use shir_core::concrete::abstract_lift;
use shir_core::heap::{Pred, RootKind};
use shir_core::{AbstractHeap, AddrEntry, Ctx, Label, Program, Shape};

mod common;

fn expr_summary(p: &Program) -> AbstractHeap {
    abstract_lift(&Ctx::new(p), &common::expr_heap(p))
}

fn node_of(p: &Program, h: &AbstractHeap, ty: &str) -> u32 {
    let t = p.type_id(ty).unwrap();
    *h.nodes.iter().find(|(_, n)| n.types.contains(&t)).unwrap().0
}

#[test]
fn fresh_binary_node_has_empty_injective_cells() {
    let p = common::expr();
    let mut h = AbstractHeap::new();
    let n = h.fresh_node(&p, BTreeSet::from([p.type_id("Add").unwrap()]), Shape::None);
    let labels: Vec<&str> = h.nodes[&n].fields.keys().map(|&l| p.label_name(l)).collect();
    assert_eq!(labels, ["l", "r"]);
    for &a in h.nodes[&n].fields.values() {
        assert_eq!(h.store[&a], AddrEntry::empty());
    }
    let m = h.fresh_node(&p, BTreeSet::from([p.type_id("Var[]").unwrap()]), Shape::None);
    assert_ne!(n, m);
    assert_eq!(h.nodes[&m].fields.keys().copied().collect::<Vec<_>>(), [Label::Array]);
    h.check_well_formed(&p).unwrap();
}

#[test]
fn every_node_of_the_expression_heap_is_reachable() {
    let p = common::expr();
    let h = expr_summary(&p);
    assert_eq!(h.nodes.len(), 4);
    assert_eq!(h.reachable_nodes().len(), 4);
}

#[test]
fn chain_reachability() {
    let p = Program::load("class L { next: L; }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    let l = BTreeSet::from([p.type_id("L").unwrap()]);
    let next = Label::Field(p.field_id("next").unwrap());
    let mut h = AbstractHeap::new();
    let ns: Vec<u32> = (0..4).map(|_| h.fresh_node(&p, l.clone(), Shape::None)).collect();
    for w in ns[..3].windows(2) {
        let a = h.nodes[&w[0]].fields[&next];
        h.entry_mut(a).targets.insert(w[1]);
    }
    h.bind_var("v", BTreeSet::from([ns[0]]));
    assert_eq!(h.reachable_nodes(), ns[..3].iter().copied().collect());
    let mut g = h.clone();
    g.gc_unreachable();
    assert_eq!(g.nodes.len(), 3);
    let mut again = g.clone();
    again.gc_unreachable();
    assert_eq!(again, g);
    g.check_well_formed(&p).unwrap();
}

#[test]
fn predecessors_of_the_var_region() {
    let p = common::expr();
    let h = expr_summary(&p);
    let var = node_of(&p, &h, "Var");
    let tree = node_of(&p, &h, "Add");
    let arr = node_of(&p, &h, "Var[]");
    let l = Label::Field(p.field_id("l").unwrap());
    let r = Label::Field(p.field_id("r").unwrap());
    assert_eq!(
        h.predecessors(var),
        BTreeSet::from([Pred::Node(tree, l), Pred::Node(tree, r), Pred::Node(arr, Label::Array)])
    );
    assert_eq!(h.predecessors(arr), BTreeSet::from([Pred::Static("env".into())]));
}

#[test]
fn shape_join_table() {
    for a in Shape::ALL {
        assert_eq!(a.join(a), a);
        assert_eq!(a.join(Shape::None), a);
        assert_eq!(a.join(Shape::Any), Shape::Any);
        for b in Shape::ALL {
            assert_eq!(a.join(b), b.join(a));
            for c in Shape::ALL {
                assert_eq!(a.join(b).join(c), a.join(b.join(c)));
            }
        }
    }
    assert_eq!(Shape::None.join(Shape::Tree), Shape::Tree);
    assert_eq!(Shape::Tree.join(Shape::Any), Shape::Any);
}

#[test]
fn expression_heap_golden_dot_and_text() {
    let p = common::expr();
    let h = expr_summary(&p);
    assert_eq!(h.to_dot(&p), include_str!("golden/expr.dot"));
    assert_eq!(h.canonical_text(&p), include_str!("golden/expr.txt"));
}

#[test]
fn dot_of_small_heaps() {
    let p = common::expr();
    assert_eq!(AbstractHeap::new().to_dot(&p), "digraph heap {\n}\n");
    let mut h = AbstractHeap::new();
    h.bind_var("x", BTreeSet::new());
    h.bind_root(RootKind::Static, "env", BTreeSet::new());
    let dot = h.to_dot(&p);
    assert!(dot.contains("\"v:x\" [shape=box"));
    assert!(dot.contains("\"s:env\" [shape=box"));
    assert!(!dot.contains("ellipse"));
}

#[test]
fn canonical_text_ignores_node_numbering() {
    let p = common::expr();
    let h = expr_summary(&p);
    let renamed = shir_core::domain::disjoint_union(&h, &AbstractHeap::new());
    assert_ne!(renamed.nodes.keys().collect::<Vec<_>>(), Vec::<&u32>::new());
    assert_eq!(renamed.canonical_text(&p), h.canonical_text(&p));
}
