use std::collections::BTreeSet;

use shir_core::concrete::abstract_lift;
use shir_core::corpus;
use shir_core::domain::equal_unchecked;
use shir_core::fixpoint::{
    analyze_method, analyze_program, initial_state, AnalysisConfig, AnalysisError, CallGraph,
};
use shir_core::{Ctx, Label, Program, ProgramPoint, Shape};

mod common;

fn sample(name: &str) -> Program {
    corpus::by_name(name).unwrap().load().unwrap()
}

#[test]
fn straight_line_builder_is_exact() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let at = r.state_at(&ProgramPoint::new("main", "entry", 1)).unwrap();
    let alpha = abstract_lift(&ctx, &common::expr_heap(&p));
    assert!(equal_unchecked(at, &alpha), "{}", at.canonical_text(&p));
    assert_eq!(r.state_before_exit(&ctx, "main").unwrap().canonical_text(&p), alpha.canonical_text(&p));
}

#[test]
fn call_and_inlined_body_agree() {
    let inlined = {
        let src = corpus::EXPR;
        let body: String = src
            .lines()
            .skip_while(|l| !l.starts_with("entry:"))
            .skip(1)
            .take_while(|l| !l.contains("return root"))
            .map(|l| format!("{l}\n"))
            .collect();
        let decls: String = src
            .lines()
            .skip_while(|l| !l.starts_with("method build"))
            .skip(1)
            .take_while(|l| l.trim_start().starts_with("var"))
            .map(|l| format!("{l}\n"))
            .collect();
        let head: String = src.lines().take_while(|l| !l.starts_with("method")).map(|l| format!("{l}\n")).collect();
        format!("{head}method main() {{\n  var exp: Expr;\n{decls}entry:\n{body}  exp = root\n  return\n}}\n")
    };
    let p = Program::load(&inlined).unwrap();
    let ctx = Ctx::new(&p);
    let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let mut h = r.state_before_exit(&ctx, "main").unwrap();
    for v in p.method("main").unwrap().ref_vars() {
        if v != "exp" {
            h.remove_root(shir_core::heap::RootKind::Var, v);
        }
    }
    let h = shir_core::normal::normalize(&ctx, &h);

    let q = common::expr();
    let qctx = Ctx::new(&q);
    let called = analyze_program(&qctx, &AnalysisConfig::default()).unwrap();
    assert_eq!(
        h.canonical_text(&p),
        called.state_before_exit(&qctx, "main").unwrap().canonical_text(&q)
    );
}

#[test]
fn loop_built_list_is_one_recursive_region() {
    let p = sample("list_loop");
    let ctx = Ctx::new(&p);
    let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let h = r.state_before_exit(&ctx, "main").unwrap();
    let cell = p.type_id("Cell").unwrap();
    let cells: Vec<_> = h.nodes.iter().filter(|(_, n)| n.types.contains(&cell)).collect();
    assert_eq!(cells.len(), 1, "{}", h.canonical_text(&p));
    let (&id, node) = cells[0];
    let next = h.field_entry(id, Label::Field(p.field_id("next").unwrap())).unwrap();
    assert!(next.targets.contains(&id));
    assert_ne!(node.shape, Shape::None);
    assert_eq!(h.var_targets("head"), BTreeSet::from([id]));
}

#[test]
fn method_without_calls_runs_alone() {
    let p = sample("list_loop");
    let ctx = Ctx::new(&p);
    let whole = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let alone = analyze_method(&ctx, "main", &initial_state(&ctx), &AnalysisConfig::default()).unwrap();
    assert_eq!(alone.points.len(), whole.methods["main"].points.len());
    for (pt, h) in &alone.points {
        assert!(equal_unchecked(h, &whole.methods["main"].points[pt]), "{pt}");
    }
    assert!(alone.exit.is_some());
}

#[test]
fn recursion_converges() {
    for name in ["rec_list", "tree_rec", "mutual"] {
        let p = sample(name);
        let ctx = Ctx::new(&p);
        assert!(CallGraph::new(&p).recursive_scc("main").is_none());
        let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
        assert!(r.max_iterations <= 21, "{name}: {}", r.max_iterations);
        assert!(r.state_before_exit(&ctx, "main").is_some(), "{name}");
    }
    let p = sample("rec_list");
    assert!(CallGraph::new(&p).recursive_scc("mk").is_some());
    let ctx = Ctx::new(&p);
    let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let h = r.state_before_exit(&ctx, "main").unwrap();
    let cell = p.type_id("Cell").unwrap();
    assert_eq!(h.nodes.values().filter(|n| n.types.contains(&cell)).count(), 1);
}

#[test]
fn every_sample_reaches_a_fixpoint_under_the_default_cap() {
    for s in corpus::ALL {
        let p = s.load().unwrap();
        let ctx = Ctx::new(&p);
        let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        for (pt, h) in r.methods.values().flat_map(|m| m.points.iter()) {
            shir_core::normal::check_normal_form(&ctx, h).unwrap_or_else(|e| panic!("{} {pt}: {e}", s.name));
        }
    }
}

#[test]
fn tiny_iteration_cap_is_reported() {
    let p = sample("list_loop");
    let ctx = Ctx::new(&p);
    let config = AnalysisConfig {
        iter_cap: 2,
        ..AnalysisConfig::default()
    };
    match analyze_program(&ctx, &config) {
        Err(AnalysisError::IterationCap { method, cap }) => {
            assert_eq!(method, "main");
            assert_eq!(cap, 2);
        }
        other => panic!("expected an iteration-cap error, got {other:?}"),
    }
}
