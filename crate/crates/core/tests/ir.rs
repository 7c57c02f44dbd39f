use std::collections::BTreeSet;

use shir_core::ir::{LoadError, ParseErrorKind, Stmt, TypeKind};
use shir_core::{corpus, Label, Program};

mod common;

fn names(p: &Program, ts: &[shir_core::TypeId]) -> Vec<String> {
    ts.iter().map(|&t| p.type_name(t).to_string()).collect()
}

fn labels(p: &Program, types: &[&str]) -> BTreeSet<String> {
    let ids: BTreeSet<_> = types.iter().map(|t| p.type_id(t).unwrap()).collect();
    p.field_labels(&ids).into_iter().map(|l| p.label_name(l).to_string()).collect()
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn class_with_super_and_no_fields() {
    let p = Program::load("class Expr;\nclass Var : Expr { }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    let var = p.type_decl(p.type_id("Var").unwrap());
    match &var.kind {
        TypeKind::Class { fields, .. } => assert!(fields.is_empty()),
        k => panic!("{k:?}"),
    }
    assert_eq!(p.super_type(p.type_id("Var").unwrap()), p.type_id("Expr"));
}

#[test]
fn expression_program_declares_six_classes_and_one_static() {
    let p = common::expr();
    let classes: Vec<_> = p
        .type_ids()
        .filter(|&t| !p.type_decl(t).is_array())
        .map(|t| p.type_name(t).to_string())
        .collect();
    assert_eq!(classes.len(), 6, "{classes:?}");
    assert_eq!(p.statics.len(), 1);
    assert!(p.statics.contains_key("env"));
}

#[test]
fn unresolved_field_type() {
    let err = Program::parse("class A { f: B; }\nmethod main() {\nentry:\n  return\n}\n").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Unresolved("B".into()));
    assert_eq!(err.line, 1);
}

#[test]
fn duplicate_and_syntax_errors_carry_positions() {
    let dup = Program::parse("class A;\nclass A;\nmethod main() {\nentry:\n  return\n}\n").unwrap_err();
    assert_eq!(dup.kind, ParseErrorKind::Duplicate("A".into()));
    assert_eq!(dup.line, 2);
    let syn = Program::parse("class A;\nmethod main() {\nentry:\n  x = = y\n}\n").unwrap_err();
    assert!(matches!(syn.kind, ParseErrorKind::Syntax(_)));
    assert_eq!(syn.line, 4);
}

#[test]
fn comments_are_ignored() {
    let p = Program::load("# header\nclass A; # trailing\nmethod main() {\nentry: # here\n  return\n}\n").unwrap();
    assert!(p.type_id("A").is_some());
}

#[test]
fn statement_forms_parse() {
    let src = "class L { next: L; n: int; }\nstatic s: L;\n\
        method f(a: L, k: int): L {\n  var b: L;\n  var arr: L[];\n  var i: int;\n\
        entry:\n  b = new L\n  arr = new L[3]\n  b = a\n  b = null\n  b = a.next\n  a.next = b\n\
          b = arr[i]\n  arr[1] = b\n  i = 4\n  i = i + k\n  b = s\n  s = b\n  b = call f(a, i)\n  call f(b, i)\n\
          if nondet goto x else y\nx:\n  if isnull b goto y else z\ny:\n  if i < 3 goto z else z\nz:\n  goto w\nw:\n  return b\n}\n\
        method main() {\nentry:\n  return\n}\n";
    let p = Program::load(src).unwrap();
    let f = p.method("f").unwrap();
    let kinds: Vec<&str> = f.blocks[0]
        .stmts
        .iter()
        .map(|s| match s {
            Stmt::New { .. } => "new",
            Stmt::NewArray { .. } => "newarray",
            Stmt::Copy { .. } => "copy",
            Stmt::Null { .. } => "null",
            Stmt::Load { .. } => "load",
            Stmt::Store { .. } => "store",
            Stmt::ArrayLoad { .. } => "aload",
            Stmt::ArrayStore { .. } => "astore",
            Stmt::Const { .. } => "const",
            Stmt::Add { .. } => "add",
            Stmt::StaticRead { .. } => "sread",
            Stmt::StaticWrite { .. } => "swrite",
            Stmt::Call { dst: Some(_), .. } => "call",
            Stmt::Call { dst: None, .. } => "call0",
            Stmt::IfNondet { .. } => "nondet",
            _ => "other",
        })
        .collect();
    assert_eq!(
        kinds,
        [
            "new", "newarray", "copy", "null", "load", "store", "aload", "astore", "const", "add", "sread", "swrite",
            "call", "call0", "nondet"
        ]
    );
}

#[test]
fn field_labels_examples() {
    let p = common::expr();
    assert_eq!(labels(&p, &["Add"]), set(&["l", "r"]));
    assert_eq!(labels(&p, &["Var[]"]), set(&["[]"]));
    assert_eq!(labels(&p, &["Add", "Var"]), set(&["l", "r"]));
    assert_eq!(labels(&p, &["Var", "Const"]), set(&[]));
}

#[test]
fn int_fields_have_no_label() {
    let p = Program::load("class A { n: int; f: A; }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    let a = p.type_id("A").unwrap();
    assert_eq!(p.labels_of(a).len(), 1);
    assert!(p.labels_of(a).contains(&Label::Field(p.field_id("f").unwrap())));
}

#[test]
fn inherited_fields_count() {
    let p = Program::load("class B { f: B; }\nclass C : B { g: B; }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    assert_eq!(labels(&p, &["C"]), set(&["f", "g"]));
}

#[test]
fn recursive_types_of_the_expression_program() {
    let p = common::expr();
    let rec = p.recursive_types();
    assert_eq!(rec.classes().len(), 1);
    let mut got = names(&p, &rec.classes()[0]);
    got.sort();
    assert_eq!(got, ["Add", "Mult", "Sub"]);
    for t in ["Var", "Const", "Var[]", "Expr"] {
        assert!(!rec.is_recursive(p.type_id(t).unwrap()), "{t}");
    }
}

#[test]
fn self_reference_is_recursive() {
    let p = Program::load("class L { next: L; }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    assert!(p.recursive_types().is_recursive(p.type_id("L").unwrap()));
}

#[test]
fn acyclic_reference_is_not_recursive() {
    // Brute force: A -> B only, so no type reaches itself.
    let p = Program::load("class A { f: B; }\nclass B { }\nmethod main() {\nentry:\n  return\n}\n").unwrap();
    assert!(p.recursive_types().classes().is_empty());
}

#[test]
fn corpus_validates_and_round_trips() {
    for s in corpus::ALL {
        let p = s.load().unwrap();
        assert!(p.validate().is_empty(), "{}", s.name);
        let printed = p.to_string();
        let q = Program::load(&printed).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", s.name));
        assert_eq!(p, q, "{}", s.name);
        assert_eq!(printed, q.to_string());
    }
}

fn diagnostics(src: &str) -> Vec<String> {
    match Program::load(src) {
        Err(LoadError::Invalid(ds)) => ds.iter().map(|d| d.to_string()).collect(),
        Ok(_) => Vec::new(),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn jump_to_undeclared_block() {
    let ds = diagnostics("method main() {\nentry:\n  goto nowhere\n}\n");
    assert_eq!(ds.len(), 1, "{ds:?}");
    assert!(ds[0].contains("nowhere"));
}

#[test]
fn store_to_missing_field() {
    let ds = diagnostics("class A;\nclass B { f: B; }\nmethod main() {\n  var a: A;\n  var b: B;\nentry:\n  a = new A\n  a.f = b\n  return\n}\n");
    assert_eq!(ds.len(), 1, "{ds:?}");
}

#[test]
fn other_validation_failures() {
    assert!(!diagnostics("method main(x: int) {\nentry:\n  return\n}\n").is_empty());
    assert!(!diagnostics("method f() {\nentry:\n  return\n}\n").is_empty());
    assert!(!diagnostics("method main() {\nentry:\n  y = null\n  return\n}\n").is_empty());
    assert!(!diagnostics("method main() {\nentry:\n  return\n  return\n}\n").is_empty());
    assert!(!diagnostics("method main() {\nentry:\n  call g()\n  return\n}\n").is_empty());
    assert!(!diagnostics("class A;\nclass B;\nmethod main() {\n  var a: A;\nentry:\n  a = new B\n  return\n}\n").is_empty());
    assert!(!diagnostics("class A : B;\nclass B : A;\nmethod main() {\nentry:\n  return\n}\n").is_empty());
}

#[test]
fn subtypes_are_assignable() {
    let p = common::expr();
    let add = p.type_id("Add").unwrap();
    let expr = p.type_id("Expr").unwrap();
    assert!(p.is_subtype(add, expr));
    assert!(!p.is_subtype(expr, add));
}
