use std::collections::BTreeSet;

use shir_core::concrete::{abstract_lift, interpret, PointFilter};
use shir_core::domain::{equal_unchecked, upper_approx};
use shir_core::fixpoint::{analyze_program, AnalysisConfig};
use shir_core::precision::{
    compare, match_regions, property_match_rates, runtime_baseline, runtime_precise_rates, score_point, TSV_HEADER,
};
use shir_core::{corpus, AbstractHeap, Ctx, Shape};

mod common;

#[test]
fn expression_heap_runtime_precise_rates() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let h = abstract_lift(&ctx, &common::expr_heap(&p));
    // Count non-self pointer edges and their cells directly from the store.
    let mut edges = 0;
    let mut injective = 0;
    for (id, node) in &h.nodes {
        for a in node.fields.values() {
            let e = &h.store[a];
            for t in &e.targets {
                if t != id {
                    edges += 1;
                    injective += usize::from(e.injective);
                }
            }
        }
    }
    assert_eq!((edges, injective), (4, 3));
    let precise = h.nodes.values().filter(|n| matches!(n.shape, Shape::None | Shape::Tree)).count();
    assert_eq!(precise, h.nodes.len());
    assert_eq!(runtime_precise_rates(&h), (100.0, 75.0));
}

#[test]
fn baseline_of_one_snapshot_is_its_abstraction() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let heap = common::expr_heap(&p);
    let alpha = abstract_lift(&ctx, &heap);
    let one = runtime_baseline(&ctx, [&heap]).unwrap();
    assert!(equal_unchecked(&one, &alpha));
    let two = runtime_baseline(&ctx, [&heap, &heap]).unwrap();
    assert!(equal_unchecked(&two, &alpha));
    assert!(runtime_baseline(&ctx, []).is_none());
}

#[test]
fn baseline_does_not_depend_on_snapshot_order() {
    let p = corpus::by_name("list_append").unwrap().load().unwrap();
    let ctx = Ctx::new(&p);
    let snaps = common::snapshots(&p, 4);
    let at = &snaps.last().unwrap().1.point;
    let heaps: Vec<_> = snaps.iter().filter(|(_, s)| &s.point == at).map(|(_, s)| &s.heap).collect();
    assert!(heaps.len() >= 2);
    let fwd = runtime_baseline(&ctx, heaps.iter().copied()).unwrap();
    let rev = runtime_baseline(&ctx, heaps.iter().rev().copied()).unwrap();
    assert!(equal_unchecked(&fwd, &rev));
}

#[test]
fn identical_heaps_score_full_marks() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let h = abstract_lift(&ctx, &common::expr_heap(&p));
    let r = score_point("main:entry:1", 1, &h, &h);
    assert_eq!(
        (r.region_match_pct, r.shape_match_pct, r.injectivity_match_pct),
        (100.0, 100.0, 100.0)
    );
    assert_eq!(r.runtime_nodes, 4);
    assert_eq!(r.static_nodes, 4);
    let m = match_regions(&h, &h);
    assert_eq!(m.pairs, (0..4).map(|n| (n, n)).collect());
}

#[test]
fn extra_static_region_does_not_cost_region_match() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let rt = abstract_lift(&ctx, &common::expr_heap(&p));
    // A static state that additionally allows `exp` to name a lone Const.
    let mut extra = AbstractHeap::new();
    let c = extra.fresh_node(&p, BTreeSet::from([p.type_id("Const").unwrap()]), Shape::None);
    extra.bind_var("exp", BTreeSet::from([c]));
    let st = upper_approx(&ctx, &rt, &extra);
    assert!(st.nodes.len() >= rt.nodes.len());
    let m = match_regions(&st, &rt);
    assert_eq!(m.region_pct, 100.0);
    assert_eq!(m.pairs.len(), rt.nodes.len());
}

#[test]
fn coarser_static_state_loses_property_matches() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let rt = abstract_lift(&ctx, &common::expr_heap(&p));
    let mut st = rt.clone();
    for n in st.nodes.values_mut() {
        n.shape = Shape::Any;
    }
    for e in st.store.values_mut() {
        e.injective = false;
    }
    let m = match_regions(&st, &rt);
    assert_eq!(m.region_pct, 100.0);
    // Shapes all differ; of the four edges only the shared `l` cell agrees.
    assert_eq!(property_match_rates(&m, &st, &rt), (0.0, 25.0));
}

#[test]
fn compare_reports_every_reached_point() {
    let p = common::expr();
    let ctx = Ctx::new(&p);
    let r = analyze_program(&ctx, &AnalysisConfig::default()).unwrap();
    let runs: Vec<_> = (0..3).map(|s| interpret(&p, s, common::BUDGET, &PointFilter::All)).collect();
    let rep = compare(&ctx, "expr", &r, &runs);
    let reached: BTreeSet<String> = runs[0].snapshots.iter().map(|s| s.point.to_string()).collect();
    assert_eq!(rep.points.iter().map(|p| p.point.clone()).collect::<BTreeSet<_>>(), reached);
    assert!(rep.missing.is_empty());
    assert_eq!(rep.seeds, 3);
    assert!(rep.points.iter().all(|p| p.snapshots == 3));
    assert_eq!(rep.summary.region_match_pct, 100.0);
    let tsv = rep.to_tsv();
    assert!(tsv.starts_with(TSV_HEADER));
    assert_eq!(tsv.lines().count(), rep.points.len() + 2);
    assert!(tsv.lines().last().unwrap().starts_with("mean\t"));
}
