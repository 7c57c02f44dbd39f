#![allow(dead_code)]

use shir_core::concrete::{interpret, ConcreteHeap, PointFilter, Snapshot};
use shir_core::corpus;
use shir_core::{Program, ProgramPoint};

pub const BUDGET: u64 = 100_000;

pub fn expr() -> Program {
    Program::load(corpus::EXPR).unwrap()
}

/// Heap at the return of `main` in the expression builder.
pub fn expr_heap(p: &Program) -> ConcreteHeap {
    let at = ProgramPoint::new("main", "entry", 1);
    let run = interpret(p, 0, BUDGET, &PointFilter::Only([at].into()));
    assert!(run.error.is_none());
    run.snapshots.into_iter().next().unwrap().heap
}

pub fn snapshots(p: &Program, seeds: u64) -> Vec<(u64, Snapshot)> {
    let mut out = Vec::new();
    for seed in 0..seeds {
        let run = interpret(p, seed, BUDGET, &PointFilter::All);
        assert!(run.error.is_none(), "seed {seed}: {:?}", run.error);
        out.extend(run.snapshots.into_iter().map(|s| (seed, s)));
    }
    out
}

pub fn programs() -> Vec<(&'static str, Program)> {
    corpus::ALL.iter().map(|s| (s.name, s.load().unwrap())).collect()
}
