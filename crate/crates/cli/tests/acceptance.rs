//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use shir_bench::list_heap;
use shir_cli::{cmd_analyze, soundness_sweep, AnalyzeArgs, ExitStatus};
use shir_core::concrete::{
    abstract_lift, gamma_member, interpret, iso_lift, GammaOptions, Machine, PointFilter, Snapshot,
};
use shir_core::corpus;
use shir_core::domain::{abs_equal, upper_approx};
use shir_core::fixpoint::{analyze_program, AnalysisConfig};
use shir_core::heap::RootKind;
use shir_core::normal::{congruence_closure, normalize};
use shir_core::precision::{compare, runtime_precise_rates};
use shir_core::transfer::{apply, refine_isnull};
use shir_core::{AbstractHeap, Ctx, Label, Program, ProgramPoint, Shape, Stmt};

const SEEDS: u64 = 20;
const BUDGET: u64 = 100_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn programs() -> Vec<(&'static str, Program)> {
    corpus::ALL.iter().map(|s| (s.name, s.load().unwrap())).collect()
}

fn expr() -> Program {
    Program::load(corpus::EXPR).unwrap()
}

fn expr_heap(p: &Program) -> shir_core::concrete::ConcreteHeap {
    let at = ProgramPoint::new("main", "entry", 1);
    let run = interpret(p, 0, BUDGET, &PointFilter::Only([at].into()));
    run.snapshots.into_iter().next().expect("main returns").heap
}

/// The expected summary of the expression builder, assembled node by node.
fn expected_expr_summary(p: &Program) -> AbstractHeap {
    let ty = |names: &[&str]| -> BTreeSet<_> { names.iter().map(|n| p.type_id(n).unwrap()).collect() };
    let f = |n: &str| Label::Field(p.field_id(n).unwrap());
    let mut h = AbstractHeap::new();
    let ops = h.fresh_node(p, ty(&["Add", "Sub", "Mult"]), Shape::Tree);
    let arr = h.fresh_node(p, ty(&["Var[]"]), Shape::None);
    let var = h.fresh_node(p, ty(&["Var"]), Shape::None);
    let cst = h.fresh_node(p, ty(&["Const"]), Shape::None);
    let mut set = |n, l, inj, ts: &[u32]| {
        let a = h.nodes[&n].fields[&l];
        let e = h.entry_mut(a);
        e.injective = inj;
        e.targets = ts.iter().copied().collect();
    };
    set(ops, f("l"), false, &[ops, var]);
    set(ops, f("r"), true, &[ops, var, cst]);
    set(arr, Label::Array, true, &[var]);
    h.bind_var("exp", BTreeSet::from([ops]));
    h.bind_root(RootKind::Static, "env", BTreeSet::from([arr]));
    h
}

fn c1_expression_summary() -> Outcome {
    let p = expr();
    let dir = std::env::temp_dir().join(format!("shir-accept-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let file = dir.join("expr.shir");
    std::fs::write(&file, corpus::EXPR).map_err(|e| e.to_string())?;
    let args = AnalyzeArgs {
        file,
        points: Vec::new(),
        dot: None,
        dump: None,
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let t = Instant::now();
    let status = cmd_analyze(&args, &mut out, &mut err).map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    let _ = std::fs::remove_dir_all(&dir);
    if status != ExitStatus::Success {
        return Err(format!("exit {:?}: {}", status, String::from_utf8_lossy(&err)));
    }
    let want = format!("== main exit ==\n{}", expected_expr_summary(&p).canonical_text(&p));
    let got = String::from_utf8(out).unwrap();
    if got != want {
        return Err(format!("got\n{got}want\n{want}"));
    }
    if dt >= Duration::from_secs(1) {
        return Err(format!("took {dt:?}"));
    }
    Ok(format!("matches, {dt:?}"))
}

fn c2_runtime_precise_rates() -> Outcome {
    let p = expr();
    let h = abstract_lift(&Ctx::new(&p), &expr_heap(&p));
    let r = runtime_precise_rates(&h);
    if r == (100.0, 75.0) {
        Ok("shape 100%, injectivity 75%".into())
    } else {
        Err(format!("{r:?}"))
    }
}

fn c3_closure_partition() -> Outcome {
    let p = expr();
    let ctx = Ctx::new(&p);
    let mut c = congruence_closure(&ctx, &iso_lift(&ctx, &expr_heap(&p)));
    let got: BTreeSet<BTreeSet<u32>> = c.classes().into_iter().map(|ms| ms.into_iter().collect()).collect();
    let want: BTreeSet<BTreeSet<u32>> = [vec![0, 1, 2, 5], vec![3, 6], vec![4, 7], vec![8]]
        .into_iter()
        .map(|v| v.into_iter().collect())
        .collect();
    if got == want {
        Ok(format!("{got:?}"))
    } else {
        Err(format!("{got:?}"))
    }
}

fn c4_soundness_sweep() -> Outcome {
    let t = Instant::now();
    let ps = programs();
    if ps.len() < 12 {
        return Err(format!("only {} programs", ps.len()));
    }
    let mut checked = 0;
    for (name, p) in &ps {
        let ctx = Ctx::new(p);
        let r = analyze_program(&ctx, &AnalysisConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let s = soundness_sweep(p, &r, SEEDS);
        if let Some(v) = s.first {
            return Err(format!("{name}: {} failures, first {} seed {}: {}", s.failures, v.point, v.seed, v.reason));
        }
        if s.inconclusive > 0 || !s.runtime_errors.is_empty() {
            return Err(format!("{name}: {} inconclusive, {:?}", s.inconclusive, s.runtime_errors));
        }
        checked += s.checked;
    }
    let dt = t.elapsed();
    if dt >= Duration::from_secs(60) {
        return Err(format!("took {dt:?}"));
    }
    Ok(format!("{} programs x {SEEDS} seeds, {checked} snapshots, {dt:?}", ps.len()))
}

/// A few snapshots per point: the first seed's, plus one from each later
/// seed in `seeds`.
fn sample(p: &Program, seeds: u64) -> BTreeMap<ProgramPoint, Vec<Snapshot>> {
    let mut by_point: BTreeMap<ProgramPoint, Vec<Snapshot>> = BTreeMap::new();
    for seed in 0..seeds {
        for s in interpret(p, seed, BUDGET, &PointFilter::All).snapshots {
            let v = by_point.entry(s.point.clone()).or_default();
            if v.len() < 3 {
                v.push(s);
            }
        }
    }
    by_point
}

fn renumber(h: &AbstractHeap, off: u32) -> AbstractHeap {
    let mut g = h.clone();
    g.nodes = h.nodes.iter().map(|(&n, x)| (n + off, x.clone())).collect();
    for e in g.store.values_mut() {
        e.targets = e.targets.iter().map(|t| t + off).collect();
    }
    g
}

fn c5_normal_form_laws() -> Outcome {
    let mut heaps = 0;
    for (name, p) in programs() {
        let ctx = Ctx::new(&p);
        let alphas: Vec<AbstractHeap> = sample(&p, 3)
            .into_values()
            .flatten()
            .map(|s| abstract_lift(&ctx, &s.heap))
            .collect();
        let eq = |a: &AbstractHeap, b: &AbstractHeap| abs_equal(&ctx, a, b).map_err(|e| format!("{name}: {e}"));
        for a in &alphas {
            heaps += 1;
            if &normalize(&ctx, a) != a {
                return Err(format!("{name}: normalize is not idempotent"));
            }
            let r = renumber(a, 1000);
            if !eq(a, a)? || !eq(a, &r)? || !eq(&r, a)? {
                return Err(format!("{name}: equality is not reflexive under renumbering"));
            }
        }
        for a in alphas.iter().step_by(5) {
            for b in alphas.iter().step_by(5) {
                let ab = eq(a, b)?;
                if ab != eq(b, a)? {
                    return Err(format!("{name}: equality is not symmetric"));
                }
                for c in alphas.iter().step_by(5) {
                    if ab && eq(b, c)? && !eq(a, c)? {
                        return Err(format!("{name}: equality is not transitive"));
                    }
                }
            }
        }
    }
    Ok(format!("{heaps} abstractions"))
}

fn c6_join_over_approximates() -> Outcome {
    let mut pairs = 0;
    let opts = GammaOptions::default();
    for (name, p) in programs() {
        let ctx = Ctx::new(&p);
        let by_point = sample(&p, 6);
        let all: Vec<&Snapshot> = by_point.values().flatten().collect();
        // Pairs at the same point, and pairs across neighbouring points.
        let mut cands: Vec<(&Snapshot, &Snapshot)> = Vec::new();
        for v in by_point.values() {
            for w in v.windows(2) {
                cands.push((&w[0], &w[1]));
            }
        }
        for w in all.windows(2).step_by(3) {
            cands.push((w[0], w[1]));
        }
        for (x, y) in cands {
            let j = upper_approx(&ctx, &abstract_lift(&ctx, &x.heap), &abstract_lift(&ctx, &y.heap));
            for s in [x, y] {
                if let Err(e) = gamma_member(&s.heap, &j, &opts) {
                    return Err(format!("{name} at {}: {e}", s.point));
                }
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} joined pairs"))
}

fn c7_transfer_lockstep() -> Outcome {
    let opts = GammaOptions::default();
    let mut steps = 0;
    for (name, p) in programs() {
        let ctx = Ctx::new(&p);
        for seed in 0..SEEDS {
            let mut m = Machine::new(&p, seed, BUDGET);
            while let (Some(point), Some(stmt)) = (m.point(), m.current_stmt()) {
                let before = m.heap();
                let pre = abstract_lift(&ctx, &before);
                let same_frame = !matches!(stmt, Stmt::Call { .. } | Stmt::Return { .. });
                if !m.step().map_err(|e| format!("{name} seed {seed}: {e}"))? {
                    break;
                }
                if !same_frame {
                    continue;
                }
                let method = &p.methods[&point.method];
                let post = match stmt {
                    Stmt::IfNull { var, .. } => {
                        let null = before.env.get(var).copied().flatten().is_none();
                        match refine_isnull(&pre, var, null) {
                            Some(h) => h,
                            None => return Err(format!("{name} seed {seed} at {point}: taken branch refined away")),
                        }
                    }
                    _ => {
                        let mut h = pre.clone();
                        apply(&ctx, method, &mut h, stmt, None);
                        h
                    }
                };
                if let Err(e) = gamma_member(&m.heap(), &post, &opts) {
                    return Err(format!("{name} seed {seed} at {point}: {e}"));
                }
                steps += 1;
            }
        }
    }
    Ok(format!("{steps} statements"))
}

fn time_normalize(ctx: &Ctx, n: u32) -> Duration {
    let h = list_heap(ctx, n);
    let reps = if n <= 1000 { 5 } else { 3 };
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(normalize(ctx, &h));
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn c8_normalize_scaling() -> Outcome {
    let p = shir_bench::list_program();
    let ctx = Ctx::new(&p);
    let nlogn = |n: u32| n as f64 * (n as f64).log2();
    let base = time_normalize(&ctx, 100).as_secs_f64();
    let c = base / nlogn(100);
    let mut notes = vec![format!("N=100 {:.2}ms", base * 1e3)];
    for n in [1000, 10000] {
        let t = time_normalize(&ctx, n).as_secs_f64();
        let bound = 4.0 * c * nlogn(n);
        notes.push(format!("N={n} {:.2}ms (bound {:.2}ms)", t * 1e3, bound * 1e3));
        if t > bound {
            return Err(notes.join(", "));
        }
    }
    Ok(notes.join(", "))
}

fn c9_precision() -> Outcome {
    let mut sums = [0.0; 3];
    let ps = programs();
    let mut weak_loss = None;
    for (name, p) in &ps {
        let ctx = Ctx::new(p);
        let r = analyze_program(&ctx, &AnalysisConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let runs: Vec<_> = (0..SEEDS).map(|s| interpret(p, s, BUDGET, &PointFilter::All)).collect();
        let rep = compare(&ctx, name, &r, &runs);
        let s = &rep.summary;
        sums[0] += s.region_match_pct;
        sums[1] += s.shape_match_pct;
        sums[2] += s.injectivity_match_pct;
        if *name == corpus::WEAK_UPDATE {
            weak_loss = Some(s.injectivity_match_pct);
        }
    }
    let n = ps.len() as f64;
    let [region, shape, inj] = sums.map(|x| x / n);
    let line = format!("region {region:.1}%, shape {shape:.1}%, injectivity {inj:.1}%");
    match weak_loss {
        None => return Err(format!("{line}; no weak-update program")),
        Some(w) if w >= 100.0 => return Err(format!("{line}; weak-update program loses nothing")),
        Some(_) => {}
    }
    if region >= 80.0 && shape >= 80.0 && inj >= 80.0 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("expression summary", c1_expression_summary),
        ("runtime-precise rates", c2_runtime_precise_rates),
        ("closure partition", c3_closure_partition),
        ("soundness sweep", c4_soundness_sweep),
        ("normal form laws", c5_normal_form_laws),
        ("join over-approximation", c6_join_over_approximates),
        ("transfer lockstep", c7_transfer_lockstep),
        ("normalize scaling", c8_normalize_scaling),
        ("precision", c9_precision),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS {} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
