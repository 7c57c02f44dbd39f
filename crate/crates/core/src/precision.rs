//! Scores a static result against a baseline built from runtime snapshots.
//!
//! The baseline at a point joins the abstractions of every snapshot taken
//! there. Static nodes are paired with baseline nodes breadth-first from the
//! roots, and shape and injectivity are compared across the pairs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::concrete::{abstract_lift, ConcreteHeap, Interpretation};
use crate::domain::upper_approx;
use crate::fixpoint::ProgramResult;
use crate::heap::{AbstractHeap, Addr, Nid};
use crate::ir::ProgramPoint;
use crate::Ctx;

fn pct(hit: usize, total: usize) -> f64 {
    if total == 0 {
        100.0
    } else {
        100.0 * hit as f64 / total as f64
    }
}

/// Join of the abstractions of `snapshots`, in order; `None` when empty.
pub fn runtime_baseline<'a>(ctx: &Ctx, snapshots: impl IntoIterator<Item = &'a ConcreteHeap>) -> Option<AbstractHeap> {
    let mut acc: Option<AbstractHeap> = None;
    for h in snapshots {
        let a = abstract_lift(ctx, h);
        acc = Some(match acc {
            Some(b) => upper_approx(ctx, &b, &a),
            None => a,
        });
    }
    acc
}

/// Partial pairing of runtime nodes with static nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegionMatch {
    /// Runtime node to static node; injective.
    pub pairs: BTreeMap<Nid, Nid>,
    /// Share of runtime nodes paired with a static node of the same type set.
    pub region_pct: f64,
}

struct Pairing<'a> {
    st: &'a AbstractHeap,
    rt: &'a AbstractHeap,
    pairs: BTreeMap<Nid, Nid>,
    taken: BTreeSet<Nid>,
    queue: VecDeque<(Addr, Addr)>,
}

impl Pairing<'_> {
    fn pair(&mut self, r: Nid, s: Nid) {
        self.pairs.insert(r, s);
        self.taken.insert(s);
        let sf = &self.st.nodes[&s].fields;
        for (l, &ra) in &self.rt.nodes[&r].fields {
            if let Some(&sa) = sf.get(l) {
                self.queue.push_back((ra, sa));
            }
        }
    }

    fn candidates(&self, x: Nid, sa: Addr) -> Vec<Nid> {
        let tx = &self.rt.nodes[&x].types;
        self.st.store[&sa]
            .targets
            .iter()
            .copied()
            .filter(|y| !self.taken.contains(y) && !self.st.nodes[y].types.is_disjoint(tx))
            .collect()
    }

    /// Pairs forced choices; returns address pairs left with a choice.
    fn drain(&mut self) -> Vec<(Addr, Addr)> {
        let mut open = Vec::new();
        while let Some((ra, sa)) = self.queue.pop_front() {
            let mut ambiguous = false;
            for &x in &self.rt.store[&ra].targets {
                if self.pairs.contains_key(&x) {
                    continue;
                }
                match self.candidates(x, sa).as_slice() {
                    [] => {}
                    [y] => self.pair(x, *y),
                    _ => ambiguous = true,
                }
            }
            if ambiguous {
                open.push((ra, sa));
            }
        }
        open
    }

    /// Settles one open choice: equal type sets first, then the largest
    /// type overlap, then the lowest id.
    fn settle(&mut self, open: &[(Addr, Addr)]) -> bool {
        for &(ra, sa) in open {
            for &x in &self.rt.store[&ra].targets {
                if self.pairs.contains_key(&x) {
                    continue;
                }
                let tx = &self.rt.nodes[&x].types;
                let best = self.candidates(x, sa).into_iter().min_by_key(|y| {
                    let ty = &self.st.nodes[y].types;
                    (ty != tx, usize::MAX - ty.intersection(tx).count(), *y)
                });
                if let Some(y) = best {
                    self.pair(x, y);
                    self.queue.extend(open.iter().copied());
                    return true;
                }
            }
        }
        false
    }
}

/// Breadth-first pairing from the roots both heaps share. Unlike
/// isomorphism matching, nodes left without a partner are tolerated.
pub fn match_regions(static_h: &AbstractHeap, runtime_h: &AbstractHeap) -> RegionMatch {
    let mut p = Pairing {
        st: static_h,
        rt: runtime_h,
        pairs: BTreeMap::new(),
        taken: BTreeSet::new(),
        queue: VecDeque::new(),
    };
    for (k, name, ra) in runtime_h.roots() {
        let table = match k {
            crate::heap::RootKind::Var => &static_h.env,
            crate::heap::RootKind::Static => &static_h.statics,
        };
        if let Some(&sa) = table.get(name) {
            p.queue.push_back((ra, sa));
        }
    }
    loop {
        let open = p.drain();
        if open.is_empty() || !p.settle(&open) {
            break;
        }
    }
    let exact = p
        .pairs
        .iter()
        .filter(|(r, s)| runtime_h.nodes[r].types == static_h.nodes[s].types)
        .count();
    RegionMatch {
        region_pct: pct(exact, runtime_h.nodes.len()),
        pairs: p.pairs,
    }
}

/// Counts over the paired nodes: equal shape tags, and equal injectivity
/// per runtime pointer edge (self edges excluded).
pub fn property_match_counts(m: &RegionMatch, static_h: &AbstractHeap, runtime_h: &AbstractHeap) -> [(usize, usize); 2] {
    let (mut shape, mut inj) = ((0, 0), (0, 0));
    for (&r, &s) in &m.pairs {
        let (rn, sn) = (&runtime_h.nodes[&r], &static_h.nodes[&s]);
        shape.1 += 1;
        shape.0 += usize::from(rn.shape == sn.shape);
        for (l, ra) in &rn.fields {
            let re = &runtime_h.store[ra];
            let se = sn.fields.get(l).map(|a| &static_h.store[a]);
            for &t in &re.targets {
                if t == r {
                    continue;
                }
                inj.1 += 1;
                inj.0 += usize::from(se.is_some_and(|e| e.injective == re.injective));
            }
        }
    }
    [shape, inj]
}

/// `(shape_pct, injectivity_pct)` over the pairing.
pub fn property_match_rates(m: &RegionMatch, static_h: &AbstractHeap, runtime_h: &AbstractHeap) -> (f64, f64) {
    let [s, i] = property_match_counts(m, static_h, runtime_h);
    (pct(s.0, s.1), pct(i.0, i.1))
}

/// `(shape_pct, injectivity_pct)` of properties the heap itself pins down:
/// nodes whose shape is none or tree, and heap pointer edges (self edges
/// and root cells excluded) whose cell is injective.
pub fn runtime_precise_rates(h: &AbstractHeap) -> (f64, f64) {
    let precise = h.nodes.values().filter(|n| n.shape.is_precise()).count();
    let (mut inj, mut total) = (0, 0);
    for (n, _, a, t) in h.edges() {
        if n != t {
            total += 1;
            inj += usize::from(h.store[&a].injective);
        }
    }
    (pct(precise, h.nodes.len()), pct(inj, total))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointReport {
    pub point: String,
    pub snapshots: usize,
    pub runtime_nodes: usize,
    pub static_nodes: usize,
    pub region_match_pct: f64,
    pub shape_match_pct: f64,
    pub injectivity_match_pct: f64,
    pub runtime_precise_shape_pct: f64,
    pub runtime_precise_injectivity_pct: f64,
}

/// Unweighted means over points.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub points: usize,
    pub region_match_pct: f64,
    pub shape_match_pct: f64,
    pub injectivity_match_pct: f64,
    pub runtime_precise_shape_pct: f64,
    pub runtime_precise_injectivity_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrecisionReport {
    pub program: String,
    pub seeds: usize,
    pub points: Vec<PointReport>,
    pub summary: Summary,
    /// Points reached at run time that the analysis has no state for.
    pub missing: Vec<String>,
}

impl Summary {
    pub fn of(points: &[PointReport]) -> Summary {
        let n = points.len();
        if n == 0 {
            return Summary::default();
        }
        let mean = |f: fn(&PointReport) -> f64| points.iter().map(f).sum::<f64>() / n as f64;
        Summary {
            points: n,
            region_match_pct: mean(|p| p.region_match_pct),
            shape_match_pct: mean(|p| p.shape_match_pct),
            injectivity_match_pct: mean(|p| p.injectivity_match_pct),
            runtime_precise_shape_pct: mean(|p| p.runtime_precise_shape_pct),
            runtime_precise_injectivity_pct: mean(|p| p.runtime_precise_injectivity_pct),
        }
    }
}

/// Scores one static state against one baseline.
pub fn score_point(point: &str, snapshots: usize, static_h: &AbstractHeap, baseline: &AbstractHeap) -> PointReport {
    let m = match_regions(static_h, baseline);
    let (shape, inj) = property_match_rates(&m, static_h, baseline);
    let (rs, ri) = runtime_precise_rates(baseline);
    PointReport {
        point: point.to_string(),
        snapshots,
        runtime_nodes: baseline.nodes.len(),
        static_nodes: static_h.nodes.len(),
        region_match_pct: m.region_pct,
        shape_match_pct: shape,
        injectivity_match_pct: inj,
        runtime_precise_shape_pct: rs,
        runtime_precise_injectivity_pct: ri,
    }
}

/// Builds a baseline per point from `runs` and scores `result` against it.
pub fn compare(ctx: &Ctx, program: &str, result: &ProgramResult, runs: &[Interpretation]) -> PrecisionReport {
    let mut by_point: BTreeMap<&ProgramPoint, Vec<&ConcreteHeap>> = BTreeMap::new();
    for run in runs {
        for s in &run.snapshots {
            by_point.entry(&s.point).or_default().push(&s.heap);
        }
    }
    let mut points = Vec::new();
    let mut missing = Vec::new();
    for (p, snaps) in by_point {
        let Some(st) = result.state_at(p) else {
            missing.push(p.to_string());
            continue;
        };
        let n = snaps.len();
        let base = runtime_baseline(ctx, snaps).expect("at least one snapshot");
        points.push(score_point(&p.to_string(), n, st, &base));
    }
    PrecisionReport {
        program: program.to_string(),
        seeds: runs.len(),
        summary: Summary::of(&points),
        points,
        missing,
    }
}

/// Column order of [`PrecisionReport::to_tsv`].
pub const TSV_HEADER: &str = "point\tsnapshots\truntime_nodes\tstatic_nodes\tregion\tshape\tinjectivity\trt_shape\trt_injectivity";

impl PrecisionReport {
    /// Header, one line per point, then a `mean` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\n",
                p.point,
                p.snapshots,
                p.runtime_nodes,
                p.static_nodes,
                p.region_match_pct,
                p.shape_match_pct,
                p.injectivity_match_pct,
                p.runtime_precise_shape_pct,
                p.runtime_precise_injectivity_pct
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "mean\t-\t-\t-\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\n",
            s.region_match_pct,
            s.shape_match_pct,
            s.injectivity_match_pct,
            s.runtime_precise_shape_pct,
            s.runtime_precise_injectivity_pct
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::{Shape, RootKind};
    use crate::ir::Program;

    fn two_cells() -> (Program, AbstractHeap) {
        let p = Program::load("class A { f: B; }\nclass B;\nmethod main() {\nentry:\n  return\n}\n").unwrap();
        let a = BTreeSet::from([p.type_id("A").unwrap()]);
        let b = BTreeSet::from([p.type_id("B").unwrap()]);
        let mut h = AbstractHeap::new();
        let na = h.fresh_node(&p, a, Shape::None);
        let nb = h.fresh_node(&p, b, Shape::None);
        let f = h.nodes[&na].fields.values().next().copied().unwrap();
        h.entry_mut(f).targets.insert(nb);
        h.bind_var("x", BTreeSet::from([na]));
        (p, h)
    }

    #[test]
    fn identical_heaps_match_fully() {
        let (_, h) = two_cells();
        let m = match_regions(&h, &h);
        assert_eq!(m.region_pct, 100.0);
        assert_eq!(property_match_rates(&m, &h, &h), (100.0, 100.0));
    }

    #[test]
    fn disjoint_roots_match_nothing() {
        let (_, h) = two_cells();
        let mut other = h.clone();
        let ts = other.var_targets("x");
        other.remove_root(RootKind::Var, "x");
        other.bind_var("y", ts);
        assert_eq!(match_regions(&other, &h).region_pct, 0.0);
    }

    #[test]
    fn lost_injectivity_is_counted_per_edge() {
        let (_, h) = two_cells();
        let mut st = h.clone();
        let a = st.store.keys().copied().find(|a| !st.env.values().any(|r| r == a)).unwrap();
        st.entry_mut(a).injective = false;
        let m = match_regions(&st, &h);
        assert_eq!(property_match_rates(&m, &st, &h), (100.0, 0.0));
        assert_eq!(runtime_precise_rates(&st), (100.0, 0.0));
        assert_eq!(runtime_precise_rates(&h), (100.0, 100.0));
    }

    #[test]
    fn empty_heap_rates_are_full() {
        let h = AbstractHeap::new();
        assert_eq!(runtime_precise_rates(&h), (100.0, 100.0));
        assert_eq!(match_regions(&h, &h).region_pct, 100.0);
    }
}
