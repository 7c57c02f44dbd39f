//! Dataflow driver. Blocks are iterated over a worklist with normalization
//! and upper approximation at block entries; calls are analyzed per calling
//! context, recursive call-graph cycles with one joined entry per method.
//!
//! Caller variables survive a call as hidden roots `^caller.var`, matching
//! the names the interpreter gives outer frames. The return value travels in
//! the root `$ret`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::mem;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::concrete::PointFilter;
use crate::domain::{equal_unchecked, upper_approx};
use crate::heap::{AbstractHeap, RootKind};
use crate::ir::{Method, Program, ProgramPoint, Stmt};
use crate::normal::normalize;
use crate::transfer::{self, Fault};
use crate::Ctx;

/// Root carrying a method's return value back to its caller.
pub const RET_ROOT: &str = "$ret";

/// Environment variable overriding [`AnalysisConfig::iter_cap`].
pub const ITER_CAP_VAR: &str = "SHIR_ITER_CAP";

/// Hidden root holding `var` of a suspended `method` frame.
pub fn hidden_root(method: &str, var: &str) -> String {
    format!("^{method}.{var}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Bound on worklist iterations of one method run, and on rounds of one
    /// recursive-cycle fixpoint. Only a diagnostic: the analysis terminates
    /// without it. The default is ten times the largest count the bundled
    /// corpus needs.
    pub iter_cap: usize,
    /// Bound on nested non-recursive calls.
    pub max_call_depth: usize,
    /// Points whose states are kept.
    pub points: PointFilter,
    pub fault: Option<Fault>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            iter_cap: 210,
            max_call_depth: 64,
            points: PointFilter::All,
            fault: None,
        }
    }
}

impl AnalysisConfig {
    /// Defaults, with the iteration cap taken from `SHIR_ITER_CAP` if set.
    pub fn from_env() -> Result<Self, AnalysisError> {
        let mut c = AnalysisConfig::default();
        if let Ok(v) = std::env::var(ITER_CAP_VAR) {
            c.iter_cap = match v.trim().parse() {
                Ok(n) if n > 0 => n,
                _ => return Err(AnalysisError::BadConfig(format!("{ITER_CAP_VAR}={v}"))),
            };
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("{method}: no fixpoint within {cap} iterations")]
    IterationCap { method: String, cap: usize },
    #[error("call depth exceeds {0}")]
    CallDepth(usize),
    #[error("call to undeclared method `{0}`")]
    UnknownMethod(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Results for one method, joined over every context it was analyzed in.
#[derive(Clone, Debug, Default)]
pub struct MethodResult {
    /// Block label to entry state.
    pub entries: BTreeMap<String, AbstractHeap>,
    /// States before each kept statement.
    pub points: BTreeMap<ProgramPoint, AbstractHeap>,
    /// State after return with locals dropped and the value in `$ret`;
    /// `None` if no return is reachable.
    pub exit: Option<AbstractHeap>,
}

#[derive(Clone, Debug, Default)]
pub struct ProgramResult {
    pub methods: BTreeMap<String, MethodResult>,
    /// Largest iteration count seen in any method run or cycle fixpoint.
    pub max_iterations: usize,
}

impl ProgramResult {
    pub fn state_at(&self, p: &ProgramPoint) -> Option<&AbstractHeap> {
        self.methods.get(&p.method)?.points.get(p)
    }

    /// Join of the states before each `return` of `method`, or `None` if no
    /// return was reached.
    pub fn state_before_exit(&self, ctx: &Ctx, method: &str) -> Option<AbstractHeap> {
        let m = ctx.program.method(method)?;
        let mut out: Option<AbstractHeap> = None;
        for p in m.exit_points() {
            if let Some(h) = self.state_at(&p) {
                out = Some(match out {
                    Some(o) => upper_approx(ctx, &o, h),
                    None => h.clone(),
                });
            }
        }
        out
    }
}

/// Call-graph strongly connected components that contain a cycle.
#[derive(Clone, Debug, Default)]
pub struct CallGraph {
    scc_of: HashMap<String, usize>,
    recursive: BTreeSet<usize>,
}

impl CallGraph {
    pub fn new(program: &Program) -> Self {
        let mut g = DiGraph::<&str, ()>::new();
        let idx: HashMap<&str, _> = program
            .methods
            .keys()
            .map(|m| (m.as_str(), g.add_node(m.as_str())))
            .collect();
        let mut self_loops = BTreeSet::new();
        for (name, m) in &program.methods {
            for s in m.blocks.iter().flat_map(|b| &b.stmts) {
                if let Stmt::Call { method, .. } = s {
                    if let Some(&t) = idx.get(method.as_str()) {
                        g.update_edge(idx[name.as_str()], t, ());
                        if method == name {
                            self_loops.insert(name.as_str());
                        }
                    }
                }
            }
        }
        let mut cg = CallGraph::default();
        for (i, comp) in tarjan_scc(&g).into_iter().enumerate() {
            if comp.len() > 1 || self_loops.contains(g[comp[0]]) {
                cg.recursive.insert(i);
            }
            for n in comp {
                cg.scc_of.insert(g[n].to_string(), i);
            }
        }
        cg
    }

    /// The cycle `method` belongs to, if any.
    pub fn recursive_scc(&self, method: &str) -> Option<usize> {
        self.scc_of.get(method).copied().filter(|s| self.recursive.contains(s))
    }
}

fn join_opt(ctx: &Ctx, a: Option<&AbstractHeap>, b: Option<AbstractHeap>) -> Option<AbstractHeap> {
    match (a, b) {
        (None, b) => b,
        (Some(a), None) => Some(a.clone()),
        (Some(a), Some(b)) => Some(upper_approx(ctx, a, &b)),
    }
}

fn same_opt(a: Option<&AbstractHeap>, b: Option<&AbstractHeap>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => equal_unchecked(a, b),
        _ => false,
    }
}

enum Flow {
    Jump(usize, AbstractHeap),
    Exit(AbstractHeap),
}

struct CycleState {
    scc: usize,
    entries: BTreeMap<String, AbstractHeap>,
    exits: BTreeMap<String, Option<AbstractHeap>>,
    dirty: bool,
}

struct Analyzer<'c, 'p> {
    ctx: &'c Ctx<'p>,
    config: &'c AnalysisConfig,
    calls: CallGraph,
    /// Non-recursive methods: analyzed entry and resulting exit.
    memo: HashMap<String, Vec<(AbstractHeap, Option<AbstractHeap>)>>,
    /// Recursive cycles keyed by the method entered from outside.
    cycle_memo: HashMap<String, Vec<(AbstractHeap, CycleState)>>,
    /// Contexts already analyzed in recording mode.
    replayed: HashMap<String, Vec<AbstractHeap>>,
    active: Vec<CycleState>,
    record: bool,
    depth: usize,
    out: ProgramResult,
}

impl<'c, 'p> Analyzer<'c, 'p> {
    fn new(ctx: &'c Ctx<'p>, config: &'c AnalysisConfig) -> Self {
        Analyzer {
            ctx,
            config,
            calls: CallGraph::new(ctx.program),
            memo: HashMap::new(),
            cycle_memo: HashMap::new(),
            replayed: HashMap::new(),
            active: Vec::new(),
            record: true,
            depth: 0,
            out: ProgramResult::default(),
        }
    }

    fn method(&self, name: &str) -> Result<&'p Method, AnalysisError> {
        let program: &'p Program = self.ctx.program;
        program
            .method(name)
            .ok_or_else(|| AnalysisError::UnknownMethod(name.to_string()))
    }

    fn count(&mut self, method: &str, n: usize) -> Result<(), AnalysisError> {
        self.out.max_iterations = self.out.max_iterations.max(n);
        if n > self.config.iter_cap {
            return Err(AnalysisError::IterationCap {
                method: method.to_string(),
                cap: self.config.iter_cap,
            });
        }
        Ok(())
    }

    fn keep(&mut self, p: ProgramPoint, h: &AbstractHeap) {
        if !self.config.points.contains(&p) {
            return;
        }
        let h = normalize(self.ctx, h);
        let r = self.out.methods.entry(p.method.clone()).or_default();
        let joined = match r.points.get(&p) {
            Some(old) => upper_approx(self.ctx, old, &h),
            None => h,
        };
        r.points.insert(p, joined);
    }

    /// Marks `entry` as replayed for `key`; false if it already was.
    fn first_replay(&mut self, key: &str, entry: &AbstractHeap) -> bool {
        let seen = self.replayed.entry(key.to_string()).or_default();
        if seen.iter().any(|h| equal_unchecked(h, entry)) {
            return false;
        }
        seen.push(entry.clone());
        true
    }

    /// Analyzes `name` from `entry` to a fixpoint, then sweeps the converged
    /// block states once to compute the exit (and, when recording, to keep
    /// point states and analyze callees in recording mode).
    fn run_method(&mut self, name: &str, entry: AbstractHeap) -> Result<Option<AbstractHeap>, AnalysisError> {
        let m = self.method(name)?;
        let rec = mem::replace(&mut self.record, false);
        let mut ins: BTreeMap<usize, AbstractHeap> = BTreeMap::from([(0, normalize(self.ctx, &entry))]);
        let mut work: BTreeSet<usize> = BTreeSet::from([0]);
        let mut iters = 0;
        while let Some(b) = work.pop_first() {
            iters += 1;
            self.count(name, iters)?;
            for flow in self.exec_block(m, b, ins[&b].clone())? {
                let Flow::Jump(t, h) = flow else { continue };
                let h = normalize(self.ctx, &h);
                let next = match ins.get(&t) {
                    Some(old) => {
                        let j = upper_approx(self.ctx, old, &h);
                        if equal_unchecked(old, &j) {
                            continue;
                        }
                        j
                    }
                    None => h,
                };
                ins.insert(t, next);
                work.insert(t);
            }
        }
        self.record = rec;
        let mut exit: Option<AbstractHeap> = None;
        for (&b, h) in &ins {
            if rec {
                let r = self.out.methods.entry(name.to_string()).or_default();
                let label = &m.blocks[b].label;
                let joined = join_opt(self.ctx, r.entries.get(label), Some(h.clone()));
                r.entries.insert(label.clone(), joined.expect("nonempty join"));
            }
            for flow in self.exec_block(m, b, h.clone())? {
                if let Flow::Exit(x) = flow {
                    exit = join_opt(self.ctx, exit.as_ref(), Some(x));
                }
            }
        }
        if rec {
            let r = self.out.methods.entry(name.to_string()).or_default();
            r.exit = join_opt(self.ctx, r.exit.as_ref(), exit.clone());
        }
        Ok(exit)
    }

    fn exec_block(&mut self, m: &'p Method, b: usize, mut h: AbstractHeap) -> Result<Vec<Flow>, AnalysisError> {
        let block = &m.blocks[b];
        let target = |l: &str| m.block_index(l).expect("validated jump target");
        for (i, s) in block.stmts.iter().enumerate() {
            if self.record {
                self.keep(ProgramPoint::new(&m.name, &block.label, i), &h);
            }
            match s {
                Stmt::Call { dst, method, args } => match self.call(m, &h, dst.as_deref(), method, args)? {
                    Some(x) => h = x,
                    None => return Ok(Vec::new()),
                },
                Stmt::Goto { to } => return Ok(vec![Flow::Jump(target(to), h)]),
                Stmt::IfNondet { then_to, else_to } | Stmt::IfLess { then_to, else_to, .. } => {
                    return Ok(vec![
                        Flow::Jump(target(then_to), h.clone()),
                        Flow::Jump(target(else_to), h),
                    ]);
                }
                Stmt::IfNull { var, then_to, else_to } => {
                    let mut out = Vec::new();
                    if let Some(t) = transfer::refine_isnull(&h, var, true) {
                        out.push(Flow::Jump(target(then_to), t));
                    }
                    if let Some(e) = transfer::refine_isnull(&h, var, false) {
                        out.push(Flow::Jump(target(else_to), e));
                    }
                    return Ok(out);
                }
                Stmt::Return { value } => {
                    let ret = match value {
                        Some(v) if m.var_type(v).is_some_and(|t| t.is_ref()) => Some(h.var_targets(v)),
                        _ => None,
                    };
                    for v in m.ref_vars() {
                        h.remove_root(RootKind::Var, v);
                    }
                    if let Some(ts) = ret {
                        h.bind_var(RET_ROOT, ts);
                    }
                    return Ok(vec![Flow::Exit(normalize(self.ctx, &h))]);
                }
                _ => transfer::apply(self.ctx, m, &mut h, s, self.config.fault),
            }
        }
        Ok(Vec::new())
    }

    /// Analyzes a call site; `None` when the callee never returns.
    fn call(
        &mut self,
        caller: &'p Method,
        h: &AbstractHeap,
        dst: Option<&str>,
        callee: &str,
        args: &[String],
    ) -> Result<Option<AbstractHeap>, AnalysisError> {
        let f = self.method(callee)?;
        let h = normalize(self.ctx, h);
        let mut e = h.clone();
        let mut had_hidden = BTreeSet::new();
        for v in caller.ref_vars() {
            let hid = hidden_root(&caller.name, v);
            let mut ts = h.var_targets(v);
            if e.env.contains_key(&hid) {
                had_hidden.insert(v);
                ts.extend(e.var_targets(&hid));
            }
            e.bind_var(&hid, ts);
        }
        let actuals: Vec<_> = args.iter().map(|a| h.var_targets(a)).collect();
        for v in caller.ref_vars() {
            e.remove_root(RootKind::Var, v);
        }
        e.remove_root(RootKind::Var, RET_ROOT);
        for v in f.ref_vars() {
            e.bind_var(v, BTreeSet::new());
        }
        for ((p, t), ts) in f.params.iter().zip(actuals) {
            if t.is_ref() {
                e.bind_var(p, ts);
            }
        }
        let e = normalize(self.ctx, &e);
        let Some(mut x) = self.call_result(callee, e)? else {
            return Ok(None);
        };
        for v in caller.ref_vars() {
            let hid = hidden_root(&caller.name, v);
            let ts = x.var_targets(&hid);
            x.bind_var(v, ts);
            if !had_hidden.contains(v) {
                x.remove_root(RootKind::Var, &hid);
            }
        }
        let ret = x.var_targets(RET_ROOT);
        x.remove_root(RootKind::Var, RET_ROOT);
        if let Some(d) = dst {
            if caller.var_type(d).is_some_and(|t| t.is_ref()) {
                x.bind_var(d, ret);
            }
        }
        Ok(Some(normalize(self.ctx, &x)))
    }

    fn call_result(&mut self, f: &str, entry: AbstractHeap) -> Result<Option<AbstractHeap>, AnalysisError> {
        match self.calls.recursive_scc(f) {
            Some(scc) => self.cycle_call(scc, f, entry),
            None => self.plain_call(f, entry),
        }
    }

    fn plain_call(&mut self, f: &str, entry: AbstractHeap) -> Result<Option<AbstractHeap>, AnalysisError> {
        let hit = self
            .memo
            .get(f)
            .and_then(|v| v.iter().find(|(e, _)| equal_unchecked(e, &entry)))
            .map(|(_, x)| x.clone());
        if let Some(x) = hit {
            if self.record && self.first_replay(f, &entry) {
                self.nested(|a| a.run_method(f, entry))?;
            }
            return Ok(x);
        }
        if self.record {
            self.first_replay(f, &entry);
        }
        let x = self.nested(|a| a.run_method(f, entry.clone()))?;
        self.memo.entry(f.to_string()).or_default().push((entry, x.clone()));
        Ok(x)
    }

    fn nested<T>(&mut self, go: impl FnOnce(&mut Self) -> Result<T, AnalysisError>) -> Result<T, AnalysisError> {
        if self.depth >= self.config.max_call_depth {
            return Err(AnalysisError::CallDepth(self.config.max_call_depth));
        }
        self.depth += 1;
        let r = go(self);
        self.depth -= 1;
        r
    }

    fn cycle_call(&mut self, scc: usize, f: &str, entry: AbstractHeap) -> Result<Option<AbstractHeap>, AnalysisError> {
        if let Some(st) = self.active.iter_mut().rev().find(|s| s.scc == scc) {
            let joined = match st.entries.get(f) {
                Some(old) => {
                    let j = upper_approx(self.ctx, old, &entry);
                    (!equal_unchecked(old, &j)).then_some(j)
                }
                None => Some(entry),
            };
            if let Some(j) = joined {
                st.entries.insert(f.to_string(), j);
                st.dirty = true;
            }
            return Ok(st.exits.get(f).cloned().flatten());
        }
        let pos = self
            .cycle_memo
            .get(f)
            .and_then(|v| v.iter().position(|(e, _)| equal_unchecked(e, &entry)));
        let pos = match pos {
            Some(p) => p,
            None => {
                let st = self.nested(|a| a.solve_cycle(scc, f, entry.clone()))?;
                let v = self.cycle_memo.entry(f.to_string()).or_default();
                v.push((entry.clone(), st));
                v.len() - 1
            }
        };
        let st = &self.cycle_memo[f][pos].1;
        let exit = st.exits.get(f).cloned().flatten();
        if self.record && self.first_replay(&format!("cycle {f}"), &entry) {
            let st = &self.cycle_memo[f][pos].1;
            let replay = CycleState {
                scc,
                entries: st.entries.clone(),
                exits: st.exits.clone(),
                dirty: false,
            };
            let names: Vec<String> = replay.entries.keys().cloned().collect();
            self.active.push(replay);
            let r = self.nested(|a| {
                for g in &names {
                    let e = a.active.last().expect("pushed").entries[g].clone();
                    a.run_method(g, e)?;
                }
                Ok(())
            });
            self.active.pop();
            r?;
        }
        Ok(exit)
    }

    fn solve_cycle(&mut self, scc: usize, f: &str, entry: AbstractHeap) -> Result<CycleState, AnalysisError> {
        let rec = mem::replace(&mut self.record, false);
        self.active.push(CycleState {
            scc,
            entries: BTreeMap::from([(f.to_string(), entry)]),
            exits: BTreeMap::new(),
            dirty: true,
        });
        let mut rounds = 0;
        let r = loop {
            let st = self.active.last_mut().expect("pushed");
            if !st.dirty {
                break Ok(());
            }
            st.dirty = false;
            let names: Vec<String> = st.entries.keys().cloned().collect();
            rounds += 1;
            if let Err(e) = self.count(f, rounds) {
                break Err(e);
            }
            let mut failed = None;
            for g in names {
                let e = self.active.last().expect("pushed").entries[&g].clone();
                let x = match self.run_method(&g, e) {
                    Ok(x) => x,
                    Err(err) => {
                        failed = Some(err);
                        break;
                    }
                };
                let st = self.active.last_mut().expect("pushed");
                let old = st.exits.get(&g).cloned().flatten();
                let joined = join_opt(self.ctx, old.as_ref(), x);
                if !same_opt(old.as_ref(), joined.as_ref()) {
                    st.exits.insert(g, joined);
                    st.dirty = true;
                }
            }
            if let Some(err) = failed {
                break Err(err);
            }
        };
        let st = self.active.pop().expect("pushed");
        self.record = rec;
        r.map(|()| st)
    }
}

/// State on entry to `main`: every reference variable and static empty.
pub fn initial_state(ctx: &Ctx) -> AbstractHeap {
    let p = ctx.program;
    let mut h = AbstractHeap::new();
    if let Some(m) = p.method(&p.main) {
        for v in m.ref_vars() {
            h.bind_var(v, BTreeSet::new());
        }
    }
    for (s, t) in &p.statics {
        if t.is_ref() {
            h.bind_root(RootKind::Static, s, BTreeSet::new());
        }
    }
    h
}

/// Analyzes one method from `entry`, which should bind the method's
/// reference variables and the statics.
pub fn analyze_method(
    ctx: &Ctx,
    method: &str,
    entry: &AbstractHeap,
    config: &AnalysisConfig,
) -> Result<MethodResult, AnalysisError> {
    let mut a = Analyzer::new(ctx, config);
    a.run_method(method, entry.clone())?;
    Ok(a.out.methods.remove(method).unwrap_or_default())
}

/// Analyzes the whole program from `main`.
pub fn analyze_program(ctx: &Ctx, config: &AnalysisConfig) -> Result<ProgramResult, AnalysisError> {
    let mut a = Analyzer::new(ctx, config);
    let main = ctx.program.main.clone();
    a.run_method(&main, initial_state(ctx))?;
    Ok(a.out)
}
