use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConcreteHeap, ConcreteObject, Oid, SlotLabel, Snapshot, Value};
use crate::ir::{FieldType, Operand, Program, ProgramPoint, Stmt, TypeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeFault {
    #[error("null dereference")]
    NullDeref,
    #[error("index {index} out of bounds for length {len}")]
    OutOfBounds { index: i64, len: u32 },
    #[error("step budget exhausted")]
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{point}: {fault}")]
pub struct RuntimeError {
    pub point: ProgramPoint,
    pub fault: RuntimeFault,
}

/// Which program points to snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointFilter {
    All,
    Only(BTreeSet<ProgramPoint>),
}

impl PointFilter {
    pub fn contains(&self, p: &ProgramPoint) -> bool {
        match self {
            PointFilter::All => true,
            PointFilter::Only(s) => s.contains(p),
        }
    }
}

#[derive(Clone, Debug)]
struct Frame {
    method: String,
    block: usize,
    index: usize,
    locals: BTreeMap<String, Value>,
    /// Caller variable receiving the return value.
    ret_to: Option<String>,
}

/// A running program. Execution is deterministic for a fixed seed.
#[derive(Clone, Debug)]
pub struct Machine<'p> {
    program: &'p Program,
    rng: ChaCha8Rng,
    frames: Vec<Frame>,
    statics: BTreeMap<String, Value>,
    objects: BTreeMap<Oid, ConcreteObject>,
    next_oid: Oid,
    steps: u64,
    budget: u64,
}

fn default_value(t: FieldType) -> Value {
    match t {
        FieldType::Int => Value::Int(0),
        FieldType::Ref(_) => Value::Null,
    }
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, seed: u64, budget: u64) -> Self {
        let statics = program
            .statics
            .iter()
            .map(|(n, t)| (n.clone(), default_value(*t)))
            .collect();
        let mut m = Machine {
            program,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frames: Vec::new(),
            statics,
            objects: BTreeMap::new(),
            next_oid: 0,
            steps: 0,
            budget,
        };
        let main = program.method(&program.main).expect("validated program has main");
        m.frames.push(m.new_frame(&main.name, Vec::new(), None));
        m
    }

    fn new_frame(&self, method: &str, args: Vec<Value>, ret_to: Option<String>) -> Frame {
        let m = &self.program.methods[method];
        let mut locals: BTreeMap<String, Value> = m
            .vars()
            .map(|(n, t)| (n.clone(), default_value(*t)))
            .collect();
        for ((p, _), v) in m.params.iter().zip(args) {
            locals.insert(p.clone(), v);
        }
        Frame {
            method: method.to_string(),
            block: 0,
            index: 0,
            locals,
            ret_to,
        }
    }

    pub fn is_halted(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Point of the statement about to execute.
    pub fn point(&self) -> Option<ProgramPoint> {
        let f = self.frames.last()?;
        let m = &self.program.methods[&f.method];
        Some(ProgramPoint::new(&f.method, &m.blocks[f.block].label, f.index))
    }

    pub fn current_stmt(&self) -> Option<&'p Stmt> {
        let f = self.frames.last()?;
        let m = &self.program.methods[&f.method];
        m.blocks[f.block].stmts.get(f.index)
    }

    /// Closed copy of the current heap: roots plus reachable objects.
    pub fn heap(&self) -> ConcreteHeap {
        let mut h = ConcreteHeap::default();
        let n = self.frames.len();
        for (i, f) in self.frames.iter().enumerate() {
            let m = &self.program.methods[&f.method];
            for name in m.ref_vars() {
                let v = f.locals[name].as_ref();
                if i + 1 == n {
                    h.env.insert(name.to_string(), v);
                } else {
                    h.frames
                        .entry(format!("^{}.{}", f.method, name))
                        .or_default()
                        .push(v);
                }
            }
        }
        for (name, t) in &self.program.statics {
            if t.is_ref() {
                h.statics.insert(name.clone(), self.statics[name].as_ref());
            }
        }
        for o in h.reachable_from(&self.objects) {
            h.objects.insert(o, self.objects[&o].clone());
        }
        h
    }

    fn local(&self, v: &str) -> Value {
        self.frames.last().expect("running")
            .locals[v]
    }

    fn set_local(&mut self, v: &str, val: Value) {
        self.frames
            .last_mut()
            .expect("running")
            .locals
            .insert(v.to_string(), val);
    }

    fn int(&self, o: &Operand) -> i64 {
        match o {
            Operand::Lit(k) => *k,
            Operand::Var(v) => match self.local(v) {
                Value::Int(k) => k,
                _ => 0,
            },
        }
    }

    fn deref(&self, v: &str) -> Result<Oid, RuntimeFault> {
        self.local(v).as_ref().ok_or(RuntimeFault::NullDeref)
    }

    fn index_slot(&self, arr: Oid, index: i64) -> Result<SlotLabel, RuntimeFault> {
        let len = self.objects[&arr].slots.len() as u32;
        if index < 0 || index >= len as i64 {
            return Err(RuntimeFault::OutOfBounds { index, len });
        }
        Ok(SlotLabel::Index(index as u32))
    }

    fn alloc(&mut self, ty: crate::ir::TypeId, len: Option<i64>) -> Result<Oid, RuntimeFault> {
        let oid = self.next_oid;
        let slots = match (&self.program.type_decl(ty).kind, len) {
            (TypeKind::Array { .. }, Some(n)) => {
                if n < 0 {
                    return Err(RuntimeFault::OutOfBounds { index: n, len: 0 });
                }
                (0..n as u32).map(|i| (SlotLabel::Index(i), Value::Null)).collect()
            }
            _ => self
                .program
                .all_fields(ty)
                .into_iter()
                .map(|(f, t)| (SlotLabel::Field(f), default_value(t)))
                .collect(),
        };
        self.next_oid += 1;
        self.objects.insert(oid, ConcreteObject { oid, ty, slots });
        Ok(oid)
    }

    fn jump(&mut self, label: &str) {
        let f = self.frames.last_mut().expect("running");
        let m = &self.program.methods[&f.method];
        f.block = m.block_index(label).expect("validated jump target");
        f.index = 0;
    }

    /// Executes one statement. Returns `Ok(false)` once `main` has returned.
    pub fn step(&mut self) -> Result<bool, RuntimeError> {
        let Some(point) = self.point() else {
            return Ok(false);
        };
        if self.steps >= self.budget {
            return Err(RuntimeError {
                point,
                fault: RuntimeFault::BudgetExhausted,
            });
        }
        self.steps += 1;
        let stmt = self.current_stmt().expect("validated block ends in a terminator");
        self.exec(stmt)
            .map_err(|fault| RuntimeError { point, fault })?;
        Ok(!self.is_halted())
    }

    fn advance(&mut self) {
        self.frames.last_mut().expect("running").index += 1;
    }

    fn exec(&mut self, stmt: &'p Stmt) -> Result<(), RuntimeFault> {
        match stmt {
            Stmt::New { dst, ty } => {
                let o = self.alloc(*ty, None)?;
                self.set_local(dst, Value::Ref(o));
            }
            Stmt::NewArray { dst, ty, len } => {
                let n = self.int(len);
                let o = self.alloc(*ty, Some(n))?;
                self.set_local(dst, Value::Ref(o));
            }
            Stmt::Copy { dst, src } => {
                let v = self.local(src);
                self.set_local(dst, v);
            }
            Stmt::StaticRead { dst, name } => {
                let v = self.statics[name];
                self.set_local(dst, v);
            }
            Stmt::StaticWrite { name, src } => {
                let v = self.local(src);
                self.statics.insert(name.clone(), v);
            }
            Stmt::Null { dst } => self.set_local(dst, Value::Null),
            Stmt::Load { dst, src, field } => {
                let o = self.deref(src)?;
                let v = self.objects[&o].slots[&SlotLabel::Field(*field)];
                self.set_local(dst, v);
            }
            Stmt::Store { dst, field, src } => {
                let o = self.deref(dst)?;
                let v = self.local(src);
                self.objects
                    .get_mut(&o)
                    .expect("live object")
                    .slots
                    .insert(SlotLabel::Field(*field), v);
            }
            Stmt::ArrayLoad { dst, array, index } => {
                let o = self.deref(array)?;
                let slot = self.index_slot(o, self.int(index))?;
                let v = self.objects[&o].slots[&slot];
                self.set_local(dst, v);
            }
            Stmt::ArrayStore { array, index, src } => {
                let o = self.deref(array)?;
                let slot = self.index_slot(o, self.int(index))?;
                let v = self.local(src);
                self.objects
                    .get_mut(&o)
                    .expect("live object")
                    .slots
                    .insert(slot, v);
            }
            Stmt::Const { dst, value } => self.set_local(dst, Value::Int(*value)),
            Stmt::Add { dst, lhs, rhs } => {
                let v = self.int(lhs).wrapping_add(self.int(rhs));
                self.set_local(dst, Value::Int(v));
            }
            Stmt::Call { dst, method, args } => {
                let vals: Vec<Value> = args.iter().map(|a| self.local(a)).collect();
                self.advance();
                let frame = self.new_frame(method, vals, dst.clone());
                self.frames.push(frame);
                return Ok(());
            }
            Stmt::Return { value } => {
                let v = value.as_ref().map(|v| self.local(v));
                let done = self.frames.pop().expect("running");
                if let (Some(d), Some(v)) = (done.ret_to, v) {
                    if !self.frames.is_empty() {
                        self.set_local(&d, v);
                    }
                }
                return Ok(());
            }
            Stmt::IfNondet { then_to, else_to } => {
                let t = if self.rng.gen_bool(0.5) { then_to } else { else_to };
                self.jump(t);
                return Ok(());
            }
            Stmt::IfNull {
                var,
                then_to,
                else_to,
            } => {
                let t = if self.local(var) == Value::Null {
                    then_to
                } else {
                    else_to
                };
                self.jump(t);
                return Ok(());
            }
            Stmt::IfLess {
                lhs,
                rhs,
                then_to,
                else_to,
            } => {
                let t = if self.int(lhs) < self.int(rhs) {
                    then_to
                } else {
                    else_to
                };
                self.jump(t);
                return Ok(());
            }
            Stmt::Goto { to } => {
                self.jump(to);
                return Ok(());
            }
        }
        self.advance();
        Ok(())
    }
}

impl ConcreteHeap {
    fn reachable_from(&self, objects: &BTreeMap<Oid, ConcreteObject>) -> BTreeSet<Oid> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<Oid> = self.roots().iter().map(|r| r.target).collect();
        while let Some(o) = stack.pop() {
            if !seen.insert(o) {
                continue;
            }
            for v in objects[&o].slots.values() {
                if let Value::Ref(t) = v {
                    if !seen.contains(t) {
                        stack.push(*t);
                    }
                }
            }
        }
        seen
    }
}

/// Result of one run: snapshots in execution order, plus the fault that
/// stopped execution early, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interpretation {
    pub snapshots: Vec<Snapshot>,
    pub error: Option<RuntimeError>,
    pub steps: u64,
}

pub fn interpret(program: &Program, seed: u64, step_budget: u64, points: &PointFilter) -> Interpretation {
    assert!(step_budget > 0, "step budget must be positive");
    let mut m = Machine::new(program, seed, step_budget);
    let mut snapshots = Vec::new();
    let mut error = None;
    while let Some(p) = m.point() {
        if points.contains(&p) {
            snapshots.push(Snapshot {
                point: p,
                heap: m.heap(),
            });
        }
        if let Err(e) = m.step() {
            error = Some(e);
            break;
        }
    }
    Interpretation {
        snapshots,
        error,
        steps: m.steps(),
    }
}
