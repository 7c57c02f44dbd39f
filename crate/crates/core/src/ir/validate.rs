use std::collections::BTreeSet;
use std::fmt;

use super::{FieldType, Method, Operand, Program, Stmt, TypeKind};

/// One well-formedness violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// `method:block:index` when the problem is tied to a statement.
    pub location: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(l) => write!(f, "{l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub(super) fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut global = |msg: String| {
        out.push(Diagnostic {
            location: None,
            message: msg,
        })
    };

    match p.methods.get(&p.main) {
        None => global(format!("entry method `{}` is not declared", p.main)),
        Some(m) if !m.params.is_empty() => {
            global(format!("entry method `{}` must not take parameters", p.main))
        }
        _ => {}
    }
    for t in p.type_ids() {
        let mut seen = BTreeSet::new();
        let mut cur = Some(t);
        while let Some(c) = cur {
            if !seen.insert(c) {
                global(format!(
                    "inheritance cycle through `{}`",
                    p.type_name(t)
                ));
                break;
            }
            cur = p.super_type(c);
        }
    }
    for t in p.type_ids() {
        if let TypeKind::Class { .. } = p.type_decl(t).kind {
            let mut names = BTreeSet::new();
            for (f, _) in p.all_fields(t) {
                if !names.insert(f) {
                    global(format!(
                        "class `{}` redeclares inherited field `{}`",
                        p.type_name(t),
                        p.field_name(f)
                    ));
                }
            }
        }
    }
    for m in p.methods.values() {
        MethodChecker { p, m, out: &mut out }.check();
    }
    out
}

struct MethodChecker<'a> {
    p: &'a Program,
    m: &'a Method,
    out: &'a mut Vec<Diagnostic>,
}

impl MethodChecker<'_> {
    fn check(&mut self) {
        for (bi, b) in self.m.blocks.iter().enumerate() {
            let _ = bi;
            if b.stmts.is_empty() {
                self.diag(&b.label, 0, "empty block".to_string());
                continue;
            }
            for (i, s) in b.stmts.iter().enumerate() {
                let last = i + 1 == b.stmts.len();
                if s.is_terminator() && !last {
                    self.diag(&b.label, i, "terminator before end of block".to_string());
                }
                if last && !s.is_terminator() {
                    self.diag(
                        &b.label,
                        i,
                        "block must end with goto, branch, or return".to_string(),
                    );
                }
                for target in s.successors() {
                    if self.m.block(target).is_none() {
                        self.diag(&b.label, i, format!("jump to undeclared block `{target}`"));
                    }
                }
                self.stmt(&b.label, i, s);
            }
        }
    }

    fn diag(&mut self, block: &str, index: usize, message: String) {
        self.out.push(Diagnostic {
            location: Some(format!("{}:{}:{}", self.m.name, block, index)),
            message,
        });
    }

    fn var(&mut self, block: &str, i: usize, v: &str) -> Option<FieldType> {
        let t = self.m.var_type(v);
        if t.is_none() {
            self.diag(block, i, format!("undeclared variable `{v}`"));
        }
        t
    }

    fn int_operand(&mut self, block: &str, i: usize, o: &Operand) {
        if let Operand::Var(v) = o {
            if let Some(t) = self.var(block, i, v) {
                if t != FieldType::Int {
                    self.diag(block, i, format!("`{v}` is not an int"));
                }
            }
        }
    }

    fn assignable(&self, src: FieldType, dst: FieldType) -> bool {
        match (src, dst) {
            (FieldType::Int, FieldType::Int) => true,
            (FieldType::Ref(a), FieldType::Ref(b)) => self.p.is_subtype(a, b),
            _ => false,
        }
    }

    fn check_assign(&mut self, block: &str, i: usize, src: FieldType, dst: FieldType) {
        if !self.assignable(src, dst) {
            let msg = format!(
                "type mismatch: cannot assign {} to {}",
                self.tname(src),
                self.tname(dst)
            );
            self.diag(block, i, msg);
        }
    }

    fn tname(&self, t: FieldType) -> String {
        match t {
            FieldType::Int => "int".to_string(),
            FieldType::Ref(id) => self.p.type_name(id).to_string(),
        }
    }

    fn field_of(&mut self, block: &str, i: usize, v: &str, f: super::FieldId) -> Option<FieldType> {
        let t = self.var(block, i, v)?;
        let FieldType::Ref(ty) = t else {
            self.diag(block, i, format!("`{v}` is an int, not an object"));
            return None;
        };
        let ft = match self.p.type_decl(ty).kind {
            TypeKind::Class { .. } => self.p.field_type(ty, f),
            TypeKind::Array { .. } => None,
        };
        if ft.is_none() {
            let msg = format!(
                "type `{}` of `{v}` has no field `{}`",
                self.p.type_name(ty),
                self.p.field_name(f)
            );
            self.diag(block, i, msg);
        }
        ft
    }

    fn elem_of(&mut self, block: &str, i: usize, v: &str) -> Option<FieldType> {
        let t = self.var(block, i, v)?;
        match t {
            FieldType::Ref(ty) => match self.p.type_decl(ty).kind {
                TypeKind::Array { elem } => Some(FieldType::Ref(elem)),
                TypeKind::Class { .. } => {
                    self.diag(block, i, format!("`{v}` is not an array"));
                    None
                }
            },
            FieldType::Int => {
                self.diag(block, i, format!("`{v}` is not an array"));
                None
            }
        }
    }

    fn stmt(&mut self, b: &str, i: usize, s: &Stmt) {
        match s {
            Stmt::New { dst, ty } => {
                if let Some(d) = self.var(b, i, dst) {
                    self.check_assign(b, i, FieldType::Ref(*ty), d);
                }
            }
            Stmt::NewArray { dst, ty, len } => {
                self.int_operand(b, i, len);
                if let Some(d) = self.var(b, i, dst) {
                    self.check_assign(b, i, FieldType::Ref(*ty), d);
                }
            }
            Stmt::Copy { dst, src } => {
                let d = self.var(b, i, dst);
                let s = self.var(b, i, src);
                if let (Some(d), Some(s)) = (d, s) {
                    self.check_assign(b, i, s, d);
                }
            }
            Stmt::StaticRead { dst, name } => {
                let d = self.var(b, i, dst);
                if let (Some(d), Some(&s)) = (d, self.p.statics.get(name)) {
                    self.check_assign(b, i, s, d);
                }
            }
            Stmt::StaticWrite { name, src } => {
                let s = self.var(b, i, src);
                if let (Some(s), Some(&d)) = (s, self.p.statics.get(name)) {
                    self.check_assign(b, i, s, d);
                }
            }
            Stmt::Null { dst } => {
                if let Some(FieldType::Int) = self.var(b, i, dst) {
                    self.diag(b, i, format!("cannot assign null to int `{dst}`"));
                }
            }
            Stmt::Load { dst, src, field } => {
                let f = self.field_of(b, i, src, *field);
                let d = self.var(b, i, dst);
                if let (Some(f), Some(d)) = (f, d) {
                    self.check_assign(b, i, f, d);
                }
            }
            Stmt::Store { dst, field, src } => {
                let f = self.field_of(b, i, dst, *field);
                let s = self.var(b, i, src);
                if let (Some(f), Some(s)) = (f, s) {
                    self.check_assign(b, i, s, f);
                }
            }
            Stmt::ArrayLoad { dst, array, index } => {
                self.int_operand(b, i, index);
                let e = self.elem_of(b, i, array);
                let d = self.var(b, i, dst);
                if let (Some(e), Some(d)) = (e, d) {
                    self.check_assign(b, i, e, d);
                }
            }
            Stmt::ArrayStore { array, index, src } => {
                self.int_operand(b, i, index);
                let e = self.elem_of(b, i, array);
                let s = self.var(b, i, src);
                if let (Some(e), Some(s)) = (e, s) {
                    self.check_assign(b, i, s, e);
                }
            }
            Stmt::Const { dst, .. } => {
                if let Some(t) = self.var(b, i, dst) {
                    self.check_assign(b, i, FieldType::Int, t);
                }
            }
            Stmt::Add { dst, lhs, rhs } => {
                self.int_operand(b, i, lhs);
                self.int_operand(b, i, rhs);
                if let Some(t) = self.var(b, i, dst) {
                    self.check_assign(b, i, FieldType::Int, t);
                }
            }
            Stmt::Call { dst, method, args } => {
                let Some(callee) = self.p.methods.get(method) else {
                    self.diag(b, i, format!("call to undeclared method `{method}`"));
                    return;
                };
                if callee.params.len() != args.len() {
                    let msg = format!(
                        "`{method}` takes {} arguments, {} given",
                        callee.params.len(),
                        args.len()
                    );
                    self.diag(b, i, msg);
                }
                for (a, (_, pt)) in args.iter().zip(callee.params.iter()) {
                    if let Some(at) = self.var(b, i, a) {
                        self.check_assign(b, i, at, *pt);
                    }
                }
                if let Some(d) = dst {
                    let dt = self.var(b, i, d);
                    match (callee.ret, dt) {
                        (Some(r), Some(dt)) => self.check_assign(b, i, r, dt),
                        (None, Some(_)) => {
                            self.diag(b, i, format!("`{method}` does not return a value"))
                        }
                        _ => {}
                    }
                }
            }
            Stmt::Return { value } => match (value, self.m.ret) {
                (Some(v), Some(r)) => {
                    if let Some(t) = self.var(b, i, v) {
                        self.check_assign(b, i, t, r);
                    }
                }
                (Some(_), None) => {
                    self.diag(b, i, "method without a return type returns a value".to_string())
                }
                (None, Some(_)) => self.diag(b, i, "missing return value".to_string()),
                (None, None) => {}
            },
            Stmt::IfNondet { .. } | Stmt::Goto { .. } => {}
            Stmt::IfNull { var, .. } => {
                if let Some(FieldType::Int) = self.var(b, i, var) {
                    self.diag(b, i, format!("isnull on int `{var}`"));
                }
            }
            Stmt::IfLess { lhs, rhs, .. } => {
                self.int_operand(b, i, lhs);
                self.int_operand(b, i, rhs);
            }
        }
    }
}
