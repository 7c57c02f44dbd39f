use std::fmt::{self, Write as _};

use super::{FieldType, Method, Operand, Program, Stmt, TypeKind};

impl Program {
    fn write_type(&self, out: &mut String, t: FieldType) {
        match t {
            FieldType::Int => out.push_str("int"),
            FieldType::Ref(id) => out.push_str(self.type_name(id)),
        }
    }

    fn write_stmt(&self, out: &mut String, s: &Stmt) -> fmt::Result {
        match s {
            Stmt::New { dst, ty } => write!(out, "{dst} = new {}", self.type_name(*ty)),
            Stmt::NewArray { dst, ty, len } => {
                let elem = match self.type_decl(*ty).kind {
                    TypeKind::Array { elem } => self.type_name(elem),
                    TypeKind::Class { .. } => self.type_name(*ty),
                };
                write!(out, "{dst} = new {elem}[{}]", operand(len))
            }
            Stmt::Copy { dst, src } => write!(out, "{dst} = {src}"),
            Stmt::StaticRead { dst, name } => write!(out, "{dst} = {name}"),
            Stmt::StaticWrite { name, src } => write!(out, "{name} = {src}"),
            Stmt::Null { dst } => write!(out, "{dst} = null"),
            Stmt::Load { dst, src, field } => {
                write!(out, "{dst} = {src}.{}", self.field_name(*field))
            }
            Stmt::Store { dst, field, src } => {
                write!(out, "{dst}.{} = {src}", self.field_name(*field))
            }
            Stmt::ArrayLoad { dst, array, index } => {
                write!(out, "{dst} = {array}[{}]", operand(index))
            }
            Stmt::ArrayStore { array, index, src } => {
                write!(out, "{array}[{}] = {src}", operand(index))
            }
            Stmt::Const { dst, value } => write!(out, "{dst} = {value}"),
            Stmt::Add { dst, lhs, rhs } => {
                write!(out, "{dst} = {} + {}", operand(lhs), operand(rhs))
            }
            Stmt::Call { dst, method, args } => {
                if let Some(d) = dst {
                    write!(out, "{d} = ")?;
                }
                write!(out, "call {method}({})", args.join(", "))
            }
            Stmt::Return { value: Some(v) } => write!(out, "return {v}"),
            Stmt::Return { value: None } => write!(out, "return"),
            Stmt::IfNondet { then_to, else_to } => {
                write!(out, "if nondet goto {then_to} else {else_to}")
            }
            Stmt::IfNull {
                var,
                then_to,
                else_to,
            } => write!(out, "if isnull {var} goto {then_to} else {else_to}"),
            Stmt::IfLess {
                lhs,
                rhs,
                then_to,
                else_to,
            } => write!(
                out,
                "if {} < {} goto {then_to} else {else_to}",
                operand(lhs),
                operand(rhs)
            ),
            Stmt::Goto { to } => write!(out, "goto {to}"),
        }
    }

    fn write_method(&self, out: &mut String, m: &Method) -> fmt::Result {
        write!(out, "method {}(", m.name)?;
        for (i, (p, t)) in m.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write!(out, "{p}: ")?;
            self.write_type(out, *t);
        }
        out.push(')');
        if let Some(t) = m.ret {
            out.push_str(": ");
            self.write_type(out, t);
        }
        out.push_str(" {\n");
        for (v, t) in &m.locals {
            write!(out, "  var {v}: ")?;
            self.write_type(out, *t);
            out.push_str(";\n");
        }
        for b in &m.blocks {
            writeln!(out, "{}:", b.label)?;
            for s in &b.stmts {
                out.push_str("  ");
                self.write_stmt(out, s)?;
                out.push('\n');
            }
        }
        out.push_str("}\n");
        Ok(())
    }

    /// Source text for a single statement.
    pub fn stmt_text(&self, s: &Stmt) -> String {
        let mut out = String::new();
        self.write_stmt(&mut out, s).expect("writing to a String");
        out
    }
}

fn operand(o: &Operand) -> String {
    match o {
        Operand::Var(v) => v.clone(),
        Operand::Lit(k) => k.to_string(),
    }
}

/// Canonical source form: classes in declaration order, then statics and
/// methods sorted by name.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for decl in &self.types {
            let TypeKind::Class { super_type, fields } = &decl.kind else {
                continue;
            };
            write!(out, "class {}", decl.name)?;
            if let Some(s) = super_type {
                write!(out, " : {}", self.type_name(*s))?;
            }
            if fields.is_empty() {
                out.push_str(";\n");
                continue;
            }
            out.push_str(" {");
            for (fid, t) in fields {
                write!(out, " {}: ", self.field_name(*fid))?;
                self.write_type(&mut out, *t);
                out.push(';');
            }
            out.push_str(" }\n");
        }
        for (name, t) in &self.statics {
            write!(out, "static {name}: ")?;
            self.write_type(&mut out, *t);
            out.push_str(";\n");
        }
        for m in self.methods.values() {
            out.push('\n');
            self.write_method(&mut out, m)?;
        }
        f.write_str(&out)
    }
}

/// Structural equality: two programs are equal when their canonical source
/// forms coincide, independent of internal id assignment.
impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl Eq for Program {}
