//! The analyzed object language: nominal classes with single inheritance,
//! arrays written `T[]` at use sites, static roots, and methods as CFGs of
//! simple statements.
//!
//! Programs are parsed from `.shir` text ([`Program::parse`]), checked with
//! [`Program::validate`], and printed back with their `Display` impl.

mod parse;
mod print;
mod types;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

pub use parse::{ParseError, ParseErrorKind};
pub use types::RecursiveTypes;
pub use validate::Diagnostic;

/// Index into [`Program::types`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub u32);

/// Interned field name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId(pub u32);

/// Abstract field label. `Array` is the smashed index label `[]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Field(FieldId),
    Array,
}

/// Declared type of a field, local, parameter, or static.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldType {
    /// Reference to a class or array type (arrays are array-kinded types).
    Ref(TypeId),
    Int,
}

impl FieldType {
    pub fn is_ref(self) -> bool {
        matches!(self, FieldType::Ref(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeKind {
    Class {
        super_type: Option<TypeId>,
        /// Fields declared directly on this class, in declaration order.
        fields: Vec<(FieldId, FieldType)>,
    },
    Array {
        elem: TypeId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub kind: TypeKind,
}

impl TypeDecl {
    pub fn is_array(&self) -> bool {
        matches!(self.kind, TypeKind::Array { .. })
    }
}

/// Integer operand: a variable or a literal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Var(String),
    Lit(i64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    /// `v = new T`
    New { dst: String, ty: TypeId },
    /// `v = new T[n]`; `ty` is the array type.
    NewArray { dst: String, ty: TypeId, len: Operand },
    /// `v = w` between locals (reference or int).
    Copy { dst: String, src: String },
    /// `v = s` where `s` is a static.
    StaticRead { dst: String, name: String },
    /// `s = v` where `s` is a static.
    StaticWrite { name: String, src: String },
    /// `v = null`
    Null { dst: String },
    /// `v = w.f`
    Load { dst: String, src: String, field: FieldId },
    /// `v.f = w`
    Store { dst: String, field: FieldId, src: String },
    /// `v = w[i]`
    ArrayLoad { dst: String, array: String, index: Operand },
    /// `v[i] = w`
    ArrayStore { array: String, index: Operand, src: String },
    /// `v = k`
    Const { dst: String, value: i64 },
    /// `v = a + b`
    Add { dst: String, lhs: Operand, rhs: Operand },
    /// `v = call m(args)` or `call m(args)`
    Call { dst: Option<String>, method: String, args: Vec<String> },
    /// `return` or `return v`
    Return { value: Option<String> },
    /// `if nondet goto L1 else L2`
    IfNondet { then_to: String, else_to: String },
    /// `if isnull v goto L1 else L2`
    IfNull { var: String, then_to: String, else_to: String },
    /// `if a < b goto L1 else L2`
    IfLess { lhs: Operand, rhs: Operand, then_to: String, else_to: String },
    /// `goto L`
    Goto { to: String },
}

impl Stmt {
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Stmt::Return { .. }
                | Stmt::IfNondet { .. }
                | Stmt::IfNull { .. }
                | Stmt::IfLess { .. }
                | Stmt::Goto { .. }
        )
    }

    /// Jump targets of a terminator, in order.
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Stmt::IfNondet { then_to, else_to }
            | Stmt::IfNull { then_to, else_to, .. }
            | Stmt::IfLess { then_to, else_to, .. } => vec![then_to, else_to],
            Stmt::Goto { to } => vec![to],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Method {
    pub name: String,
    pub params: Vec<(String, FieldType)>,
    /// Locals declared with `var`, excluding parameters.
    pub locals: Vec<(String, FieldType)>,
    pub ret: Option<FieldType>,
    /// Blocks in source order; the first one is the entry.
    pub blocks: Vec<Block>,
}

impl Method {
    pub fn entry(&self) -> &str {
        &self.blocks[0].label
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    /// Declared type of a parameter or local.
    pub fn var_type(&self, name: &str) -> Option<FieldType> {
        self.params
            .iter()
            .chain(self.locals.iter())
            .find(|(n, _)| n == name)
            .map(|&(_, t)| t)
    }

    /// Parameters and locals in declaration order.
    pub fn vars(&self) -> impl Iterator<Item = &(String, FieldType)> {
        self.params.iter().chain(self.locals.iter())
    }

    /// Names of reference-typed parameters and locals.
    pub fn ref_vars(&self) -> impl Iterator<Item = &str> {
        self.vars().filter(|(_, t)| t.is_ref()).map(|(n, _)| n.as_str())
    }

    /// Program points of every `return` statement.
    pub fn exit_points(&self) -> Vec<ProgramPoint> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for (i, s) in b.stmts.iter().enumerate() {
                if matches!(s, Stmt::Return { .. }) {
                    out.push(ProgramPoint::new(&self.name, &b.label, i));
                }
            }
        }
        out
    }
}

/// A statement position: the state *before* statement `index` of `block`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProgramPoint {
    pub method: String,
    pub block: String,
    pub index: usize,
}

impl ProgramPoint {
    pub fn new(method: &str, block: &str, index: usize) -> Self {
        ProgramPoint {
            method: method.to_string(),
            block: block.to_string(),
            index,
        }
    }
}

impl fmt::Display for ProgramPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.method, self.block, self.index)
    }
}

impl std::str::FromStr for ProgramPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [m, b, i] => {
                let index = i
                    .parse()
                    .map_err(|_| format!("bad statement index in point `{s}`"))?;
                Ok(ProgramPoint::new(m, b, index))
            }
            _ => Err(format!("expected method:block:index, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Program {
    pub types: Vec<TypeDecl>,
    type_index: HashMap<String, TypeId>,
    fields: Vec<String>,
    field_index: HashMap<String, FieldId>,
    pub statics: BTreeMap<String, FieldType>,
    pub methods: BTreeMap<String, Method>,
    pub main: String,
    /// Heap labels per type, inherited fields included, int fields excluded.
    labels: Vec<BTreeSet<Label>>,
}

impl Program {
    pub fn parse(text: &str) -> Result<Program, ParseError> {
        parse::parse_program(text)
    }

    /// Parses and validates; validation failures come back as diagnostics.
    pub fn load(text: &str) -> Result<Program, LoadError> {
        let p = Program::parse(text)?;
        let diags = p.validate();
        if diags.is_empty() {
            Ok(p)
        } else {
            Err(LoadError::Invalid(diags))
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate::validate(self)
    }

    pub fn type_decl(&self, id: TypeId) -> &TypeDecl {
        &self.types[id.0 as usize]
    }

    pub fn type_name(&self, id: TypeId) -> &str {
        &self.types[id.0 as usize].name
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.type_index.get(name).copied()
    }

    pub fn field_name(&self, id: FieldId) -> &str {
        &self.fields[id.0 as usize]
    }

    pub fn field_id(&self, name: &str) -> Option<FieldId> {
        self.field_index.get(name).copied()
    }

    pub fn label_name(&self, label: Label) -> &str {
        match label {
            Label::Field(f) => self.field_name(f),
            Label::Array => "[]",
        }
    }

    pub fn method(&self, name: &str) -> Option<&Method> {
        self.methods.get(name)
    }

    pub fn type_ids(&self) -> impl Iterator<Item = TypeId> {
        (0..self.types.len() as u32).map(TypeId)
    }

    pub fn super_type(&self, id: TypeId) -> Option<TypeId> {
        match self.type_decl(id).kind {
            TypeKind::Class { super_type, .. } => super_type,
            TypeKind::Array { .. } => None,
        }
    }

    /// Reflexive subtyping. Arrays are invariant.
    pub fn is_subtype(&self, sub: TypeId, sup: TypeId) -> bool {
        let mut cur = Some(sub);
        let mut guard = 0;
        while let Some(t) = cur {
            if t == sup {
                return true;
            }
            guard += 1;
            if guard > self.types.len() {
                return false;
            }
            cur = self.super_type(t);
        }
        false
    }

    /// Fields of a class including inherited ones, supertype fields first.
    pub fn all_fields(&self, id: TypeId) -> Vec<(FieldId, FieldType)> {
        let mut chain = Vec::new();
        let mut cur = Some(id);
        while let Some(t) = cur {
            if chain.contains(&t) {
                break;
            }
            chain.push(t);
            cur = self.super_type(t);
        }
        let mut out = Vec::new();
        for t in chain.into_iter().rev() {
            if let TypeKind::Class { fields, .. } = &self.type_decl(t).kind {
                out.extend(fields.iter().copied());
            }
        }
        out
    }

    /// Declared type of field `f` on class `id` (own or inherited).
    pub fn field_type(&self, id: TypeId, f: FieldId) -> Option<FieldType> {
        self.all_fields(id)
            .into_iter()
            .find(|&(g, _)| g == f)
            .map(|(_, t)| t)
    }

    /// Heap labels of a single type.
    pub fn labels_of(&self, id: TypeId) -> &BTreeSet<Label> {
        &self.labels[id.0 as usize]
    }

    /// Union of heap labels over a set of types: field labels including
    /// inherited ones, `[]` iff the set holds an array type, no int fields.
    pub fn field_labels<'a, I>(&self, types: I) -> BTreeSet<Label>
    where
        I: IntoIterator<Item = &'a TypeId>,
    {
        let mut out = BTreeSet::new();
        for t in types {
            out.extend(self.labels_of(*t).iter().copied());
        }
        out
    }

    pub fn recursive_types(&self) -> RecursiveTypes {
        RecursiveTypes::compute(self)
    }

    fn compute_labels(&mut self) {
        let labels = self
            .type_ids()
            .map(|t| match self.type_decl(t).kind {
                TypeKind::Array { .. } => BTreeSet::from([Label::Array]),
                TypeKind::Class { .. } => self
                    .all_fields(t)
                    .into_iter()
                    .filter(|(_, ft)| ft.is_ref())
                    .map(|(f, _)| Label::Field(f))
                    .collect(),
            })
            .collect();
        self.labels = labels;
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("program failed validation:\n{}", render_diags(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}
