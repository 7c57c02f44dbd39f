use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{
    Block, FieldId, FieldType, Method, Operand, Program, Stmt, TypeDecl, TypeId, TypeKind,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unresolved name `{0}`")]
    Unresolved(String),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: line_no,
                    col,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<i64>().map_err(|_| ParseError {
                    line: line_no,
                    col,
                    kind: ParseErrorKind::Syntax(format!("integer literal `{s}` out of range")),
                })?;
                out.push(Token {
                    tok: Tok::Int(v),
                    line: line_no,
                    col,
                });
                continue;
            }
            if "{}()[]:;,=.+<-".contains(c) {
                out.push(Token {
                    tok: Tok::Sym(c),
                    line: line_no,
                    col,
                });
                i += 1;
                continue;
            }
            return Err(ParseError {
                line: line_no,
                col,
                kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
            });
        }
        out.push(Token {
            tok: Tok::Newline,
            line: line_no,
            col: chars.len() + 1,
        });
    }
    let line = text.lines().count() + 1;
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: 1,
    });
    Ok(out)
}

/// Unresolved type reference as written in the source.
#[derive(Clone, Debug)]
struct TypeRef {
    name: String,
    array: bool,
    line: usize,
    col: usize,
}

#[derive(Clone, Debug)]
enum RawStmt {
    Resolved(Stmt),
    New { dst: String, ty: TypeRef },
    NewArray { dst: String, ty: TypeRef, len: Operand },
    Load { dst: String, src: String, field: String },
    Store { dst: String, field: String, src: String },
}

struct RawClass {
    name: String,
    super_name: Option<(String, usize, usize)>,
    fields: Vec<(String, TypeRef)>,
}

struct RawMethod {
    name: String,
    params: Vec<(String, TypeRef)>,
    locals: Vec<(String, TypeRef)>,
    ret: Option<TypeRef>,
    blocks: Vec<(String, Vec<RawStmt>)>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            kind: ParseErrorKind::Syntax(msg.into()),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn is_sym(&self, c: char) -> bool {
        *self.peek() == Tok::Sym(c)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_sym(&mut self, c: char) -> PResult<()> {
        if self.is_sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    /// Statement end: newline, optional `;`, or the closing brace.
    fn end_of_stmt(&mut self) -> PResult<()> {
        if self.is_sym(';') {
            self.bump();
        }
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Sym('}') | Tok::Eof => Ok(()),
            other => self.err(format!("expected end of line, found {}", describe(other))),
        }
    }

    fn type_ref(&mut self) -> PResult<TypeRef> {
        let (line, col) = self.here();
        let name = self.ident()?;
        let array = if self.is_sym('[') {
            self.bump();
            self.expect_sym(']')?;
            true
        } else {
            false
        };
        Ok(TypeRef {
            name,
            array,
            line,
            col,
        })
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Operand::Var(s))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Operand::Lit(v))
            }
            Tok::Sym('-') => {
                self.bump();
                match self.bump() {
                    Tok::Int(v) => Ok(Operand::Lit(-v)),
                    _ => self.err("expected integer after `-`"),
                }
            }
            other => self.err(format!("expected operand, found {}", describe(&other))),
        }
    }

    fn class(&mut self) -> PResult<RawClass> {
        self.expect_kw("class")?;
        let name = self.ident()?;
        let super_name = if self.is_sym(':') {
            self.bump();
            let (l, c) = self.here();
            Some((self.ident()?, l, c))
        } else {
            None
        };
        let mut fields = Vec::new();
        if self.is_sym(';') {
            self.bump();
            return Ok(RawClass {
                name,
                super_name,
                fields,
            });
        }
        self.expect_sym('{')?;
        loop {
            self.skip_newlines();
            if self.is_sym('}') {
                self.bump();
                break;
            }
            let fname = self.ident()?;
            self.expect_sym(':')?;
            let ty = self.type_ref()?;
            self.expect_sym(';')?;
            fields.push((fname, ty));
        }
        Ok(RawClass {
            name,
            super_name,
            fields,
        })
    }

    fn method(&mut self) -> PResult<RawMethod> {
        self.expect_kw("method")?;
        let name = self.ident()?;
        self.expect_sym('(')?;
        let mut params = Vec::new();
        if !self.is_sym(')') {
            loop {
                let p = self.ident()?;
                self.expect_sym(':')?;
                params.push((p, self.type_ref()?));
                if self.is_sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        let ret = if self.is_sym(':') {
            self.bump();
            Some(self.type_ref()?)
        } else {
            None
        };
        self.expect_sym('{')?;
        let mut locals = Vec::new();
        let mut blocks: Vec<(String, Vec<RawStmt>)> = Vec::new();
        loop {
            self.skip_newlines();
            if self.is_sym('}') {
                self.bump();
                break;
            }
            if *self.peek() == Tok::Eof {
                return self.err("unterminated method body");
            }
            if self.is_kw("var") {
                if !blocks.is_empty() {
                    return self.err("`var` declarations must precede the first block");
                }
                self.bump();
                let v = self.ident()?;
                self.expect_sym(':')?;
                let ty = self.type_ref()?;
                self.end_of_stmt()?;
                locals.push((v, ty));
                continue;
            }
            if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Sym(':') {
                let label = self.ident()?;
                self.bump();
                blocks.push((label, Vec::new()));
                continue;
            }
            let stmt = self.stmt()?;
            match blocks.last_mut() {
                Some((_, stmts)) => stmts.push(stmt),
                None => return self.err("statement outside of a labeled block"),
            }
        }
        Ok(RawMethod {
            name,
            params,
            locals,
            ret,
            blocks,
        })
    }

    fn goto_pair(&mut self) -> PResult<(String, String)> {
        self.expect_kw("goto")?;
        let a = self.ident()?;
        self.expect_kw("else")?;
        let b = self.ident()?;
        Ok((a, b))
    }

    fn call_tail(&mut self) -> PResult<(String, Vec<String>)> {
        self.expect_kw("call")?;
        let m = self.ident()?;
        self.expect_sym('(')?;
        let mut args = Vec::new();
        if !self.is_sym(')') {
            loop {
                args.push(self.ident()?);
                if self.is_sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        Ok((m, args))
    }

    fn stmt(&mut self) -> PResult<RawStmt> {
        let s = self.stmt_inner()?;
        self.end_of_stmt()?;
        Ok(s)
    }

    fn stmt_inner(&mut self) -> PResult<RawStmt> {
        use RawStmt::Resolved as R;
        if self.is_kw("return") {
            self.bump();
            let value = match self.peek() {
                Tok::Ident(_) => Some(self.ident()?),
                _ => None,
            };
            return Ok(R(Stmt::Return { value }));
        }
        if self.is_kw("goto") {
            self.bump();
            return Ok(R(Stmt::Goto { to: self.ident()? }));
        }
        if self.is_kw("call") {
            let (method, args) = self.call_tail()?;
            return Ok(R(Stmt::Call {
                dst: None,
                method,
                args,
            }));
        }
        if self.is_kw("if") {
            self.bump();
            if self.is_kw("nondet") {
                self.bump();
                let (then_to, else_to) = self.goto_pair()?;
                return Ok(R(Stmt::IfNondet { then_to, else_to }));
            }
            if self.is_kw("isnull") {
                self.bump();
                let var = self.ident()?;
                let (then_to, else_to) = self.goto_pair()?;
                return Ok(R(Stmt::IfNull {
                    var,
                    then_to,
                    else_to,
                }));
            }
            let lhs = self.operand()?;
            self.expect_sym('<')?;
            let rhs = self.operand()?;
            let (then_to, else_to) = self.goto_pair()?;
            return Ok(R(Stmt::IfLess {
                lhs,
                rhs,
                then_to,
                else_to,
            }));
        }

        let v = self.ident()?;
        if self.is_sym('.') {
            self.bump();
            let f = self.ident()?;
            self.expect_sym('=')?;
            let src = self.ident()?;
            return Ok(RawStmt::Store {
                dst: v,
                field: f,
                src,
            });
        }
        if self.is_sym('[') {
            self.bump();
            let index = self.operand()?;
            self.expect_sym(']')?;
            self.expect_sym('=')?;
            let src = self.ident()?;
            return Ok(R(Stmt::ArrayStore {
                array: v,
                index,
                src,
            }));
        }
        self.expect_sym('=')?;
        if self.is_kw("new") {
            self.bump();
            let (line, col) = self.here();
            let name = self.ident()?;
            let ty = TypeRef {
                name,
                array: false,
                line,
                col,
            };
            if self.is_sym('[') {
                self.bump();
                if self.is_sym(']') {
                    return self.err("array allocation needs a length: `new T[n]`");
                }
                let len = self.operand()?;
                self.expect_sym(']')?;
                return Ok(RawStmt::NewArray { dst: v, ty, len });
            }
            return Ok(RawStmt::New { dst: v, ty });
        }
        if self.is_kw("null") {
            self.bump();
            return Ok(R(Stmt::Null { dst: v }));
        }
        if self.is_kw("call") {
            let (method, args) = self.call_tail()?;
            return Ok(R(Stmt::Call {
                dst: Some(v),
                method,
                args,
            }));
        }
        let lhs = self.operand()?;
        if self.is_sym('+') {
            self.bump();
            let rhs = self.operand()?;
            return Ok(R(Stmt::Add { dst: v, lhs, rhs }));
        }
        let src = match lhs {
            Operand::Lit(value) => return Ok(R(Stmt::Const { dst: v, value })),
            Operand::Var(s) => s,
        };
        if self.is_sym('.') {
            self.bump();
            let f = self.ident()?;
            return Ok(RawStmt::Load {
                dst: v,
                src,
                field: f,
            });
        }
        if self.is_sym('[') {
            self.bump();
            let index = self.operand()?;
            self.expect_sym(']')?;
            return Ok(R(Stmt::ArrayLoad {
                dst: v,
                array: src,
                index,
            }));
        }
        Ok(R(Stmt::Copy { dst: v, src }))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::Newline => "end of line".to_string(),
        Tok::Eof => "end of file".to_string(),
    }
}

fn dup(name: &str, line: usize, col: usize) -> ParseError {
    ParseError {
        line,
        col,
        kind: ParseErrorKind::Duplicate(name.to_string()),
    }
}

struct Resolver {
    types: Vec<TypeDecl>,
    type_index: HashMap<String, TypeId>,
    fields: Vec<String>,
    field_index: HashMap<String, FieldId>,
}

impl Resolver {
    fn intern_field(&mut self, name: &str) -> FieldId {
        if let Some(&id) = self.field_index.get(name) {
            return id;
        }
        let id = FieldId(self.fields.len() as u32);
        self.fields.push(name.to_string());
        self.field_index.insert(name.to_string(), id);
        id
    }

    fn class_id(&self, name: &str, line: usize, col: usize) -> PResult<TypeId> {
        match self.type_index.get(name) {
            Some(&id) if !self.types[id.0 as usize].is_array() => Ok(id),
            _ => Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::Unresolved(name.to_string()),
            }),
        }
    }

    fn array_of(&mut self, elem: TypeId) -> TypeId {
        let name = format!("{}[]", self.types[elem.0 as usize].name);
        if let Some(&id) = self.type_index.get(&name) {
            return id;
        }
        let id = TypeId(self.types.len() as u32);
        self.types.push(TypeDecl {
            name: name.clone(),
            kind: TypeKind::Array { elem },
        });
        self.type_index.insert(name, id);
        id
    }

    fn ty(&mut self, r: &TypeRef) -> PResult<FieldType> {
        if r.name == "int" && !r.array {
            return Ok(FieldType::Int);
        }
        let base = self.class_id(&r.name, r.line, r.col)?;
        Ok(FieldType::Ref(if r.array { self.array_of(base) } else { base }))
    }

    fn class_ty(&mut self, r: &TypeRef) -> PResult<TypeId> {
        match self.ty(r)? {
            FieldType::Ref(t) => Ok(t),
            FieldType::Int => Err(ParseError {
                line: r.line,
                col: r.col,
                kind: ParseErrorKind::Syntax("cannot allocate `int`".to_string()),
            }),
        }
    }
}

pub(super) fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut classes = Vec::new();
    let mut statics_raw: Vec<(String, TypeRef)> = Vec::new();
    let mut methods_raw = Vec::new();
    loop {
        p.skip_newlines();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(kw) if kw == "class" => {
                let (l, c) = p.here();
                classes.push((p.class()?, l, c));
            }
            Tok::Ident(kw) if kw == "static" => {
                p.bump();
                let name = p.ident()?;
                p.expect_sym(':')?;
                let ty = p.type_ref()?;
                p.expect_sym(';')?;
                statics_raw.push((name, ty));
            }
            Tok::Ident(kw) if kw == "method" => {
                let (l, c) = p.here();
                methods_raw.push((p.method()?, l, c));
            }
            other => {
                return p.err(format!(
                    "expected `class`, `static` or `method`, found {}",
                    describe(&other)
                ))
            }
        }
    }

    let mut r = Resolver {
        types: Vec::new(),
        type_index: HashMap::new(),
        fields: Vec::new(),
        field_index: HashMap::new(),
    };
    // Class names first so forward references resolve.
    for (c, l, col) in &classes {
        if c.name == "int" || r.type_index.contains_key(&c.name) {
            return Err(dup(&c.name, *l, *col));
        }
        let id = TypeId(r.types.len() as u32);
        r.types.push(TypeDecl {
            name: c.name.clone(),
            kind: TypeKind::Class {
                super_type: None,
                fields: Vec::new(),
            },
        });
        r.type_index.insert(c.name.clone(), id);
    }
    for (c, l, col) in &classes {
        let id = r.type_index[&c.name];
        let super_type = match &c.super_name {
            Some((s, sl, sc)) => Some(r.class_id(s, *sl, *sc)?),
            None => None,
        };
        let mut seen = BTreeSet::new();
        let mut fields = Vec::new();
        for (fname, fty) in &c.fields {
            if !seen.insert(fname.clone()) {
                return Err(dup(&format!("{}.{}", c.name, fname), *l, *col));
            }
            let fid = r.intern_field(fname);
            fields.push((fid, r.ty(fty)?));
        }
        r.types[id.0 as usize].kind = TypeKind::Class { super_type, fields };
    }

    let mut statics = BTreeMap::new();
    for (name, ty) in &statics_raw {
        if statics.contains_key(name) {
            return Err(dup(name, ty.line, ty.col));
        }
        statics.insert(name.clone(), r.ty(ty)?);
    }

    let mut methods = BTreeMap::new();
    for (m, l, c) in methods_raw {
        if methods.contains_key(&m.name) {
            return Err(dup(&m.name, l, c));
        }
        let method = resolve_method(&mut r, &statics, m, l, c)?;
        methods.insert(method.name.clone(), method);
    }

    let mut program = Program {
        types: r.types,
        type_index: r.type_index,
        fields: r.fields,
        field_index: r.field_index,
        statics,
        methods,
        main: "main".to_string(),
        labels: Vec::new(),
    };
    program.compute_labels();
    Ok(program)
}

fn resolve_method(
    r: &mut Resolver,
    statics: &BTreeMap<String, FieldType>,
    m: RawMethod,
    line: usize,
    col: usize,
) -> PResult<Method> {
    let mut names = BTreeSet::new();
    let mut params = Vec::new();
    for (n, t) in &m.params {
        if !names.insert(n.clone()) {
            return Err(dup(n, t.line, t.col));
        }
        params.push((n.clone(), r.ty(t)?));
    }
    let mut locals = Vec::new();
    for (n, t) in &m.locals {
        if !names.insert(n.clone()) {
            return Err(dup(n, t.line, t.col));
        }
        locals.push((n.clone(), r.ty(t)?));
    }
    let ret = match &m.ret {
        Some(t) => Some(r.ty(t)?),
        None => None,
    };
    if m.blocks.is_empty() {
        return Err(ParseError {
            line,
            col,
            kind: ParseErrorKind::Syntax(format!("method `{}` has no blocks", m.name)),
        });
    }
    let is_static = |n: &str| statics.contains_key(n) && !names.contains(n);
    let mut labels = BTreeSet::new();
    let mut blocks = Vec::new();
    for (label, raw) in m.blocks {
        if !labels.insert(label.clone()) {
            return Err(dup(&format!("{}:{}", m.name, label), line, col));
        }
        let mut stmts = Vec::new();
        for s in raw {
            let stmt = match s {
                RawStmt::New { dst, ty } => Stmt::New {
                    dst,
                    ty: r.class_ty(&ty)?,
                },
                RawStmt::NewArray { dst, ty, len } => {
                    let elem = r.class_ty(&ty)?;
                    Stmt::NewArray {
                        dst,
                        ty: r.array_of(elem),
                        len,
                    }
                }
                RawStmt::Store { dst, field, src } => Stmt::Store {
                    dst,
                    field: r.intern_field(&field),
                    src,
                },
                RawStmt::Load { dst, src, field } => Stmt::Load {
                    dst,
                    src,
                    field: r.intern_field(&field),
                },
                RawStmt::Resolved(Stmt::Copy { dst, src }) => {
                    match (is_static(&dst), is_static(&src)) {
                        (false, true) => Stmt::StaticRead { dst, name: src },
                        (true, false) => Stmt::StaticWrite { name: dst, src },
                        _ => Stmt::Copy { dst, src },
                    }
                }
                RawStmt::Resolved(s) => s,
            };
            stmts.push(stmt);
        }
        blocks.push(Block { label, stmts });
    }
    Ok(Method {
        name: m.name,
        params,
        locals,
        ret,
        blocks,
    })
}
