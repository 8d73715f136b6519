//! Recursive-descent parser for the C subset.
//!
//! Statements that do not fit the subset are not errors: the parser rewinds,
//! skips the statement with bracket balancing, and records an `Opaque` node.
//! Only unbalanced brackets, unterminated constructs, and malformed `for`
//! headers are syntax errors.

use std::collections::HashMap;

use super::affine::AffineExpr;
use super::ir::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::pragma::OmpPragma;
use super::FrontendError;
use crate::omp::ParallelForClauses;

/// Side-effect-free math routines allowed inside analyzable expressions.
pub const PURE_FUNCTIONS: &[&str] = &[
    "sqrt", "sqrtf", "exp", "expf", "log", "logf", "fabs", "fabsf", "fmax", "fmaxf", "fmin", "fminf",
    "pow", "powf", "sin", "sinf", "cos", "cosf", "tanh", "tanhf", "floor", "floorf", "ceil", "ceilf",
    "abs", "labs",
];

const TYPE_WORDS: &[&str] = &[
    "int", "long", "float", "double", "char", "short", "unsigned", "signed", "void", "const",
    "volatile", "static", "register", "struct", "union", "enum", "extern", "inline", "restrict",
    "__restrict", "__restrict__", "_Bool", "bool", "size_t", "uint32_t", "uint64_t", "int32_t",
    "int64_t", "uint8_t",
];

enum Fail {
    Subset(String),
    Syntax(FrontendError),
}

impl From<FrontendError> for Fail {
    fn from(e: FrontendError) -> Self {
        Fail::Syntax(e)
    }
}

type PResult<T> = Result<T, Fail>;

struct Snapshot {
    pos: usize,
    symbols: usize,
    scopes: Vec<HashMap<String, SymbolId>>,
    next_stmt: u32,
    next_loop: u32,
}

struct FnState {
    symbols: Vec<Symbol>,
    scopes: Vec<HashMap<String, SymbolId>>,
    name_counts: HashMap<String, usize>,
}

impl FnState {
    fn new() -> Self {
        FnState { symbols: Vec::new(), scopes: vec![HashMap::new()], name_counts: HashMap::new() }
    }
}

pub struct Parser<'a> {
    text: &'a str,
    toks: Vec<Token>,
    pos: usize,
    next_stmt: u32,
    next_loop: u32,
    f: FnState,
}

pub fn parse_unit(path: &str, text: &str) -> Result<SourceUnit, FrontendError> {
    let toks = tokenize(text)?;
    let mut p = Parser { text, toks, pos: 0, next_stmt: 0, next_loop: 0, f: FnState::new() };
    let mut functions: Vec<FunctionDecl> = Vec::new();
    let mut opaque_items = Vec::new();
    while !p.at_eof() {
        if let TokenKind::Directive(_) = p.peek().kind {
            opaque_items.push(p.peek().span);
            p.pos += 1;
            continue;
        }
        match p.top_level()? {
            TopLevel::Function(f) => {
                if functions.iter().any(|g| g.name == f.name) {
                    return Err(FrontendError::syntax(text, f.span.start, format!("redefinition of function `{}`", f.name)));
                }
                functions.push(f);
            }
            TopLevel::Opaque(span) => opaque_items.push(span),
        }
    }
    Ok(SourceUnit { path: path.to_string(), text: text.to_string(), functions, opaque_items })
}

enum TopLevel {
    Function(FunctionDecl),
    Opaque(Span),
}

fn is_keyword(word: &str) -> bool {
    matches!(
        word,
        "for" | "while" | "do" | "if" | "else" | "return" | "break" | "continue" | "goto" | "switch"
            | "case" | "default" | "sizeof" | "typedef"
    ) || TYPE_WORDS.contains(&word)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Token {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek().kind, TokenKind::Punct(q) if q == p)
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(w) if w == word)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> usize {
        self.toks[self.pos.saturating_sub(1)].span.end
    }

    fn syntax_here(&self, msg: impl Into<String>) -> FrontendError {
        FrontendError::syntax(self.text, self.peek().span.start, msg)
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        if self.is_punct(p) {
            Ok(self.bump().span)
        } else {
            Err(Fail::Syntax(self.syntax_here(format!("expected `{p}`"))))
        }
    }

    /// Like `expect_punct`, but a mismatch only means "outside the subset";
    /// the skipper decides later whether the text is actually malformed.
    fn want_punct(&mut self, p: &str) -> PResult<Span> {
        if self.is_punct(p) {
            Ok(self.bump().span)
        } else {
            Err(Fail::Subset(format!("expected `{p}`")))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match &self.peek().kind {
            TokenKind::Ident(w) if !is_keyword(w) => {
                let w = w.clone();
                Ok((w, self.bump().span))
            }
            _ => Err(Fail::Subset("expected identifier".into())),
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            pos: self.pos,
            symbols: self.f.symbols.len(),
            scopes: self.f.scopes.clone(),
            next_stmt: self.next_stmt,
            next_loop: self.next_loop,
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.pos = s.pos;
        self.f.symbols.truncate(s.symbols);
        self.f.scopes = s.scopes;
        self.next_stmt = s.next_stmt;
        self.next_loop = s.next_loop;
    }

    fn stmt_id(&mut self) -> StmtId {
        self.next_stmt += 1;
        StmtId(self.next_stmt - 1)
    }

    // ---- symbols -------------------------------------------------------

    fn declare(&mut self, name: &str, ty: Option<CType>, kind: SymbolKind, dims: Vec<Expr>, decl: Option<StmtId>) -> SymbolId {
        let count = self.f.name_counts.entry(name.to_string()).or_insert(0);
        *count += 1;
        let key = if *count == 1 { name.to_string() } else { format!("{name}@{count}") };
        let id = SymbolId(self.f.symbols.len() as u32);
        self.f.symbols.push(Symbol { name: name.to_string(), key, ty, kind, array_dims: dims, decl });
        self.f.scopes.last_mut().expect("scope").insert(name.to_string(), id);
        id
    }

    fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.f.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn resolve(&mut self, name: &str) -> SymbolId {
        if let Some(id) = self.lookup(name) {
            return id;
        }
        let count = self.f.name_counts.entry(name.to_string()).or_insert(0);
        *count += 1;
        let key = if *count == 1 { name.to_string() } else { format!("{name}@{count}") };
        let id = SymbolId(self.f.symbols.len() as u32);
        self.f.symbols.push(Symbol { name: name.to_string(), key, ty: None, kind: SymbolKind::Global, array_dims: vec![], decl: None });
        self.f.scopes[0].insert(name.to_string(), id);
        id
    }

    // ---- top level -----------------------------------------------------

    fn top_level(&mut self) -> Result<TopLevel, FrontendError> {
        let start_pos = self.pos;
        let start = self.peek().span.start;
        // Scan the declaration head: everything up to `(`, `;`, `=` or `{`.
        let mut i = self.pos;
        let mut name_idx = None;
        while !matches!(self.toks[i].kind, TokenKind::Eof) {
            match &self.toks[i].kind {
                TokenKind::Punct("(") => {
                    if i > self.pos && matches!(&self.toks[i - 1].kind, TokenKind::Ident(w) if !is_keyword(w)) {
                        name_idx = Some(i - 1);
                    }
                    break;
                }
                TokenKind::Punct(";") | TokenKind::Punct("=") | TokenKind::Punct("{") => break,
                _ => i += 1,
            }
        }
        if let Some(ni) = name_idx {
            // Find the closing parenthesis of the parameter list.
            let close = self.matching_close(ni + 1)?;
            if matches!(self.toks[close + 1].kind, TokenKind::Punct("{")) {
                match self.function(start_pos, ni, close) {
                    Ok(f) => return Ok(TopLevel::Function(f)),
                    Err(Fail::Syntax(e)) => return Err(e),
                    Err(Fail::Subset(reason)) => {
                        log::debug!("function outside subset ({reason}); kept opaque");
                        self.pos = close + 1;
                        let end = self.skip_balanced_block()?;
                        return Ok(TopLevel::Opaque(Span::new(start, end)));
                    }
                }
            }
        }
        self.pos = start_pos;
        let end = self.skip_statement()?;
        Ok(TopLevel::Opaque(Span::new(start, end)))
    }

    fn matching_close(&self, open_idx: usize) -> Result<usize, FrontendError> {
        let mut stack = Brackets::default();
        let mut i = open_idx;
        loop {
            let t = &self.toks[i];
            if let TokenKind::Eof = t.kind {
                return Err(stack.unclosed(self.text).unwrap_or_else(|| self.syntax_here("unexpected end of input")));
            }
            stack.feed(self.text, t)?;
            if stack.is_empty() {
                return Ok(i);
            }
            i += 1;
        }
    }

    fn function(&mut self, start_pos: usize, name_idx: usize, close_idx: usize) -> PResult<FunctionDecl> {
        self.f = FnState::new();
        let start = self.toks[start_pos].span.start;
        // Return type.
        let mut words = Vec::new();
        let mut ptr = 0u8;
        for t in &self.toks[start_pos..name_idx] {
            match &t.kind {
                TokenKind::Ident(w) => words.push(w.as_str()),
                TokenKind::Punct("*") => ptr += 1,
                _ => return Err(Fail::Subset("unsupported return type".into())),
            }
        }
        let words: Vec<&str> = words.into_iter().filter(|w| !matches!(*w, "static" | "inline" | "extern")).collect();
        let return_type = if words == ["void"] && ptr == 0 {
            None
        } else if ptr == 0 {
            Some(base_type(&words).ok_or_else(|| Fail::Subset("unsupported return type".into()))?)
        } else {
            return Err(Fail::Subset("pointer return type".into()));
        };
        let name = match &self.toks[name_idx].kind {
            TokenKind::Ident(w) => w.clone(),
            _ => unreachable!(),
        };
        self.pos = name_idx + 2;
        let mut params = Vec::new();
        if self.is_ident("void") && matches!(self.peek_at(1).kind, TokenKind::Punct(")")) {
            self.bump();
        }
        while self.pos < close_idx {
            let pstart = self.peek().span.start;
            let mut words = Vec::new();
            let mut ptr = 0u8;
            let mut pname = None;
            while self.pos < close_idx && !self.is_punct(",") {
                let t = self.bump();
                match t.kind {
                    TokenKind::Ident(w) if TYPE_WORDS.contains(&w.as_str()) => words.push(w),
                    TokenKind::Ident(w) => {
                        if pname.is_some() {
                            return Err(Fail::Subset("unsupported parameter".into()));
                        }
                        pname = Some(w);
                    }
                    TokenKind::Punct("*") => ptr += 1,
                    TokenKind::Punct("[") => {
                        while self.pos < close_idx && !self.is_punct("]") {
                            self.bump();
                        }
                        self.bump();
                        ptr += 1;
                    }
                    _ => return Err(Fail::Subset("unsupported parameter".into())),
                }
            }
            let pend = self.prev_end();
            if self.is_punct(",") {
                self.bump();
            }
            let is_const = words.iter().any(|w| w == "const");
            let core: Vec<&str> = words
                .iter()
                .map(String::as_str)
                .filter(|w| !matches!(*w, "const" | "volatile" | "restrict" | "__restrict" | "__restrict__" | "register"))
                .collect();
            let base = base_type(&core).ok_or_else(|| Fail::Subset("unsupported parameter type".into()))?;
            if ptr > 1 {
                return Err(Fail::Subset("multi-level pointer parameter".into()));
            }
            let pname = pname.ok_or_else(|| Fail::Subset("unnamed parameter".into()))?;
            if params.iter().any(|p: &Param| p.name == pname) {
                return Err(Fail::Syntax(FrontendError::syntax(self.text, pstart, format!("duplicate parameter `{pname}`"))));
            }
            let ty = CType { base, pointer: ptr };
            let sym = self.declare(&pname, Some(ty), SymbolKind::Param, vec![], None);
            params.push(Param { name: pname, sym, ty, is_const, span: Span::new(pstart, pend) });
        }
        self.pos = close_idx + 1;
        let body_start = self.peek().span.start;
        self.expect_punct("{")?;
        self.f.scopes.push(HashMap::new());
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(Fail::Syntax(self.syntax_here("unexpected end of input in function body")));
            }
            body.push(self.stmt()?);
        }
        let end = self.bump().span.end;
        let symbols = std::mem::take(&mut self.f.symbols);
        Ok(FunctionDecl {
            name,
            return_type,
            params,
            body,
            symbols,
            span: Span::new(start, end),
            body_span: Span::new(body_start, end),
        })
    }

    // ---- statements ----------------------------------------------------

    fn stmt(&mut self) -> PResult<Stmt> {
        let snap = self.snapshot();
        let start = self.peek().span.start;
        match self.try_stmt() {
            Ok(s) => Ok(s),
            Err(Fail::Syntax(e)) => Err(Fail::Syntax(e)),
            Err(Fail::Subset(reason)) => {
                self.restore(snap);
                self.opaque(start, reason)
            }
        }
    }

    fn opaque(&mut self, start: usize, reason: String) -> PResult<Stmt> {
        let first = self.pos;
        let declares = self.peek_is_type_word();
        let decl_base = if declares { self.leading_scalar_type() } else { None };
        let end = self.skip_statement()?;
        let last = self.pos;
        let id = self.stmt_id();
        let mut mentions = Vec::new();
        for k in first..last {
            if let TokenKind::Ident(w) = self.toks[k].kind.clone() {
                let w = w.as_str();
                if is_keyword(w) {
                    continue;
                }
                let next = self.toks[k + 1].kind.clone();
                let next = &next;
                let prev = if k > first { Some(self.toks[k - 1].kind.clone()) } else { None };
                let prev = prev.as_ref();
                let looks_declared = declares
                    && matches!(next, TokenKind::Punct("=" | ";" | "," | "["))
                    && matches!(prev, Some(TokenKind::Ident(_)) | Some(TokenKind::Punct("*" | ",")));
                let sym = if looks_declared {
                    // Pointers declared in opaque code may alias anything, so
                    // they stay untyped and every access through them is unknown.
                    let ty = match prev {
                        Some(TokenKind::Punct("*")) => None,
                        _ => decl_base.map(CType::scalar),
                    };
                    self.declare(w, ty, SymbolKind::Local, vec![], Some(id))
                } else if matches!(next, TokenKind::Punct("(")) && self.lookup(w).is_none() {
                    continue;
                } else {
                    self.resolve(w)
                };
                if !mentions.contains(&sym) {
                    mentions.push(sym);
                }
            }
        }
        Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::Opaque { reason, mentions } })
    }

    fn leading_scalar_type(&self) -> Option<ScalarType> {
        let mut words = Vec::new();
        let mut k = self.pos;
        while let TokenKind::Ident(w) = &self.toks[k].kind {
            if !TYPE_WORDS.contains(&w.as_str()) {
                break;
            }
            if w != "const" {
                words.push(w.as_str());
            }
            k += 1;
        }
        base_type(&words)
    }

    fn peek_is_type_word(&self) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(w) if TYPE_WORDS.contains(&w.as_str()))
    }

    fn try_stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().span.start;
        match self.peek().kind.clone() {
            TokenKind::Punct("{") => {
                self.bump();
                self.f.scopes.push(HashMap::new());
                let mut stmts = Vec::new();
                while !self.is_punct("}") {
                    if self.at_eof() {
                        return Err(Fail::Syntax(FrontendError::syntax(self.text, start, "unclosed `{`")));
                    }
                    stmts.push(self.stmt()?);
                }
                let end = self.bump().span.end;
                self.f.scopes.pop();
                let id = self.stmt_id();
                Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::Block(stmts) })
            }
            TokenKind::Punct(";") => {
                let end = self.bump().span.end;
                let id = self.stmt_id();
                Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::Block(vec![]) })
            }
            TokenKind::Directive(text) => {
                let span = self.peek().span;
                if self.is_for_at(1) {
                    if let Some(pragma) = OmpPragma::from_directive(&text, span) {
                        self.bump();
                        return self.for_stmt(Some(pragma));
                    }
                }
                Err(Fail::Subset("preprocessor directive".into()))
            }
            TokenKind::Ident(w) => match w.as_str() {
                "for" => self.for_stmt(None),
                "if" => self.if_stmt(),
                "int" | "long" | "float" | "double" | "const" => self.decl_stmt(),
                w if is_keyword(w) => Err(Fail::Subset(format!("`{w}` statement"))),
                _ => self.expr_stmt(),
            },
            TokenKind::Punct("++") | TokenKind::Punct("--") => self.expr_stmt(),
            TokenKind::Punct("}") => Err(Fail::Syntax(self.syntax_here("unexpected `}`"))),
            TokenKind::Eof => Err(Fail::Syntax(self.syntax_here("unexpected end of input"))),
            _ => Err(Fail::Subset("unsupported statement".into())),
        }
    }

    fn is_for_at(&self, k: usize) -> bool {
        matches!(&self.peek_at(k).kind, TokenKind::Ident(w) if w == "for")
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.bump().span.start;
        self.want_punct("(")?;
        let cond = self.expr()?;
        self.want_punct(")")?;
        let then_branch = Box::new(self.scoped_stmt()?);
        let else_branch = if self.is_ident("else") {
            self.bump();
            Some(Box::new(self.scoped_stmt()?))
        } else {
            None
        };
        let end = self.prev_end();
        let id = self.stmt_id();
        Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::If { cond, then_branch, else_branch } })
    }

    fn scoped_stmt(&mut self) -> PResult<Stmt> {
        self.f.scopes.push(HashMap::new());
        let s = self.stmt();
        self.f.scopes.pop();
        s
    }

    fn parse_type(&mut self) -> PResult<ScalarType> {
        let mut words = Vec::new();
        while let TokenKind::Ident(w) = &self.peek().kind {
            if TYPE_WORDS.contains(&w.as_str()) {
                words.push(w.clone());
                self.bump();
            } else {
                break;
            }
        }
        let core: Vec<&str> = words.iter().map(String::as_str).filter(|w| *w != "const").collect();
        base_type(&core).ok_or_else(|| Fail::Subset("unsupported type".into()))
    }

    fn decl_stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().span.start;
        let base = self.parse_type()?;
        let id = self.stmt_id();
        let mut decls = Vec::new();
        loop {
            if self.is_punct("*") {
                return Err(Fail::Subset("local pointer declaration".into()));
            }
            let (name, nspan) = self.ident()?;
            let mut dims = Vec::new();
            while self.is_punct("[") {
                self.bump();
                dims.push(self.expr()?);
                self.want_punct("]")?;
            }
            let init = if self.is_punct("=") {
                self.bump();
                if self.is_punct("{") {
                    return Err(Fail::Subset("aggregate initializer".into()));
                }
                Some(self.expr()?)
            } else {
                None
            };
            let ty = CType::scalar(base);
            let sym = self.declare(&name, Some(ty), SymbolKind::Local, dims.clone(), Some(id));
            decls.push(Declarator { name, sym, ty, dims, init, span: Span::new(nspan.start, self.prev_end()) });
            if self.is_punct(",") {
                self.bump();
                continue;
            }
            break;
        }
        let end = self.want_punct(";")?.end;
        Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::Decl(decls) })
    }

    fn expr_stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().span.start;
        if self.is_punct("++") || self.is_punct("--") {
            let optok = self.bump();
            let target = self.postfix()?;
            check_lvalue(&target)?;
            let end = self.want_punct(";")?.end;
            let op = if optok.kind == TokenKind::Punct("++") { BinOp::Add } else { BinOp::Sub };
            let value = Expr { span: optok.span, kind: ExprKind::Int(1) };
            let id = self.stmt_id();
            return Ok(Stmt { id, span: Span::new(start, end), kind: StmtKind::CompoundAssign { target, op, value } });
        }
        let target = self.postfix()?;
        let kind = match self.peek().kind.clone() {
            TokenKind::Punct("=") => {
                check_lvalue(&target)?;
                self.bump();
                let value = self.expr()?;
                StmtKind::Assign { target, value }
            }
            TokenKind::Punct(p @ ("+=" | "-=" | "*=" | "/=" | "%=" | "&=" | "|=" | "^=" | "<<=" | ">>=")) => {
                check_lvalue(&target)?;
                self.bump();
                let op = compound_op(p);
                let value = self.expr()?;
                StmtKind::CompoundAssign { target, op, value }
            }
            TokenKind::Punct(p @ ("++" | "--")) => {
                check_lvalue(&target)?;
                let span = self.bump().span;
                let op = if p == "++" { BinOp::Add } else { BinOp::Sub };
                StmtKind::CompoundAssign { target, op, value: Expr { span, kind: ExprKind::Int(1) } }
            }
            _ => return Err(Fail::Subset("expression statement without assignment".into())),
        };
        let end = self.want_punct(";")?.end;
        let id = self.stmt_id();
        Ok(Stmt { id, span: Span::new(start, end), kind })
    }

    fn for_stmt(&mut self, pragma: Option<OmpPragma>) -> PResult<Stmt> {
        let for_tok = self.bump();
        let start = pragma.as_ref().map_or(for_tok.span.start, |p| p.span.start);
        let loop_start = for_tok.span.start;
        if !self.is_punct("(") {
            return Err(Fail::Syntax(self.syntax_here("expected `(` after `for`")));
        }
        let open = self.pos;
        let close = self.matching_close(open)?;
        let semis: Vec<usize> = (open + 1..close)
            .filter(|&k| matches!(self.toks[k].kind, TokenKind::Punct(";")) && self.depth_between(open + 1, k) == 0)
            .collect();
        if semis.len() != 2 {
            return Err(Fail::Syntax(FrontendError::syntax(
                self.text,
                self.toks[open].span.start,
                "malformed for-loop header: expected `init; condition; step`",
            )));
        }
        let header_span = Span::new(loop_start, self.toks[close].span.end);
        let loop_id = LoopId(self.next_loop);
        self.next_loop += 1;
        self.f.scopes.push(HashMap::new());
        self.bump();

        // init
        let (ind, ind_name, declares, lower_expr) = if self.peek_is_type_word() {
            let base = self.parse_type()?;
            if !matches!(base, ScalarType::Int | ScalarType::Long) {
                return Err(Fail::Subset("non-integer induction variable".into()));
            }
            let (name, _) = self.ident()?;
            self.want_punct("=")?;
            let init = self.expr()?;
            let sym = self.declare(&name, Some(CType::scalar(base)), SymbolKind::Local, vec![], None);
            (sym, name, true, init)
        } else {
            let (name, _) = self.ident()?;
            let sym = self.resolve(&name);
            self.want_punct("=")?;
            let init = self.expr()?;
            (sym, name, false, init)
        };
        self.want_punct(";")?;
        if self.pos != semis[0] + 1 {
            return Err(Fail::Subset("non-canonical loop init".into()));
        }

        // condition
        let cond = self.expr()?;
        self.want_punct(";")?;
        // step
        let step = self.loop_step(ind)?;
        if self.pos != close {
            return Err(Fail::Subset("non-canonical loop step".into()));
        }
        self.bump();

        let (bound_expr, cmp) = loop_condition(&cond, ind).ok_or_else(|| Fail::Subset("non-canonical loop condition".into()))?;
        let ind_ty = self_type(&self.f.symbols[ind.0 as usize]);
        if !matches!(ind_ty, Some(ScalarType::Int | ScalarType::Long)) {
            return Err(Fail::Subset("induction variable is not an integer".into()));
        }
        // The body is parsed with symbols as they are now; affine bounds are
        // computed once the function's symbol table exists, see `finish_bounds`.
        let body = Box::new(self.stmt()?);
        self.f.scopes.pop();
        let end = self.prev_end();
        let func_view = FunctionView { symbols: &self.f.symbols };
        let init_aff = func_view.affine(&lower_expr);
        let bound_aff = func_view.affine(&bound_expr);
        let (lower, upper) = match (step > 0, cmp) {
            (true, LoopCmp::Lt) | (true, LoopCmp::Ne) => (init_aff, bound_aff),
            (true, LoopCmp::Le) => (init_aff, bound_aff.map(|b| b.add(&AffineExpr::constant(1)))),
            (false, LoopCmp::Ge) => (bound_aff, init_aff.map(|b| b.add(&AffineExpr::constant(1)))),
            (false, LoopCmp::Gt) | (false, LoopCmp::Ne) => (
                bound_aff.map(|b| b.add(&AffineExpr::constant(1))),
                init_aff.map(|b| b.add(&AffineExpr::constant(1))),
            ),
            _ => return Err(Fail::Subset("loop condition does not match step direction".into())),
        };
        let id = self.stmt_id();
        Ok(Stmt {
            id,
            span: Span::new(start, end),
            kind: StmtKind::For(ForLoop {
                id: loop_id,
                induction: ind,
                induction_name: ind_name,
                declares_induction: declares,
                lower_expr,
                upper_expr: bound_expr,
                lower,
                upper,
                step,
                body,
                header_span,
                pragma,
            }),
        })
    }

    fn depth_between(&self, from: usize, to: usize) -> i32 {
        let mut d = 0;
        for t in &self.toks[from..to] {
            match t.kind {
                TokenKind::Punct("(" | "[" | "{") => d += 1,
                TokenKind::Punct(")" | "]" | "}") => d -= 1,
                _ => {}
            }
        }
        d
    }

    fn loop_step(&mut self, ind: SymbolId) -> PResult<i64> {
        if self.is_punct("++") || self.is_punct("--") {
            let up = self.bump().kind == TokenKind::Punct("++");
            let (name, _) = self.ident()?;
            if self.lookup(&name) != Some(ind) {
                return Err(Fail::Subset("step updates another variable".into()));
            }
            return Ok(if up { 1 } else { -1 });
        }
        let (name, _) = self.ident()?;
        if self.lookup(&name) != Some(ind) {
            return Err(Fail::Subset("step updates another variable".into()));
        }
        match self.bump().kind {
            TokenKind::Punct("++") => Ok(1),
            TokenKind::Punct("--") => Ok(-1),
            TokenKind::Punct(p @ ("+=" | "-=")) => {
                let e = self.expr()?;
                let c = const_int(&e).ok_or_else(|| Fail::Subset("non-constant step".into()))?;
                if c == 0 {
                    return Err(Fail::Subset("zero step".into()));
                }
                Ok(if p == "+=" { c } else { -c })
            }
            TokenKind::Punct("=") => {
                let e = self.expr()?;
                match &e.kind {
                    ExprKind::Binary { op: op @ (BinOp::Add | BinOp::Sub), lhs, rhs } if lhs.as_var() == Some(ind) => {
                        let c = const_int(rhs).ok_or_else(|| Fail::Subset("non-constant step".into()))?;
                        if c == 0 {
                            return Err(Fail::Subset("zero step".into()));
                        }
                        Ok(if *op == BinOp::Add { c } else { -c })
                    }
                    _ => Err(Fail::Subset("non-canonical loop step".into())),
                }
            }
            _ => Err(Fail::Subset("non-canonical loop step".into())),
        }
    }

    // ---- expressions ---------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(0)?;
        if self.is_punct("?") {
            self.bump();
            let then_expr = self.expr()?;
            self.want_punct(":")?;
            let else_expr = self.expr()?;
            let span = cond.span.to(else_expr.span);
            return Ok(Expr {
                span,
                kind: ExprKind::Ternary { cond: Box::new(cond), then_expr: Box::new(then_expr), else_expr: Box::new(else_expr) },
            });
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let (op, prec) = match &self.peek().kind {
                TokenKind::Punct(p) => match binop_info(p) {
                    Some(x) => x,
                    None => break,
                },
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { span, kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) } };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.peek().span;
        match self.peek().kind {
            TokenKind::Punct("-") | TokenKind::Punct("!") | TokenKind::Punct("~") => {
                let op = match self.bump().kind {
                    TokenKind::Punct("-") => UnOp::Neg,
                    TokenKind::Punct("!") => UnOp::Not,
                    _ => UnOp::BitNot,
                };
                let operand = self.unary()?;
                if let (UnOp::Neg, ExprKind::Int(v)) = (op, &operand.kind) {
                    return Ok(Expr { span: start.to(operand.span), kind: ExprKind::Int(-v) });
                }
                if let (UnOp::Neg, ExprKind::Float { value, single }) = (op, &operand.kind) {
                    return Ok(Expr { span: start.to(operand.span), kind: ExprKind::Float { value: -value, single: *single } });
                }
                Ok(Expr { span: start.to(operand.span), kind: ExprKind::Unary { op, operand: Box::new(operand) } })
            }
            TokenKind::Punct("+") => {
                self.bump();
                self.unary()
            }
            TokenKind::Punct("(") if self.peek_at(1).kind.is_type_word() => {
                self.bump();
                let base = self.parse_type()?;
                let mut ptr = 0;
                while self.is_punct("*") {
                    self.bump();
                    ptr += 1;
                }
                if ptr > 0 {
                    return Err(Fail::Subset("pointer cast".into()));
                }
                self.want_punct(")")?;
                let inner = self.unary()?;
                Ok(Expr { span: start.to(inner.span), kind: ExprKind::Cast { ty: CType::scalar(base), expr: Box::new(inner) } })
            }
            TokenKind::Punct(p @ ("*" | "&" | "++" | "--")) => Err(Fail::Subset(format!("unary `{p}`"))),
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("[") {
                self.bump();
                let index = self.expr()?;
                let end = self.want_punct("]")?.end;
                e = Expr { span: Span::new(e.span.start, end), kind: ExprKind::Index { base: Box::new(e), index: Box::new(index) } };
            } else if self.is_punct("(") {
                let name = match &e.kind {
                    ExprKind::Var { name, .. } => name.clone(),
                    _ => return Err(Fail::Subset("indirect call".into())),
                };
                if !PURE_FUNCTIONS.contains(&name.as_str()) {
                    return Err(Fail::Subset(format!("call to `{name}`")));
                }
                self.bump();
                let mut args = Vec::new();
                while !self.is_punct(")") {
                    args.push(self.expr()?);
                    if self.is_punct(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let end = self.want_punct(")")?.end;
                e = Expr { span: Span::new(e.span.start, end), kind: ExprKind::Call { name, args } };
            } else if self.is_punct(".") || self.is_punct("->") {
                return Err(Fail::Subset("member access".into()));
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match t.kind {
            TokenKind::Int(v) | TokenKind::Char(v) => {
                self.bump();
                Ok(Expr { span: t.span, kind: ExprKind::Int(v) })
            }
            TokenKind::Float { value, single } => {
                self.bump();
                Ok(Expr { span: t.span, kind: ExprKind::Float { value, single } })
            }
            TokenKind::Ident(ref w) if !is_keyword(w) => {
                self.bump();
                let is_call = self.is_punct("(");
                let sym = if is_call && self.lookup(w).is_none() {
                    // Function names are not variables; resolve lazily so
                    // calls do not create spurious globals.
                    SymbolId(u32::MAX)
                } else {
                    self.resolve(w)
                };
                Ok(Expr { span: t.span, kind: ExprKind::Var { name: w.clone(), sym } })
            }
            TokenKind::Punct("(") => {
                self.bump();
                let inner = self.expr()?;
                let close = self.want_punct(")")?;
                // Parentheses widen the span but are otherwise transparent.
                Ok(Expr { span: Span::new(t.span.start, close.end), kind: inner.kind })
            }
            TokenKind::Str => Err(Fail::Subset("string literal".into())),
            _ => Err(Fail::Subset("unsupported expression".into())),
        }
    }

    // ---- skipping ------------------------------------------------------

    /// Consumes one statement without interpreting it. Returns the end offset.
    fn skip_statement(&mut self) -> Result<usize, FrontendError> {
        match self.peek().kind.clone() {
            TokenKind::Punct("{") => self.skip_balanced_block(),
            TokenKind::Directive(text) => {
                let t = self.bump();
                if self.is_for_at(0) && ParallelForClauses::parse(&text).is_some() {
                    return self.skip_statement();
                }
                Ok(t.span.end)
            }
            TokenKind::Ident(w) if matches!(w.as_str(), "while" | "for" | "switch") => {
                self.bump();
                if !self.is_punct("(") {
                    return Err(self.syntax_here(format!("expected `(` after `{w}`")));
                }
                let close = self.matching_close(self.pos)?;
                self.pos = close + 1;
                self.skip_statement()
            }
            TokenKind::Ident(w) if w == "if" => {
                self.bump();
                if !self.is_punct("(") {
                    return Err(self.syntax_here("expected `(` after `if`"));
                }
                let close = self.matching_close(self.pos)?;
                self.pos = close + 1;
                let mut end = self.skip_statement()?;
                if self.is_ident("else") {
                    self.bump();
                    end = self.skip_statement()?;
                }
                Ok(end)
            }
            TokenKind::Ident(w) if w == "do" => {
                self.bump();
                self.skip_statement()?;
                if !self.is_ident("while") {
                    return Err(self.syntax_here("expected `while` after `do` body"));
                }
                self.bump();
                let close = self.matching_close(self.pos)?;
                self.pos = close + 1;
                Ok(self.expect_punct(";").map_err(fail_to_err)?.end)
            }
            _ => {
                let mut stack = Brackets::default();
                loop {
                    let t = self.bump();
                    match t.kind {
                        TokenKind::Punct(";") if stack.is_empty() => return Ok(t.span.end),
                        TokenKind::Eof => {
                            return Err(stack
                                .unclosed(self.text)
                                .unwrap_or_else(|| FrontendError::syntax(self.text, t.span.start, "unexpected end of input")))
                        }
                        _ => {
                            stack.feed(self.text, &t)?;
                            // `struct s { ... };` and similar end with a brace.
                            if t.kind == TokenKind::Punct("}") && stack.is_empty() && self.is_punct(";") {
                                return Ok(self.bump().span.end);
                            }
                        }
                    }
                }
            }
        }
    }

    fn skip_balanced_block(&mut self) -> Result<usize, FrontendError> {
        let close = self.matching_close(self.pos)?;
        self.pos = close + 1;
        Ok(self.toks[close].span.end)
    }
}

/// Bracket matcher that reports the unclosed opener rather than the
/// closer that exposed it.
#[derive(Default)]
struct Brackets {
    open: Vec<(&'static str, usize)>,
}

impl Brackets {
    fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    fn feed(&mut self, text: &str, t: &Token) -> Result<(), FrontendError> {
        match t.kind {
            TokenKind::Punct(p @ ("(" | "[" | "{")) => self.open.push((p, t.span.start)),
            TokenKind::Punct(p @ (")" | "]" | "}")) => {
                let want = match p {
                    ")" => "(",
                    "]" => "[",
                    _ => "{",
                };
                match self.open.pop() {
                    Some((q, _)) if q == want => {}
                    Some((q, at)) => return Err(FrontendError::syntax(text, at, format!("unclosed `{q}`"))),
                    None => return Err(FrontendError::syntax(text, t.span.start, format!("unbalanced `{p}`"))),
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn unclosed(&self, text: &str) -> Option<FrontendError> {
        self.open.last().map(|(q, at)| FrontendError::syntax(text, *at, format!("unclosed `{q}`")))
    }
}

fn fail_to_err(f: Fail) -> FrontendError {
    match f {
        Fail::Syntax(e) => e,
        Fail::Subset(m) => FrontendError::Syntax { line: 0, column: 0, message: m },
    }
}

impl TokenKind {
    fn is_type_word(&self) -> bool {
        matches!(self, TokenKind::Ident(w) if TYPE_WORDS.contains(&w.as_str()) && !matches!(w.as_str(), "static" | "extern" | "inline"))
    }
}

fn base_type(words: &[&str]) -> Option<ScalarType> {
    match words {
        ["int"] | ["signed"] | ["signed", "int"] => Some(ScalarType::Int),
        ["long"] | ["long", "int"] | ["long", "long"] | ["long", "long", "int"] => Some(ScalarType::Long),
        ["float"] => Some(ScalarType::Float),
        ["double"] => Some(ScalarType::Double),
        _ => None,
    }
}

fn self_type(s: &Symbol) -> Option<ScalarType> {
    s.ty.filter(|t| !t.is_pointer()).map(|t| t.base)
}

fn check_lvalue(e: &Expr) -> PResult<()> {
    match &e.kind {
        ExprKind::Var { .. } => Ok(()),
        ExprKind::Index { .. } if e.as_array_ref().is_some() => Ok(()),
        _ => Err(Fail::Subset("unsupported assignment target".into())),
    }
}

fn compound_op(p: &str) -> BinOp {
    match p {
        "+=" => BinOp::Add,
        "-=" => BinOp::Sub,
        "*=" => BinOp::Mul,
        "/=" => BinOp::Div,
        "%=" => BinOp::Rem,
        "&=" => BinOp::BitAnd,
        "|=" => BinOp::BitOr,
        "^=" => BinOp::BitXor,
        "<<=" => BinOp::Shl,
        _ => BinOp::Shr,
    }
}

fn binop_info(p: &str) -> Option<(BinOp, u8)> {
    Some(match p {
        "||" => (BinOp::Or, 1),
        "&&" => (BinOp::And, 2),
        "|" => (BinOp::BitOr, 3),
        "^" => (BinOp::BitXor, 4),
        "&" => (BinOp::BitAnd, 5),
        "==" => (BinOp::Eq, 6),
        "!=" => (BinOp::Ne, 6),
        "<" => (BinOp::Lt, 7),
        ">" => (BinOp::Gt, 7),
        "<=" => (BinOp::Le, 7),
        ">=" => (BinOp::Ge, 7),
        "<<" => (BinOp::Shl, 8),
        ">>" => (BinOp::Shr, 8),
        "+" => (BinOp::Add, 9),
        "-" => (BinOp::Sub, 9),
        "*" => (BinOp::Mul, 10),
        "/" => (BinOp::Div, 10),
        "%" => (BinOp::Rem, 10),
        _ => return None,
    })
}

fn const_int(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprKind::Int(v) => Some(*v),
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum LoopCmp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

/// Normalizes the loop condition to `ind CMP bound`.
fn loop_condition(cond: &Expr, ind: SymbolId) -> Option<(Expr, LoopCmp)> {
    let ExprKind::Binary { op, lhs, rhs } = &cond.kind else { return None };
    let flip = |c: LoopCmp| match c {
        LoopCmp::Lt => LoopCmp::Gt,
        LoopCmp::Le => LoopCmp::Ge,
        LoopCmp::Gt => LoopCmp::Lt,
        LoopCmp::Ge => LoopCmp::Le,
        LoopCmp::Ne => LoopCmp::Ne,
    };
    let cmp = match op {
        BinOp::Lt => LoopCmp::Lt,
        BinOp::Le => LoopCmp::Le,
        BinOp::Gt => LoopCmp::Gt,
        BinOp::Ge => LoopCmp::Ge,
        BinOp::Ne => LoopCmp::Ne,
        _ => return None,
    };
    if lhs.as_var() == Some(ind) && !rhs.mentions(ind) {
        Some(((**rhs).clone(), cmp))
    } else if rhs.as_var() == Some(ind) && !lhs.mentions(ind) {
        Some(((**lhs).clone(), flip(cmp)))
    } else {
        None
    }
}

/// Borrowed symbol table used to compute affine bounds mid-parse.
struct FunctionView<'a> {
    symbols: &'a [Symbol],
}

impl FunctionView<'_> {
    fn affine(&self, e: &Expr) -> Option<AffineExpr> {
        AffineExpr::from_expr_in(e, self.symbols)
    }
}
