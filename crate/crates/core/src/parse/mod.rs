//! Text front end for KIR.

mod lexer;

use std::fmt;

use thiserror::Error;

use crate::kir::{
    BinOp, Block, CallArg, CmpPred, Extern, ExternParam, Field, Function, Global, Inst, Module,
    Op, Operand, Param, Ty, TypeDef,
};
use lexer::{lex, Tok, Token};

/// 1-based source coordinates; `col_end` is inclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl SourceSpan {
    pub fn new(file: &str, line: usize, col_start: usize, col_end: usize) -> Self {
        SourceSpan {
            file: file.to_string(),
            line,
            col_start,
            col_end: col_end.max(col_start),
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col_start)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{span}: expected {expected}, found {found}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub fn new(span: SourceSpan, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError {
            span,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

pub const DEFAULT_FILE: &str = "<input>";

pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    parse_module_named(text, DEFAULT_FILE)
}

pub fn parse_module_named(text: &str, file: &str) -> Result<Module, ParseError> {
    let tokens = lex(text, file)?;
    Parser { tokens, pos: 0 }.module()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: impl Into<String>) -> PResult<T> {
        Err(ParseError::new(self.span(), expected, self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.error(format!("'{}'", tok.describe()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("'{kw}'"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(what.to_string()),
        }
    }

    fn global_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Global(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("'@' name"),
        }
    }

    fn local_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Local(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("'%' name"),
        }
    }

    fn label(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Label(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("'^' label"),
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => self.error("end of line"),
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn module(mut self) -> PResult<Module> {
        let mut m = Module::default();
        loop {
            self.skip_newlines();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "refclass" => {
                        self.bump();
                        let name = self.ident("refcount class name")?;
                        m.ref_classes.push(name);
                        self.end_of_line()?;
                    }
                    "type" => {
                        let t = self.typedef()?;
                        m.types.push(t);
                    }
                    "global" => {
                        self.bump();
                        let name = self.global_name()?;
                        self.expect(Tok::Colon)?;
                        let ty = self.ty()?;
                        m.globals.push(Global { name, ty });
                        self.end_of_line()?;
                    }
                    "extern" => {
                        let e = self.extern_decl()?;
                        m.externs.push(e);
                    }
                    "entry" => {
                        self.bump();
                        let name = self.ident("entry function name")?;
                        if m.entry.is_some() {
                            return Err(ParseError::new(
                                self.tokens[self.pos - 1].span.clone(),
                                "at most one entry declaration",
                                name,
                            ));
                        }
                        m.entry = Some(name);
                        self.end_of_line()?;
                    }
                    "fn" => {
                        let f = self.function()?;
                        m.functions.push(f);
                    }
                    _ => return self.error("an item (type, refclass, global, extern, entry, fn)"),
                },
                _ => return self.error("an item (type, refclass, global, extern, entry, fn)"),
            }
        }
        Ok(m)
    }

    fn typedef(&mut self) -> PResult<TypeDef> {
        self.keyword("type")?;
        let name = self.ident("aggregate name")?;
        let open = self.expect(Tok::LBrace)?.span;
        let unterminated = |p: &Parser| {
            Err(ParseError::new(
                open.clone(),
                "'}' closing this aggregate",
                p.peek().describe(),
            ))
        };
        let mut fields = Vec::new();
        self.skip_newlines();
        if !self.eat(&Tok::RBrace) {
            loop {
                self.skip_newlines();
                if !matches!(self.peek(), Tok::Ident(_)) {
                    return if fields.is_empty() || *self.peek() == Tok::Eof {
                        unterminated(self)
                    } else {
                        self.error("field name")
                    };
                }
                let fname = self.ident("field name")?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                fields.push(Field { name: fname, ty });
                self.skip_newlines();
                if self.eat(&Tok::Comma) {
                    continue;
                }
                if self.eat(&Tok::RBrace) {
                    break;
                }
                return unterminated(self);
            }
        }
        let mut kref_path = None;
        if self.is_keyword("kref") {
            self.bump();
            kref_path = Some(self.field_path()?);
        }
        self.end_of_line()?;
        Ok(TypeDef {
            name,
            fields,
            kref_path,
        })
    }

    fn field_path(&mut self) -> PResult<Vec<String>> {
        let mut path = vec![self.ident("field name")?];
        while self.eat(&Tok::Dot) {
            path.push(self.ident("field name")?);
        }
        Ok(path)
    }

    fn ty(&mut self) -> PResult<Ty> {
        let Tok::Ident(name) = self.peek().clone() else {
            return self.error("a type");
        };
        let span = self.span();
        self.bump();
        Ok(match name.as_str() {
            "void" => Ty::Void,
            "kref_t" => Ty::Kref,
            "token_t" => Ty::Token,
            "ptr" => {
                if self.eat(&Tok::Lt) {
                    let inner = self.ty()?;
                    self.expect(Tok::Gt)?;
                    Ty::ptr_to(inner)
                } else {
                    Ty::Ptr(None)
                }
            }
            s if s.len() > 1 && s.starts_with('i') && s[1..].bytes().all(|b| b.is_ascii_digit()) => {
                match s[1..].parse::<u32>() {
                    Ok(w) if (1..=64).contains(&w) => Ty::Int(w),
                    _ => return Err(ParseError::new(span, "integer width between 1 and 64", s)),
                }
            }
            _ => Ty::Agg(name),
        })
    }

    fn extern_decl(&mut self) -> PResult<Extern> {
        self.keyword("extern")?;
        let name = self.ident("extern name")?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let ty = self.ty()?;
                let writeonly = self.writeonly();
                params.push(ExternParam { ty, writeonly });
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        self.expect(Tok::Arrow)?;
        let ret = self.ty()?;
        self.end_of_line()?;
        Ok(Extern { name, params, ret })
    }

    fn writeonly(&mut self) -> bool {
        if self.is_keyword("writeonly") {
            self.bump();
            true
        } else {
            false
        }
    }

    fn function(&mut self) -> PResult<Function> {
        self.keyword("fn")?;
        let name = self.global_name()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let pname = self.local_name()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                let writeonly = self.writeonly();
                params.push(Param {
                    name: pname,
                    ty,
                    writeonly,
                });
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        self.expect(Tok::Arrow)?;
        let ret = self.ty()?;
        self.expect(Tok::LBrace)?;
        self.end_of_line()?;
        let mut blocks: Vec<Block> = Vec::new();
        loop {
            self.skip_newlines();
            match self.peek() {
                Tok::RBrace => {
                    if blocks.is_empty() {
                        return self.error("'^' label starting a block");
                    }
                    self.bump();
                    self.end_of_line()?;
                    break;
                }
                Tok::Label(_) => {
                    let label = self.label()?;
                    self.expect(Tok::Colon)?;
                    self.end_of_line()?;
                    blocks.push(Block::new(label));
                }
                _ => {
                    let Some(block) = blocks.last_mut() else {
                        return self.error("'^' label starting a block");
                    };
                    let inst = Self::inst(self)?;
                    block.insts.push(inst);
                    self.end_of_line()?;
                }
            }
        }
        Ok(Function {
            name,
            params,
            ret,
            blocks,
        })
    }

    fn operand(&mut self) -> PResult<Operand> {
        let op = match self.peek().clone() {
            Tok::Local(v) => Operand::Value(v),
            Tok::Global(g) => Operand::Global(g),
            Tok::Int(i) => Operand::Int(i),
            Tok::Ident(s) if s == "null" => Operand::Null,
            _ => return self.error("an operand"),
        };
        self.bump();
        Ok(op)
    }

    /// Operand whose literal form (if any) must fit `ty`.
    fn typed_operand(&mut self, ty: &Ty) -> PResult<Operand> {
        let span = self.span();
        let op = self.operand()?;
        if let Operand::Int(v) = op {
            if ty.is_int() && !ty.fits_literal(v) {
                return Err(ParseError::new(span, format!("literal fitting {ty}"), v.to_string()));
            }
        }
        Ok(op)
    }

    fn int_literal(&mut self) -> PResult<i64> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(i)
            }
            _ => self.error("integer literal"),
        }
    }

    fn inst(&mut self) -> PResult<Inst> {
        let mut result = None;
        if matches!(self.peek(), Tok::Local(_)) && *self.peek_at(1) == Tok::Eq {
            result = Some(self.local_name()?);
            self.bump();
        }
        let op = self.op()?;
        Ok(Inst::new(result, op))
    }

    fn op(&mut self) -> PResult<Op> {
        let Tok::Ident(mnemonic) = self.peek().clone() else {
            return self.error("an instruction");
        };
        if let Some(bin) = BinOp::from_mnemonic(&mnemonic) {
            self.bump();
            let ty = self.ty()?;
            let lhs = self.typed_operand(&ty)?;
            self.expect(Tok::Comma)?;
            let rhs = self.typed_operand(&ty)?;
            return Ok(Op::Bin {
                op: bin,
                ty,
                lhs,
                rhs,
            });
        }
        let op = match mnemonic.as_str() {
            "alloca" => {
                self.bump();
                Op::Alloca(self.ty()?)
            }
            "load" => {
                self.bump();
                let ty = self.ty()?;
                self.expect(Tok::Comma)?;
                let addr = self.operand()?;
                Op::Load { ty, addr }
            }
            "store" => {
                self.bump();
                let ty = self.ty()?;
                let value = self.typed_operand(&ty)?;
                self.expect(Tok::Comma)?;
                let addr = self.operand()?;
                Op::Store { ty, value, addr }
            }
            "fieldaddr" => {
                self.bump();
                let agg = self.ident("aggregate name")?;
                self.expect(Tok::Comma)?;
                let base = self.operand()?;
                self.expect(Tok::Comma)?;
                let path = self.field_path()?;
                Op::FieldAddr { agg, base, path }
            }
            "call" => {
                self.bump();
                let ret = self.ty()?;
                let callee = self.global_name()?;
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        let value = self.operand()?;
                        let writeonly = self.writeonly();
                        args.push(CallArg { value, writeonly });
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RParen)?;
                        break;
                    }
                }
                Op::Call { ret, callee, args }
            }
            "br" => {
                self.bump();
                Op::Br(self.label()?)
            }
            "condbr" => {
                self.bump();
                let cond = self.operand()?;
                self.expect(Tok::Comma)?;
                let then_to = self.label()?;
                self.expect(Tok::Comma)?;
                let else_to = self.label()?;
                Op::CondBr {
                    cond,
                    then_to,
                    else_to,
                }
            }
            "switch" => {
                self.bump();
                let ty = self.ty()?;
                let value = self.typed_operand(&ty)?;
                self.expect(Tok::Comma)?;
                let default = self.label()?;
                self.expect(Tok::LBracket)?;
                let mut cases = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        let span = self.span();
                        let v = self.int_literal()?;
                        if !ty.fits_literal(v) {
                            return Err(ParseError::new(
                                span,
                                format!("literal fitting {ty}"),
                                v.to_string(),
                            ));
                        }
                        self.expect(Tok::Colon)?;
                        let l = self.label()?;
                        cases.push((v, l));
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RBracket)?;
                        break;
                    }
                }
                Op::Switch {
                    ty,
                    value,
                    default,
                    cases,
                }
            }
            "phi" => {
                self.bump();
                let ty = self.ty()?;
                let mut incoming = Vec::new();
                loop {
                    self.expect(Tok::LBracket)?;
                    let l = self.label()?;
                    self.expect(Tok::Colon)?;
                    let v = self.typed_operand(&ty)?;
                    self.expect(Tok::RBracket)?;
                    incoming.push((l, v));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                Op::Phi { ty, incoming }
            }
            "ret" => {
                self.bump();
                if self.is_keyword("void") {
                    self.bump();
                    Op::Ret(None)
                } else {
                    let ty = self.ty()?;
                    let v = self.typed_operand(&ty)?;
                    Op::Ret(Some((ty, v)))
                }
            }
            "cmp" => {
                self.bump();
                let pspan = self.span();
                let pname = self.ident("comparison predicate")?;
                let Some(pred) = CmpPred::from_mnemonic(&pname) else {
                    return Err(ParseError::new(
                        pspan,
                        "comparison predicate (eq, ne, slt, sle, sgt, sge)",
                        pname,
                    ));
                };
                let ty = self.ty()?;
                let lhs = self.typed_operand(&ty)?;
                self.expect(Tok::Comma)?;
                let rhs = self.typed_operand(&ty)?;
                Op::Cmp { pred, ty, lhs, rhs }
            }
            "cast" => {
                self.bump();
                let value = self.operand()?;
                self.keyword("to")?;
                let to = self.ty()?;
                Op::Cast { value, to }
            }
            "nondet" => {
                self.bump();
                Op::Nondet(self.ty()?)
            }
            "assert" => {
                self.bump();
                Op::Assert(self.operand()?)
            }
            "assume" => {
                self.bump();
                Op::Assume(self.operand()?)
            }
            "rc_inc" | "rc_dec" => {
                self.bump();
                let class = self.ident("refcount class")?;
                self.expect(Tok::Comma)?;
                let obj = self.operand()?;
                if mnemonic == "rc_inc" {
                    Op::RcInc { class, obj }
                } else {
                    Op::RcDec { class, obj }
                }
            }
            "rc_delta" => {
                self.bump();
                Op::RcDelta {
                    class: self.ident("refcount class")?,
                }
            }
            "asm" => {
                self.bump();
                let mnemonic = match self.peek().clone() {
                    Tok::Str(s) => {
                        self.bump();
                        s
                    }
                    _ => return self.error("quoted assembly mnemonic"),
                };
                let ty = self.ty()?;
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.operand()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RParen)?;
                        break;
                    }
                }
                Op::Asm { mnemonic, ty, args }
            }
            _ => return self.error("an instruction"),
        };
        Ok(op)
    }
}
