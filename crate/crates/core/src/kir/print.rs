//! Canonical text form. Items are emitted grouped by kind (refclasses,
//! types, globals, externs, entry, functions), each group in module order.

use std::fmt::{self, Write as _};

use super::{Block, Extern, Function, Inst, Module, Op, TypeDef};

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    let section = |out: &mut String, body: String| {
        if body.is_empty() {
            return;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&body);
    };

    let mut s = String::new();
    for c in &m.ref_classes {
        let _ = writeln!(s, "refclass {c}");
    }
    section(&mut out, s);

    let mut s = String::new();
    for t in &m.types {
        let _ = writeln!(s, "{}", TypeDefDisplay(t));
    }
    section(&mut out, s);

    let mut s = String::new();
    for g in &m.globals {
        let _ = writeln!(s, "global @{}: {}", g.name, g.ty);
    }
    section(&mut out, s);

    let mut s = String::new();
    for e in &m.externs {
        let _ = writeln!(s, "{}", ExternDisplay(e));
    }
    section(&mut out, s);

    if let Some(entry) = &m.entry {
        section(&mut out, format!("entry {entry}\n"));
    }

    for f in &m.functions {
        section(&mut out, print_function(f));
    }
    out
}

pub fn print_function(f: &Function) -> String {
    let mut s = String::new();
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| {
            if p.writeonly {
                format!("%{}: {} writeonly", p.name, p.ty)
            } else {
                format!("%{}: {}", p.name, p.ty)
            }
        })
        .collect();
    let _ = writeln!(s, "fn @{}({}) -> {} {{", f.name, params.join(", "), f.ret);
    for b in &f.blocks {
        s.push_str(&print_block(b));
    }
    s.push_str("}\n");
    s
}

fn print_block(b: &Block) -> String {
    let mut s = format!("^{}:\n", b.label);
    for inst in &b.insts {
        let _ = writeln!(s, "  {inst}");
    }
    s
}

struct TypeDefDisplay<'a>(&'a TypeDef);

impl fmt::Display for TypeDefDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.0;
        let fields: Vec<String> = t
            .fields
            .iter()
            .map(|fl| format!("{}: {}", fl.name, fl.ty))
            .collect();
        if fields.is_empty() {
            write!(f, "type {} {{}}", t.name)?;
        } else {
            write!(f, "type {} {{ {} }}", t.name, fields.join(", "))?;
        }
        if let Some(path) = &t.kref_path {
            write!(f, " kref {}", path.join("."))?;
        }
        Ok(())
    }
}

struct ExternDisplay<'a>(&'a Extern);

impl fmt::Display for ExternDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.0;
        let params: Vec<String> = e
            .params
            .iter()
            .map(|p| {
                if p.writeonly {
                    format!("{} writeonly", p.ty)
                } else {
                    p.ty.to_string()
                }
            })
            .collect();
        write!(f, "extern {}({}) -> {}", e.name, params.join(", "), e.ret)
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = &self.result {
            write!(f, "%{r} = ")?;
        }
        write!(f, "{}", self.op)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Alloca(t) => write!(f, "alloca {t}"),
            Op::Load { ty, addr } => write!(f, "load {ty}, {addr}"),
            Op::Store { ty, value, addr } => write!(f, "store {ty} {value}, {addr}"),
            Op::FieldAddr { agg, base, path } => {
                write!(f, "fieldaddr {agg}, {base}, {}", path.join("."))
            }
            Op::Call { ret, callee, args } => {
                let args: Vec<String> = args
                    .iter()
                    .map(|a| {
                        if a.writeonly {
                            format!("{} writeonly", a.value)
                        } else {
                            a.value.to_string()
                        }
                    })
                    .collect();
                write!(f, "call {ret} @{callee}({})", args.join(", "))
            }
            Op::Br(t) => write!(f, "br ^{t}"),
            Op::CondBr {
                cond,
                then_to,
                else_to,
            } => write!(f, "condbr {cond}, ^{then_to}, ^{else_to}"),
            Op::Switch {
                ty,
                value,
                default,
                cases,
            } => {
                let cases: Vec<String> = cases.iter().map(|(v, l)| format!("{v}: ^{l}")).collect();
                write!(f, "switch {ty} {value}, ^{default} [{}]", cases.join(", "))
            }
            Op::Phi { ty, incoming } => {
                let inc: Vec<String> = incoming
                    .iter()
                    .map(|(l, v)| format!("[^{l}: {v}]"))
                    .collect();
                write!(f, "phi {ty} {}", inc.join(", "))
            }
            Op::Ret(None) => f.write_str("ret void"),
            Op::Ret(Some((ty, v))) => write!(f, "ret {ty} {v}"),
            Op::Bin { op, ty, lhs, rhs } => write!(f, "{} {ty} {lhs}, {rhs}", op.mnemonic()),
            Op::Cmp { pred, ty, lhs, rhs } => {
                write!(f, "cmp {} {ty} {lhs}, {rhs}", pred.mnemonic())
            }
            Op::Cast { value, to } => write!(f, "cast {value} to {to}"),
            Op::Nondet(t) => write!(f, "nondet {t}"),
            Op::Assert(c) => write!(f, "assert {c}"),
            Op::Assume(c) => write!(f, "assume {c}"),
            Op::RcInc { class, obj } => write!(f, "rc_inc {class}, {obj}"),
            Op::RcDec { class, obj } => write!(f, "rc_dec {class}, {obj}"),
            Op::RcDelta { class } => write!(f, "rc_delta {class}"),
            Op::Asm { mnemonic, ty, args } => {
                let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                write!(f, "asm {:?} {ty} ({})", mnemonic, args.join(", "))
            }
        }
    }
}
