//! Well-formedness checks. Violations are returned as data.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use super::cfg::{cfg_predecessors, Cfg};
use super::{Function, InstId, Module, Op, Operand, Ty};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub function: Option<String>,
    pub block: Option<String>,
    /// Index of the instruction inside `block`.
    pub inst: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.function, &self.block, self.inst) {
            (Some(func), Some(b), Some(i)) => write!(f, "@{func} ^{b} #{i}: ")?,
            (Some(func), Some(b), None) => write!(f, "@{func} ^{b}: ")?,
            (Some(func), None, _) => write!(f, "@{func}: ")?,
            _ => f.write_str("module: ")?,
        }
        f.write_str(&self.message)
    }
}

pub fn validate(m: &Module) -> Vec<Violation> {
    validate_with_callees(m, &[])
}

/// Like [`validate`], additionally accepting calls to `extra_callees`
/// (for example registered model names) without a declaration.
pub fn validate_with_callees(m: &Module, extra_callees: &[&str]) -> Vec<Violation> {
    let mut v = Checker {
        m,
        extra: extra_callees.iter().copied().collect(),
        out: Vec::new(),
    };
    v.module();
    v.out
}

struct Checker<'a> {
    m: &'a Module,
    extra: HashSet<&'a str>,
    out: Vec<Violation>,
}

struct Loc<'a> {
    func: &'a str,
    block: &'a str,
    index: usize,
}

impl<'a> Checker<'a> {
    fn module_err(&mut self, msg: String) {
        self.out.push(Violation {
            function: None,
            block: None,
            inst: None,
            message: msg,
        });
    }

    fn func_err(&mut self, func: &str, block: Option<&str>, msg: String) {
        self.out.push(Violation {
            function: Some(func.to_string()),
            block: block.map(str::to_string),
            inst: None,
            message: msg,
        });
    }

    fn inst_err(&mut self, loc: &Loc, msg: String) {
        self.out.push(Violation {
            function: Some(loc.func.to_string()),
            block: Some(loc.block.to_string()),
            inst: Some(loc.index),
            message: msg,
        });
    }

    fn duplicates<'s>(names: impl Iterator<Item = &'s str>) -> Vec<&'s str> {
        let mut seen = HashSet::new();
        let mut dups = Vec::new();
        for n in names {
            if !seen.insert(n) && !dups.contains(&n) {
                dups.push(n);
            }
        }
        dups
    }

    /// Whether `ty` only names declared aggregates.
    fn resolves(&self, ty: &Ty) -> bool {
        match ty {
            Ty::Agg(name) => self.m.type_def(name).is_some(),
            Ty::Ptr(Some(inner)) => self.resolves(inner),
            _ => true,
        }
    }

    fn check_ty(&mut self, ty: &Ty, what: &str) -> bool {
        if self.resolves(ty) {
            true
        } else {
            self.module_err(format!("{what}: unknown type {ty}"));
            false
        }
    }

    fn module(&mut self) {
        let m = self.m;
        for d in Self::duplicates(m.ref_classes.iter().map(String::as_str)) {
            self.module_err(format!("refcount class {d} declared more than once"));
        }
        for d in Self::duplicates(m.types.iter().map(|t| t.name.as_str())) {
            self.module_err(format!("type {d} defined more than once"));
        }
        for d in Self::duplicates(m.globals.iter().map(|g| g.name.as_str())) {
            self.module_err(format!("global @{d} defined more than once"));
        }
        let callables = m
            .functions
            .iter()
            .map(|f| f.name.as_str())
            .chain(m.externs.iter().map(|e| e.name.as_str()));
        for d in Self::duplicates(callables) {
            self.module_err(format!("function {d} declared more than once"));
        }
        for t in &m.types {
            self.typedef(t);
        }
        self.recursive_aggregates();
        for g in &m.globals {
            if self.check_ty(&g.ty, &format!("global @{}", g.name)) && g.ty.is_void() {
                self.module_err(format!("global @{} has void type", g.name));
            }
        }
        for e in &m.externs {
            for p in &e.params {
                self.check_ty(&p.ty, &format!("extern {}", e.name));
            }
            self.check_ty(&e.ret, &format!("extern {}", e.name));
        }
        if let Some(entry) = &m.entry {
            if m.function(entry).is_none() {
                self.module_err(format!("entry function {entry} is not defined"));
            }
        }
        for f in &m.functions {
            self.function(f);
        }
    }

    fn typedef(&mut self, t: &super::TypeDef) {
        for d in Self::duplicates(t.fields.iter().map(|f| f.name.as_str())) {
            self.module_err(format!("type {}: field {d} declared more than once", t.name));
        }
        for f in &t.fields {
            if self.check_ty(&f.ty, &format!("type {} field {}", t.name, f.name)) && f.ty.is_void()
            {
                self.module_err(format!("type {} field {} has void type", t.name, f.name));
            }
        }
        if let Some(path) = &t.kref_path {
            match self.m.field_type(&t.name, path) {
                Some(Ty::Kref) => {}
                Some(other) => self.module_err(format!(
                    "type {}: kref path {} ends in {other}, not kref_t",
                    t.name,
                    path.join(".")
                )),
                None => self.module_err(format!(
                    "type {}: kref path {} does not name a field",
                    t.name,
                    path.join(".")
                )),
            }
        }
    }

    /// Aggregates may not contain themselves by value.
    fn recursive_aggregates(&mut self) {
        let m = self.m;
        for t in &m.types {
            let mut stack: Vec<&str> = t
                .fields
                .iter()
                .filter_map(|f| match &f.ty {
                    Ty::Agg(n) => Some(n.as_str()),
                    _ => None,
                })
                .collect();
            let mut seen = HashSet::new();
            while let Some(n) = stack.pop() {
                if n == t.name {
                    self.module_err(format!("type {} contains itself by value", t.name));
                    break;
                }
                if !seen.insert(n) {
                    continue;
                }
                if let Some(td) = m.type_def(n) {
                    for f in &td.fields {
                        if let Ty::Agg(inner) = &f.ty {
                            stack.push(inner);
                        }
                    }
                }
            }
        }
    }

    fn function(&mut self, f: &'a Function) {
        let name = f.name.as_str();
        if f.blocks.is_empty() {
            self.func_err(name, None, "function has no blocks".into());
            return;
        }
        for d in Self::duplicates(f.params.iter().map(|p| p.name.as_str())) {
            self.func_err(name, None, format!("parameter %{d} declared more than once"));
        }
        for p in &f.params {
            if self.check_ty(&p.ty, &format!("@{name} parameter %{}", p.name)) && !p.ty.is_scalar()
            {
                self.func_err(name, None, format!("parameter %{} must be a scalar", p.name));
            }
        }
        if !self.check_ty(&f.ret, &format!("@{name} return type"))
            || !(f.ret.is_void() || f.ret.is_scalar())
        {
            self.func_err(name, None, "return type must be void or a scalar".into());
        }
        for d in Self::duplicates(f.blocks.iter().map(|b| b.label.as_str())) {
            self.func_err(name, None, format!("block label ^{d} used more than once"));
        }

        let preds = cfg_predecessors(f);
        let entry = &f.blocks[0].label;
        if preds.get(entry).is_some_and(|p| !p.is_empty()) {
            self.func_err(name, Some(entry), "entry block has predecessors".into());
        }

        // SSA: every result defined once, never shadowing a parameter.
        let mut defined: HashSet<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
        for (id, inst) in f.instructions() {
            if let Some(r) = &inst.result {
                if !defined.insert(r) {
                    let loc = self.loc(f, id);
                    self.inst_err(&loc, format!("%{r} is assigned more than once"));
                }
            }
        }

        for (bi, b) in f.blocks.iter().enumerate() {
            match b.insts.last() {
                None => self.func_err(name, Some(&b.label), "block is empty".into()),
                Some(last) if !last.op.is_terminator() => self.func_err(
                    name,
                    Some(&b.label),
                    "block does not end in a terminator".into(),
                ),
                _ => {}
            }
            let terminators = b.insts.iter().filter(|i| i.op.is_terminator()).count();
            if terminators > 1 {
                self.func_err(
                    name,
                    Some(&b.label),
                    format!("block has {terminators} terminators"),
                );
            }
            let mut phi_section = true;
            for (ii, inst) in b.insts.iter().enumerate() {
                let loc = Loc {
                    func: name,
                    block: &b.label,
                    index: ii,
                };
                if let Op::Phi { incoming, .. } = &inst.op {
                    if !phi_section {
                        self.inst_err(&loc, "phi is not at the start of its block".into());
                    }
                    let listed: BTreeSet<&str> = incoming.iter().map(|(l, _)| l.as_str()).collect();
                    let expected: BTreeSet<&str> =
                        preds[&b.label].iter().map(String::as_str).collect();
                    if listed.len() != incoming.len() {
                        self.inst_err(&loc, "phi lists a predecessor more than once".into());
                    }
                    if listed != expected {
                        self.inst_err(
                            &loc,
                            format!(
                                "phi incoming blocks {:?} differ from predecessors {:?}",
                                listed, expected
                            ),
                        );
                    }
                } else {
                    phi_section = false;
                }
                for s in inst.op.successors() {
                    if f.block_index(s).is_none() {
                        self.inst_err(&loc, format!("branch to unknown block ^{s}"));
                    }
                }
                let _ = bi;
            }
        }

        self.operands_defined(f);
        self.types(f);
    }

    fn loc(&self, f: &'a Function, id: InstId) -> Loc<'a> {
        Loc {
            func: &f.name,
            block: &f.blocks[id.block].label,
            index: id.index,
        }
    }

    /// Every operand names a parameter, a dominating definition, a global
    /// or a literal.
    fn operands_defined(&mut self, f: &'a Function) {
        let defs = f.defs();
        let cfg = Cfg::new(f);
        let dom = cfg.dominators();
        for (id, inst) in f.instructions() {
            let loc = self.loc(f, id);
            let check = |v: &str, use_block: usize, use_index: Option<usize>| -> Option<String> {
                if f.param_index(v).is_some() {
                    return None;
                }
                let Some(def) = defs.get(v) else {
                    return Some(format!("use of undefined value %{v}"));
                };
                let ok = match use_index {
                    Some(ui) if def.block == use_block => def.index < ui,
                    None if def.block == use_block => true,
                    _ => dom.dominates(def.block, use_block),
                };
                (!ok).then(|| format!("definition of %{v} does not dominate its use"))
            };
            if let Op::Phi { incoming, .. } = &inst.op {
                for (label, value) in incoming {
                    let Some(v) = value.as_value() else { continue };
                    let Some(pred) = f.block_index(label) else {
                        continue;
                    };
                    if let Some(msg) = check(v, pred, None) {
                        self.inst_err(&loc, msg);
                    }
                }
            } else {
                for v in inst.op.used_values() {
                    if let Some(msg) = check(v, id.block, Some(id.index)) {
                        self.inst_err(&loc, msg);
                    }
                }
            }
            for op in inst.op.operands() {
                if let Operand::Global(g) = op {
                    if self.m.global(g).is_none() && self.m.function(g).is_none() {
                        self.inst_err(&loc, format!("unknown global @{g}"));
                    }
                }
            }
        }
    }

    fn expect_operand(
        &mut self,
        loc: &Loc,
        types: &HashMap<String, Ty>,
        op: &Operand,
        want: &Ty,
        what: &str,
    ) {
        let ok = match op {
            Operand::Int(v) => want.is_int() && want.fits_literal(*v),
            Operand::Null => want.is_ptr(),
            _ => match self.m.operand_type(types, op) {
                Some(t) => t.compatible(want),
                None => true,
            },
        };
        if !ok {
            self.inst_err(loc, format!("{what} {op} does not have type {want}"));
        }
    }

    fn expect_int(&mut self, loc: &Loc, types: &HashMap<String, Ty>, op: &Operand, what: &str) {
        let ok = match op {
            Operand::Int(_) => true,
            Operand::Null => false,
            _ => self
                .m
                .operand_type(types, op)
                .is_none_or(|t| t.is_int()),
        };
        if !ok {
            self.inst_err(loc, format!("{what} {op} is not an integer"));
        }
    }

    fn expect_addr(&mut self, loc: &Loc, types: &HashMap<String, Ty>, op: &Operand, what: &str) {
        let ok = match op {
            Operand::Int(_) => false,
            Operand::Null => true,
            _ => self
                .m
                .operand_type(types, op)
                .is_none_or(|t| t.is_ptr()),
        };
        if !ok {
            self.inst_err(loc, format!("{what} {op} is not an address"));
        }
    }

    fn types(&mut self, f: &'a Function) {
        let m = self.m;
        let types = m.value_types(f);
        for (id, inst) in f.instructions() {
            let loc = self.loc(f, id);
            let produces = m.result_type(&inst.op).is_some();
            if inst.result.is_some() && !produces {
                self.inst_err(&loc, "instruction does not produce a value".into());
            }
            match &inst.op {
                Op::Alloca(t) => {
                    if !self.resolves(t) || t.is_void() {
                        self.inst_err(&loc, format!("cannot allocate {t}"));
                    }
                }
                Op::Load { ty, addr } => {
                    if !self.resolves(ty) || !ty.is_scalar() {
                        self.inst_err(&loc, format!("load of non-scalar type {ty}"));
                    }
                    self.expect_addr(&loc, &types, addr, "load address");
                }
                Op::Store { ty, value, addr } => {
                    if !self.resolves(ty) || !ty.is_scalar() {
                        self.inst_err(&loc, format!("store of non-scalar type {ty}"));
                    }
                    self.expect_operand(&loc, &types, value, ty, "stored value");
                    self.expect_addr(&loc, &types, addr, "store address");
                }
                Op::FieldAddr { agg, base, path } => {
                    if m.field_type(agg, path).is_none() || path.is_empty() {
                        self.inst_err(
                            &loc,
                            format!("{agg} has no field path {}", path.join(".")),
                        );
                    }
                    self.expect_addr(&loc, &types, base, "field base");
                }
                Op::Call { ret, callee, args } => self.call(&loc, &types, ret, callee, args),
                Op::CondBr { cond, .. } => self.expect_int(&loc, &types, cond, "condition"),
                Op::Switch { ty, value, cases, .. } => {
                    if !ty.is_int() {
                        self.inst_err(&loc, format!("switch on non-integer type {ty}"));
                    }
                    self.expect_operand(&loc, &types, value, ty, "switch value");
                    let mut seen = HashSet::new();
                    for (v, _) in cases {
                        if !seen.insert(*v) {
                            self.inst_err(&loc, format!("duplicate switch case {v}"));
                        }
                    }
                }
                Op::Phi { ty, incoming } => {
                    if !self.resolves(ty) || !ty.is_scalar() {
                        self.inst_err(&loc, format!("phi of non-scalar type {ty}"));
                    }
                    for (_, v) in incoming {
                        self.expect_operand(&loc, &types, v, ty, "phi input");
                    }
                }
                Op::Ret(None) => {
                    if !f.ret.is_void() {
                        self.inst_err(&loc, format!("ret void in function returning {}", f.ret));
                    }
                }
                Op::Ret(Some((ty, v))) => {
                    if !ty.compatible(&f.ret) {
                        self.inst_err(&loc, format!("ret {ty} in function returning {}", f.ret));
                    }
                    self.expect_operand(&loc, &types, v, ty, "returned value");
                }
                Op::Bin { ty, lhs, rhs, .. } => {
                    if !ty.is_int() {
                        self.inst_err(&loc, format!("arithmetic on non-integer type {ty}"));
                    }
                    self.expect_operand(&loc, &types, lhs, ty, "operand");
                    self.expect_operand(&loc, &types, rhs, ty, "operand");
                }
                Op::Cmp { ty, lhs, rhs, .. } => {
                    if !ty.is_scalar() || !self.resolves(ty) {
                        self.inst_err(&loc, format!("comparison of non-scalar type {ty}"));
                    }
                    self.expect_operand(&loc, &types, lhs, ty, "operand");
                    self.expect_operand(&loc, &types, rhs, ty, "operand");
                }
                Op::Cast { value, to } => {
                    if !to.is_scalar() || !self.resolves(to) {
                        self.inst_err(&loc, format!("cast to non-scalar type {to}"));
                    }
                    if let Some(t) = m.operand_type(&types, value) {
                        if !t.is_scalar() {
                            self.inst_err(&loc, format!("cast of non-scalar {value}"));
                        }
                    }
                }
                Op::Nondet(t) => {
                    if !t.is_scalar() || !self.resolves(t) {
                        self.inst_err(&loc, format!("nondet of non-scalar type {t}"));
                    }
                }
                Op::Assert(c) | Op::Assume(c) => self.expect_int(&loc, &types, c, "condition"),
                Op::RcInc { class, obj } | Op::RcDec { class, obj } => {
                    if !m.has_class(class) {
                        self.inst_err(&loc, format!("undeclared refcount class {class}"));
                    }
                    self.expect_addr(&loc, &types, obj, "refcounted object");
                }
                Op::RcDelta { class } => {
                    if !m.has_class(class) {
                        self.inst_err(&loc, format!("undeclared refcount class {class}"));
                    }
                }
                Op::Asm { mnemonic, ty, .. } => {
                    if mnemonic.contains('"') || mnemonic.contains('\\') {
                        self.inst_err(&loc, "assembly mnemonic contains a quote".into());
                    }
                    if !(ty.is_void() || ty.is_scalar()) {
                        self.inst_err(&loc, format!("assembly result of type {ty}"));
                    }
                }
                Op::Br(_) => {}
            }
        }
    }

    fn call(
        &mut self,
        loc: &Loc,
        types: &HashMap<String, Ty>,
        ret: &Ty,
        callee: &str,
        args: &[super::CallArg],
    ) {
        let Some(sig) = self.m.signature(callee) else {
            if !self.extra.contains(callee) {
                self.inst_err(loc, format!("call to undeclared function {callee}"));
            }
            return;
        };
        if sig.params.len() != args.len() {
            self.inst_err(
                loc,
                format!(
                    "{callee} expects {} arguments, got {}",
                    sig.params.len(),
                    args.len()
                ),
            );
            return;
        }
        if !ret.compatible(&sig.ret) {
            self.inst_err(loc, format!("{callee} returns {}, not {ret}", sig.ret));
        }
        for (a, (pty, _)) in args.iter().zip(&sig.params) {
            self.expect_operand(loc, types, &a.value, pty, "argument");
            if a.writeonly && !pty.is_ptr() {
                self.inst_err(loc, format!("writeonly argument {} is not an address", a.value));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_module;

    #[test]
    fn empty_module_is_valid() {
        assert!(validate(&Module::default()).is_empty());
    }

    #[test]
    fn two_terminators_in_one_block() {
        let m = parse_module("fn @f() -> void {\n^entry:\n  ret void\n  ret void\n}\n").unwrap();
        let v = validate(&m);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].block.as_deref(), Some("entry"));
    }

    #[test]
    fn flags_undefined_and_non_dominating_uses() {
        let src = "fn @f(%c: i1) -> i32 {\n^entry:\n  condbr %c, ^a, ^b\n^a:\n  %x = add i32 1, 2\n  br ^b\n^b:\n  ret i32 %x\n}\n";
        let v = validate(&parse_module(src).unwrap());
        assert!(v.iter().any(|x| x.message.contains("does not dominate")), "{v:?}");
        let src = "fn @f() -> i32 {\n^entry:\n  ret i32 %y\n}\n";
        let v = validate(&parse_module(src).unwrap());
        assert!(v.iter().any(|x| x.message.contains("undefined")));
    }

    #[test]
    fn phi_must_list_predecessors() {
        let src = "fn @f(%c: i1) -> i32 {\n^entry:\n  condbr %c, ^a, ^b\n^a:\n  br ^b\n^b:\n  %p = phi i32 [^a: 1]\n  ret i32 %p\n}\n";
        let v = validate(&parse_module(src).unwrap());
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].inst, Some(0));
    }

    #[test]
    fn kref_path_must_end_in_counter() {
        let m = parse_module("type d { id: i32 } kref id\n").unwrap();
        assert_eq!(validate(&m).len(), 1);
        let m = parse_module("type d { k: kref_t } kref k\ntype e { d: d } kref d.k\n").unwrap();
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn recursive_aggregate_rejected() {
        let m = parse_module("type a { b: b }\ntype b { a: a }\n").unwrap();
        assert_eq!(validate(&m).len(), 2);
    }

    #[test]
    fn rc_class_and_callee_resolution() {
        let src = "fn @f(%d: ptr) -> void {\n^entry:\n  rc_inc device, %d\n  %r = call i32 @g(%d)\n  ret void\n}\n";
        let m = parse_module(src).unwrap();
        let v = validate(&m);
        assert_eq!(v.len(), 2, "{v:?}");
        let v = validate_with_callees(&m, &["g"]);
        assert_eq!(v.len(), 1);
    }
}
