//! Constrained Horn clause encoding of harness programs.
//!
//! Every scalar is an SMT `Int`; addresses are the id of the allocation
//! site they point into (`0` is null). State carried between blocks:
//! the function's SSA values, one aggregate delta per refcount class, one
//! counter per statically named object, and one cell per tracked memory
//! location. Sites inside loops or non-inlined callees stand for many
//! objects, so their counters collapse into the class aggregate and their
//! memory is not tracked.
//!
//! The script follows the usual Horn convention: `sat` means the clauses
//! have a model, i.e. the error predicate is unreachable; `unsat` means a
//! violating path exists.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::harness::HARNESS_MAIN;
use crate::kir::cfg::Cfg;
use crate::kir::objects::ObjectAnalysis;
use crate::kir::transform::InlineError;
use crate::kir::{BinOp, CmpPred, Inst, InstId, Module, Op, Operand, Ty};

use super::inline::inline_all_nonrecursive;

pub const ERROR_PREDICATE: &str = "Err";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
}

/// `forall vars. body => head`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub vars: Vec<String>,
    pub body: Vec<String>,
    pub head: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChcSystem {
    pub predicates: Vec<Predicate>,
    pub clauses: Vec<Clause>,
    /// Precision remarks for the report.
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChcOptions {
    pub inline: bool,
    pub underflow_check: bool,
}

impl Default for ChcOptions {
    fn default() -> Self {
        ChcOptions {
            inline: true,
            underflow_check: true,
        }
    }
}

/// Points-to set over site ids; `any` when nothing is known.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Pts {
    sites: BTreeSet<u32>,
    any: bool,
}

impl Pts {
    fn one(s: u32) -> Self {
        Pts {
            sites: BTreeSet::from([s]),
            any: false,
        }
    }

    fn any() -> Self {
        Pts {
            sites: BTreeSet::new(),
            any: true,
        }
    }

    fn join(&mut self, other: &Pts) -> bool {
        let before = (self.sites.len(), self.any);
        self.sites.extend(other.sites.iter().copied());
        self.any |= other.any;
        before != (self.sites.len(), self.any)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Counter {
    Aggregate(String),
    Object {
        class: String,
        site: u32,
        path: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Cell {
    site: u32,
    path: Vec<String>,
}

#[derive(Clone, Debug)]
struct SiteInfo {
    /// Stands for at most one object per execution.
    single: bool,
    token: bool,
}

/// Whole-module facts: sites, points-to sets, state layout.
struct Layout<'m> {
    m: &'m Module,
    sites: Vec<SiteInfo>,
    inst_site: HashMap<(usize, InstId), u32>,
    global_site: HashMap<String, u32>,
    cell_site: BTreeMap<Cell, u32>,
    pts: Vec<HashMap<String, Pts>>,
    types: Vec<HashMap<String, Ty>>,
    stored: BTreeMap<Cell, Pts>,
    counters: Vec<Counter>,
    cells: Vec<Cell>,
    ptr_cells: BTreeSet<Cell>,
}

fn creates_token(op: &Op) -> bool {
    match op {
        Op::Alloca(t) => *t == Ty::Token,
        Op::Nondet(t) | Op::Asm { ty: t, .. } | Op::Load { ty: t, .. } | Op::Call { ret: t, .. } => {
            t.pointee() == Some(&Ty::Token)
        }
        _ => false,
    }
}

fn is_site_op(m: &Module, op: &Op) -> bool {
    match op {
        Op::Alloca(_) => true,
        Op::Nondet(t) | Op::Asm { ty: t, .. } => t.is_ptr(),
        Op::Call { ret, callee, .. } => ret.is_ptr() && m.function(callee).is_none(),
        Op::Load { ty, .. } => ty.is_ptr(),
        _ => false,
    }
}

impl<'m> Layout<'m> {
    fn new(m: &'m Module) -> Self {
        let mut sites = vec![SiteInfo {
            single: false,
            token: false,
        }];
        let mut global_site = HashMap::new();
        for g in &m.globals {
            global_site.insert(g.name.clone(), sites.len() as u32);
            sites.push(SiteInfo {
                single: true,
                token: g.ty == Ty::Token,
            });
        }
        let mut inst_site = HashMap::new();
        for (fi, f) in m.functions.iter().enumerate() {
            let cyclic = Cfg::new(f).cyclic_blocks();
            for (id, inst) in f.instructions() {
                if is_site_op(m, &inst.op) {
                    inst_site.insert((fi, id), sites.len() as u32);
                    sites.push(SiteInfo {
                        single: f.name == HARNESS_MAIN && !cyclic.contains(&id.block),
                        token: creates_token(&inst.op),
                    });
                }
            }
        }
        let types = m.functions.iter().map(|f| m.value_types(f)).collect();
        let mut l = Layout {
            m,
            sites,
            inst_site,
            global_site,
            cell_site: BTreeMap::new(),
            pts: vec![HashMap::new(); m.functions.len()],
            types,
            stored: BTreeMap::new(),
            counters: Vec::new(),
            cells: Vec::new(),
            ptr_cells: BTreeSet::new(),
        };
        l.solve_pts();
        l.collect_state();
        l
    }

    fn tracked(&self, s: u32) -> bool {
        self.sites[s as usize].single
    }

    fn operand_pts(&self, fi: usize, op: &Operand) -> Pts {
        match op {
            Operand::Value(v) => self.pts[fi].get(v).cloned().unwrap_or_default(),
            Operand::Global(g) => match self.global_site.get(g) {
                Some(s) => Pts::one(*s),
                None => Pts::default(),
            },
            Operand::Int(_) | Operand::Null => Pts::default(),
        }
    }

    fn cell_site(&mut self, cell: Cell) -> u32 {
        if let Some(s) = self.cell_site.get(&cell) {
            return *s;
        }
        let id = self.sites.len() as u32;
        let single = self.tracked(cell.site);
        self.sites.push(SiteInfo {
            single,
            token: false,
        });
        self.cell_site.insert(cell, id);
        id
    }

    /// Tracked cells an address may denote, and whether it may denote
    /// anything else.
    fn resolve(&self, fi: usize, oa: &ObjectAnalysis, addr: &Operand) -> (Vec<Cell>, bool) {
        let pts = self.operand_pts(fi, addr);
        let Some(path) = oa.field_path(addr) else {
            return (Vec::new(), true);
        };
        let mut cells = Vec::new();
        let mut other = pts.any;
        for s in &pts.sites {
            if self.tracked(*s) {
                cells.push(Cell {
                    site: *s,
                    path: path.clone(),
                });
            } else {
                other = true;
            }
        }
        (cells, other)
    }

    fn solve_pts(&mut self) {
        let m = self.m;
        loop {
            let mut changed = false;
            for (fi, f) in m.functions.iter().enumerate() {
                let oa = ObjectAnalysis::new(m, f);
                if f.name != HARNESS_MAIN {
                    for p in &f.params {
                        if p.ty.is_ptr() {
                            changed |= self.set_pts(fi, &p.name, Pts::any());
                        }
                    }
                }
                for (id, inst) in f.instructions() {
                    changed |= self.transfer(fi, &oa, id, inst);
                }
            }
            if !changed {
                return;
            }
        }
    }

    fn set_pts(&mut self, fi: usize, name: &str, p: Pts) -> bool {
        self.pts[fi].entry(name.to_string()).or_default().join(&p)
    }

    fn transfer(&mut self, fi: usize, oa: &ObjectAnalysis, id: InstId, inst: &Inst) -> bool {
        let site = self.inst_site.get(&(fi, id)).copied();
        let out = match &inst.op {
            Op::Store { value, addr, .. } => {
                let v = self.operand_pts(fi, value);
                let (cells, _) = self.resolve(fi, oa, addr);
                let mut changed = false;
                for c in cells {
                    changed |= self.stored.entry(c).or_default().join(&v);
                }
                return changed;
            }
            Op::Load { ty, addr } if ty.is_ptr() => {
                let (cells, other) = self.resolve(fi, oa, addr);
                let mut p = Pts::default();
                for c in cells {
                    p.join(&Pts::one(self.cell_site(c.clone())));
                    if let Some(st) = self.stored.get(&c) {
                        p.join(&st.clone());
                    }
                }
                if other {
                    p.join(&Pts::one(site.expect("load site")));
                }
                p
            }
            _ if site.is_some() => Pts::one(site.expect("site")),
            Op::FieldAddr { base: v, .. } => self.operand_pts(fi, v),
            Op::Cast { value, to } if to.is_ptr() => {
                let from_ptr = match value {
                    Operand::Value(n) => self.types[fi].get(n).is_some_and(Ty::is_ptr),
                    Operand::Global(_) | Operand::Null => true,
                    Operand::Int(_) => false,
                };
                if from_ptr {
                    self.operand_pts(fi, value)
                } else {
                    Pts::any()
                }
            }
            Op::Phi { ty, incoming } if ty.is_ptr() => {
                let mut p = Pts::default();
                for (_, v) in incoming {
                    p.join(&self.operand_pts(fi, v));
                }
                p
            }
            Op::Call { ret, .. } if ret.is_ptr() => Pts::any(),
            _ => return false,
        };
        match &inst.result {
            Some(r) => self.set_pts(fi, r, out),
            None => false,
        }
    }

    fn collect_state(&mut self) {
        let m = self.m;
        let mut classes: BTreeSet<String> = m.ref_classes.iter().cloned().collect();
        let mut objects = BTreeSet::new();
        let mut cells = BTreeSet::new();
        for (fi, f) in m.functions.iter().enumerate() {
            let oa = ObjectAnalysis::new(m, f);
            for (_, inst) in f.instructions() {
                match &inst.op {
                    Op::RcInc { class, obj } | Op::RcDec { class, obj } => {
                        classes.insert(class.clone());
                        for c in self.resolve(fi, &oa, obj).0 {
                            objects.insert(Counter::Object {
                                class: class.clone(),
                                site: c.site,
                                path: c.path,
                            });
                        }
                    }
                    Op::Load { ty, addr } | Op::Store { ty, addr, .. } => {
                        for c in self.resolve(fi, &oa, addr).0 {
                            if ty.is_ptr() {
                                self.ptr_cells.insert(c.clone());
                            }
                            cells.insert(c);
                        }
                    }
                    _ => {}
                }
            }
        }
        self.counters = classes.into_iter().map(Counter::Aggregate).collect();
        self.counters.extend(objects);
        self.cells = cells.into_iter().collect();
    }

    fn state_len(&self) -> usize {
        self.counters.len() + self.cells.len()
    }

    fn counter_index(&self, c: &Counter) -> usize {
        self.counters.iter().position(|x| x == c).expect("counter")
    }

    fn cell_index(&self, c: &Cell) -> Option<usize> {
        self.cells
            .iter()
            .position(|x| x == c)
            .map(|i| self.counters.len() + i)
    }

    fn cells_of_site(&self, s: u32) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.site == s)
            .map(|(i, _)| self.counters.len() + i)
            .collect()
    }
}

fn smt_int(i: i64) -> String {
    if i < 0 {
        format!("(- {})", i.unsigned_abs())
    } else {
        i.to_string()
    }
}

fn symbol(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn block_predicate(function: &str, block: &str) -> String {
    symbol(&format!("P_{function}_{block}"))
}

pub fn summary_predicate(function: &str) -> String {
    symbol(&format!("S_{function}"))
}

fn app(name: &str, args: &[String]) -> String {
    if args.is_empty() {
        name.to_string()
    } else {
        format!("({name} {})", args.join(" "))
    }
}

/// Clause under construction along one path through a block.
#[derive(Clone)]
struct Path {
    vars: Vec<String>,
    body: Vec<String>,
    locals: HashMap<String, String>,
    /// Entry snapshot (parameters then state) for summarized functions.
    entry: Vec<String>,
    state: Vec<String>,
    next: usize,
}

impl Path {
    fn fresh(&mut self, hint: &str) -> String {
        let v = format!("{}_{}", symbol(hint), self.next);
        self.next += 1;
        self.vars.push(v.clone());
        v
    }

    fn assume(&mut self, c: String) {
        self.body.push(c);
    }
}

struct Encoder<'a, 'm> {
    l: &'a Layout<'m>,
    opts: ChcOptions,
    sys: ChcSystem,
}

impl Encoder<'_, '_> {
    fn locals(&self, fi: usize) -> Vec<(String, Ty)> {
        let f = &self.l.m.functions[fi];
        let mut out: Vec<(String, Ty)> = f
            .params
            .iter()
            .map(|p| (p.name.clone(), p.ty.clone()))
            .collect();
        for (_, inst) in f.instructions() {
            if let Some(r) = &inst.result {
                if let Some(t) = self.l.types[fi].get(r) {
                    if t.is_scalar() {
                        out.push((r.clone(), t.clone()));
                    }
                }
            }
        }
        out
    }

    fn is_main(&self, fi: usize) -> bool {
        self.l.m.functions[fi].name == HARNESS_MAIN
    }

    fn arity(&self, fi: usize) -> usize {
        let f = &self.l.m.functions[fi];
        let snapshot = if self.is_main(fi) {
            0
        } else {
            f.params.len() + self.l.state_len()
        };
        snapshot + self.locals(fi).len() + self.l.state_len()
    }

    /// A path whose body starts at the block predicate of `block`.
    fn start(&self, fi: usize, block: usize) -> Path {
        let f = &self.l.m.functions[fi];
        let mut p = Path {
            vars: Vec::new(),
            body: Vec::new(),
            locals: HashMap::new(),
            entry: Vec::new(),
            state: Vec::new(),
            next: 0,
        };
        if !self.is_main(fi) {
            for param in &f.params {
                let v = p.fresh(&format!("in_{}", param.name));
                p.entry.push(v);
            }
            for i in 0..self.l.state_len() {
                let v = p.fresh(&format!("in_s{i}"));
                p.entry.push(v);
            }
        }
        for (name, _) in self.locals(fi) {
            let v = p.fresh(&format!("v_{name}"));
            p.locals.insert(name, v);
        }
        for i in 0..self.l.state_len() {
            let v = p.fresh(&format!("s{i}"));
            p.state.push(v);
        }
        let args = self.pred_args(fi, &p, None);
        let atom = app(&block_predicate(&f.name, &f.blocks[block].label), &args);
        p.body.push(atom);
        p
    }

    fn pred_args(&self, fi: usize, p: &Path, phis: Option<&HashMap<String, String>>) -> Vec<String> {
        let mut args = p.entry.clone();
        for (name, _) in self.locals(fi) {
            let v = phis
                .and_then(|m| m.get(&name))
                .or_else(|| p.locals.get(&name))
                .cloned()
                .unwrap_or_else(|| "0".into());
            args.push(v);
        }
        args.extend(p.state.iter().cloned());
        args
    }

    fn term(&self, p: &Path, op: &Operand) -> String {
        match op {
            Operand::Value(v) => p.locals.get(v).cloned().unwrap_or_else(|| "0".into()),
            Operand::Global(g) => match self.l.global_site.get(g) {
                Some(s) => s.to_string(),
                None => "1".into(),
            },
            Operand::Int(i) => smt_int(*i),
            Operand::Null => "0".into(),
        }
    }

    fn push(&mut self, p: &Path, head: String) {
        self.sys.clauses.push(Clause {
            vars: p.vars.clone(),
            body: p.body.clone(),
            head,
        });
    }

    fn error_if(&mut self, p: &Path, cond: String) {
        let mut q = p.clone();
        q.assume(cond);
        self.push(&q, ERROR_PREDICATE.into());
    }

    fn range(p: &mut Path, v: &str, ty: &Ty, site: Option<u32>) {
        if let Some(r) = range_expr(v, ty, site) {
            p.assume(r);
        }
    }

    /// Fresh contents for every tracked cell of site `s`.
    fn init_cells(&self, p: &mut Path, s: u32) {
        for idx in self.l.cells_of_site(s) {
            let cell = &self.l.cells[idx - self.l.counters.len()];
            let v = p.fresh("cell");
            if self.l.ptr_cells.contains(cell) {
                let cs = self.l.cell_site.get(cell).copied();
                Self::range(p, &v, &Ty::Ptr(None), cs);
            }
            p.state[idx] = v;
        }
    }

    fn token_sites(&self, fi: usize, op: &Operand) -> Vec<u32> {
        self.l
            .operand_pts(fi, op)
            .sites
            .into_iter()
            .filter(|s| self.l.sites[*s as usize].token)
            .collect()
    }

    fn token_check(&mut self, fi: usize, p: &Path, op: &Operand) {
        let t = self.term(p, op);
        for s in self.token_sites(fi, op) {
            self.error_if(p, format!("(= {t} {s})"));
        }
    }

    fn encode_function(&mut self, fi: usize) {
        let f = &self.l.m.functions[fi];
        let oa = ObjectAnalysis::new(self.l.m, f);
        let cfg = Cfg::new(f);
        let reachable: BTreeSet<usize> = cfg.reverse_postorder().into_iter().collect();
        for (bi, block) in f.blocks.iter().enumerate() {
            if !reachable.contains(&bi) {
                continue;
            }
            let mut p = self.start(fi, bi);
            let mut live = true;
            for (ii, inst) in block.insts.iter().enumerate() {
                if !live {
                    break;
                }
                if matches!(inst.op, Op::Phi { .. }) {
                    continue;
                }
                live = self.encode_inst(fi, &oa, InstId::new(bi, ii), inst, &mut p);
            }
        }
    }

    fn set_local(p: &mut Path, res: &Option<String>, v: String) {
        if let Some(r) = res {
            p.locals.insert(r.clone(), v);
        }
    }

    fn define(p: &mut Path, res: &Option<String>, expr: String) {
        if res.is_some() {
            let v = p.fresh("t");
            p.assume(format!("(= {v} {expr})"));
            Self::set_local(p, res, v);
        }
    }

    /// Encodes one instruction; returns false when the path ends.
    fn encode_inst(&mut self, fi: usize, oa: &ObjectAnalysis, id: InstId, inst: &Inst, p: &mut Path) -> bool {
        let f = &self.l.m.functions[fi];
        let res = &inst.result;
        let site = self.l.inst_site.get(&(fi, id)).copied();
        match &inst.op {
            Op::Alloca(_) => {
                let s = site.expect("alloca site");
                Self::set_local(p, res, s.to_string());
                self.init_cells(p, s);
            }
            Op::Nondet(ty) | Op::Asm { ty, .. } => {
                if !ty.is_void() {
                    let v = p.fresh("nd");
                    Self::range(p, &v, ty, site);
                    Self::set_local(p, res, v);
                    if let Some(s) = site {
                        self.init_cells(p, s);
                    }
                }
            }
            Op::Load { ty, addr } => {
                self.token_check(fi, p, addr);
                let a = self.term(p, addr);
                p.assume(format!("(not (= {a} 0))"));
                let (cells, other) = self.l.resolve(fi, oa, addr);
                let v = p.fresh("ld");
                let mut hits = Vec::new();
                for c in &cells {
                    let Some(idx) = self.l.cell_index(c) else {
                        continue;
                    };
                    p.assume(format!("(=> (= {a} {}) (= {v} {}))", c.site, p.state[idx]));
                    hits.push(c.site);
                }
                if other || hits.is_empty() {
                    if let Some(r) = range_expr(&v, ty, site) {
                        let away: Vec<String> = hits.iter().map(|s| format!("(not (= {a} {s}))")).collect();
                        match away.is_empty() {
                            true => p.assume(r),
                            false => p.assume(format!("(=> {} {r})", conj(&away))),
                        }
                    }
                    if let Some(s) = site {
                        self.init_cells(p, s);
                    }
                } else {
                    let at: Vec<String> = hits.iter().map(|s| format!("(= {a} {s})")).collect();
                    p.assume(disj(&at));
                }
                Self::set_local(p, res, v);
            }
            Op::Store { value, addr, .. } => {
                self.token_check(fi, p, value);
                self.token_check(fi, p, addr);
                let a = self.term(p, addr);
                let v = self.term(p, value);
                p.assume(format!("(not (= {a} 0))"));
                for c in self.l.resolve(fi, oa, addr).0 {
                    let Some(idx) = self.l.cell_index(&c) else {
                        continue;
                    };
                    let n = p.fresh("cell");
                    p.assume(format!("(= {n} (ite (= {a} {}) {v} {}))", c.site, p.state[idx]));
                    p.state[idx] = n;
                }
            }
            Op::FieldAddr { base, .. } => {
                let b = self.term(p, base);
                Self::set_local(p, res, b);
            }
            Op::Cast { value, .. } => {
                let v = self.term(p, value);
                Self::set_local(p, res, v);
            }
            Op::Bin { op, ty, lhs, rhs } => {
                let a = self.term(p, lhs);
                let b = self.term(p, rhs);
                let bool_op = *ty == Ty::Int(1);
                let expr = match op {
                    BinOp::Add => Some(format!("(+ {a} {b})")),
                    BinOp::Sub => Some(format!("(- {a} {b})")),
                    BinOp::Mul => Some(format!("(* {a} {b})")),
                    BinOp::And if bool_op => Some(format!("(ite (and (= {a} 1) (= {b} 1)) 1 0)")),
                    BinOp::Or if bool_op => Some(format!("(ite (or (= {a} 1) (= {b} 1)) 1 0)")),
                    BinOp::Xor if bool_op => Some(format!("(ite (= {a} {b}) 0 1)")),
                    _ => None,
                };
                match expr {
                    Some(e) => Self::define(p, res, e),
                    None => {
                        let v = p.fresh("bits");
                        Self::set_local(p, res, v);
                    }
                }
            }
            Op::Cmp { pred, lhs, rhs, .. } => {
                let a = self.term(p, lhs);
                let b = self.term(p, rhs);
                let rel = match pred {
                    CmpPred::Eq => format!("(= {a} {b})"),
                    CmpPred::Ne => format!("(not (= {a} {b}))"),
                    CmpPred::Slt => format!("(< {a} {b})"),
                    CmpPred::Sle => format!("(<= {a} {b})"),
                    CmpPred::Sgt => format!("(> {a} {b})"),
                    CmpPred::Sge => format!("(>= {a} {b})"),
                };
                Self::define(p, res, format!("(ite {rel} 1 0)"));
            }
            Op::Assert(c) => {
                let t = self.term(p, c);
                self.error_if(p, format!("(= {t} 0)"));
                p.assume(format!("(not (= {t} 0))"));
            }
            Op::Assume(c) => {
                let t = self.term(p, c);
                p.assume(format!("(not (= {t} 0))"));
            }
            Op::RcInc { class, obj } | Op::RcDec { class, obj } => {
                let inc = matches!(inst.op, Op::RcInc { .. });
                self.token_check(fi, p, obj);
                let o = self.term(p, obj);
                let op = if inc { "+" } else { "-" };
                let agg = self.l.counter_index(&Counter::Aggregate(class.clone()));
                let n = p.fresh("d");
                p.assume(format!("(= {n} ({op} {} (ite (= {o} 0) 0 1)))", p.state[agg]));
                p.state[agg] = n.clone();
                let mut checks = vec![n];
                for c in self.l.resolve(fi, oa, obj).0 {
                    let key = Counter::Object {
                        class: class.clone(),
                        site: c.site,
                        path: c.path,
                    };
                    let idx = self.l.counter_index(&key);
                    let n = p.fresh("c");
                    p.assume(format!(
                        "(= {n} ({op} {} (ite (= {o} {}) 1 0)))",
                        p.state[idx], key_site(&key)
                    ));
                    p.state[idx] = n.clone();
                    checks.push(n);
                }
                if !inc && self.opts.underflow_check {
                    for c in checks {
                        self.error_if(p, format!("(< {c} 0)"));
                    }
                }
            }
            Op::RcDelta { class } => {
                let agg = self.l.counter_index(&Counter::Aggregate(class.clone()));
                let d = p.state[agg].clone();
                Self::set_local(p, res, d);
            }
            Op::Call { ret, callee, args } => {
                if let Some(gi) = self.l.m.functions.iter().position(|g| &g.name == callee) {
                    self.encode_call(gi, p, res, args.iter().map(|a| &a.value).collect());
                } else {
                    for a in args.iter().filter(|a| a.writeonly) {
                        let t = self.term(p, &a.value);
                        let (cells, _) = self.l.resolve(fi, oa, &a.value);
                        for c in cells {
                            for (i, cell) in self.l.cells.iter().enumerate() {
                                if cell.site == c.site && cell.path.starts_with(&c.path) {
                                    let idx = self.l.counters.len() + i;
                                    let any = p.fresh("havoc");
                                    let h = p.fresh("cell");
                                    p.assume(format!(
                                        "(= {h} (ite (= {t} {}) {any} {}))",
                                        c.site, p.state[idx]
                                    ));
                                    p.state[idx] = h;
                                }
                            }
                        }
                    }
                    if !ret.is_void() {
                        let v = p.fresh("ret");
                        Self::range(p, &v, ret, site);
                        Self::set_local(p, res, v);
                        if let Some(s) = site {
                            self.init_cells(p, s);
                        }
                    }
                }
            }
            Op::Br(to) => {
                self.jump(fi, id.block, p, to);
                return false;
            }
            Op::CondBr {
                cond,
                then_to,
                else_to,
            } => {
                let c = self.term(p, cond);
                let mut t = p.clone();
                t.assume(format!("(not (= {c} 0))"));
                self.jump(fi, id.block, &t, then_to);
                let mut e = p.clone();
                e.assume(format!("(= {c} 0)"));
                self.jump(fi, id.block, &e, else_to);
                return false;
            }
            Op::Switch {
                value,
                default,
                cases,
                ..
            } => {
                let v = self.term(p, value);
                let mut others = Vec::new();
                for (k, to) in cases {
                    let mut q = p.clone();
                    q.assume(format!("(= {v} {})", smt_int(*k)));
                    others.push(format!("(not (= {v} {}))", smt_int(*k)));
                    self.jump(fi, id.block, &q, to);
                }
                let mut q = p.clone();
                q.body.extend(others);
                self.jump(fi, id.block, &q, default);
                return false;
            }
            Op::Ret(v) => {
                if !self.is_main(fi) {
                    let r = match v {
                        Some((_, o)) => self.term(p, o),
                        None => "0".into(),
                    };
                    let mut args = p.entry.clone();
                    args.push(r);
                    args.extend(p.state.iter().cloned());
                    self.push(p, app(&summary_predicate(&f.name), &args));
                }
                return false;
            }
            Op::Phi { .. } => {}
        }
        true
    }

    fn jump(&mut self, fi: usize, from: usize, p: &Path, to: &str) {
        let f = &self.l.m.functions[fi];
        let Some(ti) = f.block_index(to) else {
            return;
        };
        let from_label = &f.blocks[from].label;
        let mut phis = HashMap::new();
        for inst in &f.blocks[ti].insts {
            let Op::Phi { incoming, .. } = &inst.op else {
                break;
            };
            if let (Some(r), Some((_, v))) = (&inst.result, incoming.iter().find(|(l, _)| l == from_label)) {
                phis.insert(r.clone(), self.term(p, v));
            }
        }
        let args = self.pred_args(fi, p, Some(&phis));
        self.push(p, app(&block_predicate(&f.name, to), &args));
    }

    fn encode_call(&mut self, gi: usize, p: &mut Path, res: &Option<String>, args: Vec<&Operand>) {
        let g = &self.l.m.functions[gi];
        let actuals: Vec<String> = args.iter().map(|a| self.term(p, a)).collect();
        // seed the callee entry with this calling context
        let mut seed = p.clone();
        let mut head = actuals.clone();
        head.extend(seed.state.iter().cloned());
        let locals = self.locals(gi);
        for (name, _) in &locals {
            match g.param_index(name) {
                Some(i) => head.push(actuals.get(i).cloned().unwrap_or_else(|| "0".into())),
                None => head.push(seed.fresh("u")),
            }
        }
        head.extend(seed.state.iter().cloned());
        self.push(&seed, app(&block_predicate(&g.name, &g.blocks[0].label), &head));
        // use the summary
        let r = p.fresh("ret");
        let mut out_state = Vec::new();
        for _ in 0..self.l.state_len() {
            out_state.push(p.fresh("s"));
        }
        let mut sargs = actuals;
        sargs.extend(p.state.iter().cloned());
        sargs.push(r.clone());
        sargs.extend(out_state.iter().cloned());
        p.body.push(app(&summary_predicate(&g.name), &sargs));
        p.state = out_state;
        Self::set_local(p, res, r);
    }

    fn main_entry(&mut self, fi: usize) {
        let f = &self.l.m.functions[fi];
        let mut p = Path {
            vars: Vec::new(),
            body: Vec::new(),
            locals: HashMap::new(),
            entry: Vec::new(),
            state: Vec::new(),
            next: 0,
        };
        for (name, _) in self.locals(fi) {
            let v = p.fresh(&format!("v_{name}"));
            p.locals.insert(name, v);
        }
        for _ in 0..self.l.counters.len() {
            p.state.push("0".into());
        }
        for _ in &self.l.cells {
            p.state.push(String::new());
        }
        for s in self.l.global_site.values().copied().collect::<Vec<_>>() {
            self.init_cells(&mut p, s);
        }
        for i in 0..p.state.len() {
            if p.state[i].is_empty() {
                p.state[i] = p.fresh("cell");
            }
        }
        let args = self.pred_args(fi, &p, None);
        self.push(&p, app(&block_predicate(&f.name, &f.blocks[0].label), &args));
    }
}

fn range_expr(v: &str, ty: &Ty, site: Option<u32>) -> Option<String> {
    match (ty, site) {
        (Ty::Int(1), _) => Some(format!("(or (= {v} 0) (= {v} 1))")),
        (Ty::Ptr(_), Some(s)) => Some(format!("(or (= {v} 0) (= {v} {s}))")),
        _ => None,
    }
}

fn conj(xs: &[String]) -> String {
    match xs {
        [] => "true".into(),
        [x] => x.clone(),
        _ => format!("(and {})", xs.join(" ")),
    }
}

fn disj(xs: &[String]) -> String {
    match xs {
        [] => "false".into(),
        [x] => x.clone(),
        _ => format!("(or {})", xs.join(" ")),
    }
}

fn key_site(k: &Counter) -> u32 {
    match k {
        Counter::Object { site, .. } => *site,
        Counter::Aggregate(_) => 0,
    }
}

/// Encodes a harness module. With `inline`, calls to non-recursive
/// functions are inlined first; remaining calls use summary predicates.
pub fn encode_chc(m: &Module, opts: ChcOptions) -> Result<ChcSystem, InlineError> {
    let prepared;
    let m = if opts.inline {
        prepared = inline_all_nonrecursive(m)?;
        &prepared
    } else {
        m
    };
    let layout = Layout::new(m);
    let mut enc = Encoder {
        l: &layout,
        opts,
        sys: ChcSystem::default(),
    };
    let Some(main) = m.functions.iter().position(|f| f.name == HARNESS_MAIN) else {
        enc.sys.notes.push(format!("no @{HARNESS_MAIN}; nothing to check"));
        return Ok(enc.sys);
    };
    let reachable = reachable_functions(m, main);
    for &fi in &reachable {
        let f = &m.functions[fi];
        let arity = enc.arity(fi);
        for b in &f.blocks {
            enc.sys.predicates.push(Predicate {
                name: block_predicate(&f.name, &b.label),
                arity,
            });
        }
        if fi != main {
            enc.sys.predicates.push(Predicate {
                name: summary_predicate(&f.name),
                arity: f.params.len() + 1 + 2 * layout.state_len(),
            });
        }
    }
    enc.sys.predicates.push(Predicate {
        name: ERROR_PREDICATE.into(),
        arity: 0,
    });
    enc.main_entry(main);
    for &fi in &reachable {
        enc.encode_function(fi);
    }
    let mut collapsed = BTreeSet::new();
    let mut unnamed = false;
    let mut havocked = 0;
    for &fi in &reachable {
        for (_, i) in m.functions[fi].instructions() {
            match &i.op {
                Op::RcInc { obj, .. } | Op::RcDec { obj, .. } => {
                    let pts = layout.operand_pts(fi, obj);
                    unnamed |= pts.any;
                    collapsed.extend(pts.sites.into_iter().filter(|s| !layout.tracked(*s)));
                }
                Op::Bin { op, ty, .. } if !exact(*op, ty) => havocked += 1,
                _ => {}
            }
        }
    }
    if havocked > 0 {
        enc.sys.notes.push(format!(
            "{havocked} integer operation(s) with no exact integer encoding yield unconstrained values"
        ));
    }
    if !collapsed.is_empty() || unnamed {
        enc.sys.notes.push(format!(
            "{} refcounted allocation site(s) may stand for several objects{}; their counts are tracked only through the class aggregate",
            collapsed.len(),
            if unnamed { " and some refcount operands are not statically named" } else { "" }
        ));
    }
    Ok(enc.sys)
}

/// Operations the encoding expresses exactly.
fn exact(op: BinOp, ty: &Ty) -> bool {
    matches!(op, BinOp::Add | BinOp::Sub | BinOp::Mul)
        || (*ty == Ty::Int(1) && matches!(op, BinOp::And | BinOp::Or | BinOp::Xor))
}

fn reachable_functions(m: &Module, main: usize) -> Vec<usize> {
    let mut seen = BTreeSet::from([main]);
    let mut work = vec![main];
    while let Some(fi) = work.pop() {
        for (_, i) in m.functions[fi].instructions() {
            if let Op::Call { callee, .. } = &i.op {
                if let Some(gi) = m.functions.iter().position(|g| &g.name == callee) {
                    if seen.insert(gi) {
                        work.push(gi);
                    }
                }
            }
        }
    }
    seen.into_iter().collect()
}

/// SMT-LIB2 Horn script for `sys`.
pub fn emit_smtlib(sys: &ChcSystem) -> String {
    let mut out = String::new();
    out.push_str("; sat: the error predicate is unreachable; unsat: an assertion can fail\n");
    for n in &sys.notes {
        let _ = writeln!(out, "; note: {n}");
    }
    out.push_str("(set-logic HORN)\n");
    for p in &sys.predicates {
        let sorts = vec!["Int"; p.arity].join(" ");
        let _ = writeln!(out, "(declare-fun {} ({sorts}) Bool)", p.name);
    }
    for c in &sys.clauses {
        let body = conj(&c.body);
        let imp = format!("(=> {body} {})", c.head);
        if c.vars.is_empty() {
            let _ = writeln!(out, "(assert {imp})");
        } else {
            let binders: Vec<String> = c.vars.iter().map(|v| format!("({v} Int)")).collect();
            let _ = writeln!(out, "(assert (forall ({}) {imp}))", binders.join(" "));
        }
    }
    let _ = writeln!(out, "(assert (=> {ERROR_PREDICATE} false))");
    out.push_str("(check-sat)\n");
    out
}

#[cfg(test)]
mod tests;
