//! Runtime values, abstract states and the small-step semantics.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::kir::cfg::Cfg;
use crate::kir::{BinOp, CmpPred, Function, InstId, Module, Op, Operand, Ty};

/// Address of a field inside an abstract object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Addr {
    pub obj: u32,
    pub path: Vec<String>,
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj{}", self.obj)?;
        for seg in &self.path {
            write!(f, ".{seg}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Null,
    Addr(Addr),
    Func(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Null => f.write_str("null"),
            Value::Addr(a) => write!(f, "{a}"),
            Value::Func(n) => write!(f, "@{n}"),
        }
    }
}

/// Heap object. Reads of cells under a `lazy` prefix that were never
/// written pick a nondet value and remember it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Object {
    pub ty: Option<Ty>,
    pub cells: BTreeMap<Vec<String>, Value>,
    pub lazy: BTreeSet<Vec<String>>,
    pub token: bool,
}

impl Object {
    fn new(ty: Option<Ty>, lazy: bool) -> Self {
        let token = ty == Some(Ty::Token);
        Object {
            ty,
            cells: BTreeMap::new(),
            lazy: if lazy {
                BTreeSet::from([Vec::new()])
            } else {
                BTreeSet::new()
            },
            token,
        }
    }

    fn is_lazy(&self, path: &[String]) -> bool {
        self.lazy.iter().any(|p| path.starts_with(p))
    }

    fn havoc(&mut self, prefix: &[String]) {
        self.cells.retain(|p, _| !p.starts_with(prefix));
        self.lazy.insert(prefix.to_vec());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub func: usize,
    pub block: usize,
    pub index: usize,
    pub env: BTreeMap<String, Value>,
    /// Caller value receiving the return value.
    pub ret_slot: Option<String>,
    /// Times each back edge was taken in this activation.
    pub loops: BTreeMap<(usize, usize), u32>,
}

/// Why a path violates the property.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Failure {
    Assertion {
        function: String,
        block: String,
        index: usize,
    },
    Underflow {
        class: String,
        object: String,
    },
    TokenMisuse {
        what: String,
    },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Assertion {
                function,
                block,
                index,
            } => write!(f, "assertion failed at @{function} ^{block} #{index}"),
            Failure::Underflow { class, object } => {
                write!(f, "{class} refcount of {object} dropped below its initial value")
            }
            Failure::TokenMisuse { what } => write!(f, "token misuse: {what}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub frames: Vec<Frame>,
    pub heap: BTreeMap<u32, Object>,
    pub next_obj: u32,
    /// Per class, per object delta since the start.
    pub ledger: BTreeMap<String, BTreeMap<Addr, i64>>,
    pub incs: BTreeMap<String, u64>,
    pub decs: BTreeMap<String, u64>,
    /// Nondet outcomes taken so far, in order.
    pub choices: Vec<u32>,
    /// Value returned by the entry function once it has returned.
    pub returned: Option<Option<Value>>,
}

impl State {
    pub fn fresh_object(&mut self, ty: Option<Ty>) -> Addr {
        let id = self.next_obj;
        self.next_obj += 1;
        self.heap.insert(id, Object::new(ty, true));
        Addr {
            obj: id,
            path: Vec::new(),
        }
    }

    fn alloca(&mut self, ty: Ty) -> Addr {
        let id = self.next_obj;
        self.next_obj += 1;
        self.heap.insert(id, Object::new(Some(ty), false));
        Addr {
            obj: id,
            path: Vec::new(),
        }
    }

    /// Aggregate delta of `class`.
    pub fn delta(&self, class: &str) -> i64 {
        self.ledger.get(class).map_or(0, |m| m.values().sum())
    }

    pub fn object_delta(&self, class: &str, addr: &Addr) -> i64 {
        self.ledger
            .get(class)
            .and_then(|m| m.get(addr))
            .copied()
            .unwrap_or(0)
    }

    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.frames.hash(&mut h);
        self.heap.hash(&mut h);
        self.ledger.hash(&mut h);
        h.finish()
    }

    /// Current position: function index and instruction id.
    pub fn position(&self) -> Option<(usize, InstId)> {
        self.frames
            .last()
            .map(|fr| (fr.func, InstId::new(fr.block, fr.index)))
    }
}

/// Exploration knobs shared by all explicit-state engines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepConfig {
    /// Nondet integers range over `0..domain`.
    pub domain: u32,
    pub underflow_check: bool,
    /// Maximum number of times one back edge may be taken per activation.
    pub bound: Option<u32>,
}

/// Result of one small step.
#[derive(Clone, Debug)]
pub enum Successor {
    Next(State),
    /// The entry function returned.
    Done(State),
    Fail(State, Failure),
    /// Path infeasible: failed assumption or null dereference.
    Pruned,
    /// Path cut by the loop bound.
    Bounded,
    /// The semantics is undefined here.
    Stuck(String),
}

/// Module prepared for execution.
pub struct Program<'m> {
    pub module: &'m Module,
    index: HashMap<&'m str, usize>,
    back_edges: Vec<BTreeSet<(usize, usize)>>,
    block_index: Vec<HashMap<&'m str, usize>>,
    globals: BTreeMap<String, u32>,
}

impl<'m> Program<'m> {
    pub fn new(module: &'m Module) -> Self {
        let index = module
            .functions
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.as_str(), i))
            .collect();
        let back_edges = module
            .functions
            .iter()
            .map(|f| Cfg::new(f).back_edges().into_iter().collect())
            .collect();
        let block_index = module
            .functions
            .iter()
            .map(|f| {
                f.blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (b.label.as_str(), i))
                    .collect()
            })
            .collect();
        let globals = module
            .globals
            .iter()
            .enumerate()
            .map(|(i, g)| (g.name.clone(), i as u32))
            .collect();
        Program {
            module,
            index,
            back_edges,
            block_index,
            globals,
        }
    }

    pub fn function(&self, i: usize) -> &'m Function {
        &self.module.functions[i]
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// State about to execute `entry` with the given arguments. Globals are
    /// objects with unknown contents.
    pub fn initial_state(&self, entry: usize, args: Vec<Value>) -> State {
        let mut st = State {
            frames: Vec::new(),
            heap: BTreeMap::new(),
            next_obj: 0,
            ledger: BTreeMap::new(),
            incs: BTreeMap::new(),
            decs: BTreeMap::new(),
            choices: Vec::new(),
            returned: None,
        };
        for g in &self.module.globals {
            st.fresh_object(Some(g.ty.clone()));
        }
        let f = self.function(entry);
        let env = f
            .params
            .iter()
            .zip(args)
            .map(|(p, v)| (p.name.clone(), v))
            .collect();
        st.frames.push(Frame {
            func: entry,
            block: 0,
            index: 0,
            env,
            ret_slot: None,
            loops: BTreeMap::new(),
        });
        st
    }
}

fn wrap(v: i64, ty: &Ty) -> i64 {
    match ty {
        Ty::Int(1) => v & 1,
        Ty::Int(w) if *w < 64 => {
            let shift = 64 - w;
            (v << shift) >> shift
        }
        _ => v,
    }
}

fn int_width_domain(ty: &Ty, domain: u32) -> u64 {
    match ty {
        Ty::Int(w) if *w < 32 => (domain as u64).min(1u64 << w),
        _ => domain as u64,
    }
}

type StepResult<T> = Result<T, Successor>;

fn stuck<T>(msg: impl Into<String>) -> StepResult<T> {
    Err(Successor::Stuck(msg.into()))
}

struct Ctx<'a, 'm> {
    prog: &'a Program<'m>,
    cfg: StepConfig,
}

impl Ctx<'_, '_> {
    fn eval(&self, st: &State, op: &Operand, ty: Option<&Ty>) -> StepResult<Value> {
        match op {
            Operand::Value(v) => match st.frames.last().and_then(|f| f.env.get(v)) {
                Some(val) => Ok(val.clone()),
                None => stuck(format!("%{v} has no value")),
            },
            Operand::Global(g) => match self.prog.globals.get(g) {
                Some(id) => Ok(Value::Addr(Addr {
                    obj: *id,
                    path: Vec::new(),
                })),
                None => Ok(Value::Func(g.clone())),
            },
            Operand::Int(i) => match ty {
                Some(t) if t.is_ptr() => {
                    if *i == 0 {
                        Ok(Value::Null)
                    } else {
                        stuck("integer literal used as an address")
                    }
                }
                Some(t) => Ok(Value::Int(wrap(*i, t))),
                None => Ok(Value::Int(*i)),
            },
            Operand::Null => Ok(Value::Null),
        }
    }

    fn int(&self, st: &State, op: &Operand, ty: &Ty) -> StepResult<i64> {
        match self.eval(st, op, Some(ty))? {
            Value::Int(i) => Ok(i),
            other => stuck(format!("{other} used as an integer")),
        }
    }

    fn truth(&self, st: &State, op: &Operand) -> StepResult<bool> {
        Ok(self.int(st, op, &Ty::Int(1))? != 0)
    }

    /// Address operand of a memory access; null aborts the path.
    fn target(&self, st: &State, op: &Operand, what: &str) -> StepResult<Addr> {
        match self.eval(st, op, None)? {
            Value::Addr(a) => {
                if st.heap.get(&a.obj).is_some_and(|o| o.token) {
                    return Err(Successor::Fail(
                        st.clone(),
                        Failure::TokenMisuse {
                            what: format!("token dereferenced by {what}"),
                        },
                    ));
                }
                Ok(a)
            }
            Value::Null => Err(Successor::Pruned),
            other => stuck(format!("{what} through non-address {other}")),
        }
    }

    /// Every value a nondet of type `ty` may take, in choice order.
    fn nondet_values(&self, st: &State, ty: &Ty) -> StepResult<Vec<(State, Value)>> {
        match ty {
            Ty::Int(_) => {
                let n = int_width_domain(ty, self.cfg.domain);
                Ok((0..n)
                    .map(|i| (st.clone(), Value::Int(wrap(i as i64, ty))))
                    .collect())
            }
            Ty::Ptr(inner) => {
                let mut fresh = st.clone();
                let a = fresh.fresh_object(inner.as_deref().cloned());
                Ok(vec![(st.clone(), Value::Null), (fresh, Value::Addr(a))])
            }
            other => stuck(format!("nondet value of type {other}")),
        }
    }

    fn branch<F>(&self, st: &State, ty: &Ty, mut set: F) -> Vec<Successor>
    where
        F: FnMut(&mut State, Value),
    {
        match self.nondet_values(st, ty) {
            Ok(vals) => vals
                .into_iter()
                .enumerate()
                .map(|(i, (mut s, v))| {
                    s.choices.push(i as u32);
                    set(&mut s, v);
                    Successor::Next(s)
                })
                .collect(),
            Err(e) => vec![e],
        }
    }

    fn enter_block(&self, st: &mut State, to_label: &str) -> StepResult<()> {
        let fr = st.frames.last().expect("frame");
        let func = fr.func;
        let from = fr.block;
        let Some(&to) = self.prog.block_index[func].get(to_label) else {
            return stuck(format!("branch to unknown block ^{to_label}"));
        };
        if self.prog.back_edges[func].contains(&(from, to)) {
            let fr = st.frames.last_mut().expect("frame");
            let n = fr.loops.entry((from, to)).or_insert(0);
            *n += 1;
            if self.cfg.bound.is_some_and(|k| *n > k) {
                return Err(Successor::Bounded);
            }
        }
        let f = self.prog.function(func);
        let from_label = &f.blocks[from].label;
        let block = &f.blocks[to];
        let mut assigned = Vec::new();
        for inst in &block.insts {
            let Op::Phi { ty, incoming } = &inst.op else {
                break;
            };
            let Some((_, v)) = incoming.iter().find(|(l, _)| l == from_label) else {
                return stuck(format!("phi in ^{to_label} has no entry for ^{from_label}"));
            };
            let val = self.eval(st, v, Some(ty))?;
            assigned.push((inst.result.clone().unwrap_or_default(), val));
        }
        let fr = st.frames.last_mut().expect("frame");
        fr.block = to;
        fr.index = assigned.len();
        fr.env.extend(assigned);
        Ok(())
    }

    fn advance(st: &mut State) {
        if let Some(fr) = st.frames.last_mut() {
            fr.index += 1;
        }
    }

    fn set(st: &mut State, name: &Option<String>, v: Value) {
        if let (Some(n), Some(fr)) = (name, st.frames.last_mut()) {
            fr.env.insert(n.clone(), v);
        }
    }

    fn step(&self, st: &State) -> Vec<Successor> {
        match self.step_inner(st) {
            Ok(v) => v,
            Err(e) => vec![e],
        }
    }

    fn step_inner(&self, st: &State) -> StepResult<Vec<Successor>> {
        let Some(fr) = st.frames.last() else {
            return stuck("no frame");
        };
        let f = self.prog.function(fr.func);
        let Some(inst) = f.blocks.get(fr.block).and_then(|b| b.insts.get(fr.index)) else {
            return stuck(format!("fell off block ^{}", f.blocks[fr.block].label));
        };
        let res = &inst.result;
        let mut next = st.clone();
        match &inst.op {
            Op::Alloca(ty) => {
                let a = next.alloca(ty.clone());
                Self::set(&mut next, res, Value::Addr(a));
            }
            Op::Load { ty, addr } => {
                let a = self.target(st, addr, "load")?;
                let obj = &st.heap[&a.obj];
                if let Some(v) = obj.cells.get(&a.path) {
                    Self::set(&mut next, res, v.clone());
                } else if obj.is_lazy(&a.path) {
                    let succ = self.branch(&next, ty, |s, v| {
                        if let Some(o) = s.heap.get_mut(&a.obj) {
                            o.cells.insert(a.path.clone(), v.clone());
                        }
                        Self::set(s, res, v);
                        Self::advance(s);
                    });
                    return Ok(succ);
                } else {
                    return stuck(format!("read of never-written memory {a}"));
                }
            }
            Op::Store { ty, value, addr } => {
                let v = self.eval(st, value, Some(ty))?;
                if let Value::Addr(va) = &v {
                    if st.heap.get(&va.obj).is_some_and(|o| o.token) {
                        return Ok(vec![Successor::Fail(
                            st.clone(),
                            Failure::TokenMisuse {
                                what: "token stored to memory".into(),
                            },
                        )]);
                    }
                }
                let a = self.target(st, addr, "store")?;
                if let Some(o) = next.heap.get_mut(&a.obj) {
                    o.cells.insert(a.path, v);
                }
            }
            Op::FieldAddr { base, path, .. } => {
                let v = match self.eval(st, base, None)? {
                    Value::Addr(mut a) => {
                        a.path.extend(path.iter().cloned());
                        Value::Addr(a)
                    }
                    Value::Null => Value::Null,
                    other => return stuck(format!("field address of {other}")),
                };
                Self::set(&mut next, res, v);
            }
            Op::Call { ret, callee, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(st, &a.value, None)?);
                }
                if let Some(fi) = self.prog.function_index(callee) {
                    let g = self.prog.function(fi);
                    let env = g
                        .params
                        .iter()
                        .zip(vals)
                        .map(|(p, v)| (p.name.clone(), v))
                        .collect();
                    next.frames.push(Frame {
                        func: fi,
                        block: 0,
                        index: 0,
                        env,
                        ret_slot: res.clone(),
                        loops: BTreeMap::new(),
                    });
                    return Ok(vec![Successor::Next(next)]);
                }
                for (a, v) in args.iter().zip(&vals) {
                    if let (true, Value::Addr(addr)) = (a.writeonly, v) {
                        if let Some(o) = next.heap.get_mut(&addr.obj) {
                            o.havoc(&addr.path);
                        }
                    }
                }
                if !ret.is_void() {
                    return Ok(self.branch(&next, ret, |s, v| {
                        Self::set(s, res, v);
                        Self::advance(s);
                    }));
                }
            }
            Op::Br(to) => {
                self.enter_block(&mut next, to)?;
                return Ok(vec![Successor::Next(next)]);
            }
            Op::CondBr {
                cond,
                then_to,
                else_to,
            } => {
                let to = if self.truth(st, cond)? { then_to } else { else_to };
                self.enter_block(&mut next, to)?;
                return Ok(vec![Successor::Next(next)]);
            }
            Op::Switch {
                ty,
                value,
                default,
                cases,
            } => {
                let v = self.int(st, value, ty)?;
                let to = cases
                    .iter()
                    .find(|(c, _)| wrap(*c, ty) == v)
                    .map_or(default, |(_, l)| l);
                self.enter_block(&mut next, to)?;
                return Ok(vec![Successor::Next(next)]);
            }
            Op::Phi { .. } => return stuck("phi after the head of its block"),
            Op::Ret(v) => {
                let val = match v {
                    Some((ty, o)) => Some(self.eval(st, o, Some(ty))?),
                    None => None,
                };
                let done = next.frames.pop().expect("frame");
                if next.frames.is_empty() {
                    next.returned = Some(val);
                    return Ok(vec![Successor::Done(next)]);
                }
                if let Some(v) = val {
                    Self::set(&mut next, &done.ret_slot, v);
                }
            }
            Op::Bin { op, ty, lhs, rhs } => {
                let a = self.int(st, lhs, ty)?;
                let b = self.int(st, rhs, ty)?;
                let r = match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                };
                Self::set(&mut next, res, Value::Int(wrap(r, ty)));
            }
            Op::Cmp { pred, ty, lhs, rhs } => {
                let a = self.eval(st, lhs, Some(ty))?;
                let b = self.eval(st, rhs, Some(ty))?;
                let r = match (&a, &b) {
                    (Value::Int(x), Value::Int(y)) => pred.eval(*x, *y),
                    _ => match pred {
                        CmpPred::Eq => a == b,
                        CmpPred::Ne => a != b,
                        _ => return stuck(format!("ordered comparison of {a} and {b}")),
                    },
                };
                Self::set(&mut next, res, Value::Int(r as i64));
            }
            Op::Cast { value, to } => {
                let v = self.eval(st, value, None)?;
                let out = match (v, to) {
                    (Value::Int(i), Ty::Int(_)) => Value::Int(wrap(i, to)),
                    (Value::Int(0), Ty::Ptr(_)) => Value::Null,
                    (Value::Int(_), _) => return stuck("integer cast to an address"),
                    (Value::Null, Ty::Int(_)) => Value::Int(0),
                    (Value::Addr(a), Ty::Int(_)) => {
                        Value::Int(wrap((a.obj as i64 + 1) * 4096 + a.path.len() as i64, to))
                    }
                    (Value::Func(_), Ty::Int(_)) => Value::Int(1),
                    (v, _) => v,
                };
                Self::set(&mut next, res, out);
            }
            Op::Nondet(ty) => {
                return Ok(self.branch(&next, ty, |s, v| {
                    Self::set(s, res, v);
                    Self::advance(s);
                }));
            }
            Op::Assert(c) => {
                if !self.truth(st, c)? {
                    return Ok(vec![Successor::Fail(
                        st.clone(),
                        Failure::Assertion {
                            function: f.name.clone(),
                            block: f.blocks[fr.block].label.clone(),
                            index: fr.index,
                        },
                    )]);
                }
            }
            Op::Assume(c) => {
                if !self.truth(st, c)? {
                    return Ok(vec![Successor::Pruned]);
                }
            }
            Op::RcInc { class, obj } | Op::RcDec { class, obj } => {
                let inc = matches!(inst.op, Op::RcInc { .. });
                match self.eval(st, obj, None)? {
                    Value::Null => {}
                    Value::Addr(a) => {
                        if st.heap.get(&a.obj).is_some_and(|o| o.token) {
                            return Ok(vec![Successor::Fail(
                                st.clone(),
                                Failure::TokenMisuse {
                                    what: "refcount operation on a token".into(),
                                },
                            )]);
                        }
                        let counts = if inc { &mut next.incs } else { &mut next.decs };
                        *counts.entry(class.clone()).or_default() += 1;
                        let d = next
                            .ledger
                            .entry(class.clone())
                            .or_default()
                            .entry(a.clone())
                            .or_default();
                        *d += if inc { 1 } else { -1 };
                        if !inc && *d < 0 && self.cfg.underflow_check {
                            return Ok(vec![Successor::Fail(
                                next,
                                Failure::Underflow {
                                    class: class.clone(),
                                    object: a.to_string(),
                                },
                            )]);
                        }
                    }
                    other => return stuck(format!("refcount operation on {other}")),
                }
            }
            Op::RcDelta { class } => {
                let d = next.delta(class);
                Self::set(&mut next, res, Value::Int(d));
            }
            Op::Asm { ty, .. } => {
                if !ty.is_void() {
                    return Ok(self.branch(&next, ty, |s, v| {
                        Self::set(s, res, v);
                        Self::advance(s);
                    }));
                }
            }
        }
        Self::advance(&mut next);
        Ok(vec![Successor::Next(next)])
    }
}

/// All successors of `st`, nondet outcomes in choice order.
pub fn step(prog: &Program, st: &State, cfg: StepConfig) -> Vec<Successor> {
    Ctx { prog, cfg }.step(st)
}
