//! Necessity-based slicing.
//!
//! Step one computes the essential parameters: those addressing a
//! kref-embedding aggregate through which the function (or a callee) may
//! change a refcount. Step two marks the necessary instructions of every
//! function as a least fixpoint of the rules in [`Rule`]. Everything else is
//! deleted; deleted results still read by kept instructions become `nondet`
//! values.

mod dce;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::harness::HARNESS_MAIN;
use crate::kir::cfg::cfg_predecessors;
use crate::kir::objects::{ObjectAnalysis, ObjectSet, Origin};
use crate::kir::transform::NameGen;
use crate::kir::{Function, Inst, InstId, Module, Op, Operand, Ty};
use crate::refmodel::find_kref_types;

pub use dce::dce_baseline;

/// Essential `(function, parameter index)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EssentialArgs(BTreeSet<(String, usize)>);

impl EssentialArgs {
    pub fn get(&self, func: &str, index: usize) -> bool {
        self.0.contains(&(func.to_string(), index))
    }

    pub fn insert(&mut self, func: &str, index: usize) -> bool {
        self.0.insert((func.to_string(), index))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(f, i)| (f.as_str(), *i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Why an instruction is necessary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Control flow, phi, alloca, or a verification primitive.
    #[serde(rename = "R1")]
    R1,
    /// Call passing an essential object to an essential parameter.
    #[serde(rename = "R2")]
    R2,
    /// Load from an object created by a necessary instruction.
    #[serde(rename = "R3")]
    R3,
    /// Store to memory read by a necessary load.
    #[serde(rename = "R4")]
    R4,
    /// Computation whose result is read by a necessary instruction.
    #[serde(rename = "R5")]
    R5,
    /// Terminator of a predecessor of a block holding a necessary instruction.
    #[serde(rename = "pred")]
    Pred,
    /// Call from the harness main to a defined function.
    #[serde(rename = "root")]
    Root,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::R1,
        Rule::R2,
        Rule::R3,
        Rule::R4,
        Rule::R5,
        Rule::Pred,
        Rule::Root,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::Pred => "pred",
            Rule::Root => "root",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Necessary instructions of one function.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SliceMarking {
    pub function: String,
    pub necessary: BTreeSet<InstId>,
    pub provenance: BTreeMap<InstId, Rule>,
}

impl SliceMarking {
    pub fn contains(&self, id: InstId) -> bool {
        self.necessary.contains(&id)
    }

    fn mark(&mut self, id: InstId, rule: Rule) -> bool {
        if self.necessary.insert(id) {
            self.provenance.insert(id, rule);
            true
        } else {
            false
        }
    }
}

/// Markings for every function of a module.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleMarking {
    pub essential: EssentialArgs,
    pub functions: BTreeMap<String, SliceMarking>,
}

fn candidate_params(f: &Function, kref: &BTreeSet<String>) -> Vec<usize> {
    f.params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.ty.pointee_agg().is_some_and(|a| kref.contains(a)))
        .map(|(i, _)| i)
        .collect()
}

/// Least fixpoint of the essential-parameter relation over the call graph.
pub fn collect_essential_args(m: &Module) -> EssentialArgs {
    let kref = find_kref_types(m);
    let mut ess = EssentialArgs::default();
    let analyses: Vec<ObjectAnalysis> = m
        .functions
        .iter()
        .map(|f| ObjectAnalysis::new(m, f))
        .collect();
    loop {
        let mut changed = false;
        for (f, oa) in m.functions.iter().zip(&analyses) {
            for i in candidate_params(f, &kref) {
                if ess.get(&f.name, i) {
                    continue;
                }
                let param = Origin::Param(i);
                let modifies = f.instructions().any(|(_, inst)| match &inst.op {
                    Op::RcInc { obj, .. } | Op::RcDec { obj, .. } => {
                        oa.objects(obj).contains(&param)
                    }
                    Op::Call { callee, args, .. } if m.function(callee).is_some() => {
                        args.iter().enumerate().any(|(j, a)| {
                            ess.get(callee, j) && oa.objects(&a.value).contains(&param)
                        })
                    }
                    _ => false,
                });
                if modifies {
                    ess.insert(&f.name, i);
                    changed = true;
                }
            }
        }
        if !changed {
            return ess;
        }
    }
}

/// Per-function facts shared by the rule applications.
struct Facts<'a> {
    m: &'a Module,
    f: &'a Function,
    oa: ObjectAnalysis<'a>,
    defs: HashMap<&'a str, InstId>,
    uses: HashMap<&'a str, Vec<InstId>>,
    preds: Vec<Vec<usize>>,
    /// Objects through which a call may reach an essential parameter.
    essential_objects: ObjectSet,
    is_harness_main: bool,
}

impl<'a> Facts<'a> {
    fn new(m: &'a Module, f: &'a Function, ess: &EssentialArgs) -> Self {
        let kref = find_kref_types(m);
        let oa = ObjectAnalysis::new(m, f);
        let mut essential_objects = ObjectSet::new();
        for i in 0..f.params.len() {
            if ess.get(&f.name, i) {
                essential_objects.insert(Origin::Param(i));
            }
        }
        for (_, inst) in f.instructions() {
            if let Some(r) = &inst.result {
                if oa
                    .value_type(r)
                    .and_then(Ty::pointee_agg)
                    .is_some_and(|a| kref.contains(a))
                {
                    essential_objects.insert(Origin::Inst(r.clone()));
                }
            }
        }
        for g in &m.globals {
            if matches!(&g.ty, Ty::Agg(a) if kref.contains(a)) {
                essential_objects.insert(Origin::Global(g.name.clone()));
            }
        }
        let label_preds = cfg_predecessors(f);
        let preds = f
            .blocks
            .iter()
            .map(|b| {
                label_preds[&b.label]
                    .iter()
                    .filter_map(|l| f.block_index(l))
                    .collect()
            })
            .collect();
        Facts {
            m,
            f,
            defs: f.defs(),
            uses: f.uses(),
            oa,
            preds,
            essential_objects,
            is_harness_main: f.name == HARNESS_MAIN && f.params.is_empty(),
        }
    }

    fn objects(&self, op: &Operand) -> ObjectSet {
        let mut set = self.oa.objects(op);
        set.remove(&Origin::Null);
        set
    }

    fn used_by_necessary(&self, name: &str, marking: &SliceMarking) -> bool {
        self.uses
            .get(name)
            .is_some_and(|us| us.iter().any(|u| marking.contains(*u)))
    }

    fn load_reads(&self, marking: &SliceMarking) -> ObjectSet {
        let mut out = ObjectSet::new();
        for id in &marking.necessary {
            if let Op::Load { addr, .. } = &self.f.inst(*id).op {
                out.extend(self.objects(addr));
            }
        }
        out
    }

    /// Rule under which the unmarked instruction `id` becomes necessary.
    fn applies(&self, id: InstId, marking: &SliceMarking, ess: &EssentialArgs) -> Option<Rule> {
        let inst = self.f.inst(id);
        match &inst.op {
            op if is_r1(op) => Some(Rule::R1),
            Op::Call { callee, args, .. } => {
                if self.m.function(callee).is_none() {
                    return None;
                }
                if self.is_harness_main {
                    return Some(Rule::Root);
                }
                let hit = args.iter().enumerate().any(|(j, a)| {
                    ess.get(callee, j)
                        && !self.objects(&a.value).is_disjoint(&self.essential_objects)
                });
                hit.then_some(Rule::R2)
            }
            Op::Load { addr, .. } => {
                let hit = self.objects(addr).iter().any(|o| match o {
                    Origin::Inst(n) => self
                        .defs
                        .get(n.as_str())
                        .is_some_and(|d| marking.contains(*d)),
                    _ => false,
                });
                hit.then_some(Rule::R3)
            }
            Op::Store { addr, .. } => {
                let reads = self.load_reads(marking);
                (!self.objects(addr).is_disjoint(&reads)).then_some(Rule::R4)
            }
            op if op.is_pure() => {
                // Operands that end up deleted are patched with nondet
                // values, so every operand is available to a kept
                // computation; what remains is that a necessary
                // instruction reads the result.
                let r = inst.result.as_deref()?;
                self.used_by_necessary(r, marking).then_some(Rule::R5)
            }
            _ => None,
        }
    }
}

fn is_r1(op: &Op) -> bool {
    op.is_terminator()
        || matches!(
            op,
            Op::Phi { .. }
                | Op::Alloca(_)
                | Op::Assert(_)
                | Op::Assume(_)
                | Op::RcInc { .. }
                | Op::RcDec { .. }
                | Op::RcDelta { .. }
        )
}

/// Least fixpoint of the necessity rules for one function.
pub fn mark_necessary(f: &Function, ess: &EssentialArgs, m: &Module) -> SliceMarking {
    let facts = Facts::new(m, f, ess);
    let mut marking = SliceMarking {
        function: f.name.clone(),
        ..SliceMarking::default()
    };
    for (id, inst) in f.instructions() {
        if is_r1(&inst.op) {
            marking.mark(id, Rule::R1);
        }
    }
    loop {
        let mut changed = false;
        for id in f.inst_ids() {
            if marking.contains(id) {
                continue;
            }
            if let Some(rule) = facts.applies(id, &marking, ess) {
                changed |= marking.mark(id, rule);
            }
        }
        changed |= propagate_to_predecessors(&facts, &mut marking);
        if !changed {
            return marking;
        }
    }
}

fn propagate_to_predecessors(facts: &Facts, marking: &mut SliceMarking) -> bool {
    let blocks: BTreeSet<usize> = marking.necessary.iter().map(|id| id.block).collect();
    let mut changed = false;
    for b in blocks {
        for &p in &facts.preds[b] {
            let len = facts.f.blocks[p].insts.len();
            if len > 0 && facts.f.blocks[p].insts[len - 1].op.is_terminator() {
                changed |= marking.mark(InstId::new(p, len - 1), Rule::Pred);
            }
        }
    }
    changed
}

/// Whether one more application of every rule adds nothing to `marking`.
pub fn is_closed(f: &Function, ess: &EssentialArgs, m: &Module, marking: &SliceMarking) -> bool {
    let facts = Facts::new(m, f, ess);
    for id in f.inst_ids() {
        if !marking.contains(id) && facts.applies(id, marking, ess).is_some() {
            return false;
        }
    }
    let mut probe = marking.clone();
    !propagate_to_predecessors(&facts, &mut probe)
}

pub fn mark_module(m: &Module) -> ModuleMarking {
    let essential = collect_essential_args(m);
    let functions = m
        .functions
        .iter()
        .map(|f| (f.name.clone(), mark_necessary(f, &essential, m)))
        .collect();
    ModuleMarking {
        essential,
        functions,
    }
}

/// Stores that re-create the values a deleted call may have written
/// through a `writeonly` argument, restricted to memory that a necessary
/// load reads. The address is rebuilt from the underlying object so it only
/// depends on values that survive slicing.
fn backfill(facts: &Facts, marking: &SliceMarking, call: &Op, names: &mut NameGen) -> Vec<Inst> {
    let Op::Call { args, .. } = call else {
        return Vec::new();
    };
    let mut wanted: BTreeSet<(Origin, Vec<String>, Ty)> = BTreeSet::new();
    for a in args.iter().filter(|a| a.writeonly) {
        let arg_objs = facts.objects(&a.value);
        let Some(arg_path) = facts.oa.field_path(&a.value) else {
            continue;
        };
        for id in &marking.necessary {
            let Op::Load { ty, addr } = &facts.f.inst(*id).op else {
                continue;
            };
            let Some(load_path) = facts.oa.field_path(addr) else {
                continue;
            };
            if !load_path.starts_with(&arg_path) {
                continue;
            }
            for o in facts.objects(addr).intersection(&arg_objs) {
                let usable = match o {
                    Origin::Inst(n) => facts
                        .defs
                        .get(n.as_str())
                        .is_some_and(|d| marking.contains(*d)),
                    _ => true,
                };
                if usable {
                    wanted.insert((o.clone(), load_path.clone(), ty.clone()));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (origin, path, ty) in wanted {
        let base = facts.oa.origin_operand(&origin);
        let addr = if path.is_empty() {
            base
        } else {
            let base_ty = facts.m.operand_type(&value_types(facts), &base);
            let Some(agg) = base_ty.as_ref().and_then(Ty::pointee_agg) else {
                continue;
            };
            let name = names.fresh("wo.addr");
            out.push(Inst::def(
                name.clone(),
                Op::FieldAddr {
                    agg: agg.to_string(),
                    base,
                    path,
                },
            ));
            Operand::Value(name)
        };
        let v = names.fresh("wo.val");
        out.push(Inst::def(v.clone(), Op::Nondet(ty.clone())));
        out.push(Inst::void(Op::Store {
            ty,
            value: Operand::Value(v),
            addr,
        }));
    }
    out
}

fn value_types(facts: &Facts) -> HashMap<String, Ty> {
    facts.m.value_types(facts.f)
}

fn slice_function(m: &Module, f: &Function, marking: &SliceMarking, ess: &EssentialArgs) -> Function {
    let facts = Facts::new(m, f, ess);
    let types = m.value_types(f);
    let mut names = NameGen::values_of(f);
    let mut out = f.clone();
    for (bi, block) in f.blocks.iter().enumerate() {
        let mut insts = Vec::with_capacity(block.insts.len());
        for (ii, inst) in block.insts.iter().enumerate() {
            let id = InstId::new(bi, ii);
            if marking.contains(id) {
                insts.push(inst.clone());
                continue;
            }
            if matches!(inst.op, Op::Call { .. }) {
                insts.extend(backfill(&facts, marking, &inst.op, &mut names));
            }
            if let Some(r) = &inst.result {
                if facts.used_by_necessary(r, marking) {
                    let ty = types.get(r).cloned().unwrap_or(Ty::Int(64));
                    insts.push(Inst::def(r.clone(), Op::Nondet(ty)));
                }
            }
        }
        out.blocks[bi].insts = insts;
    }
    out
}

/// Deletes unmarked instructions, patching dangling operands.
pub fn slice(m: &Module, marking: &ModuleMarking) -> Module {
    let mut out = m.clone();
    for (fi, f) in m.functions.iter().enumerate() {
        if let Some(mk) = marking.functions.get(&f.name) {
            out.functions[fi] = slice_function(m, f, mk, &marking.essential);
        }
    }
    out
}

/// Instruction counts and provenance summary of a slicing run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceStats {
    pub before: usize,
    pub after: usize,
    /// Necessary instructions per rule, keyed by rule name.
    pub rules: BTreeMap<String, usize>,
    pub per_function: BTreeMap<String, FunctionStats>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionStats {
    pub before: usize,
    pub after: usize,
}

pub fn stats(before: &Module, after: &Module, marking: &ModuleMarking) -> SliceStats {
    let mut rules: BTreeMap<String, usize> =
        Rule::ALL.iter().map(|r| (r.name().to_string(), 0)).collect();
    for mk in marking.functions.values() {
        for r in mk.provenance.values() {
            *rules.entry(r.name().to_string()).or_default() += 1;
        }
    }
    let per_function = before
        .functions
        .iter()
        .map(|f| {
            let a = after.function(&f.name).map_or(0, Function::inst_count);
            (
                f.name.clone(),
                FunctionStats {
                    before: f.inst_count(),
                    after: a,
                },
            )
        })
        .collect();
    SliceStats {
        before: before.total_insts(),
        after: after.total_insts(),
        rules,
        per_function,
    }
}

/// Marks and slices in one go.
pub fn slice_module(m: &Module) -> (Module, ModuleMarking, SliceStats) {
    let marking = mark_module(m);
    let out = slice(m, &marking);
    let st = stats(m, &out, &marking);
    (out, marking, st)
}

#[cfg(test)]
mod tests;
