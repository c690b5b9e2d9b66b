//! Dead-code elimination baseline: repeatedly drop instructions whose
//! result nobody reads and which have no effect besides that result.

use std::collections::HashSet;

use crate::kir::{Function, Module, Op};

fn removable(op: &Op) -> bool {
    op.is_pure() || matches!(op, Op::Load { .. } | Op::Alloca(_) | Op::Phi { .. })
}

fn dce_function(f: &Function) -> Function {
    let mut out = f.clone();
    loop {
        let used: HashSet<String> = out
            .instructions()
            .flat_map(|(_, i)| i.op.used_values().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let mut changed = false;
        for b in &mut out.blocks {
            let before = b.insts.len();
            b.insts.retain(|i| {
                !(removable(&i.op) && i.result.as_ref().is_none_or(|r| !used.contains(r)))
            });
            changed |= b.insts.len() != before;
        }
        if !changed {
            return out;
        }
    }
}

pub fn dce_baseline(m: &Module) -> Module {
    let mut out = m.clone();
    for f in &mut out.functions {
        *f = dce_function(f);
    }
    out
}
