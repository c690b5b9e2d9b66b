//! Exhaustive inlining of calls to non-recursive functions.

use std::collections::{BTreeMap, BTreeSet};

use crate::kir::transform::{inline_call, InlineError};
use crate::kir::{Module, Op};

/// Defined functions that can reach themselves through calls.
pub fn recursive_functions(m: &Module) -> BTreeSet<String> {
    let callees: BTreeMap<&str, BTreeSet<&str>> = m
        .functions
        .iter()
        .map(|f| {
            let cs = f
                .instructions()
                .filter_map(|(_, i)| match &i.op {
                    Op::Call { callee, .. } if m.function(callee).is_some() => {
                        Some(callee.as_str())
                    }
                    _ => None,
                })
                .collect();
            (f.name.as_str(), cs)
        })
        .collect();
    let mut out = BTreeSet::new();
    for f in &m.functions {
        let mut seen = BTreeSet::new();
        let mut work: Vec<&str> = callees[f.name.as_str()].iter().copied().collect();
        while let Some(g) = work.pop() {
            if g == f.name {
                out.insert(f.name.clone());
                break;
            }
            if seen.insert(g) {
                work.extend(callees[g].iter().copied());
            }
        }
    }
    out
}

/// Inlines every call whose callee is defined and not recursive, in every
/// function, until none is left.
pub fn inline_all_nonrecursive(m: &Module) -> Result<Module, InlineError> {
    let recursive = recursive_functions(m);
    let mut out = m.clone();
    for fi in 0..out.functions.len() {
        loop {
            let f = &out.functions[fi];
            let site = f.instructions().find_map(|(id, i)| match &i.op {
                Op::Call { callee, .. }
                    if !recursive.contains(callee) && m.function(callee).is_some() =>
                {
                    Some((id, callee.clone()))
                }
                _ => None,
            });
            let Some((id, callee)) = site else {
                break;
            };
            let body = m.function(&callee).expect("defined callee");
            out.functions[fi] = inline_call(&out.functions[fi], id, body)?;
        }
    }
    Ok(out)
}
