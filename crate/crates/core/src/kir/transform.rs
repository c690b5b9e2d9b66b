//! Rewriting helpers shared by the model rewriter, the slicer and the
//! verification front ends.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{Block, Function, Inst, InstId, Op, Operand};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InlineError {
    #[error("instruction {0} is not a call")]
    NotACall(InstId),
    #[error("call to {callee} passes {got} arguments, expected {expected}")]
    Arity {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("call to {0} uses the result of a void function")]
    VoidResult(String),
}

/// Generates names that do not clash with any name already in use.
#[derive(Clone, Debug, Default)]
pub struct NameGen {
    used: HashSet<String>,
}

impl NameGen {
    pub fn values_of(f: &Function) -> Self {
        let mut used: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
        used.extend(f.instructions().filter_map(|(_, i)| i.result.clone()));
        NameGen { used }
    }

    pub fn labels_of(f: &Function) -> Self {
        NameGen {
            used: f.blocks.iter().map(|b| b.label.clone()).collect(),
        }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn fresh(&mut self, base: &str) -> String {
        if self.used.insert(base.to_string()) {
            return base.to_string();
        }
        let mut k = 1usize;
        loop {
            let cand = format!("{base}.{k}");
            if self.used.insert(cand.clone()) {
                return cand;
            }
            k += 1;
        }
    }
}

/// Replaces every read of `%name` in `f` by `with`.
pub fn replace_uses(f: &mut Function, name: &str, with: &Operand) {
    for b in &mut f.blocks {
        for inst in &mut b.insts {
            for op in inst.op.operands_mut() {
                if op.as_value() == Some(name) {
                    *op = with.clone();
                }
            }
        }
    }
}

/// Renames the incoming label `old` to `new` in the phis of `blocks`.
pub fn retarget_phis(f: &mut Function, blocks: &[String], old: &str, new: &str) {
    for b in &mut f.blocks {
        if !blocks.contains(&b.label) {
            continue;
        }
        for inst in &mut b.insts {
            if let Op::Phi { incoming, .. } = &mut inst.op {
                for (l, _) in incoming.iter_mut() {
                    if l == old {
                        *l = new.to_string();
                    }
                }
            }
        }
    }
}

/// Inlines `callee` at the call instruction `id` of `f`.
///
/// The block holding the call is split: the head jumps to the copied entry
/// block, every copied return jumps to a continuation block that receives
/// the remaining instructions, and the call result becomes a phi over the
/// returned values. Parameters are substituted by the actual operands.
pub fn inline_call(f: &Function, id: InstId, callee: &Function) -> Result<Function, InlineError> {
    let call = f.inst(id).clone();
    let Op::Call {
        callee: cname,
        args,
        ..
    } = &call.op
    else {
        return Err(InlineError::NotACall(id));
    };
    if args.len() != callee.params.len() {
        return Err(InlineError::Arity {
            callee: cname.clone(),
            expected: callee.params.len(),
            got: args.len(),
        });
    }
    if call.result.is_some() && callee.ret.is_void() {
        return Err(InlineError::VoidResult(cname.clone()));
    }

    let mut values = NameGen::values_of(f);
    let mut labels = NameGen::labels_of(f);
    let prefix = format!("{}.", callee.name);

    let mut subst: HashMap<String, Operand> = HashMap::new();
    for (p, a) in callee.params.iter().zip(args) {
        subst.insert(p.name.clone(), a.value.clone());
    }
    for (_, inst) in callee.instructions() {
        if let Some(r) = &inst.result {
            let fresh = values.fresh(&format!("{prefix}{r}"));
            subst.insert(r.clone(), Operand::Value(fresh));
        }
    }
    let mut label_map: HashMap<String, String> = HashMap::new();
    for b in &callee.blocks {
        label_map.insert(b.label.clone(), labels.fresh(&format!("{prefix}{}", b.label)));
    }
    let host = &f.blocks[id.block];
    let cont_label = labels.fresh(&format!("{}.cont", host.label));

    let mut returns: Vec<(String, Operand)> = Vec::new();
    let mut copied: Vec<Block> = Vec::new();
    for b in &callee.blocks {
        let label = label_map[&b.label].clone();
        let mut nb = Block::new(label.clone());
        for inst in &b.insts {
            let mut op = inst.op.clone();
            for o in op.operands_mut() {
                if let Some(v) = o.as_value() {
                    if let Some(s) = subst.get(v) {
                        *o = s.clone();
                    }
                }
            }
            for s in op.successors_mut() {
                *s = label_map[s.as_str()].clone();
            }
            if let Op::Phi { incoming, .. } = &mut op {
                for (l, _) in incoming.iter_mut() {
                    if let Some(nl) = label_map.get(l.as_str()) {
                        *l = nl.clone();
                    }
                }
            }
            if let Op::Ret(r) = op {
                if let Some((_, v)) = r {
                    returns.push((label.clone(), v));
                }
                nb.insts.push(Inst::void(Op::Br(cont_label.clone())));
                continue;
            }
            let result = inst.result.as_ref().map(|r| match &subst[r] {
                Operand::Value(n) => n.clone(),
                _ => unreachable!("results map to fresh names"),
            });
            nb.insts.push(Inst::new(result, op));
        }
        copied.push(nb);
    }

    let mut out = f.clone();
    let host = &mut out.blocks[id.block];
    let host_label = host.label.clone();
    let tail: Vec<Inst> = host.insts.split_off(id.index + 1);
    host.insts.pop();
    host.insts.push(Inst::void(Op::Br(label_map[&callee.blocks[0].label].clone())));
    let old_succs: Vec<String> = tail
        .last()
        .map(|t| t.op.successors().into_iter().map(str::to_string).collect())
        .unwrap_or_default();

    let mut cont = Block::new(cont_label.clone());
    if let Some(r) = &call.result {
        cont.insts.push(Inst::def(
            r.clone(),
            Op::Phi {
                ty: callee.ret.clone(),
                incoming: returns,
            },
        ));
    }
    cont.insts.extend(tail);

    let at = id.block + 1;
    let mut new_blocks = copied;
    new_blocks.push(cont);
    out.blocks.splice(at..at, new_blocks);
    retarget_phis(&mut out, &old_succs, &host_label, &cont_label);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kir::validate;
    use crate::parse::parse_module;

    const SRC: &str = r#"
fn @pick(%c: i1, %x: i32) -> i32 {
^entry:
  condbr %c, ^a, ^b
^a:
  ret i32 %x
^b:
  %y = add i32 %x, 1
  ret i32 %y
}

fn @f(%c: i1) -> i32 {
^entry:
  %v = call i32 @pick(%c, 7)
  %w = add i32 %v, 1
  condbr %c, ^t, ^e
^t:
  br ^e
^e:
  %p = phi i32 [^entry: %w], [^t: 0]
  ret i32 %p
}
"#;

    #[test]
    fn inlines_with_fresh_names_and_phi_result() {
        let mut m = parse_module(SRC).unwrap();
        let callee = m.function("pick").unwrap().clone();
        let f = m.function("f").unwrap();
        let inlined = inline_call(f, InstId::new(0, 0), &callee).unwrap();
        assert_eq!(inlined.blocks.len(), 3 + 3 + 1);
        assert!(inlined
            .instructions()
            .all(|(_, i)| !matches!(&i.op, Op::Call { .. })));
        *m.function_mut("f").unwrap() = inlined;
        assert!(validate(&m).is_empty(), "{:?}", validate(&m));
        let f = m.function("f").unwrap();
        let e = f.block("e").unwrap();
        let Op::Phi { incoming, .. } = &e.insts[0].op else {
            panic!()
        };
        assert_eq!(incoming[0].0, "entry.cont");
    }

    #[test]
    fn arity_mismatch() {
        let m = parse_module(SRC).unwrap();
        let mut callee = m.function("pick").unwrap().clone();
        callee.params.pop();
        let err = inline_call(m.function("f").unwrap(), InstId::new(0, 0), &callee).unwrap_err();
        assert!(matches!(err, InlineError::Arity { .. }));
    }

    #[test]
    fn fresh_names_avoid_clashes() {
        let mut g = NameGen::default();
        g.reserve("x");
        assert_eq!(g.fresh("x"), "x.1");
        assert_eq!(g.fresh("x"), "x.2");
        assert_eq!(g.fresh("y"), "y");
    }
}
