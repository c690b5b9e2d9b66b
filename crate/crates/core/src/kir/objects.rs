//! Underlying-object resolution.
//!
//! An address value is traced back through field-address computations,
//! pointer casts and phis to the allocation, parameter or global it was
//! derived from. Joins with several distinct sources yield a may-set.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use super::{Function, InstId, Module, Op, Operand, Ty};

/// Where an address value originates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    /// Result of an instruction that produces a fresh address: `alloca`,
    /// `nondet`, `load`, `call`, `asm`, or an integer-to-pointer cast.
    Inst(String),
    Param(usize),
    /// A global variable or function address.
    Global(String),
    Null,
}

pub type ObjectSet = BTreeSet<Origin>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UnderlyingError {
    #[error("operand {0} does not have an address type")]
    NotAnAddress(String),
}

/// Per-function helper answering underlying-object queries.
pub struct ObjectAnalysis<'a> {
    func: &'a Function,
    defs: HashMap<&'a str, InstId>,
    types: HashMap<String, Ty>,
}

impl<'a> ObjectAnalysis<'a> {
    pub fn new(module: &'a Module, func: &'a Function) -> Self {
        ObjectAnalysis {
            func,
            defs: func.defs(),
            types: module.value_types(func),
        }
    }

    pub fn function(&self) -> &'a Function {
        self.func
    }

    pub fn value_type(&self, name: &str) -> Option<&Ty> {
        self.types.get(name)
    }

    pub fn def_op(&self, name: &str) -> Option<&'a Op> {
        self.defs.get(name).map(|id| &self.func.inst(*id).op)
    }

    pub fn def_id(&self, name: &str) -> Option<InstId> {
        self.defs.get(name).copied()
    }

    /// Underlying objects of an address operand.
    pub fn underlying_object(&self, op: &Operand) -> Result<ObjectSet, UnderlyingError> {
        let is_addr = match op {
            Operand::Value(v) => self.types.get(v).is_some_and(Ty::is_ptr),
            Operand::Global(_) | Operand::Null => true,
            Operand::Int(_) => false,
        };
        if !is_addr {
            return Err(UnderlyingError::NotAnAddress(op.to_string()));
        }
        Ok(self.objects(op))
    }

    /// Like [`Self::underlying_object`] without the type precondition;
    /// non-address operands resolve to themselves.
    pub fn objects(&self, op: &Operand) -> ObjectSet {
        let mut out = ObjectSet::new();
        let mut seen = HashSet::new();
        self.collect(op, &mut out, &mut seen);
        out
    }

    fn collect<'s>(&'s self, op: &'s Operand, out: &mut ObjectSet, seen: &mut HashSet<&'s str>) {
        match op {
            Operand::Null => {
                out.insert(Origin::Null);
            }
            Operand::Global(g) => {
                out.insert(Origin::Global(g.clone()));
            }
            Operand::Int(_) => {}
            Operand::Value(v) => {
                if let Some(i) = self.func.param_index(v) {
                    out.insert(Origin::Param(i));
                    return;
                }
                if !seen.insert(v.as_str()) {
                    return;
                }
                match self.def_op(v) {
                    Some(Op::FieldAddr { base, .. }) => self.collect(base, out, seen),
                    Some(Op::Cast { value, .. }) if self.is_ptr_operand(value) => {
                        self.collect(value, out, seen)
                    }
                    Some(Op::Phi { incoming, .. }) => {
                        for (_, inc) in incoming {
                            self.collect(inc, out, seen);
                        }
                    }
                    _ => {
                        out.insert(Origin::Inst(v.clone()));
                    }
                }
            }
        }
    }

    fn is_ptr_operand(&self, op: &Operand) -> bool {
        match op {
            Operand::Value(v) => self.types.get(v).is_some_and(Ty::is_ptr),
            Operand::Global(_) | Operand::Null => true,
            Operand::Int(_) => false,
        }
    }

    /// Static field path of an address relative to its underlying object,
    /// when every derivation agrees on it.
    pub fn field_path(&self, op: &Operand) -> Option<Vec<String>> {
        let mut seen = HashSet::new();
        self.path_of(op, &mut seen)
    }

    fn path_of<'s>(&'s self, op: &'s Operand, seen: &mut HashSet<&'s str>) -> Option<Vec<String>> {
        let Operand::Value(v) = op else {
            return Some(Vec::new());
        };
        if self.func.param_index(v).is_some() {
            return Some(Vec::new());
        }
        if !seen.insert(v.as_str()) {
            return None;
        }
        match self.def_op(v) {
            Some(Op::FieldAddr { base, path, .. }) => {
                let mut p = self.path_of(base, seen)?;
                p.extend(path.iter().cloned());
                Some(p)
            }
            Some(Op::Cast { value, .. }) if self.is_ptr_operand(value) => self.path_of(value, seen),
            Some(Op::Phi { incoming, .. }) => {
                let mut agreed: Option<Vec<String>> = None;
                for (_, inc) in incoming {
                    let p = self.path_of(inc, &mut seen.clone())?;
                    match &agreed {
                        None => agreed = Some(p),
                        Some(a) if *a == p => {}
                        Some(_) => return None,
                    }
                }
                agreed
            }
            _ => Some(Vec::new()),
        }
    }

    /// Operand naming an origin, so an origin can be fed back into a query.
    pub fn origin_operand(&self, origin: &Origin) -> Operand {
        match origin {
            Origin::Inst(n) => Operand::Value(n.clone()),
            Origin::Param(i) => Operand::Value(self.func.params[*i].name.clone()),
            Origin::Global(g) => Operand::Global(g.clone()),
            Origin::Null => Operand::Null,
        }
    }
}

/// Convenience wrapper for one-off queries.
pub fn underlying_object(
    module: &Module,
    func: &Function,
    op: &Operand,
) -> Result<ObjectSet, UnderlyingError> {
    ObjectAnalysis::new(module, func).underlying_object(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_module;

    const SRC: &str = r#"
refclass device
type device { refs: kref_t, id: i32 } kref refs
type holder { dev: device }
global @gdev: device

fn @f(%dev: ptr<device>, %c: i1, %n: i64) -> void {
^entry:
  %a = alloca holder
  %cast = cast %a to ptr
  %fa = fieldaddr holder, %cast, dev.refs
  condbr %c, ^b1, ^b2
^b1:
  br ^join
^b2:
  br ^join
^join:
  %p = phi ptr<device> [^b1: %a], [^b2: @gdev]
  %q = phi ptr<device> [^b1: %dev], [^b2: %dev]
  ret void
}
"#;

    #[test]
    fn strips_fieldaddr_and_cast() {
        let m = parse_module(SRC).unwrap();
        let f = &m.functions[0];
        let oa = ObjectAnalysis::new(&m, f);
        let set = oa.underlying_object(&Operand::value("fa")).unwrap();
        assert_eq!(set, ObjectSet::from([Origin::Inst("a".into())]));
        assert_eq!(
            oa.field_path(&Operand::value("fa")),
            Some(vec!["dev".to_string(), "refs".to_string()])
        );
    }

    #[test]
    fn parameter_is_its_own_object() {
        let m = parse_module(SRC).unwrap();
        let oa = ObjectAnalysis::new(&m, &m.functions[0]);
        let set = oa.underlying_object(&Operand::value("dev")).unwrap();
        assert_eq!(set, ObjectSet::from([Origin::Param(0)]));
    }

    #[test]
    fn phi_join_yields_may_set() {
        let m = parse_module(SRC).unwrap();
        let oa = ObjectAnalysis::new(&m, &m.functions[0]);
        let set = oa.underlying_object(&Operand::value("p")).unwrap();
        assert_eq!(
            set,
            ObjectSet::from([Origin::Inst("a".into()), Origin::Global("gdev".into())])
        );
        // a phi with a single distinct source collapses to that source
        let q = oa.underlying_object(&Operand::value("q")).unwrap();
        assert_eq!(q, ObjectSet::from([Origin::Param(0)]));
    }

    #[test]
    fn integer_operand_is_rejected() {
        let m = parse_module(SRC).unwrap();
        let oa = ObjectAnalysis::new(&m, &m.functions[0]);
        assert!(matches!(
            oa.underlying_object(&Operand::value("n")),
            Err(UnderlyingError::NotAnAddress(_))
        ));
        assert!(oa.underlying_object(&Operand::Int(3)).is_err());
    }

    #[test]
    fn idempotent_on_origins() {
        let m = parse_module(SRC).unwrap();
        let oa = ObjectAnalysis::new(&m, &m.functions[0]);
        for v in ["fa", "p", "q", "cast", "dev"] {
            for origin in oa.underlying_object(&Operand::value(v)).unwrap() {
                let again = oa.objects(&oa.origin_operand(&origin));
                assert_eq!(again, ObjectSet::from([origin.clone()]));
            }
        }
    }
}
