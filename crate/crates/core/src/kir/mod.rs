//! KIR: a small SSA intermediate representation for driver-style code.
//!
//! A [`Module`] holds aggregate type definitions, refcount classes, globals,
//! external declarations and function bodies. Modules are plain values;
//! every transform in this crate returns a new module.

pub mod cfg;
mod inst;
pub mod objects;
mod print;
pub mod transform;
mod types;
pub mod validate;

use std::collections::{BTreeMap, HashMap};

pub use inst::{BinOp, CallArg, CmpPred, Inst, InstId, Op, OpKind, Operand};
pub use print::print_module;
pub use types::{Field, Ty, TypeDef, DEFAULT_INT_WIDTH};
pub use validate::{validate, validate_with_callees, Violation};

/// Built-in refcount classes.
pub const BUILTIN_CLASSES: [&str; 3] = ["device", "of_node", "fwnode"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Ty,
    pub writeonly: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: Ty) -> Self {
        Param {
            name: name.into(),
            ty,
            writeonly: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub insts: Vec<Inst>,
}

impl Block {
    pub fn new(label: impl Into<String>) -> Self {
        Block {
            label: label.into(),
            insts: Vec::new(),
        }
    }

    pub fn terminator(&self) -> Option<&Inst> {
        self.insts.last().filter(|i| i.op.is_terminator())
    }

    pub fn successors(&self) -> Vec<&str> {
        self.terminator()
            .map(|t| t.op.successors())
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Ty,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn inst(&self, id: InstId) -> &Inst {
        &self.blocks[id.block].insts[id.index]
    }

    pub fn inst_ids(&self) -> impl Iterator<Item = InstId> + '_ {
        self.blocks.iter().enumerate().flat_map(|(b, block)| {
            (0..block.insts.len()).map(move |i| InstId::new(b, i))
        })
    }

    pub fn instructions(&self) -> impl Iterator<Item = (InstId, &Inst)> + '_ {
        self.blocks.iter().enumerate().flat_map(|(b, block)| {
            block
                .insts
                .iter()
                .enumerate()
                .map(move |(i, inst)| (InstId::new(b, i), inst))
        })
    }

    pub fn inst_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len()).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Map from SSA name to the instruction that defines it.
    pub fn defs(&self) -> HashMap<&str, InstId> {
        self.instructions()
            .filter_map(|(id, inst)| inst.result.as_deref().map(|r| (r, id)))
            .collect()
    }

    /// Map from SSA name to the instructions that read it.
    pub fn uses(&self) -> HashMap<&str, Vec<InstId>> {
        let mut uses: HashMap<&str, Vec<InstId>> = HashMap::new();
        for (id, inst) in self.instructions() {
            for v in inst.op.used_values() {
                uses.entry(v).or_default().push(id);
            }
        }
        uses
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Global {
    pub name: String,
    pub ty: Ty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternParam {
    pub ty: Ty,
    pub writeonly: bool,
}

/// Declaration of a function without a body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extern {
    pub name: String,
    pub params: Vec<ExternParam>,
    pub ret: Ty,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Module {
    pub ref_classes: Vec<String>,
    pub types: Vec<TypeDef>,
    pub globals: Vec<Global>,
    pub externs: Vec<Extern>,
    pub functions: Vec<Function>,
    /// Name of the driver initialization function, if declared.
    pub entry: Option<String>,
}

/// Signature view shared by functions and externs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<(Ty, bool)>,
    pub ret: Ty,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn extern_decl(&self, name: &str) -> Option<&Extern> {
        self.externs.iter().find(|e| e.name == name)
    }

    pub fn type_def(&self, name: &str) -> Option<&TypeDef> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn has_class(&self, name: &str) -> bool {
        self.ref_classes.iter().any(|c| c == name)
    }

    pub fn signature(&self, callee: &str) -> Option<Signature> {
        if let Some(f) = self.function(callee) {
            return Some(Signature {
                params: f.params.iter().map(|p| (p.ty.clone(), p.writeonly)).collect(),
                ret: f.ret.clone(),
            });
        }
        self.extern_decl(callee).map(|e| Signature {
            params: e.params.iter().map(|p| (p.ty.clone(), p.writeonly)).collect(),
            ret: e.ret.clone(),
        })
    }

    /// Type of the field reached from aggregate `agg` along `path`.
    pub fn field_type(&self, agg: &str, path: &[String]) -> Option<Ty> {
        let mut current = Ty::Agg(agg.to_string());
        for seg in path {
            let Ty::Agg(name) = &current else {
                return None;
            };
            current = self.type_def(name)?.field(seg)?.ty.clone();
        }
        Some(current)
    }

    /// Result type of an instruction, `None` for void instructions.
    pub fn result_type(&self, op: &Op) -> Option<Ty> {
        let ty = match op {
            Op::Alloca(t) => Ty::ptr_to(t.clone()),
            Op::Load { ty, .. } => ty.clone(),
            Op::FieldAddr { agg, path, .. } => match self.field_type(agg, path) {
                Some(t) => Ty::ptr_to(t),
                None => Ty::Ptr(None),
            },
            Op::Call { ret, .. } => ret.clone(),
            Op::Phi { ty, .. } => ty.clone(),
            Op::Bin { ty, .. } => ty.clone(),
            Op::Cmp { .. } => Ty::Int(1),
            Op::Cast { to, .. } => to.clone(),
            Op::Nondet(t) => t.clone(),
            Op::RcDelta { .. } => Ty::Int(64),
            Op::Asm { ty, .. } => ty.clone(),
            _ => return None,
        };
        (!ty.is_void()).then_some(ty)
    }

    /// Types of every parameter and instruction result of `f`.
    pub fn value_types(&self, f: &Function) -> HashMap<String, Ty> {
        let mut map: HashMap<String, Ty> = f
            .params
            .iter()
            .map(|p| (p.name.clone(), p.ty.clone()))
            .collect();
        for (_, inst) in f.instructions() {
            if let (Some(r), Some(t)) = (&inst.result, self.result_type(&inst.op)) {
                map.insert(r.clone(), t);
            }
        }
        map
    }

    /// Static type of an operand inside `f`; `None` for untyped literals.
    pub fn operand_type(&self, types: &HashMap<String, Ty>, op: &Operand) -> Option<Ty> {
        match op {
            Operand::Value(v) => types.get(v).cloned(),
            Operand::Global(g) => match self.global(g) {
                Some(gl) => Some(Ty::ptr_to(gl.ty.clone())),
                None => Some(Ty::Ptr(None)),
            },
            Operand::Int(_) | Operand::Null => None,
        }
    }

    /// Count of instructions per function, in declaration order.
    pub fn inst_counts(&self) -> BTreeMap<String, usize> {
        self.functions
            .iter()
            .map(|f| (f.name.clone(), f.inst_count()))
            .collect()
    }

    pub fn total_insts(&self) -> usize {
        self.functions.iter().map(Function::inst_count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested() -> Module {
        Module {
            types: vec![
                TypeDef {
                    name: "device".into(),
                    fields: vec![Field {
                        name: "kref".into(),
                        ty: Ty::Kref,
                    }],
                    kref_path: Some(vec!["kref".into()]),
                },
                TypeDef {
                    name: "usb_interface".into(),
                    fields: vec![
                        Field {
                            name: "dev".into(),
                            ty: Ty::Agg("device".into()),
                        },
                        Field {
                            name: "num".into(),
                            ty: Ty::Int(32),
                        },
                    ],
                    kref_path: None,
                },
            ],
            ..Module::default()
        }
    }

    #[test]
    fn nested_field_types() {
        let m = nested();
        let path = vec!["dev".to_string(), "kref".to_string()];
        assert_eq!(m.field_type("usb_interface", &path), Some(Ty::Kref));
        assert_eq!(m.field_type("usb_interface", &["num".into()]), Some(Ty::Int(32)));
        assert_eq!(m.field_type("usb_interface", &["nope".into()]), None);
    }
}
