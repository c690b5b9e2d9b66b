//! Harness synthesis: a `main` that calls the initialization function on
//! nondet inputs and, when it fails, asserts that every refcount class is
//! back to its starting value.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kir::{Module, Ty};
use crate::parse::parse_module;

pub const HARNESS_MAIN: &str = "main";

/// How one argument of the initialization function is built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputRecipe {
    /// Address of a fresh aggregate whose fields are unconstrained.
    FreshAggregate(Ty),
    NondetScalar(Ty),
    /// Null or the address of a fresh object.
    NullOrFresh(Ty),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryDescriptor {
    pub init_function: String,
    pub inputs: Vec<InputRecipe>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("no entry function given and the module declares none")]
    NoEntry,
    #[error("entry function {0} is not defined")]
    MissingFunction(String),
    #[error("entry function {name} returns {ty}, not an integer error code")]
    NonIntegerReturn { name: String, ty: Ty },
    #[error("entry function {name} takes {expected} arguments, descriptor builds {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("module already defines @{HARNESS_MAIN}")]
    MainExists,
}

impl EntryDescriptor {
    /// Default recipe from the parameter types of `init`.
    pub fn infer(m: &Module, init: &str) -> Result<Self, HarnessError> {
        let f = m
            .function(init)
            .ok_or_else(|| HarnessError::MissingFunction(init.to_string()))?;
        let inputs = f
            .params
            .iter()
            .map(|p| match &p.ty {
                t @ Ty::Ptr(Some(inner)) if matches!(**inner, Ty::Agg(_)) => {
                    InputRecipe::FreshAggregate(t.clone())
                }
                t @ Ty::Ptr(_) => InputRecipe::NullOrFresh(t.clone()),
                t => InputRecipe::NondetScalar(t.clone()),
            })
            .collect();
        Ok(EntryDescriptor {
            init_function: init.to_string(),
            inputs,
        })
    }

    /// Descriptor for `flag` if given, else for the module's `entry`.
    pub fn resolve(m: &Module, flag: Option<&str>) -> Result<Self, HarnessError> {
        let name = flag
            .map(str::to_string)
            .or_else(|| m.entry.clone())
            .ok_or(HarnessError::NoEntry)?;
        Self::infer(m, &name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HarnessProgram {
    pub module: Module,
    pub init: String,
    pub asserted_classes: Vec<String>,
}

pub fn build_harness(m: &Module, desc: &EntryDescriptor) -> Result<HarnessProgram, HarnessError> {
    let init = &desc.init_function;
    let f = m
        .function(init)
        .ok_or_else(|| HarnessError::MissingFunction(init.clone()))?;
    if !f.ret.is_int() {
        return Err(HarnessError::NonIntegerReturn {
            name: init.clone(),
            ty: f.ret.clone(),
        });
    }
    if f.params.len() != desc.inputs.len() {
        return Err(HarnessError::Arity {
            name: init.clone(),
            expected: f.params.len(),
            got: desc.inputs.len(),
        });
    }
    if m.function(HARNESS_MAIN).is_some() || m.extern_decl(HARNESS_MAIN).is_some() {
        return Err(HarnessError::MainExists);
    }

    let mut body = String::new();
    let mut args = Vec::new();
    for (i, recipe) in desc.inputs.iter().enumerate() {
        let v = format!("in{i}");
        match recipe {
            InputRecipe::FreshAggregate(t) => {
                let _ = writeln!(body, "  %{v} = nondet {t}");
                let _ = writeln!(body, "  %{v}.ok = cmp ne {t} %{v}, null");
                let _ = writeln!(body, "  assume %{v}.ok");
            }
            InputRecipe::NondetScalar(t) | InputRecipe::NullOrFresh(t) => {
                let _ = writeln!(body, "  %{v} = nondet {t}");
            }
        }
        args.push(format!("%{v}"));
    }
    let ret = &f.ret;
    let _ = writeln!(body, "  %err = call {ret} @{init}({})", args.join(", "));
    let _ = writeln!(body, "  %failed = cmp ne {ret} %err, 0");
    let _ = writeln!(body, "  condbr %failed, ^failure, ^success");
    let _ = writeln!(body, "^failure:");
    for c in &m.ref_classes {
        let _ = writeln!(body, "  %delta.{c} = rc_delta {c}");
        let _ = writeln!(body, "  %balanced.{c} = cmp eq i64 %delta.{c}, 0");
        let _ = writeln!(body, "  assert %balanced.{c}");
    }
    let _ = writeln!(body, "  ret i32 0");
    let _ = writeln!(body, "^success:");
    let _ = writeln!(body, "  ret i32 0");
    let text = format!("fn @{HARNESS_MAIN}() -> i32 {{\n^entry:\n{body}}}\n");
    let main = parse_module(&text)
        .unwrap_or_else(|e| panic!("generated harness does not parse: {e}\n{text}"))
        .functions
        .remove(0);

    let mut module = m.clone();
    module.functions.push(main);
    Ok(HarnessProgram {
        module,
        init: init.clone(),
        asserted_classes: m.ref_classes.clone(),
    })
}
