//! Kernel API models.
//!
//! Calls to registered APIs are replaced by small KIR bodies that expose
//! their refcount effect through `rc_inc`/`rc_dec`. Objects returned with
//! an incremented count come from `nondet` addresses, which the engines
//! interpret as either null or a fresh object.

mod registry;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::kir::objects::{ObjectAnalysis, Origin};
use crate::kir::transform::{inline_call, replace_uses, InlineError};
use crate::kir::{
    CallArg, Function, Inst, InstId, Module, Op, Operand, Ty, Violation, BUILTIN_CLASSES,
};
use crate::parse::parse_module;

pub use registry::{
    AsmSemantics, BusFinder, DevLink, Devres, DtApi, ModelRegistry, RefOp, RefOpKind, RefOpReturn,
    RegistryError, BUILTIN_MODELS,
};

/// Device tree lookup behavior: one quadrant of the classification by
/// input-refcount effect and null-input result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DtApiKind {
    pub decrements_input_rc: bool,
    pub may_return_null_on_null_input: bool,
}

impl DtApiKind {
    pub const ALL: [DtApiKind; 4] = [
        DtApiKind::new(true, true),
        DtApiKind::new(true, false),
        DtApiKind::new(false, true),
        DtApiKind::new(false, false),
    ];

    pub const fn new(decrements_input_rc: bool, may_return_null_on_null_input: bool) -> Self {
        DtApiKind {
            decrements_input_rc,
            may_return_null_on_null_input,
        }
    }
}

/// A named API stand-in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiModel {
    pub api_name: String,
    pub template: Function,
    /// Classes of the objects the template may create with count one.
    pub fresh_object_classes: Vec<String>,
}

/// Coordinates of a call instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSite {
    pub function: String,
    pub block: String,
    pub index: usize,
}

impl CallSite {
    fn of(f: &Function, id: InstId) -> Self {
        CallSite {
            function: f.name.clone(),
            block: f.blocks[id.block].label.clone(),
            index: id.index,
        }
    }
}

impl fmt::Display for CallSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{} ^{} #{}", self.function, self.block, self.index)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("{site}: {api} takes {expected} arguments, call passes {got}")]
    Arity {
        site: CallSite,
        api: String,
        expected: usize,
        got: usize,
    },
    #[error("{site}: cleanup passed to {api} is not a known function name")]
    DevresCleanup { site: CallSite, api: String },
    #[error("{site}: {api}: {message}")]
    Signature {
        site: CallSite,
        api: String,
        message: String,
    },
    #[error("{api}: aggregate {aggregate} cannot be returned by a bus finder: {reason}")]
    BusAggregate {
        api: String,
        aggregate: String,
        reason: String,
    },
    #[error("{api} uses refcount class {class}, which the module does not declare")]
    UnknownClass { api: String, class: String },
    #[error(transparent)]
    Inline(#[from] InlineError),
}

/// Aggregates that embed the counter, directly or through nested fields.
pub fn find_kref_types(m: &Module) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = m
        .types
        .iter()
        .filter(|t| t.kref_path.is_some())
        .map(|t| t.name.clone())
        .collect();
    loop {
        let before = set.len();
        for t in &m.types {
            if set.contains(&t.name) {
                continue;
            }
            let embeds = t
                .fields
                .iter()
                .any(|f| matches!(&f.ty, Ty::Agg(n) if set.contains(n)));
            if embeds {
                set.insert(t.name.clone());
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

fn parse_template(text: &str) -> Function {
    match parse_module(text) {
        Ok(mut m) => m.functions.remove(0),
        Err(e) => panic!("generated template does not parse: {e}\n{text}"),
    }
}

fn param_list(params: &[Ty]) -> String {
    params
        .iter()
        .enumerate()
        .map(|(i, t)| format!("%arg{i}: {t}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Device tree lookup template. Parameter `input` is the node whose
/// refcount may drop; a null `null_input` selects the null-input behavior.
pub fn dt_template(
    api_name: &str,
    kind: DtApiKind,
    class: &str,
    params: &[Ty],
    (input, null_input): (usize, usize),
    ret: &Ty,
) -> ApiModel {
    let in_ty = &params[null_input];
    let on_null = if kind.may_return_null_on_null_input {
        format!("ret {ret} null")
    } else {
        "br ^lookup".to_string()
    };
    let on_input = if kind.decrements_input_rc {
        format!("rc_dec {class}, %arg{input}\n  br ^lookup")
    } else {
        "br ^lookup".to_string()
    };
    let text = format!(
        "fn @{api_name}({params}) -> {ret} {{
^entry:
  %in.null = cmp eq {in_ty} %arg{null_input}, null
  condbr %in.null, ^on_null, ^on_input
^on_null:
  {on_null}
^on_input:
  {on_input}
^lookup:
  %node = nondet {ret}
  %found = cmp ne {ret} %node, null
  condbr %found, ^found, ^missing
^found:
  rc_inc {class}, %node
  ret {ret} %node
^missing:
  ret {ret} null
}}
",
        params = param_list(params)
    );
    ApiModel {
        api_name: api_name.to_string(),
        template: parse_template(&text),
        fresh_object_classes: vec![class.to_string()],
    }
}

/// Single-argument device tree template over `node_ty` addresses.
pub fn dt_model_template(kind: DtApiKind, class: &str, node_ty: &Ty) -> ApiModel {
    let name = format!(
        "dt_{}_{}",
        if kind.decrements_input_rc { "dec" } else { "keep" },
        if kind.may_return_null_on_null_input {
            "null"
        } else {
            "any"
        }
    );
    dt_template(&name, kind, class, std::slice::from_ref(node_ty), (0, 0), node_ty)
}

/// Bus finder template: null, or a fresh `finder.aggregate` whose embedded
/// `finder.field` device has been incremented.
pub fn model_bus_find(
    m: &Module,
    api_name: &str,
    finder: &BusFinder,
    params: &[Ty],
    ret: &Ty,
) -> Result<ApiModel, ModelError> {
    let reject = |reason: String| ModelError::BusAggregate {
        api: api_name.to_string(),
        aggregate: finder.aggregate.clone(),
        reason,
    };
    let Some(td) = m.type_def(&finder.aggregate) else {
        return Err(reject("aggregate is not defined".into()));
    };
    let Some(field) = td.field(&finder.field) else {
        return Err(reject(format!("no field {}", finder.field)));
    };
    let kref = find_kref_types(m);
    if !matches!(&field.ty, Ty::Agg(n) if kref.contains(n)) {
        return Err(reject(format!(
            "field {} does not embed a refcounted device",
            finder.field
        )));
    }
    if !ret.is_ptr() {
        return Err(reject(format!("result type {ret} is not an address")));
    }
    let agg = &finder.aggregate;
    let class = &finder.class;
    let text = format!(
        "fn @{api_name}({params}) -> {ret} {{
^entry:
  %obj = nondet ptr<{agg}>
  %found = cmp ne ptr<{agg}> %obj, null
  condbr %found, ^found, ^missing
^found:
  %dev = fieldaddr {agg}, %obj, {field}
  rc_inc {class}, %dev
  %ret = cast %obj to {ret}
  ret {ret} %ret
^missing:
  ret {ret} null
}}
",
        params = param_list(params),
        field = finder.field,
    );
    Ok(ApiModel {
        api_name: api_name.to_string(),
        template: parse_template(&text),
        fresh_object_classes: vec![class.clone()],
    })
}

/// Template for results that may only be null-checked: null, or the
/// address of a fresh opaque token.
pub fn devlink_template(api_name: &str, params: &[Ty], ret: &Ty) -> ApiModel {
    let text = format!(
        "fn @{api_name}({params}) -> {ret} {{
^entry:
  %linked = nondet i1
  condbr %linked, ^link, ^none
^link:
  %tok = alloca token_t
  %link = cast %tok to {ret}
  ret {ret} %link
^none:
  ret {ret} null
}}
",
        params = param_list(params)
    );
    ApiModel {
        api_name: api_name.to_string(),
        template: parse_template(&text),
        fresh_object_classes: Vec::new(),
    }
}

fn call_parts(inst: &Inst) -> (&Ty, &str, &[CallArg]) {
    match &inst.op {
        Op::Call { ret, callee, args } => (ret, callee, args),
        _ => unreachable!("call sites are calls"),
    }
}

/// Parameter types at a call site, taken from the declaration when there
/// is one and from the actual operands otherwise.
fn site_params(m: &Module, f: &Function, id: InstId) -> Result<Vec<Ty>, ModelError> {
    let inst = f.inst(id);
    let (_, api, args) = call_parts(inst);
    if let Some(e) = m.extern_decl(api) {
        if e.params.len() != args.len() {
            return Err(ModelError::Arity {
                site: CallSite::of(f, id),
                api: api.to_string(),
                expected: e.params.len(),
                got: args.len(),
            });
        }
        return Ok(e.params.iter().map(|p| p.ty.clone()).collect());
    }
    let types = m.value_types(f);
    Ok(args
        .iter()
        .map(|a| match &a.value {
            Operand::Int(_) => Ty::Int(crate::kir::DEFAULT_INT_WIDTH),
            Operand::Null => Ty::Ptr(None),
            op => m.operand_type(&types, op).unwrap_or(Ty::Ptr(None)),
        })
        .collect())
}

fn require_arg(f: &Function, id: InstId, api: &str, index: usize) -> Result<(), ModelError> {
    let (_, _, args) = call_parts(f.inst(id));
    if index >= args.len() {
        return Err(ModelError::Arity {
            site: CallSite::of(f, id),
            api: api.to_string(),
            expected: index + 1,
            got: args.len(),
        });
    }
    Ok(())
}

fn require_ptr_result(f: &Function, id: InstId, api: &str, ret: &Ty) -> Result<(), ModelError> {
    if ret.is_ptr() {
        Ok(())
    } else {
        Err(ModelError::Signature {
            site: CallSite::of(f, id),
            api: api.to_string(),
            message: format!("result type {ret} is not an address"),
        })
    }
}

/// Classes used by the APIs that `m` calls. Built-in classes are declared
/// on demand; other classes must already be declared.
fn declare_classes(m: &mut Module, reg: &ModelRegistry) -> Result<(), ModelError> {
    let called: BTreeSet<String> = m
        .functions
        .iter()
        .flat_map(|f| f.instructions())
        .filter_map(|(_, i)| match &i.op {
            Op::Call { callee, .. } => Some(callee.clone()),
            _ => None,
        })
        .collect();
    let mut needed: Vec<(String, String)> = Vec::new();
    for api in &called {
        let class = if let Some(r) = reg.refops.get(api) {
            &r.class
        } else if let Some(d) = reg.dt.get(api) {
            &d.class
        } else if let Some(b) = reg.bus.get(api) {
            &b.class
        } else {
            continue;
        };
        needed.push((api.clone(), class.clone()));
    }
    for (api, class) in needed {
        if m.has_class(&class) {
            continue;
        }
        if BUILTIN_CLASSES.contains(&class.as_str()) {
            m.ref_classes.push(class);
        } else {
            return Err(ModelError::UnknownClass { api, class });
        }
    }
    Ok(())
}

fn rewrite_refop(f: &Function, id: InstId, api: &str, r: &RefOp) -> Result<Function, ModelError> {
    require_arg(f, id, api, r.arg)?;
    let inst = f.inst(id).clone();
    let (ret, _, args) = call_parts(&inst);
    let obj = args[r.arg].value.clone();
    let class = r.class.clone();
    let mut out = f.clone();
    let rc = match r.op {
        RefOpKind::Inc => Op::RcInc { class, obj: obj.clone() },
        RefOpKind::Dec => Op::RcDec { class, obj: obj.clone() },
    };
    let block = &mut out.blocks[id.block].insts;
    block[id.index] = Inst::void(rc);
    if let Some(res) = &inst.result {
        match r.returns {
            RefOpReturn::Arg => replace_uses(&mut out, res, &obj),
            RefOpReturn::Nondet => {
                let block = &mut out.blocks[id.block].insts;
                block.insert(id.index + 1, Inst::def(res.clone(), Op::Nondet(ret.clone())));
            }
        }
    }
    Ok(out)
}

/// Template for the registered API called at `id`, if it has one.
fn template_for(
    m: &Module,
    f: &Function,
    id: InstId,
    reg: &ModelRegistry,
) -> Result<Option<ApiModel>, ModelError> {
    let (ret, api, _) = call_parts(f.inst(id));
    if let Some(d) = reg.dt.get(api) {
        require_arg(f, id, api, d.input)?;
        require_arg(f, id, api, d.null_arg())?;
        require_ptr_result(f, id, api, ret)?;
        let params = site_params(m, f, id)?;
        for i in [d.input, d.null_arg()] {
            if !params[i].is_ptr() {
                return Err(ModelError::Signature {
                    site: CallSite::of(f, id),
                    api: api.to_string(),
                    message: format!("node argument {i} is not an address"),
                });
            }
        }
        let args = (d.input, d.null_arg());
        return Ok(Some(dt_template(api, d.kind(), &d.class, &params, args, ret)));
    }
    if let Some(b) = reg.bus.get(api) {
        let params = site_params(m, f, id)?;
        return model_bus_find(m, api, b, &params, ret).map(Some);
    }
    if reg.devlink.contains(api) {
        require_ptr_result(f, id, api, ret)?;
        let params = site_params(m, f, id)?;
        return Ok(Some(devlink_template(api, &params, ret)));
    }
    Ok(None)
}

fn next_model_site(f: &Function, reg: &ModelRegistry) -> Option<InstId> {
    f.instructions()
        .find(|(_, i)| match &i.op {
            Op::Call { callee, .. } => {
                reg.refops.contains_key(callee)
                    || reg.dt.contains_key(callee)
                    || reg.bus.contains_key(callee)
                    || reg.devlink.contains(callee)
            }
            _ => false,
        })
        .map(|(id, _)| id)
}

/// Replaces every registered call (and inline assembly) by its model.
pub fn apply_models(m: &Module, reg: &ModelRegistry) -> Result<Module, ModelError> {
    let mut out = apply_devres(m, reg)?;
    declare_classes(&mut out, reg)?;
    let snapshot = out.clone();
    for f in &mut out.functions {
        while let Some(id) = next_model_site(f, reg) {
            let (_, api, _) = call_parts(f.inst(id));
            let api = api.to_string();
            *f = if let Some(r) = reg.refops.get(&api) {
                rewrite_refop(f, id, &api, r)?
            } else {
                let model = template_for(&snapshot, f, id, reg)?
                    .expect("registered call has a template");
                inline_call(f, id, &model.template)?
            };
        }
        rewrite_asm(f, reg);
    }
    drop_unused_model_externs(&mut out, reg);
    Ok(out)
}

fn drop_unused_model_externs(m: &mut Module, reg: &ModelRegistry) {
    let referenced: HashSet<String> = m
        .functions
        .iter()
        .flat_map(|f| f.instructions())
        .flat_map(|(_, i)| {
            let mut names: Vec<String> = i
                .op
                .operands()
                .into_iter()
                .filter_map(|o| match o {
                    Operand::Global(g) => Some(g.clone()),
                    _ => None,
                })
                .collect();
            if let Op::Call { callee, .. } = &i.op {
                names.push(callee.clone());
            }
            names
        })
        .collect();
    m.externs
        .retain(|e| !reg.is_registered(&e.name) || referenced.contains(&e.name));
}

fn rewrite_asm(f: &mut Function, reg: &ModelRegistry) {
    let mut replacements: Vec<(String, Operand)> = Vec::new();
    for b in &mut f.blocks {
        let mut kept = Vec::with_capacity(b.insts.len());
        for inst in b.insts.drain(..) {
            let Op::Asm { mnemonic, ty, args } = &inst.op else {
                kept.push(inst);
                continue;
            };
            let sem = reg.asm.get(mnemonic).copied();
            match (&inst.result, sem) {
                (Some(r), Some(AsmSemantics::Identity)) if !args.is_empty() => {
                    replacements.push((r.clone(), args[0].clone()));
                }
                (Some(r), _) => kept.push(Inst::def(r.clone(), Op::Nondet(ty.clone()))),
                (None, _) => {}
            }
        }
        b.insts = kept;
    }
    for (name, with) in replacements {
        replace_uses(f, &name, &with);
    }
}

/// Rewrites devres registrations: the call yields 0 and the cleanup runs
/// on the payload right away.
pub fn apply_devres(m: &Module, reg: &ModelRegistry) -> Result<Module, ModelError> {
    let mut out = m.clone();
    for fi in 0..out.functions.len() {
        loop {
            let f = &out.functions[fi];
            let site = f
                .instructions()
                .find(|(_, i)| {
                    matches!(&i.op, Op::Call { callee, .. } if reg.devres.contains_key(callee))
                })
                .map(|(id, _)| id);
            let Some(id) = site else { break };
            let inst = f.inst(id).clone();
            let (_, api, args) = call_parts(&inst);
            let d = &reg.devres[api];
            require_arg(f, id, api, d.cleanup.max(d.payload))?;
            let cleanup = match &args[d.cleanup].value {
                Operand::Global(g) if m.function(g).is_some() || m.extern_decl(g).is_some() => {
                    g.clone()
                }
                _ => {
                    return Err(ModelError::DevresCleanup {
                        site: CallSite::of(f, id),
                        api: api.to_string(),
                    })
                }
            };
            let sig = m.signature(&cleanup).expect("cleanup resolved above");
            if sig.params.len() != 1 {
                return Err(ModelError::Signature {
                    site: CallSite::of(f, id),
                    api: api.to_string(),
                    message: format!("cleanup {cleanup} must take exactly one argument"),
                });
            }
            let call = Op::Call {
                ret: sig.ret.clone(),
                callee: cleanup,
                args: vec![CallArg::plain(args[d.payload].value.clone())],
            };
            let f = &mut out.functions[fi];
            f.blocks[id.block].insts[id.index] = Inst::void(call);
            if let Some(r) = &inst.result {
                replace_uses(f, r, &Operand::Int(0));
            }
        }
    }
    out.externs.retain(|e| {
        !reg.devres.contains_key(&e.name)
            || out
                .functions
                .iter()
                .any(|f| f.instructions().any(|(_, i)| matches!(&i.op, Op::Call { callee, .. } if *callee == e.name)))
    });
    Ok(out)
}

/// Flags uses of token addresses other than comparisons, phis, casts and
/// passing them to calls.
pub fn check_token_uses(m: &Module) -> Vec<Violation> {
    let mut out = Vec::new();
    for f in &m.functions {
        let oa = ObjectAnalysis::new(m, f);
        let tokens: HashSet<&str> = f
            .instructions()
            .filter_map(|(_, i)| match (&i.result, &i.op) {
                (Some(r), Op::Alloca(Ty::Token)) => Some(r.as_str()),
                _ => None,
            })
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let is_token = |op: &Operand| {
            op.as_value().is_some()
                && oa
                    .objects(op)
                    .iter()
                    .any(|o| matches!(o, Origin::Inst(n) if tokens.contains(n.as_str())))
        };
        for (id, inst) in f.instructions() {
            let msg = match &inst.op {
                Op::Store { value, .. } if is_token(value) => "token stored to memory",
                Op::Load { addr, .. } | Op::Store { addr, .. } if is_token(addr) => {
                    "token dereferenced"
                }
                Op::FieldAddr { base, .. } if is_token(base) => "token dereferenced",
                Op::RcInc { obj, .. } | Op::RcDec { obj, .. } if is_token(obj) => {
                    "refcount operation on a token"
                }
                _ => continue,
            };
            out.push(Violation {
                function: Some(f.name.clone()),
                block: Some(f.blocks[id.block].label.clone()),
                inst: Some(id.index),
                message: msg.to_string(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kir::{print_module, validate};

    const DEVICES: &str = "refclass device
type device { refs: kref_t, id: i32 } kref refs
type usb_interface { dev: device, num: i32 }
type plain { a: i32, b: i64 }
";

    #[test]
    fn kref_types_close_over_nesting() {
        let m = parse_module(DEVICES).unwrap();
        let set = find_kref_types(&m);
        assert_eq!(
            set.into_iter().collect::<Vec<_>>(),
            vec!["device".to_string(), "usb_interface".to_string()]
        );
        let m = parse_module("type plain { a: i32 }\n").unwrap();
        assert!(find_kref_types(&m).is_empty());
    }

    #[test]
    fn refops_become_primitives() {
        let src = format!(
            "{DEVICES}extern get_device(ptr<device>) -> ptr<device>
extern put_device(ptr<device>) -> void
fn @f(%d: ptr<device>) -> void {{
^entry:
  %g = call ptr<device> @get_device(%d)
  call void @put_device(%g)
  ret void
}}
"
        );
        let m = parse_module(&src).unwrap();
        let out = apply_models(&m, &ModelRegistry::builtin()).unwrap();
        assert!(validate(&out).is_empty(), "{:?}", validate(&out));
        let f = out.function("f").unwrap();
        let ops: Vec<String> = f.blocks[0].insts.iter().map(|i| i.to_string()).collect();
        assert_eq!(ops, vec!["rc_inc device, %d", "rc_dec device, %d", "ret void"]);
        assert!(out.externs.is_empty());
        // idempotent on its own output
        let again = apply_models(&out, &ModelRegistry::builtin()).unwrap();
        assert_eq!(print_module(&again), print_module(&out));
    }

    #[test]
    fn of_node_put_decrements() {
        let src = "type device_node { refs: kref_t } kref refs
extern of_node_put(ptr<device_node>) -> void
fn @f(%n: ptr<device_node>) -> void {
^entry:
  call void @of_node_put(%n)
  ret void
}
";
        let out = apply_models(&parse_module(src).unwrap(), &ModelRegistry::builtin()).unwrap();
        assert_eq!(out.ref_classes, vec!["of_node".to_string()]);
        assert_eq!(
            out.functions[0].blocks[0].insts[0].to_string(),
            "rc_dec of_node, %n"
        );
    }

    #[test]
    fn dt_template_inlines_and_validates() {
        let src = "refclass of_node
type device_node { refs: kref_t } kref refs
extern of_find_node_by_name(ptr<device_node>, ptr) -> ptr<device_node>
fn @f(%n: ptr<device_node>) -> i32 {
^entry:
  %c = call ptr<device_node> @of_find_node_by_name(%n, null)
  %z = cmp eq ptr<device_node> %c, null
  condbr %z, ^a, ^b
^a:
  ret i32 0
^b:
  ret i32 1
}
";
        let out = apply_models(&parse_module(src).unwrap(), &ModelRegistry::builtin()).unwrap();
        assert!(validate(&out).is_empty(), "{:?}", validate(&out));
        let text = print_module(&out);
        assert!(text.contains("rc_dec of_node, %n"));
        assert!(text.contains("rc_inc of_node, %of_find_node_by_name.node"));
        assert!(!text.contains("call"));
    }

    #[test]
    fn every_dt_quadrant_builds() {
        for kind in DtApiKind::ALL {
            let model = dt_model_template(kind, "of_node", &Ty::ptr_to(Ty::Agg("n".into())));
            let has_dec = model
                .template
                .instructions()
                .any(|(_, i)| matches!(i.op, Op::RcDec { .. }));
            assert_eq!(has_dec, kind.decrements_input_rc);
            let null_rets = model
                .template
                .instructions()
                .filter(|(_, i)| matches!(&i.op, Op::Ret(Some((_, Operand::Null)))))
                .count();
            assert_eq!(null_rets, 1 + kind.may_return_null_on_null_input as usize);
        }
    }

    #[test]
    fn bus_finder_requires_embedded_device() {
        let m = parse_module(DEVICES).unwrap();
        let ret = Ty::ptr_to(Ty::Agg("usb_interface".into()));
        let ok = BusFinder {
            aggregate: "usb_interface".into(),
            field: "dev".into(),
            class: "device".into(),
        };
        let model = model_bus_find(&m, "usb_find_interface", &ok, &[], &ret).unwrap();
        assert_eq!(model.fresh_object_classes, vec!["device".to_string()]);
        let bad = BusFinder {
            aggregate: "plain".into(),
            field: "a".into(),
            class: "device".into(),
        };
        assert!(matches!(
            model_bus_find(&m, "x", &bad, &[], &ret),
            Err(ModelError::BusAggregate { .. })
        ));
    }

    #[test]
    fn devres_inserts_cleanup() {
        let src = format!(
            "{DEVICES}extern devm_add_action(ptr<device>, ptr, ptr) -> i32
fn @undo(%p: ptr) -> void {{
^entry:
  ret void
}}
fn @f(%d: ptr<device>, %p: ptr) -> i32 {{
^entry:
  %r = call i32 @devm_add_action(%d, @undo, %p)
  ret i32 %r
}}
"
        );
        let m = parse_module(&src).unwrap();
        let out = apply_devres(&m, &ModelRegistry::builtin()).unwrap();
        let f = out.function("f").unwrap();
        let ops: Vec<String> = f.blocks[0].insts.iter().map(|i| i.to_string()).collect();
        assert_eq!(ops, vec!["call void @undo(%p)", "ret i32 0"]);
        assert!(validate(&out).is_empty());
        // no devres calls: unchanged
        let plain = parse_module(DEVICES).unwrap();
        assert_eq!(apply_devres(&plain, &ModelRegistry::builtin()).unwrap(), plain);
    }

    #[test]
    fn devres_rejects_indirect_cleanup() {
        let src = "extern devm_add_action(ptr, ptr, ptr) -> i32
fn @f(%d: ptr, %cb: ptr) -> i32 {
^entry:
  %r = call i32 @devm_add_action(%d, %cb, null)
  ret i32 %r
}
";
        let err = apply_devres(&parse_module(src).unwrap(), &ModelRegistry::builtin()).unwrap_err();
        assert!(err.to_string().contains("@f ^entry #0"), "{err}");
    }

    #[test]
    fn asm_rewriting() {
        let src = "fn @f(%x: i32) -> i32 {
^entry:
  %a = asm \"mov\" i32 (%x)
  %b = asm \"mystery\" i32 (%a)
  asm \"fence\" void ()
  %c = add i32 %a, %b
  ret i32 %c
}
";
        let out = apply_models(&parse_module(src).unwrap(), &ModelRegistry::builtin()).unwrap();
        let ops: Vec<String> = out.functions[0].blocks[0]
            .insts
            .iter()
            .map(|i| i.to_string())
            .collect();
        assert_eq!(ops, vec!["%b = nondet i32", "%c = add i32 %x, %b", "ret i32 %c"]);
    }

    #[test]
    fn token_misuse_is_flagged() {
        let src = "type ice { link: ptr }
extern device_link_add(ptr, ptr, i32) -> ptr
fn @f(%d: ptr) -> i32 {
^entry:
  %ice = alloca ice
  %l = call ptr @device_link_add(%d, %d, 1)
  %slot = fieldaddr ice, %ice, link
  store ptr %l, %slot
  ret i32 0
}
";
        let out = apply_models(&parse_module(src).unwrap(), &ModelRegistry::builtin()).unwrap();
        assert!(validate(&out).is_empty(), "{:?}", validate(&out));
        let v = check_token_uses(&out);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "token stored to memory");
    }
}
