use super::*;
use crate::kir::{print_module, validate};
use crate::parse::parse_module;
use crate::refmodel::{apply_models, ModelRegistry};

fn lowered(src: &str) -> Module {
    let m = parse_module(src).unwrap();
    let m = apply_models(&m, &ModelRegistry::builtin()).unwrap();
    assert!(validate(&m).is_empty(), "{:?}", validate(&m));
    m
}

fn kept_ops(m: &Module, func: &str) -> Vec<String> {
    m.function(func)
        .unwrap()
        .instructions()
        .map(|(_, i)| format!("{:?}", i.op.kind()))
        .collect()
}

const DEVICE: &str = "refclass device
type device { refs: kref_t, id: i32 } kref refs
type chip { dev: device, id: i32 }
extern get_device(ptr<device>) -> ptr<device>
extern put_device(ptr<device>) -> void
";

#[test]
fn essential_args_follow_wrappers() {
    let src = format!(
        "{DEVICE}fn @hold(%d: ptr<device>, %n: i32) -> void {{
^entry:
  %g = call ptr<device> @get_device(%d)
  ret void
}}
fn @hold_chip(%c: ptr<chip>) -> void {{
^entry:
  %d = fieldaddr chip, %c, dev
  call void @hold(%d, 3)
  ret void
}}
fn @ignore(%c: ptr<chip>) -> i32 {{
^entry:
  ret i32 0
}}
"
    );
    let m = lowered(&src);
    let ess = collect_essential_args(&m);
    assert!(ess.get("hold", 0));
    assert!(!ess.get("hold", 1));
    assert!(ess.get("hold_chip", 0));
    assert!(!ess.get("ignore", 0));
    assert_eq!(ess.len(), 2);
}

#[test]
fn pure_arithmetic_keeps_only_the_return() {
    let m = parse_module(
        "fn @f(%x: i32) -> void {
^entry:
  %a = add i32 %x, 1
  %b = mul i32 %a, 2
  %c = cmp slt i32 %b, 9
  ret void
}
",
    )
    .unwrap();
    let mk = mark_module(&m);
    let f = &mk.functions["f"];
    assert_eq!(f.necessary.len(), 1);
    assert_eq!(f.provenance.values().next(), Some(&Rule::R1));
    let (s, _, st) = slice_module(&m);
    assert_eq!(kept_ops(&s, "f"), vec!["Ret"]);
    assert_eq!((st.before, st.after), (4, 1));
}

#[test]
fn store_feeding_marked_load_is_kept() {
    let m = parse_module(
        "fn @f(%x: i32) -> i32 {
^entry:
  %slot = alloca i32
  store i32 %x, %slot
  %u = mul i32 %x, 2
  %v = load i32, %slot
  %w = add i32 %v, 1
  ret i32 %w
}
",
    )
    .unwrap();
    let mk = mark_module(&m);
    let f = &mk.functions["f"];
    let rule = |b, i| f.provenance.get(&InstId::new(b, i)).copied();
    assert_eq!(rule(0, 0), Some(Rule::R1));
    assert_eq!(rule(0, 1), Some(Rule::R4));
    assert_eq!(rule(0, 2), None);
    assert_eq!(rule(0, 3), Some(Rule::R3));
    assert_eq!(rule(0, 4), Some(Rule::R5));
    assert_eq!(rule(0, 5), Some(Rule::R1));
}

const TPM: &str = "refclass device
type device { refs: kref_t, id: i32 } kref refs
type chip { dev: device, id: i32 }
type inode { lock: i32, chip: ptr<chip> }
extern get_device(ptr<device>) -> ptr<device>
extern put_device(ptr<device>) -> void
extern inode_lock(ptr<inode>) -> void
extern inode_unlock(ptr<inode>) -> void
extern seq_open(ptr) -> i32
entry open
fn @open(%inode: ptr<inode>, %file: ptr) -> i32 {
^entry:
  %slot = fieldaddr inode, %inode, chip
  %c = load ptr<chip>, %slot
  call void @inode_lock(%inode)
  %dev = fieldaddr chip, %c, dev
  %g = call ptr<device> @get_device(%dev)
  call void @inode_unlock(%inode)
  %err = call i32 @seq_open(%file)
  %failed = cmp ne i32 %err, 0
  condbr %failed, ^put, ^done
^put:
  %dev2 = fieldaddr chip, %c, dev
  call void @put_device(%dev2)
  br ^done
^done:
  ret i32 %err
}
";

#[test]
fn unrelated_calls_become_nondet() {
    let m = lowered(TPM);
    let (s, mk, _) = slice_module(&m);
    let f = s.function("open").unwrap();
    let text = print_module(&s);
    assert!(!text.contains("@inode_lock("), "{text}");
    assert!(!text.contains("@seq_open("), "{text}");
    assert!(text.contains("%err = nondet i32"), "{text}");
    // both device addresses derive from the same nondet chip pointer
    assert!(text.contains("%c = nondet ptr<chip>"), "{text}");
    assert_eq!(
        f.instructions()
            .filter(|(_, i)| matches!(i.op, Op::Nondet(_)))
            .count(),
        2
    );
    assert!(validate(&s).is_empty(), "{:?}", validate(&s));
    assert!(is_closed(
        m.function("open").unwrap(),
        &mk.essential,
        &m,
        &mk.functions["open"]
    ));
}

#[test]
fn slicing_is_idempotent() {
    let m = lowered(TPM);
    let (once, _, _) = slice_module(&m);
    let (twice, _, _) = slice_module(&once);
    assert_eq!(print_module(&once), print_module(&twice));
}

#[test]
fn marking_is_minimal() {
    let m = lowered(TPM);
    let mk = mark_module(&m);
    let f = m.function("open").unwrap();
    let marking = &mk.functions["open"];
    // no marked instruction can be dropped without some rule re-adding it
    for id in marking.necessary.iter().copied() {
        let mut smaller = marking.clone();
        smaller.necessary.remove(&id);
        smaller.provenance.remove(&id);
        assert!(!is_closed(f, &mk.essential, &m, &smaller), "{id:?}");
    }
}

const WRITEONLY: &str = "extern fill(ptr writeonly, i32) -> i32
type pair { a: i32, b: i32 }
fn @f() -> i32 {
^entry:
  %p = alloca pair
  %r = call i32 @fill(%p writeonly, 4)
  %bp = fieldaddr pair, %p, b
  %v = load i32, %bp
  ret i32 %v
}
";

#[test]
fn writeonly_outputs_are_backfilled() {
    let m = parse_module(WRITEONLY).unwrap();
    let (s, _, _) = slice_module(&m);
    let text = print_module(&s);
    assert!(!text.contains("@fill("), "{text}");
    assert!(text.contains("fieldaddr pair, %p, b"), "{text}");
    assert!(text.contains("= nondet i32"), "{text}");
    assert!(text.contains("store i32 %wo.val"), "{text}");
    assert!(validate(&s).is_empty(), "{:?}", validate(&s));
    let (again, _, _) = slice_module(&s);
    assert_eq!(print_module(&again), text);
}

#[test]
fn harness_main_keeps_calls_to_defined_functions() {
    let src = "fn @init(%x: i32) -> i32 {
^entry:
  ret i32 %x
}
fn @main() -> i32 {
^entry:
  %x = nondet i32
  %e = call i32 @init(%x)
  ret i32 0
}
";
    let m = parse_module(src).unwrap();
    let mk = mark_module(&m);
    let rules: Vec<Rule> = mk.functions["main"].provenance.values().copied().collect();
    assert!(rules.contains(&Rule::Root));
}

#[test]
fn dce_keeps_calls_and_drops_dead_values() {
    let m = lowered(TPM);
    let d = dce_baseline(&m);
    let text = print_module(&d);
    assert!(text.contains("inode_lock"));
    assert!(text.contains("seq_open"));
    assert!(d.total_insts() <= m.total_insts());
    let (s, _, _) = slice_module(&m);
    assert!(s.total_insts() < d.total_insts());
}
