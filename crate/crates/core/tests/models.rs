use krefcheck::pipeline::{check, CheckOptions};
use krefcheck::report::VerdictName;

/// A probe that takes a reference on `%prev`, calls
/// `of_get_next_child(<parent>, %prev)`, puts `%prev` itself and fails.
/// It is safe only if the lookup neither returns a child nor drops `%prev`.
fn next_child_probe(parent: &str) -> String {
    format!(
        "refclass of_node
type device_node {{ refs: kref_t, name: i32 }} kref refs
extern of_node_get(ptr<device_node>) -> ptr<device_node>
extern of_get_next_child(ptr<device_node>, ptr<device_node>) -> ptr<device_node>
extern of_node_put(ptr<device_node>) -> void
entry probe
fn @probe(%np: ptr<device_node>, %prev: ptr<device_node>) -> i32 {{
^entry:
  %held = call ptr<device_node> @of_node_get(%prev)
  %child = call ptr<device_node> @of_get_next_child({parent}, %prev)
  call void @of_node_put(%prev)
  %found = cmp ne ptr<device_node> %child, null
  condbr %found, ^leak, ^none
^leak:
  ret i32 1
^none:
  ret i32 12
}}
"
    )
}

fn verdict(text: &str) -> VerdictName {
    let run = |slice| check(text, "probe", &CheckOptions { slice, ..CheckOptions::default() }).expect("checks");
    let (sliced, unsliced) = (run(true).verdict, run(false).verdict);
    assert_eq!(sliced, unsliced);
    sliced
}

#[test]
fn next_child_of_null_parent_is_null_and_keeps_prev() {
    assert_eq!(verdict(&next_child_probe("null")), VerdictName::Safe);
}

#[test]
fn next_child_of_live_parent_drops_prev_or_returns_a_child() {
    assert_eq!(verdict(&next_child_probe("%np")), VerdictName::Bug);
}

#[test]
fn next_child_does_not_drop_a_null_prev() {
    let text = "refclass of_node
type device_node { refs: kref_t, name: i32 } kref refs
extern of_get_next_child(ptr<device_node>, ptr<device_node>) -> ptr<device_node>
extern of_node_put(ptr<device_node>) -> void
entry probe
fn @probe(%np: ptr<device_node>) -> i32 {
^entry:
  %child = call ptr<device_node> @of_get_next_child(%np, null)
  %found = cmp ne ptr<device_node> %child, null
  condbr %found, ^put, ^none
^put:
  call void @of_node_put(%child)
  ret i32 1
^none:
  ret i32 12
}
";
    assert_eq!(verdict(text), VerdictName::Safe);
}
