use std::process::Command;

use serde_json::Value;

fn mv(args: &[&str]) -> (i32, Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mv")).args(args).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let v = serde_json::from_str(&text).unwrap_or(Value::Null);
    (out.status.code().unwrap(), v, text)
}

const PARABOLA: &str = "graph(y = x^2, x in B(0,0))";

#[test]
fn riso_parabola() {
    let (code, v, _) = mv(&["riso", "--field", "Q", PARABOLA]);
    assert_eq!(code, 0);
    assert_eq!(v["schema"], 1);
    let items = v["result"]["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["kind"], "ball");
    assert_eq!(items[0]["radius"], 0);
    assert_eq!(v["result"]["v0"]["display"], "1");
}

#[test]
fn measure_of_maximal_ideal() {
    let (code, v, _) = mv(&["measure", "--field", "Q", "box(B(0,1))"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["measure"]["display"], "L^-1");
}

#[test]
fn crofton_fixture() {
    let args = ["crofton-check", "--field", "F3", "--depth", "6", "--samples", "200000", "--seed", "42", PARABOLA];
    let (code, v, first) = mv(&args);
    assert_eq!(code, 0);
    assert_eq!(v["verdict"], true);
    // same flags, same bytes
    assert_eq!(mv(&args).2, first);
}

#[test]
fn exit_codes() {
    assert_eq!(mv(&["nonneg", "L - 2"]).0, 1);
    assert_eq!(mv(&["nonneg", "(L - 2)^2"]).0, 0);
    let (code, v, _) = mv(&["measure", "--field", "Q", "graph(y = "]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "SyntaxError");
    assert_eq!(mv(&["no-such-verb"]).0, 2);
    assert_eq!(mv(&["specialize", "--what", "gl", "--field", "Q"]).0, 2);
    assert_eq!(mv(&["vitushkin", "--field", "Q", "--i", "1", PARABOLA]).0, 2);
}

#[test]
fn specialize_and_text_output() {
    let (code, v, _) = mv(&["specialize", "--what", "grassmann", "--field", "F2"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["count"]["exact"], "1/4");
    let out = Command::new(env!("CARGO_BIN_EXE_mv"))
        .args(["specialize", "--what", "gl", "--field", "F2", "--format", "text"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("exact: 3/8"), "{text}");
}

#[test]
fn preorder_fixture() {
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/witness_x2m2.json");
    let (code, v, _) = mv(&["preorder-check", "--field", "F7", "--specialize", "--file", file]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["count"]["exact"], "1");
    let (code, v, _) = mv(&["preorder-check", "--field", "Q", "--specialize", "--file", file]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "BaseFieldMismatch");
}
