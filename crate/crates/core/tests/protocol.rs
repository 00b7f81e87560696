use bimanual_harness::tasks::*;
use bimanual_harness::protocol::*;

#[test]
fn py_float_matches_python() {
    assert_eq!(py_float(0.09), "0.09");
    assert_eq!(py_float(1.0), "1.0");
    assert_eq!(py_float(1e-5), "1e-05");
    assert_eq!(py_float(0.0001), "0.0001");
    assert_eq!(py_float(1e16), "1e+16");
    assert_eq!(py_float(-0.08868774943139059), "-0.08868774943139059");
    assert_eq!(py_float(123456789012345.0), "123456789012345.0");
}

#[test]
fn py_str_quotes() {
    assert_eq!(py_str("a"), "'a'");
    assert_eq!(py_str("it's"), "\"it's\"");
    assert_eq!(py_str("a'\""), "'a\\'\"'");
}

fn vector_with(token: &str) -> String {
    let mut v: Vec<String> = ["0.0", "0.0", "1.0", "0.0", "0.0", "0.0", "1.0", "1.0"].iter().map(|s| s.to_string()).collect();
    v.extend(v.clone());
    v[2] = token.to_string();
    let row = format!("[{}]", v.join(", "));
    serde_json::json!({
        "visual_state_description": "", "reasoning_and_reflection": "", "language_plan": "",
        "executable_plan": [row],
    })
    .to_string()
}

#[test]
fn decimal_tokens() {
    for ok in ["1", "-0.5", ".5", "5.", "1e-3", "+2.0E+4"] {
        assert!(parse_plan(&vector_with(ok), Tier::LowLevel).is_ok(), "{ok}");
    }
    for bad in ["-", ".", "0.738+0.162", "1e", "abc", "1..2", "0x10"] {
        assert!(parse_plan(&vector_with(bad), Tier::LowLevel).is_err(), "{bad}");
    }
}

#[test]
fn empty_object_is_missing_field() {
    assert_eq!(parse_plan("{}", Tier::HighLevel).unwrap_err().kind, ParseFailureKind::MissingField);
}

#[test]
fn window_keeps_last_three() {
    let mut w = HistoryWindow::default();
    assert_eq!(w.render(), "");
    for i in 0..5 {
        w.push(HistoryStep::failed(i, "x"));
    }
    let r = w.render();
    assert!(r.starts_with(HISTORY_HEADER));
    assert!(!r.contains("Step 1,") && r.contains("Step 2,") && r.contains("Step 4,"));
}
