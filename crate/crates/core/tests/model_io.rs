use std::collections::BTreeMap;
use std::path::PathBuf;

use mos_core::casestudies::{preset, PRESETS};
use mos_core::model_io::{export, load, parse, write, ModelDocument, ModelIoError};
use mos_core::mos::trim_pmc;
use mos_core::pmc::min_safety_prob;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn preset_text(name: &str) -> String {
    let m = preset(name).unwrap().build().unwrap();
    let meta = BTreeMap::from([("source".to_string(), name.to_string())]);
    write(&export(&m.pa, Some(&m.property), &m.orders, &meta))
}

// Set UPDATE_GOLDEN=1 to rewrite the files under tests/golden.
fn check_golden(name: &str, text: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, want, "{name} differs from golden");
}

#[test]
fn preset_exports_are_byte_stable() {
    for name in PRESETS {
        let text = preset_text(name);
        let lowered = load(&text).unwrap();
        let meta = BTreeMap::from([("source".to_string(), name.to_string())]);
        let again = write(&export(&lowered.pa, lowered.property.as_ref(), &lowered.orders, &meta));
        assert_eq!(again, text, "{name}");
        let json = parse(&text).unwrap().to_json();
        assert_eq!(write(&ModelDocument::from_json(&json).unwrap()), text, "{name} via JSON");
    }
}

#[test]
fn counterexample_tank_matches_golden() {
    let text = preset_text("ce3");
    check_golden("ce3.pa", &text);
    let lowered = load(&text).unwrap();
    let p = min_safety_prob(&lowered.pa, lowered.property.as_ref().unwrap(), 1e-12)
        .unwrap()
        .probability;
    assert!((p - 0.6912).abs() < 1e-9, "{p}");
}

#[test]
fn small_model_matches_golden_and_trims() {
    let text = std::fs::read_to_string(golden("fork.pa")).unwrap();
    let lowered = load(&text).unwrap();
    assert_eq!(write(&parse(&text).unwrap()), text);
    let psi = lowered.property.clone().unwrap();
    assert_eq!(psi.horizon, Some(3));
    let p = min_safety_prob(&lowered.pa, &psi, 1e-12).unwrap().probability;
    assert!((p - 0.6).abs() < 1e-12, "{p}");
    let (t, report) = trim_pmc(&lowered.pa, &lowered.orders[0]).unwrap();
    assert_eq!(report.transitions_removed, 1);
    let q = min_safety_prob(&t, &psi, 1e-12).unwrap().probability;
    assert!((p - q).abs() < 1e-12);
}

#[test]
fn mass_error_names_its_line() {
    let text = "pa v1\naction go internal\nstate a initial\nstate b\nstate c\na go -> {b: 0.5, c: 0.49}\n";
    match load(text) {
        Err(ModelIoError::Parse(e)) => {
            assert_eq!(e.line, 6);
            assert!(e.message.contains("mass"), "{}", e.message);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn models_without_orders_have_none() {
    let text = "pa v1\naction go internal\nstate a initial\nstate b labels {bad}\na go -> {b: 1}\nproperty bad = bad\n";
    let lowered = load(text).unwrap();
    assert!(lowered.orders.is_empty());
    assert_eq!(lowered.pa.num_states(), 2);
}
