use std::fmt::Write as _;

use crate::mos::Direction;

use super::{ModelDocument, OrderExpr};

const KEYWORDS: &[&str] = &["pa", "meta", "features", "action", "state", "property", "order"];

pub(super) fn is_bare(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_.@+|/-".contains(c)
}

fn name(s: &str) -> String {
    if !s.is_empty() && s.chars().all(is_bare) && !s.contains("->") && !KEYWORDS.contains(&s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Shortest decimal that parses back to `x`; exponent form outside 1e-6..1e17.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if (1e-6..1e17).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn direction(d: &Direction) -> String {
    match d {
        Direction::Higher => "higher".into(),
        Direction::Lower => "lower".into(),
        Direction::Toward(c) => format!("toward {}", format_number(*c)),
    }
}

fn order_expr(e: &OrderExpr) -> String {
    match e {
        OrderExpr::Features(keys) => {
            let parts: Vec<String> = keys.iter().map(|(k, d)| format!("{}: {}", name(k), direction(d))).collect();
            format!("features({})", parts.join(", "))
        }
        OrderExpr::Pairs(p) => {
            let parts: Vec<String> = p.iter().map(|(a, b)| format!("{} > {}", name(a), name(b))).collect();
            format!("pairs({})", parts.join(", "))
        }
        OrderExpr::Negate(inner) => format!("negate({})", order_expr(inner)),
        OrderExpr::Ref(n) => name(n),
    }
}

/// Canonical text of a document. Parsing the output gives the document back.
pub fn write(doc: &ModelDocument) -> String {
    let mut out = format!("pa v{}\n", doc.version);
    for (k, v) in &doc.meta {
        let _ = writeln!(out, "meta {} {}", name(k), quoted(v));
    }
    if !doc.features.is_empty() {
        let names: Vec<String> = doc.features.iter().map(|f| name(f)).collect();
        let _ = writeln!(out, "features {}", names.join(" "));
    }
    for a in &doc.actions {
        let _ = writeln!(out, "action {} {}", name(&a.name), a.origin.keyword());
    }
    for s in &doc.states {
        let _ = write!(out, "state {}", name(&s.name));
        if s.initial {
            out.push_str(" initial");
        }
        if !s.labels.is_empty() {
            let l: Vec<String> = s.labels.iter().map(|l| name(l)).collect();
            let _ = write!(out, " labels {{{}}}", l.join(", "));
        }
        if !s.features.is_empty() {
            let f: Vec<String> = s.features.iter().map(|(k, v)| format!("{}={}", name(k), format_number(*v))).collect();
            let _ = write!(out, " features {{{}}}", f.join(", "));
        }
        out.push('\n');
    }
    for t in &doc.transitions {
        let targets: Vec<String> = t.targets.iter().map(|(d, p)| format!("{}: {}", name(d), format_number(*p))).collect();
        let _ = writeln!(out, "{} {} -> {{{}}}", name(&t.source), name(&t.action), targets.join(", "));
    }
    if let Some(p) = &doc.property {
        let _ = write!(out, "property bad = {}", name(&p.bad));
        if let Some(h) = p.horizon {
            let _ = write!(out, " horizon = {h}");
        }
        out.push('\n');
    }
    for o in &doc.orders {
        let _ = writeln!(out, "order {} = {}", name(&o.name), order_expr(&o.expr));
    }
    out
}

fn quoted(s: &str) -> String {
    let n = name(s);
    if n.starts_with('"') {
        n
    } else {
        format!("\"{n}\"")
    }
}
