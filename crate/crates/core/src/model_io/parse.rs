use std::collections::{HashMap, HashSet};

use crate::mos::Direction;
use crate::pa::ActionOrigin;

use super::write::is_bare;
use super::{
    ActionDecl, ModelDocument, OrderDecl, OrderExpr, ParseError, PropertyDecl, StateDecl, TransitionDecl,
    FORMAT_VERSION, MASS_TOLERANCE,
};

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Word(String),
    Str(String),
    Punct(char),
    Arrow,
}

#[derive(Clone, Debug)]
struct Tok {
    kind: Kind,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column: col,
        message: message.into(),
    }
}

fn lex_line(text: &str, line: usize) -> Result<Vec<Tok>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            toks.push(Tok { kind: Kind::Arrow, line, col });
            i += 2;
        } else if "{}(),:=>".contains(c) {
            toks.push(Tok { kind: Kind::Punct(c), line, col });
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(line, col, "unterminated string")),
                    Some('"') => break,
                    Some('\\') => {
                        let e = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => return Err(err(line, i + 1, "invalid escape")),
                        };
                        s.push(e);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            toks.push(Tok { kind: Kind::Str(s), line, col });
        } else if is_bare(c) {
            let start = i;
            while i < chars.len() && is_bare(chars[i]) && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>')) {
                i += 1;
            }
            toks.push(Tok {
                kind: Kind::Word(chars[start..i].iter().collect()),
                line,
                col,
            });
        } else {
            return Err(err(line, col, format!("unexpected character {c:?}")));
        }
    }
    Ok(toks)
}

/// Cursor over the tokens of one line.
struct Line {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
    end_col: usize,
}

/// A name together with where it was written.
#[derive(Clone, Debug)]
struct At {
    name: String,
    line: usize,
    col: usize,
}

impl Line {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or((self.line, self.end_col), |t| (t.line, t.col))
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (l, c) = self.here();
        Err(err(l, c, message))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            self.fail("unexpected trailing input")
        }
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok { kind: Kind::Punct(p), .. }) if *p == c)
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.is_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected '{c}'"))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok { kind: Kind::Word(x), .. }) if x == w)
    }

    fn keyword(&mut self, w: &str) -> Result<(), ParseError> {
        if self.is_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected '{w}'"))
        }
    }

    fn name(&mut self) -> Result<At, ParseError> {
        match self.peek().cloned() {
            Some(Tok { kind: Kind::Word(s) | Kind::Str(s), line, col }) => {
                self.pos += 1;
                Ok(At { name: s, line, col })
            }
            _ => self.fail("expected a name"),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let (l, c) = self.here();
        match self.next().map(|t| t.kind) {
            Some(Kind::Word(w)) => match w.parse::<f64>() {
                Ok(x) if x.is_nan() => Err(err(l, c, "NaN is not allowed")),
                Ok(x) => Ok(x),
                Err(_) => Err(err(l, c, format!("invalid number {w:?}"))),
            },
            _ => Err(err(l, c, "expected a number")),
        }
    }

    fn integer(&mut self) -> Result<usize, ParseError> {
        let (l, c) = self.here();
        match self.next().map(|t| t.kind) {
            Some(Kind::Word(w)) => w.parse().map_err(|_| err(l, c, format!("invalid integer {w:?}"))),
            _ => Err(err(l, c, "expected an integer")),
        }
    }

    /// `{ item, item, ... }`, possibly empty.
    fn braced<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
        self.punct('{')?;
        self.list('}', &mut item)
    }

    fn list<T>(&mut self, close: char, item: &mut impl FnMut(&mut Self) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
        let mut out = Vec::new();
        if self.is_punct(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.is_punct(',') {
                self.pos += 1;
            } else {
                self.punct(close)?;
                return Ok(out);
            }
        }
    }
}

#[derive(Clone, Debug)]
enum RawOrder {
    Features(Vec<(At, Direction)>),
    Pairs(Vec<(At, At)>),
    Negate(Box<RawOrder>),
    Ref(At),
}

fn order_expr(l: &mut Line) -> Result<RawOrder, ParseError> {
    let head = l.name()?;
    let quoted = matches!(l.toks[l.pos - 1].kind, Kind::Str(_));
    if quoted || !l.is_punct('(') {
        return Ok(RawOrder::Ref(head));
    }
    l.punct('(')?;
    match head.name.as_str() {
        "features" => Ok(RawOrder::Features(l.list(')', &mut |l: &mut Line| {
            let k = l.name()?;
            l.punct(':')?;
            let d = if l.is_word("higher") {
                l.pos += 1;
                Direction::Higher
            } else if l.is_word("lower") {
                l.pos += 1;
                Direction::Lower
            } else if l.is_word("toward") {
                l.pos += 1;
                let (li, c) = l.here();
                let x = l.number()?;
                if !x.is_finite() {
                    return Err(err(li, c, "centre must be finite"));
                }
                Direction::Toward(x)
            } else {
                return l.fail("expected higher, lower or toward");
            };
            Ok((k, d))
        })?)),
        "pairs" => Ok(RawOrder::Pairs(l.list(')', &mut |l: &mut Line| {
            let a = l.name()?;
            l.punct('>')?;
            Ok((a, l.name()?))
        })?)),
        "negate" => {
            let inner = order_expr(l)?;
            l.punct(')')?;
            Ok(RawOrder::Negate(Box::new(inner)))
        }
        other => Err(err(head.line, head.col, format!("unknown order form {other:?}"))),
    }
}

struct RawState {
    at: At,
    initial: bool,
    labels: Vec<String>,
    features: Vec<(At, f64)>,
}

struct RawTransition {
    source: At,
    action: At,
    targets: Vec<(At, f64)>,
    brace: (usize, usize),
}

/// Parses and fully checks a document.
pub fn parse(text: &str) -> Result<ModelDocument, ParseError> {
    let mut header = false;
    let mut meta = Vec::new();
    let mut features: Option<(Vec<At>, usize)> = None;
    let mut actions: Vec<(At, ActionOrigin)> = Vec::new();
    let mut states: Vec<RawState> = Vec::new();
    let mut transitions: Vec<RawTransition> = Vec::new();
    let mut property: Option<PropertyDecl> = None;
    let mut orders: Vec<(At, RawOrder)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let toks = lex_line(raw, ln)?;
        if toks.is_empty() {
            continue;
        }
        let mut l = Line {
            toks,
            pos: 0,
            line: ln,
            end_col: raw.chars().count() + 1,
        };
        if !header {
            l.keyword("pa")?;
            let (li, c) = l.here();
            let v = l.name()?;
            if v.name != format!("v{FORMAT_VERSION}") {
                return Err(err(li, c, format!("unsupported version {:?}", v.name)));
            }
            l.expect_end()?;
            header = true;
            continue;
        }
        let head = match l.peek() {
            Some(Tok { kind: Kind::Word(w), .. }) => w.clone(),
            _ => String::new(),
        };
        match head.as_str() {
            "pa" => return l.fail("duplicate header"),
            "meta" => {
                l.pos += 1;
                let k = l.name()?;
                let v = l.name()?;
                meta.push((k.name, v.name));
            }
            "features" => {
                if features.is_some() {
                    return l.fail("features declared twice");
                }
                l.pos += 1;
                let mut names = Vec::new();
                while !l.at_end() {
                    let n = l.name()?;
                    if names.iter().any(|m: &At| m.name == n.name) {
                        return Err(err(n.line, n.col, format!("duplicate feature {}", n.name)));
                    }
                    names.push(n);
                }
                features = Some((names, ln));
            }
            "action" => {
                l.pos += 1;
                let n = l.name()?;
                if actions.iter().any(|(a, _)| a.name == n.name) {
                    return Err(err(n.line, n.col, format!("duplicate action {}", n.name)));
                }
                let (li, c) = l.here();
                let o = l.name()?;
                let origin = ActionOrigin::from_keyword(&o.name)
                    .ok_or_else(|| err(li, c, "expected perception, choice or internal"))?;
                actions.push((n, origin));
            }
            "state" => {
                l.pos += 1;
                let at = l.name()?;
                if states.iter().any(|s| s.at.name == at.name) {
                    return Err(err(at.line, at.col, format!("duplicate state {}", at.name)));
                }
                let mut st = RawState {
                    at,
                    initial: false,
                    labels: Vec::new(),
                    features: Vec::new(),
                };
                let mut seen = HashSet::new();
                while !l.at_end() {
                    let attr = l.name()?;
                    if !seen.insert(attr.name.clone()) {
                        return Err(err(attr.line, attr.col, format!("{} given twice", attr.name)));
                    }
                    match attr.name.as_str() {
                        "initial" => st.initial = true,
                        "labels" => st.labels = l.braced(|l| Ok(l.name()?.name))?,
                        "features" => {
                            st.features = l.braced(|l| {
                                let k = l.name()?;
                                l.punct('=')?;
                                Ok((k, l.number()?))
                            })?
                        }
                        other => return Err(err(attr.line, attr.col, format!("unknown state attribute {other:?}"))),
                    }
                }
                states.push(st);
            }
            "property" => {
                if property.is_some() {
                    return l.fail("property declared twice");
                }
                l.pos += 1;
                l.keyword("bad")?;
                l.punct('=')?;
                let bad = l.name()?.name;
                let mut horizon = None;
                if l.is_word("horizon") {
                    l.pos += 1;
                    l.punct('=')?;
                    horizon = Some(l.integer()?);
                }
                property = Some(PropertyDecl { bad, horizon });
            }
            "order" => {
                l.pos += 1;
                let n = l.name()?;
                if orders.iter().any(|(o, _)| o.name == n.name) {
                    return Err(err(n.line, n.col, format!("duplicate order {}", n.name)));
                }
                l.punct('=')?;
                let e = order_expr(&mut l)?;
                orders.push((n, e));
            }
            _ => {
                let source = l.name()?;
                let action = l.name()?;
                match l.next() {
                    Some(Tok { kind: Kind::Arrow, .. }) => {}
                    _ => {
                        l.pos -= 1;
                        return l.fail("expected '->'");
                    }
                }
                let brace = l.here();
                let targets = l.braced(|l| {
                    let d = l.name()?;
                    l.punct(':')?;
                    let (li, c) = l.here();
                    let p = l.number()?;
                    if !(p > 0.0 && p <= 1.0 + MASS_TOLERANCE) {
                        return Err(err(li, c, format!("probability {p} outside (0, 1]")));
                    }
                    Ok((d, p))
                })?;
                transitions.push(RawTransition {
                    source,
                    action,
                    targets,
                    brace,
                });
            }
        }
        l.expect_end()?;
    }
    if !header {
        return Err(err(1, 1, "missing header 'pa v1'"));
    }
    resolve(meta, features, actions, states, transitions, property, orders, text.lines().count())
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    meta: Vec<(String, String)>,
    features: Option<(Vec<At>, usize)>,
    actions: Vec<(At, ActionOrigin)>,
    states: Vec<RawState>,
    transitions: Vec<RawTransition>,
    property: Option<PropertyDecl>,
    orders: Vec<(At, RawOrder)>,
    last_line: usize,
) -> Result<ModelDocument, ParseError> {
    let feature_names: Vec<String> = features.iter().flat_map(|(f, _)| f.iter().map(|a| a.name.clone())).collect();
    let state_set: HashSet<&str> = states.iter().map(|s| s.at.name.as_str()).collect();
    let action_set: HashSet<&str> = actions.iter().map(|(a, _)| a.name.as_str()).collect();

    let initials: Vec<&RawState> = states.iter().filter(|s| s.initial).collect();
    match initials.len() {
        1 => {}
        0 => return Err(err(last_line.max(1), 1, "no initial state")),
        _ => {
            let s = &initials[1].at;
            return Err(err(s.line, s.col, "more than one initial state"));
        }
    }

    let mut out_states = Vec::with_capacity(states.len());
    for s in &states {
        for (k, _) in &s.features {
            if !feature_names.contains(&k.name) {
                return Err(err(k.line, k.col, format!("unknown feature {}", k.name)));
            }
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for f in &feature_names {
            let hits: Vec<&(At, f64)> = s.features.iter().filter(|(k, _)| &k.name == f).collect();
            match hits.as_slice() {
                [one] => row.push((f.clone(), one.1)),
                [] => return Err(err(s.at.line, s.at.col, format!("state {} lacks feature {f}", s.at.name))),
                [_, second, ..] => return Err(err(second.0.line, second.0.col, format!("feature {f} given twice"))),
            }
        }
        out_states.push(StateDecl {
            name: s.at.name.clone(),
            initial: s.initial,
            labels: s.labels.clone(),
            features: row,
        });
    }

    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out_transitions = Vec::with_capacity(transitions.len());
    for t in &transitions {
        if !state_set.contains(t.source.name.as_str()) {
            return Err(err(t.source.line, t.source.col, format!("unknown state {}", t.source.name)));
        }
        if !action_set.contains(t.action.name.as_str()) {
            return Err(err(t.action.line, t.action.col, format!("unknown action {}", t.action.name)));
        }
        if !seen.insert((&t.source.name, &t.action.name)) {
            return Err(err(
                t.source.line,
                t.source.col,
                format!("duplicate transition for ({}, {})", t.source.name, t.action.name),
            ));
        }
        let mut dsts = HashSet::new();
        for (d, _) in &t.targets {
            if !state_set.contains(d.name.as_str()) {
                return Err(err(d.line, d.col, format!("unknown state {}", d.name)));
            }
            if !dsts.insert(d.name.as_str()) {
                return Err(err(d.line, d.col, format!("target {} listed twice", d.name)));
            }
        }
        let mass: f64 = t.targets.iter().map(|(_, p)| p).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(err(t.brace.0, t.brace.1, format!("distribution mass {mass} differs from 1")));
        }
        out_transitions.push(TransitionDecl {
            source: t.source.name.clone(),
            action: t.action.name.clone(),
            targets: t.targets.iter().map(|(d, p)| (d.name.clone(), *p)).collect(),
        });
    }

    let mut declared: HashMap<String, ()> = HashMap::new();
    let mut out_orders = Vec::with_capacity(orders.len());
    for (n, e) in &orders {
        let expr = resolve_order(e, &feature_names, &state_set, &declared)?;
        declared.insert(n.name.clone(), ());
        out_orders.push(OrderDecl { name: n.name.clone(), expr });
    }

    Ok(ModelDocument {
        version: FORMAT_VERSION,
        meta,
        features: feature_names,
        actions: actions.into_iter().map(|(a, origin)| ActionDecl { name: a.name, origin }).collect(),
        states: out_states,
        transitions: out_transitions,
        property,
        orders: out_orders,
    })
}

fn resolve_order(
    e: &RawOrder,
    features: &[String],
    states: &HashSet<&str>,
    declared: &HashMap<String, ()>,
) -> Result<OrderExpr, ParseError> {
    let state = |a: &At| {
        if states.contains(a.name.as_str()) {
            Ok(a.name.clone())
        } else {
            Err(err(a.line, a.col, format!("unknown state {}", a.name)))
        }
    };
    Ok(match e {
        RawOrder::Features(keys) => OrderExpr::Features(
            keys.iter()
                .map(|(k, d)| {
                    if features.contains(&k.name) {
                        Ok((k.name.clone(), *d))
                    } else {
                        Err(err(k.line, k.col, format!("unknown feature {}", k.name)))
                    }
                })
                .collect::<Result<_, _>>()?,
        ),
        RawOrder::Pairs(p) => OrderExpr::Pairs(p.iter().map(|(a, b)| Ok((state(a)?, state(b)?))).collect::<Result<_, _>>()?),
        RawOrder::Negate(inner) => OrderExpr::Negate(Box::new(resolve_order(inner, features, states, declared)?)),
        RawOrder::Ref(a) => {
            if !declared.contains_key(&a.name) {
                return Err(err(a.line, a.col, format!("unknown order {}", a.name)));
            }
            OrderExpr::Ref(a.name.clone())
        }
    })
}
