//! Text format for probabilistic automata with their safety property and
//! candidate orders.
//!
//! A document is line oriented; see the README for the grammar. [`parse`]
//! checks it completely (every error carries a line and column), [`lower`]
//! turns it into a [`Pa`], and [`export`] goes the other way. The document
//! type also serializes to JSON with the same content.

mod parse;
mod write;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mos::{Direction, OrderRule, PartialOrder};
use crate::pa::{ActionOrigin, Distribution, Pa, PaBuilder, PaError, StateId};
use crate::pmc::SafetyProperty;

pub use parse::parse;
pub use write::{format_number, write};

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "pa";
/// Allowed deviation of a written distribution's mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelIoError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Pa(#[from] PaError),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDecl {
    pub name: String,
    pub origin: ActionOrigin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDecl {
    pub name: String,
    #[serde(default)]
    pub initial: bool,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub features: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDecl {
    pub source: String,
    pub action: String,
    pub targets: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyDecl {
    pub bad: String,
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderExpr {
    Features(Vec<(String, Direction)>),
    /// `(a, b)`: `a` is safer than `b`.
    Pairs(Vec<(String, String)>),
    Negate(Box<OrderExpr>),
    /// An order declared earlier in the document.
    Ref(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderDecl {
    pub name: String,
    pub expr: OrderExpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(default)]
    pub meta: Vec<(String, String)>,
    #[serde(default)]
    pub features: Vec<String>,
    pub actions: Vec<ActionDecl>,
    pub states: Vec<StateDecl>,
    pub transitions: Vec<TransitionDecl>,
    #[serde(default)]
    pub property: Option<PropertyDecl>,
    #[serde(default)]
    pub orders: Vec<OrderDecl>,
}

impl ModelDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    /// Reads the JSON form and applies the same checks as [`parse`] by
    /// round-tripping through the text form.
    pub fn from_json(text: &str) -> Result<Self, ModelIoError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelIoError::Json(e.to_string()))?;
        parse(&write(&doc))?;
        Ok(doc)
    }
}

/// Result of lowering a document.
#[derive(Clone, Debug)]
pub struct Lowered {
    pub pa: Pa,
    pub property: Option<SafetyProperty>,
    pub orders: Vec<PartialOrder>,
    /// Non-fatal findings, e.g. states unreachable from the initial state.
    pub warnings: Vec<String>,
}

/// Builds the PA, property and orders of a parsed document. States and
/// actions are numbered in declaration order.
pub fn lower(doc: &ModelDocument) -> Result<Lowered, ModelIoError> {
    let mut b = PaBuilder::with_features(doc.features.clone());
    let mut ids: HashMap<&str, StateId> = HashMap::new();
    for st in &doc.states {
        let row = doc
            .features
            .iter()
            .map(|f| {
                st.features
                    .iter()
                    .find(|(k, _)| k == f)
                    .map(|&(_, v)| v)
                    .ok_or_else(|| PaError::Invalid(format!("state {} lacks feature {f}", st.name)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let id = b.add_state(st.name.clone(), st.labels.iter().cloned(), row);
        if st.initial {
            b.set_initial(id);
        }
        ids.insert(&st.name, id);
    }
    for a in &doc.actions {
        b.action(&a.name, a.origin);
    }
    let state = |name: &str| ids.get(name).copied().ok_or_else(|| PaError::Invalid(format!("unknown state {name}")));
    for t in &doc.transitions {
        let s = state(&t.source)?;
        let a = doc
            .actions
            .iter()
            .position(|d| d.name == t.action)
            .ok_or_else(|| PaError::Invalid(format!("unknown action {}", t.action)))?;
        let mass: f64 = t.targets.iter().map(|&(_, p)| p).sum();
        let entries = t
            .targets
            .iter()
            .map(|(n, p)| Ok((state(n)?, p / mass)))
            .collect::<Result<Vec<_>, PaError>>()?;
        b.add_transition(s, crate::pa::ActionId(a), Distribution::new(entries)?)?;
    }
    let pa = b.build()?;

    let mut orders: Vec<PartialOrder> = Vec::new();
    for o in &doc.orders {
        let resolved = resolve_order(&o.expr, &orders, &ids)?;
        orders.push(PartialOrder { name: o.name.clone(), ..resolved });
    }

    let mut warnings = Vec::new();
    let reach = pa.reachable_from(&[pa.initial()]);
    let unreachable: Vec<&str> = pa.states().filter(|s| !reach[s.0]).map(|s| pa.state_name(s)).collect();
    if !unreachable.is_empty() {
        warnings.push(format!(
            "{} state(s) unreachable from the initial state: {}",
            unreachable.len(),
            unreachable.join(", ")
        ));
    }
    Ok(Lowered {
        pa,
        property: doc.property.as_ref().map(|p| SafetyProperty {
            bad_label: p.bad.clone(),
            horizon: p.horizon,
        }),
        orders,
        warnings,
    })
}

fn resolve_order(expr: &OrderExpr, earlier: &[PartialOrder], ids: &HashMap<&str, StateId>) -> Result<PartialOrder, PaError> {
    Ok(match expr {
        OrderExpr::Features(keys) => PartialOrder::features("", keys.iter().cloned()),
        OrderExpr::Pairs(pairs) => {
            let get = |n: &String| ids.get(n.as_str()).copied().ok_or_else(|| PaError::Invalid(format!("unknown state {n}")));
            PartialOrder::pairs("", pairs.iter().map(|(a, b)| Ok((get(a)?, get(b)?))).collect::<Result<_, PaError>>()?)
        }
        OrderExpr::Negate(inner) => {
            let o = resolve_order(inner, earlier, ids)?;
            PartialOrder { negated: !o.negated, ..o }
        }
        OrderExpr::Ref(name) => earlier
            .iter()
            .find(|o| &o.name == name)
            .cloned()
            .ok_or_else(|| PaError::Invalid(format!("unknown order {name}")))?,
    })
}

/// Document describing `m`, with optional property, orders and metadata.
pub fn export(m: &Pa, property: Option<&SafetyProperty>, orders: &[PartialOrder], meta: &BTreeMap<String, String>) -> ModelDocument {
    let feats = &m.features().names;
    let states = m
        .states()
        .map(|s| StateDecl {
            name: m.state_name(s).to_string(),
            initial: s == m.initial(),
            labels: m.labels(s).iter().cloned().collect(),
            features: feats.iter().map(|f| (f.clone(), m.feature(s, f).unwrap_or(0.0))).collect(),
        })
        .collect();
    let transitions = m
        .states()
        .flat_map(|s| {
            m.transitions(s).iter().map(move |t| TransitionDecl {
                source: m.state_name(s).to_string(),
                action: m.action_name(t.action).to_string(),
                targets: t.dist.support().iter().map(|&(d, p)| (m.state_name(d).to_string(), p)).collect(),
            })
        })
        .collect();
    let orders = orders
        .iter()
        .map(|o| {
            let base = match &o.rule {
                OrderRule::Features(keys) => OrderExpr::Features(keys.clone()),
                OrderRule::Pairs(p) => OrderExpr::Pairs(
                    p.iter()
                        .map(|&(a, b)| (m.state_name(a).to_string(), m.state_name(b).to_string()))
                        .collect(),
                ),
            };
            OrderDecl {
                name: o.name.clone(),
                expr: if o.negated { OrderExpr::Negate(Box::new(base)) } else { base },
            }
        })
        .collect();
    ModelDocument {
        version: FORMAT_VERSION,
        meta: meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        features: feats.clone(),
        actions: m
            .actions()
            .iter()
            .map(|a| ActionDecl {
                name: a.name.clone(),
                origin: a.origin,
            })
            .collect(),
        states,
        transitions,
        property: property.map(|p| PropertyDecl {
            bad: p.bad_label.clone(),
            horizon: p.horizon,
        }),
        orders,
    }
}

/// Parses and lowers in one step.
pub fn load(text: &str) -> Result<Lowered, ModelIoError> {
    lower(&parse(text)?)
}
