use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::pa::{Pa, StateId};

use super::MosError;

/// Outcome of comparing two states under a monotonic-safety order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// Features coincide on every compared coordinate.
    Equivalent,
    /// The first state is at least as safe and differs from the second.
    Safer,
    Worse,
    Incomparable,
}

impl Comparison {
    pub fn safer_or_equal(self) -> bool {
        matches!(self, Comparison::Equivalent | Comparison::Safer)
    }

    pub fn flipped(self) -> Self {
        match self {
            Comparison::Safer => Comparison::Worse,
            Comparison::Worse => Comparison::Safer,
            c => c,
        }
    }
}

/// Which way along one feature is safer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Higher,
    Lower,
    /// Closer to the given centre is safer, on either side of it.
    Toward(f64),
}

impl Direction {
    fn compare(self, a: f64, b: f64) -> Comparison {
        if a == b {
            return Comparison::Equivalent;
        }
        match self {
            Direction::Higher if a > b => Comparison::Safer,
            Direction::Higher => Comparison::Worse,
            Direction::Lower if a < b => Comparison::Safer,
            Direction::Lower => Comparison::Worse,
            Direction::Toward(c) => {
                if (b >= a && a >= c) || (b <= a && a <= c) {
                    Comparison::Safer
                } else if (a >= b && b >= c) || (a <= b && b <= c) {
                    Comparison::Worse
                } else {
                    Comparison::Incomparable
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderRule {
    /// Product order over the listed features; all other features must be equal.
    Features(Vec<(String, Direction)>),
    /// Extensional relation: `(a, b)` states that `a` is safer than `b`.
    Pairs(Vec<(StateId, StateId)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialOrder {
    pub name: String,
    pub rule: OrderRule,
    #[serde(default)]
    pub negated: bool,
}

impl PartialOrder {
    pub fn features<S: Into<String>>(
        name: impl Into<String>,
        keys: impl IntoIterator<Item = (S, Direction)>,
    ) -> Self {
        PartialOrder {
            name: name.into(),
            rule: OrderRule::Features(keys.into_iter().map(|(k, d)| (k.into(), d)).collect()),
            negated: false,
        }
    }

    pub fn pairs(name: impl Into<String>, pairs: Vec<(StateId, StateId)>) -> Self {
        PartialOrder {
            name: name.into(),
            rule: OrderRule::Pairs(pairs),
            negated: false,
        }
    }

    /// Resolves feature names against a feature list.
    pub fn bind(&self, feature_names: &[String]) -> Result<BoundOrder, MosError> {
        let rule = match &self.rule {
            OrderRule::Features(keys) => {
                let mut idx = Vec::with_capacity(keys.len());
                for (k, d) in keys {
                    let i = feature_names
                        .iter()
                        .position(|n| n == k)
                        .ok_or_else(|| MosError::UnknownFeature(k.clone()))?;
                    idx.push((i, *d));
                }
                let context = (0..feature_names.len())
                    .filter(|i| !idx.iter().any(|(j, _)| j == i))
                    .collect();
                Bound::Features { keys: idx, context }
            }
            OrderRule::Pairs(p) => Bound::Pairs(p.iter().copied().collect()),
        };
        Ok(BoundOrder {
            rule,
            negated: self.negated,
        })
    }

    pub fn bind_pa(&self, m: &Pa) -> Result<BoundOrder, MosError> {
        self.bind(&m.features().names)
    }
}

/// The order with safer and worse swapped.
pub fn negate(order: &PartialOrder) -> PartialOrder {
    PartialOrder {
        name: if let Some(rest) = order.name.strip_prefix("not-") {
            rest.to_string()
        } else {
            format!("not-{}", order.name)
        },
        rule: order.rule.clone(),
        negated: !order.negated,
    }
}

#[derive(Clone, Debug)]
enum Bound {
    Features {
        keys: Vec<(usize, Direction)>,
        context: Vec<usize>,
    },
    Pairs(HashSet<(StateId, StateId)>),
}

/// A [`PartialOrder`] resolved against one feature layout.
#[derive(Clone, Debug)]
pub struct BoundOrder {
    rule: Bound,
    negated: bool,
}

impl BoundOrder {
    /// Compares two feature rows. Extensional orders cannot be evaluated on rows.
    pub fn compare_rows(&self, a: &[f64], b: &[f64]) -> Comparison {
        let Bound::Features { keys, context } = &self.rule else {
            return Comparison::Incomparable;
        };
        if context.iter().any(|&i| a[i] != b[i]) {
            return Comparison::Incomparable;
        }
        let (mut safer, mut worse) = (false, false);
        for &(i, d) in keys {
            match d.compare(a[i], b[i]) {
                Comparison::Equivalent => {}
                Comparison::Safer => safer = true,
                Comparison::Worse => worse = true,
                Comparison::Incomparable => return Comparison::Incomparable,
            }
        }
        let c = match (safer, worse) {
            (false, false) => Comparison::Equivalent,
            (true, false) => Comparison::Safer,
            (false, true) => Comparison::Worse,
            (true, true) => Comparison::Incomparable,
        };
        if self.negated {
            c.flipped()
        } else {
            c
        }
    }

    pub fn compare(&self, m: &Pa, s1: StateId, s2: StateId) -> Comparison {
        match &self.rule {
            Bound::Features { .. } => {
                let rows = &m.features().rows;
                self.compare_rows(&rows[s1.0], &rows[s2.0])
            }
            Bound::Pairs(set) => {
                let c = if s1 == s2 {
                    Comparison::Equivalent
                } else if set.contains(&(s1, s2)) {
                    Comparison::Safer
                } else if set.contains(&(s2, s1)) {
                    Comparison::Worse
                } else {
                    Comparison::Incomparable
                };
                if self.negated {
                    c.flipped()
                } else {
                    c
                }
            }
        }
    }
}

/// Displacement in feature space, aligned with a feature list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateShift {
    pub delta: Vec<f64>,
}

impl StateShift {
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.delta).map(|(x, d)| x + d).collect()
    }

    /// Whether shifting `row` moves it to a safer-or-equal point of `order`.
    pub fn consistent_with(&self, order: &BoundOrder, row: &[f64]) -> bool {
        order.compare_rows(&self.apply(row), row).safer_or_equal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn distance_speed_product() {
        let o = PartialOrder::features("dv", [("d", Direction::Higher), ("v", Direction::Lower)])
            .bind(&names(&["d", "v", "h"]))
            .unwrap();
        assert_eq!(o.compare_rows(&[10.0, 2.0, 1.0], &[8.0, 2.0, 1.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[10.0, 1.0, 1.0], &[8.0, 2.0, 1.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[10.0, 3.0, 1.0], &[8.0, 2.0, 1.0]), Comparison::Incomparable);
        assert_eq!(o.compare_rows(&[10.0, 2.0, 0.0], &[8.0, 2.0, 1.0]), Comparison::Incomparable);
        assert_eq!(o.compare_rows(&[8.0, 2.0, 1.0], &[8.0, 2.0, 1.0]), Comparison::Equivalent);
    }

    #[test]
    fn toward_middle_branches() {
        let o = PartialOrder::features("w", [("w", Direction::Toward(15.0))])
            .bind(&names(&["w"]))
            .unwrap();
        assert_eq!(o.compare_rows(&[15.0], &[20.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[15.0], &[10.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[5.0], &[0.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[20.0], &[25.0]), Comparison::Safer);
        assert_eq!(o.compare_rows(&[25.0], &[20.0]), Comparison::Worse);
        assert_eq!(o.compare_rows(&[10.0], &[20.0]), Comparison::Incomparable);
    }

    #[test]
    fn negation_swaps_and_keeps_incomparable() {
        let o = PartialOrder::features("d", [("d", Direction::Higher)]);
        let n = negate(&o);
        let nb = n.bind(&names(&["d", "v"])).unwrap();
        assert_eq!(nb.compare_rows(&[2.0, 0.0], &[1.0, 0.0]), Comparison::Worse);
        assert_eq!(nb.compare_rows(&[2.0, 0.0], &[1.0, 1.0]), Comparison::Incomparable);
        assert_eq!(negate(&n), o);
    }

    #[test]
    fn unknown_feature_rejected() {
        let o = PartialOrder::features("x", [("x", Direction::Higher)]);
        assert!(o.bind(&names(&["d"])).is_err());
    }

    #[test]
    fn shift_direction() {
        let o = PartialOrder::features("d", [("d", Direction::Higher)])
            .bind(&names(&["d", "v"]))
            .unwrap();
        let up = StateShift { delta: vec![1.0, 0.0] };
        let down = StateShift { delta: vec![-1.0, 0.0] };
        assert!(up.consistent_with(&o, &[13.0, 11.0]));
        assert!(!down.consistent_with(&o, &[13.0, 11.0]));
    }
}
