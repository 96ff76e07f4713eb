//! Probabilistic automata.
//!
//! A [`Pa`] is a finite set of states with an initial state, an action
//! alphabet, a transition relation mapping (state, action) pairs to
//! distributions over successors, and a labelling with atomic propositions.
//! States additionally carry numeric features, which is what the monotonic
//! safety orders in [`crate::mos`] compare.

mod compose;
mod dtmc;
mod scheduler;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compose::compose;
pub use dtmc::{apply_scheduler, sample_path, Dtmc, Path, PathStep};
pub use scheduler::{
    count_schedulers, enumerate_schedulers, enumerate_schedulers_on, Scheduler, SchedulerSpace, DEFAULT_SCHEDULER_CAP,
};

/// Tolerance on the total mass of a stored distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Index into a PA's action alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionOrigin {
    PerceptionInput,
    ReachabilityChoice,
    Internal,
}

impl ActionOrigin {
    pub fn keyword(self) -> &'static str {
        match self {
            ActionOrigin::PerceptionInput => "perception",
            ActionOrigin::ReachabilityChoice => "choice",
            ActionOrigin::Internal => "internal",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "perception" => Some(ActionOrigin::PerceptionInput),
            "choice" => Some(ActionOrigin::ReachabilityChoice),
            "internal" => Some(ActionOrigin::Internal),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionLabel {
    pub name: String,
    pub origin: ActionOrigin,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("unknown action id {0}")]
    UnknownAction(usize),
    #[error("duplicate transition for ({state}, {action})")]
    DuplicateTransition { state: StateId, action: String },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("distribution mass {0} differs from 1")]
    MassNotOne(f64),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("shared action {0} has several distributions in one component state")]
    AmbiguousSync(String),
    #[error("feature {0} is defined by both components")]
    FeatureCollision(String),
    #[error("feature row for state {state} has {got} entries, expected {expected}")]
    FeatureArity { state: StateId, got: usize, expected: usize },
    #[error("scheduler count {count} exceeds cap {cap}")]
    SchedulerCapExceeded { count: String, cap: u64 },
    #[error("scheduler picks {action} at {state}, which is not enabled")]
    ActionNotEnabled { state: StateId, action: String },
    #[error("scheduler has no choice for non-terminal state {0}")]
    MissingChoice(StateId),
    #[error("invalid PA: {0}")]
    Invalid(String),
}

/// Probability distribution over states with sorted, unique, positive support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    support: Vec<(StateId, f64)>,
}

impl Distribution {
    pub fn dirac(s: StateId) -> Self {
        Distribution {
            support: vec![(s, 1.0)],
        }
    }

    /// Builds a distribution, merging repeated states and dropping zero entries.
    pub fn new(entries: impl IntoIterator<Item = (StateId, f64)>) -> Result<Self, PaError> {
        let mut support: Vec<(StateId, f64)> = Vec::new();
        for (s, p) in entries {
            if !(0.0..=1.0 + MASS_TOLERANCE).contains(&p) || p.is_nan() {
                return Err(PaError::InvalidProbability(p));
            }
            if p > 0.0 {
                support.push((s, p));
            }
        }
        support.sort_by_key(|e| e.0);
        let mut merged: Vec<(StateId, f64)> = Vec::with_capacity(support.len());
        for (s, p) in support {
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 += p,
                _ => merged.push((s, p)),
            }
        }
        if merged.is_empty() {
            return Err(PaError::EmptyDistribution);
        }
        let mass: f64 = merged.iter().map(|e| e.1).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(PaError::MassNotOne(mass));
        }
        Ok(Distribution { support: merged })
    }

    /// Stores the entries as given; [`validate`] reports any breach.
    pub fn from_support_unchecked(support: Vec<(StateId, f64)>) -> Self {
        Distribution { support }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn mass(&self) -> f64 {
        self.support.iter().map(|e| e.1).sum()
    }

    pub fn dirac_target(&self) -> Option<StateId> {
        match self.support.as_slice() {
            [(s, _)] => Some(*s),
            _ => None,
        }
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.support
            .binary_search_by_key(&s, |e| e.0)
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub action: ActionId,
    pub dist: Distribution,
}

/// Named numeric features, one row per state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pa {
    initial: StateId,
    actions: Vec<ActionLabel>,
    action_index: HashMap<String, ActionId>,
    transitions: Vec<Vec<Transition>>,
    labels: Vec<BTreeSet<String>>,
    state_names: Vec<String>,
    features: FeatureTable,
}

impl Pa {
    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states()).map(StateId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn actions(&self) -> &[ActionLabel] {
        &self.actions
    }

    pub fn action(&self, a: ActionId) -> &ActionLabel {
        &self.actions[a.0]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        self.actions
            .get(a.0)
            .map(|l| l.name.as_str())
            .unwrap_or("<unknown>")
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.action_index.get(name).copied()
    }

    pub fn transitions(&self, s: StateId) -> &[Transition] {
        &self.transitions[s.0]
    }

    pub fn transition(&self, s: StateId, a: ActionId) -> Option<&Distribution> {
        let ts = &self.transitions[s.0];
        ts.binary_search_by_key(&a, |t| t.action)
            .ok()
            .map(|i| &ts[i].dist)
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.transitions[s.0].is_empty()
    }

    pub fn enabled_actions(&self, s: StateId) -> Result<Vec<ActionId>, PaError> {
        if s.0 >= self.num_states() {
            return Err(PaError::UnknownState(s));
        }
        Ok(self.transitions[s.0].iter().map(|t| t.action).collect())
    }

    pub fn labels(&self, s: StateId) -> &BTreeSet<String> {
        &self.labels[s.0]
    }

    pub fn has_label(&self, s: StateId, label: &str) -> bool {
        self.labels[s.0].contains(label)
    }

    pub fn label_mask(&self, label: &str) -> Vec<bool> {
        self.labels.iter().map(|l| l.contains(label)).collect()
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s.0]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name).map(StateId)
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn feature(&self, s: StateId, name: &str) -> Option<f64> {
        let i = self.features.index_of(name)?;
        Some(self.features.rows[s.0][i])
    }

    /// States reachable from `roots` (roots included).
    pub fn reachable_from(&self, roots: &[StateId]) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack: Vec<StateId> = Vec::new();
        for &r in roots {
            if !seen[r.0] {
                seen[r.0] = true;
                stack.push(r);
            }
        }
        while let Some(s) = stack.pop() {
            for t in &self.transitions[s.0] {
                for &(n, _) in t.dist.support() {
                    if !seen[n.0] {
                        seen[n.0] = true;
                        stack.push(n);
                    }
                }
            }
        }
        seen
    }

    /// Same automaton with a different initial state.
    pub fn rerooted(&self, s: StateId) -> Pa {
        let mut m = self.clone();
        m.initial = s;
        m
    }

    /// Copy with the listed (state, action) transitions removed.
    pub fn without_transitions(&self, removed: &BTreeSet<(StateId, ActionId)>) -> Pa {
        let mut m = self.clone();
        for (s, ts) in m.transitions.iter_mut().enumerate() {
            ts.retain(|t| !removed.contains(&(StateId(s), t.action)));
        }
        m
    }

    /// Copy in which every state flagged in `mask` has no outgoing transitions.
    pub fn with_absorbing(&self, mask: &[bool]) -> Pa {
        let mut m = self.clone();
        for (s, ts) in m.transitions.iter_mut().enumerate() {
            if mask[s] {
                ts.clear();
            }
        }
        m
    }
}

/// Incremental constructor for [`Pa`].
#[derive(Clone, Debug, Default)]
pub struct PaBuilder {
    initial: Option<StateId>,
    actions: Vec<ActionLabel>,
    action_index: HashMap<String, ActionId>,
    transitions: Vec<Vec<Transition>>,
    labels: Vec<BTreeSet<String>>,
    state_names: Vec<String>,
    features: FeatureTable,
}

impl PaBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_features<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let mut b = Self::default();
        b.features.names = names.into_iter().map(Into::into).collect();
        b
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn add_state<L: Into<String>>(
        &mut self,
        name: impl Into<String>,
        labels: impl IntoIterator<Item = L>,
        features: Vec<f64>,
    ) -> StateId {
        let id = StateId(self.transitions.len());
        self.transitions.push(Vec::new());
        self.labels.push(labels.into_iter().map(Into::into).collect());
        self.state_names.push(name.into());
        self.features.rows.push(features);
        id
    }

    /// Interns an action; an existing name keeps its first origin.
    pub fn action(&mut self, name: &str, origin: ActionOrigin) -> ActionId {
        if let Some(&a) = self.action_index.get(name) {
            return a;
        }
        let a = ActionId(self.actions.len());
        self.actions.push(ActionLabel {
            name: name.to_string(),
            origin,
        });
        self.action_index.insert(name.to_string(), a);
        a
    }

    pub fn add_transition(
        &mut self,
        s: StateId,
        a: ActionId,
        dist: Distribution,
    ) -> Result<(), PaError> {
        if s.0 >= self.transitions.len() {
            return Err(PaError::UnknownState(s));
        }
        let ts = &mut self.transitions[s.0];
        if ts.iter().any(|t| t.action == a) {
            let action = self
                .actions
                .get(a.0)
                .map(|l| l.name.clone())
                .unwrap_or_else(|| format!("#{}", a.0));
            return Err(PaError::DuplicateTransition { state: s, action });
        }
        ts.push(Transition { action: a, dist });
        Ok(())
    }

    /// Appends a transition without any checks, for building deliberately broken models.
    pub fn add_transition_unchecked(&mut self, s: StateId, a: ActionId, dist: Distribution) {
        self.transitions[s.0].push(Transition { action: a, dist });
    }

    pub fn set_initial(&mut self, s: StateId) {
        self.initial = Some(s);
    }

    pub fn build_unchecked(mut self) -> Pa {
        for ts in &mut self.transitions {
            ts.sort_by_key(|t| t.action);
        }
        Pa {
            initial: self.initial.unwrap_or(StateId(0)),
            actions: self.actions,
            action_index: self.action_index,
            transitions: self.transitions,
            labels: self.labels,
            state_names: self.state_names,
            features: self.features,
        }
    }

    pub fn build(self) -> Result<Pa, PaError> {
        let m = self.build_unchecked();
        match validate(&m).into_iter().next() {
            None => Ok(m),
            Some(v) => Err(PaError::Invalid(v.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoStates,
    InitialOutOfRange(StateId),
    ActionNotInAlphabet { state: StateId, action: usize },
    DuplicateAction { state: StateId, action: String },
    MassNotOne { state: StateId, action: String, mass: f64 },
    BadEntry { state: StateId, action: String, prob: f64 },
    DuplicateSupport { state: StateId, action: String, target: StateId },
    UnknownSuccessor { state: StateId, action: String, target: StateId },
    FeatureArity { state: StateId, got: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "no states"),
            Violation::InitialOutOfRange(s) => write!(f, "initial state {s} out of range"),
            Violation::ActionNotInAlphabet { state, action } => {
                write!(f, "action #{action} at {state} not in alphabet")
            }
            Violation::DuplicateAction { state, action } => {
                write!(f, "several distributions for ({state}, {action})")
            }
            Violation::MassNotOne { state, action, mass } => {
                write!(f, "distribution mass ≠ 1 at ({state}, {action}): {mass}")
            }
            Violation::BadEntry {
                state,
                action,
                prob,
            } => write!(f, "probability {prob} outside (0, 1] at ({state}, {action})"),
            Violation::DuplicateSupport {
                state,
                action,
                target,
            } => write!(f, "successor {target} repeated at ({state}, {action})"),
            Violation::UnknownSuccessor {
                state,
                action,
                target,
            } => write!(f, "unknown successor {target} at ({state}, {action})"),
            Violation::FeatureArity {
                state,
                got,
                expected,
            } => write!(f, "state {state} has {got} features, expected {expected}"),
        }
    }
}

/// Checks every structural invariant; an empty result means the PA is well formed.
pub fn validate(m: &Pa) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = m.num_states();
    if n == 0 {
        out.push(Violation::NoStates);
        return out;
    }
    if m.initial.0 >= n {
        out.push(Violation::InitialOutOfRange(m.initial));
    }
    let nf = m.features.names.len();
    for s in m.states() {
        let row = &m.features.rows[s.0];
        if row.len() != nf {
            out.push(Violation::FeatureArity {
                state: s,
                got: row.len(),
                expected: nf,
            });
        }
        let mut seen = BTreeSet::new();
        for t in &m.transitions[s.0] {
            if t.action.0 >= m.actions.len() {
                out.push(Violation::ActionNotInAlphabet {
                    state: s,
                    action: t.action.0,
                });
                continue;
            }
            let name = m.actions[t.action.0].name.clone();
            if !seen.insert(t.action) {
                out.push(Violation::DuplicateAction {
                    state: s,
                    action: name.clone(),
                });
            }
            let mut targets = BTreeSet::new();
            for &(target, p) in t.dist.support() {
                if target.0 >= n {
                    out.push(Violation::UnknownSuccessor {
                        state: s,
                        action: name.clone(),
                        target,
                    });
                }
                if !(p > 0.0 && p <= 1.0 + MASS_TOLERANCE) {
                    out.push(Violation::BadEntry {
                        state: s,
                        action: name.clone(),
                        prob: p,
                    });
                }
                if !targets.insert(target) {
                    out.push(Violation::DuplicateSupport {
                        state: s,
                        action: name.clone(),
                        target,
                    });
                }
            }
            let mass = t.dist.mass();
            if (mass - 1.0).abs() > MASS_TOLERANCE {
                out.push(Violation::MassNotOne {
                    state: s,
                    action: name,
                    mass,
                });
            }
        }
    }
    out
}
