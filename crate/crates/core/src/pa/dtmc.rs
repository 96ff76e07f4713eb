use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::Rng;

use super::{ActionId, Distribution, Pa, PaError, Scheduler, StateId};

/// Fully probabilistic chain induced by fixing a scheduler.
///
/// States are the scheduler-reachable subset of the PA, renumbered in BFS
/// order; `origin` maps them back.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtmc {
    origin: Vec<StateId>,
    rows: Vec<Option<(ActionId, Vec<(usize, f64)>)>>,
    labels: Vec<BTreeSet<String>>,
}

impl Dtmc {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn origin(&self, i: usize) -> StateId {
        self.origin[i]
    }

    pub fn row(&self, i: usize) -> Option<&[(usize, f64)]> {
        self.rows[i].as_ref().map(|(_, r)| r.as_slice())
    }

    pub fn action(&self, i: usize) -> Option<ActionId> {
        self.rows[i].as_ref().map(|(a, _)| *a)
    }

    pub fn labels(&self, i: usize) -> &BTreeSet<String> {
        &self.labels[i]
    }

    pub fn has_label(&self, i: usize, label: &str) -> bool {
        self.labels[i].contains(label)
    }

    /// Local index of a PA state, if it is reachable under the scheduler.
    pub fn local(&self, s: StateId) -> Option<usize> {
        self.origin.iter().position(|&o| o == s)
    }
}

/// Restricts `m` to the choices of `sigma`, keeping only reachable states.
pub fn apply_scheduler(m: &Pa, sigma: &Scheduler) -> Result<Dtmc, PaError> {
    let mut index: HashMap<StateId, usize> = HashMap::new();
    let mut origin = vec![m.initial()];
    index.insert(m.initial(), 0);
    let mut queue = VecDeque::from([m.initial()]);
    let mut rows: Vec<Option<(ActionId, Vec<(usize, f64)>)>> = Vec::new();
    while let Some(s) = queue.pop_front() {
        if m.is_terminal(s) {
            rows.push(None);
            continue;
        }
        let a = sigma.choice(s).ok_or(PaError::MissingChoice(s))?;
        let dist: &Distribution = m.transition(s, a).ok_or_else(|| PaError::ActionNotEnabled {
            state: s,
            action: m.action_name(a).to_string(),
        })?;
        let mut row = Vec::with_capacity(dist.len());
        for &(n, p) in dist.support() {
            let next = origin.len();
            let j = *index.entry(n).or_insert_with(|| {
                origin.push(n);
                queue.push_back(n);
                next
            });
            row.push((j, p));
        }
        rows.push(Some((a, row)));
    }
    let labels = origin.iter().map(|&s| m.labels(s).clone()).collect();
    Ok(Dtmc {
        origin,
        rows,
        labels,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    pub state: StateId,
    /// Action taken from this state; `None` on the last step.
    pub action: Option<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Path {
    pub steps: Vec<PathStep>,
}

impl Path {
    /// Number of transitions taken.
    pub fn len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> StateId {
        self.steps.last().expect("path has an initial state").state
    }
}

/// Draws a successor index from `row` by inverse CDF.
pub(crate) fn pick(row: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.last().expect("non-empty row").0
}

/// Samples a path of at most `horizon` transitions, stopping at terminal states.
pub fn sample_path<R: Rng + ?Sized>(d: &Dtmc, horizon: usize, rng: &mut R) -> Path {
    let mut i = d.initial();
    let mut steps = Vec::new();
    for _ in 0..horizon {
        let Some((a, row)) = &d.rows[i] else { break };
        steps.push(PathStep {
            state: d.origin[i],
            action: Some(*a),
        });
        i = pick(row, rng.gen::<f64>());
    }
    steps.push(PathStep {
        state: d.origin[i],
        action: None,
    });
    Path { steps }
}
