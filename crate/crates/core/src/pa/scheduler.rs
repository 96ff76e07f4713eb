use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::{ActionId, Pa, PaError, StateId};

/// Default ceiling on the number of schedulers an enumeration may visit.
pub const DEFAULT_SCHEDULER_CAP: u64 = 1_000_000;

/// Memoryless deterministic scheduler: one action per non-terminal state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheduler {
    choices: Vec<Option<ActionId>>,
}

impl Scheduler {
    pub fn new(choices: Vec<Option<ActionId>>) -> Self {
        Scheduler { choices }
    }

    /// Picks the first enabled action everywhere.
    pub fn first_choice(m: &Pa) -> Self {
        Scheduler {
            choices: m
                .states()
                .map(|s| m.transitions(s).first().map(|t| t.action))
                .collect(),
        }
    }

    pub fn choice(&self, s: StateId) -> Option<ActionId> {
        self.choices.get(s.0).copied().flatten()
    }

    pub fn set(&mut self, s: StateId, a: ActionId) {
        if self.choices.len() <= s.0 {
            self.choices.resize(s.0 + 1, None);
        }
        self.choices[s.0] = Some(a);
    }

    pub fn choices(&self) -> &[Option<ActionId>] {
        &self.choices
    }

    /// Checks that every non-terminal state of `m` has an enabled choice.
    pub fn check(&self, m: &Pa) -> Result<(), PaError> {
        for s in m.states() {
            if m.is_terminal(s) {
                continue;
            }
            match self.choice(s) {
                None => return Err(PaError::MissingChoice(s)),
                Some(a) if m.transition(s, a).is_none() => {
                    return Err(PaError::ActionNotEnabled {
                        state: s,
                        action: m.action_name(a).to_string(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Number of memoryless deterministic schedulers: the product of the number
/// of enabled actions over all non-terminal states.
pub fn count_schedulers(m: &Pa) -> BigUint {
    let mut n = BigUint::one();
    for s in m.states() {
        let k = m.transitions(s).len();
        if k > 1 {
            n *= BigUint::from(k);
        }
    }
    n
}

/// Indexable view of all schedulers of a PA in lexicographic order.
///
/// States are ordered by index and actions by their position at the state;
/// the highest-indexed choice state varies fastest.
#[derive(Clone, Debug)]
pub struct SchedulerSpace {
    base: Vec<Option<ActionId>>,
    choice_states: Vec<StateId>,
    radices: Vec<u64>,
    len: u64,
}

impl SchedulerSpace {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn choice_states(&self) -> &[StateId] {
        &self.choice_states
    }

    /// The `index`-th scheduler.
    pub fn get(&self, m: &Pa, mut index: u64) -> Scheduler {
        assert!(index < self.len, "scheduler index out of range");
        let mut choices = self.base.clone();
        for (k, &s) in self.choice_states.iter().enumerate().rev() {
            let r = self.radices[k];
            let pos = (index % r) as usize;
            index /= r;
            choices[s.0] = Some(m.transitions(s)[pos].action);
        }
        Scheduler { choices }
    }

    /// Writes the `index`-th assignment of this space's choice states into `sigma`,
    /// leaving other states untouched.
    pub fn assign(&self, m: &Pa, mut index: u64, sigma: &mut Scheduler) {
        assert!(index < self.len, "scheduler index out of range");
        for (k, &s) in self.choice_states.iter().enumerate().rev() {
            let r = self.radices[k];
            sigma.set(s, m.transitions(s)[(index % r) as usize].action);
            index /= r;
        }
    }

    pub fn iter<'a>(&'a self, m: &'a Pa) -> impl Iterator<Item = Scheduler> + 'a {
        (0..self.len).map(move |i| self.get(m, i))
    }
}

/// All schedulers of `m`, refusing when there are more than `cap`.
pub fn enumerate_schedulers(m: &Pa, cap: u64) -> Result<SchedulerSpace, PaError> {
    let count = count_schedulers(m);
    let len = match count.to_u64() {
        Some(n) if n <= cap => n,
        _ => {
            return Err(PaError::SchedulerCapExceeded {
                count: count.to_string(),
                cap,
            })
        }
    };
    let all: Vec<StateId> = m.states().collect();
    let space = enumerate_schedulers_on(m, &all, cap)?;
    debug_assert_eq!(space.len, len);
    Ok(space)
}

/// Schedulers that vary only at `states`, taking the first action elsewhere.
///
/// Any quantity that depends only on the choices at `states` has the same
/// share over this space as over the full one.
pub fn enumerate_schedulers_on(m: &Pa, states: &[StateId], cap: u64) -> Result<SchedulerSpace, PaError> {
    let base = Scheduler::first_choice(m).choices;
    let mut choice_states: Vec<StateId> = states
        .iter()
        .copied()
        .filter(|&s| m.transitions(s).len() > 1)
        .collect();
    choice_states.sort();
    choice_states.dedup();
    let radices: Vec<u64> = choice_states
        .iter()
        .map(|&s| m.transitions(s).len() as u64)
        .collect();
    let mut len: u64 = 1;
    for &r in &radices {
        len = match len.checked_mul(r) {
            Some(n) if n <= cap => n,
            _ => {
                let count: BigUint = radices.iter().map(|&r| BigUint::from(r)).product();
                return Err(PaError::SchedulerCapExceeded {
                    count: count.to_string(),
                    cap,
                });
            }
        };
    }
    Ok(SchedulerSpace {
        base,
        choice_states,
        radices,
        len,
    })
}
