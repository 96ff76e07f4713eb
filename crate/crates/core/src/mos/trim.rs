use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::pa::{ActionId, ActionOrigin, Pa, StateId};

use super::order::{BoundOrder, Comparison, PartialOrder};
use super::MosError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimmedTransition {
    pub source: StateId,
    pub removed_action: ActionId,
    pub removed_dest: StateId,
    pub kept_action: ActionId,
    pub kept_dest: StateId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimReport {
    pub pairs: Vec<TrimmedTransition>,
    pub transitions_removed: usize,
}

impl TrimReport {
    fn push_all(&mut self, more: Vec<TrimmedTransition>) {
        self.transitions_removed += more.len();
        self.pairs.extend(more);
    }

    /// Distinct (removed destination, kept destination) pairs, in report order.
    pub fn state_pairs(&self) -> Vec<(StateId, StateId)> {
        let mut seen = BTreeSet::new();
        self.pairs
            .iter()
            .map(|p| (p.removed_dest, p.kept_dest))
            .filter(|p| seen.insert(*p))
            .collect()
    }

    /// Trimmed states with their number of enabled actions before trimming.
    pub fn branching_factors(&self, original: &Pa) -> Vec<(StateId, usize)> {
        let states: BTreeSet<StateId> = self.pairs.iter().map(|p| p.source).collect();
        states
            .into_iter()
            .map(|s| (s, original.transitions(s).len()))
            .collect()
    }

    /// For each trimmed state, where each removed action should be redirected
    /// so that the result is still enabled after trimming.
    pub fn redirections(&self) -> HashMap<StateId, HashMap<ActionId, ActionId>> {
        let mut direct: HashMap<StateId, HashMap<ActionId, ActionId>> = HashMap::new();
        for p in &self.pairs {
            direct
                .entry(p.source)
                .or_default()
                .insert(p.removed_action, p.kept_action);
        }
        let mut out = HashMap::new();
        for (s, map) in &direct {
            let mut resolved = HashMap::new();
            for &a in map.keys() {
                let mut b = a;
                while let Some(&next) = map.get(&b) {
                    b = next;
                }
                resolved.insert(a, b);
            }
            out.insert(*s, resolved);
        }
        out
    }
}

fn dirac_choices(m: &Pa, s: StateId) -> Vec<(ActionId, StateId)> {
    m.transitions(s)
        .iter()
        .filter(|t| m.action(t.action).origin == ActionOrigin::ReachabilityChoice)
        .filter_map(|t| t.dist.dirac_target().map(|d| (t.action, d)))
        .collect()
}

// `i` may be removed in favour of `j`: strictly safer, or tied with a larger id.
fn dominates(order: &BoundOrder, m: &Pa, di: StateId, dj: StateId) -> bool {
    match order.compare(m, di, dj) {
        Comparison::Safer => true,
        Comparison::Equivalent => di > dj,
        _ => false,
    }
}

fn pmc_removals(m: &Pa, s: StateId, order: &BoundOrder) -> Vec<TrimmedTransition> {
    let cands = dirac_choices(m, s);
    let mut alive = vec![true; cands.len()];
    let mut out = Vec::new();
    'scan: loop {
        for i in 0..cands.len() {
            if !alive[i] {
                continue;
            }
            for j in 0..cands.len() {
                if i == j || !alive[j] || cands[i].1 == cands[j].1 {
                    continue;
                }
                if dominates(order, m, cands[i].1, cands[j].1) {
                    alive[i] = false;
                    out.push(TrimmedTransition {
                        source: s,
                        removed_action: cands[i].0,
                        removed_dest: cands[i].1,
                        kept_action: cands[j].0,
                        kept_dest: cands[j].1,
                    });
                    continue 'scan;
                }
            }
        }
        break;
    }
    out
}

fn lss_removals(m: &Pa, s: StateId, order: &BoundOrder) -> Vec<TrimmedTransition> {
    let ts = m.transitions(s);
    let cands = dirac_choices(m, s);
    if ts.len() < 2 || cands.len() != ts.len() {
        return Vec::new();
    }
    let worst = cands
        .iter()
        .map(|c| c.1)
        .filter(|&d| {
            cands
                .iter()
                .all(|&(_, other)| other == d || order.compare(m, other, d).safer_or_equal())
        })
        .min();
    let Some(worst) = worst else {
        return Vec::new();
    };
    let keep = cands.iter().find(|c| c.1 == worst).unwrap().0;
    cands
        .iter()
        .filter(|c| c.0 != keep)
        .map(|&(a, d)| TrimmedTransition {
            source: s,
            removed_action: a,
            removed_dest: d,
            kept_action: keep,
            kept_dest: worst,
        })
        .collect()
}

fn apply(m: &Pa, report: &TrimReport) -> Pa {
    let removed: BTreeSet<(StateId, ActionId)> = report
        .pairs
        .iter()
        .map(|p| (p.source, p.removed_action))
        .collect();
    m.without_transitions(&removed)
}

/// Pairwise trimming at one state: drops each Dirac choice whose destination
/// is safer than another remaining choice's destination.
pub fn trim_pmc_state(m: &Pa, s: StateId, order: &PartialOrder) -> Result<(Pa, TrimReport), MosError> {
    let bound = order.bind_pa(m)?;
    let mut report = TrimReport::default();
    report.push_all(pmc_removals(m, s, &bound));
    Ok((apply(m, &report), report))
}

/// [`trim_pmc_state`] at every state in ascending order.
///
/// The minimum is preserved only if the model has no infinite paths: with a
/// cycle, a kept choice can lead back into the state being trimmed.
pub fn trim_pmc(m: &Pa, order: &PartialOrder) -> Result<(Pa, TrimReport), MosError> {
    let bound = order.bind_pa(m)?;
    let mut report = TrimReport::default();
    for s in m.states() {
        report.push_all(pmc_removals(m, s, &bound));
    }
    Ok((apply(m, &report), report))
}

/// Keeps only the choice to the worst destination when every other
/// destination is safer-or-equal to it.
pub fn trim_lss_state(m: &Pa, s: StateId, order: &PartialOrder) -> Result<(Pa, TrimReport), MosError> {
    let bound = order.bind_pa(m)?;
    let mut report = TrimReport::default();
    report.push_all(lss_removals(m, s, &bound));
    Ok((apply(m, &report), report))
}

/// [`trim_lss_state`] at every state in ascending order.
pub fn trim_lss(m: &Pa, order: &PartialOrder) -> Result<(Pa, TrimReport), MosError> {
    let bound = order.bind_pa(m)?;
    let mut report = TrimReport::default();
    for s in m.states() {
        report.push_all(lss_removals(m, s, &bound));
    }
    Ok((apply(m, &report), report))
}
