//! Exact probabilistic model checking of safety properties.
//!
//! Safety here is the invariant "no state labelled `bad` is ever visited",
//! optionally restricted to the first `T` steps. Extremal probabilities over
//! all memoryless schedulers come from value iteration on the probability of
//! reaching a bad state; single-scheduler probabilities come from solving the
//! induced chain directly.

mod solve;

use std::borrow::Cow;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pa::{enumerate_schedulers, PaError, Pa, Scheduler, StateId};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SafetyProperty {
    pub bad_label: String,
    pub horizon: Option<usize>,
}

impl SafetyProperty {
    pub fn always_not(bad_label: impl Into<String>) -> Self {
        SafetyProperty {
            bad_label: bad_label.into(),
            horizon: None,
        }
    }

    pub fn bounded(bad_label: impl Into<String>, horizon: usize) -> Self {
        SafetyProperty {
            bad_label: bad_label.into(),
            horizon: Some(horizon),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub probability: f64,
    pub iterations: usize,
    pub residual: f64,
    #[serde(with = "secs")]
    pub wall_time: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmcError {
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular hitting-probability system")]
    Singular,
    #[error("infinite path through {0} under the scheduler")]
    InfinitePath(StateId),
    #[error("decomposition is defined for unbounded properties only")]
    BoundedDecomposition,
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Pa(#[from] PaError),
}

/// The model with every bad state made absorbing, warning when this changes it.
pub fn absorbing_bad<'a>(m: &'a Pa, psi: &SafetyProperty) -> Cow<'a, Pa> {
    let bad = m.label_mask(&psi.bad_label);
    let offending = m.states().filter(|&s| bad[s.0] && !m.is_terminal(s)).count();
    if offending == 0 {
        return Cow::Borrowed(m);
    }
    log::warn!(
        "made {offending} state(s) labelled '{}' absorbing before checking",
        psi.bad_label
    );
    Cow::Owned(m.with_absorbing(&bad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Extremum {
    Max,
    Min,
}

/// Pr^min of the safety property: one minus the maximal probability of reaching bad.
pub fn min_safety_prob(m: &Pa, psi: &SafetyProperty, tol: f64) -> Result<CheckResult, PmcError> {
    check(m, psi, Extremum::Max, &CheckOptions { tolerance: tol, ..Default::default() })
}

/// Pr^max of the safety property: one minus the minimal probability of reaching bad.
pub fn max_safety_prob(m: &Pa, psi: &SafetyProperty, tol: f64) -> Result<CheckResult, PmcError> {
    check(m, psi, Extremum::Min, &CheckOptions { tolerance: tol, ..Default::default() })
}

pub fn min_safety_prob_with(m: &Pa, psi: &SafetyProperty, opts: &CheckOptions) -> Result<CheckResult, PmcError> {
    check(m, psi, Extremum::Max, opts)
}

pub fn max_safety_prob_with(m: &Pa, psi: &SafetyProperty, opts: &CheckOptions) -> Result<CheckResult, PmcError> {
    check(m, psi, Extremum::Min, opts)
}

fn check(m: &Pa, psi: &SafetyProperty, ext: Extremum, opts: &CheckOptions) -> Result<CheckResult, PmcError> {
    if !(opts.tolerance > 0.0) {
        return Err(PmcError::BadTolerance);
    }
    let start = Instant::now();
    let m = absorbing_bad(m, psi);
    let bad = m.label_mask(&psi.bad_label);
    let (x, iterations, residual) = match psi.horizon {
        Some(t) => (bounded_iteration(&m, &bad, ext, t), t, 0.0),
        None => value_iteration(&m, &bad, ext, opts)?,
    };
    Ok(CheckResult {
        probability: 1.0 - x[m.initial().0],
        iterations,
        residual,
        wall_time: start.elapsed(),
    })
}

fn bellman(m: &Pa, x: &[f64], s: usize, ext: Extremum) -> f64 {
    let ts = m.transitions(StateId(s));
    let vals = ts
        .iter()
        .map(|t| t.dist.support().iter().map(|&(n, p)| p * x[n.0]).sum::<f64>());
    match ext {
        Extremum::Max => vals.fold(f64::NEG_INFINITY, f64::max),
        Extremum::Min => vals.fold(f64::INFINITY, f64::min),
    }
}

fn value_iteration(
    m: &Pa,
    bad: &[bool],
    ext: Extremum,
    opts: &CheckOptions,
) -> Result<(Vec<f64>, usize, f64), PmcError> {
    let n = m.num_states();
    let mut x: Vec<f64> = bad.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let active: Vec<usize> = (0..n)
        .filter(|&s| !bad[s] && !m.is_terminal(StateId(s)))
        .collect();
    let mut next = x.clone();
    let mut iterations = 0;
    loop {
        let mut residual: f64 = 0.0;
        for &s in &active {
            let v = bellman(m, &x, s, ext);
            residual = residual.max((v - x[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
        if residual < opts.tolerance {
            return Ok((x, iterations, residual));
        }
        if iterations >= opts.max_iterations {
            return Err(PmcError::NonConvergence {
                iterations,
                residual,
            });
        }
    }
}

fn bounded_iteration(m: &Pa, bad: &[bool], ext: Extremum, horizon: usize) -> Vec<f64> {
    let n = m.num_states();
    let mut x: Vec<f64> = bad.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut next = x.clone();
    for _ in 0..horizon {
        for s in 0..n {
            if !bad[s] && !m.is_terminal(StateId(s)) {
                next[s] = bellman(m, &x, s, ext);
            }
        }
        std::mem::swap(&mut x, &mut next);
    }
    x
}

/// Safety probability from every state in `roots` (and everything they reach)
/// under `sigma`; unreached entries are NaN.
pub fn safety_values(
    m: &Pa,
    sigma: &Scheduler,
    psi: &SafetyProperty,
    roots: &[StateId],
) -> Result<Vec<f64>, PmcError> {
    let bad = m.label_mask(&psi.bad_label);
    let reach = match psi.horizon {
        None => solve::reach_unbounded(m, sigma, &bad, roots)?,
        Some(t) => solve::reach_bounded(m, sigma, &bad, roots, t)?,
    };
    Ok(reach.into_iter().map(|r| 1.0 - r).collect())
}

/// Exact satisfaction probability of `psi` under `sigma`.
pub fn prob_under_scheduler(m: &Pa, sigma: &Scheduler, psi: &SafetyProperty) -> Result<f64, PmcError> {
    prob_under_scheduler_from(m, sigma, psi, m.initial())
}

/// Satisfaction probability of `psi` under `sigma` in `m` re-rooted at `s`.
pub fn prob_under_scheduler_from(
    m: &Pa,
    sigma: &Scheduler,
    psi: &SafetyProperty,
    s: StateId,
) -> Result<f64, PmcError> {
    Ok(safety_values(m, sigma, psi, &[s])?[s.0])
}

/// All schedulers whose probability lies within `tol` of the enumerated minimum.
pub fn min_schedulers(
    m: &Pa,
    psi: &SafetyProperty,
    tol: f64,
    cap: u64,
) -> Result<Vec<Scheduler>, PmcError> {
    let space = enumerate_schedulers(m, cap)?;
    let probs: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map(|i| prob_under_scheduler(m, &space.get(m, i), psi))
        .collect::<Result<_, _>>()?;
    let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p - min <= tol)
        .map(|(i, _)| space.get(m, i as u64))
        .collect())
}

/// The terms of the trace decomposition of Pr(ψ) at a state `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: f64,
    pub avoiding: f64,
    pub reach: f64,
    pub rerooted: f64,
    pub residual: f64,
}

/// Checks Pr(ψ) = Pr(ψ ∧ never s) + Pr(eventually s) · Pr_s(ψ) under `sigma`.
pub fn decomposition_check(
    m: &Pa,
    sigma: &Scheduler,
    psi: &SafetyProperty,
    s: StateId,
) -> Result<Decomposition, PmcError> {
    if psi.horizon.is_some() {
        return Err(PmcError::BoundedDecomposition);
    }
    let m = absorbing_bad(m, psi);
    let bad = m.label_mask(&psi.bad_label);
    let order = acyclic_order(&m, sigma, &bad)?;
    // Backward passes over the reachable DAG, successors before predecessors.
    let n = m.num_states();
    let mut avoid = vec![0.0; n];
    let mut hit = vec![0.0; n];
    for &u in order.iter().rev() {
        let su = StateId(u);
        if u == s.0 {
            avoid[u] = 0.0;
            hit[u] = 1.0;
            continue;
        }
        if bad[u] {
            continue;
        }
        match sigma.choice(su).and_then(|a| m.transition(su, a)) {
            None => avoid[u] = 1.0,
            Some(d) => {
                avoid[u] = d.support().iter().map(|&(t, p)| p * avoid[t.0]).sum();
                hit[u] = d.support().iter().map(|&(t, p)| p * hit[t.0]).sum();
            }
        }
    }
    let i = m.initial().0;
    let total = prob_under_scheduler(&m, sigma, psi)?;
    let rerooted = prob_under_scheduler_from(&m, sigma, psi, s)?;
    let (avoiding, reach) = (avoid[i], hit[i]);
    Ok(Decomposition {
        total,
        avoiding,
        reach,
        rerooted,
        residual: (total - (avoiding + reach * rerooted)).abs(),
    })
}

// Topological order of the sigma-reachable states; errors on a cycle.
fn acyclic_order(m: &Pa, sigma: &Scheduler, bad: &[bool]) -> Result<Vec<usize>, PmcError> {
    let n = m.num_states();
    let live = solve::reachable(m, sigma, bad, &[m.initial()])?;
    let succ = |u: usize| -> Vec<usize> {
        if bad[u] {
            return Vec::new();
        }
        sigma
            .choice(StateId(u))
            .and_then(|a| m.transition(StateId(u), a))
            .map(|d| d.support().iter().map(|e| e.0 .0).collect())
            .unwrap_or_default()
    };
    let mut indeg = vec![0usize; n];
    for u in (0..n).filter(|&u| live[u]) {
        if !m.is_terminal(StateId(u)) && !bad[u] && sigma.choice(StateId(u)).is_none() {
            return Err(PaError::MissingChoice(StateId(u)).into());
        }
        for v in succ(u) {
            indeg[v] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&u| live[u] && indeg[u] == 0).collect();
    let mut order = Vec::new();
    while let Some(u) = stack.pop() {
        order.push(u);
        for v in succ(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    if order.len() < live.iter().filter(|&&l| l).count() {
        let stuck = (0..n).find(|&u| live[u] && indeg[u] > 0).unwrap();
        return Err(PmcError::InfinitePath(StateId(stuck)));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa::{ActionOrigin, Distribution, PaBuilder};

    fn one_shot(p_bad: f64) -> Pa {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a = b.action("go", ActionOrigin::Internal);
        b.add_transition(s0, a, Distribution::new([(bad, p_bad), (ok, 1.0 - p_bad)]).unwrap())
            .unwrap();
        b.build().unwrap()
    }

    fn psi() -> SafetyProperty {
        SafetyProperty::always_not("bad")
    }

    #[test]
    fn direct_bad_transition() {
        let r = min_safety_prob(&one_shot(0.3), &psi(), 1e-10).unwrap();
        assert!((r.probability - 0.7).abs() < 1e-12);
    }

    #[test]
    fn never_bad_is_one() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let a = b.action("loop", ActionOrigin::Internal);
        b.add_transition(s0, a, Distribution::dirac(s0)).unwrap();
        let m = b.build().unwrap();
        assert_eq!(min_safety_prob(&m, &psi(), 1e-10).unwrap().probability, 1.0);
        let sigma = Scheduler::first_choice(&m);
        assert_eq!(prob_under_scheduler(&m, &sigma, &psi()).unwrap(), 1.0);
    }

    #[test]
    fn max_picks_safer_action() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a1 = b.action("a1", ActionOrigin::Internal);
        let a2 = b.action("a2", ActionOrigin::Internal);
        b.add_transition(s0, a1, Distribution::new([(bad, 0.2), (ok, 0.8)]).unwrap())
            .unwrap();
        b.add_transition(s0, a2, Distribution::new([(bad, 0.5), (ok, 0.5)]).unwrap())
            .unwrap();
        let m = b.build().unwrap();
        assert!((max_safety_prob(&m, &psi(), 1e-10).unwrap().probability - 0.8).abs() < 1e-12);
        assert!((min_safety_prob(&m, &psi(), 1e-10).unwrap().probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_survival_steps() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let s1 = b.add_state("s1", Vec::<String>::new(), vec![]);
        let end = b.add_state("end", Vec::<String>::new(), vec![]);
        let fail = b.add_state("fail", ["bad"], vec![]);
        let a = b.action("go", ActionOrigin::Internal);
        b.add_transition(s0, a, Distribution::new([(s1, 0.9), (fail, 0.1)]).unwrap())
            .unwrap();
        b.add_transition(s1, a, Distribution::new([(end, 0.9), (fail, 0.1)]).unwrap())
            .unwrap();
        let m = b.build().unwrap();
        let p = prob_under_scheduler(&m, &Scheduler::first_choice(&m), &psi()).unwrap();
        assert!((p - 0.81).abs() < 1e-12);
    }

    #[test]
    fn cyclic_chain_uses_linear_solve() {
        // s0 -> s0 w.p. 0.5, bad 0.25, ok 0.25: reach bad = 0.5.
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a = b.action("go", ActionOrigin::Internal);
        b.add_transition(
            s0,
            a,
            Distribution::new([(s0, 0.5), (bad, 0.25), (ok, 0.25)]).unwrap(),
        )
        .unwrap();
        let m = b.build().unwrap();
        let p = prob_under_scheduler(&m, &Scheduler::first_choice(&m), &psi()).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let r = min_safety_prob(&m, &psi(), 1e-12).unwrap();
        assert!((r.probability - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_horizon() {
        let m = one_shot(0.3);
        let r = min_safety_prob(&m, &SafetyProperty::bounded("bad", 0), 1e-10).unwrap();
        assert_eq!(r.probability, 1.0);
        let m0 = m.rerooted(StateId(2));
        let r = min_safety_prob(&m0, &SafetyProperty::bounded("bad", 0), 1e-10).unwrap();
        assert_eq!(r.probability, 0.0);
    }

    #[test]
    fn decomposition_at_initial_and_unreachable() {
        let m = one_shot(0.3);
        let sigma = Scheduler::first_choice(&m);
        let d = decomposition_check(&m, &sigma, &psi(), m.initial()).unwrap();
        assert_eq!(d.reach, 1.0);
        assert_eq!(d.avoiding, 0.0);
        assert!(d.residual < 1e-15);
        // `ok` reachable, bad reachable; add an isolated state check via re-rooting.
        let m2 = m.rerooted(StateId(1));
        let d = decomposition_check(&m2, &Scheduler::first_choice(&m2), &psi(), StateId(0)).unwrap();
        assert_eq!(d.reach, 0.0);
        assert!(d.residual < 1e-15);
    }

    #[test]
    fn symmetric_branches_are_both_min() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let l = b.add_state("l", Vec::<String>::new(), vec![]);
        let r = b.add_state("r", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a1 = b.action("a1", ActionOrigin::ReachabilityChoice);
        let a2 = b.action("a2", ActionOrigin::ReachabilityChoice);
        let go = b.action("go", ActionOrigin::Internal);
        b.add_transition(s0, a1, Distribution::dirac(l)).unwrap();
        b.add_transition(s0, a2, Distribution::dirac(r)).unwrap();
        for x in [l, r] {
            b.add_transition(x, go, Distribution::new([(ok, 0.6), (bad, 0.4)]).unwrap())
                .unwrap();
        }
        let m = b.build().unwrap();
        assert_eq!(min_schedulers(&m, &psi(), 1e-9, 100).unwrap().len(), 2);
    }
}
