//! Lightweight scheduler sampling.
//!
//! A scheduler is identified by a seed. Its choice at a state is a uniform
//! draw addressed by `(master seed, seed, state)`, so it is materialised only
//! for the states a trace actually visits. Trace randomness comes from a
//! separate stream per seed, which lets two models share it.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mos::TrimReport;
use crate::pa::{ActionId, Distribution, Pa, Scheduler, StateId};
use crate::pmc::{prob_under_scheduler, PmcError, SafetyProperty};
use crate::rng;

/// Step cap used when a property has no horizon of its own.
pub const DEFAULT_STEP_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LssError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("correspondence does not match the models: {0}")]
    Correspondence(String),
    #[error(transparent)]
    Pmc(#[from] PmcError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LssConfig {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub master_seed: u64,
    /// Longest trace simulated for unbounded properties.
    pub horizon: usize,
    /// Replace trace sampling with the exact per-scheduler probability.
    #[serde(default)]
    pub exact: bool,
}

impl Default for LssConfig {
    fn default() -> Self {
        LssConfig {
            n: 10,
            epsilon: 0.05,
            delta: 0.2,
            master_seed: 0,
            horizon: DEFAULT_STEP_CAP,
            exact: false,
        }
    }
}

impl LssConfig {
    pub fn validate(&self) -> Result<(), LssError> {
        if self.n == 0 {
            return Err(LssError::InvalidConfig("n must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(LssError::InvalidConfig(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LssError::InvalidConfig(format!("delta {} not in (0,1)", self.delta)));
        }
        if self.horizon == 0 {
            return Err(LssError::InvalidConfig("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (1..=self.n as u64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LssResult {
    pub estimates: Vec<f64>,
    pub minimum: f64,
    pub traces_per_scheduler: usize,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub exact: bool,
}

impl LssResult {
    fn new(estimates: Vec<f64>, cfg: &LssConfig) -> Self {
        LssResult {
            minimum: estimates.iter().copied().fold(f64::INFINITY, f64::min),
            estimates,
            traces_per_scheduler: if cfg.exact { 0 } else { trace_count(cfg.epsilon, cfg.delta) },
            seeds: cfg.seeds(),
            master_seed: cfg.master_seed,
            exact: cfg.exact,
        }
    }
}

/// Traces needed so that `P(|p̂ - p| > epsilon) <= delta`.
pub fn trace_count(epsilon: f64, delta: f64) -> usize {
    ((2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as usize
}

/// Scheduler addressed by a seed; choices are drawn on demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedScheduler {
    pub master_seed: u64,
    pub seed: u64,
}

impl SeedScheduler {
    pub fn choice(&self, m: &Pa, s: StateId) -> Option<ActionId> {
        let ts = m.transitions(s);
        if ts.is_empty() {
            return None;
        }
        let i = rng::uniform_choice(self.master_seed, self.seed, s.0 as u64, ts.len());
        Some(ts[i].action)
    }

    pub fn materialize(&self, m: &Pa) -> Scheduler {
        Scheduler::new(m.states().map(|s| self.choice(m, s)).collect())
    }
}

/// Uniformly random memoryless scheduler determined by `(master_seed, seed)`.
pub fn sample_scheduler(m: &Pa, master_seed: u64, seed: u64) -> Scheduler {
    SeedScheduler { master_seed, seed }.materialize(m)
}

fn pick(dist: &Distribution, u: f64) -> StateId {
    let support = dist.support();
    let mut acc = 0.0;
    for &(t, p) in support {
        acc += p;
        if u < acc {
            return t;
        }
    }
    support[support.len() - 1].0
}

// One trace; true when it satisfies the property.
fn run_trace<R, F>(m: &Pa, choose: &F, psi: &SafetyProperty, cap: usize, rng: &mut R) -> bool
where
    R: Rng + ?Sized,
    F: Fn(StateId) -> Option<ActionId>,
{
    let limit = psi.horizon.unwrap_or(cap);
    let mut s = m.initial();
    for _ in 0..limit {
        if m.has_label(s, &psi.bad_label) {
            return false;
        }
        let Some(a) = choose(s) else {
            return true;
        };
        let dist = m.transition(s, a).expect("scheduler picked a disabled action");
        s = pick(dist, rng.gen::<f64>());
    }
    !m.has_label(s, &psi.bad_label)
}

fn estimate_with<R, F>(
    m: &Pa,
    choose: &F,
    psi: &SafetyProperty,
    traces: usize,
    cap: usize,
    rng: &mut R,
) -> f64
where
    R: Rng + ?Sized,
    F: Fn(StateId) -> Option<ActionId>,
{
    let ok = (0..traces).filter(|_| run_trace(m, choose, psi, cap, rng)).count();
    ok as f64 / traces as f64
}

/// Monte Carlo estimate of the satisfaction probability of `psi` under `sigma`.
pub fn estimate_prob<R: Rng + ?Sized>(
    m: &Pa,
    sigma: &Scheduler,
    psi: &SafetyProperty,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> f64 {
    estimate_prob_capped(m, sigma, psi, epsilon, delta, DEFAULT_STEP_CAP, rng)
}

/// [`estimate_prob`] with an explicit step cap for unbounded properties.
pub fn estimate_prob_capped<R: Rng + ?Sized>(
    m: &Pa,
    sigma: &Scheduler,
    psi: &SafetyProperty,
    epsilon: f64,
    delta: f64,
    cap: usize,
    rng: &mut R,
) -> f64 {
    estimate_with(m, &|s| sigma.choice(s), psi, trace_count(epsilon, delta), cap, rng)
}

// Trace `j` of every scheduler reads stream `j`, so all schedulers (and both
// models in a coupled run) see common random numbers.
fn estimate_seed<F>(m: &Pa, choose: F, psi: &SafetyProperty, cfg: &LssConfig) -> Result<f64, LssError>
where
    F: Fn(StateId) -> Option<ActionId>,
{
    if cfg.exact {
        let sigma = Scheduler::new(m.states().map(&choose).collect());
        return Ok(prob_under_scheduler(m, &sigma, psi)?);
    }
    let traces = trace_count(cfg.epsilon, cfg.delta);
    let ok = (0..traces as u64)
        .filter(|&j| {
            let mut r = rng::stream(cfg.master_seed, rng::DOMAIN_TRACE, j);
            run_trace(m, &choose, psi, cfg.horizon, &mut r)
        })
        .count();
    Ok(ok as f64 / traces as f64)
}

/// Samples `cfg.n` schedulers, estimates each and keeps the smallest value.
pub fn lss_min(m: &Pa, psi: &SafetyProperty, cfg: &LssConfig) -> Result<LssResult, LssError> {
    cfg.validate()?;
    let estimates = cfg
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let sched = SeedScheduler { master_seed: cfg.master_seed, seed };
            estimate_seed(m, |s| sched.choice(m, s), psi, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LssResult::new(estimates, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledLss {
    pub original: LssResult,
    pub trimmed: LssResult,
}

fn check_correspondence(
    m: &Pa,
    t: &Pa,
    redirect: &HashMap<StateId, HashMap<ActionId, ActionId>>,
) -> Result<(), LssError> {
    if m.num_states() != t.num_states() || m.actions().len() != t.actions().len() {
        return Err(LssError::Correspondence("state or action sets differ".into()));
    }
    for s in m.states() {
        let map = redirect.get(&s);
        for tr in m.transitions(s) {
            let target = map.and_then(|mm| mm.get(&tr.action)).copied().unwrap_or(tr.action);
            if t.transition(s, target).is_none() {
                return Err(LssError::Correspondence(format!(
                    "action {} at state {} has no counterpart",
                    m.action_name(tr.action),
                    s.0
                )));
            }
        }
        if t.transitions(s).iter().any(|tr| m.transition(s, tr.action).is_none()) {
            return Err(LssError::Correspondence(format!("state {} gained an action", s.0)));
        }
    }
    Ok(())
}

/// Runs LSS on `m` and on its trimmed version with the same seeds; each
/// scheduler drawn on `m` is projected onto `trimmed` and both share trace
/// randomness.
pub fn coupled_lss(
    m: &Pa,
    trimmed: &Pa,
    report: &TrimReport,
    psi: &SafetyProperty,
    cfg: &LssConfig,
) -> Result<CoupledLss, LssError> {
    cfg.validate()?;
    let redirect = report.redirections();
    check_correspondence(m, trimmed, &redirect)?;
    let pairs = cfg
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let sched = SeedScheduler { master_seed: cfg.master_seed, seed };
            let a = estimate_seed(m, |s| sched.choice(m, s), psi, cfg)?;
            let projected = |s: StateId| {
                sched.choice(m, s).map(|a| {
                    redirect
                        .get(&s)
                        .and_then(|mm| mm.get(&a))
                        .copied()
                        .unwrap_or(a)
                })
            };
            let b = estimate_seed(trimmed, projected, psi, cfg)?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>, LssError>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(CoupledLss {
        original: LssResult::new(a, cfg),
        trimmed: LssResult::new(b, cfg),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsdVerdict {
    /// `a` first-order dominates `b`.
    pub dominates: bool,
    /// Largest excess of the CDF of `a` over that of `b`.
    pub max_gap: f64,
}

/// Slack allowed when comparing empirical CDFs.
pub const FSD_SLACK: f64 = 1e-12;

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Whether the empirical CDF of `a` lies at or below that of `b` everywhere.
pub fn fsd_check(a: &[f64], b: &[f64]) -> FsdVerdict {
    assert!(!a.is_empty() && !b.is_empty(), "samples must be non-empty");
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (sa, sb) = (sort(a), sort(b));
    let gap = sa
        .iter()
        .chain(&sb)
        .map(|&x| ecdf(&sa, x) - ecdf(&sb, x))
        .fold(0.0, f64::max);
    FsdVerdict {
        dominates: gap <= FSD_SLACK,
        max_gap: gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa::{ActionOrigin, PaBuilder};
    use crate::pmc::min_safety_prob;

    fn coin(p_bad: f64) -> Pa {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a = b.action("go", ActionOrigin::Internal);
        b.add_transition(s0, a, Distribution::new([(ok, 1.0 - p_bad), (bad, p_bad)]).unwrap())
            .unwrap();
        b.build().unwrap()
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(trace_count(0.05, 0.2), 461);
        assert_eq!(trace_count(0.01, 0.05), 18445);
    }

    #[test]
    fn safe_chain_estimates_one() {
        let m = coin(0.0);
        let mut r = rng::stream(1, rng::DOMAIN_TRACE, 0);
        let p = estimate_prob(&m, &Scheduler::first_choice(&m), &SafetyProperty::always_not("bad"), 0.05, 0.2, &mut r);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn deterministic_model_gives_equal_estimates_and_replays() {
        let m = coin(0.3);
        let cfg = LssConfig { n: 5, master_seed: 9, ..LssConfig::default() };
        let psi = SafetyProperty::always_not("bad");
        let r = lss_min(&m, &psi, &cfg).unwrap();
        assert_eq!(r.traces_per_scheduler, 461);
        assert_eq!(r, lss_min(&m, &psi, &cfg).unwrap());
        let exact = lss_min(&m, &psi, &LssConfig { exact: true, ..cfg }).unwrap();
        assert!(exact.estimates.iter().all(|&p| (p - 0.7).abs() < 1e-12));
    }

    #[test]
    fn more_seeds_never_raise_minimum() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a1 = b.action("a1", ActionOrigin::ReachabilityChoice);
        let a2 = b.action("a2", ActionOrigin::ReachabilityChoice);
        b.add_transition(s0, a1, Distribution::new([(ok, 0.5), (bad, 0.5)]).unwrap()).unwrap();
        b.add_transition(s0, a2, Distribution::new([(ok, 0.9), (bad, 0.1)]).unwrap()).unwrap();
        let m = b.build().unwrap();
        let psi = SafetyProperty::always_not("bad");
        let one = lss_min(&m, &psi, &LssConfig { n: 1, exact: true, ..LssConfig::default() }).unwrap();
        let ten = lss_min(&m, &psi, &LssConfig { n: 10, exact: true, ..LssConfig::default() }).unwrap();
        assert!(ten.minimum <= one.minimum);
        let pmc = min_safety_prob(&m, &psi, 1e-12).unwrap().probability;
        assert!(ten.minimum >= pmc - 1e-12);
    }

    #[test]
    fn fsd_examples() {
        let v = fsd_check(&[0.3, 0.4], &[0.3, 0.4]);
        assert!(v.dominates);
        assert_eq!(v.max_gap, 0.0);
        assert!(fsd_check(&[1.0], &[0.0]).dominates);
        assert!(!fsd_check(&[0.2, 0.9], &[0.5, 0.5]).dominates);
    }

    #[test]
    fn invalid_config_rejected() {
        let m = coin(0.1);
        let psi = SafetyProperty::always_not("bad");
        assert!(lss_min(&m, &psi, &LssConfig { n: 0, ..LssConfig::default() }).is_err());
        assert!(lss_min(&m, &psi, &LssConfig { epsilon: 1.5, ..LssConfig::default() }).is_err());
    }
}
