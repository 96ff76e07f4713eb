use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pa::{
    count_schedulers, enumerate_schedulers, enumerate_schedulers_on, Pa, PaError, Scheduler, SchedulerSpace, StateId,
};
use crate::pmc::{safety_values, SafetyProperty, DEFAULT_TIE_TOLERANCE};

use super::MosError;

/// Slack when comparing two exact probabilities.
pub const COMPARISON_SLACK: f64 = 1e-12;

mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosValidationRow {
    pub s1: StateId,
    pub s2: StateId,
    /// Share of all schedulers under which `s1` is at least as safe as `s2`.
    pub p: f64,
    #[serde(with = "decimal")]
    pub schedulers: BigUint,
    /// Schedulers actually solved for this row: those varying only where
    /// `s1` or `s2` can reach.
    pub enumerated: u64,
    /// Same share restricted to min schedulers, when the whole space fits the cap.
    pub p_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosValidationReport {
    pub rows: Vec<MosValidationRow>,
    #[serde(with = "decimal")]
    pub scheduler_count: BigUint,
    /// Enumerated minimum from the initial state, when the whole space fits the cap.
    pub min_probability: Option<f64>,
    pub min_schedulers: Option<u64>,
}

/// Measures, for each pair, the share of schedulers under which the first
/// state is at least as safe as the second.
///
/// When the whole scheduler space fits in `cap` it is enumerated once and the
/// share among min schedulers is reported too. Otherwise each pair is
/// enumerated over the choice states reachable from it, which yields the same
/// share, and `cap` bounds each of those spaces.
pub fn validate_mos(
    m: &Pa,
    psi: &SafetyProperty,
    pairs: &[(StateId, StateId)],
    cap: u64,
) -> Result<MosValidationReport, MosError> {
    let total = count_schedulers(m);
    match total.to_u64() {
        Some(n) if n <= cap => validate_full(m, psi, pairs, cap, total),
        _ => validate_projected(m, psi, pairs, cap, total),
    }
}

fn validate_full(
    m: &Pa,
    psi: &SafetyProperty,
    pairs: &[(StateId, StateId)],
    cap: u64,
    total: BigUint,
) -> Result<MosValidationReport, MosError> {
    let space = enumerate_schedulers(m, cap)?;
    let mut roots: Vec<StateId> = vec![m.initial()];
    roots.extend(pairs.iter().flat_map(|&(a, b)| [a, b]));
    roots.sort();
    roots.dedup();
    let init = m.initial();
    let outcomes: Vec<(f64, Vec<bool>)> = (0..space.len())
        .into_par_iter()
        .map(|i| {
            let sigma = space.get(m, i);
            let v = safety_values(m, &sigma, psi, &roots)?;
            let holds = pairs
                .iter()
                .map(|&(a, b)| v[a.0] >= v[b.0] - COMPARISON_SLACK)
                .collect();
            Ok((v[init.0], holds))
        })
        .collect::<Result<_, MosError>>()?;
    let min = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let is_min: Vec<bool> = outcomes
        .iter()
        .map(|o| o.0 - min <= DEFAULT_TIE_TOLERANCE)
        .collect();
    let n_min = is_min.iter().filter(|&&b| b).count() as u64;
    let n = space.len();
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(k, &(s1, s2))| {
            let all = outcomes.iter().filter(|o| o.1[k]).count() as u64;
            let among_min = outcomes
                .iter()
                .zip(&is_min)
                .filter(|(o, &mn)| mn && o.1[k])
                .count() as u64;
            MosValidationRow {
                s1,
                s2,
                p: all as f64 / n as f64,
                schedulers: total.clone(),
                enumerated: n,
                p_min: Some(among_min as f64 / n_min as f64),
            }
        })
        .collect();
    Ok(MosValidationReport {
        rows,
        scheduler_count: total,
        min_probability: Some(min),
        min_schedulers: Some(n_min),
    })
}

// Per pair, the choice states reachable from `s1` or `s2` split into those
// shared by both (O) and those only one side reaches (A, B). For a fixed
// assignment of O the two values depend on disjoint choices, so counting
// the pairs (a, b) with V1(a) >= V2(b) needs |A| + |B| solves instead of
// |A| * |B|. The resulting share equals the share over all schedulers.
fn validate_projected(
    m: &Pa,
    psi: &SafetyProperty,
    pairs: &[(StateId, StateId)],
    cap: u64,
    total: BigUint,
) -> Result<MosValidationReport, MosError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for &(s1, s2) in pairs {
        let r1 = m.reachable_from(&[s1]);
        let r2 = m.reachable_from(&[s2]);
        let pick = |f: &dyn Fn(usize) -> bool| m.states().filter(|s| f(s.0)).collect::<Vec<_>>();
        let shared = enumerate_schedulers_on(m, &pick(&|i| r1[i] && r2[i]), cap)?;
        let only1 = enumerate_schedulers_on(m, &pick(&|i| r1[i] && !r2[i]), cap)?;
        let only2 = enumerate_schedulers_on(m, &pick(&|i| r2[i] && !r1[i]), cap)?;
        let solves = u128::from(shared.len()) * u128::from(only1.len() + only2.len());
        if solves > u128::from(cap) {
            return Err(PaError::SchedulerCapExceeded {
                count: solves.to_string(),
                cap,
            }
            .into());
        }
        let base = Scheduler::first_choice(m);
        let side = |o: u64, space: &SchedulerSpace, s: StateId| -> Result<Vec<f64>, MosError> {
            (0..space.len())
                .into_par_iter()
                .map(|k| {
                    let mut sigma = base.clone();
                    shared.assign(m, o, &mut sigma);
                    space.assign(m, k, &mut sigma);
                    Ok(safety_values(m, &sigma, psi, &[s])?[s.0])
                })
                .collect()
        };
        let mut holds: u128 = 0;
        for o in 0..shared.len() {
            let v1 = side(o, &only1, s1)?;
            let mut v2 = side(o, &only2, s2)?;
            v2.sort_by(f64::total_cmp);
            for a in v1 {
                holds += v2.partition_point(|&b| a >= b - COMPARISON_SLACK) as u128;
            }
        }
        let size = u128::from(shared.len()) * u128::from(only1.len()) * u128::from(only2.len());
        rows.push(MosValidationRow {
            s1,
            s2,
            p: holds as f64 / size as f64,
            schedulers: total.clone(),
            enumerated: solves as u64,
            p_min: None,
        });
    }
    Ok(MosValidationReport {
        rows,
        scheduler_count: total,
        min_probability: None,
        min_schedulers: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa::{ActionOrigin, Distribution, PaBuilder};

    #[test]
    fn identical_and_dominated_pairs() {
        let mut b = PaBuilder::new();
        let s0 = b.add_state("s0", Vec::<String>::new(), vec![]);
        let safe = b.add_state("safe", Vec::<String>::new(), vec![]);
        let risky = b.add_state("risky", Vec::<String>::new(), vec![]);
        let ok = b.add_state("ok", Vec::<String>::new(), vec![]);
        let bad = b.add_state("bad", ["bad"], vec![]);
        let a1 = b.action("a1", ActionOrigin::ReachabilityChoice);
        let a2 = b.action("a2", ActionOrigin::ReachabilityChoice);
        let go = b.action("go", ActionOrigin::Internal);
        let alt = b.action("alt", ActionOrigin::Internal);
        b.add_transition(s0, a1, Distribution::dirac(safe)).unwrap();
        b.add_transition(s0, a2, Distribution::dirac(risky)).unwrap();
        b.add_transition(safe, go, Distribution::dirac(ok)).unwrap();
        b.add_transition(risky, go, Distribution::new([(ok, 0.5), (bad, 0.5)]).unwrap())
            .unwrap();
        b.add_transition(risky, alt, Distribution::new([(ok, 0.9), (bad, 0.1)]).unwrap())
            .unwrap();
        let m = b.build().unwrap();
        let r = validate_mos(
            &m,
            &SafetyProperty::always_not("bad"),
            &[(safe, safe), (safe, risky), (risky, safe)],
            100,
        )
        .unwrap();
        assert_eq!(r.scheduler_count, BigUint::from(4u32));
        assert_eq!(r.rows[0].p, 1.0);
        assert_eq!(r.rows[1].p, 1.0);
        assert_eq!(r.rows[2].p, 0.0);
        let projected = validate_mos(
            &m,
            &SafetyProperty::always_not("bad"),
            &[(safe, safe), (safe, risky), (risky, safe)],
            3,
        )
        .unwrap();
        assert!(projected.min_probability.is_none());
        let ps: Vec<f64> = projected.rows.iter().map(|r| r.p).collect();
        assert_eq!(ps, vec![1.0, 1.0, 0.0]);
        assert_eq!(projected.rows[0].enumerated, 2);
        assert_eq!(projected.rows[1].enumerated, 3);
    }
}
