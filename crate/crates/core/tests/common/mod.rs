#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use mos_core::mos::PartialOrder;
use mos_core::pa::{enumerate_schedulers, ActionOrigin, Distribution, Pa, PaBuilder, Scheduler, StateId};
use mos_core::pmc::{min_schedulers, safety_values, SafetyProperty};
use rand::Rng;

pub const BAD: &str = "bad";

pub fn psi() -> SafetyProperty {
    SafetyProperty::always_not(BAD)
}

/// Random PA: state 0 initial, the last two states terminal (one bad).
/// Other states either offer 2..=`max_actions` Dirac choices or take one
/// probabilistic step. Cycles are allowed.
pub fn random_pa<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> Pa {
    let n = rng.gen_range(4..=max_states);
    let mut b = PaBuilder::with_features(["x"]);
    let ids: Vec<StateId> = (0..n)
        .map(|i| {
            let labels: Vec<&str> = if i == n - 1 { vec![BAD] } else { vec![] };
            b.add_state(format!("s{i}"), labels, vec![rng.gen_range(0..4) as f64])
        })
        .collect();
    b.set_initial(ids[0]);
    let step = b.action("step", ActionOrigin::Internal);
    let choices: Vec<_> = (0..max_actions)
        .map(|j| b.action(&format!("c{j}"), ActionOrigin::ReachabilityChoice))
        .collect();
    for &s in &ids[..n - 2] {
        if rng.gen_bool(0.6) {
            let k = rng.gen_range(2..=max_actions);
            let mut dests: Vec<StateId> = ids.clone();
            for j in 0..k {
                let d = dests.swap_remove(rng.gen_range(0..dests.len()));
                b.add_transition(s, choices[j], Distribution::dirac(d)).unwrap();
            }
        } else {
            let (t1, t2) = (ids[rng.gen_range(0..n)], ids[rng.gen_range(0..n)]);
            let p = (rng.gen_range(1..10) as f64) / 10.0;
            b.add_transition(s, step, Distribution::new([(t1, p), (t2, 1.0 - p)]).unwrap())
                .unwrap();
        }
    }
    b.build().unwrap()
}

/// Like [`random_pa`] but every transition moves to a higher-numbered state,
/// so the model has no infinite paths.
pub fn random_acyclic_pa<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> Pa {
    let n = rng.gen_range(4..=max_states);
    let mut b = PaBuilder::with_features(["x"]);
    let ids: Vec<StateId> = (0..n)
        .map(|i| {
            let labels: Vec<&str> = if i == n - 1 { vec![BAD] } else { vec![] };
            b.add_state(format!("s{i}"), labels, vec![rng.gen_range(0..4) as f64])
        })
        .collect();
    b.set_initial(ids[0]);
    let step = b.action("step", ActionOrigin::Internal);
    let choices: Vec<_> = (0..max_actions)
        .map(|j| b.action(&format!("c{j}"), ActionOrigin::ReachabilityChoice))
        .collect();
    for i in 0..n - 2 {
        let later = &ids[i + 1..];
        if later.len() >= 2 && rng.gen_bool(0.6) {
            let k = rng.gen_range(2..=max_actions.min(later.len()));
            let mut dests = later.to_vec();
            for &c in &choices[..k] {
                let d = dests.swap_remove(rng.gen_range(0..dests.len()));
                b.add_transition(ids[i], c, Distribution::dirac(d)).unwrap();
            }
        } else {
            let (t1, t2) = (later[rng.gen_range(0..later.len())], later[rng.gen_range(0..later.len())]);
            let p = (rng.gen_range(1..10) as f64) / 10.0;
            b.add_transition(ids[i], step, Distribution::new([(t1, p), (t2, 1.0 - p)]).unwrap())
                .unwrap();
        }
    }
    b.build().unwrap()
}

/// Random acyclic chain: one internal step per state to higher-numbered states.
pub fn random_acyclic_dtmc<R: Rng>(rng: &mut R, max_states: usize) -> Pa {
    let n = rng.gen_range(3..=max_states);
    let mut b = PaBuilder::new();
    let ids: Vec<StateId> = (0..n)
        .map(|i| {
            let bad = i > 0 && rng.gen_bool(0.25);
            b.add_state(format!("s{i}"), if bad { vec![BAD] } else { vec![] }, vec![])
        })
        .collect();
    b.set_initial(ids[0]);
    let step = b.action("step", ActionOrigin::Internal);
    for i in 0..n - 1 {
        if i > 0 && rng.gen_bool(0.15) {
            continue;
        }
        let k = rng.gen_range(1..=3.min(n - 1 - i));
        let mut w: Vec<(StateId, f64)> = (0..k)
            .map(|_| (ids[rng.gen_range(i + 1..n)], rng.gen_range(1..10) as f64))
            .collect();
        let total: f64 = w.iter().map(|e| e.1).sum();
        w.iter_mut().for_each(|e| e.1 /= total);
        b.add_transition(ids[i], step, Distribution::new(w).unwrap()).unwrap();
    }
    b.build().unwrap()
}

/// Dirac destinations offered together at some state, as unordered pairs.
pub fn sibling_destinations(m: &Pa) -> Vec<(StateId, StateId)> {
    let mut out = BTreeSet::new();
    for s in m.states() {
        let d: Vec<StateId> = m.transitions(s).iter().filter_map(|t| t.dist.dirac_target()).collect();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    out.insert((d[i], d[j]));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Extensional order over sibling destinations: `(a, b)` when `a` is at
/// least as safe as `b` under every scheduler in `schedulers`.
pub fn order_from(m: &Pa, schedulers: &[Scheduler]) -> PartialOrder {
    let all: Vec<StateId> = m.states().collect();
    let values: Vec<Vec<f64>> = schedulers
        .iter()
        .map(|s| safety_values(m, s, &psi(), &all).unwrap())
        .collect();
    let holds = |a: StateId, b: StateId| values.iter().all(|v| v[a.0] >= v[b.0] - 1e-12);
    let mut pairs = Vec::new();
    for (a, b) in sibling_destinations(m) {
        if holds(a, b) {
            pairs.push((a, b));
        } else if holds(b, a) {
            pairs.push((b, a));
        }
    }
    PartialOrder::pairs("ext", pairs)
}

/// Order satisfying the min-scheduler condition, verified by enumeration.
pub fn min_scheduler_order(m: &Pa) -> PartialOrder {
    order_from(m, &min_schedulers(m, &psi(), 1e-9, 10_000).unwrap())
}

/// Order satisfying the all-scheduler condition, verified by enumeration.
pub fn all_scheduler_order(m: &Pa) -> PartialOrder {
    let space = enumerate_schedulers(m, 10_000).unwrap();
    let all: Vec<Scheduler> = space.iter(m).collect();
    order_from(m, &all)
}

/// Reachable part of the synchronized product, explored directly.
pub fn product_bfs(m1: &Pa, m2: &Pa) -> (usize, usize) {
    let alpha1: BTreeSet<&str> = m1.actions().iter().map(|a| a.name.as_str()).collect();
    let alpha2: BTreeSet<&str> = m2.actions().iter().map(|a| a.name.as_str()).collect();
    let moves = |m: &Pa, s: StateId| -> HashMap<String, Vec<StateId>> {
        m.transitions(s)
            .iter()
            .map(|t| (m.action_name(t.action).to_string(), t.dist.support().iter().map(|e| e.0).collect()))
            .collect()
    };
    let start = (m1.initial(), m2.initial());
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut transitions = 0;
    while let Some((a, b)) = queue.pop_front() {
        let (ma, mb) = (moves(m1, a), moves(m2, b));
        let mut targets: Vec<Vec<(StateId, StateId)>> = Vec::new();
        for (name, da) in &ma {
            if alpha2.contains(name.as_str()) {
                if let Some(db) = mb.get(name) {
                    targets.push(da.iter().flat_map(|&x| db.iter().map(move |&y| (x, y))).collect());
                }
            } else {
                targets.push(da.iter().map(|&x| (x, b)).collect());
            }
        }
        for (name, db) in &mb {
            if !alpha1.contains(name.as_str()) {
                targets.push(db.iter().map(|&y| (a, y)).collect());
            }
        }
        transitions += targets.len();
        for t in targets.into_iter().flatten() {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    (seen.len(), transitions)
}
