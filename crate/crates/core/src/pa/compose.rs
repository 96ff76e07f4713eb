use std::collections::{HashMap, VecDeque};

use super::{ActionId, Distribution, Pa, PaBuilder, PaError, StateId};

/// Parallel composition over the reachable part of the product.
///
/// Actions are identified across the two automata by name. A shared action
/// fires only when both sides enable it, with the product distribution; a
/// private action moves its own side while the other side stays put.
pub fn compose(m1: &Pa, m2: &Pa) -> Result<Pa, PaError> {
    for name in &m2.features().names {
        if m1.features().index_of(name).is_some() {
            return Err(PaError::FeatureCollision(name.clone()));
        }
    }
    let feature_names: Vec<String> = m1
        .features()
        .names
        .iter()
        .chain(m2.features().names.iter())
        .cloned()
        .collect();
    let mut b = PaBuilder::with_features(feature_names);

    // Composite alphabet: m1's actions in order, then m2's new ones.
    let map1: Vec<ActionId> = m1
        .actions()
        .iter()
        .map(|l| b.action(&l.name, l.origin))
        .collect();
    let map2: Vec<ActionId> = m2
        .actions()
        .iter()
        .map(|l| b.action(&l.name, l.origin))
        .collect();
    let in2: HashMap<&str, ActionId> = m2
        .actions()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.name.as_str(), ActionId(i)))
        .collect();
    let shared1: Vec<Option<ActionId>> = m1
        .actions()
        .iter()
        .map(|l| in2.get(l.name.as_str()).copied())
        .collect();
    let shared2: Vec<bool> = m2
        .actions()
        .iter()
        .map(|l| m1.action_id(&l.name).is_some())
        .collect();

    for (s, ts) in m1
        .states()
        .map(|s| (s, m1.transitions(s)))
        .chain(m2.states().map(|s| (s, m2.transitions(s))))
    {
        for w in ts.windows(2) {
            if w[0].action == w[1].action {
                return Err(PaError::AmbiguousSync(format!(
                    "action #{} at {s}",
                    w[0].action.0
                )));
            }
        }
    }

    let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut queue: VecDeque<(StateId, StateId)> = VecDeque::new();
    let mut intern = |b: &mut PaBuilder,
                      queue: &mut VecDeque<(StateId, StateId)>,
                      pair: (StateId, StateId)|
     -> StateId {
        if let Some(&id) = index.get(&pair) {
            return id;
        }
        let (s1, s2) = pair;
        let labels: Vec<String> = m1
            .labels(s1)
            .iter()
            .chain(m2.labels(s2).iter())
            .cloned()
            .collect();
        let mut feats = m1.features().rows[s1.0].clone();
        feats.extend_from_slice(&m2.features().rows[s2.0]);
        let id = b.add_state(
            format!("{}|{}", m1.state_name(s1), m2.state_name(s2)),
            labels,
            feats,
        );
        index.insert(pair, id);
        queue.push_back(pair);
        id
    };

    let init = intern(&mut b, &mut queue, (m1.initial(), m2.initial()));
    b.set_initial(init);
    // Pairs are dequeued in the order they were interned, so the k-th pair
    // popped is state k.
    let mut next = 0usize;
    while let Some((s1, s2)) = queue.pop_front() {
        let here = StateId(next);
        next += 1;
        let mut out: Vec<(ActionId, Vec<((StateId, StateId), f64)>)> = Vec::new();
        for t1 in m1.transitions(s1) {
            match shared1[t1.action.0] {
                None => out.push((
                    map1[t1.action.0],
                    t1.dist.support().iter().map(|&(n, p)| ((n, s2), p)).collect(),
                )),
                Some(a2) => {
                    if let Some(d2) = m2.transition(s2, a2) {
                        let mut succ = Vec::with_capacity(t1.dist.len() * d2.len());
                        for &(n1, p1) in t1.dist.support() {
                            for &(n2, p2) in d2.support() {
                                succ.push(((n1, n2), p1 * p2));
                            }
                        }
                        out.push((map1[t1.action.0], succ));
                    }
                }
            }
        }
        for t2 in m2.transitions(s2) {
            if !shared2[t2.action.0] {
                out.push((
                    map2[t2.action.0],
                    t2.dist.support().iter().map(|&(n, p)| ((s1, n), p)).collect(),
                ));
            }
        }
        for (a, succ) in out {
            let mut entries = Vec::with_capacity(succ.len());
            for (pair, p) in succ {
                entries.push((intern(&mut b, &mut queue, pair), p));
            }
            let dist = Distribution::new(entries)?;
            b.add_transition(here, a, dist)?;
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa::ActionOrigin;

    #[test]
    fn shared_action_takes_product_distribution() {
        let mut b1 = PaBuilder::new();
        let x0 = b1.add_state("x0", Vec::<String>::new(), vec![]);
        let x1 = b1.add_state("x1", Vec::<String>::new(), vec![]);
        let a = b1.action("sync", ActionOrigin::Internal);
        b1.add_transition(x0, a, Distribution::new([(x0, 0.3), (x1, 0.7)]).unwrap())
            .unwrap();
        let mut b2 = PaBuilder::new();
        let y0 = b2.add_state("y0", Vec::<String>::new(), vec![]);
        let y1 = b2.add_state("y1", Vec::<String>::new(), vec![]);
        let a = b2.action("sync", ActionOrigin::Internal);
        b2.add_transition(y0, a, Distribution::new([(y0, 0.5), (y1, 0.5)]).unwrap())
            .unwrap();
        let m = compose(&b1.build().unwrap(), &b2.build().unwrap()).unwrap();
        let d = &m.transitions(m.initial())[0].dist;
        let mut probs: Vec<f64> = d.support().iter().map(|e| e.1).collect();
        probs.sort_by(f64::total_cmp);
        assert_eq!(probs.len(), 4);
        for (got, want) in probs.iter().zip([0.15, 0.15, 0.35, 0.35]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_partner_is_neutral() {
        let mut b1 = PaBuilder::new();
        let x0 = b1.add_state("x0", ["p"], vec![]);
        let x1 = b1.add_state("x1", Vec::<String>::new(), vec![]);
        let a = b1.action("go", ActionOrigin::Internal);
        b1.add_transition(x0, a, Distribution::new([(x0, 0.4), (x1, 0.6)]).unwrap())
            .unwrap();
        let m1 = b1.build().unwrap();
        let mut b2 = PaBuilder::new();
        b2.add_state("idle", ["q"], vec![]);
        let m = compose(&m1, &b2.build().unwrap()).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_transitions(), 1);
        assert!(m.has_label(StateId(0), "p") && m.has_label(StateId(0), "q"));
        assert!(m.has_label(StateId(1), "q") && !m.has_label(StateId(1), "p"));
    }

    #[test]
    fn shared_action_blocked_when_one_side_disabled() {
        let mut b1 = PaBuilder::new();
        let x0 = b1.add_state("x0", Vec::<String>::new(), vec![]);
        let a = b1.action("sync", ActionOrigin::Internal);
        b1.add_transition(x0, a, Distribution::dirac(x0)).unwrap();
        let mut b2 = PaBuilder::new();
        b2.add_state("y0", Vec::<String>::new(), vec![]);
        b2.action("sync", ActionOrigin::Internal);
        let m = compose(&b1.build().unwrap(), &b2.build().unwrap()).unwrap();
        assert!(m.is_terminal(m.initial()));
    }
}
