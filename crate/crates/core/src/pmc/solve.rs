//! Per-scheduler reachability solves.

use crate::pa::{Pa, Scheduler, StateId};

use super::PmcError;

// Dense elimination is used for cyclic chains up to this many unknowns.
const DENSE_LIMIT: usize = 2500;
const ITERATIVE_TOL: f64 = 1e-14;
const ITERATIVE_CAP: usize = 1_000_000;

/// Successor row of `s` under `sigma`, or `None` for terminal states.
fn row<'a>(m: &'a Pa, sigma: &Scheduler, s: StateId) -> Result<Option<&'a [(StateId, f64)]>, PmcError> {
    if m.is_terminal(s) {
        return Ok(None);
    }
    let a = sigma
        .choice(s)
        .ok_or(crate::pa::PaError::MissingChoice(s))?;
    let d = m
        .transition(s, a)
        .ok_or_else(|| crate::pa::PaError::ActionNotEnabled {
            state: s,
            action: m.action_name(a).to_string(),
        })?;
    Ok(Some(d.support()))
}

/// States reachable from `roots` under `sigma`, never leaving bad states.
pub(crate) fn reachable(
    m: &Pa,
    sigma: &Scheduler,
    bad: &[bool],
    roots: &[StateId],
) -> Result<Vec<bool>, PmcError> {
    let mut seen = vec![false; m.num_states()];
    let mut stack = Vec::new();
    for &r in roots {
        if !seen[r.0] {
            seen[r.0] = true;
            stack.push(r);
        }
    }
    while let Some(s) = stack.pop() {
        if bad[s.0] {
            continue;
        }
        if let Some(r) = row(m, sigma, s)? {
            for &(n, _) in r {
                if !seen[n.0] {
                    seen[n.0] = true;
                    stack.push(n);
                }
            }
        }
    }
    Ok(seen)
}

/// Probability of reaching a bad state from every state reachable from
/// `roots`; entries outside that set are NaN.
pub(crate) fn reach_unbounded(
    m: &Pa,
    sigma: &Scheduler,
    bad: &[bool],
    roots: &[StateId],
) -> Result<Vec<f64>, PmcError> {
    let n = m.num_states();
    let live = reachable(m, sigma, bad, roots)?;
    let mut rows: Vec<Option<&[(StateId, f64)]>> = vec![None; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        if !live[s] || bad[s] {
            continue;
        }
        let r = row(m, sigma, StateId(s))?;
        if let Some(r) = r {
            for &(t, _) in r {
                preds[t.0].push(s);
            }
        }
        rows[s] = r;
    }
    // States that can reach bad.
    let mut hits = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&s| live[s] && bad[s]).collect();
    for &s in &stack {
        hits[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !hits[p] {
                hits[p] = true;
                stack.push(p);
            }
        }
    }
    let mut x = vec![f64::NAN; n];
    let mut maybe = Vec::new();
    for s in 0..n {
        if !live[s] {
            continue;
        }
        if bad[s] {
            x[s] = 1.0;
        } else if !hits[s] {
            x[s] = 0.0;
        } else {
            maybe.push(s);
        }
    }
    if maybe.is_empty() {
        return Ok(x);
    }
    if let Some(order) = topological(&maybe, &rows, &x) {
        for &s in order.iter().rev() {
            x[s] = rows[s]
                .expect("maybe states are non-terminal")
                .iter()
                .map(|&(t, p)| p * x[t.0])
                .sum();
        }
        return Ok(x);
    }
    if maybe.len() <= DENSE_LIMIT {
        dense(&maybe, &rows, &mut x)?;
    } else {
        iterative(&maybe, &rows, &mut x)?;
    }
    Ok(x)
}

// Kahn's algorithm restricted to the undetermined states; `None` on a cycle.
fn topological(maybe: &[usize], rows: &[Option<&[(StateId, f64)]>], x: &[f64]) -> Option<Vec<usize>> {
    let n = rows.len();
    let mut undetermined = vec![false; n];
    for &s in maybe {
        undetermined[s] = true;
    }
    let mut indeg = vec![0usize; n];
    for &s in maybe {
        for &(t, _) in rows[s].unwrap() {
            if undetermined[t.0] && x[t.0].is_nan() {
                indeg[t.0] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = maybe.iter().copied().filter(|&s| indeg[s] == 0).collect();
    let mut order = Vec::with_capacity(maybe.len());
    while let Some(s) = queue.pop() {
        order.push(s);
        for &(t, _) in rows[s].unwrap() {
            if undetermined[t.0] {
                indeg[t.0] -= 1;
                if indeg[t.0] == 0 {
                    queue.push(t.0);
                }
            }
        }
    }
    (order.len() == maybe.len()).then_some(order)
}

fn dense(maybe: &[usize], rows: &[Option<&[(StateId, f64)]>], x: &mut [f64]) -> Result<(), PmcError> {
    let k = maybe.len();
    let mut pos = vec![usize::MAX; x.len()];
    for (i, &s) in maybe.iter().enumerate() {
        pos[s] = i;
    }
    // Augmented matrix [I − P | b].
    let w = k + 1;
    let mut a = vec![0.0; k * w];
    for (i, &s) in maybe.iter().enumerate() {
        a[i * w + i] = 1.0;
        for &(t, p) in rows[s].unwrap() {
            if pos[t.0] != usize::MAX {
                a[i * w + pos[t.0]] -= p;
            } else {
                a[i * w + k] += p * x[t.0];
            }
        }
    }
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&i, &j| a[i * w + c].abs().total_cmp(&a[j * w + c].abs()))
            .unwrap();
        if a[piv * w + c].abs() < 1e-14 {
            return Err(PmcError::Singular);
        }
        if piv != c {
            for j in 0..w {
                a.swap(piv * w + j, c * w + j);
            }
        }
        let d = a[c * w + c];
        for j in c..w {
            a[c * w + j] /= d;
        }
        for i in 0..k {
            if i != c {
                let f = a[i * w + c];
                if f != 0.0 {
                    for j in c..w {
                        a[i * w + j] -= f * a[c * w + j];
                    }
                }
            }
        }
    }
    for (i, &s) in maybe.iter().enumerate() {
        x[s] = a[i * w + k].clamp(0.0, 1.0);
    }
    Ok(())
}

fn iterative(maybe: &[usize], rows: &[Option<&[(StateId, f64)]>], x: &mut [f64]) -> Result<(), PmcError> {
    for &s in maybe {
        x[s] = 0.0;
    }
    for it in 0..ITERATIVE_CAP {
        let mut residual: f64 = 0.0;
        for &s in maybe {
            let v: f64 = rows[s].unwrap().iter().map(|&(t, p)| p * x[t.0]).sum();
            residual = residual.max((v - x[s]).abs());
            x[s] = v;
        }
        if residual < ITERATIVE_TOL {
            return Ok(());
        }
        if it + 1 == ITERATIVE_CAP {
            return Err(PmcError::NonConvergence {
                iterations: ITERATIVE_CAP,
                residual,
            });
        }
    }
    Ok(())
}

/// Probability of reaching bad within `horizon` steps, by backward induction.
pub(crate) fn reach_bounded(
    m: &Pa,
    sigma: &Scheduler,
    bad: &[bool],
    roots: &[StateId],
    horizon: usize,
) -> Result<Vec<f64>, PmcError> {
    let n = m.num_states();
    let live = reachable(m, sigma, bad, roots)?;
    let mut rows: Vec<Option<&[(StateId, f64)]>> = vec![None; n];
    for s in 0..n {
        if live[s] && !bad[s] {
            rows[s] = row(m, sigma, StateId(s))?;
        }
    }
    let mut x: Vec<f64> = (0..n).map(|s| if bad[s] { 1.0 } else { 0.0 }).collect();
    let mut next = x.clone();
    for _ in 0..horizon {
        for s in 0..n {
            if let Some(r) = rows[s] {
                next[s] = r.iter().map(|&(t, p)| p * x[t.0]).sum();
            }
        }
        std::mem::swap(&mut x, &mut next);
    }
    for s in 0..n {
        if !live[s] {
            x[s] = f64::NAN;
        }
    }
    Ok(x)
}
