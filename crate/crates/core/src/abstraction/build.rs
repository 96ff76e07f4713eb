use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::pa::{ActionOrigin, Distribution, Pa, PaBuilder, StateId};

use super::linear::{feasible, Row};
use super::{AbstractCell, AbstractionError, CellBox, ControllerPlant, IntervalGrid};

pub const STEP_FEATURE: &str = "step";
pub const INT_PHASE_FEATURE: &str = "int_phase";
pub const TIMEOUT_LABEL: &str = "timeout";
pub const OBSERVE_PREFIX: &str = "obs:";

const ZERO_COEFF: f64 = 1e-12;

fn box_rows(bx: &CellBox, vars: &[usize]) -> Vec<Row> {
    let n = vars.len();
    let mut rows = Vec::new();
    for (j, &v) in vars.iter().enumerate() {
        let mut a = vec![0.0; n];
        if bx.lo[v].is_finite() {
            a[j] = -1.0;
            rows.push(Row { a: a.clone(), b: -bx.lo[v], strict: false });
        }
        if bx.hi[v].is_finite() {
            a[j] = 1.0;
            rows.push(Row { a, b: bx.hi[v], strict: true });
        }
    }
    rows
}

// Splits `coeffs · x + c` into coefficients on interval axes and a constant.
fn restrict(coeffs: &[f64], c: f64, bx: &CellBox, vars: &[usize]) -> (Vec<f64>, f64) {
    let constant = c + coeffs
        .iter()
        .enumerate()
        .filter(|(i, a)| bx.lattice[*i] && **a != 0.0)
        .map(|(i, a)| a * bx.lo[i])
        .sum::<f64>();
    (vars.iter().map(|&v| coeffs[v]).collect(), constant)
}

fn range_over_box(a: &[f64], c: f64, bx: &CellBox, vars: &[usize]) -> (f64, f64) {
    let (mut lo, mut hi) = (c, c);
    for (&coef, &v) in a.iter().zip(vars) {
        if coef == 0.0 {
            continue;
        }
        let (x0, x1) = bx.range(v);
        if coef > 0.0 {
            lo += coef * x0;
            hi += coef * x1;
        } else {
            lo += coef * x1;
            hi += coef * x0;
        }
    }
    (lo, hi)
}

/// Cells overlapping the exact image of `cell` under input `k`, sorted.
pub fn reachable_cells(
    plant: &dyn ControllerPlant,
    grid: &IntervalGrid,
    cell: &AbstractCell,
    k: usize,
) -> Result<Vec<AbstractCell>, AbstractionError> {
    if k >= plant.inputs().len() {
        return Err(AbstractionError::UnknownInput(k));
    }
    let bx = grid.cell_box(cell);
    let vars: Vec<usize> = (0..bx.dims()).filter(|&i| !bx.lattice[i]).collect();
    let base = box_rows(&bx, &vars);
    let mut out = BTreeSet::new();
    for piece in plant.pieces(&bx, k)? {
        let mut rows = base.clone();
        for g in &piece.guards {
            let (a, c) = restrict(&g.coeffs, 0.0, &bx, &vars);
            rows.push(Row { a, b: g.rhs - c, strict: g.strict });
        }
        if !feasible(rows.clone(), vars.len()) {
            continue;
        }
        // Candidate indices per target axis, with the affine row restricted to `vars`.
        let mut axes: Vec<(Vec<i64>, Vec<f64>, f64)> = Vec::with_capacity(bx.dims());
        for (j, dim) in grid.dims.iter().enumerate() {
            let (a, c) = restrict(&piece.map.matrix[j], piece.map.offset[j], &bx, &vars);
            if dim.is_lattice() {
                if a.iter().any(|x| x.abs() > ZERO_COEFF) {
                    return Err(AbstractionError::NonLatticeImage(dim.name.clone()));
                }
                let i = dim.index_of(c).ok_or_else(|| AbstractionError::OffLattice {
                    dim: dim.name.clone(),
                    value: c,
                })?;
                axes.push((vec![i], a, c));
            } else {
                let (lo, hi) = range_over_box(&a, c, &bx, &vars);
                axes.push((dim.indices_meeting(lo, hi).collect(), a, c));
            }
        }
        let mut idx = vec![0usize; axes.len()];
        'combos: loop {
            let target: Vec<i64> = idx.iter().zip(&axes).map(|(&i, ax)| ax.0[i]).collect();
            let mut sys = rows.clone();
            for (j, dim) in grid.dims.iter().enumerate() {
                if dim.is_lattice() {
                    continue;
                }
                let (tlo, thi) = dim.bounds(target[j]);
                let (a, c) = (&axes[j].1, axes[j].2);
                if tlo.is_finite() {
                    sys.push(Row { a: a.iter().map(|x| -x).collect(), b: c - tlo, strict: false });
                }
                if thi.is_finite() {
                    sys.push(Row { a: a.clone(), b: thi - c, strict: true });
                }
            }
            if feasible(sys, vars.len()) {
                out.insert(AbstractCell { index: target });
            }
            for p in (0..idx.len()).rev() {
                idx[p] += 1;
                if idx[p] < axes[p].0.len() {
                    continue 'combos;
                }
                idx[p] = 0;
            }
            break;
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AbstractionOptions {
    /// Number of steps after which states are labelled as timed out and stop.
    pub horizon: Option<usize>,
}

/// The abstract automaton and the bookkeeping needed to compose it with a
/// perception model.
#[derive(Clone, Debug)]
pub struct Abstraction {
    pub pa: Pa,
    pub grid: IntervalGrid,
    pub inputs: Vec<String>,
    /// Observation keys emitted by the automaton, with one cell per key.
    pub observations: BTreeMap<String, CellBox>,
    /// Largest number of destinations per input.
    pub branching: Vec<usize>,
    /// Cell and step of every state.
    pub cells: Vec<(AbstractCell, usize)>,
}

impl Abstraction {
    /// Name of the `j`-th reachability choice under input `k`.
    pub fn choice_action(&self, k: usize, j: usize) -> String {
        choice_name(&self.inputs[k], j)
    }

    /// All reachability-choice names for input `k`.
    pub fn choice_actions(&self, k: usize) -> Vec<String> {
        (0..self.branching[k]).map(|j| self.choice_action(k, j)).collect()
    }
}

pub(crate) fn choice_name(input: &str, j: usize) -> String {
    format!("{input}/r{j}")
}

fn state_name(kind: char, cell: &AbstractCell, t: usize) -> String {
    let idx: Vec<String> = cell.index.iter().map(|i| i.to_string()).collect();
    format!("{kind}({})@{t}", idx.join(","))
}

/// Builds the abstract automaton reachable from the cell of `initial`.
///
/// Each step is two states: a waiting state that emits the observation key,
/// then a ready state that offers, per input `k`, one Dirac choice per
/// destination cell.
pub fn build_interval_abstraction(
    plant: &dyn ControllerPlant,
    grid: &IntervalGrid,
    initial: &[f64],
    opts: AbstractionOptions,
) -> Result<Abstraction, AbstractionError> {
    if initial.len() != grid.dims.len() || !grid.within_bounds(initial) {
        return Err(AbstractionError::InitialOutOfBounds(initial.to_vec()));
    }
    let init = grid
        .cell_of(initial)
        .ok_or_else(|| AbstractionError::InitialOutOfBounds(initial.to_vec()))?;
    let inputs = plant.inputs();
    let mut features = grid.names();
    features.push(STEP_FEATURE.to_string());
    features.push(INT_PHASE_FEATURE.to_string());
    let mut b = PaBuilder::with_features(features);
    let mut ids: HashMap<(AbstractCell, usize), StateId> = HashMap::new();
    let mut cells: Vec<(AbstractCell, usize)> = Vec::new();
    let mut observations = BTreeMap::new();
    let mut branching = vec![0usize; inputs.len()];
    let mut cache: HashMap<AbstractCell, Vec<Vec<AbstractCell>>> = HashMap::new();

    let add_state = |b: &mut PaBuilder,
                         cells: &mut Vec<(AbstractCell, usize)>,
                         kind: char,
                         cell: &AbstractCell,
                         t: usize|
     -> StateId {
        let bx = grid.cell_box(cell);
        let mut labels = plant.labels(&bx);
        if kind == 'w' && Some(t) == opts.horizon && !plant.absorbing(&bx) {
            labels.push(TIMEOUT_LABEL.to_string());
        }
        let mut row = grid.representative(cell);
        row.push(t as f64);
        row.push(if kind == 'w' { 0.0 } else { 1.0 });
        cells.push((cell.clone(), t));
        b.add_state(state_name(kind, cell, t), labels, row)
    };

    let first = add_state(&mut b, &mut cells, 'w', &init, 0);
    b.set_initial(first);
    ids.insert((init.clone(), 0), first);
    let mut frontier = vec![(init, 0usize)];
    while !frontier.is_empty() {
        let live: Vec<&(AbstractCell, usize)> = frontier
            .iter()
            .filter(|(c, t)| Some(*t) != opts.horizon && !plant.absorbing(&grid.cell_box(c)))
            .collect();
        let missing: BTreeSet<&AbstractCell> = live
            .iter()
            .map(|(c, _)| c)
            .filter(|c| !cache.contains_key(*c))
            .collect();
        let computed = missing
            .into_par_iter()
            .map(|c| {
                let succ = (0..inputs.len())
                    .map(|k| reachable_cells(plant, grid, c, k))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((c.clone(), succ))
            })
            .collect::<Result<Vec<_>, AbstractionError>>()?;
        cache.extend(computed);

        let mut next = Vec::new();
        for (cell, t) in live {
            let wait = ids[&(cell.clone(), *t)];
            let bx = grid.cell_box(cell);
            let key = plant.observation(&bx);
            observations.entry(key.clone()).or_insert(bx);
            let ready = add_state(&mut b, &mut cells, 'r', cell, *t);
            // Without a horizon there is no step counter.
            let nt = if opts.horizon.is_some() { t + 1 } else { 0 };
            let obs = b.action(&format!("{OBSERVE_PREFIX}{key}"), ActionOrigin::PerceptionInput);
            b.add_transition(wait, obs, Distribution::dirac(ready))?;
            for (k, succ) in cache[cell].iter().enumerate() {
                branching[k] = branching[k].max(succ.len());
                for (j, dest) in succ.iter().enumerate() {
                    let key = (dest.clone(), nt);
                    let id = match ids.get(&key) {
                        Some(&id) => id,
                        None => {
                            let id = add_state(&mut b, &mut cells, 'w', dest, nt);
                            ids.insert(key.clone(), id);
                            next.push(key);
                            id
                        }
                    };
                    let a = b.action(&choice_name(&inputs[k], j), ActionOrigin::ReachabilityChoice);
                    b.add_transition(ready, a, Distribution::dirac(id))?;
                }
            }
        }
        frontier = next;
    }
    Ok(Abstraction {
        pa: b.build()?,
        grid: grid.clone(),
        inputs,
        observations,
        branching,
        cells,
    })
}

/// Iterates the concrete step function over `inputs`; the result includes `initial`.
pub fn simulate_concrete(
    plant: &dyn ControllerPlant,
    initial: &[f64],
    inputs: &[usize],
) -> Result<Vec<Vec<f64>>, AbstractionError> {
    let names = plant.dimensions();
    let ranges = plant.ranges();
    let check = |x: &[f64], step: usize| -> Result<(), AbstractionError> {
        for (i, &v) in x.iter().enumerate() {
            let (lo, hi) = ranges[i];
            if !(v >= lo && v <= hi) {
                return Err(AbstractionError::OutOfRange { step, dim: names[i].clone(), value: v });
            }
        }
        Ok(())
    };
    check(initial, 0)?;
    let n_inputs = plant.inputs().len();
    let mut trace = vec![initial.to_vec()];
    for (step, &k) in inputs.iter().enumerate() {
        if k >= n_inputs {
            return Err(AbstractionError::UnknownInput(k));
        }
        let x = plant.step(trace.last().unwrap(), k);
        check(&x, step + 1)?;
        trace.push(x);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::super::{AffineMap, Dimension, LinearConstraint, Piece};
    use super::*;

    // x' = x - 1 when x >= 5, x' = x + 3 otherwise; absorbing below 0.
    struct Saw;

    impl ControllerPlant for Saw {
        fn dimensions(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn inputs(&self) -> Vec<String> {
            vec!["go".into()]
        }
        fn step(&self, x: &[f64], _k: usize) -> Vec<f64> {
            vec![if x[0] >= 5.0 { x[0] - 1.0 } else { x[0] + 3.0 }]
        }
        fn pieces(&self, _cell: &CellBox, _k: usize) -> Result<Vec<Piece>, AbstractionError> {
            let hi = LinearConstraint::ge(vec![1.0], 5.0);
            Ok(vec![
                Piece { guards: vec![hi.clone()], map: AffineMap { matrix: vec![vec![1.0]], offset: vec![-1.0] } },
                Piece { guards: vec![hi.negated()], map: AffineMap { matrix: vec![vec![1.0]], offset: vec![3.0] } },
            ])
        }
        fn labels(&self, cell: &CellBox) -> Vec<String> {
            if cell.lo[0] < 0.0 {
                vec!["bad".into()]
            } else {
                vec![]
            }
        }
        fn absorbing(&self, cell: &CellBox) -> bool {
            cell.lo[0] < 0.0
        }
    }

    fn grid(w: f64) -> IntervalGrid {
        IntervalGrid::new(vec![Dimension::interval("x", 0.0, 10.0, w)]).unwrap()
    }

    #[test]
    fn straddling_cell_is_split() {
        let g = grid(2.0);
        // [4, 6): the part below 5 maps to [7, 8), the rest to [4, 5).
        let c = g.cell_of(&[4.5]).unwrap();
        let succ = reachable_cells(&Saw, &g, &c, 0).unwrap();
        let boxes: Vec<_> = succ.iter().map(|s| g.cell_box(s).lo[0]).collect();
        assert_eq!(boxes, vec![4.0, 6.0]);
    }

    #[test]
    fn images_do_not_touch_excluded_boundary() {
        let g = grid(1.0);
        // [6, 7) maps to [5, 6) only.
        let c = g.cell_of(&[6.5]).unwrap();
        let succ = reachable_cells(&Saw, &g, &c, 0).unwrap();
        assert_eq!(succ.len(), 1);
        assert_eq!(g.cell_box(&succ[0]).lo[0], 5.0);
    }

    #[test]
    fn horizon_zero_is_single_state() {
        let g = grid(1.0);
        let a = build_interval_abstraction(&Saw, &g, &[3.0], AbstractionOptions { horizon: Some(0) }).unwrap();
        assert_eq!(a.pa.num_states(), 1);
        assert!(a.pa.has_label(StateId(0), TIMEOUT_LABEL));
    }

    #[test]
    fn initial_outside_rejected() {
        let g = grid(1.0);
        assert!(build_interval_abstraction(&Saw, &g, &[11.0], AbstractionOptions::default()).is_err());
    }

    #[test]
    fn concrete_trace_follows_step() {
        let t = simulate_concrete(&Saw, &[6.0], &[0, 0, 0]).unwrap();
        assert_eq!(t, vec![vec![6.0], vec![5.0], vec![4.0], vec![7.0]]);
    }
}
