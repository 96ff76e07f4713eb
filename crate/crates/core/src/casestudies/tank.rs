//! Water tanks sharing one inflow pipe, with a threshold controller acting
//! on noisy level readings.

use serde::{Deserialize, Serialize};

use crate::abstraction::{
    build_interval_abstraction, AbstractionError, AbstractionOptions, AffineMap, CellBox,
    ControllerPlant, DimKind, Dimension, IntervalGrid, LinearConstraint, Piece, OBSERVE_PREFIX,
};
use crate::mos::{Direction, PartialOrder};
use crate::pa::{compose, ActionOrigin, Distribution, Pa, PaBuilder};
use crate::pmc::SafetyProperty;

use super::{CaseError, CaseModel};

pub const UNSAFE: &str = "unsafe";
pub const FILLING: &str = "filling";

/// One tank's reading error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadingError {
    /// Added to the true level, then clamped to `[0, TS]`.
    Offset(i32),
    /// Reads as empty.
    Empty,
    /// Reads as full.
    Full,
}

impl ReadingError {
    pub fn name(self) -> String {
        match self {
            ReadingError::Offset(e) => format!("e{e:+}"),
            ReadingError::Empty => "EM".into(),
            ReadingError::Full => "FU".into(),
        }
    }
}

/// Categorical reading error, independent across tanks and steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub ew: i32,
    /// Weights of offsets `-ew..=ew`.
    pub offsets: Vec<f64>,
    pub empty: f64,
    pub full: f64,
}

impl ErrorModel {
    /// Triangular offsets carrying 0.9, spurious empty 0.04, spurious full 0.06.
    pub fn synthetic(ew: i32) -> Self {
        let raw: Vec<f64> = (-ew..=ew).map(|e| (ew + 1 - e.abs()) as f64).collect();
        let total: f64 = raw.iter().sum();
        ErrorModel {
            ew,
            offsets: raw.iter().map(|w| 0.9 * w / total).collect(),
            empty: 0.04,
            full: 0.06,
        }
    }

    pub fn exact() -> Self {
        ErrorModel { ew: 0, offsets: vec![1.0], empty: 0.0, full: 0.0 }
    }

    /// Outcomes with positive probability.
    pub fn support(&self) -> Vec<(ReadingError, f64)> {
        (-self.ew..=self.ew)
            .zip(&self.offsets)
            .map(|(e, &p)| (ReadingError::Offset(e), p))
            .chain([(ReadingError::Empty, self.empty), (ReadingError::Full, self.full)])
            .filter(|&(_, p)| p > 0.0)
            .collect()
    }

    fn validate(&self) -> Result<(), CaseError> {
        let total: f64 = self.offsets.iter().sum::<f64>() + self.empty + self.full;
        let ok = self.ew >= 0
            && self.offsets.len() == (2 * self.ew + 1) as usize
            && self.offsets.iter().chain([&self.empty, &self.full]).all(|&p| p >= 0.0)
            && (total - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CaseError::InvalidParams("error model must be a distribution over 2·EW+3 outcomes".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankParams {
    pub j: usize,
    pub ts: f64,
    pub out: f64,
    pub inflow: f64,
    pub lt: f64,
    pub ut: f64,
    /// Steps covered by the property.
    pub horizon: usize,
    pub error: ErrorModel,
}

impl TankParams {
    pub fn validate(&self) -> Result<(), CaseError> {
        if self.j == 0 || self.j > 4 {
            return Err(CaseError::InvalidParams("need 1 <= J <= 4".into()));
        }
        if !(0.0 < self.lt && self.lt < self.ut && self.ut < self.ts) {
            return Err(CaseError::InvalidParams("need 0 < LT < UT < TS".into()));
        }
        if !(self.out >= 0.0 && self.inflow >= 0.0) {
            return Err(CaseError::InvalidParams("flows must be non-negative".into()));
        }
        self.error.validate()
    }

    pub fn perceive(&self, w: f64, e: ReadingError) -> f64 {
        match e {
            ReadingError::Offset(x) => (w + x as f64).clamp(0.0, self.ts),
            ReadingError::Empty => 0.0,
            ReadingError::Full => self.ts,
        }
    }
}

/// Decision rule shared by the concrete controller and the abstraction.
/// `filling` and the result are 1-based tank ids, 0 for none; `le(a, b)` for
/// `a < b` tells whether tank `a` reads at most as much as tank `b`.
fn decide(filling: usize, below_lt: &[bool], below_ut: &[bool], le: impl Fn(usize, usize) -> bool) -> usize {
    if filling > 0 && below_ut[filling - 1] {
        return filling;
    }
    let n = below_lt.len();
    (0..n)
        .find(|&j| {
            below_lt[j]
                && (0..n)
                    .filter(|&c| c != j && below_lt[c])
                    .all(|c| if c < j { !le(c, j) } else { le(j, c) })
        })
        .map_or(0, |j| j + 1)
}

/// Tank to fill next (1-based), 0 for none.
pub fn tank_control(perceived: &[f64], filling: usize, p: &TankParams) -> usize {
    let below_lt: Vec<bool> = perceived.iter().map(|&w| w < p.lt).collect();
    let below_ut: Vec<bool> = perceived.iter().map(|&w| w < p.ut).collect();
    decide(filling, &below_lt, &below_ut, |a, b| perceived[a] <= perceived[b])
}

/// Levels after one step while filling `target` (1-based, 0 for none).
pub fn tank_step(levels: &[f64], target: usize, p: &TankParams) -> Vec<f64> {
    levels
        .iter()
        .enumerate()
        .map(|(i, w)| w - p.out + if target == i + 1 { p.inflow } else { 0.0 })
        .collect()
}

/// Joint reading errors over all tanks with their probabilities.
pub fn joint_errors(p: &TankParams) -> Vec<(Vec<ReadingError>, f64)> {
    let single = p.error.support();
    let mut out: Vec<(Vec<ReadingError>, f64)> = vec![(vec![], 1.0)];
    for _ in 0..p.j {
        out = out
            .into_iter()
            .flat_map(|(v, q)| {
                single.iter().map(move |&(e, r)| {
                    let mut v = v.clone();
                    v.push(e);
                    (v, q * r)
                })
            })
            .collect();
    }
    out
}

fn joint_name(errs: &[ReadingError]) -> String {
    errs.iter().map(|e| e.name()).collect::<Vec<_>>().join(",")
}

/// Abstractable loop over `(w_1..w_J, filling)` driven by joint reading errors.
#[derive(Clone, Debug)]
pub struct TankPlant {
    pub params: TankParams,
    inputs: Vec<Vec<ReadingError>>,
}

impl TankPlant {
    pub fn new(params: TankParams) -> Self {
        let inputs = joint_errors(&params).into_iter().map(|(e, _)| e).collect();
        TankPlant { params, inputs }
    }

    fn n(&self) -> usize {
        self.params.j + 1
    }

    // Perceived level of tank `i` as `coeffs · x + c` together with its guards.
    fn reading_cases(&self, i: usize, e: ReadingError) -> Vec<(Vec<LinearConstraint>, Vec<f64>, f64)> {
        let n = self.n();
        let zero = vec![0.0; n];
        let ts = self.params.ts;
        match e {
            ReadingError::Empty => vec![(vec![], zero, 0.0)],
            ReadingError::Full => vec![(vec![], zero, ts)],
            ReadingError::Offset(x) => {
                let x = x as f64;
                let mut unit = zero.clone();
                unit[i] = 1.0;
                let low = LinearConstraint::le(unit.clone(), -x);
                let high = LinearConstraint::ge(unit.clone(), ts - x);
                vec![
                    (vec![low.clone()], zero.clone(), 0.0),
                    (vec![high.clone()], zero, ts),
                    (vec![low.negated(), high.negated()], unit, x),
                ]
            }
        }
    }
}

impl ControllerPlant for TankPlant {
    fn dimensions(&self) -> Vec<String> {
        let mut d: Vec<String> = (1..=self.params.j).map(|i| format!("w{i}")).collect();
        d.push(FILLING.into());
        d
    }

    fn inputs(&self) -> Vec<String> {
        self.inputs.iter().map(|e| joint_name(e)).collect()
    }

    fn step(&self, x: &[f64], k: usize) -> Vec<f64> {
        let j = self.params.j;
        let perceived: Vec<f64> = (0..j).map(|i| self.params.perceive(x[i], self.inputs[k][i])).collect();
        let target = tank_control(&perceived, x[j].round() as usize, &self.params);
        let mut next = tank_step(&x[..j], target, &self.params);
        next.push(target as f64);
        next
    }

    fn pieces(&self, cell: &CellBox, k: usize) -> Result<Vec<Piece>, AbstractionError> {
        let p = &self.params;
        let (j, n) = (p.j, self.n());
        if !cell.lattice[j] {
            return Err(AbstractionError::NonAffine("filling axis must be a lattice".into()));
        }
        let filling = cell.lo[j].round() as usize;
        let errs = &self.inputs[k];
        // Every combination of clamping cases, one per tank.
        let mut cases: Vec<(Vec<LinearConstraint>, Vec<(Vec<f64>, f64)>)> = vec![(vec![], vec![])];
        for (i, &e) in errs.iter().enumerate() {
            let mut next = Vec::new();
            for (g, reads) in &cases {
                for (g2, coeffs, c) in self.reading_cases(i, e) {
                    let mut g = g.clone();
                    g.extend(g2);
                    let mut reads = reads.clone();
                    reads.push((coeffs, c));
                    next.push((g, reads));
                }
            }
            cases = next;
        }
        let pairs: Vec<(usize, usize)> = (0..j).flat_map(|a| (a + 1..j).map(move |b| (a, b))).collect();
        let n_atoms = 2 * j + pairs.len();
        let mut out = Vec::new();
        for (guards, reads) in cases {
            for mask in 0u32..(1 << n_atoms) {
                let bit = |i: usize| mask & (1 << i) != 0;
                let below_lt: Vec<bool> = (0..j).map(bit).collect();
                let below_ut: Vec<bool> = (0..j).map(|i| bit(j + i)).collect();
                let le_bits: Vec<bool> = (0..pairs.len()).map(|i| bit(2 * j + i)).collect();
                let mut g = guards.clone();
                for i in 0..j {
                    let (a, c) = &reads[i];
                    for (thr, below) in [(p.lt, below_lt[i]), (p.ut, below_ut[i])] {
                        let atom = LinearConstraint::lt(a.clone(), thr - c);
                        g.push(if below { atom } else { atom.negated() });
                    }
                }
                for (idx, &(a, b)) in pairs.iter().enumerate() {
                    let (ra, ca) = &reads[a];
                    let (rb, cb) = &reads[b];
                    let diff: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| x - y).collect();
                    let atom = LinearConstraint::le(diff, cb - ca);
                    g.push(if le_bits[idx] { atom } else { atom.negated() });
                }
                let target = decide(filling, &below_lt, &below_ut, |a, b| {
                    le_bits[pairs.iter().position(|&q| q == (a, b)).unwrap()]
                });
                let mut map = AffineMap::identity(n);
                for i in 0..j {
                    let add = if target == i + 1 { p.inflow } else { 0.0 };
                    map.offset[i] = add - p.out;
                }
                map.set_row(j, vec![0.0; n], target as f64);
                out.push(Piece { guards: g, map });
            }
        }
        Ok(out)
    }

    fn labels(&self, cell: &CellBox) -> Vec<String> {
        if self.absorbing(cell) {
            vec![UNSAFE.to_string()]
        } else {
            vec![]
        }
    }

    /// Some level in the closure of the cell reaches 0 or the capacity.
    fn absorbing(&self, cell: &CellBox) -> bool {
        (0..self.params.j).any(|i| cell.lo[i] <= 0.0 || cell.hi[i] >= self.params.ts)
    }

    fn ranges(&self) -> Vec<(f64, f64)> {
        let p = &self.params;
        let mut r = vec![(-p.out, p.ts + p.inflow); p.j];
        r.push((0.0, p.j as f64));
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankConfig {
    pub params: TankParams,
    pub w_axis: DimKind,
    pub initial: Vec<f64>,
    #[serde(default)]
    pub initial_filling: usize,
}

impl TankConfig {
    /// One 30-unit tank read with the synthetic error model.
    pub fn desk() -> Self {
        TankConfig {
            params: TankParams {
                j: 1,
                ts: 30.0,
                out: 3.0,
                inflow: 6.5,
                lt: 10.0,
                ut: 20.0,
                horizon: 2,
                error: ErrorModel::synthetic(6),
            },
            w_axis: DimKind::Interval { lo: 0.0, hi: 30.0, width: 5.0 },
            initial: vec![10.0],
            initial_filling: 0,
        }
    }

    pub fn grid(&self) -> Result<IntervalGrid, CaseError> {
        let mut dims: Vec<Dimension> = (1..=self.params.j)
            .map(|i| Dimension { name: format!("w{i}"), kind: self.w_axis.clone() })
            .collect();
        dims.push(Dimension::lattice(FILLING, 0.0, 1.0));
        Ok(IntervalGrid::new(dims)?)
    }

    pub fn set_width(&mut self, w: f64) {
        if let DimKind::Interval { width, .. } = &mut self.w_axis {
            *width = w;
        }
    }

    /// Representative level of the cell holding the half-full level.
    pub fn centre(&self) -> Result<f64, CaseError> {
        let d = Dimension { name: "w".into(), kind: self.w_axis.clone() };
        let half = self.params.ts / 2.0;
        Ok(d.index_of(half).map(|i| d.representative(i)).unwrap_or(half))
    }
}

/// Reading automaton: on every tick draws a joint reading error and passes it on.
pub fn build_tank_perception(p: &TankParams, choices: &[(String, Vec<String>)]) -> Result<Pa, CaseError> {
    let mut b = PaBuilder::with_features(["per_phase", "input"]);
    let sense = b.add_state("sense", Vec::<String>::new(), vec![0.0, -1.0]);
    let joint = joint_errors(p);
    let outs: Vec<_> = joint
        .iter()
        .enumerate()
        .map(|(k, (e, _))| b.add_state(format!("read[{}]", joint_name(e)), Vec::<String>::new(), vec![1.0, k as f64]))
        .collect();
    let tick = b.action(&format!("{OBSERVE_PREFIX}tick"), ActionOrigin::PerceptionInput);
    b.add_transition(sense, tick, Distribution::new(outs.iter().zip(&joint).map(|(&s, (_, q))| (s, *q)))?)?;
    for (k, (e, _)) in joint.iter().enumerate() {
        let name = joint_name(e);
        let names = choices.iter().find(|(n, _)| *n == name).map(|c| c.1.clone()).unwrap_or_default();
        for a in names {
            let a = b.action(&a, ActionOrigin::ReachabilityChoice);
            b.add_transition(outs[k], a, Distribution::dirac(sense))?;
        }
    }
    b.set_initial(sense);
    Ok(b.build()?)
}

pub fn build_tank_model(cfg: &TankConfig) -> Result<CaseModel, CaseError> {
    cfg.params.validate()?;
    if cfg.initial.len() != cfg.params.j {
        return Err(CaseError::InvalidParams(format!("expected {} initial levels", cfg.params.j)));
    }
    let plant = TankPlant::new(cfg.params.clone());
    let grid = cfg.grid()?;
    let mut x0 = cfg.initial.clone();
    x0.push(cfg.initial_filling as f64);
    let abs = build_interval_abstraction(
        &plant,
        &grid,
        &x0,
        AbstractionOptions { horizon: Some(cfg.params.horizon) },
    )?;
    let choices: Vec<(String, Vec<String>)> = abs
        .inputs
        .iter()
        .enumerate()
        .map(|(k, name)| (name.clone(), abs.choice_actions(k)))
        .collect();
    let per = build_tank_perception(&cfg.params, &choices)?;
    let pa = compose(&per, &abs.pa)?;
    Ok(CaseModel {
        pa,
        property: SafetyProperty::always_not(UNSAFE),
        orders: tank_orders(cfg)?,
        abstraction_states: abs.pa.num_states(),
    })
}

/// Levels closer to the middle are safer, tank by tank.
pub fn tank_orders(cfg: &TankConfig) -> Result<Vec<PartialOrder>, CaseError> {
    let c = cfg.centre()?;
    Ok(vec![PartialOrder::features(
        "w",
        (1..=cfg.params.j).map(|i| (format!("w{i}"), Direction::Toward(c))),
    )])
}
