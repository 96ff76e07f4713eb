//! Emergency braking: point-mass kinematics, a threshold braking controller
//! and a detection-history perception model.

use serde::{Deserialize, Serialize};

use crate::abstraction::{
    build_interval_abstraction, AbstractionError, AbstractionOptions, AffineMap, CellBox,
    ControllerPlant, DimKind, Dimension, IntervalGrid, LinearConstraint, Piece, OBSERVE_PREFIX,
};
use crate::mos::{Direction, PartialOrder};
use crate::pa::{compose, ActionOrigin, Distribution, Pa, PaBuilder};
use crate::pmc::SafetyProperty;

use super::{CaseError, CaseModel};

pub const COLLIDED: &str = "collided";
pub const STOPPED: &str = "stopped";
pub const DETECTED: &str = "D";
pub const NOT_DETECTED: &str = "N";

/// Probability of a low-level detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectionModel {
    /// Decreases by `slope` per bin of `bin_width` metres from `near`, never
    /// below `floor`, then shifted by up to `history_weight` depending on the
    /// share of detections among the remembered readings.
    Table {
        bin_width: f64,
        near: f64,
        slope: f64,
        floor: f64,
        history_weight: f64,
    },
    /// `1 - ceil(d) / scale`.
    CeilLinear { scale: f64 },
    Constant { p: f64 },
}

impl DetectionModel {
    pub fn synthetic() -> Self {
        DetectionModel::Table {
            bin_width: 10.0,
            near: 0.9,
            slope: 0.08,
            floor: 0.2,
            history_weight: 0.1,
        }
    }

    /// Detection probability at distance `d` after `recent` detections among `window` readings.
    pub fn prob(&self, d: f64, recent: usize, window: usize) -> f64 {
        let p = match *self {
            DetectionModel::Table { bin_width, near, slope, floor, history_weight } => {
                let bin = (d.max(0.0) / bin_width).floor();
                let base = (near - slope * bin).max(floor);
                let share = if window == 0 { 0.5 } else { recent as f64 / window as f64 };
                base + history_weight * (2.0 * share - 1.0)
            }
            DetectionModel::CeilLinear { scale } => 1.0 - d.ceil() / scale,
            DetectionModel::Constant { p } => p,
        };
        p.clamp(0.0, 1.0)
    }

    /// Rows per distance bin, columns per detection count `0..=window`.
    pub fn table(&self, bins: usize, bin_width: f64, window: usize) -> Vec<Vec<f64>> {
        (0..bins)
            .map(|i| (0..=window).map(|r| self.prob(i as f64 * bin_width, r, window)).collect())
            .collect()
    }

    fn validate(&self) -> Result<(), CaseError> {
        let ok = match *self {
            DetectionModel::Table { bin_width, near, floor, history_weight, .. } => {
                bin_width > 0.0 && (0.0..=1.0).contains(&near) && (0.0..=1.0).contains(&floor) && history_weight >= 0.0
            }
            DetectionModel::CeilLinear { scale } => scale > 0.0,
            DetectionModel::Constant { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(CaseError::InvalidParams(format!("detection model {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BrakingPolicy {
    /// Time-to-collision and warning-index thresholds.
    Thresholds,
    /// `near` at distances up to `threshold`, `far` beyond.
    DistanceStep { threshold: f64, near: f64, far: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AebsParams {
    pub tau: f64,
    pub b1: f64,
    pub b2: f64,
    /// Warning-index threshold; infinite means always crossed.
    #[serde(with = "extended_f64")]
    pub c1: f64,
    /// Time-to-collision threshold; infinite means always crossed.
    #[serde(with = "extended_f64")]
    pub c2: f64,
    pub t_h: f64,
    pub t_s: f64,
    pub u: f64,
    /// Minimum allowed distance.
    pub l: f64,
    pub detection: DetectionModel,
    /// Majority-vote window.
    pub n_f: usize,
    /// Remembered readings.
    pub w: usize,
    pub braking: BrakingPolicy,
}

impl Default for AebsParams {
    fn default() -> Self {
        AebsParams {
            tau: 0.5,
            b1: 0.8,
            b2: 1.6,
            c1: 3.0,
            c2: 6.0,
            t_h: 2.0,
            t_s: 0.0,
            u: 1.0,
            l: 5.0,
            detection: DetectionModel::synthetic(),
            n_f: 3,
            w: 3,
            braking: BrakingPolicy::Thresholds,
        }
    }
}

impl AebsParams {
    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |m: &str| Err(CaseError::InvalidParams(m.to_string()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if let BrakingPolicy::Thresholds = self.braking {
            if !(0.0 < self.b1 && self.b1 < self.b2) {
                return bad("need 0 < B1 < B2");
            }
        }
        if !(self.t_h > 0.0 && self.u >= 0.0 && self.t_s >= 0.0) {
            return bad("reaction constants out of range");
        }
        if self.w == 0 || self.n_f == 0 || self.n_f > self.w || self.w > 16 {
            return bad("need 1 <= N_F <= W <= 16");
        }
        self.detection.validate()
    }

    fn brake_terms(&self) -> (f64, f64) {
        // Warning threshold crossed iff d <= alpha·v + beta·v² (for v > 0).
        (self.c1 * self.t_h + self.t_s, self.u / (2.0 * self.b2))
    }
}

// JSON has no infinities; they are written as the strings "inf" and "-inf".
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("expected a number or inf, got {t}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AebsState {
    pub d: f64,
    pub v: f64,
}

pub fn aebs_step(s: AebsState, b: f64, tau: f64) -> AebsState {
    AebsState {
        d: s.d - tau * s.v,
        v: (s.v - tau * b).max(0.0),
    }
}

/// Braking power chosen by the controller.
pub fn aebs_control(d: f64, v: f64, detected: bool, p: &AebsParams) -> f64 {
    if !detected || v <= 0.0 {
        return 0.0;
    }
    match p.braking {
        BrakingPolicy::DistanceStep { threshold, near, far } => {
            if d <= threshold {
                near
            } else {
                far
            }
        }
        BrakingPolicy::Thresholds => {
            let ttc = d / v;
            let d_br = v * p.t_s + p.u * v * v / (2.0 * p.b2);
            let wi = (d - d_br) / (v * p.t_h);
            match (wi <= p.c1, ttc <= p.c2) {
                (true, true) => p.b2,
                (false, false) => 0.0,
                _ => p.b1,
            }
        }
    }
}

/// Abstractable loop over `(d, v)` with inputs detected / not detected.
#[derive(Clone, Debug)]
pub struct AebsPlant {
    pub params: AebsParams,
}

fn d_le(rhs_v: f64, rhs: f64) -> LinearConstraint {
    // d - rhs_v·v <= rhs
    LinearConstraint::le(vec![1.0, -rhs_v], rhs)
}

impl AebsPlant {
    // Regions where the time-to-collision threshold is crossed or not.
    fn ttc_regions(&self) -> Vec<(Option<LinearConstraint>, bool)> {
        if self.params.c2.is_infinite() {
            return vec![(None, true)];
        }
        let g = d_le(self.params.c2, 0.0);
        vec![(Some(g.clone()), true), (Some(g.negated()), false)]
    }

    // Same for the warning index; over-approximated on cells with a speed range.
    fn wi_regions(&self, cell: &CellBox) -> Vec<(Vec<LinearConstraint>, bool)> {
        if self.params.c1.is_infinite() {
            return vec![(vec![], true)];
        }
        let (alpha, beta) = self.params.brake_terms();
        let g = |v: f64| alpha * v + beta * v * v;
        let dg = |v: f64| alpha + 2.0 * beta * v;
        let (v0, v1) = (cell.lo[1].max(0.0), cell.hi[1]);
        if cell.lattice[1] || v0 == v1 {
            let c = d_le(0.0, g(v0));
            return vec![(vec![c.clone()], true), (vec![c.negated()], false)];
        }
        // The threshold is convex in v: its chord bounds the crossed side from
        // above and its tangents bound the other side from below.
        let crossed = if v1.is_finite() {
            let slope = (g(v1) - g(v0)) / (v1 - v0);
            vec![d_le(slope, g(v0) - slope * v0)]
        } else {
            vec![]
        };
        let mut clear = vec![d_le(dg(v0), g(v0) - dg(v0) * v0).negated()];
        if v1.is_finite() {
            clear.push(d_le(dg(v1), g(v1) - dg(v1) * v1).negated());
        }
        vec![(crossed, true), (clear, false)]
    }

    fn braking_regions(&self, cell: &CellBox) -> Vec<(Vec<LinearConstraint>, f64)> {
        let p = &self.params;
        match p.braking {
            BrakingPolicy::DistanceStep { threshold, near, far } => {
                let g = d_le(0.0, threshold);
                vec![(vec![g.clone()], near), (vec![g.negated()], far)]
            }
            BrakingPolicy::Thresholds => {
                let mut out = Vec::new();
                for (tg, tc) in self.ttc_regions() {
                    for (wg, wc) in self.wi_regions(cell) {
                        let b = match (wc, tc) {
                            (true, true) => p.b2,
                            (false, false) => 0.0,
                            _ => p.b1,
                        };
                        let mut guards = wg.clone();
                        guards.extend(tg.clone());
                        out.push((guards, b));
                    }
                }
                out
            }
        }
    }
}

impl ControllerPlant for AebsPlant {
    fn dimensions(&self) -> Vec<String> {
        vec!["d".into(), "v".into()]
    }

    fn inputs(&self) -> Vec<String> {
        vec![DETECTED.into(), NOT_DETECTED.into()]
    }

    fn step(&self, x: &[f64], k: usize) -> Vec<f64> {
        let b = aebs_control(x[0], x[1], k == 0, &self.params);
        let s = aebs_step(AebsState { d: x[0], v: x[1] }, b, self.params.tau);
        vec![s.d, s.v]
    }

    fn pieces(&self, cell: &CellBox, k: usize) -> Result<Vec<Piece>, AbstractionError> {
        let tau = self.params.tau;
        let moving = AffineMap {
            matrix: vec![vec![1.0, -tau], vec![0.0, 1.0]],
            offset: vec![0.0, 0.0],
        };
        if k != 0 {
            return Ok(vec![Piece { guards: vec![], map: moving }]);
        }
        let mut out = Vec::new();
        for (guards, b) in self.braking_regions(cell) {
            if b == 0.0 {
                out.push(Piece { guards, map: moving.clone() });
                continue;
            }
            // v' = max(0, v - tau·b)
            let stops = LinearConstraint::le(vec![0.0, 1.0], tau * b);
            let mut stop_map = moving.clone();
            stop_map.set_row(1, vec![0.0, 0.0], 0.0);
            let mut slow_map = moving.clone();
            slow_map.set_row(1, vec![0.0, 1.0], -tau * b);
            let mut g1 = guards.clone();
            g1.push(stops.clone());
            let mut g2 = guards;
            g2.push(stops.negated());
            out.push(Piece { guards: g1, map: stop_map });
            out.push(Piece { guards: g2, map: slow_map });
        }
        Ok(out)
    }

    fn labels(&self, cell: &CellBox) -> Vec<String> {
        let mut l = Vec::new();
        if cell.lo[0] <= self.params.l {
            l.push(COLLIDED.to_string());
        }
        if cell.hi[1] <= 0.0 {
            l.push(STOPPED.to_string());
        }
        l
    }

    fn absorbing(&self, cell: &CellBox) -> bool {
        cell.lo[0] <= self.params.l || cell.hi[1] <= 0.0
    }

    fn observation(&self, cell: &CellBox) -> String {
        format!("d{}", cell.lo[0])
    }

    fn ranges(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)]
    }
}

/// Everything needed to build one emergency-braking model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AebsConfig {
    pub params: AebsParams,
    pub d_axis: DimKind,
    pub v_axis: DimKind,
    pub initial: AebsState,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl AebsConfig {
    /// Small model starting 9 m from the obstacle at 1.2 m/s.
    pub fn desk() -> Self {
        AebsConfig {
            params: AebsParams { l: 1.0, ..AebsParams::default() },
            d_axis: DimKind::Interval { lo: 0.0, hi: 10.0, width: 0.5 },
            v_axis: DimKind::Lattice { origin: 0.0, step: 0.4 },
            initial: AebsState { d: 9.0, v: 1.2 },
            horizon: None,
        }
    }

    pub fn grid(&self) -> Result<IntervalGrid, CaseError> {
        Ok(IntervalGrid::new(vec![
            Dimension { name: "d".into(), kind: self.d_axis.clone() },
            Dimension { name: "v".into(), kind: self.v_axis.clone() },
        ])?)
    }

    /// Sets the width of every interval axis.
    pub fn set_width(&mut self, w: f64) {
        for axis in [&mut self.d_axis, &mut self.v_axis] {
            if let DimKind::Interval { width, .. } = axis {
                *width = w;
            }
        }
    }
}

fn ones(h: u32) -> usize {
    h.count_ones() as usize
}

/// Detection-history automaton: reads the distance key, draws a low-level
/// detection, shifts it into the history and outputs the majority vote.
pub fn build_aebs_perception(
    params: &AebsParams,
    observations: &[(String, f64)],
    choices: &[Vec<String>; 2],
) -> Result<Pa, CaseError> {
    let w = params.w as u32;
    let mask = (1u32 << w) - 1;
    let vote_mask = (1u32 << params.n_f) - 1;
    let mut b = PaBuilder::with_features(["hist", "per_phase", "input"]);
    let n_hist = 1usize << w;
    let awaits: Vec<_> = (0..n_hist)
        .map(|h| b.add_state(format!("await{h:0w$b}", w = w as usize), Vec::<String>::new(), vec![h as f64, 0.0, -1.0]))
        .collect();
    let outs: Vec<[_; 2]> = (0..n_hist)
        .map(|h| {
            [0usize, 1].map(|k| {
                let name = [DETECTED, NOT_DETECTED][k];
                b.add_state(format!("out{h:0w$b}{name}", w = w as usize), Vec::<String>::new(), vec![h as f64, 1.0, k as f64])
            })
        })
        .collect();
    for h in 0..n_hist as u32 {
        for (key, d) in observations {
            let q = params.detection.prob(*d, ones(h), params.w);
            let a = b.action(&format!("{OBSERVE_PREFIX}{key}"), ActionOrigin::PerceptionInput);
            let mut entries = Vec::new();
            for (bit, p) in [(1u32, q), (0u32, 1.0 - q)] {
                let h2 = ((h << 1) | bit) & mask;
                let detected = 2 * ones(h2 & vote_mask) >= params.n_f;
                let k = if detected { 0 } else { 1 };
                entries.push((outs[h2 as usize][k], p));
            }
            b.add_transition(awaits[h as usize], a, Distribution::new(entries)?)?;
        }
        for k in 0..2 {
            for name in &choices[k] {
                let a = b.action(name, ActionOrigin::ReachabilityChoice);
                b.add_transition(outs[h as usize][k], a, Distribution::dirac(awaits[h as usize]))?;
            }
        }
    }
    b.set_initial(awaits[0]);
    Ok(b.build()?)
}

/// Product of the detection-history automaton and the abstraction of the loop.
pub fn build_aebs_model(cfg: &AebsConfig) -> Result<CaseModel, CaseError> {
    cfg.params.validate()?;
    let plant = AebsPlant { params: cfg.params.clone() };
    let grid = cfg.grid()?;
    let abs = build_interval_abstraction(
        &plant,
        &grid,
        &[cfg.initial.d, cfg.initial.v],
        AbstractionOptions { horizon: cfg.horizon },
    )?;
    let observations: Vec<(String, f64)> = abs
        .observations
        .iter()
        .map(|(k, bx)| (k.strip_prefix(OBSERVE_PREFIX).unwrap_or(k).to_string(), bx.lo[0]))
        .collect();
    let per = build_aebs_perception(&cfg.params, &observations, &[abs.choice_actions(0), abs.choice_actions(1)])?;
    let pa = compose(&per, &abs.pa)?;
    Ok(CaseModel {
        pa,
        property: SafetyProperty::always_not(COLLIDED),
        orders: aebs_orders(),
        abstraction_states: abs.pa.num_states(),
    })
}

/// Farther is safer; slower is safer; and their product.
pub fn aebs_orders() -> Vec<PartialOrder> {
    vec![
        PartialOrder::features("dv", [("d", Direction::Higher), ("v", Direction::Lower)]),
        PartialOrder::features("d", [("d", Direction::Higher)]),
        PartialOrder::features("v", [("v", Direction::Lower)]),
    ]
}
