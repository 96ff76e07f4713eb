//! Three small systems on which the natural safety orders fail, evaluated in
//! closed form and through the model pipeline.

use crate::abstraction::DimKind;
use crate::pmc::{min_safety_prob, PmcError};

use super::aebs::{build_aebs_model, AebsConfig, AebsParams, AebsState, BrakingPolicy, DetectionModel};
use super::tank::{build_tank_model, ErrorModel, TankConfig, TankParams};
use super::CaseError;

/// Safety probability of the one-step-filter braking loop from `(d, v)`:
/// each step detection happens with `det(d)` and then braking `brake(d, v)`
/// applies, otherwise the car coasts.
pub fn braking_recursion(
    d: f64,
    v: f64,
    tau: f64,
    l: f64,
    det: &dyn Fn(f64) -> f64,
    brake: &dyn Fn(f64, f64) -> f64,
) -> f64 {
    if d <= l {
        return 0.0;
    }
    if v <= 0.0 {
        return 1.0;
    }
    let q = det(d);
    let coast = braking_recursion(d - tau * v, v, tau, l, det, brake);
    if q == 0.0 {
        return coast;
    }
    let b = brake(d, v);
    let braked = braking_recursion(d - tau * v, (v - tau * b).max(0.0), tau, l, det, brake);
    q * braked + (1.0 - q) * coast
}

fn ceil_detection(scale: f64) -> impl Fn(f64) -> f64 {
    move |d: f64| (1.0 - d.ceil() / scale).clamp(0.0, 1.0)
}

/// Starts 14 m and 13 m away at 11 m/s with full braking 10 m/s² and
/// `Pr(det | d) = 1 - ceil(d) / scale`; returns `(from 14 m, from 13 m)`.
pub fn counterexample_distance_with(scale: f64) -> (f64, f64) {
    let q = ceil_detection(scale);
    let (q2, q3, q13, q14) = (q(2.0), q(3.0), q(13.0), q(14.0));
    (q14 * (q3 + q2 - q3 * q2), q13 * q2)
}

pub fn counterexample_distance() -> (f64, f64) {
    counterexample_distance_with(20.0)
}

/// Starts at 20 m with 8 m/s and 9 m/s, constant detection `p` and braking
/// 10 m/s² within 11 m, 3 m/s² beyond; returns `(slower, faster)`.
pub fn counterexample_speed(p: f64) -> (f64, f64) {
    (p * p * (1.0 + 2.0 * p - 3.0 * p * p + p * p * p), p)
}

fn binomial_tail(n: u32, p: f64, k: u32) -> f64 {
    (k..=n)
        .map(|i| {
            let c = (0..i).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64);
            c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
        })
        .sum()
}

/// One tank of capacity 100 with outflow 3 and inflow 40, readings that are
/// always empty (0.4) or full (0.6), over 4 steps; returns `(from 10, from 40)`.
pub fn counterexample_tank() -> (f64, f64) {
    let (p_fill, n): (f64, u32) = (0.4, 4);
    (
        1.0 - (1.0 - p_fill).powi(n as i32) - binomial_tail(n, p_fill, 3),
        1.0 - binomial_tail(n, p_fill, 2),
    )
}

fn integer_lattice() -> DimKind {
    DimKind::Lattice { origin: 0.0, step: 1.0 }
}

pub fn ce1_config(d0: f64, scale: f64) -> AebsConfig {
    AebsConfig {
        params: AebsParams {
            tau: 1.0,
            b1: 5.0,
            b2: 10.0,
            c1: f64::INFINITY,
            c2: f64::INFINITY,
            l: 0.0,
            detection: DetectionModel::CeilLinear { scale },
            n_f: 1,
            w: 1,
            ..AebsParams::default()
        },
        d_axis: integer_lattice(),
        v_axis: integer_lattice(),
        initial: AebsState { d: d0, v: 11.0 },
        horizon: None,
    }
}

pub fn ce2_config(v0: f64, p: f64) -> AebsConfig {
    AebsConfig {
        params: AebsParams {
            tau: 1.0,
            l: 0.0,
            detection: DetectionModel::Constant { p },
            n_f: 1,
            w: 1,
            braking: BrakingPolicy::DistanceStep { threshold: 11.0, near: 10.0, far: 3.0 },
            ..AebsParams::default()
        },
        d_axis: integer_lattice(),
        v_axis: integer_lattice(),
        initial: AebsState { d: 20.0, v: v0 },
        horizon: None,
    }
}

pub fn ce3_config(w0: f64) -> TankConfig {
    TankConfig {
        params: TankParams {
            j: 1,
            ts: 100.0,
            out: 3.0,
            inflow: 40.0,
            lt: 50.0,
            ut: 90.0,
            horizon: 4,
            error: ErrorModel { ew: 0, offsets: vec![0.0], empty: 0.4, full: 0.6 },
        },
        w_axis: integer_lattice(),
        initial: vec![w0],
        initial_filling: 0,
    }
}

fn min_prob(model: &super::CaseModel) -> Result<f64, CaseError> {
    Ok(min_safety_prob(&model.pa, &model.property, 1e-12)
        .map_err(|e: PmcError| CaseError::Check(e.to_string()))?
        .probability)
}

/// [`counterexample_distance_with`] through model construction and checking.
pub fn ce1_pipeline(scale: f64) -> Result<(f64, f64), CaseError> {
    Ok((
        min_prob(&build_aebs_model(&ce1_config(14.0, scale))?)?,
        min_prob(&build_aebs_model(&ce1_config(13.0, scale))?)?,
    ))
}

/// [`counterexample_speed`] through model construction and checking.
pub fn ce2_pipeline(p: f64) -> Result<(f64, f64), CaseError> {
    Ok((
        min_prob(&build_aebs_model(&ce2_config(8.0, p))?)?,
        min_prob(&build_aebs_model(&ce2_config(9.0, p))?)?,
    ))
}

/// [`counterexample_tank`] through model construction and checking.
pub fn ce3_pipeline() -> Result<(f64, f64), CaseError> {
    Ok((
        min_prob(&build_tank_model(&ce3_config(10.0))?)?,
        min_prob(&build_tank_model(&ce3_config(40.0))?)?,
    ))
}
