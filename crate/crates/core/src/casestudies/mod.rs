//! Executable case studies: emergency braking, water tanks and the three
//! order-violating counterexamples.

pub mod aebs;
pub mod counterexamples;
pub mod tank;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::AbstractionError;
use crate::mos::PartialOrder;
use crate::pa::{Pa, PaError};
use crate::pmc::SafetyProperty;

pub use aebs::{AebsConfig, AebsParams};
pub use tank::{TankConfig, TankParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown preset {0}")]
    UnknownPreset(String),
    #[error("model check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Pa(#[from] PaError),
}

/// A built model with its property and candidate orders.
#[derive(Clone, Debug)]
pub struct CaseModel {
    pub pa: Pa,
    pub property: SafetyProperty,
    pub orders: Vec<PartialOrder>,
    /// States of the abstraction before composition with perception.
    pub abstraction_states: usize,
}

/// Parameter file contents: one of the two systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case")]
pub enum CaseConfig {
    Aebs(AebsConfig),
    Tank(TankConfig),
}

impl CaseConfig {
    pub fn build(&self) -> Result<CaseModel, CaseError> {
        match self {
            CaseConfig::Aebs(c) => aebs::build_aebs_model(c),
            CaseConfig::Tank(c) => tank::build_tank_model(c),
        }
    }

    pub fn set_width(&mut self, w: f64) {
        match self {
            CaseConfig::Aebs(c) => c.set_width(w),
            CaseConfig::Tank(c) => c.set_width(w),
        }
    }

    /// Overrides the number of steps (tank) or adds a step counter (braking).
    pub fn set_horizon(&mut self, t: usize) {
        match self {
            CaseConfig::Aebs(c) => c.horizon = Some(t),
            CaseConfig::Tank(c) => c.params.horizon = t,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        serde_json::from_str(text).map_err(|e| CaseError::InvalidParams(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

pub const PRESETS: &[&str] = &["aebs-desk", "tank-desk", "ce1", "ce2", "ce3"];

/// Named configurations. The counterexample presets return the first start
/// state; see [`preset_pair`] for both.
pub fn preset(name: &str) -> Result<CaseConfig, CaseError> {
    Ok(preset_pair(name)?.0)
}

/// Counterexample presets come as the two start states being compared; the
/// desk presets return the same configuration twice.
pub fn preset_pair(name: &str) -> Result<(CaseConfig, CaseConfig), CaseError> {
    use counterexamples::{ce1_config, ce2_config, ce3_config};
    Ok(match name {
        "aebs-desk" => (CaseConfig::Aebs(AebsConfig::desk()), CaseConfig::Aebs(AebsConfig::desk())),
        "tank-desk" => (CaseConfig::Tank(TankConfig::desk()), CaseConfig::Tank(TankConfig::desk())),
        "ce1" => (CaseConfig::Aebs(ce1_config(14.0, 20.0)), CaseConfig::Aebs(ce1_config(13.0, 20.0))),
        "ce2" => (CaseConfig::Aebs(ce2_config(8.0, 0.5)), CaseConfig::Aebs(ce2_config(9.0, 0.5))),
        "ce3" => (CaseConfig::Tank(ce3_config(10.0)), CaseConfig::Tank(ce3_config(40.0))),
        other => return Err(CaseError::UnknownPreset(other.to_string())),
    })
}
