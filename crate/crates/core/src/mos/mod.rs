//! Monotonic-safety orders and the trimming procedures built on them.
//!
//! An order claims that one state is at least as safe as another. Trimming
//! uses that claim to drop non-deterministic Dirac choices: [`trim_pmc`]
//! removes choices leading to safer destinations pairwise, [`trim_lss`]
//! keeps only the choice to a worst destination. [`validate_mos`] checks the
//! claim empirically by enumerating schedulers.

mod order;
mod trim;
mod validate;

use thiserror::Error;

use crate::pa::PaError;
use crate::pmc::PmcError;

pub use order::{negate, BoundOrder, Comparison, Direction, OrderRule, PartialOrder, StateShift};
pub use trim::{trim_lss, trim_lss_state, trim_pmc, trim_pmc_state, TrimReport, TrimmedTransition};
pub use validate::{validate_mos, MosValidationReport, MosValidationRow, COMPARISON_SLACK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MosError {
    #[error("order refers to unknown feature {0}")]
    UnknownFeature(String),
    #[error(transparent)]
    Pa(#[from] PaError),
    #[error(transparent)]
    Pmc(#[from] PmcError),
}
