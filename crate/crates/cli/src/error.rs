use mos_core::casestudies::CaseError;
use mos_core::lss::LssError;
use mos_core::model_io::ModelIoError;
use mos_core::mos::MosError;
use mos_core::pa::PaError;
use mos_core::pmc::PmcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("scheduler count {count} exceeds cap {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("io: {0}")]
    Io(String),
    /// A check reported FAIL; the report itself was already written.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::CapExceeded { .. } => 4,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<PaError> for CliError {
    fn from(e: PaError) -> Self {
        match e {
            PaError::SchedulerCapExceeded { count, cap } => CliError::CapExceeded { count, cap },
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<PmcError> for CliError {
    fn from(e: PmcError) -> Self {
        match e {
            PmcError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            PmcError::Pa(p) => p.into(),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<MosError> for CliError {
    fn from(e: MosError) -> Self {
        match e {
            MosError::Pa(p) => p.into(),
            MosError::Pmc(p) => p.into(),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<LssError> for CliError {
    fn from(e: LssError) -> Self {
        match e {
            LssError::Pmc(p) => p.into(),
            LssError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        match e {
            CaseError::Pa(p) => p.into(),
            CaseError::UnknownPreset(_) | CaseError::InvalidParams(_) => CliError::Config(e.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Model(e.to_string())
    }
}
