use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mos_core::casestudies::CaseConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the directory for output files when `--out`
/// is not given.
pub const OUT_DIR_ENV: &str = "MOS_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Check,
    Sweep,
    Lss,
    ValidateMos,
    Counterexamples,
    Export,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Check => "check",
            CommandKind::Sweep => "sweep",
            CommandKind::Lss => "lss",
            CommandKind::ValidateMos => "validate-mos",
            CommandKind::Counterexamples => "counterexamples",
            CommandKind::Export => "export",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrimMode {
    None,
    Pmc,
    Lss,
    /// `trim_pmc` under the negated order.
    #[value(alias = "negated")]
    #[serde(alias = "negated")]
    Neg,
}

impl TrimMode {
    pub fn name(self) -> &'static str {
        match self {
            TrimMode::None => "none",
            TrimMode::Pmc => "pmc",
            TrimMode::Lss => "lss",
            TrimMode::Neg => "neg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// Everything a command needs. Defaults are those of [`RunConfig::default`];
/// a TOML file with any subset of these keys can be loaded with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    /// Built-in model, one of `mos_core::casestudies::PRESETS`.
    pub preset: Option<String>,
    /// Model file: `.pa` text, a JSON document, or a JSON case parameter file.
    pub model: Option<PathBuf>,
    /// Inline case parameters, as in a case parameter file.
    pub case: Option<CaseConfig>,
    /// Grid widths; empty keeps the model's own.
    pub grid: Vec<f64>,
    pub horizon: Option<usize>,
    pub trim: Vec<TrimMode>,
    /// Order used for trimming; defaults to the model's first order.
    pub order: Option<String>,
    pub lss_n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    /// LSS trials; trial `t` uses master seed `seed + t`.
    pub trials: usize,
    pub exact_solve: bool,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub cap_schedulers: u64,
    pub tolerance: f64,
    /// Write zero instead of measured wall times.
    pub no_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            preset: None,
            model: None,
            case: None,
            grid: Vec::new(),
            horizon: None,
            trim: Vec::new(),
            order: None,
            lss_n: 10,
            epsilon: 0.05,
            delta: 0.2,
            seed: 0,
            trials: 1,
            exact_solve: false,
            out: None,
            format: None,
            jobs: None,
            cap_schedulers: 1_000_000,
            tolerance: mos_core::pmc::DEFAULT_TOLERANCE,
            no_timing: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn command(&self) -> Result<CommandKind, CliError> {
        self.command.ok_or_else(|| CliError::Config("no command given".into()))
    }

    /// Trim modes to run, with the per-command default when none was given.
    pub fn trim_modes(&self) -> Vec<TrimMode> {
        if !self.trim.is_empty() {
            return self.trim.clone();
        }
        match self.command {
            Some(CommandKind::Sweep) => vec![TrimMode::None, TrimMode::Pmc],
            Some(CommandKind::ValidateMos) => vec![TrimMode::Pmc],
            _ => vec![TrimMode::None],
        }
    }

    pub fn trim_mode(&self) -> Result<TrimMode, CliError> {
        match self.trim_modes().as_slice() {
            [one] => Ok(*one),
            _ => Err(CliError::Config("this command takes a single --trim mode".into())),
        }
    }

    /// Format with the per-command default: tables are CSV, single runs JSON.
    pub fn output_format(&self) -> Format {
        self.format.unwrap_or(match self.command {
            Some(CommandKind::Sweep | CommandKind::ValidateMos) => Format::Csv,
            _ => Format::Json,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sources = [self.preset.is_some(), self.model.is_some(), self.case.is_some()];
        if sources.iter().filter(|b| **b).count() > 1 {
            return Err(CliError::Config("give at most one of preset, model and case".into()));
        }
        if let Some(w) = self.grid.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(CliError::Config(format!("grid width {w} must be positive")));
        }
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Config(format!("{name} {v} not in (0,1)")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(CliError::Config(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.lss_n == 0 {
            return Err(CliError::Config("lss-n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}
