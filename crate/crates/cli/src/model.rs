use std::path::Path;

use mos_core::casestudies::{preset_pair, CaseConfig};
use mos_core::model_io::{self, ModelDocument};
use mos_core::mos::{negate, trim_lss, trim_pmc, PartialOrder, TrimReport};
use mos_core::pa::Pa;
use mos_core::pmc::SafetyProperty;

use crate::config::{RunConfig, TrimMode};
use crate::error::CliError;

/// Where models come from.
#[derive(Clone, Debug)]
pub enum Source {
    /// Case parameters; one entry per initial condition.
    Case { name: String, configs: Vec<CaseConfig> },
    Document { name: String, doc: Box<ModelDocument> },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub pa: Pa,
    pub property: SafetyProperty,
    pub orders: Vec<PartialOrder>,
}

impl Source {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        if let Some(p) = &cfg.preset {
            let (a, b) = preset_pair(p)?;
            let configs = if a == b { vec![a] } else { vec![a, b] };
            return Ok(Source::Case { name: p.clone(), configs });
        }
        if let Some(c) = &cfg.case {
            return Ok(Source::Case {
                name: "case".into(),
                configs: vec![c.clone()],
            });
        }
        match &cfg.model {
            Some(path) => Self::from_file(path),
            None => Err(CliError::Config("no model: give --preset or --model".into())),
        }
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
        let is_json = path.extension().is_some_and(|e| e == "json");
        if !is_json {
            let doc = model_io::parse(&text).map_err(|e| CliError::Model(format!("{}:{e}", path.display())))?;
            return Ok(Source::Document { name, doc: Box::new(doc) });
        }
        if let Ok(c) = CaseConfig::from_json(&text) {
            return Ok(Source::Case { name, configs: vec![c] });
        }
        let doc = ModelDocument::from_json(&text)?;
        Ok(Source::Document { name, doc: Box::new(doc) })
    }

    pub fn name(&self) -> &str {
        match self {
            Source::Case { name, .. } | Source::Document { name, .. } => name,
        }
    }

    pub fn initial_conditions(&self) -> usize {
        match self {
            Source::Case { configs, .. } => configs.len(),
            Source::Document { .. } => 1,
        }
    }

    /// Builds initial condition `i` at grid width `width`.
    pub fn build(&self, i: usize, width: Option<f64>, horizon: Option<usize>) -> Result<Model, CliError> {
        match self {
            Source::Case { configs, .. } => {
                let mut c = configs[i].clone();
                if let Some(w) = width {
                    c.set_width(w);
                }
                if let Some(t) = horizon {
                    c.set_horizon(t);
                }
                let m = c.build()?;
                Ok(Model {
                    pa: m.pa,
                    property: m.property,
                    orders: m.orders,
                })
            }
            Source::Document { doc, .. } => {
                if width.is_some() {
                    return Err(CliError::Config("grid widths apply to case models only".into()));
                }
                let l = model_io::lower(doc)?;
                for w in &l.warnings {
                    log::warn!("{w}");
                }
                let mut property = l
                    .property
                    .ok_or_else(|| CliError::Model("document declares no property".into()))?;
                if horizon.is_some() {
                    property.horizon = horizon;
                }
                Ok(Model {
                    pa: l.pa,
                    property,
                    orders: l.orders,
                })
            }
        }
    }

    /// Label of initial condition `i` for output rows.
    pub fn initial_label(&self, i: usize) -> String {
        match self {
            Source::Case { configs, .. } => match &configs[i] {
                CaseConfig::Aebs(c) => format!("d={} v={}", c.initial.d, c.initial.v),
                CaseConfig::Tank(c) => {
                    let w: Vec<String> = c.initial.iter().map(|w| w.to_string()).collect();
                    format!("w={}", w.join(";"))
                }
            },
            Source::Document { .. } => "initial".into(),
        }
    }
}

impl Model {
    pub fn order(&self, name: Option<&str>) -> Result<&PartialOrder, CliError> {
        match name {
            Some(n) => self
                .orders
                .iter()
                .find(|o| o.name == n)
                .ok_or_else(|| CliError::Config(format!("model has no order {n}"))),
            None => self
                .orders
                .first()
                .ok_or_else(|| CliError::Model("model declares no orders; trimming refused".into())),
        }
    }

    /// Applies a trim mode; returns the model to check, the order used and
    /// the trim report.
    pub fn trimmed(&self, mode: TrimMode, order: Option<&str>) -> Result<(Pa, Option<String>, TrimReport), CliError> {
        if mode == TrimMode::None {
            return Ok((self.pa.clone(), None, TrimReport::default()));
        }
        let o = self.order(order)?;
        let (pa, report) = match mode {
            TrimMode::Pmc => trim_pmc(&self.pa, o)?,
            TrimMode::Lss => trim_lss(&self.pa, o)?,
            TrimMode::Neg => trim_pmc(&self.pa, &negate(o))?,
            TrimMode::None => unreachable!(),
        };
        Ok((pa, Some(o.name.clone()), report))
    }
}
