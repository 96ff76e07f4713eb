use rayon::prelude::*;
use serde::Serialize;

use mos_core::casestudies::counterexamples as ce;
use mos_core::lss::{lss_min, LssConfig};
use mos_core::model_io;
use mos_core::mos::validate_mos;
use mos_core::pa::{count_schedulers, enumerate_schedulers};
use mos_core::pmc::{min_safety_prob_with, prob_under_scheduler, CheckOptions};

use crate::config::{Format, RunConfig, TrimMode};
use crate::error::CliError;
use crate::model::Source;

/// Rendered command output.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub body: String,
    pub extension: &'static str,
}

pub const CHECK_SCHEMA: &str = "mos-check/1";
pub const LSS_SCHEMA: &str = "mos-lss/1";
pub const VALIDATE_SCHEMA: &str = "mos-validate/1";
pub const COUNTEREXAMPLE_SCHEMA: &str = "mos-counterexamples/1";

/// Result of checking one model configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub model: String,
    pub initial: String,
    pub grid: Option<f64>,
    pub trim: String,
    pub order: Option<String>,
    pub probability: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub states: Option<usize>,
    pub transitions: Option<usize>,
    pub schedulers: Option<String>,
    pub transitions_removed: Option<usize>,
    pub error: Option<String>,
}

fn csv_table<T: Serialize>(schema: &str, rows: &[T], header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    format!("# schema: {schema}\n{body}")
}

pub const CHECK_HEADER: &[&str] = &[
    "model",
    "initial",
    "grid",
    "trim",
    "order",
    "probability",
    "iterations",
    "residual",
    "wall_time_s",
    "states",
    "transitions",
    "schedulers",
    "transitions_removed",
    "error",
];

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("outputs serialize");
    s.push('\n');
    s
}

fn check_one(cfg: &RunConfig, src: &Source, i: usize, grid: Option<f64>, mode: TrimMode) -> Result<CheckRow, CliError> {
    let model = src.build(i, grid, cfg.horizon)?;
    let (pa, order, report) = model.trimmed(mode, cfg.order.as_deref())?;
    let opts = CheckOptions {
        tolerance: cfg.tolerance,
        ..CheckOptions::default()
    };
    let r = min_safety_prob_with(&pa, &model.property, &opts)?;
    Ok(CheckRow {
        model: src.name().to_string(),
        initial: src.initial_label(i),
        grid,
        trim: mode.name().into(),
        order,
        probability: Some(r.probability),
        iterations: Some(r.iterations),
        residual: Some(r.residual),
        wall_time_s: Some(if cfg.no_timing { 0.0 } else { r.wall_time.as_secs_f64() }),
        states: Some(pa.num_states()),
        transitions: Some(pa.num_transitions()),
        schedulers: Some(count_schedulers(&pa).to_string()),
        transitions_removed: Some(report.transitions_removed),
        error: None,
    })
}

/// Minimum safety probability of the first initial condition.
pub fn check(cfg: &RunConfig) -> Result<(CheckRow, Output), CliError> {
    let src = Source::from_config(cfg)?;
    let grid = match cfg.grid.as_slice() {
        [] => None,
        [w] => Some(*w),
        _ => return Err(CliError::Config("check takes one grid width; use sweep for several".into())),
    };
    let row = check_one(cfg, &src, 0, grid, cfg.trim_mode()?)?;
    let out = match cfg.output_format() {
        Format::Json => Output { body: json(&row), extension: "json" },
        Format::Csv => Output {
            body: csv_table(CHECK_SCHEMA, std::slice::from_ref(&row), CHECK_HEADER),
            extension: "csv",
        },
    };
    Ok((row, out))
}

/// One row per initial condition, grid width and trim mode, in that nesting
/// order. Failed rows carry the error and the sweep continues.
pub fn sweep(cfg: &RunConfig) -> Result<(Vec<CheckRow>, Output), CliError> {
    let src = Source::from_config(cfg)?;
    let grids: Vec<Option<f64>> = if cfg.grid.is_empty() {
        vec![None]
    } else {
        cfg.grid.iter().map(|w| Some(*w)).collect()
    };
    let mut jobs = Vec::new();
    for i in 0..src.initial_conditions() {
        for g in &grids {
            for m in cfg.trim_modes() {
                jobs.push((i, *g, m));
            }
        }
    }
    let rows: Vec<CheckRow> = jobs
        .par_iter()
        .map(|&(i, g, m)| {
            check_one(cfg, &src, i, g, m).unwrap_or_else(|e| {
                log::warn!("row failed: {e}");
                CheckRow {
                    model: src.name().to_string(),
                    initial: src.initial_label(i),
                    grid: g,
                    trim: m.name().into(),
                    order: cfg.order.clone(),
                    probability: None,
                    iterations: None,
                    residual: None,
                    wall_time_s: None,
                    states: None,
                    transitions: None,
                    schedulers: None,
                    transitions_removed: None,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    let out = match cfg.output_format() {
        Format::Json => Output { body: json(&rows), extension: "json" },
        Format::Csv => Output {
            body: csv_table(CHECK_SCHEMA, &rows, CHECK_HEADER),
            extension: "csv",
        },
    };
    Ok((rows, out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LssTrial {
    pub trial: usize,
    pub master_seed: u64,
    pub minimum: f64,
    pub estimates: Vec<f64>,
    /// Scheduler seeds; replaying with the same master seed reproduces them.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LssReport {
    pub model: String,
    pub trim: String,
    pub order: Option<String>,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub traces_per_scheduler: usize,
    pub exact: bool,
    /// `sampled`, or `exhaustive` when exact mode covers every scheduler.
    pub coverage: String,
    pub states: usize,
    pub transitions: usize,
    pub schedulers: String,
    pub trials: Vec<LssTrial>,
    pub mean_minimum: f64,
}

#[derive(Serialize)]
struct LssCsvRow<'a> {
    trial: &'a str,
    master_seed: Option<u64>,
    minimum: f64,
    n: usize,
    traces_per_scheduler: usize,
    exact: bool,
    coverage: &'a str,
}

pub const LSS_HEADER: &[&str] = &["trial", "master_seed", "minimum", "n", "traces_per_scheduler", "exact", "coverage"];

/// LSS minimum over `cfg.trials` independent trials. Timing goes to the log
/// only, so equal configurations give byte-identical output.
pub fn lss(cfg: &RunConfig) -> Result<(LssReport, Output), CliError> {
    let src = Source::from_config(cfg)?;
    let grid = cfg.grid.first().copied();
    let model = src.build(0, grid, cfg.horizon)?;
    let (pa, order, _) = model.trimmed(cfg.trim_mode()?, cfg.order.as_deref())?;
    let count = count_schedulers(&pa);
    let exhaustive = cfg.exact_solve && u64::try_from(&count).is_ok_and(|c| c <= cfg.lss_n as u64);
    let started = std::time::Instant::now();
    let trials: Vec<LssTrial> = (0..cfg.trials)
        .map(|t| {
            let master_seed = cfg.seed.wrapping_add(t as u64);
            if exhaustive {
                let space = enumerate_schedulers(&pa, cfg.lss_n as u64)?;
                let estimates = (0..space.len())
                    .into_par_iter()
                    .map(|k| prob_under_scheduler(&pa, &space.get(&pa, k), &model.property))
                    .collect::<Result<Vec<f64>, _>>()?;
                return Ok(LssTrial {
                    trial: t,
                    master_seed,
                    minimum: estimates.iter().copied().fold(f64::INFINITY, f64::min),
                    estimates,
                    seeds: Vec::new(),
                });
            }
            let lc = LssConfig {
                n: cfg.lss_n,
                epsilon: cfg.epsilon,
                delta: cfg.delta,
                master_seed,
                exact: cfg.exact_solve,
                horizon: mos_core::lss::DEFAULT_STEP_CAP,
            };
            let r = lss_min(&pa, &model.property, &lc)?;
            Ok(LssTrial {
                trial: t,
                master_seed,
                minimum: r.minimum,
                estimates: r.estimates,
                seeds: r.seeds,
            })
        })
        .collect::<Result<_, CliError>>()?;
    log::info!("lss: {} trial(s) in {:.3} s", cfg.trials, started.elapsed().as_secs_f64());
    let mean_minimum = trials.iter().map(|t| t.minimum).sum::<f64>() / trials.len() as f64;
    let exact = cfg.exact_solve;
    let report = LssReport {
        model: src.name().to_string(),
        trim: cfg.trim_mode()?.name().into(),
        order,
        n: cfg.lss_n,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        traces_per_scheduler: if exact { 0 } else { mos_core::lss::trace_count(cfg.epsilon, cfg.delta) },
        exact,
        coverage: if exhaustive { "exhaustive" } else { "sampled" }.into(),
        states: pa.num_states(),
        transitions: pa.num_transitions(),
        schedulers: count.to_string(),
        trials,
        mean_minimum,
    };
    let out = match cfg.output_format() {
        Format::Json => Output { body: json(&report), extension: "json" },
        Format::Csv => {
            let labels: Vec<String> = report.trials.iter().map(|t| t.trial.to_string()).collect();
            let mut rows: Vec<LssCsvRow> = report
                .trials
                .iter()
                .zip(&labels)
                .map(|(t, l)| LssCsvRow {
                    trial: l,
                    master_seed: Some(t.master_seed),
                    minimum: t.minimum,
                    n: report.n,
                    traces_per_scheduler: report.traces_per_scheduler,
                    exact,
                    coverage: &report.coverage,
                })
                .collect();
            rows.push(LssCsvRow {
                trial: "mean",
                master_seed: None,
                minimum: report.mean_minimum,
                n: report.n,
                traces_per_scheduler: report.traces_per_scheduler,
                exact,
                coverage: &report.coverage,
            });
            Output {
                body: csv_table(LSS_SCHEMA, &rows, LSS_HEADER),
                extension: "csv",
            }
        }
    };
    Ok((report, out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationRow {
    pub s1: String,
    pub s2: String,
    pub p: f64,
    pub schedulers: String,
    pub enumerated: u64,
    pub p_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationOutput {
    pub model: String,
    pub trim: String,
    pub order: Option<String>,
    pub scheduler_count: String,
    pub min_probability: Option<f64>,
    pub rows: Vec<ValidationRow>,
}

pub const VALIDATE_HEADER: &[&str] = &["s1", "s2", "p", "schedulers", "enumerated", "p_min"];

/// Share of schedulers under which each pair removed by trimming keeps its
/// claimed ordering. `--trim` picks which trimming supplies the pairs.
pub fn validate(cfg: &RunConfig) -> Result<(ValidationOutput, Output), CliError> {
    let src = Source::from_config(cfg)?;
    let model = src.build(0, cfg.grid.first().copied(), cfg.horizon)?;
    let mode = cfg.trim_mode()?;
    let (_, order, report) = if mode == TrimMode::None {
        model.trimmed(TrimMode::Pmc, cfg.order.as_deref())?
    } else {
        model.trimmed(mode, cfg.order.as_deref())?
    };
    let pairs = report.state_pairs();
    let v = validate_mos(&model.pa, &model.property, &pairs, cfg.cap_schedulers)?;
    let name = |s| model.pa.state_name(s).to_string();
    let out = ValidationOutput {
        model: src.name().to_string(),
        trim: if mode == TrimMode::None { TrimMode::Pmc } else { mode }.name().into(),
        order,
        scheduler_count: v.scheduler_count.to_string(),
        min_probability: v.min_probability,
        rows: v
            .rows
            .iter()
            .map(|r| ValidationRow {
                s1: name(r.s1),
                s2: name(r.s2),
                p: r.p,
                schedulers: r.schedulers.to_string(),
                enumerated: r.enumerated,
                p_min: r.p_min,
            })
            .collect(),
    };
    let rendered = match cfg.output_format() {
        Format::Json => Output { body: json(&out), extension: "json" },
        Format::Csv => Output {
            body: csv_table(VALIDATE_SCHEMA, &out.rows, VALIDATE_HEADER),
            extension: "csv",
        },
    };
    Ok((out, rendered))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub name: String,
    pub expected: (f64, f64),
    pub closed_form: (f64, f64),
    pub pipeline: Option<(f64, f64)>,
    pub pipeline_error: Option<String>,
    pub pass: bool,
}

/// Golden values of the three counterexamples.
pub const COUNTEREXAMPLE_GOLDEN: [(&str, (f64, f64)); 3] =
    [("ce1", (0.2955, 0.315)), ("ce2", (0.34375, 0.5)), ("ce3", (0.6912, 0.4752))];
pub const COUNTEREXAMPLE_TOLERANCE: f64 = 1e-9;

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= COUNTEREXAMPLE_TOLERANCE && (a.1 - b.1).abs() <= COUNTEREXAMPLE_TOLERANCE
}

/// Closed forms and model-checked values of the counterexamples against the
/// golden values. Fails when any row does.
pub fn counterexamples(cfg: &RunConfig) -> Result<(Vec<CounterexampleRow>, Output), CliError> {
    let rows: Vec<CounterexampleRow> = COUNTEREXAMPLE_GOLDEN
        .iter()
        .map(|&(name, expected)| {
            let (closed_form, pipeline) = match name {
                "ce1" => (ce::counterexample_distance(), ce::ce1_pipeline(20.0)),
                "ce2" => (ce::counterexample_speed(0.5), ce::ce2_pipeline(0.5)),
                _ => (ce::counterexample_tank(), ce::ce3_pipeline()),
            };
            let (pipeline, pipeline_error) = match pipeline {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CounterexampleRow {
                name: name.into(),
                expected,
                closed_form,
                pass: close(closed_form, expected) && pipeline.is_some_and(|p| close(p, expected)),
                pipeline,
                pipeline_error,
            }
        })
        .collect();
    let out = match cfg.format {
        Some(Format::Json) => Output { body: json(&rows), extension: "json" },
        Some(Format::Csv) => {
            #[derive(Serialize)]
            struct Flat<'a> {
                name: &'a str,
                expected_first: f64,
                expected_second: f64,
                closed_first: f64,
                closed_second: f64,
                pipeline_first: Option<f64>,
                pipeline_second: Option<f64>,
                pass: bool,
            }
            let flat: Vec<Flat> = rows
                .iter()
                .map(|r| Flat {
                    name: &r.name,
                    expected_first: r.expected.0,
                    expected_second: r.expected.1,
                    closed_first: r.closed_form.0,
                    closed_second: r.closed_form.1,
                    pipeline_first: r.pipeline.map(|p| p.0),
                    pipeline_second: r.pipeline.map(|p| p.1),
                    pass: r.pass,
                })
                .collect();
            let header = [
                "name",
                "expected_first",
                "expected_second",
                "closed_first",
                "closed_second",
                "pipeline_first",
                "pipeline_second",
                "pass",
            ];
            Output {
                body: csv_table(COUNTEREXAMPLE_SCHEMA, &flat, &header),
                extension: "csv",
            }
        }
        None => {
            let mut s = String::new();
            for r in &rows {
                let pipe = match (&r.pipeline, &r.pipeline_error) {
                    (Some(p), _) => format!("({}, {})", p.0, p.1),
                    (None, Some(e)) => format!("error: {e}"),
                    (None, None) => "-".into(),
                };
                s.push_str(&format!(
                    "{} expected=({}, {}) closed=({}, {}) pipeline={} {}\n",
                    r.name,
                    r.expected.0,
                    r.expected.1,
                    r.closed_form.0,
                    r.closed_form.1,
                    pipe,
                    if r.pass { "PASS" } else { "FAIL" }
                ));
            }
            Output { body: s, extension: "txt" }
        }
    };
    Ok((rows, out))
}

/// The (trimmed) model as a text document, or its JSON mirror.
pub fn export(cfg: &RunConfig) -> Result<Output, CliError> {
    let src = Source::from_config(cfg)?;
    let grid = cfg.grid.first().copied();
    let model = src.build(0, grid, cfg.horizon)?;
    let mode = cfg.trim_mode()?;
    let (pa, _, _) = model.trimmed(mode, cfg.order.as_deref())?;
    let mut meta = std::collections::BTreeMap::new();
    meta.insert("source".to_string(), src.name().to_string());
    meta.insert("initial".to_string(), src.initial_label(0));
    meta.insert("trim".to_string(), mode.name().to_string());
    if let Some(w) = grid {
        meta.insert("grid".to_string(), model_io::format_number(w));
    }
    let doc = model_io::export(&pa, Some(&model.property), &model.orders, &meta);
    Ok(match cfg.format {
        None => Output {
            body: model_io::write(&doc),
            extension: model_io::FILE_EXTENSION,
        },
        Some(Format::Json) => Output {
            body: doc.to_json() + "\n",
            extension: "json",
        },
        Some(Format::Csv) => return Err(CliError::Config("export writes .pa text or JSON".into())),
    })
}
