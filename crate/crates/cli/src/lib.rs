//! Command-line driver for `mos-core`: builds case-study or file models,
//! checks them with and without trimming, runs scheduler sampling, validates
//! orders and reproduces the counterexamples.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;

use std::path::PathBuf;

use clap::{Args, Parser};

pub use commands::Output;
pub use config::{CommandKind, Format, RunConfig, TrimMode, OUT_DIR_ENV};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mos", version, about = "Check, trim and sample probabilistic automata")]
pub struct Cli {
    /// check | sweep | lss | validate-mos | counterexamples | export
    #[arg(value_enum)]
    pub command: Option<CommandKind>,
    #[command(flatten)]
    pub flags: Flags,
}

/// Command-line overrides; anything left out comes from `--config` or the
/// defaults.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in model: aebs-desk, tank-desk, ce1, ce2 or ce3.
    #[arg(long, conflicts_with = "model")]
    pub preset: Option<String>,
    /// Model file (.pa text, JSON document, or JSON case parameters).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Grid widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Step bound for the property (step counter for braking models).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Trim modes, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub trim: Vec<TrimMode>,
    /// Order to trim with (default: the model's first).
    #[arg(long)]
    pub order: Option<String>,
    /// Schedulers sampled per LSS trial.
    #[arg(long)]
    pub lss_n: Option<usize>,
    /// Half-width of the per-scheduler estimate.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Allowed probability of missing `epsilon`.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// LSS trials, with master seeds seed, seed+1, ...
    #[arg(long)]
    pub trials: Option<usize>,
    /// Exact per-scheduler probabilities instead of trace sampling.
    #[arg(long)]
    pub exact_solve: bool,
    /// Output file (default: $MOS_OUT_DIR/<command>.<ext>, else stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Largest scheduler space enumerated by validate-mos.
    #[arg(long)]
    pub cap_schedulers: Option<u64>,
    /// Value-iteration tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Write zero wall times, for reproducible files.
    #[arg(long)]
    pub no_timing: bool,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub dump_config: bool,
}

impl Cli {
    /// Effective configuration: file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let f = &self.flags;
        let mut c = match &f.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.command.is_some() {
            c.command = self.command;
        }
        if f.preset.is_some() || f.model.is_some() {
            c.preset = f.preset.clone();
            c.model = f.model.clone();
            c.case = None;
        }
        if !f.grid.is_empty() {
            c.grid = f.grid.clone();
        }
        if !f.trim.is_empty() {
            c.trim = f.trim.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &f.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(horizon, order, out, format, jobs);
        macro_rules! set_plain {
            ($($field:ident),*) => {$(
                if let Some(v) = f.$field {
                    c.$field = v;
                }
            )*};
        }
        set_plain!(lss_n, epsilon, delta, seed, trials, cap_schedulers, tolerance);
        c.exact_solve |= f.exact_solve;
        c.no_timing |= f.no_timing;
        c.validate()?;
        Ok(c)
    }
}

/// Runs the configured command and returns its rendered output.
pub fn execute(cfg: &RunConfig) -> Result<Output, CliError> {
    let run = || -> Result<Output, CliError> {
        Ok(match cfg.command()? {
            CommandKind::Check => commands::check(cfg)?.1,
            CommandKind::Sweep => commands::sweep(cfg)?.1,
            CommandKind::Lss => commands::lss(cfg)?.1,
            CommandKind::ValidateMos => commands::validate(cfg)?.1,
            CommandKind::Counterexamples => {
                let (rows, out) = commands::counterexamples(cfg)?;
                if rows.iter().any(|r| !r.pass) {
                    return Err(CliError::Failed(out.body));
                }
                out
            }
            CommandKind::Export => commands::export(cfg)?,
        })
    };
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Where output goes: `--out`, else the output directory variable, else
/// stdout (`None`).
pub fn output_path(cfg: &RunConfig, out: &Output, out_dir: Option<PathBuf>) -> Option<PathBuf> {
    cfg.out.clone().or_else(|| {
        let cmd = cfg.command.map_or("out", CommandKind::name);
        out_dir.map(|d| d.join(format!("{cmd}.{}", out.extension)))
    })
}

pub fn write_output(path: Option<&PathBuf>, out: &Output) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, &out.body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(out.body.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
