use std::process::ExitCode;

use clap::Parser;
use mos_cli::{execute, output_path, write_output, Cli, CliError, OUT_DIR_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::Failed(body) = &e {
                print!("{body}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    if cli.flags.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out = execute(&cfg)?;
    let path = output_path(&cfg, &out, std::env::var_os(OUT_DIR_ENV).map(Into::into));
    write_output(path.as_ref(), &out)?;
    if let Some(p) = path {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}
