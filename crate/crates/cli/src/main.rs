mod cli;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use qrng_core::extractor::EntropySource;

use crate::cli::Cli;
use crate::commands::Context;
use crate::config::{RunConfig, DEFAULT_PROFILE};
use crate::error::Result;

fn context(cli: &Cli) -> Result<Context> {
    let g = &cli.global;
    let cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::profile(
            g.profile.as_deref().unwrap_or(DEFAULT_PROFILE),
            g.profile_dir.as_deref(),
        )?,
    };
    let seed = match (g.seed, g.platform_entropy) {
        (Some(key), _) => Some(EntropySource::Seeded(key)),
        (None, true) => Some(EntropySource::Platform),
        (None, false) => None,
    };
    Ok(Context {
        cfg,
        out: g.out.clone(),
        format: g.format,
        seed,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match context(&cli).and_then(|ctx| commands::run(&cli.command, &ctx)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
