//! `bannerforge`: every pipeline stage as a subcommand. Results go to stdout
//! as JSON, diagnostics to stderr.

mod backends;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use backends::{Env, GlobalOpts};

#[derive(Debug, Parser)]
#[command(name = "bannerforge", version, about = "Product-to-banner generation and evaluation")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = Env::load(cli.global).and_then(|env| commands::dispatch(&env, cli.command));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
