//! Command-line front end: data generation, training, the ablation table,
//! speediness curves and adaptive retiming.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod layout;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use error::CliError;

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(&mut cfg, a),
        Command::Train(a) => commands::train(&mut cfg, a),
        Command::Eval(a) => commands::eval(&mut cfg, a),
        Command::Predict(a) => commands::predict(&mut cfg, a),
        Command::Retime(a) => commands::retime(&mut cfg, a),
        Command::Inspect(a) => commands::inspect(a),
    }
}
