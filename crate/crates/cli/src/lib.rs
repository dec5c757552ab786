//! Command-line front end: argument parsing, run directories and the
//! individual commands.

pub mod args;
pub mod commands;
pub mod run;

use anyhow::Result;
use simplekt::Category;

use args::{Cli, Command};

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prep(a) => commands::prep(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Multistep(a) => commands::multistep(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Trace(a) => commands::trace_cmd(a),
        Command::Stats(a) => commands::stats_cmd(a),
    }
}

/// Process exit status for a failed command: 2 configuration, 3 data,
/// 4 numerical, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<simplekt::Error>()).map(simplekt::Error::category) {
        Some(Category::Config) => 2,
        Some(Category::Data) => 3,
        Some(Category::Numeric) => 4,
        None => 1,
    }
}
