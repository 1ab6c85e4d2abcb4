//! Command-line front end for `tinypatch`.
//!
//! The binary is a thin wrapper over [`run`]; integration tests drive the
//! same entry point through [`run_from`].

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod run_config;
pub mod svg;

use clap::Parser;

pub use args::Cli;
pub use error::CliError;
pub use run_config::RunConfig;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli)?;
    if let Some(n) = cfg.threads {
        // The global pool can only be set once per process; later calls keep
        // the first size, which only matters for in-process tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    use run_config::CommandKind::*;
    match cfg.command {
        Select => commands::select(&cfg),
        EvalRecall => commands::eval_recall(&cfg),
        EvalQos => commands::eval_qos(&cfg),
        Simulate => commands::simulate(&cfg),
        LossCheck => commands::loss_check(&cfg),
        Report => commands::report(&cfg),
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("tinypatch"))
        .chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli)
}
