// SPDX-License-Identifier: Apache-2.0

//! Argument parsing and exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use crate::commands::{dispatch, Command};
use crate::config::{ExperimentConfig, Format, MechanismKind, Overrides};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_AUDIT_FAILED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "budgetmech", version, about = "Budget-feasible procurement experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; every random stream derives from it.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory for report files; without it the main table goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, value_name = "NAME")]
    pub mechanism: Option<MechanismKind>,
    /// uniform, log, linear, step:T or tabulated:PATH.
    #[arg(long, global = true, value_name = "NAME")]
    pub rule: Option<String>,
    /// Number of trial instances.
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Exit with status 2 when an audit or probe check fails.
    #[arg(long, global = true)]
    pub strict: bool,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            mechanism: self.mechanism,
            rule: self.rule.clone(),
            trials: self.trials,
            format: self.format,
            strict: self.strict,
        }
    }
}

/// Loads the config and applies the flags.
pub fn resolve(flags: &Flags) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&flags.overrides());
    cfg.validate()?;
    Ok(cfg)
}

/// Full program: parse, run, write, and map the outcome to an exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // --help and --version also arrive here, on stdout and with success.
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            let _ = write!(stdout, "{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = resolve(&cli.flags).and_then(|cfg| {
        let report = dispatch(cli.command, &cfg)?;
        report.write(cfg.out.as_deref(), cfg.format, stdout)?;
        if cfg.out.is_none() {
            // Scalars only; the full summary goes to --out.
            let mut brief = report.summary.clone();
            if let Some(map) = brief.as_object_mut() {
                map.retain(|_, v| !v.is_object() && !v.is_array());
            }
            writeln!(stderr, "{brief}")?;
        }
        Ok((report.failed, cfg.strict))
    });
    match result {
        Ok((true, true)) => {
            let _ = writeln!(stderr, "error: checks failed");
            ExitCode::from(EXIT_AUDIT_FAILED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
