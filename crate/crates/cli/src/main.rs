// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

fn main() -> ExitCode {
    budgetmech_cli::cli::main_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
