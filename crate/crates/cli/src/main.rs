use std::process::ExitCode;

use clap::Parser;
use fosb_cli::{run, Cli, CliError, EXIT_CONFIG};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                println!("{v}");
            }
            println!("wrote {} files to {}", outcome.files.len(), outcome.config.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fosb-em: {e}");
            if let CliError::Check(failed) = &e {
                failed.iter().for_each(|v| eprintln!("  {v}"));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
