use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use ledp_cli::{emit, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(resolved, outcome)| {
        let text = emit(&resolved, &outcome)?;
        Ok((text, outcome.exit))
    });
    match result {
        Ok((text, exit)) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(ledp_cli::EXIT_FAILURE);
            }
            ExitCode::from(exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
