use std::process::ExitCode;

use clap::Parser;
use graphdsl_cli::{run, Cli, Format};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.output);
            if !outcome.output.is_empty() && !outcome.output.ends_with('\n') {
                println!();
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            match format {
                Format::Structured => println!("{}", e.structured()),
                Format::Table => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
