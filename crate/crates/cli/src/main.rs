use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use wqte_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok((warnings, written)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            eprintln!("elapsed: {:.3} s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
