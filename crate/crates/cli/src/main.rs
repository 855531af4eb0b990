use clap::Parser;
use std::process::ExitCode;
use tubecav_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((m, out)) => {
            println!("{}: {} artifacts in {}", m.command, m.artifacts.len(), out.display());
            ExitCode::SUCCESS
        }
        Err((e, m)) => {
            if let Some(m) = m {
                for f in &m.failures {
                    eprintln!("point {}: {}", f.index, f.error);
                }
            }
            eprintln!("tubecav: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
