//! Checks a JSON-lines trace for atomicity violations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dsm_core::checker::{check_all, ops_from_trace};
use dsm_core::sim::read_jsonl;

#[derive(Parser, Debug)]
#[command(name = "dsm-check", about = "Verify A1-A3 over a recorded trace")]
struct Args {
    trace: PathBuf,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let events = match std::fs::File::open(&args.trace).and_then(|f| read_jsonl(std::io::BufReader::new(f))) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("dsm-check: {}: {e}", args.trace.display());
            return ExitCode::from(2);
        }
    };
    let verdict = check_all(&ops_from_trace(&events));
    if args.json {
        println!("{}", serde_json::to_string_pretty(&verdict).expect("verdict serializes"));
    } else {
        print!("{}", verdict.report());
        if verdict.ok() {
            println!();
        }
    }
    if verdict.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
