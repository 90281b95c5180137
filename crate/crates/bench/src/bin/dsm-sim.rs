//! Runs one simulation from a TOML config and prints a JSON summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dsm_core::checker::{check_all, check_oracle_log};
use dsm_core::sim::{run, write_jsonl, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "dsm-sim", about = "Run one seeded simulation")]
struct Args {
    /// Simulation config (TOML); defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the trace as JSON lines, message events included.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => match std::fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|t| SimConfig::from_toml(&t).map_err(|e| e.to_string())) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("dsm-sim: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => SimConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    cfg.record_messages |= args.trace.is_some();
    let report = match run(cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("dsm-sim: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(path) = &args.trace {
        let res = std::fs::File::create(path).and_then(|f| write_jsonl(std::io::BufWriter::new(f), &report.trace));
        if let Err(e) = res {
            eprintln!("dsm-sim: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    let verdict = check_all(&report.ops);
    let oracle = check_oracle_log(&report.oracle_log);
    let summary = serde_json::json!({
        "trace_digest": report.trace_digest,
        "events": report.trace_events,
        "ops": report.ops.len(),
        "failed": report.failed_ops().count(),
        "stuck": report.stuck,
        "retries": report.retries,
        "messages": report.messages,
        "wire_bytes": report.wire_bytes,
        "stored_bytes": report.stored_bytes,
        "end_ms": report.end_time_us as f64 / 1000.0,
        "verdict": verdict,
        "oracle_ok": oracle.is_ok(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if verdict.ok() && oracle.is_ok() && report.stuck.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
