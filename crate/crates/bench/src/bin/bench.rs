//! Runs scalability sweeps and writes `results.csv` (plus SVG charts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dsm_bench::{emit, run_many, Algo, Scenario, ScenarioSpec};

#[derive(Parser, Debug)]
#[command(name = "bench", about = "Latency and storage sweeps for the coded memory and replication baselines")]
struct Args {
    /// Scenario name, or "all".
    #[arg(long, default_value = "object-size")]
    scenario: String,
    /// Algorithm name, or "all".
    #[arg(long, default_value = "all")]
    algo: String,
    #[arg(long, default_value_t = 13)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    readers: usize,
    #[arg(long, default_value_t = 3)]
    writers: usize,
    /// Logical bytes per value.
    #[arg(long = "object-size", default_value_t = 1 << 20)]
    object_size: u64,
    #[arg(long, default_value_t = 10)]
    objects: u64,
    /// Coded replication factor (and mwabd-cluster size).
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    delta: usize,
    /// Silent members in deram runs.
    #[arg(long, default_value_t = 0)]
    byz: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Comma-separated sweep values; the scenario default when omitted.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long = "period-ms", default_value_t = 2000.0)]
    period_ms: f64,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
    /// TOML file whose keys override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn pick<T: Copy + std::str::FromStr<Err = String>>(name: &str, all: &[T]) -> Result<Vec<T>, String> {
    if name == "all" {
        Ok(all.to_vec())
    } else {
        name.split(',').map(str::parse).collect()
    }
}

fn specs(args: &Args) -> Result<Vec<ScenarioSpec>, String> {
    let base = ScenarioSpec {
        sweep: args.sweep.clone(),
        nodes: args.nodes,
        readers: args.readers,
        writers: args.writers,
        object_size: args.object_size,
        objects: args.objects,
        n: args.n,
        k: args.k,
        delta: args.delta,
        byz: args.byz,
        seed: args.seed,
        repetitions: args.reps,
        period_ms: args.period_ms,
        rounds: args.rounds,
        ..ScenarioSpec::default()
    };
    let mut table = toml::Value::try_from(&base).map_err(|e| e.to_string())?;
    let (mut scenarios, mut algos) = (args.scenario.clone(), args.algo.clone());
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut file: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(s) = file.remove("scenario").and_then(|v| v.as_str().map(String::from)) {
            scenarios = s;
        }
        if let Some(a) = file.remove("algo").and_then(|v| v.as_str().map(String::from)) {
            algos = a;
        }
        let t = table.as_table_mut().expect("spec serializes to a table");
        for (key, v) in file {
            t.insert(key, v);
        }
    }
    let mut out = Vec::new();
    for scenario in pick(&scenarios, &Scenario::ALL)? {
        for algo in pick(&algos, &Algo::ALL)? {
            let mut spec: ScenarioSpec = table.clone().try_into().map_err(|e: toml::de::Error| e.to_string())?;
            spec.scenario = scenario;
            spec.algo = algo;
            out.push(spec);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let specs = match specs(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("bench: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run_many(&specs) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("bench: {e}");
            return ExitCode::from(2);
        }
    };
    for r in &outcome.rows {
        println!(
            "{:<13} {:<14} {:<5} {:>10} mean {:>9.1} ms  p99 {:>9.1} ms  stored {:>12}",
            r.scenario.name(),
            r.algo.name(),
            r.op,
            r.sweep,
            r.mean_ms,
            r.p99_ms,
            r.stored_bytes
        );
    }
    if !outcome.rows.is_empty() {
        match emit(&args.out, &outcome.rows, args.svg) {
            Ok(files) => files.iter().for_each(|f| eprintln!("wrote {}", f.display())),
            Err(e) => {
                eprintln!("bench: {e}");
                return ExitCode::from(2);
            }
        }
    }
    for (v, e) in &outcome.errors {
        eprintln!("bench: point {v}: {e}");
    }
    if outcome.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
