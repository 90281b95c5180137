//! Sweep definitions and per-point execution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use dsm_core::checker::{check_all, check_oracle_log};
use dsm_core::dynamic::ProtocolConfig;
use dsm_core::sim::{
    run, Actor, Behavior, ByzantineSpec, DelayModel, OpKind, OpSpec, Periodic, Population, RunReport, ScriptStep,
    SimConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ObjectSize,
    ObjectCount,
    NodeCount,
    Concurrency,
    /// Joins and departs during the workload; for correctness, not latency.
    Churn,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::ObjectSize, Scenario::ObjectCount, Scenario::NodeCount, Scenario::Concurrency, Scenario::Churn];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ObjectSize => "object-size",
            Scenario::ObjectCount => "object-count",
            Scenario::NodeCount => "node-count",
            Scenario::Concurrency => "concurrency",
            Scenario::Churn => "churn",
        }
    }

    /// Desk-scale sweep used when none is given.
    pub fn default_sweep(self) -> Vec<u64> {
        match self {
            Scenario::ObjectSize => vec![32 << 10, 1 << 20, 4 << 20, 16 << 20],
            Scenario::ObjectCount => vec![1, 10, 100],
            Scenario::NodeCount => vec![13, 16, 20, 26],
            Scenario::Concurrency => vec![10, 20, 40, 60],
            Scenario::Churn => vec![0, 2, 4],
        }
    }

    /// Whether plots put the sweep on a log axis.
    pub fn log_x(self) -> bool {
        matches!(self, Scenario::ObjectSize | Scenario::ObjectCount)
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            Scenario::ObjectSize => "object size (bytes)",
            Scenario::ObjectCount => "objects",
            Scenario::NodeCount => "nodes",
            Scenario::Concurrency => "readers",
            Scenario::Churn => "joins",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Deram,
    /// Replication on every node.
    MwabdFull,
    /// Replication on the `n` ring successors of each object.
    MwabdCluster,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Deram, Algo::MwabdCluster, Algo::MwabdFull];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Deram => "deram",
            Algo::MwabdFull => "mwabd-full",
            Algo::MwabdCluster => "mwabd-cluster",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Algo::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// One scenario for one algorithm. The swept quantity overrides the
/// matching fixed field at each point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub algo: Algo,
    pub sweep: Vec<u64>,
    pub nodes: usize,
    pub readers: usize,
    pub writers: usize,
    pub object_size: u64,
    pub objects: u64,
    /// Coded replication factor for deram and cluster size for mwabd-cluster.
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    /// Silent members (deram only).
    pub byz: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub period_ms: f64,
    pub rounds: usize,
    /// Every client invokes at the start of each round.
    pub aligned: bool,
    /// Largest real payload per value; bigger sizes are scaled down.
    pub max_real_bytes: u64,
    pub delay: DelayModel,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            scenario: Scenario::ObjectSize,
            algo: Algo::Deram,
            sweep: Vec::new(),
            nodes: 13,
            readers: 10,
            writers: 3,
            object_size: 1 << 20,
            objects: 10,
            n: 5,
            k: 3,
            delta: 3,
            byz: 0,
            seed: 1,
            repetitions: 1,
            period_ms: 2000.0,
            rounds: 5,
            aligned: true,
            max_real_bytes: 4096,
            delay: DelayModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("harness: {0}")]
    Harness(String),
    #[error("{scenario}/{algo} at {sweep}, seed {seed}: {detail}")]
    Violation { scenario: Scenario, algo: Algo, sweep: u64, seed: u64, detail: String },
}

/// One output line: latency of one operation kind at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub algo: Algo,
    pub op: String,
    pub sweep: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub ops: usize,
    /// Stored payload and coefficient bytes once every object is written.
    pub stored_bytes: u64,
    pub wire_bytes: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Invalid(m.into()));
        if self.algo == Algo::Deram && (self.k == 0 || self.k > self.n) {
            return bad("deram needs 1 <= k <= n");
        }
        if self.n > self.nodes && self.algo != Algo::MwabdFull && self.scenario != Scenario::NodeCount {
            return bad("n exceeds the node count");
        }
        if self.writers == 0 || self.objects == 0 || self.object_size == 0 || self.repetitions == 0 {
            return bad("writers, objects, object size and repetitions must be positive");
        }
        if self.sweep.iter().any(|&v| v == 0 && self.scenario != Scenario::Churn) {
            return bad("sweep values must be positive");
        }
        Ok(())
    }

    pub fn sweep_values(&self) -> Vec<u64> {
        if self.sweep.is_empty() {
            self.scenario.default_sweep()
        } else {
            self.sweep.clone()
        }
    }

    /// The harness configuration for one sweep point and seed.
    pub fn sim_config(&self, sweep: u64, seed: u64) -> SimConfig {
        let mut nodes = self.nodes;
        let mut readers = self.readers;
        let mut size = self.object_size;
        let mut objects = self.objects;
        let mut joins = 0;
        match self.scenario {
            Scenario::ObjectSize => size = sweep,
            Scenario::ObjectCount => objects = sweep,
            Scenario::NodeCount => nodes = sweep as usize,
            Scenario::Concurrency => readers = sweep as usize,
            Scenario::Churn => joins = sweep as usize,
        }
        let departs = joins / 2;
        let protocol = match self.algo {
            Algo::Deram => ProtocolConfig { crf_n: self.n, k: self.k, delta: self.delta, ..ProtocolConfig::default() },
            Algo::MwabdFull => ProtocolConfig::replication(nodes),
            Algo::MwabdCluster => ProtocolConfig::replication(self.n),
        };
        let byz = if self.algo == Algo::Deram { self.byz } else { 0 };
        let scale = size.div_ceil(self.max_real_bytes).max(1);
        let mut cfg = SimConfig {
            seed,
            members: nodes,
            joiners: joins,
            clients: self.writers + readers,
            protocol,
            delay: self.delay.clone(),
            byzantine: (0..byz).map(|member| ByzantineSpec { member, behavior: Behavior::Silent }).collect(),
            populate: Some(Population { objects, value_size: size as usize }),
            payload_scale: scale,
            ..SimConfig::default()
        };
        if self.rounds > 0 {
            cfg.periodic = Some(Periodic {
                writers: self.writers,
                readers,
                objects,
                period_ms: self.period_ms,
                rounds: self.rounds,
                value_size: size as usize,
                start_ms: 0.0,
                aligned: self.aligned,
            });
        }
        // Churn is serialized: one membership change at a time.
        let gap = self.period_ms.max(500.0);
        for j in 0..joins {
            cfg.script.push(ScriptStep { at_ms: (j as f64 + 0.5) * gap, actor: Actor::Joiner(j), op: OpSpec::Join });
        }
        for d in 0..departs {
            let at_ms = (joins as f64 + d as f64 + 0.5) * gap;
            cfg.script.push(ScriptStep { at_ms, actor: Actor::Member(nodes - 1 - d), op: OpSpec::Depart });
        }
        cfg
    }
}

/// Latencies in logical milliseconds, unsorted.
#[derive(Clone, Debug, Default)]
pub struct Samples(pub Vec<f64>);

impl Samples {
    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Nearest-rank percentile.
    pub fn percentile(&self, p: f64) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        v[rank.min(v.len()) - 1]
    }
}

/// Everything measured at one sweep point over all repetitions.
#[derive(Clone, Debug, Default)]
pub struct PointResult {
    pub read: Samples,
    pub write: Samples,
    pub stored_bytes: u64,
    pub wire_bytes: u64,
    pub retries: u64,
}

fn verify(spec: &ScenarioSpec, sweep: u64, seed: u64, r: &RunReport) -> Result<(), BenchError> {
    let fail = |detail: String| BenchError::Violation { scenario: spec.scenario, algo: spec.algo, sweep, seed, detail };
    let verdict = check_all(&r.ops);
    if !verdict.ok() {
        return Err(fail(verdict.report()));
    }
    check_oracle_log(&r.oracle_log).map_err(|v| fail(format!("{v:?}")))?;
    if !r.stuck.is_empty() {
        return Err(fail(format!("{} operations never responded", r.stuck.len())));
    }
    if let Some(op) = r.failed_ops().next() {
        return Err(fail(format!("operation {} failed: {}", op.id, op.failed.clone().unwrap_or_default())));
    }
    Ok(())
}

/// Runs every repetition of one sweep point; each run must pass the checker.
pub fn run_point(spec: &ScenarioSpec, sweep: u64) -> Result<PointResult, BenchError> {
    let mut out = PointResult::default();
    for rep in 0..spec.repetitions {
        let seed = spec.seed.wrapping_add(rep as u64);
        let cfg = spec.sim_config(sweep, seed);
        // Storage after population alone, before any version list fills up.
        let mut fill = cfg.clone();
        fill.periodic = None;
        fill.script.clear();
        let filled = run(fill).map_err(|e| BenchError::Harness(e.to_string()))?;
        verify(spec, sweep, seed, &filled)?;
        let start_us = filled.end_time_us;

        let mut cfg = cfg;
        if let Some(p) = cfg.periodic.as_mut() {
            p.start_ms = start_us as f64 / 1000.0;
        }
        for s in &mut cfg.script {
            s.at_ms += start_us as f64 / 1000.0;
        }
        let r = run(cfg).map_err(|e| BenchError::Harness(e.to_string()))?;
        verify(spec, sweep, seed, &r)?;
        for o in r.ops.iter().filter(|o| o.is_complete() && o.invoke >= start_us) {
            let ms = (o.respond.unwrap() - o.invoke) as f64 / 1000.0;
            match o.kind {
                OpKind::Read => out.read.0.push(ms),
                OpKind::Write => out.write.0.push(ms),
                _ => {}
            }
        }
        out.stored_bytes += filled.stored_bytes;
        out.wire_bytes += r.wire_bytes;
        out.retries += r.retries;
    }
    let reps = spec.repetitions as u64;
    out.stored_bytes /= reps;
    out.wire_bytes /= reps;
    Ok(out)
}

pub fn rows_for(spec: &ScenarioSpec, sweep: u64, p: &PointResult) -> Vec<ResultRow> {
    [("read", &p.read), ("write", &p.write)]
        .into_iter()
        .map(|(op, s)| ResultRow {
            scenario: spec.scenario,
            algo: spec.algo,
            op: op.to_string(),
            sweep,
            mean_ms: (s.mean() * 1000.0).round() / 1000.0,
            p50_ms: s.percentile(50.0),
            p99_ms: s.percentile(99.0),
            ops: s.0.len(),
            stored_bytes: p.stored_bytes,
            wire_bytes: p.wire_bytes,
        })
        .collect()
}

/// Rows of every point that ran cleanly, plus the error of each that did not.
#[derive(Clone, Debug, Default)]
pub struct ScenarioOutcome {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<(u64, BenchError)>,
}

/// Runs all sweep points of `spec`, in parallel.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome, BenchError> {
    spec.validate()?;
    run_many(std::slice::from_ref(spec))
}

/// Runs the points of several specs on worker threads; results keep input
/// order.
pub fn run_many(specs: &[ScenarioSpec]) -> Result<ScenarioOutcome, BenchError> {
    for s in specs {
        s.validate()?;
    }
    let jobs: Vec<(&ScenarioSpec, u64)> = specs.iter().flat_map(|s| s.sweep_values().into_iter().map(move |v| (s, v))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<PointResult, BenchError>>> = vec![None; jobs.len()];
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(spec, v)) = jobs.get(i) else { break };
                let r = run_point(spec, v);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut out = ScenarioOutcome::default();
    for ((spec, v), r) in jobs.into_iter().zip(results) {
        match r.expect("every job ran") {
            Ok(p) => out.rows.extend(rows_for(spec, v, &p)),
            Err(e) => out.errors.push((v, e)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_use_nearest_rank() {
        let s = Samples((1..=100).map(f64::from).collect());
        assert_eq!(s.percentile(50.0), 50.0);
        assert_eq!(s.percentile(99.0), 99.0);
        assert_eq!(s.mean(), 50.5);
        assert_eq!(Samples(vec![7.0]).percentile(99.0), 7.0);
    }

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("abd".parse::<Algo>().is_err());
    }

    #[test]
    fn baselines_use_majority_replication() {
        let spec = ScenarioSpec { algo: Algo::MwabdFull, ..ScenarioSpec::default() };
        let cfg = spec.sim_config(1 << 20, 1);
        assert_eq!(cfg.protocol.crf_n, 13);
        assert_eq!(cfg.protocol.k, 1);
        assert_eq!(cfg.protocol.quorum(13).unwrap(), 7);
        let cluster = ScenarioSpec { algo: Algo::MwabdCluster, ..spec }.sim_config(1 << 20, 1);
        assert_eq!(cluster.protocol.crf_n, 5);
        assert_eq!(cluster.payload_scale, 256);
    }

    #[test]
    fn sweep_overrides_the_matching_field() {
        let spec = ScenarioSpec { scenario: Scenario::NodeCount, ..ScenarioSpec::default() };
        assert_eq!(spec.sim_config(20, 1).members, 20);
        let spec = ScenarioSpec { scenario: Scenario::Concurrency, ..ScenarioSpec::default() };
        assert_eq!(spec.sim_config(40, 1).clients, 43);
        let spec = ScenarioSpec { scenario: Scenario::Churn, ..ScenarioSpec::default() };
        let cfg = spec.sim_config(4, 1);
        assert_eq!(cfg.joiners, 4);
        assert_eq!(cfg.script.len(), 6);
    }

    #[test]
    fn invalid_specs_are_refused() {
        assert!(ScenarioSpec { k: 6, ..ScenarioSpec::default() }.validate().is_err());
        assert!(ScenarioSpec { writers: 0, ..ScenarioSpec::default() }.validate().is_err());
        assert!(ScenarioSpec::default().validate().is_ok());
    }
}
