//! Deterministic discrete-event network: asynchronous reliable channels
//! with egress serialization and seeded jitter, Byzantine and crash faults,
//! a membership registry, scripted and periodic workloads, and a hashed
//! event trace.

mod config;
mod exec;
mod trace;

pub use config::{
    Actor, Behavior, ByzantineSpec, ConfigError, CrashStep, DelayModel, OpSpec, Periodic, Population, ScriptStep,
    SimConfig,
};
pub use exec::{run, value_digest, Ctx, Ids, Node, Role, RunReport, Sim, Sleep, Status, TaskId, Wait};
pub use trace::{read_jsonl, write_jsonl, EventKind, OpKind, Trace, TraceEvent};
