use serde::{Deserialize, Serialize};

use crate::dynamic::ProtocolConfig;
use crate::protocol::byz_budget;

/// Fault behaviour of a storage member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    Correct,
    /// Never replies.
    Silent,
    /// Keeps the first entry it ever accepted per object, answers every
    /// query with it and ignores later updates.
    StaleReplay,
}

/// Per-message delay: sender egress serialization, then propagation with
/// seeded jitter and occasional spikes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayModel {
    pub prop_base_ms: f64,
    /// Bytes per millisecond leaving one node.
    pub egress_bandwidth: f64,
    /// Uniform extra delay in `[0, jitter_fraction * prop_base_ms]`.
    pub jitter_fraction: f64,
    pub spike_probability: f64,
    pub spike_ms: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel { prop_base_ms: 40.0, egress_bandwidth: 125_000.0, jitter_fraction: 0.1, spike_probability: 0.0, spike_ms: 0.0 }
    }
}

impl DelayModel {
    /// Heavy jitter and frequent spikes, to shuffle deliveries.
    pub fn adversarial() -> Self {
        DelayModel { prop_base_ms: 10.0, egress_bandwidth: 50_000.0, jitter_fraction: 2.0, spike_probability: 0.05, spike_ms: 120.0 }
    }
}

/// Who performs a scripted step. Indices are per kind, in creation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum Actor {
    Client(usize),
    /// A member present from the start.
    Member(usize),
    /// A node that starts outside the system.
    Joiner(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum OpSpec {
    Read { obj: u64 },
    Write { obj: u64, size: usize },
    Join,
    Depart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub at_ms: f64,
    pub actor: Actor,
    #[serde(flatten)]
    pub op: OpSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrashStep {
    pub at_ms: f64,
    pub actor: Actor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByzantineSpec {
    pub member: usize,
    pub behavior: Behavior,
}

/// Clients `0..writers` write and the rest read; each issues one operation
/// per period on a random object, starting at a random offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Periodic {
    pub writers: usize,
    pub readers: usize,
    pub objects: u64,
    pub period_ms: f64,
    pub rounds: usize,
    pub value_size: usize,
    #[serde(default)]
    pub start_ms: f64,
    /// All clients invoke at the start of each round instead of at a
    /// random per-client offset.
    #[serde(default)]
    pub aligned: bool,
}

/// One write per object before anything else, spread over the writers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub objects: u64,
    pub value_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// Members registered at start.
    pub members: usize,
    pub joiners: usize,
    pub clients: usize,
    pub protocol: ProtocolConfig,
    pub delay: DelayModel,
    pub byzantine: Vec<ByzantineSpec>,
    pub crashes: Vec<CrashStep>,
    pub script: Vec<ScriptStep>,
    pub periodic: Option<Periodic>,
    pub populate: Option<Population>,
    /// Stop processing events after this logical time.
    pub horizon_ms: Option<f64>,
    /// Logical bytes per stored payload octet, for large-object accounting.
    pub payload_scale: u64,
    /// Keep send/deliver events in the trace (they are hashed either way).
    pub record_messages: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            members: 5,
            joiners: 0,
            clients: 2,
            protocol: ProtocolConfig::default(),
            delay: DelayModel::default(),
            byzantine: Vec::new(),
            crashes: Vec::new(),
            script: Vec::new(),
            periodic: None,
            populate: None,
            horizon_ms: None,
            payload_scale: 1,
            record_messages: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.protocol.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.members < self.protocol.crf_n {
            return bad(format!("{} members cannot host clusters of {}", self.members, self.protocol.crf_n));
        }
        if self.payload_scale == 0 {
            return bad("payload_scale must be positive".into());
        }
        let d = &self.delay;
        if !(d.prop_base_ms.is_finite() && d.prop_base_ms >= 0.0 && d.egress_bandwidth > 0.0 && d.jitter_fraction >= 0.0)
            || !(d.spike_ms.is_finite() && d.spike_ms >= 0.0)
        {
            return bad("delays must be finite and non-negative".into());
        }
        for b in &self.byzantine {
            if b.member >= self.members {
                return bad(format!("byzantine member {} out of range", b.member));
            }
        }
        for s in &self.script {
            self.check_actor(s.actor)?;
            match (&s.op, s.actor) {
                (OpSpec::Read { .. } | OpSpec::Write { .. }, Actor::Client(_)) => {}
                (OpSpec::Read { .. } | OpSpec::Write { .. }, _) => return bad("reads and writes are issued by clients".into()),
                (OpSpec::Join, Actor::Joiner(_)) => {}
                (OpSpec::Join, _) => return bad("only joiners join".into()),
                (OpSpec::Depart, Actor::Client(_)) => return bad("clients do not depart".into()),
                (OpSpec::Depart, _) => {}
            }
        }
        for c in &self.crashes {
            self.check_actor(c.actor)?;
        }
        if let Some(p) = &self.periodic {
            if p.readers + p.writers > self.clients || p.objects == 0 || p.period_ms <= 0.0 {
                return bad("periodic workload does not fit the clients".into());
            }
        }
        if let Some(p) = &self.populate {
            if self.clients == 0 || p.objects == 0 {
                return bad("population needs clients and objects".into());
            }
        }
        Ok(())
    }

    fn check_actor(&self, a: Actor) -> Result<(), ConfigError> {
        let ok = match a {
            Actor::Client(i) => i < self.clients,
            Actor::Member(i) => i < self.members,
            Actor::Joiner(i) => i < self.joiners,
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("{a:?} out of range")))
        }
    }

    /// Byzantine members allowed by the code parameters.
    pub fn byz_budget(&self) -> usize {
        byz_budget(self.protocol.crf_n, self.protocol.k)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
