//! Multi-object operation under churn: per-node membership estimates,
//! change piggybacking, the join and depart protocols, and reads and writes
//! that chase the object's current cluster.

mod handlers;
mod ops;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::identity::{NodeId, ObjectId, Verifier};
use crate::protocol::{byz_budget, ObjectStore, ProtocolError, QuorumRule, Signing};
use crate::registry::{ChangeSet, Sign};
use crate::ring::{Placement, RingError};

pub(crate) use handlers::on_request;
pub(crate) use ops::run_operation;
pub use ops::Operation;

/// Protocol knobs shared by every node of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub ring_bits: u32,
    /// Coded replication factor: members hosting each object.
    pub crf_n: usize,
    pub k: usize,
    pub delta: usize,
    /// Matching replies a joiner needs per tag before recoding it.
    /// `None` means `min(k, b + 1)`.
    pub beta: Option<usize>,
    pub quorum: QuorumRule,
    pub signing: Signing,
    /// Piggyback membership changes and chase cluster changes. Off for a
    /// fixed single cluster.
    pub dynamic: bool,
    /// Skip a read's write-back when a quorum already holds its tag.
    pub read_skip: bool,
    /// Cap on rounds of any cluster-chasing loop.
    pub max_rounds: usize,
    /// Re-queries of get-data when newer entries cannot be decoded yet.
    pub max_retries: usize,
    pub retry_base_ms: f64,
    pub oracle_latency_ms: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            ring_bits: 32,
            crf_n: 5,
            k: 3,
            delta: 3,
            beta: None,
            quorum: QuorumRule::Byzantine,
            signing: Signing::Enabled,
            dynamic: true,
            read_skip: true,
            max_rounds: 64,
            max_retries: 12,
            retry_base_ms: 20.0,
            oracle_latency_ms: 20.0,
        }
    }
}

impl ProtocolConfig {
    /// Replication baseline: `k = 1`, no version list, majority quorums,
    /// unsigned entries.
    pub fn replication(crf_n: usize) -> Self {
        ProtocolConfig {
            crf_n,
            k: 1,
            delta: 0,
            quorum: QuorumRule::Majority,
            signing: Signing::Disabled,
            read_skip: false,
            ..ProtocolConfig::default()
        }
    }

    pub fn placement(&self) -> Placement {
        Placement::new(self.ring_bits, self.crf_n)
    }

    pub fn beta(&self) -> usize {
        self.beta.unwrap_or_else(|| self.k.min(byz_budget(self.crf_n, self.k) + 1)).max(1)
    }

    pub fn quorum(&self, cluster_size: usize) -> Result<usize, ProtocolError> {
        self.quorum.size(cluster_size, self.k)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.k == 0 || self.k > self.crf_n {
            return Err(ProtocolError::InvalidCluster { cluster_size: self.crf_n, k: self.k });
        }
        if !(4..=256).contains(&self.ring_bits) {
            return Err(ProtocolError::BadState("ring_bits must lie in 4..=256"));
        }
        Ok(())
    }
}

/// One node's view of membership plus its per-object storage.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub changes: ChangeSet,
    pub s: BTreeSet<NodeId>,
    /// Objects this node hosts.
    pub d: BTreeSet<ObjectId>,
    pub stores: BTreeMap<ObjectId, ObjectStore>,
    delta: usize,
}

impl NodeState {
    pub fn new(id: NodeId, changes: ChangeSet, delta: usize) -> Self {
        let s = changes.active();
        NodeState { id, changes, s, d: BTreeSet::new(), stores: BTreeMap::new(), delta }
    }

    /// Adds the verifying changes of `incoming`; returns how many were new.
    pub fn merge(&mut self, incoming: &ChangeSet, verifier: &dyn Verifier) -> usize {
        let n = self.changes.merge(incoming.iter().filter(|c| c.verify(verifier)));
        if n > 0 {
            self.s = self.changes.active();
        }
        n
    }

    /// Replaces the estimate with an oracle snapshot, keeping anything
    /// already known.
    pub fn install(&mut self, snapshot: &ChangeSet) {
        self.changes.merge(snapshot.iter());
        self.s = self.changes.active();
    }

    pub fn store(&self, o: ObjectId) -> Option<&ObjectStore> {
        self.stores.get(&o)
    }

    pub fn store_mut(&mut self, o: ObjectId) -> &mut ObjectStore {
        let delta = self.delta;
        self.stores.entry(o).or_insert_with(|| ObjectStore::new(delta))
    }

    /// The members hosting `o` under this node's estimate.
    pub fn cluster(&self, o: ObjectId, cfg: &ProtocolConfig) -> Result<BTreeSet<NodeId>, RingError> {
        let p = cfg.placement();
        Ok(p.successors(&o.ring_id(cfg.ring_bits), &self.s)?.into_iter().collect())
    }

    /// Changes a requester holding cluster `s_prime` for `o` is missing.
    pub fn calculate_changes(&self, o: ObjectId, s_prime: &BTreeSet<NodeId>, cfg: &ProtocolConfig) -> ChangeSet {
        let s_o = self.cluster(o, cfg).unwrap_or_default();
        calculate_changes(&self.changes, &s_o, s_prime)
    }

    pub fn stored_bytes(&self) -> usize {
        self.stores.values().map(ObjectStore::stored_bytes).sum()
    }
}

/// `{⟨+,s⟩ : s ∈ S_o ∖ S′} ∪ {⟨−,s⟩ : s ∈ S′ ∖ S_o, ⟨−,s⟩ ∈ changes}`.
pub fn calculate_changes(changes: &ChangeSet, s_o: &BTreeSet<NodeId>, s_prime: &BTreeSet<NodeId>) -> ChangeSet {
    let mut out = ChangeSet::new();
    for s in s_o.difference(s_prime) {
        if let Some(c) = changes.get(Sign::Plus, *s) {
            out.insert(c.clone());
        }
    }
    for s in s_prime.difference(s_o) {
        if let Some(c) = changes.get(Sign::Minus, *s) {
            out.insert(c.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::KeyDirectory;
    use crate::registry::Change;

    #[test]
    fn calculate_changes_examples() {
        let mut dir = KeyDirectory::new(0);
        let [a, b, c, d] = [1, 2, 3, 4].map(|i| dir.register(NodeId(i)).unwrap());
        let mut changes = ChangeSet::new();
        for s in [&a, &b, &c, &d] {
            changes.insert(Change::signed(Sign::Plus, s));
        }
        changes.insert(Change::signed(Sign::Minus, &d));
        let set = |ids: &[u64]| ids.iter().map(|&i| NodeId(i)).collect::<BTreeSet<_>>();

        let out = calculate_changes(&changes, &set(&[1, 2, 3]), &set(&[1, 2, 4]));
        assert_eq!(out.keys(), [(Sign::Plus, NodeId(3)), (Sign::Minus, NodeId(4))].into());
        assert!(calculate_changes(&changes, &set(&[1, 2, 3]), &set(&[1, 2, 3])).is_empty());

        let mut no_minus = changes.clone();
        no_minus = ChangeSet::from_iter(no_minus.iter().filter(|c| c.sign == Sign::Plus).cloned());
        let out = calculate_changes(&no_minus, &set(&[1, 2, 3]), &set(&[1, 2, 4]));
        assert_eq!(out.keys(), [(Sign::Plus, NodeId(3))].into());
    }

    #[test]
    fn merge_drops_forged_changes() {
        let mut dir = KeyDirectory::new(0);
        let a = dir.register(NodeId(1)).unwrap();
        let b = dir.register(NodeId(2)).unwrap();
        let mut st = NodeState::new(NodeId(9), ChangeSet::from_iter([Change::signed(Sign::Plus, &a)]), 1);
        let mut forged = Change::signed(Sign::Plus, &b);
        forged.node = NodeId(3);
        let incoming = ChangeSet::from_iter([Change::signed(Sign::Plus, &b), forged]);
        assert_eq!(st.merge(&incoming, &dir), 1);
        assert_eq!(st.s, [NodeId(1), NodeId(2)].into());
    }

    #[test]
    fn default_beta() {
        let mut cfg = ProtocolConfig { crf_n: 13, ..ProtocolConfig::default() };
        assert_eq!(cfg.beta(), 3);
        cfg.crf_n = 7;
        assert_eq!(cfg.beta(), 2);
        cfg.crf_n = 5;
        assert_eq!(cfg.beta(), 1);
    }
}
