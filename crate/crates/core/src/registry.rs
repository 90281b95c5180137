//! Membership registry: a totally ordered log of signed join/depart changes.
//!
//! Every `add` and `get` is serialized at one position of a single log, which
//! gives Total Order; a `get` returns exactly the changes appended so far
//! (Validity), and snapshots only grow (Inclusion). The registry also enforces
//! the floor `|active| >= n` by refusing departs that would breach it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::identity::{NodeId, Signature, Signer, Verifier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

/// A join (`+`) or depart (`-`) of `node`, signed by that node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub sign: Sign,
    pub node: NodeId,
    pub sig: Signature,
}

impl Change {
    pub fn message(sign: Sign, node: NodeId) -> Vec<u8> {
        let mut m = Vec::with_capacity(12);
        m.extend_from_slice(b"chg");
        m.push(match sign {
            Sign::Plus => b'+',
            Sign::Minus => b'-',
        });
        m.extend_from_slice(&node.to_bytes());
        m
    }

    pub fn signed(sign: Sign, signer: &Signer) -> Change {
        let node = signer.node();
        Change { sign, node, sig: signer.sign(&Change::message(sign, node)) }
    }

    pub fn key(&self) -> (Sign, NodeId) {
        (self.sign, self.node)
    }

    pub fn verify(&self, verifier: &dyn Verifier) -> bool {
        verifier.verify(self.node, &Change::message(self.sign, self.node), &self.sig)
    }
}

/// A set of changes, at most one per (sign, node).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    entries: BTreeMap<(Sign, NodeId), Change>,
}

impl ChangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, sign: Sign, node: NodeId) -> bool {
        self.entries.contains_key(&(sign, node))
    }

    pub fn get(&self, sign: Sign, node: NodeId) -> Option<&Change> {
        self.entries.get(&(sign, node))
    }

    /// Inserts; returns `true` if the change was new.
    pub fn insert(&mut self, change: Change) -> bool {
        let key = change.key();
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, change);
        true
    }

    /// Union in place; returns how many changes were new.
    pub fn merge<'a, I: IntoIterator<Item = &'a Change>>(&mut self, other: I) -> usize {
        other.into_iter().filter(|c| self.insert((*c).clone())).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Change> {
        self.entries.values()
    }

    pub fn keys(&self) -> BTreeSet<(Sign, NodeId)> {
        self.entries.keys().copied().collect()
    }

    pub fn is_subset(&self, other: &ChangeSet) -> bool {
        self.entries.keys().all(|k| other.entries.contains_key(k))
    }

    /// Nodes added and not removed.
    pub fn active(&self) -> BTreeSet<NodeId> {
        active(self.entries.keys().copied())
    }
}

impl FromIterator<Change> for ChangeSet {
    fn from_iter<I: IntoIterator<Item = Change>>(iter: I) -> Self {
        let mut set = ChangeSet::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

/// `{s : (+, s) present and (-, s) absent}`.
pub fn active<I: IntoIterator<Item = (Sign, NodeId)>>(changes: I) -> BTreeSet<NodeId> {
    let mut plus = BTreeSet::new();
    let mut minus = BTreeSet::new();
    for (sign, node) in changes {
        match sign {
            Sign::Plus => plus.insert(node),
            Sign::Minus => minus.insert(node),
        };
    }
    plus.difference(&minus).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("change for {0} does not carry a valid signature by its subject")]
    BadSignature(NodeId),
    #[error("depart of {node} would leave {remaining} active nodes, below the floor {floor}")]
    MembershipFloor { node: NodeId, remaining: usize, floor: usize },
    #[error("change {0:?} already recorded")]
    DuplicateChange((Sign, NodeId)),
    #[error("{0} departs without having joined")]
    NotMember(NodeId),
}

/// The registry contract. Implementations must serialize all calls.
pub trait MembershipOracle {
    fn add(&mut self, change: Change, verifier: &dyn Verifier) -> Result<(), RegistryError>;
    fn get(&self) -> ChangeSet;
}

/// In-memory, sequentially consistent registry.
#[derive(Debug, Clone)]
pub struct Registry {
    floor: usize,
    log: Vec<Change>,
    set: ChangeSet,
}

impl Registry {
    /// Installs `bootstrap` as the changes at the head of the log.
    pub fn new(floor: usize, bootstrap: Vec<Change>) -> Self {
        let mut set = ChangeSet::new();
        let mut log = Vec::new();
        for c in bootstrap {
            if set.insert(c.clone()) {
                log.push(c);
            }
        }
        Registry { floor, log, set }
    }

    pub fn floor(&self) -> usize {
        self.floor
    }

    pub fn log(&self) -> &[Change] {
        &self.log
    }

    pub fn active_count(&self) -> usize {
        self.set.active().len()
    }
}

impl MembershipOracle for Registry {
    fn add(&mut self, change: Change, verifier: &dyn Verifier) -> Result<(), RegistryError> {
        if !change.verify(verifier) {
            return Err(RegistryError::BadSignature(change.node));
        }
        if self.set.contains(change.sign, change.node) {
            return Err(RegistryError::DuplicateChange(change.key()));
        }
        if change.sign == Sign::Minus {
            if !self.set.contains(Sign::Plus, change.node) {
                return Err(RegistryError::NotMember(change.node));
            }
            let remaining = self.active_count() - 1;
            if remaining < self.floor {
                return Err(RegistryError::MembershipFloor { node: change.node, remaining, floor: self.floor });
            }
        }
        self.set.insert(change.clone());
        self.log.push(change);
        Ok(())
    }

    fn get(&self) -> ChangeSet {
        self.set.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::KeyDirectory;

    fn setup(nodes: u64, floor: usize) -> (KeyDirectory, Vec<Signer>, Registry) {
        let mut dir = KeyDirectory::new(1);
        let signers: Vec<Signer> = (0..nodes).map(|i| dir.register(NodeId(i)).unwrap()).collect();
        let boot = signers.iter().take(floor).map(|s| Change::signed(Sign::Plus, s)).collect();
        (dir, signers, Registry::new(floor, boot))
    }

    #[test]
    fn add_then_get_contains_change() {
        let (dir, s, mut reg) = setup(4, 3);
        reg.add(Change::signed(Sign::Plus, &s[3]), &dir).unwrap();
        assert!(reg.get().contains(Sign::Plus, NodeId(3)));
        assert_eq!(reg.get().active().len(), 4);
    }

    #[test]
    fn bootstrap_only_before_any_add() {
        let (_, _, reg) = setup(4, 3);
        assert_eq!(reg.get().active(), (0..3).map(NodeId).collect());
    }

    #[test]
    fn floor_rejects_depart() {
        let (dir, s, mut reg) = setup(4, 3);
        let err = reg.add(Change::signed(Sign::Minus, &s[0]), &dir).unwrap_err();
        assert!(matches!(err, RegistryError::MembershipFloor { remaining: 2, floor: 3, .. }));
        reg.add(Change::signed(Sign::Plus, &s[3]), &dir).unwrap();
        reg.add(Change::signed(Sign::Minus, &s[0]), &dir).unwrap();
        assert_eq!(reg.get().active(), (1..4).map(NodeId).collect());
    }

    #[test]
    fn forged_and_duplicate_changes() {
        let (dir, s, mut reg) = setup(4, 3);
        let mut forged = Change::signed(Sign::Plus, &s[1]);
        forged.node = NodeId(3);
        assert_eq!(reg.add(forged, &dir), Err(RegistryError::BadSignature(NodeId(3))));
        assert_eq!(
            reg.add(Change::signed(Sign::Plus, &s[0]), &dir),
            Err(RegistryError::DuplicateChange((Sign::Plus, NodeId(0))))
        );
        assert_eq!(reg.add(Change::signed(Sign::Minus, &s[3]), &dir), Err(RegistryError::NotMember(NodeId(3))));
    }

    #[test]
    fn active_formula() {
        let keys = [(Sign::Plus, NodeId(1)), (Sign::Plus, NodeId(2)), (Sign::Minus, NodeId(1))];
        assert_eq!(active(keys), [NodeId(2)].into());
    }

    #[test]
    fn sequential_gets_are_monotone() {
        let (dir, s, mut reg) = setup(6, 3);
        let mut prev = reg.get();
        for signer in &s[3..] {
            reg.add(Change::signed(Sign::Plus, signer), &dir).unwrap();
            let next = reg.get();
            assert!(prev.is_subset(&next));
            prev = next;
        }
    }
}
