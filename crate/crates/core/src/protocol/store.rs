//! Per-object server state: a bounded list of signed entries plus the
//! node's own last known ⟨tg, v⟩.

use std::collections::BTreeMap;

use crate::identity::Verifier;

use super::entry::{ListEntry, Signing};
use super::tag::Tag;

/// Result of offering an entry to a store. The sender is acknowledged in
/// every case.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    Duplicate,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct ObjectStore {
    list: BTreeMap<Tag, ListEntry>,
    delta: usize,
    /// Whether the implicit initial entry is still in the list. It takes a
    /// slot until `δ + 1` real entries push it out.
    pub initial: bool,
    /// Last tag this node wrote or decoded.
    pub tg: Tag,
    /// Value for `tg`; `None` stands for the initial value.
    pub v: Option<Vec<u8>>,
}

impl ObjectStore {
    pub fn new(delta: usize) -> Self {
        ObjectStore { list: BTreeMap::new(), delta, initial: true, tg: Tag::ZERO, v: None }
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn max_entry(&self) -> Option<&ListEntry> {
        self.list.values().next_back()
    }

    pub fn min_tag(&self) -> Option<Tag> {
        self.list.keys().next().copied()
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.list.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ListEntry> {
        self.list.values()
    }

    pub fn get(&self, tag: &Tag) -> Option<&ListEntry> {
        self.list.get(tag)
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    /// Coefficient and payload octets held for this object.
    pub fn stored_bytes(&self) -> usize {
        self.list.values().map(ListEntry::stored_len).sum()
    }

    pub fn stored_bytes_scaled(&self, payload_scale: u64) -> u64 {
        self.list.values().map(|e| e.stored_len_scaled(payload_scale)).sum()
    }

    /// The max-tag entry, or the initial tag when nothing is stored.
    pub fn on_query_tag(&self) -> (Tag, Option<ListEntry>) {
        match self.max_entry() {
            Some(e) => (e.tag, Some(e.clone())),
            None => (Tag::ZERO, None),
        }
    }

    /// Whether a query-list for `t` is answered with the initial entry too.
    pub fn answers_initial(&self, t: Tag, inclusive: bool) -> bool {
        self.initial && inclusive && t == Tag::ZERO
    }

    /// Entries with tag `> t` (or `>= t` when `inclusive`).
    pub fn on_query_list(&self, t: Tag, inclusive: bool) -> Vec<ListEntry> {
        self.list
            .values()
            .filter(|e| if inclusive { e.tag >= t } else { e.tag > t })
            .cloned()
            .collect()
    }

    pub fn on_put_data(&mut self, entry: ListEntry, verifier: &dyn Verifier, signing: Signing) -> PutOutcome {
        if !entry.verify(verifier, signing) {
            return PutOutcome::Rejected;
        }
        if self.insert_verified(entry) {
            PutOutcome::Inserted
        } else {
            PutOutcome::Duplicate
        }
    }

    /// Inserts an already verified entry if its tag is new, then evicts the
    /// smallest tags beyond `δ + 1`.
    pub fn insert_verified(&mut self, entry: ListEntry) -> bool {
        if self.list.contains_key(&entry.tag) {
            return false;
        }
        self.list.insert(entry.tag, entry);
        if self.initial && self.list.len() > self.delta {
            self.initial = false;
        }
        while self.list.len() > self.delta + 1 {
            self.list.pop_first();
        }
        true
    }

    /// Raises the local ⟨tg, v⟩; older pairs are ignored.
    pub fn record(&mut self, tag: Tag, v: Option<Vec<u8>>) {
        if tag > self.tg {
            self.tg = tag;
            self.v = v;
        }
    }
}
