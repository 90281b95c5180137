//! Client-side decisions of the data access primitives, separated from
//! messaging so they can be tested on hand-built replies.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::codec::{self, CodecError, CodedElement, EncodingParams};
use crate::identity::{NodeId, Signer, Verifier};

use super::entry::{ListEntry, Signing};
use super::tag::Tag;

/// The tag a query-tag reply may be trusted for, if any.
///
/// With signing on, a non-initial tag must come with a verifying entry that
/// carries it.
pub fn verified_tag(tag: Tag, proof: Option<&ListEntry>, verifier: &dyn Verifier, signing: Signing) -> Option<Tag> {
    if signing == Signing::Disabled || tag == Tag::ZERO {
        return Some(tag);
    }
    match proof {
        Some(e) if e.tag == tag && e.verify(verifier, signing) => Some(tag),
        _ => None,
    }
}

/// Verified entries grouped by tag, at most one per (sender, tag).
#[derive(Clone, Debug, Default)]
pub struct Candidates {
    by_tag: BTreeMap<Tag, BTreeMap<NodeId, ListEntry>>,
    /// Senders still holding the initial value.
    initial: BTreeSet<NodeId>,
}

impl Candidates {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the verifying entries of one reply; returns how many were kept.
    pub fn add(&mut self, sender: NodeId, entries: &[ListEntry], verifier: &dyn Verifier, signing: Signing) -> usize {
        let mut kept = 0;
        for e in entries {
            let slot = self.by_tag.entry(e.tag).or_default();
            if slot.contains_key(&sender) || !e.verify(verifier, signing) {
                continue;
            }
            slot.insert(sender, e.clone());
            kept += 1;
        }
        self.by_tag.retain(|_, s| !s.is_empty());
        kept
    }

    pub fn add_initial(&mut self, sender: NodeId) {
        self.initial.insert(sender);
    }

    /// Senders holding `tag`; for the initial tag, those that said so.
    pub fn support(&self, tag: &Tag) -> usize {
        if *tag == Tag::ZERO {
            return self.initial.len();
        }
        self.by_tag.get(tag).map_or(0, BTreeMap::len)
    }

    pub fn max_tag(&self) -> Option<Tag> {
        self.by_tag.keys().next_back().copied()
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.by_tag.keys().copied()
    }

    pub fn entries(&self, tag: &Tag) -> Vec<ListEntry> {
        self.by_tag.get(tag).map(|m| m.values().cloned().collect()).unwrap_or_default()
    }

    pub fn elements(&self, tag: &Tag) -> Vec<CodedElement> {
        self.by_tag.get(tag).map(|m| m.values().map(|e| e.element.clone()).collect()).unwrap_or_default()
    }

    /// Tags held by at least `k` senders whose elements reach rank `k`.
    pub fn decodable_tags(&self, k: usize) -> BTreeSet<Tag> {
        self.by_tag
            .keys()
            .filter(|t| self.support(t) >= k && codec::rank(&self.elements(t)).is_ok_and(|r| r == k))
            .copied()
            .collect()
    }

    /// Decodes the largest decodable tag.
    pub fn decode_max(&self, k: usize) -> Option<(Tag, Vec<u8>)> {
        for tag in self.by_tag.keys().rev() {
            if self.support(tag) < k {
                continue;
            }
            match codec::decode(&self.elements(tag), k) {
                Ok(v) => return Some((*tag, v)),
                Err(CodecError::RankDeficient { .. }) | Err(CodecError::InvalidInput(_)) => continue,
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GetDataOutcome {
    Decoded { tag: Tag, value: Vec<u8> },
    /// Nothing newer than the caller's pair was seen.
    Local,
    /// Newer verified entries exist but none can be decoded yet.
    Undecodable { newest: Tag },
}

/// Chooses the get-data result given the caller's current tag.
pub fn decide_get_data(c: &Candidates, k: usize, local: Tag) -> GetDataOutcome {
    if let Some((tag, value)) = c.decode_max(k) {
        if tag >= local {
            return GetDataOutcome::Decoded { tag, value };
        }
    }
    if local == Tag::ZERO && c.support(&Tag::ZERO) >= k {
        return GetDataOutcome::Local;
    }
    match c.max_tag() {
        Some(newest) if newest > local => GetDataOutcome::Undecodable { newest },
        _ => GetDataOutcome::Local,
    }
}

/// Encodes `value` into one signed entry per member, assigned in ascending
/// member order.
pub fn prepare_put_data<R: Rng + ?Sized>(
    tag: Tag,
    value: &[u8],
    members: &BTreeSet<NodeId>,
    k: usize,
    signer: &Signer,
    signing: Signing,
    rng: &mut R,
) -> Result<Vec<(NodeId, ListEntry)>, CodecError> {
    let params = EncodingParams::new(members.len(), k)?;
    let elements = codec::encode(value, params, rng)?;
    Ok(members
        .iter()
        .zip(elements)
        .map(|(&m, el)| (m, ListEntry::signed(tag, el, signer, signing)))
        .collect())
}
