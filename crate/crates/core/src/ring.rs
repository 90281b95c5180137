//! Consistent-hashing placement on a ring of `2^ring_bits` positions.
//!
//! Distance is measured clockwise, `(b - a) mod 2^ring_bits`. An object lives
//! on the `n` members closest clockwise from its hash (its successors); a
//! node's neighborhood is its `n` successors and `n` predecessors. Members
//! sharing a ring position are ordered by [`NodeId`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::identity::{NodeId, RingId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RingError {
    #[error("need {needed} nodes but only {available} are available")]
    InsufficientNodes { needed: usize, available: usize },
}

/// Clockwise distance from `a` to `b` on a ring of `2^ring_bits` positions.
pub fn distance(a: &RingId, b: &RingId, ring_bits: u32) -> RingId {
    b.wrapping_sub(a).masked(ring_bits)
}

/// Ring shape plus the coded replication factor `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub ring_bits: u32,
    pub crf_n: usize,
}

impl Placement {
    pub fn new(ring_bits: u32, crf_n: usize) -> Self {
        assert!(crf_n >= 1, "coded replication factor must be positive");
        Placement { ring_bits, crf_n }
    }

    pub fn index<'a, I: IntoIterator<Item = &'a NodeId>>(&self, members: I) -> RingIndex {
        RingIndex::new(self.ring_bits, members.into_iter().map(|&m| (m.ring_id(self.ring_bits), m)))
    }

    /// Hosts of a hashed target: the `n` closest successors.
    pub fn successors(&self, target: &RingId, members: &BTreeSet<NodeId>) -> Result<Vec<NodeId>, RingError> {
        self.index(members).successors(target, self.crf_n)
    }

    pub fn predecessors(&self, members: &BTreeSet<NodeId>, target: &RingId) -> Result<Vec<NodeId>, RingError> {
        self.index(members).predecessors(target, self.crf_n)
    }

    /// Join/depart neighborhood of `f` within `members`.
    pub fn neighbors(&self, f: NodeId, members: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let others: Vec<NodeId> = members.iter().copied().filter(|&m| m != f).collect();
        self.index(&others).neighbors(&f.ring_id(self.ring_bits), self.crf_n)
    }
}

/// Members sorted by ring position, for repeated placement queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingIndex {
    ring_bits: u32,
    points: Vec<(RingId, NodeId)>,
}

impl RingIndex {
    pub fn new<I: IntoIterator<Item = (RingId, NodeId)>>(ring_bits: u32, points: I) -> Self {
        let mut points: Vec<_> = points.into_iter().collect();
        points.sort();
        points.dedup();
        RingIndex { ring_bits, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check(&self, n: usize) -> Result<(), RingError> {
        if self.points.len() < n {
            return Err(RingError::InsufficientNodes { needed: n, available: self.points.len() });
        }
        Ok(())
    }

    /// The `n` members at the smallest clockwise distance from `target`,
    /// nearest first.
    pub fn successors(&self, target: &RingId, n: usize) -> Result<Vec<NodeId>, RingError> {
        self.check(n)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let len = self.points.len();
        let start = self.points.partition_point(|(pos, _)| pos < target);
        Ok((0..n).map(|i| self.points[(start + i) % len].1).collect())
    }

    /// The `n` members with the smallest clockwise distance to `target`,
    /// nearest first.
    pub fn predecessors(&self, target: &RingId, n: usize) -> Result<Vec<NodeId>, RingError> {
        self.check(n)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let len = self.points.len();
        // Walk counter-clockwise from the last point at or before `target`.
        // Within one position the smaller NodeId is nearer by convention, so
        // each equal-position group is emitted in ascending order.
        let end = self.points.partition_point(|(pos, _)| pos <= target);
        let mut out = Vec::with_capacity(n);
        let mut idx = (end + len - 1) % len;
        while out.len() < n {
            let pos = self.points[idx].0;
            let mut first = idx;
            let mut steps = 0;
            while steps + 1 < len && self.points[(first + len - 1) % len].0 == pos {
                first = (first + len - 1) % len;
                steps += 1;
            }
            for j in 0..=steps {
                if out.len() < n {
                    out.push(self.points[(first + j) % len].1);
                }
            }
            idx = (first + len - 1) % len;
        }
        Ok(out)
    }

    /// Union of up to `n` successors and `n` predecessors of `point`.
    pub fn neighbors(&self, point: &RingId, n: usize) -> BTreeSet<NodeId> {
        let m = n.min(self.points.len());
        let mut out: BTreeSet<NodeId> = self.successors(point, m).unwrap_or_default().into_iter().collect();
        out.extend(self.predecessors(point, m).unwrap_or_default());
        out
    }

    pub fn ring_bits(&self) -> u32 {
        self.ring_bits
    }
}
