//! Wire messages. Every reply from a member carries its view of membership
//! changes relevant to the object (empty in static deployments).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::identity::{NodeId, ObjectId};
use crate::registry::ChangeSet;

use super::entry::ListEntry;
use super::tag::Tag;

/// Request identifier, unique per run.
pub type Rid = u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Msg {
    QueryTag { obj: ObjectId, cluster: BTreeSet<NodeId> },
    QueryTagAck { tag: Tag, proof: Option<ListEntry>, ch: ChangeSet },
    QueryList { obj: ObjectId, tg: Tag, inclusive: bool, cluster: BTreeSet<NodeId> },
    /// `initial` is set when the sender still holds the initial value.
    QueryListAck { entries: Vec<ListEntry>, initial: bool, ch: ChangeSet },
    PutData { obj: ObjectId, entry: ListEntry, cluster: BTreeSet<NodeId> },
    PutAck { ch: ChangeSet },
    /// Reply from a node that has left: its view of the object's changes.
    Departed { ch: ChangeSet },
    FetchObjList { objs: BTreeSet<ObjectId> },
    FetchAck { objs: Vec<(ObjectId, Vec<ListEntry>)> },
    FinJoin,
    FinDepart,
    FinAck,
    Push { obj: ObjectId },
    PushAck { obj: ObjectId },
}

impl Msg {
    pub fn name(&self) -> &'static str {
        match self {
            Msg::QueryTag { .. } => "query-tag",
            Msg::QueryTagAck { .. } => "query-tag-ack",
            Msg::QueryList { .. } => "query-list",
            Msg::QueryListAck { .. } => "query-list-ack",
            Msg::PutData { .. } => "put-data",
            Msg::PutAck { .. } => "put-ack",
            Msg::Departed { .. } => "departed",
            Msg::FetchObjList { .. } => "fetch-obj-list",
            Msg::FetchAck { .. } => "fetch-ack",
            Msg::FinJoin => "fin-join",
            Msg::FinDepart => "fin-depart",
            Msg::FinAck => "fin-ack",
            Msg::Push { .. } => "push",
            Msg::PushAck { .. } => "push-ack",
        }
    }

    pub fn changes(&self) -> Option<&ChangeSet> {
        match self {
            Msg::QueryTagAck { ch, .. } | Msg::QueryListAck { ch, .. } | Msg::PutAck { ch } | Msg::Departed { ch } => {
                Some(ch)
            }
            _ => None,
        }
    }

    /// Bytes in the canonical encoding, with coded payload octets weighted
    /// by `payload_scale`.
    pub fn wire_size(&self, payload_scale: u64) -> u64 {
        const HDR: u64 = 8;
        const ID: u64 = 8;
        const CHANGE: u64 = 1 + ID + 40;
        let set = |s: &BTreeSet<NodeId>| 4 + s.len() as u64 * ID;
        let ch = |c: &ChangeSet| 4 + c.len() as u64 * CHANGE;
        let entries = |es: &[ListEntry]| 4 + es.iter().map(|e| e.wire_len(payload_scale)).sum::<u64>();
        HDR + match self {
            Msg::QueryTag { cluster, .. } => ID + set(cluster),
            Msg::QueryTagAck { proof, ch: c, .. } => 16 + proof.as_ref().map_or(1, |e| 1 + e.wire_len(payload_scale)) + ch(c),
            Msg::QueryList { cluster, .. } => ID + 16 + 1 + set(cluster),
            Msg::QueryListAck { entries: es, ch: c, .. } => 1 + entries(es) + ch(c),
            Msg::PutData { entry, cluster, .. } => ID + entry.wire_len(payload_scale) + set(cluster),
            Msg::PutAck { ch: c } | Msg::Departed { ch: c } => ch(c),
            Msg::FetchObjList { objs } => 4 + objs.len() as u64 * ID,
            Msg::FetchAck { objs } => 4 + objs.iter().map(|(_, es)| ID + entries(es)).sum::<u64>(),
            Msg::FinJoin | Msg::FinDepart | Msg::FinAck => 0,
            Msg::Push { .. } | Msg::PushAck { .. } => ID,
        }
    }
}

/// A message with its request id; replies reuse the id of their request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub rid: Rid,
    pub reply: bool,
    pub msg: Msg,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodedElement;

    #[test]
    fn payload_dominates_wire_size() {
        let entry = ListEntry {
            tag: Tag::new(1, NodeId(1)),
            element: CodedElement { coeffs: vec![1, 2, 3], payload: vec![0; 1000] },
            sig: None,
            cert: None,
        };
        let m = Msg::PutData { obj: ObjectId(1), entry, cluster: BTreeSet::new() };
        let one = m.wire_size(1);
        let big = m.wire_size(1000);
        assert!(one > 1000 && one < 1100);
        assert!((1_000_000..1_000_100).contains(&big));
        assert_eq!(Msg::FinAck.wire_size(1), 8);
    }
}
