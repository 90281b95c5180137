//! Offline atomicity checks over finished histories.
//!
//! Every write carries a unique tag, so per-object atomicity reduces to
//! conditions on tags:
//!
//! * **A1** if `π1` responds before `π2` is invoked, then `t1 < t2` when `π2`
//!   is a write and `t1 <= t2` when `π2` is a read;
//! * **A2** write tags are pairwise distinct;
//! * **A3** a read returns the initial tag with the initial value, or the tag
//!   and value of some write.
//!
//! A write that never responded takes effect only if some read returned its
//! tag; otherwise it is dropped from A1. Unfinished reads are ignored.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::identity::{NodeId, ObjectId};
use crate::protocol::Tag;
use crate::registry::Sign;
use crate::sim::{EventKind, OpKind, TraceEvent};

/// Digest standing for the initial value.
pub const INITIAL_DIGEST: u64 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub id: u64,
    pub kind: OpKind,
    pub obj: Option<ObjectId>,
    pub invoker: NodeId,
    pub invoke: u64,
    pub respond: Option<u64>,
    pub tag: Option<Tag>,
    pub digest: Option<u64>,
    pub failed: Option<String>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.respond.is_some() && self.failed.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    A1,
    A2,
    A3,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub obj: Option<ObjectId>,
    /// The operations involved; one for A3 reads without a source.
    pub ops: Vec<u64>,
    pub detail: String,
}

/// Machine-readable outcome of a check.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub objects: usize,
    pub checked_ops: usize,
    pub pruned_ops: usize,
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn report(&self) -> String {
        if self.ok() {
            return format!("ok: {} operations over {} objects, {} pruned", self.checked_ops, self.objects, self.pruned_ops);
        }
        let mut s = format!("{} violation(s)\n", self.violations.len());
        for v in &self.violations {
            s += &format!("  {:?} on {:?} ops {:?}: {}\n", v.property, v.obj, v.ops, v.detail);
        }
        s
    }
}

/// Checks A1–A3 on the reads and writes of a single object.
pub fn check(ops: &[OpRecord]) -> Result<(), Violation> {
    let obj = ops.first().and_then(|o| o.obj);
    let fail = |property, ops: Vec<u64>, detail: String| Err(Violation { property, obj, ops, detail });

    let writes: Vec<&OpRecord> = ops.iter().filter(|o| o.kind == OpKind::Write && o.tag.is_some()).collect();
    let reads: Vec<&OpRecord> = ops.iter().filter(|o| o.kind == OpKind::Read && o.is_complete()).collect();

    let mut by_tag: BTreeMap<Tag, &OpRecord> = BTreeMap::new();
    for w in &writes {
        let t = w.tag.unwrap();
        if t.is_initial() {
            return fail(Property::A2, vec![w.id], format!("write uses initial tag {t:?}"));
        }
        if let Some(prev) = by_tag.insert(t, w) {
            return fail(Property::A2, vec![prev.id, w.id], format!("two writes share tag {t:?}"));
        }
    }

    for r in &reads {
        let Some(t) = r.tag else {
            return fail(Property::A3, vec![r.id], "read responded without a tag".into());
        };
        if t.is_initial() {
            if r.digest != Some(INITIAL_DIGEST) {
                return fail(Property::A3, vec![r.id], "initial tag with a non-initial value".into());
            }
            continue;
        }
        match by_tag.get(&t) {
            None => return fail(Property::A3, vec![r.id], format!("tag {t:?} was never written")),
            Some(w) if w.digest != r.digest => {
                return fail(Property::A3, vec![w.id, r.id], format!("value under {t:?} differs from the write"))
            }
            Some(_) => {}
        }
    }

    // Completed operations by response time, with a running maximum tag.
    let mut done: Vec<(u64, Tag, u64)> = ops
        .iter()
        .filter(|o| o.is_complete() && matches!(o.kind, OpKind::Read | OpKind::Write))
        .filter_map(|o| Some((o.respond?, o.tag?, o.id)))
        .collect();
    done.sort();
    let mut prefix: Vec<(Tag, u64)> = Vec::with_capacity(done.len());
    for &(_, t, id) in &done {
        let best = match prefix.last() {
            Some(&(m, mid)) if m >= t => (m, mid),
            _ => (t, id),
        };
        prefix.push(best);
    }
    let observed: BTreeSet<Tag> = reads.iter().filter_map(|r| r.tag).collect();
    let effective = writes.iter().copied().filter(|w| w.is_complete() || observed.contains(&w.tag.unwrap()));
    for op in effective.chain(reads.iter().copied()) {
        let t2 = op.tag.unwrap();
        let before = done.partition_point(|&(resp, _, _)| resp < op.invoke);
        if before == 0 {
            continue;
        }
        let (m, mid) = prefix[before - 1];
        let bad = match op.kind {
            OpKind::Write => m >= t2,
            _ => m > t2,
        };
        if bad {
            return fail(
                Property::A1,
                vec![mid, op.id],
                format!("op {mid} finished with {m:?} before op {} started, which has {t2:?}", op.id),
            );
        }
    }
    Ok(())
}

/// Groups by object and checks each; joins and departs are skipped.
pub fn check_all(ops: &[OpRecord]) -> Verdict {
    let mut groups: BTreeMap<Option<ObjectId>, Vec<OpRecord>> = BTreeMap::new();
    let mut verdict = Verdict::default();
    for o in ops {
        if !matches!(o.kind, OpKind::Read | OpKind::Write) {
            continue;
        }
        let effective = o.is_complete() || (o.kind == OpKind::Write && o.tag.is_some());
        if effective {
            verdict.checked_ops += 1;
        } else {
            verdict.pruned_ops += 1;
        }
        groups.entry(o.obj).or_default().push(o.clone());
    }
    verdict.objects = groups.len();
    for g in groups.values() {
        if let Err(v) = check(g) {
            verdict.violations.push(v);
        }
    }
    verdict
}

/// Rebuilds operation records from trace events.
pub fn ops_from_trace(events: &[TraceEvent]) -> Vec<OpRecord> {
    let mut ops: BTreeMap<u64, OpRecord> = BTreeMap::new();
    for e in events {
        let Some(id) = e.op else { continue };
        match e.kind {
            EventKind::Invoke => {
                ops.insert(
                    id,
                    OpRecord {
                        id,
                        kind: e.op_kind.unwrap_or(OpKind::Read),
                        obj: e.obj.map(ObjectId),
                        invoker: e.node,
                        invoke: e.time,
                        respond: None,
                        tag: None,
                        digest: None,
                        failed: None,
                    },
                );
            }
            EventKind::Tagged => {
                if let Some(o) = ops.get_mut(&id) {
                    o.tag = e.tag;
                    o.digest = e.digest;
                }
            }
            EventKind::Respond => {
                if let Some(o) = ops.get_mut(&id) {
                    o.respond = Some(e.time);
                    o.tag = e.tag.or(o.tag);
                    o.digest = e.digest.or(o.digest);
                }
            }
            EventKind::Fail => {
                if let Some(o) = ops.get_mut(&id) {
                    o.respond = Some(e.time);
                    o.failed = Some(e.note.clone().unwrap_or_default());
                }
            }
            _ => {}
        }
    }
    ops.into_values().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleOp {
    Add { sign: Sign, subject: NodeId, accepted: bool },
    Get { snapshot: BTreeSet<(Sign, NodeId)> },
}

/// One registry access, in the order the registry served it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub seq: u64,
    pub time: u64,
    pub node: NodeId,
    pub op: OracleOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleProperty {
    TotalOrder,
    Validity,
    Inclusion,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleViolation {
    pub property: OracleProperty,
    pub seq: u64,
    pub detail: String,
}

/// Replays a registry log: accesses are totally ordered, each get returns
/// exactly the accepted adds before it, and snapshots never shrink.
pub fn check_oracle_log(log: &[OracleRecord]) -> Result<(), OracleViolation> {
    let mut applied: BTreeSet<(Sign, NodeId)> = BTreeSet::new();
    let mut last_get: Option<&BTreeSet<(Sign, NodeId)>> = None;
    let mut prev: Option<&OracleRecord> = None;
    for r in log {
        if let Some(p) = prev {
            if r.seq <= p.seq || r.time < p.time {
                return Err(OracleViolation {
                    property: OracleProperty::TotalOrder,
                    seq: r.seq,
                    detail: format!("access {} follows {} out of order", r.seq, p.seq),
                });
            }
        }
        prev = Some(r);
        match &r.op {
            OracleOp::Add { sign, subject, accepted } => {
                if *accepted && !applied.insert((*sign, *subject)) {
                    return Err(OracleViolation {
                        property: OracleProperty::Validity,
                        seq: r.seq,
                        detail: format!("change {sign:?} {subject} accepted twice"),
                    });
                }
            }
            OracleOp::Get { snapshot } => {
                if let Some(g) = last_get {
                    if !g.is_subset(snapshot) {
                        return Err(OracleViolation {
                            property: OracleProperty::Inclusion,
                            seq: r.seq,
                            detail: "snapshot lost changes seen earlier".into(),
                        });
                    }
                }
                if *snapshot != applied {
                    return Err(OracleViolation {
                        property: OracleProperty::Validity,
                        seq: r.seq,
                        detail: "snapshot differs from the accepted changes".into(),
                    });
                }
                last_get = Some(snapshot);
            }
        }
    }
    Ok(())
}
