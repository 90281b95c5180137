use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::identity::NodeId;
use crate::protocol::Tag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Invoke,
    /// A write fixed its tag; later reads may return it even if the write
    /// never responds.
    Tagged,
    Respond,
    /// The operation ended with an error.
    Fail,
    Send,
    Deliver,
    /// Delivery to a crashed node.
    Drop,
    OracleGet,
    OracleAdd,
    Retry,
    Crash,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Read,
    Write,
    Join,
    Depart,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Logical time in microseconds.
    pub time: u64,
    pub kind: EventKind,
    pub node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_kind: Option<OpKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
    /// Value digest, or message request id for send/deliver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TraceEvent {
    pub fn new(time: u64, kind: EventKind, node: NodeId) -> Self {
        TraceEvent { time, kind, node, op: None, op_kind: None, obj: None, tag: None, digest: None, peer: None, bytes: None, note: None }
    }

    fn feed(&self, h: &mut Sha256) {
        h.update(self.time.to_be_bytes());
        h.update([self.kind as u8]);
        h.update(self.node.to_bytes());
        let opt = |h: &mut Sha256, v: Option<u64>| match v {
            Some(x) => {
                h.update([1]);
                h.update(x.to_be_bytes());
            }
            None => h.update([0]),
        };
        opt(h, self.op);
        opt(h, self.op_kind.map(|k| k as u64));
        opt(h, self.obj);
        opt(h, self.tag.map(|t| t.z));
        opt(h, self.tag.map(|t| t.w.0));
        opt(h, self.digest);
        opt(h, self.peer.map(|p| p.0));
        opt(h, self.bytes);
        if let Some(n) = &self.note {
            h.update(n.as_bytes());
        }
        h.update([0xff]);
    }
}

/// Event log with a running digest over every event, kept or not.
#[derive(Clone, Debug)]
pub struct Trace {
    events: Vec<TraceEvent>,
    hasher: Sha256,
    count: u64,
    keep_messages: bool,
}

impl Trace {
    pub fn new(keep_messages: bool) -> Self {
        Trace { events: Vec::new(), hasher: Sha256::new(), count: 0, keep_messages }
    }

    pub fn push(&mut self, e: TraceEvent) {
        e.feed(&mut self.hasher);
        self.count += 1;
        let message = matches!(e.kind, EventKind::Send | EventKind::Deliver | EventKind::Drop);
        if !message || self.keep_messages {
            self.events.push(e);
        }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Number of events hashed, including unkept message events.
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Hex SHA-256 over all events so far.
    pub fn digest(&self) -> String {
        let d = self.hasher.clone().finalize();
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(mut w: W, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TraceEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|err| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}
