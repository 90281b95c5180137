//! The static protocol: tags, signed entries, bounded per-object stores,
//! and the client-side logic of get-tag, get-data and put-data.

pub mod dap;
pub mod entry;
pub mod messages;
pub mod quorum;
pub mod store;
pub mod tag;

pub use dap::{decide_get_data, prepare_put_data, verified_tag, Candidates, GetDataOutcome};
pub use entry::{entry_message, recode_entries, Certificate, ListEntry, Signing};
pub use messages::{Envelope, Msg, Rid};
pub use quorum::{byz_budget, quorum_size, QuorumRule};
pub use store::{ObjectStore, PutOutcome};
pub use tag::Tag;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("cluster of {cluster_size} cannot serve decode threshold {k}")]
    InvalidCluster { cluster_size: usize, k: usize },
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Ring(#[from] crate::ring::RingError),
    #[error(transparent)]
    Registry(#[from] crate::registry::RegistryError),
    #[error("operation on {0} gave up after {1} rounds")]
    GaveUp(String, usize),
    #[error("node is not in a state to run this operation: {0}")]
    BadState(&'static str),
}
