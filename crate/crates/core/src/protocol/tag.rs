use std::fmt;

use serde::{Deserialize, Serialize};

use crate::identity::NodeId;

/// Logical version `⟨z, w⟩`: a counter and the writer that produced it.
///
/// Ordered by `z`, then by writer id.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Tag {
    pub z: u64,
    pub w: NodeId,
}

impl Tag {
    /// The tag of the initial, never-written value.
    pub const ZERO: Tag = Tag { z: 0, w: NodeId(0) };

    pub fn new(z: u64, w: NodeId) -> Tag {
        Tag { z, w }
    }

    pub fn is_initial(&self) -> bool {
        self.z == 0
    }

    /// The tag a writer `w` uses after discovering `self` as the maximum.
    pub fn successor(&self, w: NodeId) -> Tag {
        Tag { z: self.z + 1, w }
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{},{}⟩", self.z, self.w)
    }
}
