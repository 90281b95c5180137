use serde::{Deserialize, Serialize};

use super::ProtocolError;

/// `⌈(2c + k) / 3⌉`, the Byzantine quorum for a cluster of `c` members.
pub fn quorum_size(cluster_size: usize, k: usize) -> Result<usize, ProtocolError> {
    if cluster_size < k || k == 0 {
        return Err(ProtocolError::InvalidCluster { cluster_size, k });
    }
    Ok((2 * cluster_size + k).div_ceil(3))
}

/// Largest `b` with `b < (c - k) / 3`.
pub fn byz_budget(cluster_size: usize, k: usize) -> usize {
    if cluster_size <= k {
        return 0;
    }
    (cluster_size - k - 1) / 3
}

/// How many replies a client waits for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuorumRule {
    /// `⌈(2|C| + k) / 3⌉`.
    Byzantine,
    /// `⌊|C| / 2⌋ + 1`, crash faults only.
    Majority,
}

impl QuorumRule {
    pub fn size(self, cluster_size: usize, k: usize) -> Result<usize, ProtocolError> {
        match self {
            QuorumRule::Byzantine => quorum_size(cluster_size, k),
            QuorumRule::Majority if cluster_size == 0 => Err(ProtocolError::InvalidCluster { cluster_size, k }),
            QuorumRule::Majority => Ok(cluster_size / 2 + 1),
        }
    }

    /// Replies to await for a join/depart step that needs `beta` good answers.
    pub fn with_threshold(self, cluster_size: usize, beta: usize) -> usize {
        match self {
            QuorumRule::Byzantine => (2 * cluster_size + beta).div_ceil(3),
            QuorumRule::Majority => cluster_size / 2 + 1,
        }
        .min(cluster_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_examples() {
        assert_eq!(quorum_size(13, 3), Ok(10));
        assert_eq!(quorum_size(5, 3), Ok(5));
        assert_eq!(quorum_size(4, 1), Ok(3));
        assert!(quorum_size(2, 3).is_err());
    }

    #[test]
    fn budget_examples() {
        assert_eq!(byz_budget(13, 3), 3);
        assert_eq!(byz_budget(5, 3), 0);
        assert_eq!(byz_budget(3, 1), 0);
        assert_eq!(byz_budget(7, 3), 1);
        assert_eq!(byz_budget(10, 3), 2);
    }

    #[test]
    fn majority() {
        assert_eq!(QuorumRule::Majority.size(13, 1), Ok(7));
        assert_eq!(QuorumRule::Majority.size(5, 1), Ok(3));
        assert_eq!(QuorumRule::Byzantine.with_threshold(10, 1), 7);
    }
}
