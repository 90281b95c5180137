//! Node and object identifiers, ring hashing, and the signing scheme that
//! protects stored ⟨tag, coded element⟩ pairs.
//!
//! Signatures are keyed MACs (HMAC-SHA256). Keys live in a [`KeyDirectory`]
//! owned by the harness; a node only ever receives the [`Signer`] for its own
//! identity, so no state machine can produce a valid signature under another
//! node's name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identifier of a participant. Compared as its 8-octet big-endian encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl NodeId {
    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    /// Position of this node on a ring of `ring_bits` bits.
    pub fn ring_id(self, ring_bits: u32) -> RingId {
        let mut buf = [0u8; 13];
        buf[..5].copy_from_slice(b"node:");
        buf[5..].copy_from_slice(&self.to_bytes());
        ring_hash(&buf, ring_bits)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Identifier of a shared read/write object.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u64);

impl ObjectId {
    pub fn ring_id(self, ring_bits: u32) -> RingId {
        let mut buf = [0u8; 12];
        buf[..4].copy_from_slice(b"obj:");
        buf[4..].copy_from_slice(&self.0.to_be_bytes());
        ring_hash(&buf, ring_bits)
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// An unsigned 256-bit ring coordinate, stored big-endian.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct RingId(pub [u8; 32]);

impl RingId {
    pub const ZERO: RingId = RingId([0; 32]);

    pub fn from_u64(v: u64) -> RingId {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&v.to_be_bytes());
        RingId(b)
    }

    /// Low 64 bits, mostly for tests and display on small rings.
    pub fn low_u64(&self) -> u64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.0[24..]);
        u64::from_be_bytes(b)
    }

    /// `(self - rhs) mod 2^256`.
    pub fn wrapping_sub(&self, rhs: &RingId) -> RingId {
        let mut out = [0u8; 32];
        let mut borrow = 0i16;
        for i in (0..32).rev() {
            let mut d = self.0[i] as i16 - rhs.0[i] as i16 - borrow;
            borrow = if d < 0 {
                d += 256;
                1
            } else {
                0
            };
            out[i] = d as u8;
        }
        RingId(out)
    }

    /// Keeps the low `bits` bits.
    pub fn masked(&self, bits: u32) -> RingId {
        let mut out = self.0;
        let clear = 256 - bits as usize;
        for (i, byte) in out.iter_mut().enumerate() {
            let lo = i * 8;
            if lo + 8 <= clear {
                *byte = 0;
            } else if lo < clear {
                *byte &= 0xFF >> (clear - lo);
            }
        }
        RingId(out)
    }

    fn shr(&self, shift: usize) -> RingId {
        if shift >= 256 {
            return RingId::ZERO;
        }
        let (bytes, bits) = (shift / 8, shift % 8);
        let mut out = [0u8; 32];
        for i in (bytes..32).rev() {
            let src = i - bytes;
            let mut v = self.0[src] >> bits;
            if bits > 0 && src > 0 {
                v |= self.0[src - 1] << (8 - bits);
            }
            out[i] = v;
        }
        RingId(out)
    }
}

impl fmt::Debug for RingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0[..24].iter().all(|&b| b == 0) {
            write!(f, "RingId({})", self.low_u64())
        } else {
            write!(f, "RingId(0x")?;
            for b in &self.0 {
                write!(f, "{b:02x}")?;
            }
            write!(f, ")")
        }
    }
}

/// SHA-256 of `id`, keeping the top `ring_bits` bits as an integer in
/// `[0, 2^ring_bits)`.
pub fn ring_hash(id: &[u8], ring_bits: u32) -> RingId {
    assert!((4..=256).contains(&ring_bits), "ring_bits must be in [4, 256], got {ring_bits}");
    let digest = Sha256::digest(id);
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    RingId(bytes).shr(256 - ring_bits as usize)
}

/// Short content digest used in traces.
pub fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_be_bytes(b)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("no key registered for {0}")]
    UnknownSigner(NodeId),
    #[error("{requester} may not obtain the key of {target}")]
    AccessDenied { requester: NodeId, target: NodeId },
    #[error("{0} is already registered")]
    AlreadyRegistered(NodeId),
}

/// A MAC tag together with the identity it claims.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub signer: NodeId,
    pub bytes: [u8; 32],
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sig({}, {:02x}{:02x}..)", self.signer, self.bytes[0], self.bytes[1])
    }
}

type HmacSha256 = Hmac<Sha256>;

fn mac(key: &[u8; 32], msg: &[u8]) -> [u8; 32] {
    let mut m = <HmacSha256 as KeyInit>::new_from_slice(key).expect("any key length");
    m.update(msg);
    let out = m.finalize().into_bytes();
    let mut b = [0u8; 32];
    b.copy_from_slice(&out);
    b
}

/// The signing capability of exactly one node.
#[derive(Clone)]
pub struct Signer {
    node: NodeId,
    key: [u8; 32],
}

impl Signer {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature { signer: self.node, bytes: mac(&self.key, msg) }
    }
}

impl fmt::Debug for Signer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signer({})", self.node)
    }
}

/// Verification side of a signature scheme.
pub trait Verifier {
    /// `true` iff `sig` was produced by `node` over exactly `msg`.
    fn verify(&self, node: NodeId, msg: &[u8], sig: &Signature) -> bool;

    /// Whether `node` may originate values (a reader or writer, as opposed
    /// to a storage member).
    fn is_invoker(&self, node: NodeId) -> bool;
}

/// Trusted registry of per-node keys.
#[derive(Clone)]
pub struct KeyDirectory {
    rng: ChaCha8Rng,
    keys: BTreeMap<NodeId, [u8; 32]>,
    invokers: BTreeSet<NodeId>,
}

impl KeyDirectory {
    pub fn new(seed: u64) -> Self {
        KeyDirectory { rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_7973), keys: BTreeMap::new(), invokers: BTreeSet::new() }
    }

    /// Issues a fresh key for `node` and returns its signer.
    pub fn register(&mut self, node: NodeId) -> Result<Signer, IdentityError> {
        if self.keys.contains_key(&node) {
            return Err(IdentityError::AlreadyRegistered(node));
        }
        let key: [u8; 32] = self.rng.gen();
        self.keys.insert(node, key);
        Ok(Signer { node, key })
    }

    /// Registers a reader/writer identity.
    pub fn register_invoker(&mut self, node: NodeId) -> Result<Signer, IdentityError> {
        let s = self.register(node)?;
        self.invokers.insert(node);
        Ok(s)
    }

    pub fn is_registered(&self, node: NodeId) -> bool {
        self.keys.contains_key(&node)
    }

    /// Hands out `target`'s signer only to `target` itself.
    pub fn signer_for(&self, requester: NodeId, target: NodeId) -> Result<Signer, IdentityError> {
        if requester != target {
            return Err(IdentityError::AccessDenied { requester, target });
        }
        let key = self.keys.get(&target).ok_or(IdentityError::UnknownSigner(target))?;
        Ok(Signer { node: target, key: *key })
    }

    pub fn sign(&self, node: NodeId, msg: &[u8]) -> Result<Signature, IdentityError> {
        let key = self.keys.get(&node).ok_or(IdentityError::UnknownSigner(node))?;
        Ok(Signature { signer: node, bytes: mac(key, msg) })
    }
}

impl Verifier for KeyDirectory {
    fn verify(&self, node: NodeId, msg: &[u8], sig: &Signature) -> bool {
        if sig.signer != node {
            return false;
        }
        match self.keys.get(&node) {
            Some(key) => mac(key, msg) == sig.bytes,
            None => false,
        }
    }

    fn is_invoker(&self, node: NodeId) -> bool {
        self.invokers.contains(&node)
    }
}

/// Accepts everything; used by baselines that run without signatures.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl Verifier for AcceptAll {
    fn verify(&self, _node: NodeId, _msg: &[u8], _sig: &Signature) -> bool {
        true
    }

    fn is_invoker(&self, _node: NodeId) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ring_hash_is_deterministic_and_bounded() {
        assert_eq!(ring_hash(b"x", 256), ring_hash(b"x", 256));
        for i in 0..200u32 {
            let r = ring_hash(&i.to_be_bytes(), 5);
            assert!(r.low_u64() < 32);
            assert!(r.0[..31].iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn ring_hash_keeps_top_bits() {
        let full = ring_hash(b"abc", 256);
        let top8 = ring_hash(b"abc", 8);
        assert_eq!(top8.low_u64(), full.0[0] as u64);
    }

    #[test]
    fn no_collisions_among_ten_thousand_inputs() {
        let mut seen = HashSet::new();
        for i in 0..10_000u32 {
            assert!(seen.insert(ring_hash(&i.to_le_bytes(), 256)));
        }
        let one_octet: HashSet<_> = (0..=255u8).map(|b| ring_hash(&[b], 256)).collect();
        assert_eq!(one_octet.len(), 256);
    }

    #[test]
    fn wrapping_sub_and_mask() {
        let a = RingId::from_u64(30);
        let b = RingId::from_u64(3);
        assert_eq!(b.wrapping_sub(&a).masked(5).low_u64(), 5);
        assert_eq!(a.wrapping_sub(&b).masked(5).low_u64(), 27);
        assert_eq!(RingId::from_u64(0).wrapping_sub(&RingId::from_u64(1)), RingId([0xFF; 32]));
        assert_eq!(RingId([0xFF; 32]).masked(12), RingId::from_u64(0xFFF));
    }

    #[test]
    fn sign_verify_roundtrip_and_mismatch() {
        let mut dir = KeyDirectory::new(3);
        let f = dir.register(NodeId(1)).unwrap();
        let g = dir.register(NodeId(2)).unwrap();
        let sig = f.sign(b"m");
        assert!(dir.verify(NodeId(1), b"m", &sig));
        assert!(!dir.verify(NodeId(1), b"m'", &sig));
        assert!(!dir.verify(NodeId(2), b"m", &sig));
        let mut relabelled = sig.clone();
        relabelled.signer = NodeId(2);
        assert!(!dir.verify(NodeId(2), b"m", &relabelled));
        assert!(dir.verify(NodeId(2), b"m", &g.sign(b"m")));
    }

    #[test]
    fn unknown_signer_and_access_policy() {
        let mut dir = KeyDirectory::new(0);
        dir.register(NodeId(1)).unwrap();
        assert_eq!(dir.sign(NodeId(9), b"x"), Err(IdentityError::UnknownSigner(NodeId(9))));
        assert!(matches!(dir.signer_for(NodeId(1), NodeId(2)), Err(IdentityError::AccessDenied { .. })));
        assert!(dir.signer_for(NodeId(1), NodeId(1)).is_ok());
        assert_eq!(dir.register(NodeId(1)).unwrap_err(), IdentityError::AlreadyRegistered(NodeId(1)));
    }
}
