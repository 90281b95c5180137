//! GF(256) arithmetic and the RLNC codec used for every stored value.

pub mod gf256;
pub mod rlnc;

pub use gf256::Gf256;
pub use rlnc::{decode, encode, encode_with_coeffs, rank, recode, recode_with, CodedElement, EncodingParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Not enough independent rows yet; more elements may fix it.
    #[error("rank {rank} below decoding threshold {k}")]
    RankDeficient { rank: usize, k: usize },
}
