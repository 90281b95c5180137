//! Random linear network coding over GF(256).
//!
//! A value is framed as `len (8 octets, big-endian) ‖ value ‖ zero padding`
//! so that the frame splits into `k` equal fragments. Each coded element is
//! one random linear combination of those fragments together with the
//! coefficient row that produced it. Any `k` elements with linearly
//! independent rows recover the value; recoding mixes existing elements
//! without decoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gf256::{self, Gf256};
use super::CodecError;

const LEN_PREFIX: usize = 8;

/// Code dimensions: `n` elements are produced, any `k` independent ones decode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingParams {
    n: usize,
    k: usize,
}

impl EncodingParams {
    pub fn new(n: usize, k: usize) -> Result<Self, CodecError> {
        if k == 0 || n < k {
            return Err(CodecError::InvalidInput(format!(
                "encoding params require n >= k >= 1, got n={n} k={k}"
            )));
        }
        Ok(EncodingParams { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Payload octets per element for a value of `value_len` octets.
    pub fn fragment_len(&self, value_len: usize) -> usize {
        (LEN_PREFIX + value_len).div_ceil(self.k)
    }
}

/// A coefficient row and the matching combination of value fragments.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedElement {
    /// GF(256) coefficients, one per source fragment.
    pub coeffs: Vec<u8>,
    /// GF(256) symbols, the same combination applied fragment-wise.
    pub payload: Vec<u8>,
}

impl std::fmt::Debug for CodedElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodedElement")
            .field("coeffs", &self.coeffs)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl CodedElement {
    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient plus payload octets.
    pub fn stored_len(&self) -> usize {
        self.coeffs.len() + self.payload.len()
    }

    /// `self * c`, componentwise.
    pub fn scaled(&self, c: Gf256) -> CodedElement {
        let mut out = self.clone();
        gf256::scale_in_place(&mut out.coeffs, c.0);
        gf256::scale_in_place(&mut out.payload, c.0);
        out
    }
}

fn frame(value: &[u8], k: usize) -> Vec<u8> {
    let total = (LEN_PREFIX + value.len()).div_ceil(k) * k;
    let mut framed = Vec::with_capacity(total);
    framed.extend_from_slice(&(value.len() as u64).to_be_bytes());
    framed.extend_from_slice(value);
    framed.resize(total, 0);
    framed
}

fn unframe(mut framed: Vec<u8>) -> Result<Vec<u8>, CodecError> {
    if framed.len() < LEN_PREFIX {
        return Err(CodecError::InvalidInput("frame shorter than length prefix".into()));
    }
    let mut prefix = [0u8; LEN_PREFIX];
    prefix.copy_from_slice(&framed[..LEN_PREFIX]);
    let len = u64::from_be_bytes(prefix) as usize;
    if len > framed.len() - LEN_PREFIX {
        return Err(CodecError::InvalidInput(format!(
            "length prefix {len} exceeds frame of {} octets",
            framed.len()
        )));
    }
    framed.drain(..LEN_PREFIX);
    framed.truncate(len);
    Ok(framed)
}

/// Combines the framed value's fragments with an explicit coefficient row.
pub fn encode_with_coeffs(value: &[u8], coeffs: &[u8]) -> Result<CodedElement, CodecError> {
    let k = coeffs.len();
    if k == 0 {
        return Err(CodecError::InvalidInput("empty coefficient row".into()));
    }
    let framed = frame(value, k);
    let frag = framed.len() / k;
    let mut payload = vec![0u8; frag];
    for (c, chunk) in coeffs.iter().zip(framed.chunks(frag)) {
        gf256::mul_add_into(&mut payload, chunk, *c);
    }
    Ok(CodedElement { coeffs: coeffs.to_vec(), payload })
}

/// Produces `params.n()` coded elements of `value`.
///
/// Coefficients are drawn uniformly from GF(256) with `rng`. With `k = 1`
/// every row is the constant `[1]`, so each element carries the framed value
/// verbatim (replication).
pub fn encode<R: Rng + ?Sized>(
    value: &[u8],
    params: EncodingParams,
    rng: &mut R,
) -> Result<Vec<CodedElement>, CodecError> {
    if value.is_empty() {
        return Err(CodecError::InvalidInput("cannot encode an empty value".into()));
    }
    let k = params.k();
    let framed = frame(value, k);
    let frag = framed.len() / k;
    let fragments: Vec<&[u8]> = framed.chunks(frag).collect();
    let mut out = Vec::with_capacity(params.n());
    for _ in 0..params.n() {
        let coeffs: Vec<u8> = if k == 1 { vec![1] } else { (0..k).map(|_| rng.gen()).collect() };
        let mut payload = vec![0u8; frag];
        for (c, f) in coeffs.iter().zip(&fragments) {
            gf256::mul_add_into(&mut payload, f, *c);
        }
        out.push(CodedElement { coeffs, payload });
    }
    Ok(out)
}

fn check_shapes<'a, I>(elements: I, k: Option<usize>) -> Result<(usize, usize), CodecError>
where
    I: IntoIterator<Item = &'a CodedElement>,
{
    let mut shape: Option<(usize, usize)> = k.map(|k| (k, usize::MAX));
    for e in elements {
        match shape {
            None => shape = Some((e.coeffs.len(), e.payload.len())),
            Some((k, usize::MAX)) => {
                if e.coeffs.len() != k {
                    return Err(CodecError::InvalidInput(format!(
                        "element has {} coefficients, expected {k}",
                        e.coeffs.len()
                    )));
                }
                shape = Some((k, e.payload.len()));
            }
            Some((k, m)) => {
                if e.coeffs.len() != k || e.payload.len() != m {
                    return Err(CodecError::InvalidInput(format!(
                        "element shape ({}, {}) differs from ({k}, {m})",
                        e.coeffs.len(),
                        e.payload.len()
                    )));
                }
            }
        }
    }
    match shape {
        Some((k, usize::MAX)) => Ok((k, 0)),
        Some(s) => Ok(s),
        None => Err(CodecError::InvalidInput("no elements".into())),
    }
}

/// Incremental row-echelon basis over GF(256). Each stored row is
/// normalized so that its pivot coefficient is 1.
struct Basis {
    k: usize,
    rows: Vec<(usize, Vec<u8>)>,
}

impl Basis {
    fn new(k: usize) -> Self {
        Basis { k, rows: Vec::with_capacity(k) }
    }

    /// Reduces `row` against the basis; keeps it if independent.
    fn insert(&mut self, mut row: Vec<u8>) -> bool {
        for (pivot, basis_row) in &self.rows {
            let c = row[*pivot];
            if c != 0 {
                gf256::mul_add_into(&mut row, basis_row, c);
            }
        }
        let Some(pivot) = row[..self.k].iter().position(|&c| c != 0) else {
            return false;
        };
        let inv = Gf256(row[pivot]).inv().expect("nonzero pivot");
        gf256::scale_in_place(&mut row, inv.0);
        // Keep the basis fully reduced so later back-substitution is trivial.
        for (_, basis_row) in self.rows.iter_mut() {
            let c = basis_row[pivot];
            if c != 0 {
                gf256::mul_add_into(basis_row, &row, c);
            }
        }
        self.rows.push((pivot, row));
        true
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

/// Rank of the coefficient rows.
pub fn rank(elements: &[CodedElement]) -> Result<usize, CodecError> {
    if elements.is_empty() {
        return Ok(0);
    }
    let (k, _) = check_shapes(elements, None)?;
    let mut basis = Basis::new(k);
    for e in elements {
        if basis.rank() == k {
            break;
        }
        basis.insert(e.coeffs.clone());
    }
    Ok(basis.rank())
}

/// Recovers the value from elements whose rows span GF(256)^k.
pub fn decode(elements: &[CodedElement], k: usize) -> Result<Vec<u8>, CodecError> {
    if k == 0 {
        return Err(CodecError::InvalidInput("k must be positive".into()));
    }
    if elements.is_empty() {
        return Err(CodecError::RankDeficient { rank: 0, k });
    }
    let (_, m) = check_shapes(elements, Some(k))?;
    let mut basis = Basis::new(k);
    for e in elements {
        if basis.rank() == k {
            break;
        }
        let mut row = Vec::with_capacity(k + m);
        row.extend_from_slice(&e.coeffs);
        row.extend_from_slice(&e.payload);
        basis.insert(row);
    }
    if basis.rank() < k {
        return Err(CodecError::RankDeficient { rank: basis.rank(), k });
    }
    // Fully reduced with unit pivots: the row with pivot i holds fragment i.
    let mut fragments: Vec<Option<Vec<u8>>> = vec![None; k];
    for (pivot, row) in basis.rows {
        fragments[pivot] = Some(row[k..].to_vec());
    }
    let framed: Vec<u8> = fragments.into_iter().flat_map(|f| f.expect("full rank")).collect();
    unframe(framed)
}

/// Linear combination `Σ scalars[j] · elements[j]`.
pub fn recode_with(elements: &[CodedElement], scalars: &[Gf256]) -> Result<CodedElement, CodecError> {
    if elements.is_empty() {
        return Err(CodecError::InvalidInput("cannot recode an empty set".into()));
    }
    if elements.len() != scalars.len() {
        return Err(CodecError::InvalidInput(format!(
            "{} elements but {} scalars",
            elements.len(),
            scalars.len()
        )));
    }
    let (k, m) = check_shapes(elements, None)?;
    let mut out = CodedElement { coeffs: vec![0; k], payload: vec![0; m] };
    for (e, s) in elements.iter().zip(scalars) {
        gf256::mul_add_into(&mut out.coeffs, &e.coeffs, s.0);
        gf256::mul_add_into(&mut out.payload, &e.payload, s.0);
    }
    Ok(out)
}

/// Draws one nonzero scalar per input and returns the combination along with
/// the scalars used.
pub fn recode<R: Rng + ?Sized>(
    elements: &[CodedElement],
    rng: &mut R,
) -> Result<(CodedElement, Vec<Gf256>), CodecError> {
    let scalars: Vec<Gf256> = elements.iter().map(|_| Gf256(rng.gen_range(1..=255))).collect();
    let out = recode_with(elements, &scalars)?;
    Ok((out, scalars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, k: usize) -> EncodingParams {
        EncodingParams::new(n, k).unwrap()
    }

    #[test]
    fn params_reject_bad_dimensions() {
        assert!(EncodingParams::new(2, 3).is_err());
        assert!(EncodingParams::new(3, 0).is_err());
        assert!(EncodingParams::new(1, 1).is_ok());
    }

    #[test]
    fn four_octets_k2_n3_gives_six_octet_payloads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let value = [1u8, 2, 3, 4];
        let els = encode(&value, params(3, 2), &mut rng).unwrap();
        assert_eq!(els.len(), 3);
        assert!(els.iter().all(|e| e.payload.len() == 6 && e.coeffs.len() == 2));
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let pair = [els[i].clone(), els[j].clone()];
            if rank(&pair).unwrap() == 2 {
                assert_eq!(decode(&pair, 2).unwrap(), value);
            }
        }
    }

    #[test]
    fn k1_is_replication_of_the_framed_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let value = b"replicate me";
        let els = encode(value, params(3, 1), &mut rng).unwrap();
        let mut framed = (value.len() as u64).to_be_bytes().to_vec();
        framed.extend_from_slice(value);
        for e in &els {
            assert_eq!(e.coeffs, vec![1]);
            assert_eq!(e.payload, framed);
            assert_eq!(decode(std::slice::from_ref(e), 1).unwrap(), value);
        }
    }

    #[test]
    fn identity_rows_carry_raw_halves() {
        let value = [9u8, 8, 7, 6];
        let a = encode_with_coeffs(&value, &[1, 0]).unwrap();
        let b = encode_with_coeffs(&value, &[0, 1]).unwrap();
        let framed = frame(&value, 2);
        assert_eq!(a.payload, framed[..6]);
        assert_eq!(b.payload, framed[6..]);
        assert_eq!(decode(&[b, a], 2).unwrap(), value);
    }

    #[test]
    fn colinear_rows_are_rank_deficient() {
        let p = vec![5u8, 6, 7];
        let mut p2 = p.clone();
        gf256::scale_in_place(&mut p2, 2);
        let els = [
            CodedElement { coeffs: vec![1, 1], payload: p },
            CodedElement { coeffs: vec![2, 2], payload: p2 },
        ];
        assert_eq!(decode(&els, 2), Err(CodecError::RankDeficient { rank: 1, k: 2 }));
    }

    #[test]
    fn inconsistent_lengths_are_invalid() {
        let els = [
            CodedElement { coeffs: vec![1, 0], payload: vec![0; 4] },
            CodedElement { coeffs: vec![0, 1], payload: vec![0; 5] },
        ];
        assert!(matches!(decode(&els, 2), Err(CodecError::InvalidInput(_))));
        assert!(matches!(decode(&els[..1], 3), Err(CodecError::InvalidInput(_))));
    }

    #[test]
    fn empty_value_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(encode(&[], params(3, 2), &mut rng), Err(CodecError::InvalidInput(_))));
    }

    #[test]
    fn rank_examples() {
        let id3: Vec<CodedElement> = (0..3)
            .map(|i| {
                let mut c = vec![0u8; 3];
                c[i] = 1;
                CodedElement { coeffs: c, payload: vec![] }
            })
            .collect();
        assert_eq!(rank(&id3).unwrap(), 3);
        let dup = vec![id3[1].clone(), id3[1].clone()];
        assert_eq!(rank(&dup).unwrap(), 1);
    }

    #[test]
    fn recode_with_is_the_defining_combination() {
        let p1 = vec![1u8, 2, 3];
        let p2 = vec![4u8, 5, 6];
        let els = [
            CodedElement { coeffs: vec![1, 0], payload: p1.clone() },
            CodedElement { coeffs: vec![0, 1], payload: p2.clone() },
        ];
        let (a, b) = (Gf256(3), Gf256(0x47));
        let out = recode_with(&els, &[a, b]).unwrap();
        assert_eq!(out.coeffs, vec![3, 0x47]);
        let expect: Vec<u8> = p1.iter().zip(&p2).map(|(x, y)| gf256::mul(3, *x) ^ gf256::mul(0x47, *y)).collect();
        assert_eq!(out.payload, expect);
    }

    #[test]
    fn recode_of_single_element_still_decodes_with_independent_partner() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let value = b"scaling keeps the span";
        let a = encode_with_coeffs(value, &[1, 0]).unwrap();
        let b = encode_with_coeffs(value, &[0, 1]).unwrap();
        let (ra, scalars) = recode(std::slice::from_ref(&a), &mut rng).unwrap();
        assert_eq!(ra, a.scaled(scalars[0]));
        assert_eq!(decode(&[ra, b], 2).unwrap(), value);
    }

    #[test]
    fn recode_rejects_empty_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(recode(&[], &mut rng).is_err());
    }
}
