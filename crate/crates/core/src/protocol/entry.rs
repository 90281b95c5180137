//! Signed ⟨tag, coded element⟩ pairs, the unit of server storage.
//!
//! An entry is signed either by the reader or writer that disseminated it,
//! or by a member that recoded it from such elements. A recoded entry
//! carries a certificate: the invoker-signed source elements and the
//! scalars whose combination yields the entry's element. Certificates are
//! kept flat, so recoding a recoded entry re-expresses it over the original
//! sources. Members therefore cannot introduce a tag or element that no
//! invoker produced.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, CodedElement, CodecError, Gf256};
use crate::identity::{Signature, Signer, Verifier};

use super::tag::Tag;

/// Octets of the canonical signed message for ⟨tag, element⟩:
/// `tag.z (8, big-endian) ‖ tag.w (8) ‖ coeffs ‖ payload`.
pub fn entry_message(tag: &Tag, element: &CodedElement) -> Vec<u8> {
    let mut m = Vec::with_capacity(16 + element.stored_len());
    m.extend_from_slice(&tag.z.to_be_bytes());
    m.extend_from_slice(&tag.w.to_bytes());
    m.extend_from_slice(&element.coeffs);
    m.extend_from_slice(&element.payload);
    m
}

/// Invoker-signed sources of a recoded element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub scalars: Vec<u8>,
    pub sources: Vec<(CodedElement, Signature)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListEntry {
    pub tag: Tag,
    pub element: CodedElement,
    /// `None` only when the deployment runs without signatures.
    pub sig: Option<Signature>,
    pub cert: Option<Certificate>,
}

/// Whether entries are signed and checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signing {
    Enabled,
    Disabled,
}

impl ListEntry {
    /// An entry signed directly by `signer`.
    pub fn signed(tag: Tag, element: CodedElement, signer: &Signer, signing: Signing) -> ListEntry {
        let sig = match signing {
            Signing::Enabled => Some(signer.sign(&entry_message(&tag, &element))),
            Signing::Disabled => None,
        };
        ListEntry { tag, element, sig, cert: None }
    }

    pub fn signer(&self) -> Option<crate::identity::NodeId> {
        self.sig.as_ref().map(|s| s.signer)
    }

    /// Coefficient plus payload octets held by a server, certificate
    /// sources included.
    pub fn stored_len(&self) -> usize {
        self.stored_len_scaled(1) as usize
    }

    /// As [`stored_len`](Self::stored_len) with payload octets weighted by
    /// `payload_scale`.
    pub fn stored_len_scaled(&self, payload_scale: u64) -> u64 {
        let el = |e: &CodedElement| e.coeffs.len() as u64 + e.payload.len() as u64 * payload_scale;
        el(&self.element) + self.cert.as_ref().map_or(0, |c| c.sources.iter().map(|(e, _)| el(e)).sum())
    }

    /// Size in the canonical serialization, with payload octets weighted by
    /// `payload_scale`.
    pub fn wire_len(&self, payload_scale: u64) -> u64 {
        let sig = if self.sig.is_some() { 40 } else { 0 };
        let cert = self.cert.as_ref().map_or(0, |c| {
            c.scalars.len() as u64
                + c.sources
                    .iter()
                    .map(|(e, _)| 40 + e.coeffs.len() as u64 + e.payload.len() as u64 * payload_scale)
                    .sum::<u64>()
        });
        16 + self.element.coeffs.len() as u64 + self.element.payload.len() as u64 * payload_scale + sig + cert
    }

    /// Checks the direct signature and, for signers that are not invokers,
    /// the certificate.
    pub fn verify(&self, verifier: &dyn Verifier, signing: Signing) -> bool {
        if signing == Signing::Disabled {
            return true;
        }
        let Some(sig) = &self.sig else { return false };
        if !verifier.verify(sig.signer, &entry_message(&self.tag, &self.element), sig) {
            return false;
        }
        if verifier.is_invoker(sig.signer) {
            return true;
        }
        let Some(cert) = &self.cert else { return false };
        if cert.sources.is_empty() || cert.scalars.len() != cert.sources.len() {
            return false;
        }
        for (el, s) in &cert.sources {
            if !verifier.is_invoker(s.signer) || !verifier.verify(s.signer, &entry_message(&self.tag, el), s) {
                return false;
            }
        }
        let sources: Vec<CodedElement> = cert.sources.iter().map(|(e, _)| e.clone()).collect();
        let scalars: Vec<Gf256> = cert.scalars.iter().map(|&c| Gf256(c)).collect();
        matches!(codec::recode_with(&sources, &scalars), Ok(e) if e == self.element)
    }
}

/// Mixes entries of one tag into a fresh element signed by `signer`.
///
/// All inputs must share `tag` and already be verified. Invokers sign the
/// result directly; members attach a certificate.
pub fn recode_entries<R: Rng + ?Sized>(
    tag: Tag,
    inputs: &[ListEntry],
    signer: &Signer,
    signing: Signing,
    is_invoker: bool,
    rng: &mut R,
) -> Result<ListEntry, CodecError> {
    if inputs.iter().any(|e| e.tag != tag) {
        return Err(CodecError::InvalidInput("recode inputs carry different tags".into()));
    }
    let elements: Vec<CodedElement> = inputs.iter().map(|e| e.element.clone()).collect();
    let (element, scalars) = codec::recode(&elements, rng)?;
    let mut entry = ListEntry::signed(tag, element, signer, signing);
    if signing == Signing::Enabled && !is_invoker {
        entry.cert = Some(flatten_certificate(inputs, &scalars));
    }
    Ok(entry)
}

fn flatten_certificate(inputs: &[ListEntry], scalars: &[Gf256]) -> Certificate {
    let mut sources: Vec<(CodedElement, Signature)> = Vec::new();
    let mut weights: Vec<Gf256> = Vec::new();
    let mut add = |el: &CodedElement, sig: &Signature, w: Gf256| {
        if let Some(i) = sources.iter().position(|(e, s)| e == el && s == sig) {
            weights[i] += w;
        } else {
            sources.push((el.clone(), sig.clone()));
            weights.push(w);
        }
    };
    for (input, &alpha) in inputs.iter().zip(scalars) {
        match (&input.sig, &input.cert) {
            (Some(sig), None) => add(&input.element, sig, alpha),
            (_, Some(cert)) => {
                for ((el, sig), &beta) in cert.sources.iter().zip(&cert.scalars) {
                    add(el, sig, alpha * Gf256(beta));
                }
            }
            _ => {}
        }
    }
    Certificate { scalars: weights.into_iter().map(|w| w.0).collect(), sources }
}
