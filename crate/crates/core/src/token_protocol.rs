//! Transmission-token encapsulation and single-hash verification.
//!
//! ```text
//! PT = h(SUP || AT_prev)            partial token
//! TT = AT_curr XOR PT               administrator
//! DT = TT XOR h(SUP_rec || token)   satellite
//! accept iff h(DT) == token
//! ```
//!
//! `SUP || T` is the raw payload bytes immediately followed by the 32 token
//! bytes, with no length prefix or separator.

use std::fmt;
use std::io::{self, Read};

use crate::hash::{hash_token, xor_in_place, PayloadHasher, Token, TOKEN_LEN};

/// Read granularity for streamed payloads.
pub const STREAM_BLOCK: usize = 64 * 1024;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid AT_curr and AT_prev combination")]
    InvalidTokenPair,
}

/// Opaque update payload. Empty payloads are legal.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SoftwareUpdatePackage {
    pub payload: Vec<u8>,
    pub name: Option<String>,
}

impl SoftwareUpdatePackage {
    pub fn new(payload: impl Into<Vec<u8>>) -> Self {
        SoftwareUpdatePackage {
            payload: payload.into(),
            name: None,
        }
    }

    pub fn named(name: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        SoftwareUpdatePackage {
            payload: payload.into(),
            name: Some(name.into()),
        }
    }
}

impl AsRef<[u8]> for SoftwareUpdatePackage {
    fn as_ref(&self) -> &[u8] {
        &self.payload
    }
}

impl fmt::Debug for SoftwareUpdatePackage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SoftwareUpdatePackage")
            .field("name", &self.name)
            .field("len", &self.payload.len())
            .finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransmissionToken([u8; TOKEN_LEN]);

impl TransmissionToken {
    pub const fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        TransmissionToken(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for TransmissionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransmissionToken({}..)", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PartialToken([u8; TOKEN_LEN]);

impl PartialToken {
    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }
}

impl From<[u8; TOKEN_LEN]> for PartialToken {
    fn from(bytes: [u8; TOKEN_LEN]) -> Self {
        PartialToken(bytes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// `h(DT)` did not match the stored token.
    TokenMismatch,
    /// The frame could not be decoded.
    Malformed,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::TokenMismatch => "token-mismatch",
            RejectReason::Malformed => "malformed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerificationOutcome {
    /// `derived` becomes the verifier's new token.
    Accepted {
        derived: Token,
    },
    Rejected {
        reason: RejectReason,
    },
}

impl VerificationOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, VerificationOutcome::Accepted { .. })
    }

    pub fn derived_token(&self) -> Option<Token> {
        match self {
            VerificationOutcome::Accepted { derived } => Some(*derived),
            VerificationOutcome::Rejected { .. } => None,
        }
    }
}

/// `PT = h(payload || at_prev)`.
pub fn partial_token(sup: impl AsRef<[u8]>, at_prev: &Token) -> PartialToken {
    let mut h = PayloadHasher::new();
    h.update(sup.as_ref());
    PartialToken(h.finish(at_prev))
}

/// Streams the payload from `reader` in [`STREAM_BLOCK`] chunks.
pub fn partial_token_from_reader<R: Read>(
    mut reader: R,
    at_prev: &Token,
) -> io::Result<PartialToken> {
    let mut h = PayloadHasher::new();
    let mut buf = vec![0u8; STREAM_BLOCK];
    loop {
        match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(k) => h.update(&buf[..k]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(PartialToken(h.finish(at_prev)))
}

/// `TT = at_curr XOR PT`, after checking `h(at_curr) == at_prev`.
pub fn make_transmission_token(
    sup: impl AsRef<[u8]>,
    at_curr: &Token,
    at_prev: &Token,
) -> Result<TransmissionToken, ProtocolError> {
    if !hash_token(at_curr).ct_eq(at_prev) {
        return Err(ProtocolError::InvalidTokenPair);
    }
    let pt = partial_token(sup, at_prev);
    Ok(TransmissionToken(at_curr.xor(&pt.0)))
}

/// `DT = tt XOR PT` where `PT` was computed against the verifier's token.
pub fn derive_token_with(tt: &TransmissionToken, pt: &PartialToken) -> Token {
    let mut out = tt.0;
    xor_in_place(&mut out, &pt.0);
    Token::from_bytes(out)
}

/// `DT = tt XOR h(sup_rec || token)`.
pub fn derive_token(sup_rec: impl AsRef<[u8]>, tt: &TransmissionToken, token: &Token) -> Token {
    derive_token_with(tt, &partial_token(sup_rec, token))
}

/// Accepts iff `h(dt) == token`. Performs exactly one hash.
pub fn verify(dt: &Token, token: &Token) -> VerificationOutcome {
    if hash_token(dt).ct_eq(token) {
        VerificationOutcome::Accepted { derived: *dt }
    } else {
        VerificationOutcome::Rejected {
            reason: RejectReason::TokenMismatch,
        }
    }
}
