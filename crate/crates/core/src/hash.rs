//! SHA-256 primitives shared by every protocol role.
//!
//! Two kinds of hash invocation matter to the protocol and are counted
//! separately (per thread) so callers can audit the work a verifier does:
//!
//! * a *token hash* `h(T)` over a single 32-byte chain element, and
//! * a *payload digest* `h(SUP || T)` streamed over an update payload.
//!
//! Checksums over files and logs use [`sha256`], which is not counted.

use std::cell::Cell;
use std::fmt;

use sha2::{Digest, Sha256};

/// Output length of the chain hash, and therefore the size of every token.
pub const TOKEN_LEN: usize = 32;

thread_local! {
    static TOKEN_HASHES: Cell<u64> = const { Cell::new(0) };
    static PAYLOAD_DIGESTS: Cell<u64> = const { Cell::new(0) };
}

/// Snapshot of the protocol hash counters for the current thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HashCounts {
    pub token_hashes: u64,
    pub payload_digests: u64,
}

impl HashCounts {
    pub fn total(&self) -> u64 {
        self.token_hashes + self.payload_digests
    }

    /// Counts accumulated since `earlier` was taken.
    pub fn since(&self, earlier: HashCounts) -> HashCounts {
        HashCounts {
            token_hashes: self.token_hashes - earlier.token_hashes,
            payload_digests: self.payload_digests - earlier.payload_digests,
        }
    }
}

pub fn hash_counts() -> HashCounts {
    HashCounts {
        token_hashes: TOKEN_HASHES.with(Cell::get),
        payload_digests: PAYLOAD_DIGESTS.with(Cell::get),
    }
}

/// A 32-byte hash-chain element.
///
/// The same type serves as trust anchor, current/previous authentication
/// token, derived token and the verifier's stored token.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token([u8; TOKEN_LEN]);

impl Token {
    pub const fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        Token(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Token)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; TOKEN_LEN];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(Token(out))
    }

    pub fn xor(&self, other: &[u8; TOKEN_LEN]) -> [u8; TOKEN_LEN] {
        let mut out = self.0;
        xor_in_place(&mut out, other);
        out
    }

    /// Equality without an early exit on the first differing byte.
    pub fn ct_eq(&self, other: &Token) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Token({}..)", hex::encode(&self.0[..8]))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub(crate) fn xor_in_place(dst: &mut [u8; TOKEN_LEN], src: &[u8; TOKEN_LEN]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d ^= s;
    }
}

/// `h(T)`: one counted application of the chain hash.
pub fn hash_token(token: &Token) -> Token {
    TOKEN_HASHES.with(|c| c.set(c.get() + 1));
    Token(Sha256::digest(token.0).into())
}

/// Streaming `h(SUP || T)`.
///
/// Payload bytes are absorbed incrementally, so memory use does not depend
/// on the payload size. The digest is counted once, at [`finish`].
///
/// [`finish`]: PayloadHasher::finish
#[derive(Clone, Default)]
pub struct PayloadHasher {
    inner: Sha256,
}

impl PayloadHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.inner.update(bytes);
    }

    /// Plain SHA-256 of the payload absorbed so far, without the token
    /// suffix. Not a protocol hash; used for install records.
    pub fn payload_digest(&self) -> [u8; 32] {
        self.inner.clone().finalize().into()
    }

    pub fn finish(mut self, token: &Token) -> [u8; TOKEN_LEN] {
        PAYLOAD_DIGESTS.with(|c| c.set(c.get() + 1));
        self.inner.update(token.0);
        self.inner.finalize().into()
    }
}

/// Uncounted SHA-256, for checksums and log digests.
pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}
