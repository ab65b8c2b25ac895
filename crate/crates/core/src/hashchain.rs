//! Administrator-side hash chain.
//!
//! A chain of length `n` is `T_1 = h(seed)`, `T_i = h(T_{i-1})`, with the
//! tip `T_n` installed on the satellite as its trust anchor. Updates reveal
//! the chain backwards: the first update carries `T_{n-1}`, the last `T_1`,
//! so a chain supports exactly `n - 1` updates.
//!
//! # Chain file
//!
//! ```text
//! offset  size   field
//! 0       8      magic "CSUMCHN1"
//! 8       1      version (1)
//! 9       16     chain id
//! 25      4      n, big-endian
//! 29      4      cursor, big-endian
//! 33      32*n   T_1 .. T_n
//! 33+32n  32     SHA-256 of all preceding bytes
//! ```

use std::fmt;
use std::path::Path;

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::fsutil;
use crate::hash::{hash_token, sha256, Token, TOKEN_LEN};

pub const SEED_LEN: usize = 32;
pub const CHAIN_ID_LEN: usize = 16;

pub const CHAIN_FILE_MAGIC: &[u8; 8] = b"CSUMCHN1";
pub const CHAIN_FILE_VERSION: u8 = 1;
/// Magic, version, id, n and cursor.
pub const CHAIN_FILE_HEADER_LEN: usize = 8 + 1 + CHAIN_ID_LEN + 4 + 4;

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("chain length {0} is too short; at least 2 tokens are needed for one update")]
    InvalidLength(u64),
    #[error("hash chain exhausted; the satellite must be re-anchored")]
    Exhausted,
    #[error("randomness source unavailable: {0}")]
    Randomness(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ChainFileError {
    #[error("not a chain file (bad magic)")]
    BadMagic,
    #[error("unsupported chain file version {0}")]
    UnsupportedVersion(u8),
    #[error("chain file truncated or has trailing bytes")]
    Length,
    #[error("chain file checksum mismatch")]
    Checksum,
    #[error("chain length {0} is invalid")]
    InvalidLength(u32),
    #[error("cursor {cursor} out of range for chain of length {n}")]
    InvalidCursor { cursor: u32, n: u32 },
    #[error("chain link broken at T_{0}")]
    BrokenLink(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Secret chain seed. Wiped from memory when dropped and never serialized.
#[derive(Zeroize, ZeroizeOnDrop)]
pub struct Seed([u8; SEED_LEN]);

impl Seed {
    pub fn from_bytes(bytes: [u8; SEED_LEN]) -> Self {
        Seed(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SEED_LEN] {
        &self.0
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

/// Draws a fresh seed from the operating system CSPRNG.
pub fn generate_seed() -> Result<Seed, ChainError> {
    generate_seed_from(&mut OsRng)
}

pub fn generate_seed_from<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Seed, ChainError> {
    let mut bytes = [0u8; SEED_LEN];
    rng.try_fill_bytes(&mut bytes)
        .map_err(|e| ChainError::Randomness(e.to_string()))?;
    Ok(Seed(bytes))
}

/// Opaque identifier naming one satellite's chain.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainId([u8; CHAIN_ID_LEN]);

impl ChainId {
    pub const fn from_bytes(bytes: [u8; CHAIN_ID_LEN]) -> Self {
        ChainId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; CHAIN_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; CHAIN_ID_LEN];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(ChainId(out))
    }

    /// Identifier derived from the public trust anchor.
    pub fn for_anchor(anchor: &Token) -> Self {
        let mut input = b"CSUM-CHAIN-ID".to_vec();
        input.extend_from_slice(anchor.as_bytes());
        let digest = sha256(&input);
        let mut id = [0u8; CHAIN_ID_LEN];
        id.copy_from_slice(&digest[..CHAIN_ID_LEN]);
        ChainId(id)
    }
}

impl fmt::Debug for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChainId({})", self.to_hex())
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// The pair revealed by one update: `h(current) == previous`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenPair {
    pub current: Token,
    pub previous: Token,
}

#[derive(Clone, PartialEq, Eq)]
pub struct HashChain {
    id: ChainId,
    /// `tokens[i]` is `T_{i+1}`.
    tokens: Vec<Token>,
    /// 1-based index of the next `AT_curr`; 0 once exhausted.
    cursor: u32,
}

impl fmt::Debug for HashChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HashChain")
            .field("id", &self.id)
            .field("len", &self.tokens.len())
            .field("cursor", &self.cursor)
            .finish()
    }
}

impl HashChain {
    /// Hashes `seed` `n` times. The seed is consumed and wiped.
    pub fn build(seed: Seed, n: u32) -> Result<Self, ChainError> {
        if n < 2 {
            return Err(ChainError::InvalidLength(n.into()));
        }
        let mut tokens = Vec::with_capacity(n as usize);
        let mut t = hash_token(&Token::from_bytes(*seed.as_bytes()));
        drop(seed);
        tokens.push(t);
        for _ in 1..n {
            t = hash_token(&t);
            tokens.push(t);
        }
        let id = ChainId::for_anchor(&t);
        Ok(HashChain {
            id,
            tokens,
            cursor: n - 1,
        })
    }

    pub fn id(&self) -> ChainId {
        self.id
    }

    /// Replaces the identifier; token material is unaffected.
    pub fn with_id(mut self, id: ChainId) -> Self {
        self.id = id;
        self
    }

    pub fn len(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    /// Updates that can still be issued.
    pub fn remaining(&self) -> u32 {
        self.cursor
    }

    /// `T_index`, 1-based.
    pub fn token(&self, index: u32) -> Option<Token> {
        index
            .checked_sub(1)
            .and_then(|i| self.tokens.get(i as usize))
            .copied()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// `T_n`, the value installed on the satellite.
    pub fn trust_anchor(&self) -> Token {
        *self.tokens.last().expect("chain has at least two tokens")
    }

    /// Issues `(T_cursor, T_{cursor+1})` and moves the cursor down by one.
    pub fn next_token_pair(&mut self) -> Result<TokenPair, ChainError> {
        if self.cursor == 0 {
            return Err(ChainError::Exhausted);
        }
        let c = self.cursor as usize;
        let pair = TokenPair {
            current: self.tokens[c - 1],
            previous: self.tokens[c],
        };
        self.cursor -= 1;
        Ok(pair)
    }

    /// First index `i` (1-based) where `h(T_{i-1}) != T_i`, if any.
    pub fn first_broken_link(tokens: &[Token]) -> Option<usize> {
        tokens
            .windows(2)
            .position(|w| hash_token(&w[0]) != w[1])
            .map(|i| i + 2)
    }

    pub fn encoded_len(n: u32) -> usize {
        CHAIN_FILE_HEADER_LEN + n as usize * TOKEN_LEN + 32
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.len()));
        out.extend_from_slice(CHAIN_FILE_MAGIC);
        out.push(CHAIN_FILE_VERSION);
        out.extend_from_slice(self.id.as_bytes());
        out.extend_from_slice(&self.len().to_be_bytes());
        out.extend_from_slice(&self.cursor.to_be_bytes());
        for t in &self.tokens {
            out.extend_from_slice(t.as_bytes());
        }
        let sum = sha256(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ChainFileError> {
        if bytes.len() < 8 || &bytes[..8] != CHAIN_FILE_MAGIC {
            return Err(ChainFileError::BadMagic);
        }
        if bytes.len() < CHAIN_FILE_HEADER_LEN {
            return Err(ChainFileError::Length);
        }
        if bytes[8] != CHAIN_FILE_VERSION {
            return Err(ChainFileError::UnsupportedVersion(bytes[8]));
        }
        let id = ChainId::from_bytes(bytes[9..25].try_into().unwrap());
        let n = u32::from_be_bytes(bytes[25..29].try_into().unwrap());
        let cursor = u32::from_be_bytes(bytes[29..33].try_into().unwrap());
        let expected = (n as u64)
            .checked_mul(TOKEN_LEN as u64)
            .map(|t| t + CHAIN_FILE_HEADER_LEN as u64 + 32);
        if expected != Some(bytes.len() as u64) {
            return Err(ChainFileError::Length);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if sha256(body) != sum {
            return Err(ChainFileError::Checksum);
        }
        if n < 2 {
            return Err(ChainFileError::InvalidLength(n));
        }
        if cursor >= n {
            return Err(ChainFileError::InvalidCursor { cursor, n });
        }
        let tokens: Vec<Token> = body[CHAIN_FILE_HEADER_LEN..]
            .chunks_exact(TOKEN_LEN)
            .map(|c| Token::from_slice(c).unwrap())
            .collect();
        if let Some(i) = Self::first_broken_link(&tokens) {
            return Err(ChainFileError::BrokenLink(i));
        }
        Ok(HashChain { id, tokens, cursor })
    }

    pub fn save(&self, path: &Path) -> Result<(), ChainFileError> {
        fsutil::write_atomic(path, &self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ChainFileError> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Free-function form of [`HashChain::build`].
pub fn build_chain(seed: Seed, n: u32) -> Result<HashChain, ChainError> {
    HashChain::build(seed, n)
}
