//! Satellite-side verifier and its persistent state.
//!
//! # State file
//!
//! ```text
//! offset  size   field
//! 0       8      magic "CSUMSAT1"
//! 8       1      version (1)
//! 9       16     chain id
//! 25      32     current token
//! 57      4      accepted count k, big-endian
//! 61      32*k   payload digests of installed updates, oldest first
//! 61+32k  32     SHA-256 of all preceding bytes
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fsutil;
use crate::hash::{sha256, PayloadHasher, Token, TOKEN_LEN};
use crate::hashchain::{ChainId, CHAIN_ID_LEN};
use crate::roles::{MSG_FAILURE, MSG_SUCCESS};
use crate::token_protocol::{
    derive_token_with, verify, PartialToken, RejectReason, VerificationOutcome,
};
use crate::wire::{decode_bundle_view, BundleView};

pub const STATE_FILE_MAGIC: &[u8; 8] = b"CSUMSAT1";
pub const STATE_FILE_VERSION: u8 = 1;
const STATE_HEADER_LEN: usize = 8 + 1 + CHAIN_ID_LEN + TOKEN_LEN + 4;

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("not a satellite state file (bad magic)")]
    BadMagic,
    #[error("unsupported state file version {0}")]
    UnsupportedVersion(u8),
    #[error("state file truncated or has trailing bytes")]
    Length,
    #[error("state file checksum mismatch")]
    Checksum,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStatus {
    Success,
    Failed,
}

/// Message returned to the ground station after each frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateReport {
    pub chain_id: ChainId,
    /// On success, the satellite's own count of accepted updates. On
    /// failure, the ordinal claimed by the frame header (0 if unreadable).
    pub ordinal: u32,
    pub status: UpdateStatus,
    pub reason: Option<RejectReason>,
}

impl UpdateReport {
    pub fn message(&self) -> &'static str {
        match self.status {
            UpdateStatus::Success => MSG_SUCCESS,
            UpdateStatus::Failed => MSG_FAILURE,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == UpdateStatus::Success
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstalledUpdate {
    /// 1-based position in the install log.
    pub ordinal: u32,
    pub payload_digest: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeSatState {
    pub chain_id: ChainId,
    pub token: Token,
    installed: Vec<[u8; 32]>,
}

impl CubeSatState {
    /// Fresh state holding only the trust anchor.
    pub fn new(chain_id: ChainId, anchor: Token) -> Self {
        CubeSatState {
            chain_id,
            token: anchor,
            installed: Vec::new(),
        }
    }

    pub fn accepted(&self) -> u32 {
        self.installed.len() as u32
    }

    pub fn installed(&self) -> impl Iterator<Item = InstalledUpdate> + '_ {
        self.installed
            .iter()
            .enumerate()
            .map(|(i, d)| InstalledUpdate {
                ordinal: i as u32 + 1,
                payload_digest: *d,
            })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STATE_HEADER_LEN + 32 * self.installed.len() + 32);
        out.extend_from_slice(STATE_FILE_MAGIC);
        out.push(STATE_FILE_VERSION);
        out.extend_from_slice(self.chain_id.as_bytes());
        out.extend_from_slice(self.token.as_bytes());
        out.extend_from_slice(&self.accepted().to_be_bytes());
        for d in &self.installed {
            out.extend_from_slice(d);
        }
        let sum = sha256(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, StateError> {
        if bytes.len() < 8 || &bytes[..8] != STATE_FILE_MAGIC {
            return Err(StateError::BadMagic);
        }
        if bytes.len() < STATE_HEADER_LEN + 32 {
            return Err(StateError::Length);
        }
        if bytes[8] != STATE_FILE_VERSION {
            return Err(StateError::UnsupportedVersion(bytes[8]));
        }
        let count = u32::from_be_bytes(bytes[57..61].try_into().unwrap()) as u64;
        if (STATE_HEADER_LEN as u64 + 32 * count + 32) != bytes.len() as u64 {
            return Err(StateError::Length);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if sha256(body) != sum {
            return Err(StateError::Checksum);
        }
        Ok(CubeSatState {
            chain_id: ChainId::from_bytes(bytes[9..25].try_into().unwrap()),
            token: Token::from_slice(&bytes[25..57]).unwrap(),
            installed: body[STATE_HEADER_LEN..]
                .chunks_exact(32)
                .map(|c| c.try_into().unwrap())
                .collect(),
        })
    }
}

/// Where the verifier commits its state after each accepted update.
pub trait StateStore {
    fn persist(&mut self, state: &CubeSatState) -> Result<(), StateError>;
}

/// Keeps the last persisted encoding in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    bytes: Vec<u8>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn restore(&self) -> Result<CubeSatState, StateError> {
        CubeSatState::decode(&self.bytes)
    }
}

impl StateStore for MemoryStore {
    fn persist(&mut self, state: &CubeSatState) -> Result<(), StateError> {
        self.bytes = state.encode();
        Ok(())
    }
}

/// Discards state; for throughput measurements only.
#[derive(Debug, Default, Clone, Copy)]
pub struct VolatileStore;

impl StateStore for VolatileStore {
    fn persist(&mut self, _: &CubeSatState) -> Result<(), StateError> {
        Ok(())
    }
}

/// State file rewritten atomically on every commit.
#[derive(Debug, Clone)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn restore(&self) -> Result<CubeSatState, StateError> {
        CubeSatState::decode(&std::fs::read(&self.path)?)
    }
}

impl StateStore for FileStore {
    fn persist(&mut self, state: &CubeSatState) -> Result<(), StateError> {
        fsutil::write_atomic(&self.path, &state.encode())?;
        Ok(())
    }
}

/// The on-board verifier.
#[derive(Debug)]
pub struct CubeSat<S: StateStore> {
    state: CubeSatState,
    store: S,
}

impl<S: StateStore> CubeSat<S> {
    /// Installs `anchor` as the initial token and persists it.
    pub fn provision(chain_id: ChainId, anchor: Token, mut store: S) -> Result<Self, StateError> {
        let state = CubeSatState::new(chain_id, anchor);
        store.persist(&state)?;
        Ok(CubeSat { state, store })
    }

    /// Resumes from a previously restored state.
    pub fn from_state(state: CubeSatState, store: S) -> Self {
        CubeSat { state, store }
    }

    pub fn state(&self) -> &CubeSatState {
        &self.state
    }

    pub fn token(&self) -> Token {
        self.state.token
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    /// Replaces the trust anchor after chain exhaustion. Clears the
    /// install log, which belongs to the old chain.
    pub fn reanchor(&mut self, chain_id: ChainId, anchor: Token) -> Result<(), StateError> {
        let fresh = CubeSatState::new(chain_id, anchor);
        self.store.persist(&fresh)?;
        self.state = fresh;
        Ok(())
    }

    /// Decodes and verifies one received frame.
    ///
    /// Undecodable frames are rejected without hashing. Otherwise the
    /// decision costs one payload digest and one token hash.
    pub fn handle_frame(&mut self, frame: &[u8]) -> Result<UpdateReport, StateError> {
        match decode_bundle_view(frame) {
            Ok(view) => self.handle_bundle(&view),
            Err(_) => Ok(self.failed(0, RejectReason::Malformed)),
        }
    }

    pub fn handle_bundle(&mut self, bundle: &BundleView<'_>) -> Result<UpdateReport, StateError> {
        let mut hasher = PayloadHasher::new();
        hasher.update(bundle.payload);
        let payload_only = hasher.clone();
        let pt = PartialToken::from(hasher.finish(&self.state.token));
        let dt = derive_token_with(&bundle.tt, &pt);
        match verify(&dt, &self.state.token) {
            VerificationOutcome::Accepted { derived } => {
                let previous = std::mem::replace(&mut self.state.token, derived);
                self.state.installed.push(payload_only.payload_digest());
                if let Err(e) = self.store.persist(&self.state) {
                    self.state.installed.pop();
                    self.state.token = previous;
                    return Err(e);
                }
                Ok(UpdateReport {
                    chain_id: self.state.chain_id,
                    ordinal: self.state.accepted(),
                    status: UpdateStatus::Success,
                    reason: None,
                })
            }
            VerificationOutcome::Rejected { reason } => Ok(self.failed(bundle.ordinal, reason)),
        }
    }

    fn failed(&self, ordinal: u32, reason: RejectReason) -> UpdateReport {
        UpdateReport {
            chain_id: self.state.chain_id,
            ordinal,
            status: UpdateStatus::Failed,
            reason: Some(reason),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::hash_counts;
    use crate::hashchain::{HashChain, Seed};
    use crate::roles::admin::issue_from_chain;
    use crate::token_protocol::SoftwareUpdatePackage;
    use crate::wire::encode_bundle;

    const T1: &str = "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925";
    const T2: &str = "2b32db6c2c0a6235fb1397e8225ea85e0f0e6e8c7b126d0016ccbde0e667151e";
    const SW1_DIGEST: &str = "cf4ac28ea7ba1492a583c9bee7839a4eb4bdc4f68595050965c214a81fcab6c3";

    fn golden() -> (HashChain, CubeSat<MemoryStore>) {
        let chain = HashChain::build(Seed::from_bytes([0; 32]), 3).unwrap();
        let cs = CubeSat::provision(chain.id(), chain.trust_anchor(), MemoryStore::new()).unwrap();
        (chain, cs)
    }

    fn frame(chain: &mut HashChain, payload: &str) -> Vec<u8> {
        encode_bundle(&issue_from_chain(chain, &SoftwareUpdatePackage::new(payload)).unwrap())
            .unwrap()
    }

    #[test]
    fn genuine_then_replay() {
        let (mut chain, mut cs) = golden();
        let f1 = frame(&mut chain, "sw1");
        let r = cs.handle_frame(&f1).unwrap();
        assert_eq!(r.status, UpdateStatus::Success);
        assert_eq!(r.message(), "Update successful");
        assert_eq!(r.ordinal, 1);
        assert_eq!(cs.token().to_hex(), T2);
        assert_eq!(
            cs.state().installed().next().unwrap().payload_digest,
            <[u8; 32]>::try_from(hex::decode(SW1_DIGEST).unwrap()).unwrap()
        );

        let before = cs.store().bytes().to_vec();
        let r = cs.handle_frame(&f1).unwrap();
        assert_eq!(r.status, UpdateStatus::Failed);
        assert_eq!(r.message(), "Error: Update Failed");
        assert_eq!(r.reason, Some(RejectReason::TokenMismatch));
        assert_eq!(cs.token().to_hex(), T2);
        assert_eq!(cs.store().bytes(), before);

        let f2 = frame(&mut chain, "sw2");
        assert!(cs.handle_frame(&f2).unwrap().is_success());
        assert_eq!(cs.token().to_hex(), T1);
        assert_eq!(cs.state().accepted(), 2);
    }

    #[test]
    fn flipped_payload_byte_fails() {
        let (mut chain, mut cs) = golden();
        let mut f = frame(&mut chain, "sw1");
        f[32] ^= 0x01;
        let r = cs.handle_frame(&f).unwrap();
        assert_eq!(r.status, UpdateStatus::Failed);
        assert_eq!(cs.token(), chain.trust_anchor());
    }

    #[test]
    fn malformed_frames_fail_without_hashing() {
        let (_, mut cs) = golden();
        let before = hash_counts();
        let r = cs.handle_frame(b"\x00\x01garbage").unwrap();
        assert_eq!(r.reason, Some(RejectReason::Malformed));
        assert_eq!(r.ordinal, 0);
        assert_eq!(hash_counts().since(before).total(), 0);
    }

    #[test]
    fn decision_costs_two_hashes() {
        let (mut chain, mut cs) = golden();
        let f = frame(&mut chain, "sw1");
        for _ in 0..2 {
            let before = hash_counts();
            cs.handle_frame(&f).unwrap();
            let d = hash_counts().since(before);
            assert_eq!((d.payload_digests, d.token_hashes), (1, 1));
        }
    }

    #[test]
    fn out_of_order_is_rejected_then_recovers() {
        let (mut chain, mut cs) = golden();
        let f1 = frame(&mut chain, "a");
        let f2 = frame(&mut chain, "b");
        assert!(!cs.handle_frame(&f2).unwrap().is_success());
        assert!(cs.handle_frame(&f1).unwrap().is_success());
        assert!(cs.handle_frame(&f2).unwrap().is_success());
    }

    #[test]
    fn state_round_trip() {
        let (mut chain, mut cs) = golden();
        cs.handle_frame(&frame(&mut chain, "sw1")).unwrap();
        let back = cs.store().restore().unwrap();
        assert_eq!(&back, cs.state());
        assert_eq!(back.token.to_hex(), T2);

        let fresh = CubeSatState::new(chain.id(), chain.trust_anchor());
        let back = CubeSatState::decode(&fresh.encode()).unwrap();
        assert_eq!(back.token, chain.trust_anchor());
        assert_eq!(back.accepted(), 0);
    }

    #[test]
    fn corrupt_state_is_refused() {
        let (mut chain, mut cs) = golden();
        cs.handle_frame(&frame(&mut chain, "sw1")).unwrap();
        let bytes = cs.store().bytes().to_vec();
        assert!(matches!(
            CubeSatState::decode(&bytes[..bytes.len() - 5]),
            Err(StateError::Length)
        ));
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x80;
        assert!(matches!(
            CubeSatState::decode(&flipped),
            Err(StateError::Checksum)
        ));
        assert!(matches!(
            CubeSatState::decode(b"CSUMSAT"),
            Err(StateError::BadMagic)
        ));
        let mut count = bytes.clone();
        count[57..61].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(
            CubeSatState::decode(&count),
            Err(StateError::Length)
        ));
    }

    #[test]
    fn file_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::new(dir.path().join("cs.state"));
        let (mut chain, _) = golden();
        let mut cs = CubeSat::provision(chain.id(), chain.trust_anchor(), store.clone()).unwrap();
        cs.handle_frame(&frame(&mut chain, "sw1")).unwrap();
        let restored = store.restore().unwrap();
        assert_eq!(&restored, cs.state());
        assert_eq!(restored.token.to_hex(), T2);
    }

    struct BrokenStore;
    impl StateStore for BrokenStore {
        fn persist(&mut self, _: &CubeSatState) -> Result<(), StateError> {
            Err(StateError::Io(std::io::Error::other("disk full")))
        }
    }

    #[test]
    fn failed_commit_leaves_state_unchanged() {
        let (mut chain, _) = golden();
        let state = CubeSatState::new(chain.id(), chain.trust_anchor());
        let mut cs = CubeSat::from_state(state.clone(), BrokenStore);
        assert!(cs.handle_frame(&frame(&mut chain, "sw1")).is_err());
        assert_eq!(cs.state(), &state);
    }

    #[test]
    fn reanchor_resets() {
        let (mut chain, mut cs) = golden();
        cs.handle_frame(&frame(&mut chain, "sw1")).unwrap();
        cs.handle_frame(&frame(&mut chain, "sw2")).unwrap();
        let next = HashChain::build(Seed::from_bytes([3; 32]), 4).unwrap();
        cs.reanchor(next.id(), next.trust_anchor()).unwrap();
        assert_eq!(cs.state().accepted(), 0);
        assert_eq!(cs.token(), next.trust_anchor());
    }
}
