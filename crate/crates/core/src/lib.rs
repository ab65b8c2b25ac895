//! Hash-chain authenticated software updates for resource-constrained
//! satellites.
//!
//! An administrator derives a hash chain from a secret seed and installs its
//! tip on the satellite as a trust anchor. Each update then reveals the next
//! chain element, XOR-encapsulated under a digest of the payload and the
//! satellite's current token, so the satellite authenticates the payload,
//! checks its integrity and rejects replays with a single token hash.

pub mod bench;
pub mod fsutil;
pub mod hash;
pub mod hashchain;
pub mod roles;
pub mod simnet;
pub mod token_protocol;
pub mod wire;

pub use hash::{Token, TOKEN_LEN};
pub use hashchain::{build_chain, generate_seed, ChainError, ChainId, HashChain, Seed, TokenPair};
pub use token_protocol::{
    derive_token, make_transmission_token, partial_token, verify, RejectReason,
    SoftwareUpdatePackage, TransmissionToken, VerificationOutcome,
};
pub use wire::{decode_bundle, encode_bundle, UpdateBundle};
