#![no_main]

use csum_core::hash::hash_counts;
use csum_core::roles::{issue_from_chain, CubeSat, MemoryStore};
use csum_core::wire::decode_bundle;
use csum_core::{HashChain, Seed, SoftwareUpdatePackage};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut chain = HashChain::build(Seed::from_bytes([0; 32]), 3).unwrap();
    let genuine =
        issue_from_chain(&mut chain, &SoftwareUpdatePackage::new(b"sw1".to_vec())).unwrap();
    let mut cs = CubeSat::provision(chain.id(), chain.trust_anchor(), MemoryStore::new()).unwrap();
    let before = cs.store().bytes().to_vec();
    let counts = hash_counts();
    let report = cs.handle_frame(data).unwrap();
    let used = hash_counts().since(counts);
    match decode_bundle(data) {
        Ok(b) => {
            assert_eq!((used.token_hashes, used.payload_digests), (1, 1));
            let is_genuine = b.payload == genuine.payload && b.tt == genuine.tt;
            assert_eq!(report.is_success(), is_genuine);
        }
        Err(_) => {
            assert_eq!(used.total(), 0);
            assert!(!report.is_success());
        }
    }
    if !report.is_success() {
        assert_eq!(cs.store().bytes(), &before[..]);
    }
});
