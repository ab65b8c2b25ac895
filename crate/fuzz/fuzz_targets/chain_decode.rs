#![no_main]

use csum_core::HashChain;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(chain) = HashChain::decode(data) {
        assert_eq!(chain.encode(), data);
        assert!(HashChain::first_broken_link(chain.tokens()).is_none());
    }
});
