#![no_main]

use csum_core::roles::CubeSatState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = CubeSatState::decode(data) {
        assert_eq!(state.encode(), data);
    }
});
