#![no_main]

use csum_core::wire::{decode_bundle, decode_bundle_view, peek_header};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let view = decode_bundle_view(data);
    let owned = decode_bundle(data);
    assert_eq!(view.is_ok(), owned.is_ok());
    if let Ok(b) = owned {
        assert!(peek_header(data).is_ok());
        assert_eq!(b.encode().unwrap(), data);
    }
});
