//! Update bundle framing between ground station and satellite.
//!
//! ```text
//! offset     size     field
//! 0          8        magic "CSUMBND1"
//! 8          16       chain id
//! 24         4        ordinal, big-endian, 1-based (diagnostic only)
//! 28         4        payload length L, big-endian
//! 32         L        payload
//! 32+L       32       transmission token
//! ```
//!
//! Every frame is exactly `64 + L` bytes: 32 bytes of framing plus the
//! 32-byte transmission token, whatever the payload size.

use crate::hashchain::{ChainId, CHAIN_ID_LEN};
use crate::token_protocol::TransmissionToken;

pub const BUNDLE_MAGIC: &[u8; 8] = b"CSUMBND1";
pub const HEADER_LEN: usize = 8 + CHAIN_ID_LEN + 4 + 4;
pub const TT_LEN: usize = 32;
/// Bytes on the wire beyond the payload.
pub const WIRE_OVERHEAD: usize = HEADER_LEN + TT_LEN;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the 32-bit length field")]
    PayloadTooLarge(usize),
    #[error("bad bundle magic")]
    BadMagic,
    #[error("bundle truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("declared payload length {declared} disagrees with frame size {frame}")]
    LengthMismatch { declared: u32, frame: usize },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UpdateBundle {
    pub chain_id: ChainId,
    pub ordinal: u32,
    pub payload: Vec<u8>,
    pub tt: TransmissionToken,
}

/// Borrowed view of a frame; the payload is not copied.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BundleView<'a> {
    pub chain_id: ChainId,
    pub ordinal: u32,
    pub payload: &'a [u8],
    pub tt: TransmissionToken,
}

impl BundleView<'_> {
    pub fn to_owned(&self) -> UpdateBundle {
        UpdateBundle {
            chain_id: self.chain_id,
            ordinal: self.ordinal,
            payload: self.payload.to_vec(),
            tt: self.tt,
        }
    }
}

impl UpdateBundle {
    pub fn view(&self) -> BundleView<'_> {
        BundleView {
            chain_id: self.chain_id,
            ordinal: self.ordinal,
            payload: &self.payload,
            tt: self.tt,
        }
    }

    pub fn encoded_len(&self) -> usize {
        WIRE_OVERHEAD + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        encode_bundle(self)
    }
}

pub fn encode_bundle(b: &UpdateBundle) -> Result<Vec<u8>, WireError> {
    let len =
        u32::try_from(b.payload.len()).map_err(|_| WireError::PayloadTooLarge(b.payload.len()))?;
    let mut out = Vec::with_capacity(b.encoded_len());
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(b.chain_id.as_bytes());
    out.extend_from_slice(&b.ordinal.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&b.payload);
    out.extend_from_slice(b.tt.as_bytes());
    Ok(out)
}

/// Parses the header only; used by relays that do not inspect payloads.
pub fn peek_header(bytes: &[u8]) -> Result<(ChainId, u32, u32), WireError> {
    if bytes.len() < BUNDLE_MAGIC.len() || &bytes[..8] != BUNDLE_MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let chain_id = ChainId::from_bytes(bytes[8..24].try_into().unwrap());
    let ordinal = u32::from_be_bytes(bytes[24..28].try_into().unwrap());
    let len = u32::from_be_bytes(bytes[28..32].try_into().unwrap());
    Ok((chain_id, ordinal, len))
}

pub fn decode_bundle_view(bytes: &[u8]) -> Result<BundleView<'_>, WireError> {
    let (chain_id, ordinal, len) = peek_header(bytes)?;
    let needed = WIRE_OVERHEAD as u64 + len as u64;
    if (bytes.len() as u64) < needed {
        return Err(WireError::Truncated {
            needed: needed.min(usize::MAX as u64) as usize,
            have: bytes.len(),
        });
    }
    if bytes.len() as u64 != needed {
        return Err(WireError::LengthMismatch {
            declared: len,
            frame: bytes.len(),
        });
    }
    let end = HEADER_LEN + len as usize;
    let tt = TransmissionToken::from_bytes(bytes[end..].try_into().unwrap());
    Ok(BundleView {
        chain_id,
        ordinal,
        payload: &bytes[HEADER_LEN..end],
        tt,
    })
}

pub fn decode_bundle(bytes: &[u8]) -> Result<UpdateBundle, WireError> {
    decode_bundle_view(bytes).map(|v| v.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn bundle(payload: Vec<u8>) -> UpdateBundle {
        UpdateBundle {
            chain_id: ChainId::from_bytes([0xC5; 16]),
            ordinal: 7,
            payload,
            tt: TransmissionToken::from_bytes([0x3C; 32]),
        }
    }

    #[test]
    fn empty_payload_is_64_bytes() {
        let b = bundle(Vec::new());
        let bytes = encode_bundle(&b).unwrap();
        assert_eq!(bytes.len(), 64);
        assert_eq!(&bytes[..8], b"CSUMBND1");
        assert_eq!(&bytes[24..28], &[0, 0, 0, 7]);
        assert_eq!(&bytes[28..32], &[0, 0, 0, 0]);
        assert_eq!(decode_bundle(&bytes).unwrap(), b);
    }

    #[test]
    fn installer_sized_payload_has_fixed_overhead() {
        // Smallest payload of the benchmark corpus.
        let mut p = vec![0u8; 1_580_000];
        ChaCha20Rng::seed_from_u64(1).fill_bytes(&mut p);
        let bytes = encode_bundle(&bundle(p)).unwrap();
        assert_eq!(bytes.len(), 1_580_000 + 64);
    }

    #[test]
    fn garbage_and_truncation_are_errors() {
        let mut junk = [0u8; 10];
        ChaCha20Rng::seed_from_u64(2).fill_bytes(&mut junk);
        assert!(decode_bundle(&junk).is_err());

        let bytes = encode_bundle(&bundle(b"payload".to_vec())).unwrap();
        assert!(matches!(
            decode_bundle(&bytes[..bytes.len() - 1]),
            Err(WireError::Truncated { .. })
        ));
        assert!(matches!(
            decode_bundle(&bytes[..20]),
            Err(WireError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_bundle(&extra),
            Err(WireError::LengthMismatch { .. })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(decode_bundle(&magic), Err(WireError::BadMagic));
    }

    #[test]
    fn huge_declared_length_does_not_allocate() {
        let mut bytes = encode_bundle(&bundle(Vec::new())).unwrap();
        bytes[28..32].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(
            decode_bundle(&bytes),
            Err(WireError::Truncated { .. })
        ));
    }

    #[test]
    fn sixteen_mib_round_trip() {
        let b = bundle(vec![0x5A; 16 * 1024 * 1024]);
        let bytes = encode_bundle(&b).unwrap();
        assert_eq!(bytes.len() - b.payload.len(), WIRE_OVERHEAD);
        assert_eq!(decode_bundle(&bytes).unwrap(), b);
    }

    proptest! {
        #[test]
        fn round_trip(
            id in any::<[u8; 16]>(),
            ordinal in any::<u32>(),
            payload in proptest::collection::vec(any::<u8>(), 0..65536),
            tt in any::<[u8; 32]>(),
        ) {
            let b = UpdateBundle {
                chain_id: ChainId::from_bytes(id),
                ordinal,
                payload,
                tt: TransmissionToken::from_bytes(tt),
            };
            let bytes = encode_bundle(&b).unwrap();
            prop_assert_eq!(bytes.len(), 64 + b.payload.len());
            prop_assert_eq!(decode_bundle(&bytes).unwrap(), b);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_bundle(&bytes);
        }
    }
}
