use serde::Serialize;

use crate::hash::sha256;
use crate::hashchain::ChainId;
use crate::roles::{UpdateReport, UpdateStatus};
use crate::wire::peek_header;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Forwarded,
    Acknowledged,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardRecord {
    /// `None` when the frame header could not be parsed.
    pub chain_id: Option<ChainId>,
    pub digest: [u8; 32],
    pub disposition: Disposition,
}

/// Store-and-forward relay. Frames pass through byte-for-byte.
#[derive(Debug, Default)]
pub struct GroundStation {
    log: Vec<ForwardRecord>,
}

impl GroundStation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn relay(&mut self, frame: Vec<u8>) -> Vec<u8> {
        self.log.push(ForwardRecord {
            chain_id: peek_header(&frame).ok().map(|(id, _, _)| id),
            digest: sha256(&frame),
            disposition: Disposition::Forwarded,
        });
        frame
    }

    /// Marks the most recent forwarded frame for the report's chain.
    pub fn record_report(&mut self, report: &UpdateReport) {
        if let Some(rec) = self.log.iter_mut().rev().find(|r| {
            r.chain_id == Some(report.chain_id) && r.disposition == Disposition::Forwarded
        }) {
            rec.disposition = match report.status {
                UpdateStatus::Success => Disposition::Acknowledged,
                UpdateStatus::Failed => Disposition::Failed,
            };
        }
    }

    pub fn log(&self) -> &[ForwardRecord] {
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token_protocol::TransmissionToken;
    use crate::wire::{encode_bundle, UpdateBundle};
    use sha2::{Digest, Sha256};

    fn frame(byte: u8) -> Vec<u8> {
        encode_bundle(&UpdateBundle {
            chain_id: ChainId::from_bytes([byte; 16]),
            ordinal: 1,
            payload: vec![byte; 100],
            tt: TransmissionToken::from_bytes([byte; 32]),
        })
        .unwrap()
    }

    #[test]
    fn relay_is_identity_and_logs() {
        let mut gs = GroundStation::new();
        for (i, f) in [frame(1), frame(2), b"not a bundle".to_vec()]
            .into_iter()
            .enumerate()
        {
            let out = gs.relay(f.clone());
            assert_eq!(out, f);
            assert_eq!(gs.log().len(), i + 1);
            let expect: [u8; 32] = Sha256::digest(&f).into();
            assert_eq!(gs.log()[i].digest, expect);
        }
        assert_eq!(gs.log()[0].chain_id, Some(ChainId::from_bytes([1; 16])));
        assert_eq!(gs.log()[2].chain_id, None);
    }

    #[test]
    fn reports_update_disposition() {
        let mut gs = GroundStation::new();
        gs.relay(frame(4));
        gs.record_report(&UpdateReport {
            chain_id: ChainId::from_bytes([4; 16]),
            ordinal: 1,
            status: UpdateStatus::Failed,
            reason: None,
        });
        assert_eq!(gs.log()[0].disposition, Disposition::Failed);
    }
}
