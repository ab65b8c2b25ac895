//! Deterministic simulation of the uplink under an active adversary.
//!
//! The administrator, a ground station and one satellite exchange frames
//! over a link the adversary fully controls. A run is a pure function of the
//! [`Scenario`] and its seed and yields a [`Transcript`] of every event
//! plus summary counters.

mod engine;
pub mod scenario;

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::hash::{hash_counts, HashCounts};
use crate::roles::{AdminError, CubeSat, StateError, StateStore, UpdateStatus};
use crate::token_protocol::{RejectReason, TransmissionToken};
use crate::wire::{UpdateBundle, WireError};

pub use engine::{run_scenario, run_scenario_with_seed};
pub use scenario::{
    AdversaryRates, BitFlip, ChannelAction, Expectations, MutationTarget, RandomPayloads, Scenario,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario error: {0}")]
    Config(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Admin(#[from] AdminError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Where a frame reaching the satellite came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameOrigin {
    Genuine { ordinal: u32 },
    Replay { capture: usize },
    Tampered,
    Swapped,
    Injected,
    Flood,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Issue {
        tick: u64,
        ordinal: u32,
        payload_len: usize,
    },
    Send {
        tick: u64,
        ordinal: u32,
        retransmit: bool,
    },
    Adversary {
        tick: u64,
        action: ChannelAction,
    },
    Skipped {
        tick: u64,
        action: ChannelAction,
        reason: String,
    },
    Decision {
        tick: u64,
        origin: FrameOrigin,
        frame_sha256: String,
        status: UpdateStatus,
        reason: Option<RejectReason>,
        token_hashes: u64,
        payload_digests: u64,
        token_index: Option<u32>,
    },
    Report {
        tick: u64,
        ordinal: u32,
        status: UpdateStatus,
        message: String,
        acknowledged: bool,
    },
    Timeout {
        tick: u64,
        ordinal: u32,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub completed: bool,
    pub accepted: u32,
    pub rejected: u32,
    pub rejected_by_reason: BTreeMap<String, u32>,
    pub forgeries_accepted: u32,
    pub genuine_rejected: u32,
    pub isolation_violations: u32,
    pub hash_count_anomalies: u32,
    pub cs_token_hashes: u64,
    pub cs_payload_digests: u64,
    pub adversarial_actions: u64,
    pub actions_by_kind: BTreeMap<String, u64>,
    pub forged_frames: u64,
    pub drops: u64,
    pub retransmissions: u64,
    pub final_token_index: Option<u32>,
}

impl Summary {
    pub fn cs_hash_invocations(&self) -> u64 {
        self.cs_token_hashes + self.cs_payload_digests
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub events: Vec<Event>,
    pub summary: Summary,
}

impl Transcript {
    /// One JSON object per line: every event, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": &self.summary });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    /// Checks the scenario's `[expect]` table plus the invariants that hold
    /// for every run: no forgery accepted, no genuine bundle rejected, state
    /// untouched by rejections and two hashes per well-formed frame.
    pub fn check(&self, expect: &Expectations) -> Vec<Assertion> {
        let s = &self.summary;
        let mut out = Vec::new();
        let mut push = |name: &str, expected: String, actual: String| {
            out.push(Assertion {
                name: name.to_string(),
                passed: expected == actual,
                expected,
                actual,
            });
        };
        push(
            "forgeries_accepted",
            expect.forgeries_accepted.unwrap_or(0).to_string(),
            s.forgeries_accepted.to_string(),
        );
        push(
            "genuine_rejected",
            "0".into(),
            s.genuine_rejected.to_string(),
        );
        push(
            "isolation_violations",
            "0".into(),
            s.isolation_violations.to_string(),
        );
        push(
            "hash_count_anomalies",
            "0".into(),
            s.hash_count_anomalies.to_string(),
        );
        if let Some(v) = expect.accepted {
            push("accepted", v.to_string(), s.accepted.to_string());
        }
        if let Some(v) = expect.rejected {
            push("rejected", v.to_string(), s.rejected.to_string());
        }
        if let Some(v) = expect.final_token_index {
            push(
                "final_token_index",
                v.to_string(),
                fmt_index(s.final_token_index),
            );
        }
        if let Some(v) = expect.completed {
            push("completed", v.to_string(), s.completed.to_string());
        }
        out
    }
}

fn fmt_index(i: Option<u32>) -> String {
    i.map_or_else(|| "none".into(), |i| i.to_string())
}

/// Applies bit flips to a copy of `bundle`.
pub fn attack_tamper(bundle: &UpdateBundle, ops: &[BitFlip]) -> UpdateBundle {
    let mut out = bundle.clone();
    let mut tt = *out.tt.as_bytes();
    for op in ops {
        let bytes: &mut [u8] = match op.target {
            MutationTarget::Payload => &mut out.payload,
            MutationTarget::Tt => &mut tt,
        };
        if bytes.is_empty() {
            continue;
        }
        let bit = op.bit % (bytes.len() as u64 * 8);
        bytes[(bit / 8) as usize] ^= 1 << (bit % 8);
    }
    out.tt = TransmissionToken::from_bytes(tt);
    out
}

/// How forged frames are built from an observed bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForgeryStrategy {
    /// Same header and payload, random transmission token.
    RandomTt,
    /// Same header, random payload of up to `max_len` bytes, random token.
    RandomBundle { max_len: usize },
}

pub fn forge_bundle<R: Rng + ?Sized>(
    template: &UpdateBundle,
    strategy: ForgeryStrategy,
    rng: &mut R,
) -> UpdateBundle {
    let mut out = template.clone();
    if let ForgeryStrategy::RandomBundle { max_len } = strategy {
        let len = rng.gen_range(0..=max_len);
        out.payload = (0..len).map(|_| rng.gen()).collect();
    }
    out.tt = TransmissionToken::from_bytes(rng.gen());
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FloodReport {
    pub frames: u32,
    pub accepted: u32,
    pub rejected: u32,
    pub token_hashes: u64,
    pub payload_digests: u64,
    /// Frames whose decision did not cost exactly one payload digest and
    /// one token hash.
    pub hash_count_anomalies: u32,
}

/// Sends `count` forged frames straight at `target`.
pub fn attack_flood<S: StateStore, R: Rng + ?Sized>(
    target: &mut CubeSat<S>,
    template: &UpdateBundle,
    count: u32,
    strategy: ForgeryStrategy,
    rng: &mut R,
) -> Result<FloodReport, SimError> {
    let mut report = FloodReport::default();
    for _ in 0..count {
        let frame = forge_bundle(template, strategy, rng).encode()?;
        let before = hash_counts();
        let r = target.handle_frame(&frame)?;
        let used = hash_counts().since(before);
        report.frames += 1;
        if r.is_success() {
            report.accepted += 1;
        } else {
            report.rejected += 1;
        }
        report.token_hashes += used.token_hashes;
        report.payload_digests += used.payload_digests;
        if used
            != (HashCounts {
                token_hashes: 1,
                payload_digests: 1,
            })
        {
            report.hash_count_anomalies += 1;
        }
    }
    Ok(report)
}
