use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{
    attack_tamper, forge_bundle, BitFlip, ChannelAction, Event, ForgeryStrategy, FrameOrigin,
    MutationTarget, Scenario, SimError, Summary, Transcript,
};
use crate::hash::{hash_counts, sha256, Token};
use crate::hashchain::{generate_seed_from, ChainId};
use crate::roles::{Administrator, CubeSat, GroundStation, MemoryStore, UpdateReport};
use crate::token_protocol::SoftwareUpdatePackage;
use crate::wire::{decode_bundle, UpdateBundle};

const FORGED_MAX_LEN: usize = 64;

/// Runs `scenario` with its own `rng_seed`.
pub fn run_scenario(scenario: &Scenario) -> Result<Transcript, SimError> {
    run_scenario_with_seed(scenario, scenario.rng_seed)
}

pub fn run_scenario_with_seed(scenario: &Scenario, seed: u64) -> Result<Transcript, SimError> {
    scenario.validate()?;
    Sim::new(scenario, seed)?.run()
}

enum Action {
    Send { ordinal: u32, retransmit: bool },
    Arrive { frame: Vec<u8>, origin: FrameOrigin },
    Report(UpdateReport),
    Timeout { ordinal: u32, generation: u64 },
}

struct Scheduled {
    tick: u64,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.tick, other.seq).cmp(&(self.tick, self.seq))
    }
}

struct Sim<'a> {
    scenario: &'a Scenario,
    rng: ChaCha20Rng,
    admin: Administrator,
    chain_id: ChainId,
    token_index: BTreeMap<Token, u32>,
    gs: GroundStation,
    cs: CubeSat<MemoryStore>,
    payloads: VecDeque<Vec<u8>>,
    issued: Vec<UpdateBundle>,
    captured: Vec<Vec<u8>>,
    script: VecDeque<ChannelAction>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    tick: u64,
    generation: u64,
    last_send: Option<u64>,
    events: Vec<Event>,
    summary: Summary,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario, seed: u64) -> Result<Self, SimError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut admin = Administrator::new();
        let chain_seed = generate_seed_from(&mut rng).map_err(crate::roles::AdminError::from)?;
        let (chain_id, anchor) = admin.provision_with_seed(chain_seed, scenario.chain_length)?;
        let token_index = admin
            .chain(&chain_id)
            .expect("just registered")
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| (*t, i as u32 + 1))
            .collect();
        let payloads = match &scenario.random_payloads {
            Some(r) => (0..r.count)
                .map(|_| {
                    let len = rng.gen_range(r.min_len..=r.max_len);
                    (0..len).map(|_| rng.gen()).collect()
                })
                .collect(),
            None => scenario
                .payloads
                .iter()
                .map(|p| p.as_bytes().to_vec())
                .collect(),
        };
        Ok(Sim {
            scenario,
            rng,
            admin,
            chain_id,
            token_index,
            gs: GroundStation::new(),
            cs: CubeSat::provision(chain_id, anchor, MemoryStore::new())?,
            payloads,
            issued: Vec::new(),
            captured: Vec::new(),
            script: scenario.script.iter().cloned().collect(),
            queue: BinaryHeap::new(),
            seq: 0,
            tick: 0,
            generation: 0,
            last_send: None,
            events: Vec::new(),
            summary: Summary {
                scenario: scenario.name.clone(),
                seed,
                ..Summary::default()
            },
        })
    }

    fn schedule(&mut self, delay: u64, action: Action) {
        self.seq += 1;
        self.queue.push(Scheduled {
            tick: self.tick + delay,
            seq: self.seq,
            action,
        });
    }

    fn run(mut self) -> Result<Transcript, SimError> {
        self.issue_next()?;
        while let Some(next) = self.queue.pop() {
            if next.tick > self.scenario.max_ticks {
                break;
            }
            self.tick = next.tick;
            match next.action {
                Action::Send {
                    ordinal,
                    retransmit,
                } => self.send(ordinal, retransmit)?,
                Action::Arrive { frame, origin } => self.arrive(frame, origin)?,
                Action::Report(r) => self.report(r)?,
                Action::Timeout {
                    ordinal,
                    generation,
                } => self.timeout(ordinal, generation),
            }
        }
        self.summary.ticks = self.tick;
        self.summary.final_token_index = self.token_index.get(&self.cs.token()).copied();
        Ok(Transcript {
            events: self.events,
            summary: self.summary,
        })
    }

    fn pending_ordinal(&self) -> Option<u32> {
        self.admin.retransmit(&self.chain_id).map(|b| b.ordinal)
    }

    /// Issues the next payload, or once all are installed, plays out the
    /// rest of the script against the idle satellite.
    fn issue_next(&mut self) -> Result<(), SimError> {
        match self.payloads.pop_front() {
            Some(p) => {
                let bundle = self
                    .admin
                    .issue(&self.chain_id, &SoftwareUpdatePackage::new(p))?;
                self.events.push(Event::Issue {
                    tick: self.tick,
                    ordinal: bundle.ordinal,
                    payload_len: bundle.payload.len(),
                });
                let ordinal = bundle.ordinal;
                self.issued.push(bundle);
                self.schedule(
                    0,
                    Action::Send {
                        ordinal,
                        retransmit: false,
                    },
                );
            }
            None => {
                self.summary.completed = true;
                while let Some(action) = self.script.pop_front() {
                    self.standalone(action)?;
                }
            }
        }
        Ok(())
    }

    fn send(&mut self, ordinal: u32, retransmit: bool) -> Result<(), SimError> {
        let Some(bundle) = self.admin.retransmit(&self.chain_id) else {
            return Ok(());
        };
        if bundle.ordinal != ordinal {
            return Ok(());
        }
        let frame = self.gs.relay(bundle.encode()?);
        self.events.push(Event::Send {
            tick: self.tick,
            ordinal,
            retransmit,
        });
        if retransmit {
            self.summary.retransmissions += 1;
        }
        self.generation += 1;
        self.last_send = Some(self.tick);
        let generation = self.generation;
        self.schedule(
            self.scenario.timeout_ticks,
            Action::Timeout {
                ordinal,
                generation,
            },
        );
        self.transit(frame, ordinal)
    }

    fn next_action(&mut self) -> ChannelAction {
        if let Some(a) = self.script.pop_front() {
            return a;
        }
        let Some(rates) = &self.scenario.adversary else {
            return ChannelAction::Deliver;
        };
        let dist = WeightedIndex::new(rates.weights()).expect("validated weights");
        let max_flood = rates.max_flood;
        let n = self.captured.len();
        match dist.sample(&mut self.rng) {
            0 => ChannelAction::Deliver,
            1 => ChannelAction::Drop,
            2 => ChannelAction::Replay {
                capture: self.rng.gen_range(0..n),
            },
            4 if n > 1 => ChannelAction::SwapTt {
                tt_from: self.rng.gen_range(0..n - 1),
                payload_from: None,
            },
            3 | 4 => {
                let k = self.rng.gen_range(1..=3);
                let ops = (0..k)
                    .map(|_| BitFlip {
                        target: if self.rng.gen() {
                            MutationTarget::Payload
                        } else {
                            MutationTarget::Tt
                        },
                        bit: self.rng.gen(),
                    })
                    .collect();
                ChannelAction::Tamper { ops }
            }
            5 => ChannelAction::Inject,
            _ => ChannelAction::Flood {
                count: self.rng.gen_range(1..=max_flood),
            },
        }
    }

    fn capture(&self, index: usize) -> Result<UpdateBundle, SimError> {
        let frame = self.captured.get(index).ok_or_else(|| {
            SimError::Config(format!(
                "capture {index} referenced but only {} frames observed",
                self.captured.len()
            ))
        })?;
        Ok(decode_bundle(frame)?)
    }

    fn note_action(&mut self, action: &ChannelAction) {
        self.events.push(Event::Adversary {
            tick: self.tick,
            action: action.clone(),
        });
        if action.is_adversarial() {
            self.summary.adversarial_actions += 1;
            *self
                .summary
                .actions_by_kind
                .entry(action.kind().to_string())
                .or_default() += 1;
        }
    }

    fn deliver(&mut self, frame: Vec<u8>, origin: FrameOrigin) {
        if !matches!(
            origin,
            FrameOrigin::Genuine { .. } | FrameOrigin::Replay { .. }
        ) {
            self.summary.forged_frames += 1;
        }
        self.schedule(1, Action::Arrive { frame, origin });
    }

    fn forge(&mut self, template: &UpdateBundle) -> Result<Vec<u8>, SimError> {
        let strategy = ForgeryStrategy::RandomBundle {
            max_len: FORGED_MAX_LEN,
        };
        Ok(forge_bundle(template, strategy, &mut self.rng).encode()?)
    }

    fn swapped(
        &self,
        tt_from: usize,
        payload_from: Option<usize>,
        current: &UpdateBundle,
    ) -> Result<Vec<u8>, SimError> {
        let tt = self.capture(tt_from)?.tt;
        let mut b = match payload_from {
            Some(i) => self.capture(i)?,
            None => current.clone(),
        };
        b.tt = tt;
        Ok(b.encode()?)
    }

    fn transit(&mut self, frame: Vec<u8>, ordinal: u32) -> Result<(), SimError> {
        self.captured.push(frame.clone());
        let action = self.next_action();
        self.note_action(&action);
        let genuine = FrameOrigin::Genuine { ordinal };
        let current = decode_bundle(&frame)?;
        match action {
            ChannelAction::Deliver => self.deliver(frame, genuine),
            ChannelAction::Drop => self.summary.drops += 1,
            ChannelAction::Replay { capture } => {
                self.capture(capture)?;
                let old = self.captured[capture].clone();
                self.deliver(old, FrameOrigin::Replay { capture });
                self.deliver(frame, genuine);
            }
            ChannelAction::Tamper { ops } => {
                let t = attack_tamper(&current, &ops).encode()?;
                self.deliver(t, FrameOrigin::Tampered);
            }
            ChannelAction::SwapTt {
                tt_from,
                payload_from,
            } => {
                let f = self.swapped(tt_from, payload_from, &current)?;
                self.deliver(f, FrameOrigin::Swapped);
            }
            ChannelAction::Inject => {
                let f = self.forge(&current)?;
                self.deliver(f, FrameOrigin::Injected);
                self.deliver(frame, genuine);
            }
            ChannelAction::Flood { count } => {
                for _ in 0..count {
                    let f = self.forge(&current)?;
                    self.deliver(f, FrameOrigin::Flood);
                }
                self.deliver(frame, genuine);
            }
        }
        Ok(())
    }

    fn standalone(&mut self, action: ChannelAction) -> Result<(), SimError> {
        let last = self.captured.last().map(|f| decode_bundle(f)).transpose()?;
        let skip = |reason: &str| Event::Skipped {
            tick: self.tick,
            action: action.clone(),
            reason: reason.to_string(),
        };
        match (&action, last) {
            (ChannelAction::Replay { capture }, _) => {
                self.capture(*capture)?;
                let f = self.captured[*capture].clone();
                self.note_action(&action);
                self.deliver(f, FrameOrigin::Replay { capture: *capture });
            }
            (
                ChannelAction::SwapTt {
                    tt_from,
                    payload_from: Some(p),
                },
                Some(last),
            ) => {
                let f = self.swapped(*tt_from, Some(*p), &last)?;
                self.note_action(&action);
                self.deliver(f, FrameOrigin::Swapped);
            }
            (ChannelAction::Inject, Some(last)) => {
                self.note_action(&action);
                let f = self.forge(&last)?;
                self.deliver(f, FrameOrigin::Injected);
            }
            (ChannelAction::Flood { count }, Some(last)) => {
                self.note_action(&action);
                for _ in 0..*count {
                    let f = self.forge(&last)?;
                    self.deliver(f, FrameOrigin::Flood);
                }
            }
            (ChannelAction::Inject | ChannelAction::Flood { .. }, None) => {
                let e = skip("no frame observed to forge from");
                self.events.push(e);
            }
            _ => {
                let e = skip("no frame in transit");
                self.events.push(e);
            }
        }
        Ok(())
    }

    fn arrive(&mut self, frame: Vec<u8>, origin: FrameOrigin) -> Result<(), SimError> {
        let snapshot = self.cs.store().bytes().to_vec();
        let expected = self.issued.get(self.cs.state().accepted() as usize);
        let is_genuine = decode_bundle(&frame)
            .ok()
            .is_some_and(|b| expected.is_some_and(|e| e.payload == b.payload && e.tt == b.tt));
        let before = hash_counts();
        let report = self.cs.handle_frame(&frame)?;
        let used = hash_counts().since(before);

        let s = &mut self.summary;
        s.cs_token_hashes += used.token_hashes;
        s.cs_payload_digests += used.payload_digests;
        let well_formed = decode_bundle(&frame).is_ok();
        let expected_cost = if well_formed { (1, 1) } else { (0, 0) };
        if (used.token_hashes, used.payload_digests) != expected_cost {
            s.hash_count_anomalies += 1;
        }
        if report.is_success() {
            s.accepted += 1;
            if !is_genuine {
                s.forgeries_accepted += 1;
            }
        } else {
            s.rejected += 1;
            if let Some(r) = report.reason {
                *s.rejected_by_reason.entry(r.to_string()).or_default() += 1;
            }
            if is_genuine {
                s.genuine_rejected += 1;
            }
            if self.cs.store().bytes() != &snapshot[..] {
                s.isolation_violations += 1;
            }
        }
        self.events.push(Event::Decision {
            tick: self.tick,
            origin,
            frame_sha256: hex::encode(sha256(&frame)),
            status: report.status,
            reason: report.reason,
            token_hashes: used.token_hashes,
            payload_digests: used.payload_digests,
            token_index: self.token_index.get(&self.cs.token()).copied(),
        });
        self.schedule(1, Action::Report(report));
        Ok(())
    }

    fn report(&mut self, report: UpdateReport) -> Result<(), SimError> {
        self.gs.record_report(&report);
        let pending = self.pending_ordinal();
        let acknowledged = self.admin.acknowledge(&report);
        self.events.push(Event::Report {
            tick: self.tick,
            ordinal: report.ordinal,
            status: report.status,
            message: report.message().to_string(),
            acknowledged,
        });
        if acknowledged {
            self.issue_next()?;
        } else if !report.is_success()
            && pending == Some(report.ordinal)
            && self.last_send.is_some_and(|t| t < self.tick)
        {
            // At most one negative-acknowledgement resend per tick.
            self.last_send = Some(self.tick);
            self.schedule(
                0,
                Action::Send {
                    ordinal: report.ordinal,
                    retransmit: true,
                },
            );
        }
        Ok(())
    }

    fn timeout(&mut self, ordinal: u32, generation: u64) {
        if generation != self.generation || self.pending_ordinal() != Some(ordinal) {
            return;
        }
        self.events.push(Event::Timeout {
            tick: self.tick,
            ordinal,
        });
        self.schedule(
            0,
            Action::Send {
                ordinal,
                retransmit: true,
            },
        );
    }
}
