//! Scenario files.
//!
//! Scenarios are TOML. Top-level keys:
//!
//! | key               | meaning                                              |
//! |-------------------|------------------------------------------------------|
//! | `name`            | label echoed into the transcript                      |
//! | `rng_seed`        | PRNG seed (the CLI `--seed` flag overrides it)        |
//! | `chain_length`    | hash chain length `n` (at least 2)                    |
//! | `timeout_ticks`   | ticks before an unacknowledged bundle is resent (3)   |
//! | `max_ticks`       | hard stop for the event loop (100000)                 |
//! | `payloads`        | list of UTF-8 payload strings, issued in order        |
//! | `random_payloads` | `{ count, min_len, max_len }` instead of `payloads`   |
//! | `script`          | list of `[[script]]` channel actions                  |
//! | `adversary`       | stochastic action weights, used once the script ends  |
//! | `expect`          | assertions checked against the transcript             |
//!
//! Each genuine frame crossing the ground-station link consumes one action:
//! the next `[[script]]` entry, else a draw from `[adversary]`, else
//! `deliver`. Script entries left over once every payload is installed run
//! stand-alone if they can (`replay`, `inject`, `flood`, and `swap_tt` with
//! `payload_from`).
//!
//! ```toml
//! name = "token swap"
//! chain_length = 3
//! payloads = ["sw1", "sw2"]
//!
//! [[script]]
//! action = "deliver"
//!
//! [[script]]
//! action = "swap_tt"
//! tt_from = 1
//! payload_from = 0
//!
//! [expect]
//! accepted = 2
//! rejected = 1
//! ```

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationTarget {
    Payload,
    Tt,
}

/// Flip of one bit. Indices wrap around the target's length; payload flips
/// on an empty payload are no-ops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFlip {
    pub target: MutationTarget,
    pub bit: u64,
}

/// What the adversary does with one opportunity on the link.
///
/// Capture indices refer to frames previously seen on the link, oldest
/// first, counting the frame currently in transit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelAction {
    Deliver,
    Drop,
    /// Deliver a captured frame, then the one in transit.
    Replay {
        capture: usize,
    },
    /// Deliver a bit-flipped copy instead of the frame in transit.
    Tamper {
        ops: Vec<BitFlip>,
    },
    /// Instead of the frame in transit, deliver one carrying the
    /// transmission token of capture `tt_from` and the header and payload
    /// of capture `payload_from` (default: the frame in transit).
    SwapTt {
        tt_from: usize,
        #[serde(default)]
        payload_from: Option<usize>,
    },
    /// Deliver one forged frame, then the one in transit.
    Inject,
    /// Deliver `count` forged frames, then the one in transit.
    Flood {
        count: u32,
    },
}

impl ChannelAction {
    pub fn kind(&self) -> &'static str {
        match self {
            ChannelAction::Deliver => "deliver",
            ChannelAction::Drop => "drop",
            ChannelAction::Replay { .. } => "replay",
            ChannelAction::Tamper { .. } => "tamper",
            ChannelAction::SwapTt { .. } => "swap_tt",
            ChannelAction::Inject => "inject",
            ChannelAction::Flood { .. } => "flood",
        }
    }

    pub fn is_adversarial(&self) -> bool {
        !matches!(self, ChannelAction::Deliver)
    }
}

/// Relative weights for stochastic adversary actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryRates {
    #[serde(default)]
    pub deliver: f64,
    #[serde(default)]
    pub drop: f64,
    #[serde(default)]
    pub replay: f64,
    #[serde(default)]
    pub tamper: f64,
    #[serde(default)]
    pub swap_tt: f64,
    #[serde(default)]
    pub inject: f64,
    #[serde(default)]
    pub flood: f64,
    #[serde(default = "default_max_flood")]
    pub max_flood: u32,
}

fn default_max_flood() -> u32 {
    8
}

impl AdversaryRates {
    /// Every attack kind equally likely, delivery as likely as any attack.
    pub fn uniform() -> Self {
        AdversaryRates {
            deliver: 1.0,
            drop: 1.0,
            replay: 1.0,
            tamper: 1.0,
            swap_tt: 1.0,
            inject: 1.0,
            flood: 1.0,
            max_flood: default_max_flood(),
        }
    }

    pub(crate) fn weights(&self) -> [f64; 7] {
        [
            self.deliver,
            self.drop,
            self.replay,
            self.tamper,
            self.swap_tt,
            self.inject,
            self.flood,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPayloads {
    pub count: u32,
    #[serde(default)]
    pub min_len: usize,
    pub max_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub accepted: Option<u32>,
    pub rejected: Option<u32>,
    pub forgeries_accepted: Option<u32>,
    pub final_token_index: Option<u32>,
    pub completed: Option<bool>,
}

fn default_timeout() -> u64 {
    3
}
fn default_max_ticks() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub rng_seed: u64,
    pub chain_length: u32,
    #[serde(default = "default_timeout")]
    pub timeout_ticks: u64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub payloads: Vec<String>,
    #[serde(default)]
    pub random_payloads: Option<RandomPayloads>,
    #[serde(default)]
    pub script: Vec<ChannelAction>,
    #[serde(default)]
    pub adversary: Option<AdversaryRates>,
    #[serde(default)]
    pub expect: Expectations,
}

impl Scenario {
    pub fn new(chain_length: u32, payloads: &[&str]) -> Self {
        Scenario {
            name: String::new(),
            rng_seed: 0,
            chain_length,
            timeout_ticks: default_timeout(),
            max_ticks: default_max_ticks(),
            payloads: payloads.iter().map(|s| s.to_string()).collect(),
            random_payloads: None,
            script: Vec::new(),
            adversary: None,
            expect: Expectations::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn update_count(&self) -> u32 {
        match &self.random_payloads {
            Some(r) => r.count,
            None => self.payloads.len() as u32,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.chain_length < 2 {
            return err(format!("chain_length {} is below 2", self.chain_length));
        }
        if self.random_payloads.is_some() && !self.payloads.is_empty() {
            return err("use either `payloads` or `random_payloads`, not both".into());
        }
        if let Some(r) = &self.random_payloads {
            if r.min_len > r.max_len {
                return err("random_payloads.min_len exceeds max_len".into());
            }
        }
        if self.update_count() > self.chain_length - 1 {
            return err(format!(
                "{} updates requested but a chain of length {} supports {}",
                self.update_count(),
                self.chain_length,
                self.chain_length - 1
            ));
        }
        if self.timeout_ticks == 0 {
            return err("timeout_ticks must be positive".into());
        }
        for a in &self.script {
            if let ChannelAction::Flood { count: 0 } = a {
                return err("flood count must be at least 1".into());
            }
        }
        if let Some(r) = &self.adversary {
            let w = r.weights();
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return err("adversary weights must be finite and non-negative".into());
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return err("adversary weights are all zero".into());
            }
            if r.max_flood == 0 {
                return err("adversary.max_flood must be at least 1".into());
            }
        }
        Ok(())
    }
}
