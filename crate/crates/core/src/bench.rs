//! Timing harness for the primitive comparison and hash-chain scaling runs.
//!
//! The primitive run times, over each payload, the verifier's hash
//! (`h(SUP || token)`), RSA-2048 PSS signing and verification, and AES-256
//! CBC encryption and decryption. Signature timings cover the full call,
//! message hashing included. The chain run times chain generation and a
//! full sequential issue/encode/decode/verify pass for each chain length.

use std::fmt::Write as _;
use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use aes::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pss::{BlindedSigningKey, Signature, VerifyingKey};
use rsa::signature::{Keypair, RandomizedSigner, Verifier};
use rsa::RsaPrivateKey;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::hash::Token;
use crate::hashchain::{HashChain, Seed};
use crate::roles::{issue_from_chain, CubeSat, VolatileStore};
use crate::token_protocol::{partial_token, SoftwareUpdatePackage};
use crate::wire::encode_bundle;

type Aes256CbcEnc = cbc::Encryptor<aes::Aes256>;
type Aes256CbcDec = cbc::Decryptor<aes::Aes256>;

pub const RSA_BITS: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("primitive failed: {0}")]
    Primitive(String),
    #[error("chain verification pass rejected update {ordinal} of n = {n}")]
    VerificationFailed { n: u32, ordinal: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Hash,
    Sign,
    VerifySignature,
    Encrypt,
    Decrypt,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::Hash,
        Primitive::Sign,
        Primitive::VerifySignature,
        Primitive::Encrypt,
        Primitive::Decrypt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Hash => "hash",
            Primitive::Sign => "sign",
            Primitive::VerifySignature => "verify_signature",
            Primitive::Encrypt => "encrypt",
            Primitive::Decrypt => "decrypt",
        }
    }
}

/// One benchmark payload: a file on disk or a synthetic random blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    pub label: String,
    #[serde(default)]
    pub bytes: Option<usize>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl PayloadSpec {
    pub fn synthetic(label: &str, bytes: usize) -> Self {
        PayloadSpec {
            label: label.to_owned(),
            bytes: Some(bytes),
            path: None,
        }
    }
}

/// Four synthetic payloads between 1.58 and 15.09 MB.
pub fn default_corpus() -> Vec<PayloadSpec> {
    vec![
        PayloadSpec::synthetic("1.58MB", 1_580_000),
        PayloadSpec::synthetic("4.59MB", 4_590_000),
        PayloadSpec::synthetic("12.22MB", 12_220_000),
        PayloadSpec::synthetic("15.09MB", 15_090_000),
    ]
}

fn default_primitives() -> Vec<Primitive> {
    Primitive::ALL.to_vec()
}
fn default_repetitions() -> u32 {
    10
}
fn default_warmup() -> u32 {
    2
}
fn default_chain_sizes() -> Vec<u32> {
    vec![10_000, 20_000, 30_000, 40_000, 50_000]
}
fn default_chain_repetitions() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_corpus")]
    pub corpus: Vec<PayloadSpec>,
    #[serde(default = "default_primitives")]
    pub primitives: Vec<Primitive>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_warmup")]
    pub warmup: u32,
    #[serde(default = "default_chain_sizes")]
    pub chain_sizes: Vec<u32>,
    #[serde(default = "default_chain_repetitions")]
    pub chain_repetitions: u32,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            corpus: default_corpus(),
            primitives: default_primitives(),
            repetitions: default_repetitions(),
            warmup: default_warmup(),
            chain_sizes: default_chain_sizes(),
            chain_repetitions: default_chain_repetitions(),
            rng_seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig =
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions < 3 {
            return Err(BenchError::Config("repetitions must be at least 3".into()));
        }
        if self.chain_repetitions < 1 {
            return Err(BenchError::Config(
                "chain_repetitions must be at least 1".into(),
            ));
        }
        if let Some(n) = self.chain_sizes.iter().find(|&&n| n < 2) {
            return Err(BenchError::Config(format!("chain size {n} is below 2")));
        }
        for p in &self.corpus {
            if p.bytes.is_some() == p.path.is_some() {
                return Err(BenchError::Config(format!(
                    "payload {:?} needs exactly one of `bytes` or `path`",
                    p.label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub kind: String,
    pub label: String,
    pub bytes: usize,
    pub n: u32,
    pub repetition: u32,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingStats {
    pub median: f64,
    /// Median absolute deviation from the median.
    pub mad: f64,
    pub min: f64,
    pub max: f64,
    pub samples: Vec<f64>,
}

impl TimingStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty());
        let median = median(&samples);
        let deviations: Vec<f64> = samples.iter().map(|s| (s - median).abs()).collect();
        TimingStats {
            median,
            mad: median_of(deviations),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            samples,
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    median_of(xs.to_vec())
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrimitiveResult {
    pub primitive: Primitive,
    pub payload: String,
    pub bytes: usize,
    pub stats: TimingStats,
    /// `median(primitive) / median(hash)` on the same payload.
    pub ratio_to_hash: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainResult {
    pub n: u32,
    pub generate: TimingStats,
    pub verify: TimingStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub primitives: Vec<PrimitiveResult>,
    pub chains: Vec<ChainResult>,
    pub generate_fit: Option<LinearFit>,
    pub verify_fit: Option<LinearFit>,
    pub skipped: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl BenchReport {
    pub fn primitive(&self, primitive: Primitive, payload: &str) -> Option<&PrimitiveResult> {
        self.primitives
            .iter()
            .find(|r| r.primitive == primitive && r.payload == payload)
    }

    pub fn payload_labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.primitives {
            if !out.contains(&r.payload.as_str()) {
                out.push(&r.payload);
            }
        }
        out
    }

    /// One row per raw sample.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("kind,label,bytes,n,repetition,seconds\n");
        for x in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.9}",
                x.kind, x.label, x.bytes, x.n, x.repetition, x.seconds
            );
        }
        s
    }

    /// One row per chain length with median timings.
    pub fn chain_csv(&self) -> String {
        let mut s = String::from("n,generate_median_s,verify_median_s\n");
        for c in &self.chains {
            let _ = writeln!(s, "{},{:.9},{:.9}", c.n, c.generate.median, c.verify.median);
        }
        s
    }

    /// One row per primitive and payload with median timings.
    pub fn primitive_csv(&self) -> String {
        let mut s = String::from("primitive,payload,bytes,median_s,mad_s,ratio_to_hash\n");
        for r in &self.primitives {
            let ratio = r
                .ratio_to_hash
                .map(|x| format!("{x:.3}"))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{:.9},{:.9},{}",
                r.primitive.name(),
                r.payload,
                r.bytes,
                r.stats.median,
                r.stats.mad,
                ratio
            );
        }
        s
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        if !self.primitives.is_empty() {
            let _ = writeln!(
                s,
                "{:<18} {:>10} {:>14} {:>12}",
                "primitive", "payload", "median (s)", "x hash"
            );
            for r in &self.primitives {
                let ratio = r
                    .ratio_to_hash
                    .map(|x| format!("{x:.2}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    s,
                    "{:<18} {:>10} {:>14.6} {:>12}",
                    r.primitive.name(),
                    r.payload,
                    r.stats.median,
                    ratio
                );
            }
        }
        if !self.chains.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            let _ = writeln!(
                s,
                "{:>8} {:>16} {:>16}",
                "n", "generate (s)", "verify all (s)"
            );
            for c in &self.chains {
                let _ = writeln!(
                    s,
                    "{:>8} {:>16.6} {:>16.6}",
                    c.n, c.generate.median, c.verify.median
                );
            }
            if let (Some(g), Some(v)) = (self.generate_fit, self.verify_fit) {
                let _ = writeln!(
                    s,
                    "linear fit R^2: generate {:.4}, verify {:.4}",
                    g.r_squared, v.r_squared
                );
            }
        }
        for k in &self.skipped {
            let _ = writeln!(s, "skipped: {k}");
        }
        s
    }
}

struct RsaKeys {
    signing: BlindedSigningKey<Sha256>,
    verifying: VerifyingKey<Sha256>,
}

struct Keys {
    rsa: Option<RsaKeys>,
    aes_key: [u8; 32],
    aes_iv: [u8; 16],
}

fn load_payload(spec: &PayloadSpec, rng: &mut ChaCha20Rng) -> std::io::Result<Vec<u8>> {
    match (&spec.path, spec.bytes) {
        (Some(p), _) => std::fs::read(p),
        (None, Some(n)) => {
            let mut v = vec![0u8; n];
            rng.fill_bytes(&mut v);
            Ok(v)
        }
        (None, None) => Err(std::io::Error::other("payload has neither bytes nor path")),
    }
}

fn time<T>(f: impl FnOnce() -> T) -> f64 {
    let start = Instant::now();
    black_box(f());
    start.elapsed().as_secs_f64()
}

fn run_primitive(
    p: Primitive,
    payload: &[u8],
    keys: &Keys,
    signature: Option<&Signature>,
    ciphertext: &[u8],
    token: &Token,
    rng: &mut ChaCha20Rng,
) -> Result<f64, BenchError> {
    Ok(match p {
        Primitive::Hash => time(|| partial_token(payload, token)),
        Primitive::Sign => {
            let rsa = keys
                .rsa
                .as_ref()
                .expect("RSA key generated when signing is benchmarked");
            time(|| rsa.signing.sign_with_rng(rng, payload))
        }
        Primitive::VerifySignature => {
            let rsa = keys
                .rsa
                .as_ref()
                .expect("RSA key generated when signing is benchmarked");
            let signature = signature.expect("signature computed when RSA key exists");
            let start = Instant::now();
            rsa.verifying
                .verify(payload, signature)
                .map_err(|e| BenchError::Primitive(e.to_string()))?;
            start.elapsed().as_secs_f64()
        }
        Primitive::Encrypt => time(|| {
            Aes256CbcEnc::new(&keys.aes_key.into(), &keys.aes_iv.into())
                .encrypt_padded_vec_mut::<Pkcs7>(payload)
        }),
        Primitive::Decrypt => {
            let start = Instant::now();
            let plain = Aes256CbcDec::new(&keys.aes_key.into(), &keys.aes_iv.into())
                .decrypt_padded_vec_mut::<Pkcs7>(ciphertext)
                .map_err(|e| BenchError::Primitive(e.to_string()))?;
            let t = start.elapsed().as_secs_f64();
            black_box(plain);
            t
        }
    })
}

/// Times every configured primitive over every corpus payload.
pub fn bench_primitives(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
    let mut report = BenchReport::default();
    let needs_rsa = cfg
        .primitives
        .iter()
        .any(|p| matches!(p, Primitive::Sign | Primitive::VerifySignature));
    let rsa = if needs_rsa {
        let private = RsaPrivateKey::new(&mut rng, RSA_BITS)
            .map_err(|e| BenchError::Primitive(e.to_string()))?;
        let signing = BlindedSigningKey::<Sha256>::new(private);
        Some(RsaKeys {
            verifying: signing.verifying_key(),
            signing,
        })
    } else {
        None
    };
    let mut aes_key = [0u8; 32];
    let mut aes_iv = [0u8; 16];
    rng.fill_bytes(&mut aes_key);
    rng.fill_bytes(&mut aes_iv);
    let keys = Keys {
        rsa,
        aes_key,
        aes_iv,
    };
    let token = Token::from_bytes([0x42; 32]);

    for spec in &cfg.corpus {
        let payload = match load_payload(spec, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping payload {}: {e}", spec.label);
                report.skipped.push(format!("{}: {e}", spec.label));
                continue;
            }
        };
        let signature = keys
            .rsa
            .as_ref()
            .map(|k| k.signing.sign_with_rng(&mut rng, &payload));
        let ciphertext = Aes256CbcEnc::new(&keys.aes_key.into(), &keys.aes_iv.into())
            .encrypt_padded_vec_mut::<Pkcs7>(&payload);

        let mut per_payload = Vec::new();
        for &p in &cfg.primitives {
            for _ in 0..cfg.warmup {
                run_primitive(
                    p,
                    &payload,
                    &keys,
                    signature.as_ref(),
                    &ciphertext,
                    &token,
                    &mut rng,
                )?;
            }
            let mut samples = Vec::with_capacity(cfg.repetitions as usize);
            for rep in 0..cfg.repetitions {
                let s = run_primitive(
                    p,
                    &payload,
                    &keys,
                    signature.as_ref(),
                    &ciphertext,
                    &token,
                    &mut rng,
                )?;
                report.samples.push(Sample {
                    kind: p.name().to_owned(),
                    label: spec.label.clone(),
                    bytes: payload.len(),
                    n: 0,
                    repetition: rep,
                    seconds: s,
                });
                samples.push(s);
            }
            per_payload.push(PrimitiveResult {
                primitive: p,
                payload: spec.label.clone(),
                bytes: payload.len(),
                stats: TimingStats::from_samples(samples),
                ratio_to_hash: None,
            });
        }
        let hash_median = per_payload
            .iter()
            .find(|r| r.primitive == Primitive::Hash)
            .map(|r| r.stats.median);
        if let Some(h) = hash_median {
            for r in &mut per_payload {
                r.ratio_to_hash = Some(r.stats.median / h);
            }
        }
        report.primitives.extend(per_payload);
    }
    Ok(report)
}

/// Issues, frames, decodes and verifies every update of a fresh chain of
/// length `n` with an empty payload. Returns the elapsed seconds.
pub fn full_verification_pass(seed: [u8; 32], n: u32) -> Result<f64, BenchError> {
    let mut chain = HashChain::build(Seed::from_bytes(seed), n)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let mut cs = CubeSat::provision(chain.id(), chain.trust_anchor(), VolatileStore)
        .map_err(|e| BenchError::Primitive(e.to_string()))?;
    let sup = SoftwareUpdatePackage::default();
    let start = Instant::now();
    while chain.remaining() > 0 {
        let bundle =
            issue_from_chain(&mut chain, &sup).map_err(|e| BenchError::Primitive(e.to_string()))?;
        let frame = encode_bundle(&bundle).map_err(|e| BenchError::Primitive(e.to_string()))?;
        let report = cs
            .handle_frame(&frame)
            .map_err(|e| BenchError::Primitive(e.to_string()))?;
        if !report.is_success() {
            return Err(BenchError::VerificationFailed {
                n,
                ordinal: bundle.ordinal,
            });
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Chain generation and full verification timings for each chain size.
pub fn bench_chain(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    if cfg.chain_sizes.is_empty() {
        return Err(BenchError::Config("chain_sizes is empty".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed ^ 0xC4A1_4000);
    let mut report = BenchReport::default();
    for &n in &cfg.chain_sizes {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        // Warm-up pass, discarded.
        full_verification_pass(seed, n.min(1000))?;
        let mut gen = Vec::new();
        let mut ver = Vec::new();
        for rep in 0..cfg.chain_repetitions {
            let g = time(|| HashChain::build(Seed::from_bytes(seed), n));
            let v = full_verification_pass(seed, n)?;
            for (kind, s) in [("chain_generate", g), ("chain_verify", v)] {
                report.samples.push(Sample {
                    kind: kind.into(),
                    label: format!("n={n}"),
                    bytes: 0,
                    n,
                    repetition: rep,
                    seconds: s,
                });
            }
            gen.push(g);
            ver.push(v);
        }
        report.chains.push(ChainResult {
            n,
            generate: TimingStats::from_samples(gen),
            verify: TimingStats::from_samples(ver),
        });
    }
    if report.chains.len() >= 2 {
        let xs: Vec<f64> = report.chains.iter().map(|c| c.n as f64).collect();
        let g: Vec<f64> = report.chains.iter().map(|c| c.generate.median).collect();
        let v: Vec<f64> = report.chains.iter().map(|c| c.verify.median).collect();
        report.generate_fit = Some(linear_fit(&xs, &g));
        report.verify_fit = Some(linear_fit(&xs, &v));
    }
    Ok(report)
}

/// Runs both studies and merges the reports.
pub fn run(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let mut report = if cfg.corpus.is_empty() || cfg.primitives.is_empty() {
        BenchReport::default()
    } else {
        bench_primitives(cfg)?
    };
    if !cfg.chain_sizes.is_empty() {
        let chain = bench_chain(cfg)?;
        report.chains = chain.chains;
        report.generate_fit = chain.generate_fit;
        report.verify_fit = chain.verify_fit;
        report.samples.extend(chain.samples);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_noise_is_poor() {
        let f = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0, 1.0, -1.0]);
        assert!(f.r_squared < 0.5);
    }

    #[test]
    fn stats() {
        let s = TimingStats::from_samples(vec![3.0, 1.0, 2.0, 10.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 10.0);
        assert_eq!(s.mad, 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig::from_toml("repetitions = 2").is_err());
        assert!(BenchConfig::from_toml("chain_sizes = [1]").is_err());
        assert!(BenchConfig::from_toml("bogus = 1").is_err());
        assert!(
            BenchConfig::from_toml("[[corpus]]\nlabel = \"x\"\nbytes = 10\npath = \"/tmp/x\"")
                .is_err()
        );
        let cfg = BenchConfig::from_toml("chain_sizes = [100, 200]").unwrap();
        assert_eq!(cfg.corpus.len(), 4);
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.warmup, 2);
    }

    #[test]
    fn verification_pass_accepts_every_update() {
        full_verification_pass([5; 32], 200).unwrap();
    }

    #[test]
    fn missing_file_is_skipped() {
        let cfg = BenchConfig {
            corpus: vec![
                PayloadSpec {
                    label: "gone".into(),
                    bytes: None,
                    path: Some("/nonexistent/payload.bin".into()),
                },
                PayloadSpec::synthetic("tiny", 4096),
            ],
            primitives: vec![Primitive::Hash, Primitive::Encrypt, Primitive::Decrypt],
            repetitions: 3,
            warmup: 1,
            chain_sizes: vec![],
            chain_repetitions: 1,
            rng_seed: 1,
        };
        let r = bench_primitives(&cfg).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.payload_labels(), vec!["tiny"]);
        assert_eq!(
            r.primitive(Primitive::Hash, "tiny").unwrap().ratio_to_hash,
            Some(1.0)
        );
        assert_eq!(r.samples.len(), 9);
    }
}
