use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use csum_core::bench::{self, BenchConfig};
use csum_core::fsutil::{write_atomic, FileLock};
use csum_core::roles::{issue_from_chain, CubeSat, CubeSatState, FileStore};
use csum_core::simnet::{run_scenario_with_seed, Scenario};
use csum_core::{ChainId, HashChain, SoftwareUpdatePackage, Token};

const STATE_FILE_NAME: &str = "cubesat.state";

#[derive(Parser)]
#[command(
    name = "csum",
    version,
    about = "Hash-chain authenticated satellite software updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a hash chain from a fresh random seed.
    AdminInit {
        /// Chain length; supports length - 1 updates.
        #[arg(long)]
        length: u32,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing chain file.
        #[arg(long)]
        force: bool,
    },
    /// Wrap a software update into a bundle using the next chain tokens.
    AdminPackage {
        #[arg(long)]
        chain: PathBuf,
        /// Software update file.
        #[arg(long)]
        sup: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Install a trust anchor on the satellite.
    CsInit {
        /// Trust anchor, 64 hex digits.
        #[arg(long)]
        anchor: String,
        /// Chain id, 32 hex digits. Derived from the anchor if omitted.
        #[arg(long)]
        chain_id: Option<String>,
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        force: bool,
    },
    /// Verify a received bundle and install it if authentic.
    CsApply {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Show the satellite's stored token and install log.
    CsStatus {
        #[command(flatten)]
        state: StateArg,
    },
    /// Run an adversarial channel scenario.
    SimRun {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON-lines transcript here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the primitives and chain operations.
    BenchRun {
        /// Benchmark configuration (TOML). Built-in defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for samples.csv, chain.csv, primitives.csv and summary.json.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct StateArg {
    /// Satellite state file [default: $CSUM_STATE_DIR/cubesat.state]
    #[arg(long = "state")]
    path: Option<PathBuf>,
}

impl StateArg {
    fn resolve(&self) -> Result<PathBuf> {
        if let Some(p) = &self.path {
            return Ok(p.clone());
        }
        match std::env::var_os("CSUM_STATE_DIR") {
            Some(dir) => Ok(Path::new(&dir).join(STATE_FILE_NAME)),
            None => bail!("no --state given and CSUM_STATE_DIR is not set"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::AdminInit { length, out, force } => admin_init(length, &out, force),
        Command::AdminPackage { chain, sup, out } => admin_package(&chain, &sup, &out),
        Command::CsInit {
            anchor,
            chain_id,
            state,
            force,
        } => cs_init(&anchor, chain_id.as_deref(), &state.resolve()?, force),
        Command::CsApply { state, bundle } => cs_apply(&state.resolve()?, &bundle),
        Command::CsStatus { state } => cs_status(&state.resolve()?),
        Command::SimRun {
            scenario,
            seed,
            out,
        } => sim_run(&scenario, seed, out.as_deref()),
        Command::BenchRun { config, out } => bench_run(config.as_deref(), &out),
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

fn admin_init(length: u32, out: &Path, force: bool) -> Result<ExitCode> {
    let _lock = FileLock::acquire(out)?;
    refuse_overwrite(out, force)?;
    let chain = HashChain::build(csum_core::generate_seed()?, length)?;
    chain
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("chain_id {}", chain.id().to_hex());
    println!("anchor {}", chain.trust_anchor().to_hex());
    Ok(ExitCode::SUCCESS)
}

fn admin_package(chain_path: &Path, sup: &Path, out: &Path) -> Result<ExitCode> {
    let _lock = FileLock::acquire(chain_path)?;
    let mut chain =
        HashChain::load(chain_path).with_context(|| format!("reading {}", chain_path.display()))?;
    let payload = fs::read(sup).with_context(|| format!("reading {}", sup.display()))?;
    let name = sup
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bundle = issue_from_chain(&mut chain, &SoftwareUpdatePackage::named(name, payload))?;
    let frame = bundle.encode()?;
    // The spent tokens are recorded before the bundle exists, so a crash
    // can waste a token but never reuse one.
    chain
        .save(chain_path)
        .with_context(|| format!("writing {}", chain_path.display()))?;
    write_atomic(out, &frame).with_context(|| format!("writing {}", out.display()))?;
    println!("ordinal {}", bundle.ordinal);
    println!("remaining {}", chain.remaining());
    Ok(ExitCode::SUCCESS)
}

fn cs_init(anchor: &str, chain_id: Option<&str>, path: &Path, force: bool) -> Result<ExitCode> {
    let anchor = Token::from_hex(anchor).map_err(|e| anyhow!("--anchor: {e}"))?;
    let id = match chain_id {
        Some(h) => ChainId::from_hex(h).map_err(|e| anyhow!("--chain-id: {e}"))?,
        None => ChainId::for_anchor(&anchor),
    };
    let _lock = FileLock::acquire(path)?;
    refuse_overwrite(path, force)?;
    CubeSat::provision(id, anchor, FileStore::new(path))?;
    println!("chain_id {}", id.to_hex());
    Ok(ExitCode::SUCCESS)
}

fn load_state(path: &Path) -> Result<CubeSatState> {
    FileStore::new(path)
        .restore()
        .with_context(|| format!("loading state {}", path.display()))
}

fn cs_apply(path: &Path, bundle: &Path) -> Result<ExitCode> {
    let _lock = FileLock::acquire(path)?;
    let state = load_state(path)?;
    let frame = fs::read(bundle).with_context(|| format!("reading {}", bundle.display()))?;
    let mut cs = CubeSat::from_state(state, FileStore::new(path));
    let report = cs.handle_frame(&frame)?;
    println!("{}", report.message());
    if report.is_success() {
        log::info!("installed update {}", report.ordinal);
        Ok(ExitCode::SUCCESS)
    } else {
        log::info!("rejected: {:?}", report.reason);
        Ok(ExitCode::from(1))
    }
}

fn cs_status(path: &Path) -> Result<ExitCode> {
    let state = load_state(path)?;
    println!("chain_id {}", state.chain_id.to_hex());
    println!("token {}", state.token.to_hex());
    println!("accepted {}", state.accepted());
    for u in state.installed() {
        println!(
            "update {} sha256 {}",
            u.ordinal,
            hex::encode(u.payload_digest)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn sim_run(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::from_toml(&text)?;
    let transcript = run_scenario_with_seed(&scenario, seed.unwrap_or(scenario.rng_seed))?;
    let jsonl = transcript.to_jsonl();
    let mut report: Box<dyn Write> = match out {
        Some(p) => {
            write_atomic(p, jsonl.as_bytes())
                .with_context(|| format!("writing {}", p.display()))?;
            Box::new(std::io::stdout())
        }
        None => {
            print!("{jsonl}");
            Box::new(std::io::stderr())
        }
    };
    let s = &transcript.summary;
    writeln!(
        report,
        "accepted {}, rejected {}, adversarial actions {}, retransmissions {}",
        s.accepted, s.rejected, s.adversarial_actions, s.retransmissions
    )?;
    writeln!(report, "{} forgeries accepted", s.forgeries_accepted)?;
    let mut failed = false;
    for a in transcript.check(&scenario.expect) {
        let tag = if a.passed { "ok" } else { "FAILED" };
        writeln!(
            report,
            "assert {}: expected {}, got {} ... {tag}",
            a.name, a.expected, a.actual
        )?;
        failed |= !a.passed;
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn bench_run(config: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            BenchConfig::from_toml(&text)?
        }
        None => BenchConfig::default(),
    };
    let report = bench::run(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("samples.csv"), report.samples_csv().as_bytes())?;
    write_atomic(&out.join("chain.csv"), report.chain_csv().as_bytes())?;
    write_atomic(
        &out.join("primitives.csv"),
        report.primitive_csv().as_bytes(),
    )?;
    write_atomic(
        &out.join("summary.json"),
        serde_json_pretty(&report)?.as_bytes(),
    )?;
    print!("{}", report.summary_table());
    Ok(ExitCode::SUCCESS)
}

fn serde_json_pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
