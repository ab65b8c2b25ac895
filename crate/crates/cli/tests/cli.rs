use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn csum(args: &[&str], state_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csum"));
    cmd.args(args).env_remove("CSUM_STATE_DIR");
    if let Some(d) = state_dir {
        cmd.env("CSUM_STATE_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {key} in {text:?}"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

struct Setup {
    dir: tempfile::TempDir,
    anchor: String,
    chain_id: String,
}

impl Setup {
    fn new(length: u32) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let chain = dir.path().join("chain.bin");
        let o = csum(
            &[
                "admin-init",
                "--length",
                &length.to_string(),
                "--out",
                chain.to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.success(), "{o:?}");
        let out = stdout(&o);
        Setup {
            anchor: field(&out, "anchor "),
            chain_id: field(&out, "chain_id "),
            dir,
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn package(&self, payload: &[u8], out: &str) -> Output {
        let sup = self.path(&format!("{out}.sup"));
        fs::write(&sup, payload).unwrap();
        csum(
            &[
                "admin-package",
                "--chain",
                &self.path("chain.bin"),
                "--sup",
                &sup,
                "--out",
                &self.path(out),
            ],
            None,
        )
    }

    fn cs_init(&self) {
        let o = csum(
            &[
                "cs-init",
                "--anchor",
                &self.anchor,
                "--chain-id",
                &self.chain_id,
            ],
            Some(self.dir.path()),
        );
        assert!(o.status.success(), "{o:?}");
    }

    fn apply(&self, bundle: &str) -> Output {
        csum(
            &["cs-apply", "--bundle", &self.path(bundle)],
            Some(self.dir.path()),
        )
    }

    fn state(&self) -> Vec<u8> {
        fs::read(self.path("cubesat.state")).unwrap()
    }
}

#[test]
fn admin_init_prints_id_and_anchor() {
    let s = Setup::new(3);
    assert_eq!(s.anchor.len(), 64);
    assert_eq!(s.chain_id.len(), 32);
    assert_eq!(fs::metadata(s.path("chain.bin")).unwrap().len(), 161);
}

#[test]
fn admin_init_refuses_overwrite() {
    let s = Setup::new(3);
    let o = csum(
        &["admin-init", "--length", "3", "--out", &s.path("chain.bin")],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn genuine_updates_install_in_order() {
    let s = Setup::new(3);
    assert!(s.package(b"sw1", "b1").status.success());
    assert!(s.package(b"sw2", "b2").status.success());
    s.cs_init();
    let o = s.apply("b1");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "Update successful");
    assert_eq!(s.apply("b2").status.code(), Some(0));

    let o = csum(&["cs-status"], Some(s.dir.path()));
    assert_eq!(field(&stdout(&o), "accepted "), "2");
}

#[test]
fn replay_and_out_of_order_are_rejected_without_state_change() {
    let s = Setup::new(4);
    s.package(b"sw1", "b1");
    s.package(b"sw2", "b2");
    s.cs_init();

    let before = s.state();
    let o = s.apply("b2");
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "Error: Update Failed");
    assert_eq!(s.state(), before);

    assert!(s.apply("b1").status.success());
    let before = s.state();
    assert_eq!(s.apply("b1").status.code(), Some(1));
    assert_eq!(s.state(), before);
    assert!(s.apply("b2").status.success());
}

#[test]
fn tampered_bundle_is_rejected() {
    let s = Setup::new(3);
    s.package(b"firmware image", "b1");
    s.cs_init();
    let mut frame = fs::read(s.path("b1")).unwrap();
    frame[40] ^= 1;
    fs::write(s.path("bad"), &frame).unwrap();
    assert_eq!(s.apply("bad").status.code(), Some(1));
    fs::write(s.path("junk"), b"not a bundle").unwrap();
    assert_eq!(s.apply("junk").status.code(), Some(1));
    assert!(s.apply("b1").status.success());
}

#[test]
fn exhausted_chain_exits_2() {
    let s = Setup::new(2);
    assert!(s.package(b"only", "b1").status.success());
    let chain = fs::read(s.path("chain.bin")).unwrap();
    let o = s.package(b"more", "b2");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exhausted"));
    assert_eq!(fs::read(s.path("chain.bin")).unwrap(), chain);
}

#[test]
fn corrupt_state_exits_2() {
    let s = Setup::new(3);
    s.package(b"sw1", "b1");
    s.cs_init();
    let mut state = s.state();
    let last = state.len() - 1;
    state[last] ^= 0xff;
    fs::write(s.path("cubesat.state"), &state).unwrap();
    assert_eq!(s.apply("b1").status.code(), Some(2));
}

#[test]
fn missing_state_location_is_a_usage_error() {
    let o = csum(&["cs-status"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = csum(&["cs-init", "--anchor", "zz"], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(csum(&["no-such-command"], None).status.code(), Some(2));
}

#[test]
fn chain_id_defaults_to_anchor_derivation() {
    let s = Setup::new(3);
    let o = csum(&["cs-init", "--anchor", &s.anchor], Some(s.dir.path()));
    assert_eq!(field(&stdout(&o), "chain_id "), s.chain_id);
}

#[test]
fn bundled_scenarios_pass() {
    for name in [
        "genuine.toml",
        "replay.toml",
        "swap.toml",
        "tamper.toml",
        "flood.toml",
        "stochastic.toml",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t.jsonl");
        let o = csum(
            &[
                "sim-run",
                "--scenario",
                scenario(name).to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.success(), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("0 forgeries accepted"));
        let jsonl = fs::read_to_string(&out).unwrap();
        assert!(jsonl.lines().last().unwrap().starts_with("{\"summary\""));
    }
}

#[test]
fn sim_run_is_deterministic_per_seed() {
    let path = scenario("stochastic.toml");
    let run = |seed: &str| {
        stdout(&csum(
            &[
                "sim-run",
                "--scenario",
                path.to_str().unwrap(),
                "--seed",
                seed,
            ],
            None,
        ))
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn failed_expectation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.toml");
    fs::write(
        &p,
        "chain_length = 3\npayloads = [\"a\"]\n[expect]\naccepted = 2\n",
    )
    .unwrap();
    let o = csum(&["sim-run", "--scenario", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    fs::write(&p, "chain_length = 1\n").unwrap();
    let o = csum(&["sim-run", "--scenario", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "primitives = [\"hash\", \"encrypt\", \"decrypt\"]\nrepetitions = 3\nwarmup = 0\n\
         chain_sizes = [100, 200, 300, 400, 500]\nchain_repetitions = 3\n\
         [[corpus]]\nlabel = \"small\"\nbytes = 4096\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = csum(
        &[
            "bench-run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{o:?}");
    let chain = fs::read_to_string(out.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 6);
    assert!(out.join("samples.csv").exists());
    assert!(out.join("primitives.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["chains"].as_array().unwrap().len(), 5);

    fs::write(&cfg, "repetitions = 1\n").unwrap();
    let o = csum(
        &[
            "bench-run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}
