//! Synthetic corpora and run helpers shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `(name, tier, pairs)`.
pub type DomainSpec = (&'static str, &'static str, usize);

pub const DESK: [DomainSpec; 4] = [
    ("news", "shared", 100),
    ("europarl", "shared", 100),
    ("crawl", "alice_private", 50),
    ("medical", "ood", 20),
];

pub const LARGE: [DomainSpec; 4] = [
    ("news", "shared", 7500),
    ("europarl", "shared", 7500),
    ("crawl", "alice_private", 2500),
    ("medical", "ood", 1000),
];

/// Zipf-ish token ids: small ids are much more frequent than large ones.
fn sentence(rng: &mut StdRng, prefix: char) -> String {
    let len = rng.random_range(6..=30);
    let mut s = String::new();
    for i in 0..len {
        let u: f64 = rng.random();
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{prefix}{}", (u * u * 8000.0) as u32);
    }
    s
}

/// Writes `<name>.src` / `<name>.ref` under `dir` and returns the
/// `[[corpus]]` TOML for them.
pub fn write_corpus(dir: &Path, domains: &[DomainSpec], seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut toml = String::new();
    for (name, tier, n) in domains {
        let mut src = String::new();
        let mut reference = String::new();
        for _ in 0..*n {
            src.push_str(&sentence(&mut rng, 's'));
            src.push('\n');
            reference.push_str(&sentence(&mut rng, 'e'));
            reference.push('\n');
        }
        fs::write(dir.join(format!("{name}.src")), src).unwrap();
        fs::write(dir.join(format!("{name}.ref")), reference).unwrap();
        let _ = write!(
            toml,
            "[[corpus]]\nname = \"{name}\"\ntier = \"{tier}\"\nsource = \"{name}.src\"\nreference = \"{name}.ref\"\n\n"
        );
    }
    toml
}

/// Writes `seqmia.toml` into `dir` with the given corpus blocks after `body`.
pub fn write_config(dir: &Path, corpus: &str, body: &str) -> PathBuf {
    let path = dir.join("seqmia.toml");
    fs::write(&path, format!("{body}\n{corpus}")).unwrap();
    path
}

/// Desk-scale run: small splits, a memorizing synthetic target, tiny groups.
pub fn desk_body() -> &'static str {
    r#"output_dir = "run"

[split]
k = 10
k_prime = 5

[target]
kind = "synthetic"
memorization = 1.0
noise = 0.3
seed = 11

[group]
size = 5
n_groups = 20
"#
}

pub fn desk_config(dir: &Path) -> PathBuf {
    let corpus = write_corpus(dir, &DESK, 7);
    write_config(dir, &corpus, desk_body())
}

pub fn seqmia(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqmia"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("spawn seqmia")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
