//! Run manifests: a flat key-value record of the full configuration,
//! written alongside every command's outputs. The configuration digest lets
//! downstream tooling tell runs apart without parsing every key.

use std::fmt::Display;
use std::fmt::Write as _;
use std::path::Path;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, solver: &str) -> Self {
        let mut m = Self { entries: Vec::new() };
        m.push("artifact_version", ARTIFACT_VERSION);
        m.push("command", command);
        m.push("seed", seed);
        m.push("solver", solver);
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Replaces the value of an existing key (or appends it).
    pub fn set(&mut self, key: &str, value: impl Display) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = value.to_string(),
            None => self.push(key, value),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn body(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(self.body().as_bytes()))
    }

    /// `# key=value` lines every output file starts with: version, command,
    /// seed, solver tag and the configuration digest.
    pub fn file_header(&self) -> String {
        let mut out = String::new();
        for key in ["artifact_version", "command", "seed", "solver"] {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "# {key}={v}");
            }
        }
        let _ = writeln!(out, "# config_digest={}", self.digest());
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = self.body();
        let _ = writeln!(out, "config_digest={}", self.digest());
        std::fs::write(path, out)
    }
}
