//! Artifact writing: header comments, config hashing, CSV rows.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Bits,
    Nats,
}

impl Unit {
    pub fn name(self) -> &'static str {
        match self {
            Unit::Bits => "bits",
            Unit::Nats => "nats",
        }
    }
}

/// Canonical JSON of the resolved configuration and its SHA-256.
pub fn config_digest<C: Serialize>(config: &C) -> (String, String) {
    let json = serde_json::to_string(config).expect("configs serialize");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        write!(hex, "{b:02x}").expect("writing to a String");
    }
    (json, hex)
}

/// CSV with a two-line comment header: tool/hash/unit, then the config.
pub fn csv<C: Serialize>(config: &C, unit: Unit, columns: &[&str], rows: &[Vec<String>]) -> String {
    let (json, hash) = config_digest(config);
    let mut out = format!("# sideinfo {VERSION} config_sha256={hash} unit={}\n# config={json}\n", unit.name());
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'a str,
    version: &'a str,
    config_sha256: String,
    unit: &'a str,
}

#[derive(Serialize)]
struct Document<'a, C: Serialize, B: Serialize> {
    header: Header<'a>,
    config: &'a C,
    result: &'a B,
}

/// Pretty JSON with the header embedded as a `header` object.
pub fn json<C: Serialize, B: Serialize>(config: &C, unit: Unit, body: &B) -> String {
    let (_, hash) = config_digest(config);
    let doc = Document {
        header: Header { tool: "sideinfo", version: VERSION, config_sha256: hash, unit: unit.name() },
        config,
        result: body,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("results serialize");
    s.push('\n');
    s
}

pub fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
