//! Flat `key = value` configuration files with `[section]` headers.
//!
//! Keys mirror the long CLI flags (`sweep_t` and `sweep-t` are the same key).
//! Entries before any header, or under `[common]` or `[code]`, apply to every
//! subcommand; `[model]`, `[simulate]`, `[compare]` and `[table1]` apply only
//! to that subcommand. Boolean flags take `true` or `false`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(format!("line {}: unterminated section header", no + 1)))?;
            section = name.trim().to_ascii_lowercase();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("line {}: expected `key = value`", no + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::parse(format!("line {}: bad key `{}`", no + 1, k.trim())));
        }
        out.push(Entry { section: section.clone(), key, value: v.trim().to_string() });
    }
    Ok(out)
}

/// Flags contributed by the configuration to `subcommand`, in file order.
pub fn to_args(entries: &[Entry], subcommand: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for e in entries {
        let applies = matches!(e.section.as_str(), "" | "common" | "code") || e.section == subcommand;
        if !applies {
            continue;
        }
        if e.key == "config" {
            return Err(Error::parse("configuration files cannot include other files"));
        }
        match e.value.as_str() {
            "true" => args.push(format!("--{}", e.key)),
            "false" => {}
            v => {
                args.push(format!("--{}", e.key));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}
