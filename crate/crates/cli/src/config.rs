//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

pub const KEYS: [&str; 12] = [
    "case",
    "matrix",
    "coords",
    "model",
    "K",
    "nu",
    "seed",
    "qmax",
    "radius",
    "nc-fraction",
    "tolerance",
    "out",
];

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
/// keys are errors.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown key '{k}'", no + 1));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: key '{k}' given twice", no + 1));
        }
    }
    Ok(map)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}
