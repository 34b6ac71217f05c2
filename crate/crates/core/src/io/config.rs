//! TOML sweep configurations.
//!
//! ```toml
//! schema_version = 1
//! scheme = "hogmt-precode"
//! snr_grid_db = [0, 5, 10, 15, 20]
//! truncation = "count:0.99"
//! seed = 7
//!
//! [kernel]
//! preset = "mu-mimo-ns"
//!
//! [[compare]]
//! label = "zf"
//! scheme = "zf-slice"
//! ```
//!
//! The top level describes one sweep; each `[[compare]]` entry adds another
//! sweep that shares the kernel, constellation, SNR grid, trial counts and
//! seed and overrides scheme-level settings. A `[kernel]` table holding only
//! `preset` expands to the full parameter block, which is what gets saved.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::chankernel::KernelModel;
use crate::error::{Error, Result};
use crate::hogmt::Truncation;
use crate::modem::{Constellation, Equalizer};
use crate::sim::{Scheme, SimConfig};

pub const SCHEMA_VERSION: i64 = 1;

const TOP_KEYS: &[&str] = &[
    "schema_version",
    "label",
    "scheme",
    "constellation",
    "snr_grid_db",
    "n_trials",
    "frames_per_trial",
    "truncation",
    "zp_fraction",
    "csi_error_std",
    "equalizer",
    "normalize_power",
    "sigma_floor",
    "otfs_doppler_bins",
    "seed",
    "kernel",
    "compare",
];

/// Keys a `[[compare]]` entry may override.
const VARIANT_KEYS: &[&str] = &[
    "label",
    "scheme",
    "truncation",
    "zp_fraction",
    "csi_error_std",
    "equalizer",
    "normalize_power",
    "sigma_floor",
    "otfs_doppler_bins",
];

/// A parsed configuration file: the primary sweep followed by its
/// comparison variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub sweeps: Vec<SimConfig>,
}

impl ConfigDocument {
    pub fn single(config: SimConfig) -> Self {
        Self { sweeps: vec![config] }
    }

    pub fn primary(&self) -> &SimConfig {
        &self.sweeps[0]
    }
}

pub fn load_config(path: &Path) -> Result<ConfigDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses and validates configuration text. `origin` names the source in
/// error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ConfigDocument> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: origin.into(),
        message: e.to_string(),
    })?;
    let lines = LineIndex::new(text);
    let mut v = Violations::default();

    for key in table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            v.push(lines.find(None, key), key, "unknown key");
        }
    }
    match table.get("schema_version") {
        None => v.push(None, "schema_version", "missing (expected 1)"),
        Some(Value::Integer(SCHEMA_VERSION)) => {}
        Some(other) => v.push(
            lines.find(None, "schema_version"),
            "schema_version",
            &format!("unsupported version {other}, expected {SCHEMA_VERSION}"),
        ),
    }
    let kernel = match table.get("kernel") {
        None => {
            v.push(None, "kernel", "missing [kernel] table");
            None
        }
        Some(Value::Table(t)) => match parse_kernel_table(t) {
            Ok(k) => Some(k),
            Err(msg) => {
                v.push(lines.section("kernel"), "kernel", &msg);
                None
            }
        },
        Some(_) => {
            v.push(lines.find(None, "kernel"), "kernel", "must be a table");
            None
        }
    };

    let mut base = SimConfig::new(
        kernel.clone().unwrap_or(KernelModel::Identity {
            n_space: 1,
            n_time: 1,
            sample_period_s: 1.0,
        }),
        Scheme::HogmtPrecode,
    );
    if !table.contains_key("scheme") {
        v.push(None, "scheme", "missing");
    }
    apply_shared(&table, &mut base, &lines, &mut v);
    apply_variant(&table, None, &mut base, &lines, &mut v);

    let mut sweeps = vec![base.clone()];
    match table.get("compare") {
        None => {}
        Some(Value::Array(entries)) => {
            for (i, entry) in entries.iter().enumerate() {
                let Some(t) = entry.as_table() else {
                    v.push(lines.find(None, "compare"), "compare", "entries must be tables");
                    continue;
                };
                for key in t.keys() {
                    if !VARIANT_KEYS.contains(&key.as_str()) {
                        v.push(
                            lines.find(Some(("compare", i)), key),
                            &format!("compare[{i}].{key}"),
                            "unknown or non-overridable key",
                        );
                    }
                }
                let mut c = base.clone();
                c.label = None;
                apply_variant(t, Some(i), &mut c, &lines, &mut v);
                sweeps.push(c);
            }
        }
        Some(_) => v.push(lines.find(None, "compare"), "compare", "must be an array of tables"),
    }

    if kernel.is_some() {
        for (i, c) in sweeps.iter().enumerate() {
            let section = (i > 0).then(|| ("compare", i - 1));
            for msg in c.violations() {
                let field = msg.split([':', '.', '[']).next().unwrap_or("").trim().to_string();
                let line = if field == "kernel" {
                    lines.section("kernel")
                } else {
                    lines.find(section, &field).or_else(|| lines.find(None, &field))
                };
                let name = match section {
                    Some((_, j)) => format!("compare[{j}]"),
                    None => String::new(),
                };
                v.push_raw(line, &name, &msg);
            }
        }
        let mut labels: Vec<String> = sweeps.iter().map(SimConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            v.push(None, "label", &format!("duplicate curve label '{}'", w[0]));
        }
    }

    let mut seen = std::collections::HashSet::new();
    v.0.retain(|m| seen.insert(m.clone()));
    if v.0.is_empty() {
        Ok(ConfigDocument { sweeps })
    } else {
        Err(Error::Validation {
            path: origin.into(),
            violations: v.0,
        })
    }
}

/// Resolves a `[kernel]` table: either `preset = "<name>"` alone or a full
/// `model = ...` block.
pub fn parse_kernel_table(t: &Table) -> std::result::Result<KernelModel, String> {
    if !t.contains_key("model") {
        let Some(name) = t.get("preset") else {
            return Err("needs either `preset` or `model`".into());
        };
        let name = name.as_str().ok_or("`preset` must be a string")?;
        if t.len() > 1 {
            return Err("a bare `preset` cannot be combined with other keys; \
                        write the full block with `model = \"tdl\"` to change parameters"
                .into());
        }
        return KernelModel::preset(name).ok_or_else(|| {
            format!("unknown preset '{name}', expected identity, mu-mimo-ns or eva-ns")
        });
    }
    Value::Table(t.clone()).try_into::<KernelModel>().map_err(|e| e.to_string().trim().to_string())
}

fn apply_shared(t: &Table, c: &mut SimConfig, lines: &LineIndex, v: &mut Violations) {
    let at = |k: &str| lines.find(None, k);
    if let Some(x) = t.get("constellation") {
        match x.as_str().map(str::parse::<Constellation>) {
            Some(Ok(k)) => c.constellation = k,
            Some(Err(e)) => v.push(at("constellation"), "constellation", &e.to_string()),
            None => v.push(at("constellation"), "constellation", "must be a string"),
        }
    }
    if let Some(x) = t.get("snr_grid_db") {
        match x.as_array().map(|a| a.iter().map(number).collect::<Option<Vec<f64>>>()) {
            Some(Some(grid)) => c.snr_grid_db = grid,
            _ => v.push(at("snr_grid_db"), "snr_grid_db", "must be an array of numbers"),
        }
    }
    if let Some(n) = count(t, "n_trials", None, lines, v) {
        c.n_trials = n;
    }
    if let Some(n) = count(t, "frames_per_trial", None, lines, v) {
        c.frames_per_trial = n;
    }
    if let Some(x) = t.get("seed") {
        match x.as_integer() {
            Some(s) if s >= 0 => c.rng_seed = s as u64,
            _ => v.push(at("seed"), "seed", "must be a non-negative integer"),
        }
    }
}

fn apply_variant(
    t: &Table,
    entry: Option<usize>,
    c: &mut SimConfig,
    lines: &LineIndex,
    v: &mut Violations,
) {
    let section = entry.map(|i| ("compare", i));
    let name = |k: &str| match entry {
        Some(i) => format!("compare[{i}].{k}"),
        None => k.to_string(),
    };
    let at = |k: &str| lines.find(section, k);
    if let Some(x) = t.get("label") {
        match x.as_str() {
            Some(s) => c.label = Some(s.to_string()),
            None => v.push(at("label"), &name("label"), "must be a string"),
        }
    }
    if let Some(x) = t.get("scheme") {
        match x.as_str().map(str::parse::<Scheme>) {
            Some(Ok(s)) => c.scheme = s,
            Some(Err(e)) => v.push(at("scheme"), &name("scheme"), &e.to_string()),
            None => v.push(at("scheme"), &name("scheme"), "must be a string"),
        }
    }
    if let Some(x) = t.get("truncation") {
        match x.as_str().map(Truncation::parse) {
            Some(Ok(k)) => c.truncation = k,
            Some(Err(e)) => v.push(at("truncation"), &name("truncation"), &e.to_string()),
            None => v.push(at("truncation"), &name("truncation"), "must be a string such as \"count:0.99\""),
        }
    }
    for (key, slot) in [
        ("zp_fraction", &mut c.zp_fraction),
        ("csi_error_std", &mut c.csi_error_std),
        ("sigma_floor", &mut c.sigma_floor),
    ] {
        if let Some(x) = t.get(key) {
            match number(x) {
                Some(f) => *slot = f,
                None => v.push(at(key), &name(key), "must be a number"),
            }
        }
    }
    if let Some(x) = t.get("equalizer") {
        match x.as_str() {
            Some("zf") => c.equalizer = Equalizer::Zf,
            Some("mmse") => c.equalizer = Equalizer::Mmse,
            _ => v.push(at("equalizer"), &name("equalizer"), "must be \"zf\" or \"mmse\""),
        }
    }
    if let Some(x) = t.get("normalize_power") {
        match x.as_bool() {
            Some(b) => c.normalize_power = b,
            None => v.push(at("normalize_power"), &name("normalize_power"), "must be a boolean"),
        }
    }
    if let Some(n) = count(t, "otfs_doppler_bins", entry, lines, v) {
        c.otfs_doppler_bins = n;
    }
}

fn count(t: &Table, key: &str, entry: Option<usize>, lines: &LineIndex, v: &mut Violations) -> Option<usize> {
    let x = t.get(key)?;
    match x.as_integer() {
        Some(n) if n >= 0 => Some(n as usize),
        _ => {
            let name = match entry {
                Some(i) => format!("compare[{i}].{key}"),
                None => key.to_string(),
            };
            v.push(lines.find(entry.map(|i| ("compare", i)), key), &name, "must be a non-negative integer");
            None
        }
    }
}

fn number(x: &Value) -> Option<f64> {
    match x {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, line: Option<usize>, field: &str, msg: &str) {
        let loc = line.map(|l| format!("line {l}: ")).unwrap_or_default();
        self.0.push(format!("{loc}{field}: {msg}"));
    }

    fn push_raw(&mut self, line: Option<usize>, prefix: &str, msg: &str) {
        let loc = line.map(|l| format!("line {l}: ")).unwrap_or_default();
        let sep = if prefix.is_empty() { "" } else { "." };
        self.0.push(format!("{loc}{prefix}{sep}{msg}"));
    }
}

/// Finds the 1-based line defining a key, tracking `[table]` and
/// `[[array]]` headers.
struct LineIndex {
    /// `(line, section, array index, key)` for every `key = ...` line.
    keys: Vec<(usize, Option<(String, usize)>, String)>,
    headers: Vec<(usize, String)>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut keys = Vec::new();
        let mut headers = Vec::new();
        let mut section: Option<(String, usize)> = None;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
                let name = name.trim().to_string();
                let n = counts.entry(name.clone()).or_insert(0);
                section = Some((name.clone(), *n));
                *n += 1;
                headers.push((i + 1, name));
            } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
                let name = name.trim().to_string();
                section = Some((name.clone(), 0));
                headers.push((i + 1, name));
            } else if let Some((k, _)) = line.split_once('=') {
                let k = k.trim().trim_matches('"').to_string();
                if !k.starts_with('#') {
                    keys.push((i + 1, section.clone(), k));
                }
            }
        }
        Self { keys, headers }
    }

    fn find(&self, section: Option<(&str, usize)>, key: &str) -> Option<usize> {
        self.keys
            .iter()
            .find(|(_, s, k)| {
                k == key
                    && match (s, section) {
                        (None, None) => true,
                        (Some((a, i)), Some((b, j))) => a == b && *i == j,
                        _ => false,
                    }
            })
            .map(|(l, _, _)| *l)
    }

    fn section(&self, name: &str) -> Option<usize> {
        self.headers.iter().find(|(_, n)| n == name).map(|(l, _)| *l)
    }
}

/// Serializes a document in the layout `parse_config` reads, with presets
/// written out as full parameter blocks.
pub fn config_to_toml(doc: &ConfigDocument) -> Result<String> {
    let base = doc.primary();
    let mut t = Table::new();
    t.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION));
    insert_variant(&mut t, base);
    t.insert("constellation".into(), Value::String(base.constellation.name().into()));
    t.insert(
        "snr_grid_db".into(),
        Value::Array(base.snr_grid_db.iter().map(|x| Value::Float(*x)).collect()),
    );
    t.insert("n_trials".into(), Value::Integer(base.n_trials as i64));
    t.insert("frames_per_trial".into(), Value::Integer(base.frames_per_trial as i64));
    t.insert("seed".into(), Value::Integer(base.rng_seed as i64));
    let kernel = Value::try_from(&base.kernel).map_err(|e| Error::Format(e.to_string()))?;
    t.insert("kernel".into(), kernel);
    if doc.sweeps.len() > 1 {
        let variants = doc.sweeps[1..]
            .iter()
            .map(|c| {
                let mut v = Table::new();
                insert_variant(&mut v, c);
                Value::Table(v)
            })
            .collect();
        t.insert("compare".into(), Value::Array(variants));
    }
    toml::to_string_pretty(&t).map_err(|e| Error::Format(e.to_string()))
}

fn insert_variant(t: &mut Table, c: &SimConfig) {
    if let Some(l) = &c.label {
        t.insert("label".into(), Value::String(l.clone()));
    }
    t.insert("scheme".into(), Value::String(c.scheme.name().into()));
    t.insert("truncation".into(), Value::String(c.truncation.to_string()));
    t.insert("zp_fraction".into(), Value::Float(c.zp_fraction));
    t.insert("csi_error_std".into(), Value::Float(c.csi_error_std));
    let eq = match c.equalizer {
        Equalizer::Zf => "zf",
        Equalizer::Mmse => "mmse",
    };
    t.insert("equalizer".into(), Value::String(eq.into()));
    t.insert("normalize_power".into(), Value::Boolean(c.normalize_power));
    t.insert("sigma_floor".into(), Value::Float(c.sigma_floor));
    t.insert("otfs_doppler_bins".into(), Value::Integer(c.otfs_doppler_bins as i64));
}

pub fn save_config(doc: &ConfigDocument, path: &Path) -> Result<()> {
    super::write_atomic(path, config_to_toml(doc)?.as_bytes())
}

/// SHA-256 of the configuration's canonical JSON form (keys sorted), as hex.
/// Independent of key order and formatting in the source file.
pub fn config_hash(config: &SimConfig) -> Result<String> {
    let value = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    let canonical = serde_json::to_string(&value).map_err(|e| Error::Format(e.to_string()))?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nscheme = \"mem\"\n\n[kernel]\npreset = \"eva-ns\"\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let doc = parse_config(MINIMAL, "t").unwrap();
        let c = doc.primary();
        let mut want = SimConfig::new(KernelModel::preset("eva-ns").unwrap(), Scheme::Mem);
        want.label = None;
        assert_eq!(c, &want);
        assert_eq!(c.n_trials, 8);
        assert_eq!(c.zp_fraction, 0.125);
    }

    #[test]
    fn preset_round_trips_through_save() {
        let text = format!(
            "{MINIMAL}\n[[compare]]\nscheme = \"zp-mem\"\nzp_fraction = 0.25\n"
        );
        let doc = parse_config(&text, "t").unwrap();
        let saved = config_to_toml(&doc).unwrap();
        assert!(saved.contains("model = \"tdl\""));
        assert!(saved.contains("preset = \"eva-ns\""));
        let again = parse_config(&saved, "saved").unwrap();
        assert_eq!(again, doc);
        assert_eq!(again.sweeps[1].zp_fraction, 0.25);
        assert_eq!(again.sweeps[1].kernel, doc.sweeps[0].kernel);
    }

    #[test]
    fn range_error_names_field_and_line() {
        let text = "schema_version = 1\nscheme = \"zp-mem\"\nzp_fraction = 1.5\n[kernel]\npreset = \"eva-ns\"\n";
        let Err(Error::Validation { violations, .. }) = parse_config(text, "t") else {
            panic!("expected validation error");
        };
        assert_eq!(violations.len(), 1, "{violations:?}");
        assert!(violations[0].starts_with("line 3: zp_fraction"), "{}", violations[0]);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "schema_version = 2\nscheme = \"warp\"\nn_trials = 0\nbogus = 1\n[kernel]\npreset = \"nope\"\n";
        let Err(Error::Validation { violations, .. }) = parse_config(text, "t") else {
            panic!("expected validation error");
        };
        let joined = violations.join("\n");
        for needle in ["line 1: schema_version", "line 2: scheme", "line 4: bogus", "line 5: kernel"] {
            assert!(joined.contains(needle), "{needle} missing from\n{joined}");
        }
    }

    #[test]
    fn unknown_kernel_key_is_rejected() {
        let text = "schema_version = 1\nscheme = \"mem\"\n[kernel]\nmodel = \"identity\"\nn_space = 1\nn_time = 4\nwidth = 3\n";
        let err = parse_config(text, "t").unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_config("schema_version = \n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn hash_ignores_key_order_and_tracks_values() {
        let a = "schema_version = 1\nscheme = \"mem\"\nseed = 3\nzp_fraction = 0.25\n[kernel]\npreset = \"eva-ns\"\n";
        let b = "zp_fraction = 0.25\nseed = 3\nscheme = \"mem\"\nschema_version = 1\n[kernel]\npreset = \"eva-ns\"\n";
        let ha = config_hash(parse_config(a, "a").unwrap().primary()).unwrap();
        let hb = config_hash(parse_config(b, "b").unwrap().primary()).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 64);
        let c = a.replace("seed = 3", "seed = 4");
        let hc = config_hash(parse_config(&c, "c").unwrap().primary()).unwrap();
        assert_ne!(ha, hc);
    }
}
