//! Versioned file envelope around the toolkit's JSON documents.
//!
//! Every `.pscat.json` file is an object with `format_version`, `kind`,
//! `payload` and `checksum`. The checksum is a SHA-256 digest of the
//! canonicalized payload (sorted keys, shortest round-trip floats), so
//! whitespace and key order cannot silently corrupt fixtures. Writes are
//! whole-file atomic (temp file + rename) and byte-stable for identical
//! inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::io::IoError;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Samples,
    Result,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Samples => "samples",
            Kind::Result => "result",
        }
    }

    fn parse(s: &str) -> Result<Self, IoError> {
        match s {
            "config" => Ok(Kind::Config),
            "samples" => Ok(Kind::Samples),
            "result" => Ok(Kind::Result),
            other => Err(IoError::Schema(format!(
                "field 'kind': expected one of config|samples|result, got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How unknown top-level envelope keys are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Reject any document with an unknown top-level key.
    Strict,
    /// Preserve unknown keys and re-emit them on write.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileEnvelope {
    pub kind: Kind,
    pub payload: Value,
    /// Unknown top-level fields carried through in lenient mode.
    pub extra: BTreeMap<String, Value>,
}

impl FileEnvelope {
    pub fn new(kind: Kind, payload: Value) -> Result<Self, IoError> {
        let payload = canonicalize_value(payload)?;
        Ok(FileEnvelope { kind, payload, extra: BTreeMap::new() })
    }

    pub fn checksum(&self) -> String {
        checksum_of(&self.payload)
    }

    /// Serializes the envelope to its canonical byte representation.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut doc = Map::new();
        doc.insert("format_version".into(), Value::from(FORMAT_VERSION));
        doc.insert("kind".into(), Value::from(self.kind.as_str()));
        doc.insert("payload".into(), self.payload.clone());
        doc.insert("checksum".into(), Value::from(self.checksum()));
        for (k, v) in &self.extra {
            doc.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let mut bytes =
            serde_json::to_vec_pretty(&Value::Object(doc)).expect("canonical value serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let bytes = self.to_canonical_bytes();
        let tmp = path.with_extension("tmp-write");
        std::fs::write(&tmp, &bytes)
            .map_err(|e| IoError::File(format!("writing {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path)
            .map_err(|e| IoError::File(format!("renaming into {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn read(path: &Path, mode: Mode) -> Result<Self, IoError> {
        let bytes = std::fs::read(path)
            .map_err(|e| IoError::File(format!("reading {}: {e}", path.display())))?;
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| IoError::Schema(format!("{}: invalid JSON: {e}", path.display())))?;
        Self::from_value(value, mode)
    }

    pub fn from_value(value: Value, mode: Mode) -> Result<Self, IoError> {
        let Value::Object(map) = value else {
            return Err(IoError::Schema("envelope must be a JSON object".into()));
        };
        let version = map
            .get("format_version")
            .ok_or_else(|| IoError::Schema("missing field 'format_version'".into()))?
            .as_u64()
            .ok_or_else(|| IoError::Schema("field 'format_version' must be an integer".into()))?;
        if version != FORMAT_VERSION {
            return Err(IoError::Schema(format!(
                "field 'format_version': expected {FORMAT_VERSION}, got {version}"
            )));
        }
        let kind = Kind::parse(
            map.get("kind")
                .ok_or_else(|| IoError::Schema("missing field 'kind'".into()))?
                .as_str()
                .ok_or_else(|| IoError::Schema("field 'kind' must be a string".into()))?,
        )?;
        let payload = canonicalize_value(
            map.get("payload")
                .ok_or_else(|| IoError::Schema("missing field 'payload'".into()))?
                .clone(),
        )?;
        let declared = map
            .get("checksum")
            .ok_or_else(|| IoError::Schema("missing field 'checksum'".into()))?
            .as_str()
            .ok_or_else(|| IoError::Schema("field 'checksum' must be a string".into()))?;
        let actual = checksum_of(&payload);
        if declared != actual {
            return Err(IoError::Schema(format!(
                "checksum mismatch: declared {declared}, canonical payload hashes to {actual}"
            )));
        }
        let mut extra = BTreeMap::new();
        for (k, v) in &map {
            if !matches!(k.as_str(), "format_version" | "kind" | "payload" | "checksum") {
                match mode {
                    Mode::Strict => {
                        return Err(IoError::Schema(format!(
                            "unknown top-level field '{k}' (strict mode)"
                        )));
                    }
                    Mode::Lenient => {
                        extra.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        Ok(FileEnvelope { kind, payload, extra })
    }
}

/// SHA-256 hex digest of the compact canonical payload encoding.
fn checksum_of(payload: &Value) -> String {
    let compact = serde_json::to_string(payload).expect("canonical value serializes");
    let mut hasher = Sha256::new();
    hasher.update(compact.as_bytes());
    hex::encode(hasher.finalize())
}

/// Normalizes a JSON value: keys sorted (serde_json maps already are),
/// `-0.0` folded to `0.0`, and non-finite numbers rejected.
pub fn canonicalize_value(v: Value) -> Result<Value, IoError> {
    Ok(match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if !f.is_finite() {
                    return Err(IoError::Schema("non-finite number in payload".into()));
                }
                if f == 0.0 {
                    // fold -0.0
                    return Ok(Value::from(0.0));
                }
            }
            Value::Number(n)
        }
        Value::Array(items) => {
            Value::Array(items.into_iter().map(canonicalize_value).collect::<Result<_, _>>()?)
        }
        Value::Object(map) => {
            let mut out = Map::new();
            for (k, val) in map {
                out.insert(k, canonicalize_value(val)?);
            }
            Value::Object(out)
        }
        other => other,
    })
}

/// Finite-check helper used by payload builders before numbers reach JSON.
pub fn require_finite(x: f64, what: &str) -> Result<f64, IoError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(IoError::Schema(format!("{what} is not finite ({x})")))
    }
}
