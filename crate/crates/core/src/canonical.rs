//! Canonical document encoding.
//!
//! Every document the engine persists or hashes goes through this module:
//! UTF-8 JSON, object keys sorted lexicographically by byte, no
//! insignificant whitespace, numbers in their shortest round-trip decimal
//! form (integral floats below 1e15 are written without a fraction).
//!
//! Decoding reports schema problems with a path such as
//! `.entries[0].risk_owner` so callers can point at the offending field.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// A decoded document did not match the expected schema.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schema violation at {path}: {message}")]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

/// Serializes `value` into canonical bytes.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Serializing our own types into a Value cannot fail: every map key is a string.
    let value = serde_json::to_value(value).expect("document types serialize to JSON values");
    encode_value(&value).into_bytes()
}

/// Serializes `value` into a canonical string.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("document types serialize to JSON values");
    encode_value(&value)
}

/// Re-encodes arbitrary JSON bytes in canonical form.
pub fn canonicalize(bytes: &[u8]) -> Result<Vec<u8>, SchemaViolation> {
    let value: Value = from_canonical(bytes)?;
    Ok(encode_value(&value).into_bytes())
}

/// Decodes a document, reporting the path of the first schema violation.
pub fn from_canonical<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, SchemaViolation> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let result: Result<T, _> = serde_path_to_error::deserialize(&mut de);
    match result {
        Ok(v) => {
            de.end().map_err(|e| SchemaViolation {
                path: ".".into(),
                message: e.to_string(),
            })?;
            Ok(v)
        }
        Err(err) => {
            let mut path = String::new();
            for seg in err.path().iter() {
                use serde_path_to_error::Segment;
                match seg {
                    Segment::Seq { index } => {
                        let _ = write!(path, "[{index}]");
                    }
                    Segment::Map { key } => {
                        let _ = write!(path, ".{key}");
                    }
                    Segment::Enum { variant } => {
                        let _ = write!(path, ".{variant}");
                    }
                    Segment::Unknown => path.push_str(".?"),
                }
            }
            let message = err.inner().to_string();
            if let Some(field) = quoted_field(&message, "missing field `")
                .or_else(|| quoted_field(&message, "unknown field `"))
            {
                if !path.ends_with(&format!(".{field}")) {
                    path.push('.');
                    path.push_str(field);
                }
            }
            if path.is_empty() {
                path.push('.');
            }
            Err(SchemaViolation { path, message })
        }
    }
}

/// Decodes a document from a JSON value already in memory.
pub fn from_value<T: DeserializeOwned>(value: &Value) -> Result<T, SchemaViolation> {
    from_canonical(encode_value(value).as_bytes())
}

/// Decodes newline-delimited records, skipping blank lines. Errors carry
/// the 1-based line number.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, (usize, SchemaViolation)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| from_canonical(line.trim().as_bytes()).map_err(|e| (i + 1, e)))
        .collect()
}

fn quoted_field<'a>(message: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = message.strip_prefix(prefix)?;
    rest.split('`').next()
}

/// Writes `value` in canonical form.
pub fn encode_value(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap, already sorted by key bytes.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_value(out, &map[key]);
            }
            out.push('}');
        }
    }
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if n.is_i64() || n.is_u64() {
        let _ = write!(out, "{n}");
        return;
    }
    let f = n.as_f64().unwrap_or(0.0);
    if f.fract() == 0.0 && f.abs() < 1e15 {
        let _ = write!(out, "{}", f as i64);
    } else {
        // serde_json formats floats with the shortest round-trip representation.
        let _ = write!(out, "{n}");
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_compact() {
        let v = json!({"b": 1, "a": [true, null, "x"], "c": {"z": 0.5, "y": 2.0}});
        assert_eq!(
            encode_value(&v),
            r#"{"a":[true,null,"x"],"b":1,"c":{"y":2,"z":0.5}}"#
        );
    }

    #[test]
    fn shortest_float_forms() {
        assert_eq!(to_canonical_string(&0.005f64), "0.005");
        assert_eq!(to_canonical_string(&1e-9f64), "1e-9");
        assert_eq!(to_canonical_string(&60.0f64), "60");
        assert_eq!(to_canonical_string(&1e25f64), "1e+25");
        assert_eq!(to_canonical_string(&(0.1f64 + 0.2)), "0.30000000000000004");
    }

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Entry {
        risk_owner: String,
    }

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Doc {
        entries: Vec<Entry>,
    }

    #[test]
    fn missing_field_path() {
        let err = from_canonical::<Doc>(br#"{"entries":[{}]}"#).unwrap_err();
        assert_eq!(err.path, ".entries[0].risk_owner");
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(from_canonical::<Value>(b"{} x").is_err());
    }
}
