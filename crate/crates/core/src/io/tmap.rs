//! TMAP tensor container: `u64` header length `N`, `N` bytes of JSON
//! mapping names to `{dtype, shape, data_offsets}`, then the data region.
//! The layout matches the safetensors container.

use std::path::Path;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use super::{write_atomic, IoError};
use crate::tensor::{Tensor, TensorDType, TensorMap};

const METADATA_KEY: &str = "__metadata__";
/// Upper bound on the JSON header size accepted by the reader.
const MAX_HEADER: u64 = 100 * 1024 * 1024;

/// Serialises the map with tensors laid out contiguously in iteration order.
/// The header is compact JSON with no padding.
pub fn encode_tmap(m: &TensorMap) -> Vec<u8> {
    let mut header = Map::new();
    if let Some(meta) = m.metadata() {
        header.insert(METADATA_KEY.into(), json!(meta));
    }
    let mut offset = 0usize;
    for (name, t) in m.iter() {
        let end = offset + t.bytes().len();
        header.insert(
            name.clone(),
            json!({"dtype": t.dtype().code(), "shape": t.shape(), "data_offsets": [offset, end]}),
        );
        offset = end;
    }
    let text = serde_json::to_vec(&Value::Object(header)).expect("header serialises");
    let mut out = Vec::with_capacity(8 + text.len() + offset);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    for (_, t) in m.iter() {
        out.extend_from_slice(t.bytes());
    }
    out
}

struct Entry {
    name: String,
    dtype: TensorDType,
    shape: Vec<usize>,
    begin: u64,
    end: u64,
}

fn malformed(msg: impl Into<String>) -> IoError {
    IoError::JsonMalformed(msg.into())
}

fn parse_entry(name: &str, v: &Value) -> Result<Entry, IoError> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed(format!("`{name}` is not an object")))?;
    if let Some(k) = obj.keys().find(|k| !["dtype", "shape", "data_offsets"].contains(&k.as_str())) {
        return Err(malformed(format!("`{name}` has unknown key `{k}`")));
    }
    let code = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("`{name}` lacks a string dtype")))?;
    let dtype = TensorDType::from_code(code).ok_or_else(|| IoError::DtypeUnknown(code.to_string()))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("`{name}` lacks a shape array")))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| malformed(format!("`{name}` shape has a non-integer entry")))?;
    let offs = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)))
        .ok_or_else(|| malformed(format!("`{name}` needs data_offsets [begin, end]")))?;
    if offs.1 < offs.0 {
        return Err(malformed(format!("`{name}` has end < begin")));
    }
    Ok(Entry {
        name: name.to_string(),
        dtype,
        shape,
        begin: offs.0,
        end: offs.1,
    })
}

/// Parses a container. Tensors come back in data-offset order. Trailing
/// spaces in the header (alignment padding written by other tools) are
/// accepted.
pub fn decode_tmap(bytes: &[u8]) -> Result<TensorMap, IoError> {
    if bytes.len() < 8 {
        return Err(IoError::TruncatedFile {
            expected: 8,
            actual: bytes.len() as u64,
        });
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    if n > MAX_HEADER || 8 + n > bytes.len() as u64 {
        return Err(IoError::TruncatedFile {
            expected: 8u64.saturating_add(n),
            actual: bytes.len() as u64,
        });
    }
    let header: Value = serde_json::from_slice(&bytes[8..8 + n as usize]).map_err(|e| malformed(e.to_string()))?;
    let obj = header.as_object().ok_or_else(|| malformed("header is not an object"))?;
    let data = &bytes[8 + n as usize..];

    let mut metadata = None;
    let mut entries = Vec::with_capacity(obj.len());
    for (name, v) in obj {
        if name == METADATA_KEY {
            let meta = v
                .as_object()
                .ok_or_else(|| malformed("__metadata__ is not an object"))?
                .iter()
                .map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                .collect::<Option<IndexMap<String, String>>>()
                .ok_or_else(|| malformed("__metadata__ values must be strings"))?;
            metadata = Some(meta);
        } else {
            entries.push(parse_entry(name, v)?);
        }
    }
    entries.sort_by_key(|e| (e.begin, e.end));

    let mut cursor = 0u64;
    let mut out = TensorMap::new();
    for e in entries {
        if e.begin < cursor {
            return Err(IoError::OverlappingOffsets { name: e.name });
        }
        if e.begin > cursor {
            return Err(IoError::OffsetGap { at: cursor });
        }
        let expected = e
            .shape
            .iter()
            .try_fold(e.dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64));
        if expected != Some(e.end - e.begin) {
            return Err(IoError::ShapeBytesMismatch {
                name: e.name,
                shape: e.shape,
                expected: expected.unwrap_or(u64::MAX),
                actual: e.end - e.begin,
            });
        }
        if e.end > data.len() as u64 {
            return Err(IoError::TruncatedFile {
                expected: 8 + n + e.end,
                actual: bytes.len() as u64,
            });
        }
        let t = Tensor::from_bytes(e.dtype, e.shape, data[e.begin as usize..e.end as usize].to_vec())
            .expect("length checked above");
        out.insert(e.name, t);
        cursor = e.end;
    }
    if cursor != data.len() as u64 {
        return Err(IoError::OffsetGap { at: cursor });
    }
    out.set_metadata(metadata);
    Ok(out)
}

pub fn read_tmap(path: &Path) -> Result<TensorMap, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_tmap(&bytes)
}

pub fn write_tmap(path: &Path, m: &TensorMap) -> Result<(), IoError> {
    write_atomic(path, &encode_tmap(m))
}
