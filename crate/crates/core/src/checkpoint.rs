//! Tensor container file.
//!
//! ```text
//! MARLCKPT 1
//! meta <key> <value…>
//! tensor <name> f64 <d0>,<d1>,…      (or `scalar`)
//! end
//! <little-endian f64 payloads, in header order>
//! ```

use std::path::Path;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &str = "MARLCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::format("<checkpoint>", format!("missing meta key {key}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Config(format!("unencodable meta entry {k:?}={v:?}")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Config(format!("unencodable tensor name {name:?}")));
            }
            let dims = if t.shape().is_empty() {
                "scalar".to_string()
            } else {
                t.shape()
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            };
            header.push_str(&format!("tensor {name} {DTYPE} {dims}\n"));
        }
        header.push_str("end\n");
        let mut bytes = header.into_bytes();
        for t in self.tensors.values() {
            bytes.extend_from_slice(&t.to_le_bytes());
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(origin, msg);
        let mut cursor = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[cursor..];
            let nl = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            cursor += nl + 1;
            std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not utf-8".into()))
        };

        let first = next_line()?;
        let (magic, version) = first
            .split_once(' ')
            .ok_or_else(|| bad("missing magic line".into()))?;
        if magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version: u32 = version
            .parse()
            .map_err(|_| bad(format!("bad version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }

        let mut meta = Vec::new();
        let mut layout: Vec<(String, Vec<usize>)> = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 || parts[1] != DTYPE {
                    return Err(bad(format!("bad tensor line {line:?}")));
                }
                let shape = if parts[2] == "scalar" {
                    vec![]
                } else {
                    parts[2]
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad shape in {line:?}")))?
                };
                layout.push((parts[0].to_string(), shape));
            } else {
                return Err(bad(format!("unrecognised header line {line:?}")));
            }
        }

        let mut tensors = IndexMap::new();
        let mut offset = cursor;
        for (name, shape) in layout {
            let n: usize = shape.iter().product();
            let end = offset + n * 8;
            if end > bytes.len() {
                return Err(bad(format!("payload for {name} truncated")));
            }
            let data: Vec<f64> = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            offset = end;
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(bad(format!("duplicate tensor {name}")));
            }
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::format("<checkpoint>", format!("missing tensor {name}")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new()
            .with_meta("kind", "test")
            .with_meta("note", "two words");
        ck.insert("a.w", Tensor::new(vec![2, 2], vec![1.0, -0.0, 1e-300, 3.5]).unwrap());
        ck.insert("s", Tensor::scalar(0.1).unwrap());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.meta("note"), Some("two words"));
        assert_eq!(back.tensor("a.w").unwrap().data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes().unwrap();
        let p = Path::new("mem");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong, p).is_err());
    }

    #[test]
    fn header_names_dtype_and_shape() {
        let bytes = sample().to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("MARLCKPT 1\n"));
        assert!(text.contains("tensor a.w f64 2,2\n"));
        assert!(text.contains("tensor s f64 scalar\n"));
    }
}
