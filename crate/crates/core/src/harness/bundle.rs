//! Segmented model checkpoint with a SHA-256 digest per segment.
//!
//! Layout: magic `CGMB`, version (u32 LE), segment count (u32 LE), then per
//! segment in name order: name length (u32 LE), name, payload length
//! (u64 LE), 32-byte digest of the payload, payload. Payloads are JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CGMB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bundle {
    segments: BTreeMap<String, Vec<u8>>,
}

fn corrupt(reason: String) -> Error {
    Error::Corrupt { what: "bundle", reason }
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.segments.insert(name.to_string(), serde_json::to_vec(value)?);
        Ok(())
    }

    pub fn put_raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.segments.insert(name.to_string(), bytes);
    }

    pub fn get<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        self.segments
            .get(name)
            .map(|b| serde_json::from_slice(b).map_err(Error::from))
            .transpose()
    }

    pub fn raw(&self, name: &str) -> Option<&[u8]> {
        self.segments.get(name).map(Vec::as_slice)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.segments.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.segments.keys().map(String::as_str)
    }

    /// Hex SHA-256 of a segment's payload.
    pub fn checksum(&self, name: &str) -> Option<String> {
        self.segments.get(name).map(|b| hex(&Sha256::digest(b)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.segments.len() as u32).to_le_bytes());
        for (name, payload) in &self.segments {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&Sha256::digest(payload));
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            let s = bytes
                .get(pos..end)
                .ok_or_else(|| corrupt(format!("truncated at byte {pos}")))?;
            pos = end;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(corrupt("missing CGMB header".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let count = u32_at(take(4)?);
        let mut segments = BTreeMap::new();
        for _ in 0..count {
            let len = u32_at(take(4)?) as usize;
            let name = std::str::from_utf8(take(len)?)
                .map_err(|e| corrupt(format!("segment name: {e}")))?
                .to_string();
            let size = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
            let digest = take(32)?.to_vec();
            let payload = take(size)?.to_vec();
            if Sha256::digest(&payload).as_slice() != digest.as_slice() {
                return Err(corrupt(format!("checksum mismatch in segment `{name}`")));
            }
            segments.insert(name, payload);
        }
        if pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self { segments })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("bin.tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
