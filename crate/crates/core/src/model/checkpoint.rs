//! Versioned binary container: magic, version, JSON manifest, raw payload and
//! a SHA-256 digest over everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GSBOOST\0";
pub const VERSION: u32 = 1;

pub fn encode(manifest: &serde_json::Value, payload: &[u8]) -> Result<Vec<u8>> {
    encode_with_version(manifest, payload, VERSION)
}

pub(crate) fn encode_with_version(manifest: &serde_json::Value, payload: &[u8], version: u32) -> Result<Vec<u8>> {
    let manifest = serde_json::to_vec(manifest)?;
    let mut out = Vec::with_capacity(64 + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let end = at.checked_add(len).filter(|&e| e <= bytes.len());
    let Some(end) = end else {
        return Err(Error::Checkpoint(format!("truncated file: {what} needs {len} bytes at offset {at}, file has {}", bytes.len())));
    };
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

fn u64_at(bytes: &[u8], at: &mut usize, what: &str) -> Result<usize> {
    let raw = take(bytes, at, 8, what)?;
    usize::try_from(u64::from_le_bytes(raw.try_into().expect("8 bytes")))
        .map_err(|_| Error::Checkpoint(format!("{what} does not fit in memory")))
}

pub fn decode(bytes: &[u8]) -> Result<(serde_json::Value, Vec<u8>)> {
    let mut at = 0;
    if take(bytes, &mut at, MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let manifest_len = u64_at(bytes, &mut at, "manifest length")?;
    let manifest = take(bytes, &mut at, manifest_len, "manifest")?;
    let payload_len = u64_at(bytes, &mut at, "payload length")?;
    let payload = take(bytes, &mut at, payload_len, "payload")?;
    let body_end = at;
    let digest = take(bytes, &mut at, 32, "digest")?;
    if at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - at)));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
        return Err(Error::Checkpoint("digest mismatch, file is corrupt".into()));
    }
    Ok((serde_json::from_slice(manifest)?, payload.to_vec()))
}

/// Writes to a sibling temporary file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn save(path: &Path, manifest: &serde_json::Value, payload: &[u8]) -> Result<()> {
    write_atomic(path, &encode(manifest, payload)?)
}

pub fn load(path: &Path) -> Result<(serde_json::Value, Vec<u8>)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip() {
        let m = json!({"a": 1, "b": [1.5, 2.5]});
        let payload = vec![1u8, 2, 3, 255];
        let (m2, p2) = decode(&encode(&m, &payload).unwrap()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(p2, payload);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode(&json!({"k": "v"}), &[7u8; 40]).unwrap();
        for len in 0..bytes.len() {
            assert!(decode(&bytes[..len]).is_err(), "accepted {len} bytes");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&json!({"k": "v"}), &[7u8; 40]).unwrap();
        let mid = bytes.len() - 40;
        bytes[mid] ^= 1;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn version_bump_is_an_explicit_error() {
        let bytes = encode_with_version(&json!({}), &[], VERSION + 1).unwrap();
        assert!(matches!(decode(&bytes), Err(Error::CheckpointVersion { found, expected }) if found == VERSION + 1 && expected == VERSION));
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        save(&path, &json!({"x": 1}), b"abc").unwrap();
        save(&path, &json!({"x": 2}), b"abcd").unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert_eq!(load(&path).unwrap().0, json!({"x": 2}));
    }
}
