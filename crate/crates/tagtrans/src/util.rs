//! Small shared helpers: deterministic number formatting, atomic file
//! writes, content digests, and sub-seed derivation.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Format a score with 9 significant digits, the precision used by every
/// exported table and curve file. Zero prints as plain `0`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{:.8e}", x)
    }
}

/// Write `bytes` to `path` by writing a sibling temp file and renaming it
/// into place, so an interrupted run never leaves a partial file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("not a writable file path: {}", path.display())))?;
    let tmp = match dir {
        Some(d) => d.join(format!(".{name}.tmp")),
        None => Path::new(&format!(".{name}.tmp")).to_path_buf(),
    };
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a whole file into a string with path context on failure.
pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Derive an independent sub-seed from a base seed and a stream label, so
/// that folds, cells, and shuffles each get their own reproducible stream.
pub fn sub_seed(base: u64, stream: &[u64]) -> u64 {
    let mut z = splitmix64(base ^ 0x6a09_e667_f3bc_c908);
    for &s in stream {
        z = splitmix64(z ^ splitmix64(s.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    z
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
