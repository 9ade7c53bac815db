//! Small shared helpers: hashing, seed derivation, atomic file writes, and a
//! bounded-parallelism ordered map.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Derive an independent sub-seed from a base seed and a stage label.
///
/// Stages that consume randomness each get their own stream so that enabling
/// or disabling one stage never shifts the randomness seen by another.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is at least 8 bytes"))
}

/// Write a file via a temp path + rename so readers never see partial content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::persistence(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp-write");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::persistence(&tmp, e))?;
    file.write_all(bytes)
        .and_then(|_| file.flush())
        .map_err(|e| Error::persistence(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::persistence(path, e))?;
    Ok(())
}

/// Apply `f` to every item with at most `limit` worker threads, returning
/// results in input order. Item order in the output is independent of
/// scheduling, so deterministic `f` gives deterministic output.
pub fn bounded_map<T, U, F>(items: Vec<T>, limit: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync,
{
    let limit = limit.max(1);
    if items.len() <= 1 || limit == 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let queue = Mutex::new(items.into_iter().enumerate().collect::<Vec<_>>());
    let mut slots: Vec<Option<U>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    let out = Mutex::new(slots);
    std::thread::scope(|scope| {
        for _ in 0..limit.min(n) {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue poisoned").pop();
                match next {
                    Some((idx, item)) => {
                        let result = f(item);
                        out.lock().expect("out poisoned")[idx] = Some(result);
                    }
                    None => break,
                }
            });
        }
    });
    out.into_inner()
        .expect("out poisoned")
        .into_iter()
        .map(|slot| slot.expect("worker filled every slot"))
        .collect()
}
