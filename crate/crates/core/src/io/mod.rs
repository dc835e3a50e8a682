//! Files: versioned CSV streams, the JSON run configuration, chain
//! persistence with a run manifest, and CSV/JSON exports. Every write goes
//! through a temporary file that is renamed into place.

mod chain;
mod config;
mod exports;
mod streams;
mod table;

pub use chain::{read_chain, write_chain, FileDigest, Manifest};
pub use config::{GpsFrame, RunConfig};
pub use exports::{
    read_truth, write_curve, write_eval, write_face_corrections, write_keyframes,
    write_localization, write_map, write_truth, write_video, FaceTruth, TruthFile,
};
pub use streams::{geo_to_local, load_bundle, save_bundle, BundlePaths, EARTH_RADIUS_M};

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
