use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{atomic_write, sha256_file};
use crate::error::{Error, Result};
use crate::rjmcmc::{ChainSample, ChainSamples, MoveStats};

const CHAIN_FORMAT: &str = "coactivity-chain";
const CHAIN_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainHeader {
    format: String,
    version: u32,
    seed: u64,
    burn_in: usize,
    n_iters: usize,
    stats: MoveStats,
}

/// One JSON header line followed by one line per stored sample.
pub fn write_chain(path: &Path, chain: &ChainSamples) -> Result<()> {
    let header = ChainHeader {
        format: CHAIN_FORMAT.into(),
        version: CHAIN_VERSION,
        seed: chain.seed,
        burn_in: chain.burn_in,
        n_iters: chain.n_iters,
        stats: chain.stats.clone(),
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    for s in &chain.samples {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

pub fn read_chain(path: &Path) -> Result<ChainSamples> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, 0, e.to_string()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::data(path, 1, "empty chain file"))?;
    let h: ChainHeader = serde_json::from_str(first)
        .map_err(|e| Error::data(path, 1, format!("bad header: {e}")))?;
    if h.format != CHAIN_FORMAT || h.version != CHAIN_VERSION {
        return Err(Error::data(
            path,
            1,
            format!("unsupported chain format {} v{}", h.format, h.version),
        ));
    }
    let samples = lines
        .map(|(i, l)| {
            serde_json::from_str::<ChainSample>(l)
                .map_err(|e| Error::data(path, i + 1, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSamples {
        seed: h.seed,
        burn_in: h.burn_in,
        n_iters: h.n_iters,
        samples,
        stats: h.stats,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    /// Digest of `path`, recorded under `name`.
    pub fn of(path: &Path, name: impl Into<String>) -> Result<Self> {
        Ok(Self {
            path: name.into(),
            sha256: sha256_file(path)?,
        })
    }
}

/// What produced a run directory. Carries no timestamps, so reruns with the
/// same inputs produce the same bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub chain_seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64, chain_seeds: Vec<u64>) -> Self {
        Self {
            format: "coactivity-manifest".into(),
            version: 1,
            command: command.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            chain_seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(self)?;
        buf.push(b'\n');
        atomic_write(path, &buf)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::data(path, 0, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.line(), e.to_string()))
    }
}
