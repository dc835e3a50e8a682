use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sha256_hex;
use crate::error::{Error, Result};
use crate::gp::GpHyperParams;
use crate::model::{ActivityType, ModelParams, OverlapMatrix};
use crate::posteriors::LocalizeOptions;
use crate::rjmcmc::SamplerConfig;
use crate::sim::{RunSpec, ScenarioConfig};
use crate::summarize::{KeyframeOptions, MapOptions, TrellisWeights};

pub const CONFIG_VERSION: u32 = 1;

/// Coordinates of the GPS columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpsFrame {
    /// Metres in a local planar frame: `x`, `y`.
    #[default]
    Planar,
    /// Degrees: `lat`, `lon`; projected about the data centroid on load.
    Geographic,
}

/// Everything a run needs besides the data. Missing keys take defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub n_chains: usize,
    pub gps_frame: GpsFrame,
    /// Directory holding the stream files; relative to the config file.
    pub data_dir: Option<PathBuf>,
    pub hyper: GpHyperParams,
    pub types: Vec<ActivityType>,
    pub overlap: OverlapMatrix,
    pub params: ModelParams,
    pub sampler: SamplerConfig,
    pub localize: LocalizeOptions,
    pub keyframes: KeyframeOptions,
    pub map: MapOptions,
    pub trellis: TrellisWeights,
    pub video_frames: usize,
    /// Synthetic data for `simulate` and `sweep`.
    pub scenario: ScenarioConfig,
    pub sweep_stds: Vec<f64>,
    pub sweep_trials: usize,
    /// The sweep infers from GPS alone.
    pub sweep_gps_only: bool,
    pub iou_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let spec = RunSpec::for_scenario(&scenario);
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            n_chains: spec.n_chains,
            gps_frame: GpsFrame::Planar,
            data_dir: None,
            hyper: spec.hyper,
            types: spec.types,
            overlap: spec.overlap,
            params: spec.params,
            sampler: spec.sampler,
            localize: LocalizeOptions::default(),
            keyframes: KeyframeOptions::default(),
            map: MapOptions::default(),
            trellis: TrellisWeights::default(),
            video_frames: 20,
            scenario,
            sweep_stds: vec![50.0, 150.0, 300.0, 700.0],
            sweep_trials: 20,
            sweep_gps_only: spec.gps_only,
            iou_threshold: spec.iou_threshold,
        }
    }
}

impl RunConfig {
    /// Overlay `text` on the defaults, key by key at every depth. Arrays and
    /// scalars replace the default wholesale.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if !user.is_object() {
            return Err(Error::config("the config must be a JSON object"));
        }
        let mut base = serde_json::to_value(Self::default())?;
        overlay(&mut base, user, "")?;
        let c: Self = serde_json::from_value(base).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Read and validate; a relative `data_dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_json(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(d) = &c.data_dir {
            if d.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                c.data_dir = Some(base.join(d));
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Digest of the canonical JSON form, leaving out `data_dir`: moving
    /// the inputs does not change the run (their digests are in the
    /// manifest).
    pub fn hash(&self) -> Result<String> {
        let c = Self {
            data_dir: None,
            ..self.clone()
        };
        Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.types.is_empty() {
            return Err(Error::config("at least one activity type is required"));
        }
        for t in &self.types {
            t.validate()?;
        }
        self.overlap.validate(self.types.len())?;
        self.params.validate()?;
        self.hyper.validate()?;
        if self.localize.thin == 0 {
            return Err(Error::config("localize.thin must be >= 1"));
        }
        if self.keyframes.k == 0 {
            return Err(Error::config("keyframes.k must be >= 1"));
        }
        self.keyframes.weights.validate()?;
        if self.map.lattice_steps == 0 {
            return Err(Error::config("map.lattice_steps must be >= 1"));
        }
        self.trellis.validate()?;
        if self.video_frames == 0 {
            return Err(Error::config("video_frames must be >= 1"));
        }
        self.scenario.validate()?;
        if self.sweep_stds.is_empty()
            || self
                .sweep_stds
                .iter()
                .any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return Err(Error::config(
                "sweep_stds must be non-empty, finite and > 0",
            ));
        }
        if self.sweep_trials < 2 {
            return Err(Error::config("sweep_trials must be >= 2"));
        }
        self.run_spec().validate()
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            types: self.types.clone(),
            overlap: self.overlap.clone(),
            params: self.params.clone(),
            hyper: self.hyper.clone(),
            sampler: self.sampler.clone(),
            n_chains: self.n_chains,
            gps_only: self.sweep_gps_only,
            iou_threshold: self.iou_threshold,
        }
    }

    /// Seed of chain `c`.
    pub fn chain_seeds(&self) -> Vec<u64> {
        (0..self.n_chains)
            .map(|c| crate::sim::trial_seed(self.seed, usize::MAX, c))
            .collect()
    }
}

fn overlay(base: &mut Value, user: Value, at: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let path = if at.is_empty() {
                    k.clone()
                } else {
                    format!("{at}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v, &path)?,
                    None => return Err(Error::config(format!("unknown key '{path}'"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}
