//! Evidence streams shared by the model, the sampler and summarization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpsObservation;
use crate::ids::ActorId;

/// One camera frame with precomputed scene features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub actor: ActorId,
    pub t: f64,
    pub kp_count: u32,
    pub features: Vec<f64>,
}

/// One face detection in some actor's stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDetection {
    pub observer: ActorId,
    pub t: f64,
    /// Recognised identity, `None` when unrecognised.
    pub detected: Option<ActorId>,
    /// Per-identity classifier log-likelihoods, one per registry actor.
    pub scores: Option<Vec<f64>>,
}

/// Pairwise keypoint match count between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub actor_i: ActorId,
    pub t_i: f64,
    pub actor_j: ActorId,
    pub t_j: f64,
    pub matches: u32,
}

/// Everything ingested for one run. Streams are sorted by (actor, t).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataBundle {
    /// Registry; ids are `0..actor_names.len()`.
    pub actor_names: Vec<String>,
    pub gps: Vec<GpsObservation>,
    pub frames: Vec<FrameRecord>,
    pub faces: Vec<FaceDetection>,
    pub matches: Vec<FrameMatch>,
    /// Lat/lon origin of the planar frame, when the input was geographic.
    pub origin: Option<[f64; 2]>,
}

impl DataBundle {
    pub fn n_actors(&self) -> usize {
        self.actor_names.len()
    }

    pub fn actors(&self) -> Vec<ActorId> {
        (0..self.n_actors() as u32).map(ActorId).collect()
    }

    /// Sort all streams by (actor, t) so per-actor ranges are contiguous.
    pub fn sort(&mut self) {
        self.gps
            .sort_by(|a, b| (a.actor, a.t).partial_cmp(&(b.actor, b.t)).unwrap());
        self.frames
            .sort_by(|a, b| (a.actor, a.t).partial_cmp(&(b.actor, b.t)).unwrap());
        self.faces
            .sort_by(|a, b| (a.observer, a.t).partial_cmp(&(b.observer, b.t)).unwrap());
    }

    /// Time support `[t_min, t_max]` of the GPS stream.
    pub fn time_support(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for o in &self.gps {
            lo = lo.min(o.t);
            hi = hi.max(o.t);
        }
        if !(hi > lo) {
            return Err(Error::contract("GPS stream has an empty time support"));
        }
        Ok((lo, hi))
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.frames.first().map(|f| f.features.len())
    }

    pub fn gps_of(&self, actor: ActorId) -> Vec<GpsObservation> {
        self.gps
            .iter()
            .filter(|o| o.actor == actor)
            .copied()
            .collect()
    }

    /// Actors with at least `min_obs` GPS fixes.
    pub fn tracked_actors(&self, min_obs: usize) -> Vec<ActorId> {
        let mut counts = vec![0usize; self.n_actors()];
        for o in &self.gps {
            if let Some(c) = counts.get_mut(o.actor.index()) {
                *c += 1;
            }
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= min_obs && c > 0)
            .map(|(a, _)| ActorId(a as u32))
            .collect()
    }

    /// Check registry membership, finiteness and a uniform feature
    /// dimension.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_actors();
        let known = |a: ActorId| a.index() < n;
        for o in &self.gps {
            o.validate()?;
            if !known(o.actor) {
                return Err(Error::contract(format!(
                    "GPS row references unknown actor {}",
                    o.actor.0
                )));
            }
        }
        let dim = self.feature_dim();
        for f in &self.frames {
            if !known(f.actor) {
                return Err(Error::contract(format!(
                    "frame references unknown actor {}",
                    f.actor.0
                )));
            }
            if Some(f.features.len()) != dim {
                return Err(Error::contract("frame feature dimension is not uniform"));
            }
            if !f.t.is_finite() || f.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("frame has non-finite fields"));
            }
        }
        for d in &self.faces {
            if !known(d.observer) || d.detected.is_some_and(|a| !known(a)) {
                return Err(Error::contract("face detection references unknown actor"));
            }
            if let Some(s) = &d.scores {
                if s.len() != n {
                    return Err(Error::contract(format!(
                        "face score vector has {} entries, registry has {n}",
                        s.len()
                    )));
                }
            }
            if !d.t.is_finite() {
                return Err(Error::contract("face detection time is not finite"));
            }
        }
        Ok(())
    }
}
