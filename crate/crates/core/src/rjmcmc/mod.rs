//! Reversible-jump MCMC over activity configurations.

mod candidates;
mod chain;
mod moves;
mod state;

pub use candidates::{find_candidates, Candidate};
pub use chain::{ensemble_seed, run_chain, Inference};
pub use moves::{merge_instances, mh_accept, Proposal};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActorId, TypeIdx};
use crate::model::Configuration;
use crate::stats::LogNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Birth,
    Death,
    Split,
    Merge,
    Type,
    Center,
    Radius,
    Span,
    StartTime,
    Participants,
}

impl MoveKind {
    pub const ALL: [MoveKind; 10] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Split,
        MoveKind::Merge,
        MoveKind::Type,
        MoveKind::Center,
        MoveKind::Radius,
        MoveKind::Span,
        MoveKind::StartTime,
        MoveKind::Participants,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
            MoveKind::Type => "type",
            MoveKind::Center => "center",
            MoveKind::Radius => "radius",
            MoveKind::Span => "span",
            MoveKind::StartTime => "start_time",
            MoveKind::Participants => "participants",
        }
    }
}

/// Selection weight of each move kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoveWeights {
    pub birth: f64,
    pub death: f64,
    pub split: f64,
    pub merge: f64,
    #[serde(rename = "type")]
    pub type_change: f64,
    pub center: f64,
    pub radius: f64,
    pub span: f64,
    pub start_time: f64,
    pub participants: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

impl MoveWeights {
    pub fn uniform() -> Self {
        Self {
            birth: 1.0,
            death: 1.0,
            split: 1.0,
            merge: 1.0,
            type_change: 1.0,
            center: 1.0,
            radius: 1.0,
            span: 1.0,
            start_time: 1.0,
            participants: 1.0,
        }
    }

    pub fn birth_death_only() -> Self {
        Self {
            birth: 1.0,
            death: 1.0,
            split: 0.0,
            merge: 0.0,
            type_change: 0.0,
            center: 0.0,
            radius: 0.0,
            span: 0.0,
            start_time: 0.0,
            participants: 0.0,
        }
    }

    pub fn get(&self, k: MoveKind) -> f64 {
        match k {
            MoveKind::Birth => self.birth,
            MoveKind::Death => self.death,
            MoveKind::Split => self.split,
            MoveKind::Merge => self.merge,
            MoveKind::Type => self.type_change,
            MoveKind::Center => self.center,
            MoveKind::Radius => self.radius,
            MoveKind::Span => self.span,
            MoveKind::StartTime => self.start_time,
            MoveKind::Participants => self.participants,
        }
    }

    pub fn total(&self) -> f64 {
        MoveKind::ALL.iter().map(|&k| self.get(k)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if MoveKind::ALL
            .iter()
            .any(|&k| !(self.get(k) >= 0.0) || !self.get(k).is_finite())
        {
            return Err(Error::config("move weights must be finite and >= 0"));
        }
        if !(self.total() > 0.0) {
            return Err(Error::config("move weights must not all be zero"));
        }
        if self.birth != self.death {
            return Err(Error::config("birth and death weights must be equal"));
        }
        if self.split != self.merge {
            return Err(Error::config("split and merge weights must be equal"));
        }
        Ok(())
    }
}

/// Quantised parameter space for exhaustive checks: every instance has
/// the fixed type, radius and participants and takes its center, span and
/// start from the listed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub centers: Vec<[f64; 2]>,
    pub spans_s: Vec<f64>,
    pub starts_s: Vec<f64>,
    pub radius_m: f64,
    pub type_id: TypeIdx,
    pub participants: Vec<ActorId>,
    pub max_instances: usize,
}

impl LatticeSpec {
    pub fn size(&self) -> usize {
        self.centers.len() * self.spans_s.len() * self.starts_s.len()
    }

    /// Every lattice instance, in a fixed order.
    pub fn instances(&self) -> Vec<crate::model::ActivityInstance> {
        let mut out = Vec::with_capacity(self.size());
        for c in &self.centers {
            for &sp in &self.spans_s {
                for &st in &self.starts_s {
                    out.push(crate::model::ActivityInstance::new(
                        self.type_id,
                        *c,
                        self.radius_m,
                        st,
                        sp,
                        self.participants.clone(),
                    ));
                }
            }
        }
        out
    }

    pub fn contains(&self, inst: &crate::model::ActivityInstance) -> bool {
        inst.type_id == self.type_id
            && inst.radius_m == self.radius_m
            && inst.participants == sorted(&self.participants)
            && self.centers.contains(&inst.center)
            && self.spans_s.contains(&inst.span_s)
            && self.starts_s.contains(&inst.start_s)
    }
}

fn sorted(v: &[ActorId]) -> Vec<ActorId> {
    let mut v = v.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Sampler settings; proposal parameters use (median, log-std) log-normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    /// Keep every `save_every`-th post-burn-in state.
    pub save_every: usize,
    /// Redraw the trajectory ensemble every this many iterations; 0 keeps
    /// the initial ensemble.
    pub refresh_period: usize,
    pub n_draws: usize,
    pub grid_points: usize,
    pub weights: MoveWeights,
    pub radius_proposal: LogNormal,
    pub span_proposal: LogNormal,
    pub participants_prior: LogNormal,
    pub center_std_m: f64,
    pub start_local_std_s: f64,
    pub start_local_weight: f64,
    pub participants_local_weight: f64,
    pub split_center_std_m: f64,
    pub split_radius_std_m: f64,
    /// Mixture weight of the data-driven birth component.
    pub data_birth_weight: f64,
    pub candidate_min_run_s: f64,
    pub candidate_center_std_m: f64,
    /// Condition the ensemble on the current configuration at refreshes.
    pub aux_conditioning: bool,
    pub lattice: Option<LatticeSpec>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iters: 10_000,
            burn_in: 2_500,
            save_every: 1,
            refresh_period: 500,
            n_draws: 50,
            grid_points: 500,
            weights: MoveWeights::uniform(),
            radius_proposal: LogNormal::new(30.0, 0.03),
            span_proposal: LogNormal::new(300.0, 0.005),
            participants_prior: LogNormal::new(2.0, 0.5),
            center_std_m: 20.0,
            start_local_std_s: 10.0,
            start_local_weight: 0.5,
            participants_local_weight: 0.5,
            split_center_std_m: 5.0,
            split_radius_std_m: 2.0,
            data_birth_weight: 0.5,
            candidate_min_run_s: 20.0,
            candidate_center_std_m: 15.0,
            aux_conditioning: false,
            lattice: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.burn_in >= self.n_iters {
            return Err(Error::config("need n_iters > burn_in >= 0"));
        }
        if self.save_every == 0 || self.n_draws == 0 || self.grid_points < 2 {
            return Err(Error::config(
                "save_every, n_draws must be >= 1 and grid_points >= 2",
            ));
        }
        self.weights.validate()?;
        for (name, d) in [
            ("radius_proposal", self.radius_proposal),
            ("span_proposal", self.span_proposal),
            ("participants_prior", self.participants_prior),
        ] {
            if !d.is_valid() {
                return Err(Error::config(format!(
                    "{name} needs median > 0 and log_std > 0"
                )));
            }
        }
        for (name, v) in [
            ("center_std_m", self.center_std_m),
            ("start_local_std_s", self.start_local_std_s),
            ("split_center_std_m", self.split_center_std_m),
            ("split_radius_std_m", self.split_radius_std_m),
            ("candidate_center_std_m", self.candidate_center_std_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be > 0")));
            }
        }
        for (name, v) in [
            ("start_local_weight", self.start_local_weight),
            ("participants_local_weight", self.participants_local_weight),
            ("data_birth_weight", self.data_birth_weight),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.candidate_min_run_s >= 0.0) {
            return Err(Error::config("candidate_min_run_s must be >= 0"));
        }
        if let Some(l) = &self.lattice {
            if l.size() == 0
                || l.max_instances == 0
                || l.participants.len() < 2
                || !(l.radius_m > 0.0)
            {
                return Err(Error::config(
                    "lattice needs values on every axis, >= 2 participants and max_instances >= 1",
                ));
            }
        }
        Ok(())
    }
}

/// Proposal and acceptance counts of one move kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KindStats {
    pub proposed: u64,
    pub accepted: u64,
    /// Structurally impossible or invalid proposals, rejected without
    /// scoring.
    pub auto_rejected: u64,
}

impl KindStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MoveStats {
    pub kinds: Vec<(MoveKind, KindStats)>,
    pub numerical_warnings: u64,
}

impl MoveStats {
    pub(crate) fn new() -> Self {
        Self {
            kinds: MoveKind::ALL
                .iter()
                .map(|&k| (k, KindStats::default()))
                .collect(),
            numerical_warnings: 0,
        }
    }

    pub fn get(&self, k: MoveKind) -> KindStats {
        self.kinds[k.index()].1
    }

    pub(crate) fn get_mut(&mut self, k: MoveKind) -> &mut KindStats {
        &mut self.kinds[k.index()].1
    }

    /// Enabled kinds that never had a proposal accepted.
    pub fn flagged(&self, weights: &MoveWeights) -> Vec<MoveKind> {
        MoveKind::ALL
            .iter()
            .copied()
            .filter(|&k| {
                weights.get(k) > 0.0 && self.get(k).proposed > 0 && self.get(k).accepted == 0
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub iteration: usize,
    pub log_score: f64,
    pub config: Configuration,
}

/// Post-burn-in output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub seed: u64,
    pub burn_in: usize,
    pub n_iters: usize,
    pub samples: Vec<ChainSample>,
    pub stats: MoveStats,
}

impl ChainSamples {
    pub fn configs(&self) -> impl Iterator<Item = &Configuration> {
        self.samples.iter().map(|s| &s.config)
    }

    /// Highest-scoring stored sample.
    pub fn map_sample(&self) -> Option<&ChainSample> {
        self.samples
            .iter()
            .fold(None, |best: Option<&ChainSample>, s| match best {
                Some(b) if b.log_score >= s.log_score => Some(b),
                _ => Some(s),
            })
    }

    /// Pool several chains (samples concatenated in chain order).
    pub fn pooled(chains: &[ChainSamples]) -> Option<ChainSamples> {
        let first = chains.first()?;
        let mut out = first.clone();
        for c in &chains[1..] {
            out.samples.extend(c.samples.iter().cloned());
            for (k, s) in &c.stats.kinds {
                let t = out.stats.get_mut(*k);
                t.proposed += s.proposed;
                t.accepted += s.accepted;
                t.auto_rejected += s.auto_rejected;
            }
            out.stats.numerical_warnings += c.stats.numerical_warnings;
        }
        Some(out)
    }
}
