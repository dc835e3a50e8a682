//! Activity-aware summaries: keyframes chosen by farthest-point sampling,
//! map placement of keyframes inside activity circles, and a constrained
//! multi-stream video sequence.

mod map;
mod trellis;

pub use map::{map_summary, MapCircle, MapOptions, MapSummary, Placement};
pub use trellis::{
    edge_cost, node_cost, summarize_video, validate_sequence, ChosenNode, Constraints, Disc,
    EdgeTerms, NodeTerms, StopReason, TrellisContext, TrellisWeights, VideoSummary, Violation,
};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::FrameRecord;
use crate::error::{Error, Result};
use crate::ids::ActorId;
use crate::model::Configuration;
use crate::par::Execution;
use crate::rjmcmc::ChainSamples;

/// Time, then actor, then input position.
pub(crate) fn frame_order(frames: &[FrameRecord], a: usize, b: usize) -> Ordering {
    frames[a]
        .t
        .total_cmp(&frames[b].t)
        .then(frames[a].actor.cmp(&frames[b].actor))
        .then(a.cmp(&b))
}

/// Highest-scoring sample over all chains; ties go to the earlier chain.
pub fn pooled_map(chains: &[ChainSamples]) -> Option<&Configuration> {
    let mut best: Option<(f64, &Configuration)> = None;
    for c in chains {
        if let Some(s) = c.map_sample() {
            if best.is_none_or(|(b, _)| s.log_score > b) {
                best = Some((s.log_score, &s.config));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// For every frame, a bit per (sample, instance) pair over all chains: set
/// when the instance covers the frame's actor at the frame's time.
#[derive(Debug, Clone)]
pub struct CoverageIndex {
    pub n_pairs: usize,
    bits: Vec<Vec<u64>>,
}

impl CoverageIndex {
    pub fn new(
        frames: &[FrameRecord],
        chains: &[ChainSamples],
        execution: Execution,
    ) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::contract("coverage needs at least one chain"));
        }
        let pairs: Vec<_> = chains
            .iter()
            .flat_map(|c| c.configs())
            .flat_map(|cfg| cfg.instances.iter())
            .collect();
        let words = pairs.len().div_ceil(64);
        let bits = execution.map(frames, |f| {
            let mut row = vec![0u64; words];
            for (k, inst) in pairs.iter().enumerate() {
                if inst.covers(f.actor, f.t) {
                    row[k / 64] |= 1 << (k % 64);
                }
            }
            row
        });
        Ok(Self {
            n_pairs: pairs.len(),
            bits,
        })
    }

    pub fn votes(&self, i: usize) -> u32 {
        self.bits[i].iter().map(|w| w.count_ones()).sum()
    }

    /// Fraction of pairs covering exactly one of the two frames.
    pub fn disagreement(&self, i: usize, j: usize) -> f64 {
        if self.n_pairs == 0 {
            return 0.0;
        }
        let n: u32 = self.bits[i]
            .iter()
            .zip(&self.bits[j])
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        n as f64 / self.n_pairs as f64
    }
}

/// Per-frame count of (sample, instance) pairs covering it.
pub fn activity_votes(chains: &[ChainSamples], frames: &[FrameRecord]) -> Result<Vec<u32>> {
    let cov = CoverageIndex::new(frames, chains, Execution::Sequential)?;
    Ok((0..frames.len()).map(|i| cov.votes(i)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameDistanceWeights {
    /// Activity disagreement.
    pub w_ac: f64,
    pub w_feat: f64,
    pub w_time: f64,
    /// Different source actor.
    pub w_id: f64,
    pub feat_scale: f64,
    pub time_scale_s: f64,
}

impl Default for FrameDistanceWeights {
    fn default() -> Self {
        Self {
            w_ac: 1.0,
            w_feat: 1.0,
            w_time: 1.0,
            w_id: 0.5,
            feat_scale: 1.0,
            time_scale_s: 600.0,
        }
    }
}

impl FrameDistanceWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_ac, self.w_feat, self.w_time, self.w_id];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::config(
                "frame distance weights must be finite and >= 0",
            ));
        }
        if !w.iter().any(|x| *x > 0.0) {
            return Err(Error::config(
                "at least one frame distance weight must be > 0",
            ));
        }
        if !(self.feat_scale > 0.0) || !(self.time_scale_s > 0.0) {
            return Err(Error::config("frame distance scales must be > 0"));
        }
        Ok(())
    }
}

/// Pseudometric between frames: a nonnegative combination of the coverage
/// disagreement, feature distance, time gap and an actor indicator.
pub struct FrameDistance<'a> {
    pub frames: &'a [FrameRecord],
    pub coverage: CoverageIndex,
    pub weights: FrameDistanceWeights,
}

impl<'a> FrameDistance<'a> {
    pub fn new(
        frames: &'a [FrameRecord],
        chains: &[ChainSamples],
        weights: FrameDistanceWeights,
        execution: Execution,
    ) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            frames,
            coverage: CoverageIndex::new(frames, chains, execution)?,
            weights,
        })
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = (&self.frames[i], &self.frames[j]);
        let w = &self.weights;
        let feat = a
            .features
            .iter()
            .zip(&b.features)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let id = if a.actor != b.actor { 1.0 } else { 0.0 };
        w.w_ac * self.coverage.disagreement(i, j)
            + w.w_feat * feat / w.feat_scale
            + w.w_time * (a.t - b.t).abs() / w.time_scale_s
            + w.w_id * id
    }
}

/// Distance between frames `i` and `j` of `frames`.
pub fn frame_distance(
    frames: &[FrameRecord],
    i: usize,
    j: usize,
    chains: &[ChainSamples],
    weights: &FrameDistanceWeights,
) -> Result<f64> {
    if i >= frames.len() || j >= frames.len() {
        return Err(Error::contract("frame index out of range"));
    }
    Ok(FrameDistance::new(frames, chains, *weights, Execution::Sequential)?.d(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframeOptions {
    pub k: usize,
    /// Frames with fewer than `vote_floor * max votes` are dropped.
    pub vote_floor: f64,
    pub weights: FrameDistanceWeights,
    pub execution: Execution,
}

impl Default for KeyframeOptions {
    fn default() -> Self {
        Self {
            k: 10,
            vote_floor: 0.1,
            weights: FrameDistanceWeights::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFrame {
    /// Position in the input frame list.
    pub index: usize,
    pub actor: ActorId,
    pub t: f64,
    pub votes: u32,
    /// 1-based order in which sampling picked the frame.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSummary {
    /// Time-ordered.
    pub frames: Vec<SelectedFrame>,
    /// No frame reached the vote floor; all frames were candidates.
    pub floor_fallback: bool,
    /// Fewer candidates than requested; all were returned.
    pub exhausted: bool,
}

/// Drop low-vote frames, then farthest-point sampling seeded at the
/// most-voted frame. Ties: earliest time, then lowest actor id.
pub fn select_keyframes(
    frames: &[FrameRecord],
    chains: &[ChainSamples],
    opts: &KeyframeOptions,
) -> Result<KeyframeSummary> {
    if opts.k == 0 {
        return Err(Error::contract("k must be >= 1"));
    }
    if frames.is_empty() {
        return Err(Error::contract("no frames to select from"));
    }
    if !(opts.vote_floor >= 0.0) || !opts.vote_floor.is_finite() {
        return Err(Error::contract("vote_floor must be finite and >= 0"));
    }
    let dist = FrameDistance::new(frames, chains, opts.weights, opts.execution)?;
    let votes: Vec<u32> = (0..frames.len()).map(|i| dist.coverage.votes(i)).collect();
    let max_votes = votes.iter().copied().max().unwrap_or(0);
    let floor = opts.vote_floor * max_votes as f64;
    let mut pool: Vec<usize> = (0..frames.len())
        .filter(|&i| votes[i] as f64 >= floor)
        .collect();
    let floor_fallback = pool.is_empty();
    if floor_fallback {
        pool = (0..frames.len()).collect();
    }
    pool.sort_by(|&a, &b| frame_order(frames, a, b));

    let exhausted = opts.k > pool.len();
    let k = opts.k.min(pool.len());
    // Pool is time-ordered, so the first maximum is the tie-break winner.
    let seed = pool.iter().enumerate().fold(0, |best, (p, &i)| {
        if votes[i] > votes[pool[best]] {
            p
        } else {
            best
        }
    });
    let mut picked = vec![seed];
    let mut taken = vec![false; pool.len()];
    taken[seed] = true;
    let mut min_d = vec![f64::INFINITY; pool.len()];
    while picked.len() < k {
        let last = pool[*picked.last().unwrap()];
        let row = opts.execution.map(&pool, |&j| dist.d(last, j));
        let mut best: Option<usize> = None;
        for p in 0..pool.len() {
            min_d[p] = min_d[p].min(row[p]);
            if !taken[p] && best.is_none_or(|b| min_d[p] > min_d[b]) {
                best = Some(p);
            }
        }
        let b = best.expect("k <= pool size");
        taken[b] = true;
        picked.push(b);
    }

    let mut out: Vec<SelectedFrame> = picked
        .iter()
        .enumerate()
        .map(|(r, &p)| {
            let i = pool[p];
            SelectedFrame {
                index: i,
                actor: frames[i].actor,
                t: frames[i].t,
                votes: votes[i],
                rank: r + 1,
            }
        })
        .collect();
    out.sort_by(|a, b| frame_order(frames, a.index, b.index));
    Ok(KeyframeSummary {
        frames: out,
        floor_fallback,
        exhausted,
    })
}
