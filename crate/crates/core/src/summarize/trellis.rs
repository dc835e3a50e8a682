//! Constrained video sequence over all actors' frame streams.
//!
//! Each step builds, for every actor, a super node of its next `s`
//! admissible frames, finds the best forward path inside each node, and
//! appends the best path overall.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::pooled_map;
use crate::data::DataBundle;
use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::ids::ActorId;
use crate::model::factors::assign_frame;
use crate::rjmcmc::ChainSamples;

/// Largest super node searched exhaustively; bigger nodes use a greedy
/// forward search.
pub const EXACT_NODE_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius_m: f64,
}

impl Disc {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)
            <= self.radius_m * self.radius_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub t_begin: Option<f64>,
    pub t_end: Option<f64>,
    /// When non-empty, frames must be taken inside one of these.
    pub permitted: Vec<Disc>,
    pub prohibited: Vec<Disc>,
    /// Largest time gap between successive output frames.
    pub max_jump_s: Option<f64>,
    /// Consecutive frames from one actor; the final run may be shorter.
    pub min_run: usize,
    pub max_run: Option<usize>,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            t_begin: None,
            t_end: None,
            permitted: Vec::new(),
            prohibited: Vec::new(),
            max_jump_s: None,
            min_run: 1,
            max_run: None,
        }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if self.min_run == 0 {
            return Err(Error::config("min_run must be >= 1"));
        }
        if self.max_run.is_some_and(|m| m < self.min_run) {
            return Err(Error::config("max_run must be >= min_run"));
        }
        if let (Some(a), Some(b)) = (self.t_begin, self.t_end) {
            if !(a <= b) {
                return Err(Error::config("t_begin must not exceed t_end"));
            }
        }
        if self.max_jump_s.is_some_and(|j| !(j >= 0.0)) {
            return Err(Error::config("max_jump_s must be >= 0"));
        }
        if self
            .permitted
            .iter()
            .chain(&self.prohibited)
            .any(|d| !(d.radius_m > 0.0) || !d.center.iter().all(|x| x.is_finite()))
        {
            return Err(Error::config(
                "location discs need a finite center and radius > 0",
            ));
        }
        Ok(())
    }

    fn has_location(&self) -> bool {
        !self.permitted.is_empty() || !self.prohibited.is_empty()
    }

    fn in_time(&self, t: f64) -> bool {
        self.t_begin.is_none_or(|b| t >= b) && self.t_end.is_none_or(|e| t <= e)
    }

    fn location_ok(&self, p: [f64; 2]) -> bool {
        (self.permitted.is_empty() || self.permitted.iter().any(|d| d.contains(p)))
            && !self.prohibited.iter().any(|d| d.contains(p))
    }

    fn jump_ok(&self, t0: f64, t1: f64) -> bool {
        self.max_jump_s.is_none_or(|j| (t1 - t0).abs() <= j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrellisWeights {
    pub w_q: f64,
    pub w_f: f64,
    pub w_a: f64,
    /// Per-actor multiplier on node costs; missing entries are 1.
    pub actor_weights: Vec<f64>,
    pub w_nm: f64,
    pub w_sf: f64,
    pub w_sa: f64,
    /// Per metre between the actors' mean positions.
    pub w_delta: f64,
    /// Per second between frame times.
    pub w_t: f64,
    /// Multiplier on an edge into a not-yet-shown activity.
    pub w_n: f64,
    pub super_node_size: usize,
    /// Face detections this close to a frame count as seen in it.
    pub face_window_s: f64,
    pub constraints: Constraints,
}

impl Default for TrellisWeights {
    fn default() -> Self {
        Self {
            w_q: 1.0,
            w_f: 1.0,
            w_a: 2.0,
            actor_weights: Vec::new(),
            w_nm: 1.0,
            w_sf: 0.5,
            w_sa: 1.0,
            w_delta: 0.002,
            w_t: 0.002,
            w_n: 0.5,
            super_node_size: 3,
            face_window_s: 5.0,
            constraints: Constraints::default(),
        }
    }
}

impl TrellisWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.w_q,
            self.w_f,
            self.w_a,
            self.w_nm,
            self.w_sf,
            self.w_sa,
            self.w_delta,
            self.w_t,
            self.w_n,
            self.face_window_s,
        ];
        if w.iter()
            .chain(&self.actor_weights)
            .any(|x| !(*x >= 0.0) || !x.is_finite())
        {
            return Err(Error::config("trellis weights must be finite and >= 0"));
        }
        if self.super_node_size == 0 {
            return Err(Error::config("super_node_size must be >= 1"));
        }
        self.constraints.validate()
    }

    pub fn actor_weight(&self, a: ActorId) -> f64 {
        self.actor_weights.get(a.index()).copied().unwrap_or(1.0)
    }
}

/// Inputs of the node cost of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTerms {
    /// `kp / kp_max`; `None` when every frame has zero keypoints.
    pub kp_ratio: Option<f64>,
    pub identified: bool,
    pub in_activity: bool,
    pub actor_weight: f64,
}

/// Inputs of the cost of moving from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerms {
    /// `M / M_max`; `None` when no admissible pair has matches.
    pub match_ratio: Option<f64>,
    pub same_face: bool,
    pub same_activity: bool,
    pub distance_m: f64,
    pub gap_s: f64,
    pub new_activity: bool,
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `((1 - kp/kp_max) w_q + (1 - δ_f) w_f + (1 - δ_a) w_a) w_i`.
pub fn node_cost(n: &NodeTerms, w: &TrellisWeights) -> f64 {
    let q = n.kp_ratio.map_or(0.0, |r| (1.0 - r) * w.w_q);
    (q + (1.0 - ind(n.identified)) * w.w_f + (1.0 - ind(n.in_activity)) * w.w_a) * n.actor_weight
}

pub fn edge_cost(e: &EdgeTerms, w: &TrellisWeights) -> f64 {
    let m = e.match_ratio.map_or(0.0, |r| (1.0 - r) * w.w_nm);
    let base = m
        + (1.0 - ind(e.same_face)) * w.w_sf
        + (1.0 - ind(e.same_activity)) * w.w_sa
        + e.distance_m * w.w_delta
        + e.gap_s * w.w_t;
    base * (ind(e.new_activity) * w.w_n + (1.0 - ind(e.new_activity)))
}

/// Mean position of `actor` at `t`, linearly interpolated on the grid.
fn position_at(posteriors: &[GpPosterior], actor: ActorId, t: f64) -> Option<[f64; 2]> {
    let p = posteriors.iter().find(|p| p.block_of(actor).is_some())?;
    let b = p.block_of(actor)?;
    let n = p.grid.n_points;
    if n < 2 {
        return p.mean.get(b * n).copied();
    }
    let (i, u) = p.grid.locate(t);
    let (a, c) = (p.mean[b * n + i], p.mean[b * n + i + 1]);
    Some([a[0] + u * (c[0] - a[0]), a[1] + u * (c[1] - a[1])])
}

/// Per-frame quantities shared by every cost evaluation.
pub struct TrellisContext<'a> {
    pub data: &'a DataBundle,
    pub weights: &'a TrellisWeights,
    /// Instance of the highest-scoring sample each frame is attributed to.
    pub assigned: Vec<Option<usize>>,
    /// Identities detected in the frame's stream near the frame time.
    pub faces: Vec<Vec<ActorId>>,
    pub identified: Vec<bool>,
    pub positions: Vec<Option<[f64; 2]>>,
    /// Meets the time window and location constraints.
    pub admissible: Vec<bool>,
    pub kp_max: u32,
    pub match_max: u32,
    /// Frames without a position where one is needed; never selected.
    pub unlocated: usize,
    matches: HashMap<(usize, usize), u32>,
    by_actor: Vec<Vec<usize>>,
}

impl<'a> TrellisContext<'a> {
    pub fn new(
        data: &'a DataBundle,
        chains: &[ChainSamples],
        posteriors: &[GpPosterior],
        weights: &'a TrellisWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let config = pooled_map(chains)
            .ok_or_else(|| Error::contract("summarization needs at least one sample"))?;
        let frames = &data.frames;
        let c = &weights.constraints;
        let need_pos = c.has_location() || weights.w_delta > 0.0;

        let assigned: Vec<_> = frames
            .iter()
            .map(|f| assign_frame(config, f.actor, f.t))
            .collect();
        let faces: Vec<Vec<ActorId>> = frames
            .iter()
            .map(|f| {
                let mut ids: Vec<ActorId> = data
                    .faces
                    .iter()
                    .filter(|d| d.observer == f.actor && (d.t - f.t).abs() <= weights.face_window_s)
                    .filter_map(|d| d.detected)
                    .collect();
                ids.sort();
                ids.dedup();
                ids
            })
            .collect();
        let identified = frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                assigned[i].is_some_and(|k| {
                    let inst = &config.instances[k];
                    faces[i].iter().any(|&a| a != f.actor && inst.has(a))
                })
            })
            .collect();
        let positions: Vec<_> = frames
            .iter()
            .map(|f| position_at(posteriors, f.actor, f.t))
            .collect();
        let mut unlocated = 0;
        let admissible: Vec<bool> = frames
            .iter()
            .zip(&positions)
            .map(|(f, p)| {
                if need_pos && p.is_none() {
                    unlocated += 1;
                    return false;
                }
                c.in_time(f.t) && (!c.has_location() || c.location_ok(p.expect("checked")))
            })
            .collect();

        let index: HashMap<(ActorId, u64), usize> = frames
            .iter()
            .enumerate()
            .map(|(i, f)| ((f.actor, f.t.to_bits()), i))
            .collect();
        let mut matches = HashMap::new();
        let mut match_max = 0;
        for m in &data.matches {
            let (Some(&i), Some(&j)) = (
                index.get(&(m.actor_i, m.t_i.to_bits())),
                index.get(&(m.actor_j, m.t_j.to_bits())),
            ) else {
                continue;
            };
            matches.insert((i, j), m.matches);
            matches.insert((j, i), m.matches);
            if admissible[i] && admissible[j] && c.jump_ok(frames[i].t, frames[j].t) {
                match_max = match_max.max(m.matches);
            }
        }
        let kp_max = frames.iter().map(|f| f.kp_count).max().unwrap_or(0);

        let mut by_actor = vec![Vec::new(); data.n_actors()];
        for (i, f) in frames.iter().enumerate() {
            if let Some(v) = by_actor.get_mut(f.actor.index()) {
                v.push(i);
            }
        }
        for v in &mut by_actor {
            v.sort_by(|&a, &b| frames[a].t.total_cmp(&frames[b].t).then(a.cmp(&b)));
        }
        Ok(Self {
            data,
            weights,
            assigned,
            faces,
            identified,
            positions,
            admissible,
            kp_max,
            match_max,
            unlocated,
            matches,
            by_actor,
        })
    }

    pub fn matches(&self, i: usize, j: usize) -> u32 {
        self.matches.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn node_terms(&self, i: usize) -> NodeTerms {
        let f = &self.data.frames[i];
        NodeTerms {
            kp_ratio: (self.kp_max > 0).then(|| f.kp_count as f64 / self.kp_max as f64),
            identified: self.identified[i],
            in_activity: self.assigned[i].is_some(),
            actor_weight: self.weights.actor_weight(f.actor),
        }
    }

    pub fn node_cost(&self, i: usize) -> f64 {
        node_cost(&self.node_terms(i), self.weights)
    }

    /// Terms of the edge `i -> j`; `prior` lists the frames already shown.
    pub fn edge_terms(&self, i: usize, j: usize, prior: &[usize]) -> EdgeTerms {
        let (fi, fj) = (&self.data.frames[i], &self.data.frames[j]);
        let distance_m = match (self.positions[i], self.positions[j]) {
            (Some(a), Some(b)) => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
            _ => 0.0,
        };
        let same_face = self.faces[i]
            .iter()
            .any(|a| self.faces[j].binary_search(a).is_ok());
        let new_activity =
            self.assigned[j].is_some_and(|k| !prior.iter().any(|&p| self.assigned[p] == Some(k)));
        EdgeTerms {
            match_ratio: (self.match_max > 0)
                .then(|| self.matches(i, j) as f64 / self.match_max as f64),
            same_face,
            same_activity: self.assigned[i].is_some() && self.assigned[i] == self.assigned[j],
            distance_m,
            gap_s: (fj.t - fi.t).abs(),
            new_activity,
        }
    }

    pub fn edge_cost(&self, i: usize, j: usize, prior: &[usize]) -> f64 {
        edge_cost(&self.edge_terms(i, j, prior), self.weights)
    }

    /// Cost of appending `path` after the shown frames `prior`.
    pub fn path_cost(&self, prior: &[usize], path: &[usize]) -> f64 {
        let mut shown = prior.to_vec();
        let mut cost = 0.0;
        for &j in path {
            if let Some(&i) = shown.last() {
                cost += self.edge_cost(i, j, &shown);
            }
            cost += self.node_cost(j);
            shown.push(j);
        }
        cost
    }

    /// Whether `path` can follow `prev` under the jump constraint.
    pub fn path_jumps_ok(&self, prev: Option<usize>, path: &[usize]) -> bool {
        let c = &self.weights.constraints;
        let t = |i: usize| self.data.frames[i].t;
        prev.iter()
            .chain(path)
            .zip(prev.iter().chain(path).skip(1))
            .all(|(&a, &b)| c.jump_ok(t(a), t(b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The requested number of frames was reached.
    Budget,
    /// No super node had an admissible path.
    NoReachableNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenNode {
    pub actor: ActorId,
    /// The super node's candidate frames, time-ordered.
    pub candidates: Vec<usize>,
    /// Longest path the run and budget limits allowed.
    pub max_len: usize,
    pub path: Vec<usize>,
    pub cost: f64,
}

impl ChosenNode {
    pub fn mean_cost(&self) -> f64 {
        self.cost / self.path.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    /// Output frames (indices into the bundle's frames), in order.
    pub frames: Vec<usize>,
    pub nodes: Vec<ChosenNode>,
    pub stop: StopReason,
    /// Nothing satisfied the constraints.
    pub empty: bool,
    pub kp_normalizer_zero: bool,
    pub match_normalizer_zero: bool,
}

/// Best forward path through `cands` (time-ordered) by mean cost per
/// frame. Ties go to the longer path, then to the earlier subset in
/// bitmask order.
fn best_path(
    ctx: &TrellisContext,
    prior: &[usize],
    cands: &[usize],
    max_len: usize,
) -> Option<(Vec<usize>, f64)> {
    let prev = prior.last().copied();
    let better = |cost: f64, len: usize, best: &Option<(Vec<usize>, f64)>| match best {
        None => true,
        Some((p, c)) => {
            let (m, bm) = (cost / len as f64, c / p.len() as f64);
            m < bm || (m == bm && len > p.len())
        }
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    if cands.len() <= EXACT_NODE_MAX {
        for mask in 1u32..(1 << cands.len()) {
            if mask.count_ones() as usize > max_len {
                continue;
            }
            let path: Vec<usize> = (0..cands.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| cands[b])
                .collect();
            if !ctx.path_jumps_ok(prev, &path) {
                continue;
            }
            let cost = ctx.path_cost(prior, &path);
            if better(cost, path.len(), &best) {
                best = Some((path, cost));
            }
        }
        return best;
    }
    // Greedy: extend with the next frame that gives the lowest mean, while
    // the mean does not increase.
    let mut path: Vec<usize> = Vec::new();
    let mut cost = 0.0;
    let mut from = 0;
    while path.len() < max_len {
        let mut step: Option<(usize, f64)> = None;
        for (k, &j) in cands.iter().enumerate().skip(from) {
            let mut p = path.clone();
            p.push(j);
            if !ctx.path_jumps_ok(prev, &p) {
                continue;
            }
            let c = ctx.path_cost(prior, &p);
            if step.is_none_or(|(_, sc)| c < sc) {
                step = Some((k, c));
            }
        }
        let Some((k, c)) = step else { break };
        if !path.is_empty() && c / (path.len() + 1) as f64 > cost / path.len() as f64 {
            break;
        }
        path.push(cands[k]);
        cost = c;
        from = k + 1;
    }
    (!path.is_empty()).then_some((path, cost))
}

/// Select up to `t_out` frames across all actors' streams.
pub fn summarize_video(
    data: &DataBundle,
    chains: &[ChainSamples],
    posteriors: &[GpPosterior],
    weights: &TrellisWeights,
    t_out: usize,
) -> Result<VideoSummary> {
    if t_out == 0 {
        return Err(Error::contract("t_out must be >= 1"));
    }
    let ctx = TrellisContext::new(data, chains, posteriors, weights)?;
    let frames = &data.frames;
    let c = &weights.constraints;
    let s = weights.super_node_size;

    let mut out: Vec<usize> = Vec::new();
    let mut nodes = Vec::new();
    let mut shown = vec![false; frames.len()];
    let mut cur = f64::NEG_INFINITY;
    let mut run: Option<(ActorId, usize)> = None;
    let stop = loop {
        if out.len() >= t_out {
            break StopReason::Budget;
        }
        let remaining = t_out - out.len();
        let mut best: Option<ChosenNode> = None;
        for (a, list) in ctx.by_actor.iter().enumerate() {
            let actor = ActorId(a as u32);
            let limit = c.max_run.unwrap_or(usize::MAX);
            let cap = match run {
                None => limit,
                Some((r_actor, r)) if r_actor == actor => limit.saturating_sub(r),
                Some((_, r)) if r >= c.min_run => limit,
                Some(_) => 0,
            };
            let max_len = cap.min(remaining);
            if max_len == 0 {
                continue;
            }
            let cands: Vec<usize> = list
                .iter()
                .copied()
                .filter(|&i| ctx.admissible[i] && !shown[i] && frames[i].t >= cur)
                .take(s)
                .collect();
            let Some((path, cost)) = best_path(&ctx, &out, &cands, max_len) else {
                continue;
            };
            let node = ChosenNode {
                actor,
                candidates: cands,
                max_len,
                path,
                cost,
            };
            let wins = best.as_ref().is_none_or(|b| {
                let (m, bm) = (node.mean_cost(), b.mean_cost());
                m < bm || (m == bm && frames[node.path[0]].t < frames[b.path[0]].t)
            });
            if wins {
                best = Some(node);
            }
        }
        let Some(node) = best else {
            break StopReason::NoReachableNode;
        };
        for &i in &node.path {
            shown[i] = true;
            out.push(i);
        }
        cur = frames[*node.path.last().unwrap()].t;
        run = match run {
            Some((a, r)) if a == node.actor => Some((a, r + node.path.len())),
            _ => Some((node.actor, node.path.len())),
        };
        nodes.push(node);
    };
    Ok(VideoSummary {
        empty: out.is_empty(),
        frames: out,
        nodes,
        stop,
        kp_normalizer_zero: ctx.kp_max == 0,
        match_normalizer_zero: ctx.match_max == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    Repeated { pos: usize },
    OutOfOrder { pos: usize },
    OutsideTimeWindow { pos: usize },
    Location { pos: usize },
    Jump { pos: usize },
    RunTooShort { start: usize, len: usize },
    RunTooLong { start: usize, len: usize },
}

/// Every constraint breach in an output sequence. Positions come from the
/// same GP means the selection used.
pub fn validate_sequence(
    data: &DataBundle,
    posteriors: &[GpPosterior],
    constraints: &Constraints,
    seq: &[usize],
) -> Vec<Violation> {
    let frames = &data.frames;
    let mut v = Vec::new();
    for (pos, &i) in seq.iter().enumerate() {
        let f = &frames[i];
        if seq[..pos].contains(&i) {
            v.push(Violation::Repeated { pos });
        }
        if !constraints.in_time(f.t) {
            v.push(Violation::OutsideTimeWindow { pos });
        }
        if constraints.has_location()
            && !position_at(posteriors, f.actor, f.t).is_some_and(|p| constraints.location_ok(p))
        {
            v.push(Violation::Location { pos });
        }
        if pos > 0 {
            let prev = &frames[seq[pos - 1]];
            if f.t < prev.t {
                v.push(Violation::OutOfOrder { pos });
            }
            if !constraints.jump_ok(prev.t, f.t) {
                v.push(Violation::Jump { pos });
            }
        }
    }
    let mut start = 0;
    while start < seq.len() {
        let a = frames[seq[start]].actor;
        let len = seq[start..]
            .iter()
            .take_while(|&&i| frames[i].actor == a)
            .count();
        let last = start + len == seq.len();
        if len < constraints.min_run && !last {
            v.push(Violation::RunTooShort { start, len });
        }
        if constraints.max_run.is_some_and(|m| len > m) {
            v.push(Violation::RunTooLong { start, len });
        }
        start += len;
    }
    v
}
