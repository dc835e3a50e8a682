//! The sampler loop.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::candidates::{find_candidates, Candidate};
use super::moves::{mh_accept, propose, MoveContext, Proposal};
use super::state::ScoreState;
use super::{ChainSample, ChainSamples, MoveKind, MoveStats, SamplerConfig};
use crate::data::DataBundle;
use crate::error::{Error, Result};
use crate::gp::{
    build_gp, condition_on_activities, sample_trajectories, AuxMode, AuxObservationSet,
    GpHyperParams, GpPosterior, TimeGrid, TrajectoryEnsemble,
};
use crate::ids::ActorId;
use crate::model::{
    ActivityInstance, ActivityType, Configuration, ModelContext, ModelParams, OverlapMatrix,
};
use crate::par::Execution;

/// Seed of the trajectory draws of one actor at one refresh of one chain.
pub fn ensemble_seed(chain_seed: u64, refresh: u64, actor: ActorId) -> u64 {
    let mut z = chain_seed
        ^ refresh.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (actor.0 as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything shared by the chains of one inference run: model context, GP
/// posteriors of the tracked actors and birth candidates.
pub struct Inference<'a> {
    pub ctx: ModelContext<'a>,
    pub sampler: SamplerConfig,
    pub grid: TimeGrid,
    /// Time support of the GPS streams; instances must lie inside it.
    pub support: (f64, f64),
    /// Actors with at least one GPS fix, ascending.
    pub actors: Vec<ActorId>,
    /// Aligned with `actors`.
    pub posteriors: Vec<GpPosterior>,
    pub candidates: Vec<Candidate>,
    /// Region for prior-driven birth centers.
    pub bbox: ([f64; 2], [f64; 2]),
    pub execution: Execution,
    means: Vec<Vec<[f64; 2]>>,
}

impl<'a> Inference<'a> {
    pub fn new(
        data: &'a DataBundle,
        types: &'a [ActivityType],
        overlap: &'a OverlapMatrix,
        params: &'a ModelParams,
        hyper: &GpHyperParams,
        sampler: SamplerConfig,
        execution: Execution,
    ) -> Result<Self> {
        sampler.validate()?;
        hyper.validate()?;
        let ctx = ModelContext::new(data, types, overlap, params)?;
        if let Some(l) = &sampler.lattice {
            if l.type_id.index() >= types.len() {
                return Err(Error::config("lattice type index out of range"));
            }
        }
        let actors = data.tracked_actors(1);
        if data.tracked_actors(2).is_empty() {
            return Err(Error::data(
                "gps",
                0,
                "no actor has at least 2 GPS observations",
            ));
        }
        let support = data.time_support()?;
        let grid = TimeGrid::new(support.0, support.1, sampler.grid_points)?;
        let posteriors = execution
            .map(&actors, |&a| build_gp(&data.gps_of(a), hyper, grid))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let threshold = 2.0 * types.iter().map(|t| t.radius_median_m).fold(0.0, f64::max);
        let candidates = find_candidates(&posteriors, threshold, sampler.candidate_min_run_s);
        let bbox = envelope(&posteriors);
        let means = posteriors.iter().map(|p| p.mean.clone()).collect();
        Ok(Self {
            ctx,
            sampler,
            grid,
            support,
            actors,
            posteriors,
            candidates,
            bbox,
            execution,
            means,
        })
    }

    /// Unconditioned draws of every tracked actor for a refresh index.
    pub fn ensemble(&self, chain_seed: u64, refresh: u64) -> Result<TrajectoryEnsemble> {
        let parts = self
            .posteriors
            .iter()
            .zip(&self.actors)
            .map(|(p, &a)| {
                sample_trajectories(
                    p,
                    self.sampler.n_draws,
                    ensemble_seed(chain_seed, refresh, a),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        TrajectoryEnsemble::combine(parts, ensemble_seed(chain_seed, refresh, ActorId(u32::MAX)))
    }

    /// Draws conditioned on proximity of the participants of `config`'s
    /// instances. Actors linked through shared instances are drawn jointly.
    fn conditioned_ensemble(
        &self,
        chain_seed: u64,
        refresh: u64,
        config: &Configuration,
    ) -> Result<TrajectoryEnsemble> {
        let n = self.actors.len();
        let pos = |a: ActorId| self.actors.iter().position(|&x| x == a);
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for inst in &config.instances {
            let idx: Vec<usize> = inst.participants.iter().filter_map(|&a| pos(a)).collect();
            for w in idx.windows(2) {
                let (x, y) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[x] = y;
            }
        }
        let mut parts = Vec::new();
        let mut done = vec![false; n];
        for i in 0..n {
            let root = find(&mut parent, i);
            if done[root] {
                continue;
            }
            done[root] = true;
            let members: Vec<usize> = (0..n).filter(|&j| find(&mut parent, j) == root).collect();
            let lead = self.actors[members[0]];
            let seed = ensemble_seed(chain_seed, refresh, lead);
            let sets: Vec<AuxObservationSet> = config
                .instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| {
                    inst.participants
                        .iter()
                        .any(|&a| pos(a).is_some_and(|k| members.contains(&k)))
                })
                .map(|(k, inst)| AuxObservationSet {
                    mode: AuxMode::Static,
                    participants: inst
                        .participants
                        .iter()
                        .copied()
                        .filter(|&a| pos(a).is_some())
                        .collect(),
                    t_start: inst.start_s,
                    t_end: inst.end_s(),
                    sigma_aux: self.ctx.params.sigma_aux_m,
                    activity_ref: Some(k),
                })
                .filter(|s| s.participants.len() >= 2)
                .collect();
            if sets.is_empty() {
                for &m in &members {
                    let a = self.actors[m];
                    parts.push(sample_trajectories(
                        &self.posteriors[m],
                        self.sampler.n_draws,
                        ensemble_seed(chain_seed, refresh, a),
                    )?);
                }
            } else {
                let joint = condition_on_activities(&self.posteriors, &sets)?;
                parts.push(sample_trajectories(
                    &joint.posterior,
                    self.sampler.n_draws,
                    seed,
                )?);
            }
        }
        TrajectoryEnsemble::combine(parts, ensemble_seed(chain_seed, refresh, ActorId(u32::MAX)))?
            .select(&self.actors)
    }

    fn move_context(&self) -> MoveContext<'_> {
        MoveContext {
            cfg: &self.sampler,
            types: self.ctx.types,
            actors: &self.actors,
            means: &self.means,
            grid: self.grid,
            support: self.support,
            bbox: self.bbox,
            candidates: &self.candidates,
        }
    }

    /// Draw a proposal; `None` is an automatic rejection.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        kind: MoveKind,
        config: &Configuration,
        rng: &mut R,
    ) -> Option<Proposal> {
        propose(kind, config, &self.move_context(), rng)
    }

    /// Log-density of the birth proposal at `inst`.
    pub fn ln_birth_density(&self, inst: &ActivityInstance) -> f64 {
        self.move_context().ln_q_birth(inst)
    }

    /// Whether applying `p` to `config` keeps a valid configuration:
    /// instance invariants, time support, eligible participants, overlap
    /// relations and the lattice cap.
    pub fn admissible(&self, config: &Configuration, p: &Proposal) -> bool {
        const TOL: f64 = 1e-9;
        let (t0, t1) = self.support;
        let kept: Vec<&ActivityInstance> = config
            .instances
            .iter()
            .enumerate()
            .filter(|(k, _)| !p.remove.contains(k))
            .map(|(_, i)| i)
            .collect();
        if let Some(l) = &self.sampler.lattice {
            if kept.len() + p.add.len() > l.max_instances {
                return false;
            }
        }
        for (j, inst) in p.add.iter().enumerate() {
            if inst.validate().is_err() || inst.start_s < t0 - TOL || inst.end_s() > t1 + TOL {
                return false;
            }
            if inst.participants.iter().any(|a| !self.actors.contains(a)) {
                return false;
            }
            if kept.iter().any(|o| !self.ctx.overlap.compatible(inst, o)) {
                return false;
            }
            if p.add[..j]
                .iter()
                .any(|o| !self.ctx.overlap.compatible(inst, o))
            {
                return false;
            }
        }
        true
    }

    /// Run one chain from the empty configuration.
    pub fn run(&self, seed: u64) -> Result<ChainSamples> {
        let cfg = &self.sampler;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = self.ensemble(seed, 0)?;
        let mc = self.move_context();
        let mut state = ScoreState::new(&self.ctx, ens, Configuration::empty())?;
        let mut current = state.total();

        let weights: Vec<f64> = MoveKind::ALL.iter().map(|&k| cfg.weights.get(k)).collect();
        let total_w: f64 = weights.iter().sum();
        let mut stats = MoveStats::new();
        let mut samples = Vec::with_capacity((cfg.n_iters - cfg.burn_in).div_ceil(cfg.save_every));
        let mut refresh = 0u64;

        for it in 0..cfg.n_iters {
            if cfg.refresh_period > 0 && it > 0 && it % cfg.refresh_period == 0 {
                refresh += 1;
                let config = std::mem::take(&mut state.config);
                let ens = if cfg.aux_conditioning && !config.is_empty() {
                    self.conditioned_ensemble(seed, refresh, &config)?
                } else {
                    self.ensemble(seed, refresh)?
                };
                state = ScoreState::new(&self.ctx, ens, config)?;
                current = state.total();
            }

            let mut x = rng.random::<f64>() * total_w;
            let mut kind = MoveKind::ALL[0];
            for (k, &w) in MoveKind::ALL.iter().zip(&weights) {
                if w <= 0.0 {
                    continue;
                }
                kind = *k;
                if x < w {
                    break;
                }
                x -= w;
            }

            let ks = stats.get_mut(kind);
            ks.proposed += 1;
            match propose(kind, &state.config, &mc, &mut rng) {
                Some(p) if self.admissible(&state.config, &p) => {
                    let undo = state.apply(&p.change())?;
                    let new = state.total();
                    match mh_accept(new - current + p.log_q_ratio, &mut rng) {
                        Some(true) => {
                            current = new;
                            stats.get_mut(kind).accepted += 1;
                        }
                        Some(false) => state.undo(undo),
                        None => {
                            state.undo(undo);
                            stats.numerical_warnings += 1;
                        }
                    }
                }
                _ => stats.get_mut(kind).auto_rejected += 1,
            }

            if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.save_every) {
                samples.push(ChainSample {
                    iteration: it,
                    log_score: current,
                    config: state.config.clone(),
                });
            }
        }
        for k in stats.flagged(&cfg.weights) {
            log::warn!("chain {seed}: move '{}' never accepted", k.name());
        }
        Ok(ChainSamples {
            seed,
            burn_in: cfg.burn_in,
            n_iters: cfg.n_iters,
            samples,
            stats,
        })
    }

    /// Independent chains, one per seed, in seed order.
    pub fn run_many(&self, seeds: &[u64]) -> Result<Vec<ChainSamples>> {
        self.execution
            .map(seeds, |&s| self.run(s))
            .into_iter()
            .collect()
    }
}

/// Box around every posterior mean widened by three pointwise standard
/// deviations.
fn envelope(posteriors: &[GpPosterior]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in posteriors {
        for (i, m) in p.mean.iter().enumerate() {
            let w = 3.0 * p.variance(i).max(0.0).sqrt();
            for c in 0..2 {
                lo[c] = lo[c].min(m[c] - w);
                hi[c] = hi[c].max(m[c] + w);
            }
        }
    }
    for c in 0..2 {
        if hi[c] - lo[c] < 1.0 {
            let m = 0.5 * (hi[c] + lo[c]);
            lo[c] = m - 0.5;
            hi[c] = m + 0.5;
        }
    }
    (lo, hi)
}

/// Build the inference state and run a single chain.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    data: &DataBundle,
    types: &[ActivityType],
    overlap: &OverlapMatrix,
    params: &ModelParams,
    hyper: &GpHyperParams,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<ChainSamples> {
    Inference::new(
        data,
        types,
        overlap,
        params,
        hyper,
        sampler.clone(),
        Execution::Sequential,
    )?
    .run(seed)
}
