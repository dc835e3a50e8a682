//! Incrementally maintained log-score of the chain state.

use std::ops::Range;

use crate::data::FaceDetection;
use crate::error::{Error, Result};
use crate::gp::TrajectoryEnsemble;
use crate::ids::ActorId;
use crate::model::factors::{
    assign_frame, face_counts, face_term, frame_loglik, presence_logfactor,
};
use crate::model::{span_radius_logprior, ActivityInstance, Configuration, ModelContext};
use crate::stats::log_mean_exp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct InstTerms {
    pub presence: f64,
    pub span_radius: f64,
    pub face: f64,
}

impl InstTerms {
    fn sum(&self) -> f64 {
        self.presence + self.span_radius + self.face
    }
}

/// Structural edit: drop the listed instances, then append `add`.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Change {
    pub remove: Vec<usize>,
    pub add: Vec<ActivityInstance>,
}

pub(crate) struct Undo {
    removed: Vec<(usize, ActivityInstance, InstTerms)>,
    n_added: usize,
}

fn time_range(ts: &[f64], range: &Range<usize>, s: f64, e: f64) -> Range<usize> {
    let slice = &ts[range.clone()];
    let lo = slice.partition_point(|&t| t < s);
    let hi = slice.partition_point(|&t| t <= e);
    range.start + lo..range.start + hi.max(lo)
}

pub(crate) struct ScoreState<'c> {
    ctx: &'c ModelContext<'c>,
    pub ens: TrajectoryEnsemble,
    pub config: Configuration,
    terms: Vec<InstTerms>,
    n_draws: usize,

    obs_t: Vec<f64>,
    obs_range: Vec<Range<usize>>,
    /// `o * n_draws + d`.
    obs_pos: Vec<[f64; 2]>,
    cover: Vec<u32>,
    uncovered: Vec<u64>,

    frame_t: Vec<f64>,
    frame_range: Vec<Range<usize>>,
    frame_bg: Vec<f64>,
    /// `[type][frame]`.
    frame_type_ll: Vec<Vec<f64>>,
    frame_ll: Vec<f64>,
    scene_total: f64,

    faces: Vec<&'c FaceDetection>,
    face_t: Vec<f64>,
    face_range: Vec<Range<usize>>,
}

fn ranges_by_actor(actors: &[ActorId], n_actors: usize) -> Vec<Range<usize>> {
    let mut out = vec![0..0; n_actors];
    let mut i = 0;
    while i < actors.len() {
        let a = actors[i];
        let lo = i;
        while i < actors.len() && actors[i] == a {
            i += 1;
        }
        if let Some(r) = out.get_mut(a.index()) {
            *r = lo..i;
        }
    }
    out
}

impl<'c> ScoreState<'c> {
    pub fn new(
        ctx: &'c ModelContext<'c>,
        ens: TrajectoryEnsemble,
        config: Configuration,
    ) -> Result<Self> {
        let data = ctx.data;
        let n_actors = data.n_actors();
        let n_draws = ens.n_draws();

        let mut gps: Vec<_> = data.gps.iter().collect();
        gps.sort_by(|a, b| (a.actor, a.t).partial_cmp(&(b.actor, b.t)).unwrap());
        let obs_actor: Vec<ActorId> = gps.iter().map(|o| o.actor).collect();
        let obs_t: Vec<f64> = gps.iter().map(|o| o.t).collect();
        let mut obs_pos = Vec::with_capacity(gps.len() * n_draws);
        for o in &gps {
            let b = ens.block_of(o.actor).ok_or_else(|| {
                Error::contract(format!("actor {} has no trajectory draws", o.actor.0))
            })?;
            for d in 0..n_draws {
                obs_pos.push(ens.position(d, b, o.t));
            }
        }

        let mut frames: Vec<_> = data.frames.iter().collect();
        frames.sort_by(|a, b| (a.actor, a.t).partial_cmp(&(b.actor, b.t)).unwrap());
        let frame_actor: Vec<ActorId> = frames.iter().map(|f| f.actor).collect();
        let frame_t: Vec<f64> = frames.iter().map(|f| f.t).collect();
        let frame_bg: Vec<f64> = frames
            .iter()
            .map(|f| frame_loglik(&f.features, &ctx.background))
            .collect();
        let frame_type_ll = ctx
            .types
            .iter()
            .map(|ty| {
                frames
                    .iter()
                    .map(|f| frame_loglik(&f.features, &ty.feature_prior))
                    .collect()
            })
            .collect();
        let scene_total = frame_bg.iter().sum();

        let mut faces: Vec<&FaceDetection> = data.faces.iter().collect();
        faces.sort_by(|a, b| (a.observer, a.t).partial_cmp(&(b.observer, b.t)).unwrap());
        let face_observer: Vec<ActorId> = faces.iter().map(|f| f.observer).collect();
        let face_t = faces.iter().map(|f| f.t).collect();

        let mut state = Self {
            ctx,
            n_draws,
            obs_range: ranges_by_actor(&obs_actor, n_actors),
            uncovered: vec![obs_t.len() as u64; n_draws],
            cover: vec![0; obs_pos.len()],
            obs_t,
            obs_pos,
            frame_range: ranges_by_actor(&frame_actor, n_actors),
            frame_ll: frame_bg.clone(),
            frame_t,
            frame_bg,
            frame_type_ll,
            scene_total,
            face_range: ranges_by_actor(&face_observer, n_actors),
            faces,
            face_t,
            ens,
            config: Configuration::empty(),
            terms: Vec::new(),
        };
        state.apply(&Change {
            remove: Vec::new(),
            add: config.instances,
        })?;
        Ok(state)
    }

    pub fn total(&self) -> f64 {
        let c_u = self.ctx.params.c_u;
        let per: Vec<f64> = self.uncovered.iter().map(|&u| -c_u * u as f64).collect();
        log_mean_exp(&per) + self.terms.iter().map(InstTerms::sum).sum::<f64>() + self.scene_total
    }

    fn compute_terms(&self, inst: &ActivityInstance) -> Result<InstTerms> {
        let ty = self
            .ctx
            .types
            .get(inst.type_id.index())
            .ok_or_else(|| Error::contract("instance references an unknown type"))?;
        let presence = presence_logfactor(inst, &self.ens, ty.excursion_rate_per_s)?;
        let span_radius = span_radius_logprior(inst, ty)?;
        let mut relevant = Vec::new();
        for p in &inst.participants {
            if let Some(r) = self.face_range.get(p.index()) {
                let r = time_range(&self.face_t, r, inst.start_s, inst.end_s());
                relevant.extend(self.faces[r].iter().copied());
            }
        }
        let face = if self.faces.is_empty() {
            0.0
        } else {
            face_term(inst, &face_counts(inst, relevant, self.ctx.n_actors()), ty)
        };
        Ok(InstTerms {
            presence,
            span_radius,
            face,
        })
    }

    fn update_cover(&mut self, inst: &ActivityInstance, add: bool) {
        let r2 = inst.radius_m * inst.radius_m;
        let nd = self.n_draws;
        for p in &inst.participants {
            let Some(r) = self.obs_range.get(p.index()) else {
                continue;
            };
            let r = time_range(&self.obs_t, r, inst.start_s, inst.end_s());
            for o in r {
                for d in 0..nd {
                    let x = self.obs_pos[o * nd + d];
                    let dx = x[0] - inst.center[0];
                    let dy = x[1] - inst.center[1];
                    if dx * dx + dy * dy > r2 {
                        continue;
                    }
                    let c = &mut self.cover[o * nd + d];
                    if add {
                        *c += 1;
                        if *c == 1 {
                            self.uncovered[d] -= 1;
                        }
                    } else {
                        *c -= 1;
                        if *c == 0 {
                            self.uncovered[d] += 1;
                        }
                    }
                }
            }
        }
    }

    fn update_scene(&mut self, regions: &[(ActorId, f64, f64)]) {
        for &(p, s, e) in regions {
            let Some(r) = self.frame_range.get(p.index()) else {
                continue;
            };
            let r = time_range(&self.frame_t, r, s, e);
            for f in r {
                let ll = match assign_frame(&self.config, p, self.frame_t[f]) {
                    Some(k) => self.frame_type_ll[self.config.instances[k].type_id.index()][f],
                    None => self.frame_bg[f],
                };
                self.scene_total += ll - self.frame_ll[f];
                self.frame_ll[f] = ll;
            }
        }
    }

    fn regions(insts: &[&ActivityInstance]) -> Vec<(ActorId, f64, f64)> {
        insts
            .iter()
            .flat_map(|i| {
                i.participants
                    .iter()
                    .map(move |&p| (p, i.start_s, i.end_s()))
            })
            .collect()
    }

    pub fn apply(&mut self, change: &Change) -> Result<Undo> {
        let mut terms = Vec::with_capacity(change.add.len());
        for inst in &change.add {
            terms.push(self.compute_terms(inst)?);
        }
        let mut idx = change.remove.clone();
        idx.sort_unstable();
        idx.dedup();
        let mut removed = Vec::with_capacity(idx.len());
        for &k in idx.iter().rev() {
            let inst = self.config.instances.remove(k);
            let t = self.terms.remove(k);
            self.update_cover(&inst, false);
            removed.push((k, inst, t));
        }
        removed.reverse();
        for (inst, t) in change.add.iter().zip(terms) {
            self.update_cover(inst, true);
            self.config.instances.push(inst.clone());
            self.terms.push(t);
        }
        let touched: Vec<&ActivityInstance> = removed
            .iter()
            .map(|(_, i, _)| i)
            .chain(change.add.iter())
            .collect();
        let regions = Self::regions(&touched);
        self.update_scene(&regions);
        Ok(Undo {
            removed,
            n_added: change.add.len(),
        })
    }

    pub fn undo(&mut self, undo: Undo) {
        let mut touched = Vec::new();
        for _ in 0..undo.n_added {
            let inst = self.config.instances.pop().expect("added instance");
            self.terms.pop();
            self.update_cover(&inst, false);
            touched.push(inst);
        }
        for (k, inst, t) in undo.removed {
            self.update_cover(&inst, true);
            self.config.instances.insert(k, inst.clone());
            self.terms.insert(k, t);
            touched.push(inst);
        }
        let refs: Vec<&ActivityInstance> = touched.iter().collect();
        let regions = Self::regions(&refs);
        self.update_scene(&regions);
    }
}
