//! Proposal distributions. Every proposal carries the log of
//! `q(old | new) / q(new | old)`, including the move-selection weights, so
//! the acceptance ratio is just the score difference plus this term.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use super::candidates::Candidate;
use super::state::Change;
use super::{LatticeSpec, MoveKind, SamplerConfig};
use crate::gp::TimeGrid;
use crate::ids::{ActorId, TypeIdx};
use crate::model::{ActivityInstance, ActivityType, Configuration};
use crate::stats::{ln_binomial, log_add_exp, normal2_ln_pdf, normal_ln_pdf};

/// A proposed edit of the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub kind: MoveKind,
    /// Indices of instances removed from the current configuration.
    pub remove: Vec<usize>,
    /// Instances appended after the removal.
    pub add: Vec<ActivityInstance>,
    /// `ln q(old | new) - ln q(new | old)`.
    pub log_q_ratio: f64,
}

impl Proposal {
    pub fn apply_to(&self, config: &Configuration) -> Configuration {
        let mut out: Vec<ActivityInstance> = config
            .instances
            .iter()
            .enumerate()
            .filter(|(k, _)| !self.remove.contains(k))
            .map(|(_, i)| i.clone())
            .collect();
        out.extend(self.add.iter().cloned());
        Configuration { instances: out }
    }

    pub(crate) fn change(&self) -> Change {
        Change {
            remove: self.remove.clone(),
            add: self.add.clone(),
        }
    }
}

/// Merge two instances into the convex hull of their spans, keeping the
/// earlier one's type, participants, center and radius. Only defined when
/// type and participants agree and the spans do not overlap.
pub fn merge_instances(a: &ActivityInstance, b: &ActivityInstance) -> Option<ActivityInstance> {
    let (first, second) = if a.start_s <= b.start_s {
        (a, b)
    } else {
        (b, a)
    };
    if first.type_id != second.type_id || first.participants != second.participants {
        return None;
    }
    if first.end_s() > second.start_s {
        return None;
    }
    let mut m = first.clone();
    m.span_s = second.end_s() - first.start_s;
    Some(m)
}

/// Read-only inputs of the proposal distributions.
pub(crate) struct MoveContext<'a> {
    pub cfg: &'a SamplerConfig,
    pub types: &'a [ActivityType],
    /// Actors eligible as participants.
    pub actors: &'a [ActorId],
    /// Posterior-mean path of each eligible actor, same order.
    pub means: &'a [Vec<[f64; 2]>],
    pub grid: TimeGrid,
    pub support: (f64, f64),
    pub bbox: ([f64; 2], [f64; 2]),
    pub candidates: &'a [Candidate],
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

impl MoveContext<'_> {
    fn n_types(&self) -> usize {
        self.types.len()
    }

    fn lattice(&self) -> Option<&LatticeSpec> {
        self.cfg.lattice.as_ref()
    }

    fn weight(&self, k: MoveKind) -> f64 {
        self.cfg.weights.get(k)
    }

    fn data_weight(&self) -> f64 {
        if self.candidates.is_empty() {
            0.0
        } else {
            self.cfg.data_birth_weight
        }
    }

    fn bbox_area(&self) -> f64 {
        let (lo, hi) = self.bbox;
        (hi[0] - lo[0]) * (hi[1] - lo[1])
    }

    fn in_bbox(&self, c: [f64; 2]) -> bool {
        let (lo, hi) = self.bbox;
        c[0] >= lo[0] && c[0] <= hi[0] && c[1] >= lo[1] && c[1] <= hi[1]
    }

    fn eligible(&self, p: &[ActorId]) -> bool {
        p.iter().all(|a| self.actors.contains(a))
    }

    /// Prior-driven participant-set density: count from the clamped
    /// rounded log-normal, identities uniform.
    fn ln_q_participants(&self, p: &[ActorId]) -> f64 {
        let n = self.actors.len();
        let k = p.len();
        if k > n || !self.eligible(p) {
            return f64::NEG_INFINITY;
        }
        self.cfg.participants_prior.clamped_count_pmf(k).ln() - ln_binomial(n, k)
    }

    fn sample_participants<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<ActorId>> {
        let k = self.cfg.participants_prior.sample_clamped_count(rng);
        let n = self.actors.len();
        if k > n {
            return None;
        }
        let mut p: Vec<ActorId> = sample_indices(rng, n, k)
            .into_iter()
            .map(|i| self.actors[i])
            .collect();
        p.sort();
        Some(p)
    }

    fn ln_q_birth_prior(&self, inst: &ActivityInstance) -> f64 {
        let (t0, t1) = self.support;
        if inst.start_s < t0 || inst.start_s > t1 || !self.in_bbox(inst.center) {
            return f64::NEG_INFINITY;
        }
        let ty = &self.types[inst.type_id.index()];
        -(self.n_types() as f64).ln() + self.ln_q_participants(&inst.participants) - (t1 - t0).ln()
            + ty.span_prior().ln_pdf(inst.span_s)
            - self.bbox_area().ln()
            + ty.radius_prior().ln_pdf(inst.radius_m)
    }

    fn ln_q_birth_data(&self, inst: &ActivityInstance) -> f64 {
        if self.candidates.is_empty() {
            return f64::NEG_INFINITY;
        }
        let ty = &self.types[inst.type_id.index()];
        let s = self.cfg.candidate_center_std_m;
        let mut mix = f64::NEG_INFINITY;
        for c in self
            .candidates
            .iter()
            .filter(|c| c.participants == inst.participants)
        {
            let mu = c.mid() - 0.5 * inst.span_s;
            let v = normal_ln_pdf(inst.start_s, mu, c.start_std_s * c.start_std_s)
                + normal2_ln_pdf(inst.center, c.center, s);
            mix = log_add_exp(mix, v);
        }
        if mix == f64::NEG_INFINITY {
            return mix;
        }
        -(self.n_types() as f64).ln()
            + ty.span_prior().ln_pdf(inst.span_s)
            + ty.radius_prior().ln_pdf(inst.radius_m)
            + mix
            - (self.candidates.len() as f64).ln()
    }

    /// Log-density of the birth proposal at `inst`.
    pub fn ln_q_birth(&self, inst: &ActivityInstance) -> f64 {
        if let Some(l) = self.lattice() {
            return if l.contains(inst) {
                -(l.size() as f64).ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        let rho = self.data_weight();
        let mut v = f64::NEG_INFINITY;
        if rho < 1.0 {
            v = log_add_exp(v, (1.0 - rho).ln() + self.ln_q_birth_prior(inst));
        }
        if rho > 0.0 {
            v = log_add_exp(v, rho.ln() + self.ln_q_birth_data(inst));
        }
        v
    }

    fn sample_birth<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<ActivityInstance> {
        if let Some(l) = self.lattice() {
            let all = l.instances();
            return Some(all[rng.random_range(0..all.len())].clone());
        }
        let type_id = TypeIdx(rng.random_range(0..self.n_types()) as u32);
        let ty = &self.types[type_id.index()];
        if rng.random::<f64>() < self.data_weight() {
            let c = &self.candidates[rng.random_range(0..self.candidates.len())];
            let span = ty.span_prior().sample(rng);
            let start = c.mid() - 0.5 * span + c.start_std_s * gauss(rng);
            let s = self.cfg.candidate_center_std_m;
            let center = [c.center[0] + s * gauss(rng), c.center[1] + s * gauss(rng)];
            let radius = ty.radius_prior().sample(rng);
            Some(ActivityInstance::new(
                type_id,
                center,
                radius,
                start,
                span,
                c.participants.clone(),
            ))
        } else {
            let participants = self.sample_participants(rng)?;
            let (t0, t1) = self.support;
            let start = rng.random_range(t0..=t1);
            let span = ty.span_prior().sample(rng);
            let (lo, hi) = self.bbox;
            let center = [
                rng.random_range(lo[0]..=hi[0]),
                rng.random_range(lo[1]..=hi[1]),
            ];
            let radius = ty.radius_prior().sample(rng);
            Some(ActivityInstance::new(
                type_id,
                center,
                radius,
                start,
                span,
                participants,
            ))
        }
    }

    /// Gaussian-mixture components for center proposals: participants'
    /// posterior-mean positions at in-span grid points.
    fn center_components(&self, inst: &ActivityInstance) -> Vec<[f64; 2]> {
        let mut idx: Vec<usize> = self
            .grid
            .indices_within(inst.start_s, inst.end_s())
            .collect();
        if idx.is_empty() {
            idx.push(self.grid.locate(0.5 * (inst.start_s + inst.end_s())).0);
        }
        let mut out = Vec::new();
        for p in &inst.participants {
            if let Some(b) = self.actors.iter().position(|a| a == p) {
                out.extend(idx.iter().map(|&i| self.means[b][i]));
            }
        }
        out
    }

    fn ln_q_center(&self, comps: &[[f64; 2]], c: [f64; 2]) -> f64 {
        let s = self.cfg.center_std_m;
        let mut v = f64::NEG_INFINITY;
        for m in comps {
            v = log_add_exp(v, normal2_ln_pdf(c, *m, s));
        }
        v - (comps.len() as f64).ln()
    }

    fn ln_q_participants_move(&self, from: &[ActorId], to: &[ActorId]) -> f64 {
        let w = self.cfg.participants_local_weight;
        let mut v = f64::NEG_INFINITY;
        if w < 1.0 {
            v = log_add_exp(v, (1.0 - w).ln() + self.ln_q_participants(to));
        }
        let sym_diff = from.iter().filter(|a| !to.contains(a)).count()
            + to.iter().filter(|a| !from.contains(a)).count();
        if w > 0.0 && sym_diff == 1 {
            v = log_add_exp(v, w.ln() - (self.actors.len() as f64).ln());
        }
        v
    }

    fn split_aux_ln_density(
        &self,
        parent: &ActivityInstance,
        u: f64,
        delta: [f64; 2],
        eps: f64,
    ) -> f64 {
        let e = parent.end_s();
        -parent.span_s.ln() - (e - u).ln()
            + normal2_ln_pdf(delta, [0.0, 0.0], self.cfg.split_center_std_m)
            + normal_ln_pdf(eps, 0.0, self.cfg.split_radius_std_m.powi(2))
    }
}

fn replace(kind: MoveKind, k: usize, inst: ActivityInstance, log_q_ratio: f64) -> Option<Proposal> {
    Some(Proposal {
        kind,
        remove: vec![k],
        add: vec![inst],
        log_q_ratio,
    })
}

fn pick_from<R: Rng + ?Sized, T: Copy>(rng: &mut R, v: &[T]) -> T {
    v[rng.random_range(0..v.len())]
}

/// Draw a proposal of the given kind, or `None` when the move is
/// structurally impossible (auto-reject).
pub(crate) fn propose<R: Rng + ?Sized>(
    kind: MoveKind,
    config: &Configuration,
    mc: &MoveContext,
    rng: &mut R,
) -> Option<Proposal> {
    draw(kind, config, mc, rng).filter(|p| p.log_q_ratio.is_finite())
}

fn draw<R: Rng + ?Sized>(
    kind: MoveKind,
    config: &Configuration,
    mc: &MoveContext,
    rng: &mut R,
) -> Option<Proposal> {
    let n = config.len();
    let lattice = mc.lattice();
    match kind {
        MoveKind::Birth => {
            if lattice.is_some_and(|l| n >= l.max_instances) {
                return None;
            }
            let inst = mc.sample_birth(rng)?;
            let q = mc.ln_q_birth(&inst);
            if !q.is_finite() {
                return None;
            }
            let ratio = (mc.weight(MoveKind::Death) / (n + 1) as f64).ln()
                - mc.weight(MoveKind::Birth).ln()
                - q;
            Some(Proposal {
                kind,
                remove: vec![],
                add: vec![inst],
                log_q_ratio: ratio,
            })
        }
        MoveKind::Death => {
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let q = mc.ln_q_birth(&config.instances[k]);
            let ratio =
                mc.weight(MoveKind::Birth).ln() + q - (mc.weight(MoveKind::Death) / n as f64).ln();
            Some(Proposal {
                kind,
                remove: vec![k],
                add: vec![],
                log_q_ratio: ratio,
            })
        }
        MoveKind::Split => {
            if n == 0 || lattice.is_some() {
                return None;
            }
            let k = rng.random_range(0..n);
            let parent = &config.instances[k];
            let (s, e) = (parent.start_s, parent.end_s());
            let u = rng.random_range(s..e);
            let g = rng.random_range(0.0..(e - u));
            let delta = [
                mc.cfg.split_center_std_m * gauss(rng),
                mc.cfg.split_center_std_m * gauss(rng),
            ];
            let eps = mc.cfg.split_radius_std_m * gauss(rng);
            let r2 = parent.radius_m + eps;
            if !(r2 > 0.0) || !(u - s > 0.0) || !(e - u - g > 0.0) {
                return None;
            }
            let mut a = parent.clone();
            a.span_s = u - s;
            let mut b = parent.clone();
            b.start_s = u + g;
            b.span_s = e - u - g;
            b.center = [parent.center[0] + delta[0], parent.center[1] + delta[1]];
            b.radius_m = r2;
            let fwd = mc.weight(MoveKind::Split).ln() - (n as f64).ln()
                + mc.split_aux_ln_density(parent, u, delta, eps);
            let rev = mc.weight(MoveKind::Merge).ln() - ln_binomial(n + 1, 2);
            Some(Proposal {
                kind,
                remove: vec![k],
                add: vec![a, b],
                log_q_ratio: rev - fwd,
            })
        }
        MoveKind::Merge => {
            if n < 2 || lattice.is_some() {
                return None;
            }
            let pair = sample_indices(rng, n, 2).into_vec();
            let (i, j) = (pair[0], pair[1]);
            let (x, y) = (&config.instances[i], &config.instances[j]);
            let merged = merge_instances(x, y)?;
            let (first, second) = if x.start_s <= y.start_s {
                (x, y)
            } else {
                (y, x)
            };
            let u = first.end_s();
            let delta = [
                second.center[0] - first.center[0],
                second.center[1] - first.center[1],
            ];
            let eps = second.radius_m - first.radius_m;
            let fwd = mc.weight(MoveKind::Merge).ln() - ln_binomial(n, 2);
            let rev = mc.weight(MoveKind::Split).ln() - ((n - 1) as f64).ln()
                + mc.split_aux_ln_density(&merged, u, delta, eps);
            Some(Proposal {
                kind,
                remove: vec![i, j],
                add: vec![merged],
                log_q_ratio: rev - fwd,
            })
        }
        MoveKind::Type => {
            if n == 0 || lattice.is_some() {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            inst.type_id = TypeIdx(rng.random_range(0..mc.n_types()) as u32);
            replace(kind, k, inst, 0.0)
        }
        MoveKind::Center => {
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            if let Some(l) = lattice {
                inst.center = pick_from(rng, &l.centers);
                return replace(kind, k, inst, 0.0);
            }
            let comps = mc.center_components(&inst);
            if comps.is_empty() {
                return None;
            }
            let m = pick_from(rng, &comps);
            let s = mc.cfg.center_std_m;
            let old = inst.center;
            inst.center = [m[0] + s * gauss(rng), m[1] + s * gauss(rng)];
            let ratio = mc.ln_q_center(&comps, old) - mc.ln_q_center(&comps, inst.center);
            replace(kind, k, inst, ratio)
        }
        MoveKind::Radius => {
            if n == 0 || lattice.is_some() {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            let q = mc.cfg.radius_proposal;
            let old = inst.radius_m;
            inst.radius_m = q.sample(rng);
            let ratio = q.ln_pdf(old) - q.ln_pdf(inst.radius_m);
            replace(kind, k, inst, ratio)
        }
        MoveKind::Span => {
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            if let Some(l) = lattice {
                inst.span_s = pick_from(rng, &l.spans_s);
                return replace(kind, k, inst, 0.0);
            }
            let q = mc.cfg.span_proposal;
            let old = inst.span_s;
            inst.span_s = q.sample(rng);
            let ratio = q.ln_pdf(old) - q.ln_pdf(inst.span_s);
            replace(kind, k, inst, ratio)
        }
        MoveKind::StartTime => {
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            if let Some(l) = lattice {
                inst.start_s = pick_from(rng, &l.starts_s);
                return replace(kind, k, inst, 0.0);
            }
            // Symmetric mixture of a local random walk and a uniform draw
            // over the support.
            if rng.random::<f64>() < mc.cfg.start_local_weight {
                inst.start_s += mc.cfg.start_local_std_s * gauss(rng);
            } else {
                inst.start_s = rng.random_range(mc.support.0..=mc.support.1);
            }
            replace(kind, k, inst, 0.0)
        }
        MoveKind::Participants => {
            if n == 0 || lattice.is_some() {
                return None;
            }
            let k = rng.random_range(0..n);
            let mut inst = config.instances[k].clone();
            let old = inst.participants.clone();
            let new = if rng.random::<f64>() < mc.cfg.participants_local_weight {
                let a = pick_from(rng, mc.actors);
                let mut p = old.clone();
                match p.iter().position(|&x| x == a) {
                    Some(i) => {
                        p.remove(i);
                    }
                    None => p.push(a),
                }
                p.sort();
                p
            } else {
                mc.sample_participants(rng)?
            };
            if new.len() < 2 {
                return None;
            }
            let ratio =
                mc.ln_q_participants_move(&new, &old) - mc.ln_q_participants_move(&old, &new);
            inst.participants = new;
            replace(kind, k, inst, ratio)
        }
    }
}

/// Metropolis-Hastings decision for a log acceptance ratio. A uniform is
/// always consumed so the random stream does not depend on the outcome.
pub fn mh_accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> Option<bool> {
    let u: f64 = rng.random();
    if log_alpha.is_nan() {
        return None;
    }
    Some(log_alpha >= 0.0 || u.ln() < log_alpha)
}
