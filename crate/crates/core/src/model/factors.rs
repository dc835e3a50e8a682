use super::{
    ActivityInstance, ActivityType, Configuration, FeaturePrior, ModelParams, OverlapMatrix,
};
use crate::data::{DataBundle, FaceDetection, FrameRecord};
use crate::error::{Error, Result};
use crate::gp::{GpsObservation, TimeGrid, TrajectoryEnsemble};
use crate::ids::ActorId;
use crate::stats::{log_mean_exp, normal_ln_pdf, poisson_ln_pmf};

/// Slack allowed when checking that a span lies on the grid.
const GRID_EPS: f64 = 1e-9;

/// Everything the factors need besides the configuration and the ensemble.
#[derive(Debug, Clone)]
pub struct ModelContext<'a> {
    pub data: &'a DataBundle,
    pub types: &'a [super::ActivityType],
    pub overlap: &'a OverlapMatrix,
    pub params: &'a ModelParams,
    /// Resolved background prior (configured or fitted).
    pub background: Vec<FeaturePrior>,
}

impl<'a> ModelContext<'a> {
    pub fn new(
        data: &'a DataBundle,
        types: &'a [ActivityType],
        overlap: &'a OverlapMatrix,
        params: &'a ModelParams,
    ) -> Result<Self> {
        data.validate()?;
        if types.is_empty() {
            return Err(Error::config("at least one activity type is required"));
        }
        for t in types {
            t.validate()?;
        }
        overlap.validate(types.len())?;
        params.validate()?;
        let dim = data.feature_dim().unwrap_or(0);
        if dim > 0 {
            for t in types {
                if t.feature_prior.len() != dim {
                    return Err(Error::config(format!(
                        "type '{}' has {} feature priors, frames have {dim} features",
                        t.label,
                        t.feature_prior.len()
                    )));
                }
            }
        }
        let background = match &params.background_feature_prior {
            Some(bg) => {
                if dim > 0 && bg.len() != dim {
                    return Err(Error::config(
                        "background prior dimension does not match frames",
                    ));
                }
                bg.clone()
            }
            None => fit_background(&data.frames),
        };
        Ok(Self {
            data,
            types,
            overlap,
            params,
            background,
        })
    }

    pub fn n_actors(&self) -> usize {
        self.data.n_actors()
    }
}

/// Per-dimension mean and variance over all frames (variance floored).
pub fn fit_background(frames: &[FrameRecord]) -> Vec<FeaturePrior> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let d = first.features.len();
    let n = frames.len() as f64;
    (0..d)
        .map(|k| {
            let mean = frames.iter().map(|f| f.features[k]).sum::<f64>() / n;
            let var = frames
                .iter()
                .map(|f| (f.features[k] - mean).powi(2))
                .sum::<f64>()
                / n;
            FeaturePrior {
                mean,
                var: var.max(1e-6),
            }
        })
        .collect()
}

fn block(ens: &TrajectoryEnsemble, a: ActorId) -> Result<usize> {
    ens.block_of(a)
        .ok_or_else(|| Error::contract(format!("actor {} has no trajectory draws", a.0)))
}

/// `-c_u` times the number of observations covered by no instance, using
/// draw `draw` of the ensemble for positions.
pub fn coverage_logfactor(
    config: &Configuration,
    gps: &[GpsObservation],
    ens: &TrajectoryEnsemble,
    draw: usize,
    c_u: f64,
) -> Result<f64> {
    let mut uncovered = 0usize;
    for o in gps {
        let b = block(ens, o.actor)?;
        let mut covered = false;
        let mut pos = None;
        for inst in &config.instances {
            if !inst.covers(o.actor, o.t) {
                continue;
            }
            let x = *pos.get_or_insert_with(|| ens.position(draw, b, o.t));
            if inst.in_disc(x) {
                covered = true;
                break;
            }
        }
        if !covered {
            uncovered += 1;
        }
    }
    Ok(-c_u * uncovered as f64)
}

/// Coverage factor marginalised over the ensemble (log-mean-exp).
pub fn coverage_marginal(
    config: &Configuration,
    gps: &[GpsObservation],
    ens: &TrajectoryEnsemble,
    c_u: f64,
) -> Result<f64> {
    let per: Result<Vec<f64>> = (0..ens.n_draws())
        .map(|d| coverage_logfactor(config, gps, ens, d, c_u))
        .collect();
    Ok(log_mean_exp(&per?))
}

/// Quadrature weights for integrating over `[s, e]` on the grid: every grid
/// point carries the length of its nearest-point cell clipped to the span,
/// so the weights sum to `e - s`.
pub fn presence_weights(grid: &TimeGrid, s: f64, e: f64) -> Result<Vec<(usize, f64)>> {
    let tol = GRID_EPS * (1.0 + grid.t_end.abs());
    if s < grid.t_start - tol || e > grid.t_end + tol || !(e >= s) {
        return Err(Error::contract(format!(
            "span [{s}, {e}] is not inside the grid [{}, {}]",
            grid.t_start, grid.t_end
        )));
    }
    let h = grid.spacing();
    let n = grid.n_points;
    let lo = (((s - grid.t_start) / h).round().max(0.0) as usize).min(n - 1);
    let hi = (((e - grid.t_start) / h).round().max(0.0) as usize).min(n - 1);
    let mut out = Vec::with_capacity(hi - lo + 1);
    for i in lo..=hi {
        let t = grid.point(i);
        let c0 = if i == 0 { grid.t_start } else { t - 0.5 * h };
        let c1 = if i + 1 == n { grid.t_end } else { t + 0.5 * h };
        let w = c1.min(e) - c0.max(s);
        if w > 0.0 {
            out.push((i, w));
        }
    }
    Ok(out)
}

pub(crate) fn presence_draw(
    inst: &ActivityInstance,
    ens: &TrajectoryEnsemble,
    blocks: &[usize],
    weights: &[(usize, f64)],
    d: usize,
) -> f64 {
    let r2 = inst.radius_m * inst.radius_m;
    let mut outside = 0.0;
    for &b in blocks {
        let path = ens.path(d, b);
        for &(i, w) in weights {
            let p = path[i];
            let dx = p[0] - inst.center[0];
            let dy = p[1] - inst.center[1];
            if dx * dx + dy * dy > r2 {
                outside += w;
            }
        }
    }
    outside
}

/// `-rate` times the participants' total time outside the disc during the
/// span, marginalised over the ensemble (log-mean-exp).
pub fn presence_logfactor(
    inst: &ActivityInstance,
    ens: &TrajectoryEnsemble,
    excursion_rate: f64,
) -> Result<f64> {
    let weights = presence_weights(&ens.grid, inst.start_s, inst.end_s())?;
    let blocks: Result<Vec<usize>> = inst.participants.iter().map(|&a| block(ens, a)).collect();
    let blocks = blocks?;
    let per: Vec<f64> = (0..ens.n_draws())
        .map(|d| -excursion_rate * presence_draw(inst, ens, &blocks, &weights, d))
        .collect();
    Ok(log_mean_exp(&per))
}

/// Log-normal span and radius densities plus the participant-count pmf.
pub fn span_radius_logprior(inst: &ActivityInstance, ty: &ActivityType) -> Result<f64> {
    if !(inst.span_s > 0.0) || !(inst.radius_m > 0.0) {
        return Err(Error::contract("span and radius must be > 0"));
    }
    let count = ty
        .participants_prior()
        .truncated_count_pmf(inst.participants.len());
    Ok(ty.span_prior().ln_pdf(inst.span_s) + ty.radius_prior().ln_pdf(inst.radius_m) + count.ln())
}

/// Instance a frame of `actor` at `t` is attributed to: among covering
/// instances, the one in which `t` lies deepest (largest distance to the
/// nearer span end); ties go to the earliest start, then lowest index.
pub(crate) fn assign_frame(config: &Configuration, actor: ActorId, t: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, inst) in config.instances.iter().enumerate() {
        if !inst.covers(actor, t) {
            continue;
        }
        let depth = (t - inst.start_s).min(inst.end_s() - t);
        best = match best {
            None => Some((k, depth)),
            Some((j, dj)) => {
                let other = &config.instances[j];
                if depth > dj || (depth == dj && inst.start_s < other.start_s) {
                    Some((k, depth))
                } else {
                    Some((j, dj))
                }
            }
        };
    }
    best.map(|(k, _)| k)
}

pub(crate) fn frame_loglik(features: &[f64], prior: &[FeaturePrior]) -> f64 {
    features
        .iter()
        .zip(prior)
        .map(|(&x, p)| normal_ln_pdf(x, p.mean, p.var))
        .sum()
}

/// Separable Normal log-likelihood of all frames under their attributed
/// type, or the background prior when uncovered.
pub fn scene_logfactor(
    frames: &[FrameRecord],
    config: &Configuration,
    types: &[ActivityType],
    background: &[FeaturePrior],
) -> Result<f64> {
    let mut total = 0.0;
    for f in frames {
        let prior = match assign_frame(config, f.actor, f.t) {
            Some(k) => {
                let ty = types
                    .get(config.instances[k].type_id.index())
                    .ok_or_else(|| Error::contract("instance references an unknown type"))?;
                &ty.feature_prior
            }
            None => background,
        };
        if prior.len() != f.features.len() {
            return Err(Error::contract(format!(
                "frame has {} features, prior has {}",
                f.features.len(),
                prior.len()
            )));
        }
        total += frame_loglik(&f.features, prior);
    }
    Ok(total)
}

/// Counts of detections of every registry actor made from participants'
/// streams inside the span.
pub(crate) fn face_counts<'a>(
    inst: &ActivityInstance,
    faces: impl IntoIterator<Item = &'a FaceDetection>,
    n_actors: usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; n_actors];
    for d in faces {
        if let Some(p) = d.detected {
            if inst.covers(d.observer, d.t) {
                if let Some(c) = counts.get_mut(p.index()) {
                    *c += 1;
                }
            }
        }
    }
    counts
}

pub(crate) fn face_term(inst: &ActivityInstance, counts: &[u64], ty: &ActivityType) -> f64 {
    let minutes = inst.span_s / 60.0;
    counts
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let rate = if inst.has(ActorId(p as u32)) {
                ty.face_rate_participant_per_min
            } else {
                ty.face_rate_nonparticipant_per_min
            };
            poisson_ln_pmf(k, rate * minutes)
        })
        .sum()
}

/// Poisson face-count log-likelihood summed over instances and registry
/// actors. Zero when there is no face stream at all.
pub fn face_logfactor(
    faces: &[FaceDetection],
    config: &Configuration,
    types: &[ActivityType],
    n_actors: usize,
) -> Result<f64> {
    let mut total = 0.0;
    if faces.is_empty() {
        return Ok(total);
    }
    for inst in &config.instances {
        let ty = types
            .get(inst.type_id.index())
            .ok_or_else(|| Error::contract("instance references an unknown type"))?;
        total += face_term(inst, &face_counts(inst, faces, n_actors), ty);
    }
    Ok(total)
}

/// Every factor of a configuration, kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorBreakdown {
    pub coverage: f64,
    pub presence: Vec<f64>,
    pub span_radius: Vec<f64>,
    pub scene: f64,
    pub face: f64,
    pub overlap_ok: bool,
}

impl FactorBreakdown {
    pub fn compute(
        config: &Configuration,
        ctx: &ModelContext,
        ens: &TrajectoryEnsemble,
    ) -> Result<Self> {
        let mut presence = Vec::with_capacity(config.len());
        let mut span_radius = Vec::with_capacity(config.len());
        for inst in &config.instances {
            inst.validate()?;
            let ty = ctx
                .types
                .get(inst.type_id.index())
                .ok_or_else(|| Error::contract("instance references an unknown type"))?;
            presence.push(presence_logfactor(inst, ens, ty.excursion_rate_per_s)?);
            span_radius.push(span_radius_logprior(inst, ty)?);
        }
        Ok(Self {
            coverage: coverage_marginal(config, &ctx.data.gps, ens, ctx.params.c_u)?,
            presence,
            span_radius,
            scene: scene_logfactor(&ctx.data.frames, config, ctx.types, &ctx.background)?,
            face: face_logfactor(&ctx.data.faces, config, ctx.types, ctx.n_actors())?,
            overlap_ok: ctx.overlap.satisfied(config),
        })
    }

    pub fn total(&self) -> f64 {
        if !self.overlap_ok {
            return f64::NEG_INFINITY;
        }
        self.coverage
            + self.presence.iter().sum::<f64>()
            + self.span_radius.iter().sum::<f64>()
            + self.scene
            + self.face
    }
}

/// Unnormalised log-score of a configuration given fixed trajectory draws.
/// The GP density of the draws does not depend on the configuration and is
/// left out.
pub fn config_logprob(
    config: &Configuration,
    ctx: &ModelContext,
    ens: &TrajectoryEnsemble,
) -> Result<f64> {
    Ok(FactorBreakdown::compute(config, ctx, ens)?.total())
}
