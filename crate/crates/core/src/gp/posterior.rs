use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{GpHyperParams, GpsObservation, TimeGrid};
use crate::error::{Error, Result};
use crate::ids::ActorId;

/// Largest relative jitter tried before a factorisation is declared failed.
const MAX_REL_JITTER: f64 = 1e-3;

/// Exact GP posterior on a grid, for one actor or several stacked actors.
///
/// Stacked posteriors are actor-major: entry `a * n + i` is actor
/// `actors[a]` at grid point `i`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub actors: Vec<ActorId>,
    pub grid: TimeGrid,
    pub mean: Vec<[f64; 2]>,
    /// Covariance of either coordinate; both coordinates share it.
    pub cov: DMatrix<f64>,
    pub source_obs: Vec<GpsObservation>,
    /// Scale for jitter escalation (prior signal variance).
    pub jitter_scale: f64,
    pub jitter_start: f64,
    factor: OnceLock<Result<Arc<Factor>, String>>,
}

/// Lower-triangular square root of the covariance.
#[derive(Debug)]
pub(crate) struct Factor {
    pub l: DMatrix<f64>,
    /// Sum of log-diagonal of `l`; `None` for a degenerate (all-zero) factor.
    pub half_log_det: Option<f64>,
}

impl GpPosterior {
    pub fn new(
        actors: Vec<ActorId>,
        grid: TimeGrid,
        mean: Vec<[f64; 2]>,
        cov: DMatrix<f64>,
        source_obs: Vec<GpsObservation>,
        jitter_scale: f64,
        jitter_start: f64,
    ) -> Self {
        Self {
            actors,
            grid,
            mean,
            cov,
            source_obs,
            jitter_scale,
            jitter_start,
            factor: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }

    /// Pointwise marginal variances.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.cov[(i, i)].max(0.0)).collect()
    }

    /// Position of this actor's block in a stacked posterior.
    pub fn block_of(&self, actor: ActorId) -> Option<usize> {
        self.actors.iter().position(|&a| a == actor)
    }

    /// Marginal posterior of one actor of a stacked posterior.
    pub fn marginal(&self, actor: ActorId) -> Option<GpPosterior> {
        let b = self.block_of(actor)?;
        let n = self.n_points();
        let range = b * n..(b + 1) * n;
        let cov = self.cov.view((b * n, b * n), (n, n)).into_owned();
        let obs = self
            .source_obs
            .iter()
            .filter(|o| o.actor == actor)
            .copied()
            .collect();
        Some(GpPosterior::new(
            vec![actor],
            self.grid,
            self.mean[range].to_vec(),
            cov,
            obs,
            self.jitter_scale,
            self.jitter_start,
        ))
    }

    pub(crate) fn factor(&self) -> Result<Arc<Factor>> {
        self.factor
            .get_or_init(|| {
                factorize(&self.cov, self.jitter_scale, self.jitter_start)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::Numerical)
    }
}

fn factorize(cov: &DMatrix<f64>, scale: f64, start: f64) -> Result<Factor> {
    let n = cov.nrows();
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(Factor {
            l: DMatrix::zeros(n, n),
            half_log_det: None,
        });
    }
    let chol = cholesky_escalating(cov.clone(), scale, start)?;
    let l = chol.l();
    let half_log_det = l.diagonal().iter().map(|d| d.ln()).sum();
    Ok(Factor {
        l,
        half_log_det: Some(half_log_det),
    })
}

/// Cholesky factorisation, retrying with diagonal jitter `rel * scale` for
/// `rel = start, 10 * start, ...` up to `1e-3` when the plain attempt fails.
pub(crate) fn cholesky_escalating(
    m: DMatrix<f64>,
    scale: f64,
    start: f64,
) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let mut rel = if start > 0.0 { start } else { 1e-9 };
    while rel <= MAX_REL_JITTER * (1.0 + 1e-9) {
        let mut jittered = m.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += rel * scale;
        }
        if let Some(c) = jittered.cholesky() {
            log::debug!("cholesky needed relative jitter {rel:e}");
            return Ok(c);
        }
        rel *= 10.0;
    }
    Err(Error::numerical(format!(
        "cholesky failed on {}x{} matrix after jitter escalation",
        m.nrows(),
        m.ncols()
    )))
}

/// Exact GP regression of one actor's observations onto `grid`.
pub fn build_gp(
    obs: &[GpsObservation],
    hyper: &GpHyperParams,
    grid: TimeGrid,
) -> Result<GpPosterior> {
    hyper.validate()?;
    let actor = match obs.first() {
        Some(o) => o.actor,
        None => ActorId(0),
    };
    for o in obs {
        o.validate()?;
        if o.actor != actor {
            return Err(Error::contract(
                "build_gp expects observations of a single actor",
            ));
        }
    }
    let n = grid.n_points;
    let ts = grid.points();
    let k_gg = DMatrix::from_fn(n, n, |i, j| hyper.kernel_value(ts[i] - ts[j]));

    if obs.is_empty() {
        return Ok(GpPosterior::new(
            vec![actor],
            grid,
            vec![hyper.mean_m; n],
            k_gg,
            Vec::new(),
            hyper.signal_var(),
            hyper.jitter,
        ));
    }

    let m = obs.len();
    let mut k_oo = DMatrix::from_fn(m, m, |i, j| hyper.kernel_value(obs[i].t - obs[j].t));
    for (i, o) in obs.iter().enumerate() {
        k_oo[(i, i)] += o.noise_std * o.noise_std;
    }
    let k_og = DMatrix::from_fn(m, n, |i, j| hyper.kernel_value(obs[i].t - ts[j]));
    let chol = cholesky_escalating(k_oo, hyper.signal_var(), hyper.jitter)?;

    let mut resid = DMatrix::zeros(m, 2);
    for (i, o) in obs.iter().enumerate() {
        resid[(i, 0)] = o.pos[0] - hyper.mean_m[0];
        resid[(i, 1)] = o.pos[1] - hyper.mean_m[1];
    }
    let alpha = chol.solve(&resid);
    let shift = k_og.transpose() * alpha;
    let mean = (0..n)
        .map(|i| {
            [
                hyper.mean_m[0] + shift[(i, 0)],
                hyper.mean_m[1] + shift[(i, 1)],
            ]
        })
        .collect();

    let v = chol
        .l_dirty()
        .solve_lower_triangular(&k_og)
        .ok_or_else(|| Error::numerical("triangular solve failed"))?;
    let mut cov = k_gg - v.transpose() * v;
    symmetrize(&mut cov);

    Ok(GpPosterior::new(
        vec![actor],
        grid,
        mean,
        cov,
        obs.to_vec(),
        hyper.signal_var(),
        hyper.jitter,
    ))
}

/// Block-diagonal joint posterior of a priori independent actors.
pub fn stack_posteriors(parts: &[&GpPosterior]) -> Result<GpPosterior> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("cannot stack zero posteriors"))?;
    let grid = first.grid;
    let mut total = 0;
    for p in parts {
        if p.grid != grid {
            return Err(Error::contract("posteriors must share a common grid"));
        }
        total += p.dim();
    }
    let mut cov = DMatrix::zeros(total, total);
    let mut mean = Vec::with_capacity(total);
    let mut actors = Vec::new();
    let mut obs = Vec::new();
    let mut off = 0;
    for p in parts {
        let d = p.dim();
        cov.view_mut((off, off), (d, d)).copy_from(&p.cov);
        mean.extend_from_slice(&p.mean);
        actors.extend_from_slice(&p.actors);
        obs.extend_from_slice(&p.source_obs);
        off += d;
    }
    let scale = parts.iter().map(|p| p.jitter_scale).fold(0.0, f64::max);
    Ok(GpPosterior::new(
        actors,
        grid,
        mean,
        cov,
        obs,
        scale,
        first.jitter_start,
    ))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn column(mean: &[[f64; 2]], c: usize) -> DVector<f64> {
    DVector::from_iterator(mean.len(), mean.iter().map(|p| p[c]))
}
