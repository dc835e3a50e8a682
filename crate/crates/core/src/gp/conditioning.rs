//! Exact conditioning of (stacked) GP posteriors on linear-Gaussian
//! pseudo-observations `A x = 0 + noise`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::posterior::symmetrize;
use super::GpPosterior;
use crate::error::{Error, Result};
use crate::ids::ActorId;

/// Sparse constraint rows over a stacked coordinate vector. Every row is
/// `rows[k] - shared` (when `shared` is set); all rows observe 0 with
/// independent noise of standard deviation `noise_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub shared: Option<Vec<(usize, f64)>>,
    pub noise_std: f64,
}

impl LinearConstraint {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense coefficient matrix, one row per constraint.
    pub fn dense(&self, dim: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows.len(), dim);
        for (k, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                a[(k, j)] += c;
            }
            if let Some(w) = &self.shared {
                for &(j, c) in w {
                    a[(k, j)] -= c;
                }
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    /// Each participant stays at the common time-averaged location.
    #[default]
    Static,
    /// All participants share one location at every instant.
    Dynamic,
}

/// Proximity pseudo-observations tying an activity's participants together
/// over `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxObservationSet {
    pub mode: AuxMode,
    pub participants: Vec<ActorId>,
    pub t_start: f64,
    pub t_end: f64,
    pub sigma_aux: f64,
    /// Optional index of the instance this set was derived from.
    pub activity_ref: Option<usize>,
}

impl AuxObservationSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_aux > 0.0) || !self.sigma_aux.is_finite() {
            return Err(Error::contract(format!(
                "sigma_aux must be > 0, got {}",
                self.sigma_aux
            )));
        }
        let mut p = self.participants.clone();
        p.sort();
        p.dedup();
        if p.len() < 2 {
            return Err(Error::contract(
                "aux observations need at least 2 distinct participants",
            ));
        }
        if !(self.t_end >= self.t_start) {
            return Err(Error::contract("aux observation span is inverted"));
        }
        Ok(())
    }
}

/// Result of a conditioning operation.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub posterior: GpPosterior,
    /// Some constraint set had no grid point inside its span and was skipped.
    pub empty_span: bool,
    /// The innovation covariance was (near) singular and a pseudo-inverse
    /// was used.
    pub pseudo_inverse: bool,
    pub n_constraints: usize,
}

/// Build the constraint rows of `set` for a stack laid out as `layout`
/// (actor-major, `n` grid points each). Returns `None` when no grid point
/// falls inside the span.
pub fn aux_observations(
    set: &AuxObservationSet,
    layout: &[ActorId],
    grid: &super::TimeGrid,
) -> Result<Option<LinearConstraint>> {
    set.validate()?;
    let n = grid.n_points;
    let mut blocks = Vec::with_capacity(set.participants.len());
    for p in &set.participants {
        let b = layout
            .iter()
            .position(|a| a == p)
            .ok_or_else(|| Error::contract(format!("participant {} has no posterior", p.0)))?;
        if !blocks.contains(&b) {
            blocks.push(b);
        }
    }
    let span = grid.indices_within(set.t_start, set.t_end);
    if span.is_empty() {
        return Ok(None);
    }
    let mut rows = Vec::new();
    let shared = match set.mode {
        AuxMode::Static => {
            // Riemann sum of the time average: each of the |P| * K grid
            // samples carries weight dt / (|P| * K * dt).
            let w = 1.0 / (blocks.len() * span.len()) as f64;
            let mut shared = Vec::with_capacity(blocks.len() * span.len());
            for &b in &blocks {
                for i in span.clone() {
                    rows.push(vec![(b * n + i, 1.0)]);
                    shared.push((b * n + i, w));
                }
            }
            Some(shared)
        }
        AuxMode::Dynamic => {
            for x in 0..blocks.len() {
                for y in x + 1..blocks.len() {
                    for i in span.clone() {
                        rows.push(vec![(blocks[x] * n + i, 1.0), (blocks[y] * n + i, -1.0)]);
                    }
                }
            }
            None
        }
    };
    Ok(Some(LinearConstraint {
        rows,
        shared,
        noise_std: set.sigma_aux,
    }))
}

/// Condition a (possibly stacked) posterior on linear constraints.
pub fn condition_linear(
    post: &GpPosterior,
    constraints: &[LinearConstraint],
) -> Result<Conditioned> {
    let out = condition_blocks(&[post], constraints, None)?;
    let (pseudo_inverse, n_constraints) = (out.pseudo_inverse, out.n_constraints);
    Ok(Conditioned {
        posterior: out.into_posterior(&[post]),
        empty_span: false,
        pseudo_inverse,
        n_constraints,
    })
}

/// Jointly condition the participants of one activity.
pub fn condition_on_activity(
    posteriors: &[GpPosterior],
    set: &AuxObservationSet,
) -> Result<Conditioned> {
    condition_on_activities(posteriors, std::slice::from_ref(set))
}

/// Jointly condition on several activities; the union of all participants
/// is stacked (in order of first appearance) and every constraint row is
/// applied at once.
pub fn condition_on_activities(
    posteriors: &[GpPosterior],
    sets: &[AuxObservationSet],
) -> Result<Conditioned> {
    let (blocks, layout) = gather_participants(posteriors, sets)?;
    let grid = blocks[0].grid;
    let mut constraints = Vec::new();
    let mut empty_span = false;
    for set in sets {
        match aux_observations(set, &layout, &grid)? {
            Some(c) => constraints.push(c),
            None => empty_span = true,
        }
    }
    if empty_span {
        log::warn!("activity span does not intersect the grid; constraint skipped");
    }
    let out = condition_blocks(&blocks, &constraints, None)?;
    let (pseudo_inverse, n_constraints) = (out.pseudo_inverse, out.n_constraints);
    Ok(Conditioned {
        posterior: out.into_posterior(&blocks),
        empty_span,
        pseudo_inverse,
        n_constraints,
    })
}

/// Like [`condition_on_activities`] but only materialises the marginal of
/// `actor`; much cheaper when many participants are stacked.
pub(crate) fn condition_marginal(
    posteriors: &[GpPosterior],
    sets: &[AuxObservationSet],
    actor: ActorId,
) -> Result<Conditioned> {
    let (blocks, layout) = gather_participants(posteriors, sets)?;
    let keep = layout
        .iter()
        .position(|&a| a == actor)
        .ok_or_else(|| Error::contract("actor is not a participant of the given sets"))?;
    let grid = blocks[0].grid;
    let mut constraints = Vec::new();
    let mut empty_span = false;
    for set in sets {
        match aux_observations(set, &layout, &grid)? {
            Some(c) => constraints.push(c),
            None => empty_span = true,
        }
    }
    let out = condition_blocks(&blocks, &constraints, Some(keep))?;
    let n = grid.n_points;
    let src = blocks[keep];
    let posterior = GpPosterior::new(
        vec![actor],
        grid,
        out.mean[keep * n..(keep + 1) * n].to_vec(),
        out.cov,
        src.source_obs.clone(),
        src.jitter_scale,
        src.jitter_start,
    );
    Ok(Conditioned {
        posterior,
        empty_span,
        pseudo_inverse: out.pseudo_inverse,
        n_constraints: out.n_constraints,
    })
}

fn gather_participants<'a>(
    posteriors: &'a [GpPosterior],
    sets: &[AuxObservationSet],
) -> Result<(Vec<&'a GpPosterior>, Vec<ActorId>)> {
    let mut layout: Vec<ActorId> = Vec::new();
    for set in sets {
        set.validate()?;
        for p in &set.participants {
            if !layout.contains(p) {
                layout.push(*p);
            }
        }
    }
    if layout.is_empty() {
        return Err(Error::contract("no aux observation sets given"));
    }
    let mut blocks = Vec::with_capacity(layout.len());
    for a in &layout {
        let post = posteriors
            .iter()
            .find(|p| p.actors.len() == 1 && p.actors[0] == *a)
            .ok_or_else(|| Error::contract(format!("no posterior for participant {}", a.0)))?;
        blocks.push(post);
    }
    let grid = blocks[0].grid;
    if blocks.iter().any(|b| b.grid != grid) {
        return Err(Error::contract(
            "participants' posteriors must share a grid",
        ));
    }
    Ok((blocks, layout))
}

struct BlockOutput {
    mean: Vec<[f64; 2]>,
    /// Full stacked covariance, or the kept block only.
    cov: DMatrix<f64>,
    pseudo_inverse: bool,
    n_constraints: usize,
}

impl BlockOutput {
    fn into_posterior(self, blocks: &[&GpPosterior]) -> GpPosterior {
        let mut actors = Vec::new();
        let mut obs = Vec::new();
        for b in blocks {
            actors.extend_from_slice(&b.actors);
            obs.extend_from_slice(&b.source_obs);
        }
        let scale = blocks.iter().map(|b| b.jitter_scale).fold(0.0, f64::max);
        GpPosterior::new(
            actors,
            blocks[0].grid,
            self.mean,
            self.cov,
            obs,
            scale,
            blocks[0].jitter_start,
        )
    }
}

/// Block-diagonal prior view of several posteriors stacked in order.
struct Stack<'a> {
    blocks: &'a [&'a GpPosterior],
    offsets: Vec<usize>,
    dim: usize,
}

impl<'a> Stack<'a> {
    fn new(blocks: &'a [&'a GpPosterior]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in blocks {
            offsets.push(dim);
            dim += b.dim();
        }
        Self {
            blocks,
            offsets,
            dim,
        }
    }

    fn locate(&self, j: usize) -> (usize, usize) {
        let b = match self.offsets.binary_search(&j) {
            Ok(b) => b,
            Err(b) => b - 1,
        };
        (b, j - self.offsets[b])
    }

    /// out += c * Sigma[j, :]
    fn add_row(&self, j: usize, c: f64, out: &mut [f64]) {
        let (b, local) = self.locate(j);
        let blk = self.blocks[b];
        let off = self.offsets[b];
        let d = blk.dim();
        for i in 0..d {
            // Covariance is symmetric; column access is contiguous.
            out[off + i] += c * blk.cov[(i, local)];
        }
    }

    fn mean(&self, j: usize) -> [f64; 2] {
        let (b, local) = self.locate(j);
        self.blocks[b].mean[local]
    }
}

fn sparse_dot(coefs: &[(usize, f64)], v: &[f64]) -> f64 {
    coefs.iter().map(|&(j, c)| c * v[j]).sum()
}

fn condition_blocks(
    blocks: &[&GpPosterior],
    constraints: &[LinearConstraint],
    keep: Option<usize>,
) -> Result<BlockOutput> {
    let stack = Stack::new(blocks);
    let dim = stack.dim;
    for c in constraints {
        if !(c.noise_std >= 0.0) || !c.noise_std.is_finite() {
            return Err(Error::contract("constraint noise must be finite and >= 0"));
        }
        let bad = c
            .rows
            .iter()
            .flatten()
            .chain(c.shared.iter().flatten())
            .any(|&(j, v)| j >= dim || !v.is_finite());
        if bad {
            return Err(Error::contract("constraint coefficient out of range"));
        }
    }
    let m: usize = constraints.iter().map(|c| c.len()).sum();
    let stacked_mean: Vec<[f64; 2]> = (0..dim).map(|j| stack.mean(j)).collect();
    let full_cov = |stack: &Stack| {
        let mut cov = DMatrix::zeros(dim, dim);
        for (b, blk) in stack.blocks.iter().enumerate() {
            let off = stack.offsets[b];
            let d = blk.dim();
            cov.view_mut((off, off), (d, d)).copy_from(&blk.cov);
        }
        cov
    };
    if m == 0 {
        let cov = match keep {
            Some(k) => blocks[k].cov.clone(),
            None => full_cov(&stack),
        };
        return Ok(BlockOutput {
            mean: stacked_mean,
            cov,
            pseudo_inverse: false,
            n_constraints: 0,
        });
    }

    // B = A Sigma, one row per constraint (stored as columns of a dim x m
    // matrix so each row is contiguous).
    let mut bt = DMatrix::<f64>::zeros(dim, m);
    let mut noise = Vec::with_capacity(m);
    let mut resid = DMatrix::<f64>::zeros(m, 2);
    let mut k = 0;
    for c in constraints {
        let mut w_sigma = vec![0.0; dim];
        let mut w_mean = [0.0; 2];
        if let Some(w) = &c.shared {
            for &(j, coef) in w {
                stack.add_row(j, coef, &mut w_sigma);
                let mu = stacked_mean[j];
                w_mean[0] += coef * mu[0];
                w_mean[1] += coef * mu[1];
            }
        }
        for row in &c.rows {
            let mut col = bt.column_mut(k);
            let out = col.as_mut_slice();
            for &(j, coef) in row {
                stack.add_row(j, coef, out);
                let mu = stacked_mean[j];
                resid[(k, 0)] += coef * mu[0];
                resid[(k, 1)] += coef * mu[1];
            }
            if c.shared.is_some() {
                for (o, w) in out.iter_mut().zip(&w_sigma) {
                    *o -= w;
                }
                resid[(k, 0)] -= w_mean[0];
                resid[(k, 1)] -= w_mean[1];
            }
            noise.push(c.noise_std * c.noise_std);
            k += 1;
        }
    }

    // S = A Sigma A^T + diag(noise), filled column by column from B^T.
    let mut s = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        let col = bt.column(k);
        let col = col.as_slice();
        let mut l = 0;
        for c in constraints {
            let shared_dot = c.shared.as_ref().map_or(0.0, |w| sparse_dot(w, col));
            for row in &c.rows {
                s[(l, k)] = sparse_dot(row, col) - shared_dot;
                l += 1;
            }
        }
    }
    let mut s_sym = s.clone();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s_sym[(i, j)] = v;
            s_sym[(j, i)] = v;
        }
    }
    let max_diag = (0..m).map(|i| s_sym[(i, i)]).fold(0.0, f64::max);
    let min_noise = noise.iter().copied().fold(f64::INFINITY, f64::min);
    for (i, nv) in noise.iter().enumerate() {
        s_sym[(i, i)] += nv;
    }

    // Whitening W with W^T W = S^{-1} (or its pseudo-inverse).
    let near_singular = min_noise < 1e-8 * max_diag;
    let chol = if near_singular {
        None
    } else {
        s_sym.clone().cholesky()
    };
    let (u, wr, pseudo_inverse) = match chol {
        Some(ch) => {
            let l = ch.l();
            let u = l
                .solve_lower_triangular(&bt.transpose())
                .ok_or_else(|| Error::numerical("triangular solve failed"))?;
            let wr = l
                .solve_lower_triangular(&resid)
                .ok_or_else(|| Error::numerical("triangular solve failed"))?;
            (u, wr, false)
        }
        None => {
            let eig = s_sym.symmetric_eigen();
            let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            if !(lmax > 0.0) || !lmax.is_finite() {
                return Err(Error::numerical("innovation covariance is not positive"));
            }
            let cutoff = lmax * m as f64 * f64::EPSILON * 16.0;
            let kept: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
            let mut w = DMatrix::<f64>::zeros(kept.len(), m);
            for (r, &i) in kept.iter().enumerate() {
                let scale = 1.0 / eig.eigenvalues[i].sqrt();
                for c in 0..m {
                    w[(r, c)] = scale * eig.eigenvectors[(c, i)];
                }
            }
            let u = &w * bt.transpose();
            let wr = &w * &resid;
            (u, wr, true)
        }
    };

    let shift = u.transpose() * wr;
    let mean: Vec<[f64; 2]> = stacked_mean
        .iter()
        .enumerate()
        .map(|(j, mu)| [mu[0] - shift[(j, 0)], mu[1] - shift[(j, 1)]])
        .collect();
    if mean.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::numerical("conditioned mean is not finite"));
    }

    let cov = match keep {
        Some(b) => {
            let off = stack.offsets[b];
            let d = blocks[b].dim();
            let ub = u.columns(off, d);
            let mut cov = &blocks[b].cov - ub.transpose() * ub;
            symmetrize(&mut cov);
            cov
        }
        None => {
            let mut cov = full_cov(&stack);
            cov.gemm_tr(-1.0, &u, &u, 1.0);
            symmetrize(&mut cov);
            cov
        }
    };
    Ok(BlockOutput {
        mean,
        cov,
        pseudo_inverse,
        n_constraints: m,
    })
}
