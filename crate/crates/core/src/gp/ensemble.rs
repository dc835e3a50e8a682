use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::posterior::column;
use super::{GpPosterior, TimeGrid};
use crate::error::{Error, Result};
use crate::ids::ActorId;

/// One sampled trajectory of a single actor on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actor: ActorId,
    pub grid: TimeGrid,
    pub pos: Vec<[f64; 2]>,
}

impl Trajectory {
    /// Linear interpolation between grid points; clamped outside the grid.
    pub fn at(&self, t: f64) -> [f64; 2] {
        interpolate(&self.grid, &self.pos, t)
    }
}

pub(crate) fn interpolate(grid: &TimeGrid, pos: &[[f64; 2]], t: f64) -> [f64; 2] {
    let (i, f) = grid.locate(t);
    let a = pos[i];
    let b = pos[i + 1];
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
}

/// Independent posterior draws for a set of actors, aligned by draw index.
///
/// `draws[d][a * n + i]` is draw `d` of actor `actors[a]` at grid point `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub actors: Vec<ActorId>,
    pub grid: TimeGrid,
    pub seed: u64,
    pub draws: Vec<Vec<[f64; 2]>>,
    /// Joint log-density of each draw under the posterior it came from.
    pub log_density: Vec<f64>,
}

impl TrajectoryEnsemble {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn block_of(&self, actor: ActorId) -> Option<usize> {
        self.actors.iter().position(|&a| a == actor)
    }

    /// Grid positions of one actor in one draw.
    pub fn path(&self, draw: usize, block: usize) -> &[[f64; 2]] {
        let n = self.grid.n_points;
        &self.draws[draw][block * n..(block + 1) * n]
    }

    pub fn trajectory(&self, draw: usize, actor: ActorId) -> Option<Trajectory> {
        let b = self.block_of(actor)?;
        Some(Trajectory {
            actor,
            grid: self.grid,
            pos: self.path(draw, b).to_vec(),
        })
    }

    pub fn position(&self, draw: usize, block: usize, t: f64) -> [f64; 2] {
        interpolate(&self.grid, self.path(draw, block), t)
    }

    /// Restrict and reorder to `actors`.
    pub fn select(&self, actors: &[ActorId]) -> Result<TrajectoryEnsemble> {
        let blocks = actors
            .iter()
            .map(|&a| {
                self.block_of(a)
                    .ok_or_else(|| Error::contract(format!("actor {} not in ensemble", a.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        let draws = (0..self.n_draws())
            .map(|d| {
                blocks
                    .iter()
                    .flat_map(|&b| self.path(d, b).iter().copied())
                    .collect()
            })
            .collect();
        Ok(TrajectoryEnsemble {
            actors: actors.to_vec(),
            grid: self.grid,
            seed: self.seed,
            draws,
            log_density: self.log_density.clone(),
        })
    }

    /// Concatenate ensembles of disjoint actor sets drawn on one grid. Draw
    /// counts must agree; log-densities add since the parts are independent.
    pub fn combine(parts: Vec<TrajectoryEnsemble>, seed: u64) -> Result<TrajectoryEnsemble> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("cannot combine zero ensembles"))?;
        let grid = first.grid;
        let n_draws = first.n_draws();
        for p in &parts {
            if p.grid != grid || p.n_draws() != n_draws {
                return Err(Error::contract("ensembles must share grid and draw count"));
            }
        }
        let mut actors = Vec::new();
        let mut draws = vec![Vec::new(); n_draws];
        let mut log_density = vec![0.0; n_draws];
        for p in parts {
            actors.extend_from_slice(&p.actors);
            for (d, draw) in p.draws.into_iter().enumerate() {
                draws[d].extend(draw);
                log_density[d] += p.log_density[d];
            }
        }
        Ok(TrajectoryEnsemble {
            actors,
            grid,
            seed,
            draws,
            log_density,
        })
    }
}

/// Draw `n_draws` i.i.d. samples from `post`, deterministic in `seed`.
pub fn sample_trajectories(
    post: &GpPosterior,
    n_draws: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    if n_draws == 0 {
        return Err(Error::contract("n_draws must be >= 1"));
    }
    let factor = post.factor()?;
    let dim = post.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Columns 0..n_draws are the x coordinate, the rest y.
    let z = DMatrix::<f64>::from_fn(dim, 2 * n_draws, |_, _| rng.sample(StandardNormal));
    let x = &factor.l * &z;

    let gauss_const = -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut draws = Vec::with_capacity(n_draws);
    let mut log_density = Vec::with_capacity(n_draws);
    for d in 0..n_draws {
        let path = (0..dim)
            .map(|i| {
                [
                    post.mean[i][0] + x[(i, d)],
                    post.mean[i][1] + x[(i, n_draws + d)],
                ]
            })
            .collect();
        draws.push(path);
        let ld = match factor.half_log_det {
            Some(hld) => {
                let q = z.column(d).norm_squared() + z.column(n_draws + d).norm_squared();
                -0.5 * q - 2.0 * hld + 2.0 * gauss_const
            }
            None => f64::INFINITY,
        };
        log_density.push(ld);
    }
    Ok(TrajectoryEnsemble {
        actors: post.actors.clone(),
        grid: post.grid,
        seed,
        draws,
        log_density,
    })
}

/// Exact Gaussian log-density of `draw` under `post`, both coordinates summed.
///
/// A degenerate (all-zero covariance) posterior yields `+inf` at the mean and
/// `-inf` elsewhere.
pub fn log_density(post: &GpPosterior, draw: &[[f64; 2]]) -> Result<f64> {
    let dim = post.dim();
    if draw.len() != dim {
        return Err(Error::contract(format!(
            "draw has {} points, posterior has {}",
            draw.len(),
            dim
        )));
    }
    let factor = post.factor()?;
    let Some(hld) = factor.half_log_det else {
        let at_mean = draw.iter().zip(&post.mean).all(|(a, b)| a == b);
        return Ok(if at_mean {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        });
    };
    let gauss_const = -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for c in 0..2 {
        let r: DVector<f64> = column(draw, c) - column(&post.mean, c);
        let z = factor
            .l
            .solve_lower_triangular(&r)
            .ok_or_else(|| Error::numerical("singular factor in log_density"))?;
        total += -0.5 * z.norm_squared() - hld + gauss_const;
    }
    Ok(total)
}
