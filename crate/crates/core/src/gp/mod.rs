//! Gaussian-process model of latent 2-D actor trajectories.
//!
//! Each actor's trajectory is modelled per coordinate as an independent GP
//! with a stationary kernel and a constant prior mean. Posteriors are
//! evaluated exactly on an equidistant [`TimeGrid`]. Both coordinates share
//! one kernel and one isotropic noise level, so they also share a single
//! posterior covariance matrix; only the means differ.

mod conditioning;
mod ensemble;
mod kernel;
mod posterior;

pub(crate) use conditioning::condition_marginal;
pub use conditioning::{
    aux_observations, condition_linear, condition_on_activities, condition_on_activity, AuxMode,
    AuxObservationSet, Conditioned, LinearConstraint,
};
pub use ensemble::{log_density, sample_trajectories, Trajectory, TrajectoryEnsemble};
pub use kernel::KernelKind;
pub use posterior::{build_gp, stack_posteriors, GpPosterior};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::ActorId;

/// One GPS fix in the local planar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsObservation {
    pub actor: ActorId,
    /// Seconds.
    pub t: f64,
    /// Meters.
    pub pos: [f64; 2],
    /// Meters, isotropic.
    pub noise_std: f64,
}

impl GpsObservation {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(Error::contract(format!(
                "noise_std must be > 0, got {}",
                self.noise_std
            )));
        }
        if !self.t.is_finite() || !self.pos[0].is_finite() || !self.pos[1].is_finite() {
            return Err(Error::contract("GPS observation has non-finite fields"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpHyperParams {
    pub kernel: KernelKind,
    pub length_scale_s: f64,
    pub signal_std_m: f64,
    pub mean_m: [f64; 2],
    /// Relative diagonal jitter (times `signal_std_m^2`) used as the first
    /// escalation step when a factorisation fails.
    pub jitter: f64,
}

impl Default for GpHyperParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Matern52,
            length_scale_s: 120.0,
            signal_std_m: 200.0,
            mean_m: [0.0, 0.0],
            jitter: 1e-9,
        }
    }
}

impl GpHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale_s > 0.0) || !self.length_scale_s.is_finite() {
            return Err(Error::config(format!(
                "length_scale_s must be > 0, got {}",
                self.length_scale_s
            )));
        }
        if !(self.signal_std_m > 0.0) || !self.signal_std_m.is_finite() {
            return Err(Error::config(format!(
                "signal_std_m must be > 0, got {}",
                self.signal_std_m
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::config(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        if !self.mean_m[0].is_finite() || !self.mean_m[1].is_finite() {
            return Err(Error::config("mean_m must be finite"));
        }
        Ok(())
    }

    pub fn kernel_value(&self, dt: f64) -> f64 {
        self.kernel.eval(dt, self.length_scale_s, self.signal_std_m)
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_std_m * self.signal_std_m
    }
}

/// Equidistant time grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub const DEFAULT_POINTS: usize = 500;

    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::contract(format!(
                "grid needs t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::contract("grid needs at least 2 points"));
        }
        Ok(Self {
            t_start,
            t_end,
            n_points,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t_end
        } else {
            self.t_start + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Indices of grid points with `t0 <= t <= t1`.
    pub fn indices_within(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        if t1 < t0 {
            return 0..0;
        }
        let h = self.spacing();
        let lo = ((t0 - self.t_start) / h).ceil().max(0.0);
        let hi = ((t1 - self.t_start) / h)
            .floor()
            .min((self.n_points - 1) as f64);
        if hi < lo {
            return 0..0;
        }
        let (mut lo, mut hi) = (lo as usize, hi as usize);
        // Guard against rounding at the interval edges.
        while lo > 0 && self.point(lo - 1) >= t0 {
            lo -= 1;
        }
        while lo < self.n_points && self.point(lo) < t0 {
            lo += 1;
        }
        while hi + 1 < self.n_points && self.point(hi + 1) <= t1 {
            hi += 1;
        }
        while hi > 0 && self.point(hi) > t1 {
            hi -= 1;
        }
        if lo > hi || lo >= self.n_points || self.point(hi) > t1 {
            return 0..0;
        }
        lo..hi + 1
    }

    /// Cell index and fractional offset for linear interpolation; `t` is
    /// clamped to the grid.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.spacing();
        let x = ((t - self.t_start) / h).clamp(0.0, (self.n_points - 1) as f64);
        let i = (x.floor() as usize).min(self.n_points - 2);
        (i, x - i as f64)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indices_within() {
        let g = TimeGrid::new(0.0, 10.0, 11).unwrap();
        assert_eq!(g.indices_within(2.0, 5.0), 2..6);
        assert_eq!(g.indices_within(2.5, 5.5), 3..6);
        assert_eq!(g.indices_within(-3.0, 0.0), 0..1);
        assert_eq!(g.indices_within(10.0, 30.0), 10..11);
        assert_eq!(g.indices_within(3.2, 3.8), 0..0);
        assert_eq!(g.indices_within(11.0, 12.0), 0..0);
        assert_eq!(g.locate(2.5), (2, 0.5));
        assert_eq!(g.locate(10.0), (9, 1.0));
        assert_eq!(g.locate(-1.0), (0, 0.0));
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }
}
