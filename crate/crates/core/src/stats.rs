//! Small closed-form densities shared by the model and the sampler.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-normal parameters as (median in natural units, std of the natural log).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub median: f64,
    pub log_std: f64,
}

impl LogNormal {
    pub const fn new(median: f64, log_std: f64) -> Self {
        Self { median, log_std }
    }

    pub fn is_valid(&self) -> bool {
        self.median > 0.0
            && self.log_std > 0.0
            && self.median.is_finite()
            && self.log_std.is_finite()
    }

    /// Log-density at `x`; `-inf` for non-positive `x`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.median.ln()) / self.log_std;
        -0.5 * z * z - x.ln() - self.log_std.ln() - 0.5 * LN_2PI
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        normal_cdf((x.ln() - self.median.ln()) / self.log_std)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.median * (self.log_std * z).exp()
    }

    /// Mass of the rounding interval `[k - 1/2, k + 1/2)`.
    fn rounded_mass(&self, k: usize) -> f64 {
        let k = k as f64;
        self.cdf(k + 0.5) - self.cdf(k - 0.5)
    }

    /// `max(round(X), 2)`: mass below 2 is folded into 2.
    pub fn clamped_count_pmf(&self, k: usize) -> f64 {
        match k {
            0 | 1 => 0.0,
            2 => self.cdf(2.5),
            _ => self.rounded_mass(k),
        }
    }

    /// Rounded log-normal restricted to counts `>= 2` and renormalised.
    pub fn truncated_count_pmf(&self, k: usize) -> f64 {
        if k < 2 {
            return 0.0;
        }
        let tail = 1.0 - self.cdf(1.5);
        if tail <= 0.0 {
            return 0.0;
        }
        self.rounded_mass(k) / tail
    }

    pub fn sample_clamped_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x = self.sample(rng).round();
        if x < 2.0 {
            2
        } else if x > 1e6 {
            1_000_000
        } else {
            x as usize
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Isotropic 2-D normal log-density.
pub fn normal2_ln_pdf(x: [f64; 2], mean: [f64; 2], std: f64) -> f64 {
    let var = std * std;
    let dx = x[0] - mean[0];
    let dy = x[1] - mean[1];
    -LN_2PI - var.ln() - 0.5 * (dx * dx + dy * dy) / var
}

/// `ln P(K = k)` for `K ~ Poisson(rate)`.
pub fn poisson_ln_pmf(k: u64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let k = k as f64;
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

/// `ln(mean(exp(xs)))`, stable for large magnitudes.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + (s / xs.len() as f64).ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}
