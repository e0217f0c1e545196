use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{marginal_pdf, DensityMatrix};

/// Half-width of the inverse-CDF grid.
pub const SAMPLER_GRID_EDGE: f64 = 8.0;
pub const SAMPLER_GRID_POINTS: usize = 1 << 14;
/// Largest probability mass allowed outside the grid.
pub const SAMPLER_MASS_TOL: f64 = 1e-9;

/// Inverse-CDF sampler for pr(q | θ) tabulated on a fixed grid.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuadratureSampler {
    pub fn new(rho: &DensityMatrix, theta: f64) -> Result<Self> {
        let n = SAMPLER_GRID_POINTS;
        let h = 2.0 * SAMPLER_GRID_EDGE / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| -SAMPLER_GRID_EDGE + i as f64 * h).collect();
        let pdf: Vec<f64> = grid.iter().map(|&q| marginal_pdf(rho, theta, q)).collect();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in pdf.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cdf.push(acc);
        }
        let outside = 1.0 - acc;
        if outside > SAMPLER_MASS_TOL {
            return Err(Error::Config(format!(
                "{outside:.2e} of the quadrature distribution lies outside ±{SAMPLER_GRID_EDGE}"
            )));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(QuadratureSampler { grid, cdf })
    }

    /// Quadrature with CDF value `u` ∈ [0, 1], linearly interpolated.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (q0, q1) = (self.grid[k - 1], self.grid[k]);
        if c1 > c0 {
            q0 + (u - c0) / (c1 - c0) * (q1 - q0)
        } else {
            q0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// One draw from pr(q | θ) for state ρ.
///
/// Builds the lookup table on every call; use [`QuadratureSampler`] for repeated draws.
pub fn sample_quadrature<R: Rng + ?Sized>(rho: &DensityMatrix, theta: f64, rng: &mut R) -> Result<f64> {
    Ok(QuadratureSampler::new(rho, theta)?.sample(rng))
}
