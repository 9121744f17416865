use rayon::prelude::*;
use serde::Serialize;

use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::rng;
use crate::transfer::TransferContext;

use super::{Observable, Orbit};

pub const GK_TERM_TOL: f64 = 1e-8;
pub const GK_MAX_TERMS: usize = 200;
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Asymptotic two-sided 1% Kolmogorov-Smirnov coefficient.
pub const KS_ONE_PERCENT: f64 = 1.63;

#[derive(Debug, Clone, Serialize)]
pub struct GreenKubo {
    pub sigma: f64,
    /// Correlation terms summed after the variance term.
    pub terms: usize,
    pub last_term: f64,
    pub mean: f64,
}

/// `σ² = ∫f̄²h + 2Σ_{k≥1} ∫f̄·Lᵏ(f̄h)`, `f̄ = f − ∫fh`, stopped when a term
/// drops below `1e-8` in size or after 200 terms.
pub fn green_kubo(ctx: &TransferContext, h: &GridDensity, f: &Observable) -> Result<GreenKubo> {
    let fg = f.sample(ctx);
    let mean = fg.dot(h)?;
    let fbar = fg.map(|v| v - mean);
    let mut phi = fbar.mul(h)?;
    let mut var = fbar.dot(&phi)?;
    let mut terms = 0;
    let mut last_term = var;
    while terms < GK_MAX_TERMS {
        phi = ctx.apply(&phi)?;
        let c = fbar.dot(&phi)?;
        terms += 1;
        var += 2.0 * c;
        last_term = c;
        if c.abs() < GK_TERM_TOL {
            break;
        }
    }
    Ok(GreenKubo {
        sigma: var.max(0.0).sqrt(),
        terms,
        last_term,
        mean,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CltResult {
    pub sample_count: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `∫f dμ`, subtracted from every orbit sum.
    pub mean: f64,
    pub sigma_hat: f64,
    pub gk_sigma: f64,
    pub gk_terms: usize,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl CltResult {
    pub fn ks_passed(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }

    pub fn sigma_agreement(&self) -> f64 {
        (self.sigma_hat - self.gk_sigma).abs() / self.gk_sigma
    }
}

/// Normalized Birkhoff sums `(S_n f − n∫f dμ)/√n` from Lebesgue-random
/// starts, one seeded stream per sample, compared against `N(0, σ̂²)`.
pub fn clt_check(
    ctx: &TransferContext,
    h: &GridDensity,
    f: &Observable,
    sample_count: usize,
    horizon: usize,
    seed: u64,
) -> Result<CltResult> {
    if sample_count < 2 || horizon == 0 {
        return Err(Error::InvalidArgument("need at least two samples and n ≥ 1".into()));
    }
    let gk = green_kubo(ctx, h, f)?;
    let map = ctx.map();
    let root = (horizon as f64).sqrt();
    let samples: Vec<f64> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let orbit = Orbit::random(map, rng::stream(seed, i as u64));
            orbit.take(horizon).map(|x| f.value(x) - gk.mean).sum::<f64>() / root
        })
        .collect();
    let m = samples.iter().sum::<f64>() / sample_count as f64;
    let var = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (sample_count - 1) as f64;
    let sigma_hat = var.sqrt();
    if sigma_hat < SIGMA_FLOOR {
        return Err(Error::CoboundarySuspected { sigma_hat });
    }
    Ok(CltResult {
        sample_count,
        horizon,
        seed,
        mean: gk.mean,
        sigma_hat,
        gk_sigma: gk.sigma,
        gk_terms: gk.terms,
        ks_statistic: ks_normal(&samples, sigma_hat),
        ks_critical: KS_ONE_PERCENT / (sample_count as f64).sqrt(),
        samples,
    })
}

/// Kolmogorov-Smirnov distance to `N(0, σ²)`.
pub fn ks_normal(samples: &[f64], sigma: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)));
            (cdf - i as f64 / n).abs().max((i as f64 + 1.0) / n - cdf)
        })
        .fold(0.0, f64::max)
}
