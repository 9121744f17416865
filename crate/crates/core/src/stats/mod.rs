//! Convergence to equilibrium, correlation integrals, Birkhoff averages and
//! the central limit check.

mod clt;
mod orbit;

pub use clt::{clt_check, green_kubo, CltResult, GreenKubo};
pub use orbit::{birkhoff_average, Orbit};

use serde::{Deserialize, Serialize};

use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::solenoid::w10_norm_points;
use crate::transfer::TransferContext;

/// Observables used by orbit experiments and correlation sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    Trig {
        poly: crate::maps::TrigPoly,
    },
    /// `1_{[a,b)}`.
    Indicator {
        a: f64,
        b: f64,
    },
    Identity,
}

impl Observable {
    pub fn sine(k: u32) -> Self {
        Self::Trig {
            poly: crate::maps::TrigPoly::mode(k, 0.0, 1.0),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Trig { poly } => poly.value(x),
            Self::Indicator { a, b } => f64::from(u8::from(*a <= x && x < *b)),
            Self::Identity => x,
        }
    }

    pub fn sample(&self, ctx: &TransferContext) -> GridDensity {
        GridDensity::from_fn(ctx.n(), ctx.topology(), |x| self.value(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakNorm {
    L1,
    /// Dual bounded-Lipschitz norm `sup{∫φ f : |φ| ≤ 1, Lip φ ≤ 1}`, with the
    /// test functions taken on the unit interval.
    W,
}

impl WeakNorm {
    pub fn eval(self, f: &GridDensity) -> f64 {
        match self {
            Self::L1 => f.l1_norm(),
            Self::W => {
                let n = f.len() as f64;
                let support: Vec<f64> = f.nodes().collect();
                let weights: Vec<f64> = f.values().iter().map(|v| v / n).collect();
                w10_norm_points(&support, &weights)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// Everything past `n = 2` is below `1e-12`.
    Degenerate,
    /// Fewer than three points in the fit window.
    TooShort,
    /// `r² < 0.9`: no rate is claimed.
    PoorFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySeries {
    pub values: Vec<f64>,
    pub status: FitStatus,
    pub fitted_rate: Option<f64>,
    pub fitted_prefactor: Option<f64>,
    pub fit_window: Option<(usize, usize)>,
    pub r_squared: Option<f64>,
}

pub const DEGENERATE_FLOOR: f64 = 1e-12;
pub const FIT_FLOOR: f64 = 1e-10;
pub const MIN_R_SQUARED: f64 = 0.9;

impl DecaySeries {
    /// Log-linear least squares from the first value at or below `value₀/2`
    /// until values drop under `1e-10`.
    pub fn fit(values: Vec<f64>) -> Self {
        let mut out = Self {
            values,
            status: FitStatus::TooShort,
            fitted_rate: None,
            fitted_prefactor: None,
            fit_window: None,
            r_squared: None,
        };
        let v = &out.values;
        if v.len() > 2 && v[2..].iter().all(|&x| x < DEGENERATE_FLOOR) {
            out.status = FitStatus::Degenerate;
            return out;
        }
        let Some(start) = v.iter().position(|&x| x <= 0.5 * v[0] && x >= FIT_FLOOR) else {
            return out;
        };
        let end = start + v[start..].iter().take_while(|&&x| x >= FIT_FLOOR).count();
        if end - start < 3 {
            return out;
        }
        let pts: Vec<(f64, f64)> = (start..end).map(|i| (i as f64, v[i].ln())).collect();
        let (slope, intercept, r2) = linear_fit(&pts);
        out.fit_window = Some((start, end));
        out.r_squared = Some(r2);
        if r2 < MIN_R_SQUARED {
            out.status = FitStatus::PoorFit;
            return out;
        }
        out.status = FitStatus::Fitted;
        out.fitted_rate = Some(slope.exp());
        out.fitted_prefactor = Some(intercept.exp());
        out
    }
}

/// `(slope, intercept, r²)` of ordinary least squares.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// `‖Lⁿg‖` for `n = 0..=steps`. A `g` with non-zero grid average is rejected
/// unless `project` is set, in which case its mean is removed first.
///
/// When `h` is supplied, `(∫Lⁿg)·h` is removed after each step so quadrature
/// drift of the mean does not leak into the series.
pub fn equilibrium_decay(
    ctx: &TransferContext,
    g: &GridDensity,
    steps: usize,
    weak: WeakNorm,
    project: bool,
    h: Option<&GridDensity>,
) -> Result<DecaySeries> {
    let mean = g.integral();
    let mut f = if project {
        g.zero_average_project()
    } else if mean.abs() > 1e-8 {
        return Err(Error::NonZeroAverage { mean });
    } else {
        g.clone()
    };
    let mut values = Vec::with_capacity(steps + 1);
    values.push(weak.eval(&f));
    for _ in 0..steps {
        f = ctx.apply(&f)?;
        if let Some(h) = h {
            let drift = f.integral();
            f = f.sub(&h.scale(drift))?;
        }
        values.push(weak.eval(&f));
    }
    Ok(DecaySeries::fit(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// `∫ψ∘Tⁿ·g dm − ∫g dm·∫ψ dμ`.
    Lebesgue,
    /// `∫ψ∘Tⁿ·g dμ − ∫g dμ·∫ψ dμ`.
    Invariant,
}

/// Correlation series through the duality `∫ψ∘Tⁿ·φ dm = ∫ψ·Lⁿφ dm`.
pub fn correlation_integrals(
    ctx: &TransferContext,
    psi: &GridDensity,
    g: &GridDensity,
    steps: usize,
    mode: CorrelationMode,
    h: Option<&GridDensity>,
) -> Result<Vec<f64>> {
    let owned;
    let h = match h {
        Some(h) => h,
        None if mode == CorrelationMode::Invariant => return Err(Error::MissingInvariantDensity),
        None => {
            owned = ctx.fixed_density(1e-13, 10_000)?.density;
            &owned
        }
    };
    let psi_mean = psi.dot(h)?;
    let mut phi = match mode {
        CorrelationMode::Lebesgue => g.clone(),
        CorrelationMode::Invariant => g.mul(h)?,
    };
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        if n > 0 {
            phi = ctx.apply(&phi)?;
        }
        // The current mass rather than the initial one: grid quadrature does
        // not conserve ∫φ exactly, and the drift would otherwise plateau.
        out.push(psi.dot(&phi)? - phi.integral() * psi_mean);
    }
    Ok(out)
}

/// `|μ(E ∩ T⁻ⁿF) − μ(E)μ(F)|` for `n = 0..=steps`, via `∫1_F·Lⁿ(h·1_E)`.
pub fn mixing_defect(
    ctx: &TransferContext,
    h: &GridDensity,
    e: (f64, f64),
    f: (f64, f64),
    steps: usize,
) -> Result<Vec<f64>> {
    let ind =
        |(a, b): (f64, f64)| GridDensity::from_fn(ctx.n(), ctx.topology(), |x| f64::from(u8::from(a <= x && x < b)));
    let (one_e, one_f) = (ind(e), ind(f));
    let mut phi = h.mul(&one_e)?;
    let target = phi.integral() * h.dot(&one_f)?;
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        if n > 0 {
            phi = ctx.apply(&phi)?;
        }
        out.push((one_f.dot(&phi)? - target).abs());
    }
    Ok(out)
}
