//! Statistical stability and linear response of perturbation families
//! `T_δ = T₀ + δ·ε`, and the Keller family experiment where the invariant
//! density jumps in L¹ while concentrating weakly.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{GridDensity, Topology};
use crate::error::{Error, Result};
use crate::maps::{KellerParams, MapSpec, PerturbationFamily, TrigPoly};
use crate::rng;
use crate::transfer::TransferContext;
use crate::ulam::{invariant_vector, CellVector, UlamOperator};

pub const NEUMANN_MAX_TERMS: usize = 10_000;
pub const ZERO_MEAN_TOL: f64 = 1e-8;

/// `L̂w = L₀(−wε′/T′ − εw′/T′ + εT″w/T′²)`, the δ-derivative of `L_δ w`.
///
/// `dw` defaults to central differences of `w`.
pub fn derivative_operator(
    ctx: &TransferContext,
    eps: &TrigPoly,
    w: &GridDensity,
    dw: Option<&GridDensity>,
) -> Result<GridDensity> {
    let owned;
    let dw = match dw {
        Some(d) => d,
        None => {
            owned = w.derivative();
            &owned
        }
    };
    derivative_operator_fn(ctx, eps, |y| w.eval_at(y), |y| dw.eval_at(y))
}

/// `L̂w` with `w` and `w′` given as functions, sampled exactly at preimages.
pub fn derivative_operator_fn(
    ctx: &TransferContext,
    eps: &TrigPoly,
    w: impl Fn(f64) -> f64 + Sync,
    dw: impl Fn(f64) -> f64 + Sync,
) -> Result<GridDensity> {
    if ctx.map().as_circle().is_none() {
        return Err(Error::Unsupported("the derivative operator"));
    }
    let values: Vec<f64> = (0..ctx.n())
        .into_par_iter()
        .map(|i| {
            ctx.preimages(i)
                .iter()
                .map(|p| {
                    let e = eps.derivs(p.y);
                    let (t1, t2) = (p.deriv, p.second);
                    let wy = w(p.y);
                    (-wy * e[1] / t1 - e[0] * dw(p.y) / t1 + e[0] * t2 * wy / (t1 * t1)) / t1.abs()
                })
                .sum()
        })
        .collect();
    GridDensity::new(values, ctx.topology())
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolvent {
    pub density: GridDensity,
    /// Number of terms `Lⁱg`, `i < terms`, in the partial sum.
    pub terms: usize,
    /// `‖L^{terms} g‖₁`, the first neglected term.
    pub residual: f64,
}

/// `(1 − L)⁻¹g = Σ Lⁱg`, stopped at the first `N` with `‖Lᴺg‖₁ < tol`.
///
/// Grid quadrature does not conserve the integral exactly, so each term has
/// its drift `(∫Lⁱg)·h` removed, with `h` the invariant density (Lebesgue
/// when absent).
pub fn resolvent_apply(ctx: &TransferContext, g: &GridDensity, tol: f64, h: Option<&GridDensity>) -> Result<Resolvent> {
    let mean = g.integral();
    if mean.abs() > ZERO_MEAN_TOL {
        return Err(Error::NonZeroAverage { mean });
    }
    let mut sum = GridDensity::constant(g.len(), g.topology(), 0.0);
    let mut term = g.clone();
    let mut terms = 0;
    loop {
        let size = term.l1_norm();
        if size < tol {
            return Ok(Resolvent {
                density: sum,
                terms,
                residual: size,
            });
        }
        if terms == NEUMANN_MAX_TERMS {
            return Err(Error::NoConvergence {
                what: "Neumann series",
                iterations: terms,
                residual: size,
            });
        }
        sum = sum.add(&term)?;
        term = ctx.apply(&term)?;
        let drift = term.integral();
        term = match h {
            Some(h) => term.sub(&h.scale(drift))?,
            None => term.map(|v| v - drift),
        };
        terms += 1;
    }
}

fn fixed_point(map: MapSpec, n: usize, tol: f64) -> Result<(TransferContext, GridDensity)> {
    let ctx = TransferContext::new(map, n)?;
    let h = ctx.fixed_density(tol, 100_000)?.density;
    Ok((ctx, h))
}

/// Geometric ladder `10^{-1}, 10^{-1.5}, …, 10^{-4}`.
pub fn default_response_ladder() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-1.0 - 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FdPoint {
    pub delta: f64,
    /// `‖(h_δ − h₀)/δ − ĥ‖₁`.
    pub fd_error: f64,
    /// `‖(h_δ − h_{−δ})/(2δ) − ĥ‖₁` when `T_{−δ}` is a valid map.
    pub richardson_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseResult {
    pub grid: usize,
    pub tol: f64,
    pub response_density: GridDensity,
    pub neumann_terms: usize,
    pub truncation_residual: f64,
    /// Grid mean of `L̂h₀` removed before the resolvent.
    pub removed_mean: f64,
    pub fd: Vec<FdPoint>,
    /// `fd_error` decreases along the ladder, allowing the last step to rise.
    pub monotone: bool,
    /// The smallest δ did not improve on the previous one.
    pub floor_limited: bool,
}

impl ResponseResult {
    pub fn fd_error_at(&self, delta: f64) -> Option<f64> {
        self.fd
            .iter()
            .find(|p| (p.delta / delta - 1.0).abs() < 1e-9)
            .map(|p| p.fd_error)
    }
}

/// `ĥ = (1 − L₀)⁻¹L̂h₀`, validated against finite differences of fixed
/// points computed by transfer iteration on the same grid.
pub fn linear_response(family: &PerturbationFamily, n: usize, tol: f64, ladder: &[f64]) -> Result<ResponseResult> {
    let (ctx0, h0) = fixed_point(family.map_at(0.0)?, n, tol / 10.0)?;
    let lhat = derivative_operator(&ctx0, &family.direction, &h0, None)?;
    let removed_mean = lhat.integral();
    let res = resolvent_apply(&ctx0, &lhat.zero_average_project(), tol, Some(&h0))?;
    let hhat = res.density;
    let fd = ladder
        .par_iter()
        .map(|&d| {
            let (_, hp) = fixed_point(family.map_at(d)?, n, tol / 10.0)?;
            let fd_error = hp.sub(&h0)?.scale(1.0 / d).sub(&hhat)?.l1_norm();
            let richardson_error = match family.map_at(-d) {
                Ok(m) => {
                    let (_, hm) = fixed_point(m, n, tol / 10.0)?;
                    Some(hp.sub(&hm)?.scale(0.5 / d).sub(&hhat)?.l1_norm())
                }
                Err(_) => None,
            };
            Ok(FdPoint {
                delta: d,
                fd_error,
                richardson_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errs: Vec<f64> = fd.iter().map(|p| p.fd_error).collect();
    let rises: Vec<usize> = (1..errs.len()).filter(|&i| errs[i] > errs[i - 1]).collect();
    let floor_limited = rises.last() == Some(&(errs.len() - 1));
    let monotone = rises.is_empty() || (rises.len() == 1 && floor_limited);
    Ok(ResponseResult {
        grid: n,
        tol,
        response_density: hhat,
        neumann_terms: res.terms,
        truncation_residual: res.residual,
        removed_mean,
        fd,
        monotone,
        floor_limited,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCurve {
    pub k: usize,
    pub deltas: Vec<f64>,
    /// `‖h_δ − h₀‖₁` of Ulam invariant densities.
    pub gaps: Vec<f64>,
    /// `(c₁, c₂)` in `gap ≈ c₁·δ|log δ| + c₂·δ`.
    pub model: (f64, f64),
    /// `max |gap − model| / max gap`.
    pub fit_residual: f64,
    /// `‖(L_δ − L₀)f‖₁ / (δ‖f‖_{W11})`, one row per probe, one column per δ.
    pub uf2_ratios: Vec<Vec<f64>>,
    /// Largest ratio-to-median over all probes and δ (≥ 1).
    pub uf2_spread: Option<f64>,
}

pub struct StabilityOptions {
    pub k: usize,
    pub probes: usize,
    pub probe_grid: usize,
    pub seed: u64,
}

/// Ulam invariant densities along the ladder, the `δ log δ` fit, and the
/// perturbation-size probe (circle maps only).
pub fn stability_curve(family: &PerturbationFamily, deltas: &[f64], opts: &StabilityOptions) -> Result<StabilityCurve> {
    let k = opts.k;
    let h0 = invariant_vector(&UlamOperator::build(&family.map_at(0.0)?, k)?)?.vector;
    let gaps = deltas
        .par_iter()
        .map(|&d| {
            let hd = invariant_vector(&UlamOperator::build(&family.map_at(d)?, k)?)?.vector;
            Ok(l1_between(&hd, &h0))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = fit_delta_log_delta(deltas, &gaps);
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let worst = deltas
        .iter()
        .zip(&gaps)
        .map(|(&d, &g)| (g - (model.0 * d * d.ln().abs() + model.1 * d)).abs())
        .fold(0.0, f64::max);
    let fit_residual = if max_gap > 0.0 { worst / max_gap } else { 0.0 };
    let uf2_ratios = if family.base.as_circle().is_some() && opts.probes > 0 {
        uf2_probe(family, deltas, opts)?
    } else {
        Vec::new()
    };
    let uf2_spread = spread(&uf2_ratios);
    Ok(StabilityCurve {
        k,
        deltas: deltas.to_vec(),
        gaps,
        model,
        fit_residual,
        uf2_ratios,
        uf2_spread,
    })
}

fn l1_between(a: &CellVector, b: &CellVector) -> f64 {
    a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum()
}

/// Least squares for `gap = c₁·δ|log δ| + c₂·δ` via the 2×2 normal equations.
pub fn fit_delta_log_delta(deltas: &[f64], gaps: &[f64]) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&d, &g) in deltas.iter().zip(gaps) {
        let u = d * d.ln().abs();
        s11 += u * u;
        s12 += u * d;
        s22 += d * d;
        b1 += u * g;
        b2 += d * g;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-300 {
        return (0.0, if s22 > 0.0 { b2 / s22 } else { 0.0 });
    }
    ((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det)
}

fn uf2_probe(family: &PerturbationFamily, deltas: &[f64], opts: &StabilityOptions) -> Result<Vec<Vec<f64>>> {
    let n = opts.probe_grid;
    let ctx0 = TransferContext::new(family.map_at(0.0)?, n)?;
    let ctxs = deltas
        .par_iter()
        .map(|&d| TransferContext::new(family.map_at(d)?, n))
        .collect::<Result<Vec<_>>>()?;
    (0..opts.probes)
        .map(|p| {
            let mut r = rng::stream(opts.seed, p as u64);
            let poly = rng::random_trig_density(&mut r, 4);
            let f = GridDensity::from_fn(n, Topology::Circle, |x| poly.value(x));
            let base = ctx0.apply(&f)?;
            let norm = f.w11_norm();
            deltas
                .iter()
                .zip(&ctxs)
                .map(|(&d, c)| Ok(c.apply(&f)?.sub(&base)?.l1_norm() / (d * norm)))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

fn spread(rows: &[Vec<f64>]) -> Option<f64> {
    rows.iter()
        .map(|row| {
            let mut s = row.clone();
            s.sort_by(f64::total_cmp);
            let med = s[s.len() / 2];
            row.iter().map(|&v| (v / med).max(med / v)).fold(1.0, f64::max)
        })
        .reduce(f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzPoint {
    pub delta: f64,
    /// `‖h_δ − h₀‖₁/δ`.
    pub l1_ratio: f64,
    /// `‖h_δ − h₀‖_{W11}/δ`.
    pub w11_ratio: f64,
    /// `‖Δh − (h_δ − h₀)‖₁ / ‖h_δ − h₀‖₁` with `Δh = (1 − L_δ)⁻¹(L_δ − L₀)h₀`.
    pub formula_mismatch: f64,
    pub neumann_terms: usize,
}

/// Strong-norm Lipschitz witness and the resolvent identity for `h_δ − h₀`.
pub fn lipschitz_stability(
    family: &PerturbationFamily,
    deltas: &[f64],
    n: usize,
    tol: f64,
) -> Result<Vec<LipschitzPoint>> {
    let (ctx0, h0) = fixed_point(family.map_at(0.0)?, n, tol)?;
    let lh0 = ctx0.apply(&h0)?;
    deltas
        .par_iter()
        .map(|&d| {
            let (ctx, hd) = fixed_point(family.map_at(d)?, n, tol)?;
            let gap = hd.sub(&h0)?;
            let push = ctx.apply(&h0)?.sub(&lh0)?;
            let res = resolvent_apply(&ctx, &push.zero_average_project(), tol, Some(&hd))?;
            let gap_norm = gap.l1_norm();
            let formula_mismatch = if gap_norm > 0.0 {
                res.density.sub(&gap)?.l1_norm() / gap_norm
            } else {
                res.density.l1_norm()
            };
            Ok(LipschitzPoint {
                delta: d,
                l1_ratio: gap_norm / d,
                w11_ratio: gap.w11_norm() / d,
                formula_mismatch,
                neumann_terms: res.terms,
            })
        })
        .collect()
}

/// `3/2` on `[0, 1/2)`, `1/2` on `[1/2, 1]`.
pub fn keller_reference_a(x: f64) -> f64 {
    if x < 0.5 {
        1.5
    } else {
        0.5
    }
}

/// `2` on `[0, 1/2)`, zero beyond.
pub fn keller_reference_b(x: f64) -> f64 {
    if x < 0.5 {
        2.0
    } else {
        0.0
    }
}

/// Parameters `a_n = b_n = 1/2 + 2⁻ⁿ`, `r_n = 1/4 − 2^{−(n+1)}`, so that
/// `b_n = 1 − 2r_n` and `(a_n, b_n, r_n) → (1/2, 1/2, 1/4)`.
pub fn keller_path(steps: std::ops::RangeInclusive<u32>) -> Result<Vec<KellerParams>> {
    steps
        .map(|n| {
            let t = 0.5f64.powi(n as i32);
            KellerParams::new(0.5 + t, 0.5 + t, 0.25 - 0.5 * t)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KellerRow {
    pub params: KellerParams,
    /// Mass of the closed window `[1 − b, b]`.
    pub window_mass: f64,
    pub distance_a: f64,
    pub distance_b: f64,
    pub iterations: usize,
    pub cesaro: bool,
    pub residual: f64,
    #[serde(skip)]
    pub density: CellVector,
}

/// Ulam invariant vectors at resolution `k` along a parameter path.
pub fn keller_experiment(path: &[KellerParams], k: usize) -> Result<Vec<KellerRow>> {
    let kf = k as f64;
    path.par_iter()
        .map(|p| {
            let op = UlamOperator::build(&p.to_map()?.into(), k)?;
            let inv = invariant_vector(&op)?;
            let v = inv.vector;
            let at = |i: usize| (i as f64 + 0.5) / kf;
            Ok(KellerRow {
                params: *p,
                window_mass: v.window_mass(1.0 - p.b, p.b),
                distance_a: v.l1_distance_cellwise(|i| keller_reference_a(at(i))),
                distance_b: v.l1_distance_cellwise(|i| keller_reference_b(at(i))),
                iterations: inv.iterations,
                cesaro: inv.cesaro,
                residual: inv.residual,
                density: v,
            })
        })
        .collect()
}
