//! Lasota-Yorke constants from map data and numerical verification of the
//! resulting inequalities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{GridDensity, Topology};
use crate::error::{Error, Result};
use crate::maps::roots::solve_monotone;
use crate::maps::{wrap01, MapSpec, PiecewiseExpandingMap, SmoothCircleMap};
use crate::rng;
use crate::transfer::TransferContext;
use crate::ulam::UlamOperator;

pub const SCAN_POINTS: usize = 1_000_000;
pub const SAFETY: f64 = 1.001;
pub const MAX_STEPS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPair {
    W11L1,
    LipSup,
    BvL1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyConstants {
    pub norm_pair: NormPair,
    /// Contraction factor of `T^{n_step}` (one-step factor when `n_step = 1`).
    pub alpha: f64,
    /// W11: `(sup|T''/T'²| + 1)/(1 − α)`. BV: the variation constant
    /// `sup|T''/T'²| + 2/inf|I_i|` of `T^{n_step}`. Lip: the sup-norm coefficient.
    pub big_b: f64,
    pub n_step: u32,
    /// `A` in `strong(Lⁿf) ≤ A·ρⁿ·strong(f) + B_it·weak(f)`.
    pub amplitude: f64,
    /// `B_it` in the same inequality.
    pub iterated_b: f64,
    pub one_step_lambda: f64,
    /// One-step additive constant of the strong seminorm.
    pub one_step_b: f64,
    /// Empirical `max_n ‖Lⁿ1‖_∞` (Lipschitz chain only).
    pub sup_iterate_bound: Option<f64>,
    /// Shortest cell of the partition of `T^{n_step}` (BV only).
    pub min_cell: Option<f64>,
    /// 1.001 when scanned extrema were inflated, 1 when they are exact.
    pub safety_factor: f64,
}

impl LyConstants {
    /// Per-iterate rate `α^{1/n_step}`.
    pub fn rate(&self) -> f64 {
        self.alpha.powf(1.0 / self.n_step as f64)
    }

    /// Additive constant of the one-step inequality in the full BV norm.
    pub fn one_step_bv_b(&self) -> f64 {
        self.one_step_b + 1.0
    }

    /// Bound on the strong norm of the invariant density.
    pub fn density_bound(&self) -> f64 {
        match self.norm_pair {
            NormPair::W11L1 => self.big_b,
            _ => self.iterated_b,
        }
    }
}

fn scan_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let points = points.max(2);
    (0..points).map(move |i| lo + (hi - lo) * (i as f64 + 0.5) / points as f64)
}

/// `max 1/T'` and `sup |T''/T'^2|` over a dense scan, inflated by `SAFETY`
/// unless the map is linear.
fn circle_extrema(map: &SmoothCircleMap) -> (f64, f64, f64) {
    let (min_d, max_ratio) = (0..SCAN_POINTS)
        .into_par_iter()
        .map(|i| {
            let d = map.derivs((i as f64 + 0.5) / SCAN_POINTS as f64);
            (d[1].abs(), (d[2] / (d[1] * d[1])).abs())
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let safety = if map.perturbation().is_zero() { 1.0 } else { SAFETY };
    (safety / min_d, max_ratio * safety, safety)
}

pub fn compute_w11_constants(map: &SmoothCircleMap) -> Result<LyConstants> {
    let (alpha, s, safety) = circle_extrema(map);
    if alpha >= 1.0 {
        return Err(Error::NoUniformLy(format!("max 1/|T'| = {alpha} >= 1")));
    }
    let big_b = (s + 1.0) / (1.0 - alpha);
    Ok(LyConstants {
        norm_pair: NormPair::W11L1,
        alpha,
        big_b,
        n_step: 1,
        amplitude: 1.0,
        iterated_b: big_b,
        one_step_lambda: alpha,
        one_step_b: s,
        sup_iterate_bound: None,
        min_cell: None,
        safety_factor: safety,
    })
}

/// A cell of the partition of `T^N` with its branch itinerary.
#[derive(Debug, Clone)]
struct ComposedCell {
    lo: f64,
    hi: f64,
    itinerary: Vec<usize>,
}

/// `(T^N(x), (T^N)'(x), (T^N)''(x))` along a fixed itinerary.
fn compose(map: &PiecewiseExpandingMap, itinerary: &[usize], x: f64) -> (f64, f64, f64) {
    let (mut v, mut d1, mut d2) = (x, 1.0, 0.0);
    for &b in itinerary {
        let f = map.branch_derivs(b, v);
        d2 = f[2] * d1 * d1 + f[1] * d2;
        d1 *= f[1];
        v = f[0];
    }
    (v, d1, d2)
}

fn refine(map: &PiecewiseExpandingMap, cells: &[ComposedCell]) -> Result<Vec<ComposedCell>> {
    let inner = &map.breakpoints()[1..map.branch_count()];
    let mut out = Vec::new();
    for c in cells {
        let a = compose(map, &c.itinerary, c.lo).0;
        let b = compose(map, &c.itinerary, c.hi).0;
        let (ilo, ihi) = (a.min(b), a.max(b));
        let mut xs = vec![c.lo];
        for &d in inner.iter().filter(|&&d| d > ilo && d < ihi) {
            let x = solve_monotone(
                |x| {
                    let (v, d1, _) = compose(map, &c.itinerary, x);
                    (v, d1)
                },
                d,
                c.lo,
                c.hi,
            )
            .ok_or(Error::BranchInverse {
                branch: *c.itinerary.last().unwrap(),
                target: d,
            })?;
            xs.push(x);
        }
        xs.push(c.hi);
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let mid_image = compose(map, &c.itinerary, 0.5 * (w[0] + w[1])).0;
            let next = map.branch_of(mid_image.clamp(0.0, 1.0 - f64::EPSILON))?;
            let mut itinerary = c.itinerary.clone();
            itinerary.push(next);
            out.push(ComposedCell {
                lo: w[0],
                hi: w[1],
                itinerary,
            });
        }
    }
    Ok(out)
}

/// `(inf |(T^N)'|, sup |(T^N)''/(T^N)'²|)` by scanning each cell.
fn composed_extrema(map: &PiecewiseExpandingMap, cells: &[ComposedCell]) -> (f64, f64) {
    cells
        .par_iter()
        .map(|c| {
            let pts = ((SCAN_POINTS as f64) * (c.hi - c.lo)).ceil() as usize;
            scan_grid(c.lo, c.hi, pts.max(64))
                .chain([c.lo, c.hi])
                .map(|x| {
                    let (_, d1, d2) = compose(map, &c.itinerary, x);
                    (d1.abs(), (d2 / (d1 * d1)).abs())
                })
                .fold((f64::INFINITY, 0.0f64), |a, b| (a.0.min(b.0), a.1.max(b.1)))
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// BV constants, iterating the map until `2/inf|(T^N)'| < 1` (at most six steps).
/// The cell length in the additive constant is that of the partition of `T^N`.
pub fn compute_bv_constants(map: &PiecewiseExpandingMap) -> Result<LyConstants> {
    let exact = map.branches().iter().all(|b| b.perturbation.is_zero());
    let safety = if exact { 1.0 } else { SAFETY };
    let mut cells: Vec<ComposedCell> = (0..map.branch_count())
        .map(|b| {
            let (lo, hi) = map.domain(b);
            ComposedCell {
                lo,
                hi,
                itinerary: vec![b],
            }
        })
        .collect();
    let mut one_step: Option<(f64, f64)> = None;
    for n in 1..=MAX_STEPS {
        if n > 1 {
            cells = refine(map, &cells)?;
        }
        let (floor, ratio) = composed_extrema(map, &cells);
        let floor = floor / safety;
        if n == 1 && floor <= 1.0 {
            return Err(Error::NoUniformLy(format!("slope floor {floor} <= 1")));
        }
        let lambda = 2.0 / floor;
        let min_cell = cells.iter().map(|c| c.hi - c.lo).fold(f64::INFINITY, f64::min);
        let b_var = ratio * safety + 2.0 / min_cell;
        let (lambda1, b1) = *one_step.get_or_insert((lambda, b_var));
        if lambda < 1.0 {
            let rho = lambda.powf(1.0 / n as f64);
            let amplitude = (0..n as i32).map(|q| (lambda1 / rho).powi(q)).fold(1.0, f64::max);
            let partial = (0..n as i32)
                .map(|q| (b1 + 1.0) * (0..q).map(|j| lambda1.powi(j)).sum::<f64>())
                .fold(0.0, f64::max);
            let iterated_b = (b_var + 1.0) / (1.0 - lambda) + partial;
            return Ok(LyConstants {
                norm_pair: NormPair::BvL1,
                alpha: lambda,
                big_b: b_var,
                n_step: n,
                amplitude,
                iterated_b,
                one_step_lambda: lambda1,
                one_step_b: b1,
                sup_iterate_bound: None,
                min_cell: Some(min_cell),
                safety_factor: safety,
            });
        }
    }
    Err(Error::NoUniformLy(format!(
        "2/inf|(T^n)'| >= 1 for every n <= {MAX_STEPS}"
    )))
}

/// `sup |(T^q)''/((T^q)')²|` for a circle map, scanning along orbits.
fn circle_iterate_ratio(map: &SmoothCircleMap, q: u32, points: usize) -> f64 {
    (0..points)
        .into_par_iter()
        .map(|i| {
            let (mut x, mut d1, mut d2) = ((i as f64 + 0.5) / points as f64, 1.0, 0.0);
            for _ in 0..q {
                let f = map.derivs(x);
                d2 = f[2] * d1 * d1 + f[1] * d2;
                d1 *= f[1];
                x = wrap01(f[0]);
            }
            (d2 / (d1 * d1)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Lipschitz-sup constants with empirically measured `M = max_n ‖Lⁿ1‖_∞`.
///
/// With `n₁` the first iterate where `α^{n₁} M < 1` and `λ = α^{n₁} M`, the
/// inequality checked is `‖L^{m n₁ + q} f‖_l ≤ λ^m M ‖f‖_l + B M ‖f‖_∞`.
pub fn compute_lip_constants(ctx: &TransferContext, horizon: usize) -> Result<LyConstants> {
    let map = ctx
        .map()
        .as_circle()
        .ok_or(Error::Unsupported("Lipschitz Lasota-Yorke constants"))?;
    let w = compute_w11_constants(map)?;
    let alpha = w.alpha;
    let mut f = GridDensity::constant(ctx.n(), ctx.topology(), 1.0);
    let mut m = 1.0f64;
    for _ in 0..horizon {
        f = ctx.apply(&f)?;
        m = m.max(f.sup_norm());
    }
    let m = m * w.safety_factor;
    let mut n1 = 1;
    while alpha.powi(n1 as i32) * m >= 1.0 {
        n1 += 1;
        if n1 > 64 {
            return Err(Error::NoUniformLy("α^n M stays above 1".into()));
        }
    }
    let lambda = alpha.powi(n1 as i32) * m;
    let points = SCAN_POINTS / 10;
    let ratios: Vec<f64> = (1..=n1)
        .map(|q| circle_iterate_ratio(map, q, points) * w.safety_factor)
        .collect();
    let k_max = ratios.iter().copied().fold(0.0, f64::max);
    let k_n1 = ratios[n1 as usize - 1];
    let b = k_max + m * (k_n1 + 1.0) / (1.0 - lambda);
    Ok(LyConstants {
        norm_pair: NormPair::LipSup,
        alpha: lambda,
        big_b: b,
        n_step: n1,
        amplitude: m,
        iterated_b: b * m,
        one_step_lambda: alpha,
        one_step_b: ratios[0],
        sup_iterate_bound: Some(m),
        min_cell: None,
        safety_factor: w.safety_factor,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed_stream: u64,
    pub worst_slack: f64,
    pub worst_n: usize,
    pub strong_initial: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub norm_pair: NormPair,
    pub trials: usize,
    pub n_max: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Smallest `rhs − lhs` over all trials and iterates.
    pub worst_slack: f64,
    /// Worst slack divided by the initial strong norm.
    pub worst_relative_slack: f64,
    /// Iterates whose slack fell below `−1e-6·strong(f)`.
    pub violations: usize,
    pub records: Vec<TrialRecord>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub const SLACK_TOL: f64 = 1e-6;

/// Checks `strong(Lⁿf) ≤ A·ρⁿ·strong(f) + B_it·weak(f)` for `n ≤ n_max` on
/// random probes: smooth densities on a grid of `resolution` nodes for W11 and
/// Lip, step densities on an Ulam partition of `resolution` cells for BV.
pub fn verify_ly(
    map: &MapSpec,
    constants: &LyConstants,
    trials: usize,
    n_max: usize,
    resolution: usize,
    seed: u64,
) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let records = match constants.norm_pair {
        NormPair::W11L1 | NormPair::LipSup => {
            let ctx = TransferContext::new(map.clone(), resolution)?;
            (0..trials)
                .map(|t| smooth_trial(&ctx, constants, t, n_max, seed))
                .collect::<Result<Vec<_>>>()?
        }
        NormPair::BvL1 => {
            let op = UlamOperator::build(map, resolution)?;
            (0..trials)
                .map(|t| step_trial(&op, constants, t, n_max, seed))
                .collect()
        }
    };
    let worst_slack = records.iter().map(|r| r.worst_slack).fold(f64::INFINITY, f64::min);
    let worst_relative_slack = records
        .iter()
        .map(|r| r.worst_slack / r.strong_initial)
        .fold(f64::INFINITY, f64::min);
    let violations = records
        .iter()
        .filter(|r| r.worst_slack < -SLACK_TOL * r.strong_initial)
        .count();
    Ok(VerifyReport {
        norm_pair: constants.norm_pair,
        trials,
        n_max,
        resolution,
        seed,
        worst_slack,
        worst_relative_slack,
        violations,
        records,
    })
}

type NormFn = fn(&GridDensity) -> f64;

fn smooth_trial(ctx: &TransferContext, c: &LyConstants, trial: usize, n_max: usize, seed: u64) -> Result<TrialRecord> {
    let mut r = rng::stream(seed, trial as u64);
    let p = rng::random_trig_density(&mut r, 4);
    let f0 = GridDensity::from_fn(ctx.n(), Topology::Circle, |x| p.value(x));
    let (strong, weak): (NormFn, NormFn) = match c.norm_pair {
        NormPair::LipSup => (GridDensity::lip_norm, GridDensity::sup_norm),
        _ => (GridDensity::w11_norm, GridDensity::l1_norm),
    };
    let s0 = strong(&f0);
    let w0 = weak(&f0);
    let mut f = f0;
    let mut worst = (f64::INFINITY, 0);
    for n in 1..=n_max {
        f = ctx.apply(&f)?;
        let rhs = match c.norm_pair {
            NormPair::LipSup => {
                let m = (n / c.n_step as usize) as i32;
                c.alpha.powi(m) * c.amplitude * s0 + c.iterated_b * w0
            }
            _ => c.amplitude * c.rate().powi(n as i32) * s0 + c.iterated_b * w0,
        };
        let slack = rhs - strong(&f);
        if slack < worst.0 {
            worst = (slack, n);
        }
    }
    Ok(TrialRecord {
        trial,
        seed_stream: trial as u64,
        worst_slack: worst.0,
        worst_n: worst.1,
        strong_initial: s0,
    })
}

fn step_trial(op: &UlamOperator, c: &LyConstants, trial: usize, n_max: usize, seed: u64) -> TrialRecord {
    let mut r = rng::stream(seed, trial as u64);
    let mut phi = rng::random_step_levels(&mut r, op.k(), 8);
    let bv = |v: &[f64]| {
        v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() + v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    };
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let s0 = bv(&phi);
    let w0 = l1(&phi);
    let mut worst = (f64::INFINITY, 0);
    for n in 1..=n_max {
        phi = op.step(&phi);
        let rhs = c.amplitude * c.rate().powi(n as i32) * s0 + c.iterated_b * w0;
        let slack = rhs - bv(&phi);
        if slack < worst.0 {
            worst = (slack, n);
        }
    }
    TrialRecord {
        trial,
        seed_stream: trial as u64,
        worst_slack: worst.0,
        worst_n: worst.1,
        strong_initial: s0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{Branch, KellerParams};
    use std::f64::consts::PI;

    #[test]
    fn linear_circle_maps() {
        let c = compute_w11_constants(&SmoothCircleMap::doubling()).unwrap();
        assert_eq!((c.alpha, c.big_b), (0.5, 2.0));
        let c = compute_w11_constants(&SmoothCircleMap::linear(3)).unwrap();
        assert!((c.alpha - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.big_b - 1.5).abs() < 1e-14);
    }

    #[test]
    fn quartic_sine_against_scan_oracle() {
        let c = compute_w11_constants(&SmoothCircleMap::quartic_sine()).unwrap();
        let alpha = 1.0 / (4.0 - 0.08 * PI);
        assert!((c.alpha / alpha - 1.0).abs() < 1.5e-3);
        assert!(c.alpha >= alpha);
        // Independent scan of 0.64π² |sin(8πx)| / T'(x)².
        let n = 200_000;
        let s = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                let t1 = 4.0 + 0.08 * PI * (8.0 * PI * x).cos();
                0.64 * PI * PI * (8.0 * PI * x).sin().abs() / (t1 * t1)
            })
            .fold(0.0, f64::max);
        assert!((c.one_step_b / s - 1.0).abs() < 2e-3);
    }

    #[test]
    fn slope_three_maps() {
        // Two branches of length 1/2 cannot carry slope 3 inside [0,1].
        let halves = PiecewiseExpandingMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Branch::affine(3.0, 0.0), Branch::affine(-3.0, 3.0)],
        );
        assert!(halves.is_err());
        let three = PiecewiseExpandingMap::new(
            vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            vec![
                Branch::affine(3.0, 0.0),
                Branch::affine(-3.0, 2.0),
                Branch::affine(3.0, -2.0),
            ],
        )
        .unwrap();
        let c = compute_bv_constants(&three).unwrap();
        assert_eq!(c.n_step, 1);
        assert!((c.alpha - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.big_b - 6.0).abs() < 1e-12);
    }

    #[test]
    fn slow_tent_needs_two_steps() {
        let m = PiecewiseExpandingMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Branch::affine(1.8, 0.05), Branch::affine(-1.8, 1.85)],
        )
        .unwrap();
        let c = compute_bv_constants(&m).unwrap();
        assert_eq!(c.n_step, 2);
        assert!((c.alpha - 2.0 / (1.8 * 1.8)).abs() < 1e-12);
        assert!((c.one_step_lambda - 2.0 / 1.8).abs() < 1e-12);
        assert!(c.amplitude >= 1.0);
    }

    #[test]
    fn keller_quarter_needs_two_steps() {
        let m = KellerParams::new(1.0, 0.5, 0.25).unwrap().to_map().unwrap();
        let c = compute_bv_constants(&m).unwrap();
        assert_eq!(c.n_step, 2);
        assert!((c.alpha - 0.5).abs() < 1e-12);
        assert!((c.one_step_lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keller_one_step_case() {
        let p = KellerParams::new(0.6, 0.55, 0.26).unwrap();
        let c = compute_bv_constants(&p.to_map().unwrap()).unwrap();
        assert_eq!(c.n_step, 1);
        let (s1, s2) = p.slopes();
        assert!((c.alpha - 2.0 / s1.min(s2)).abs() < 1e-12);
        assert!(c.alpha < 1.0);
    }

    #[test]
    fn doubling_constant_density_check() {
        let map: MapSpec = SmoothCircleMap::doubling().into();
        let c = compute_w11_constants(map.as_circle().unwrap()).unwrap();
        let r = verify_ly(&map, &c, 3, 10, 256, 5).unwrap();
        assert!(r.passed());
    }
}
