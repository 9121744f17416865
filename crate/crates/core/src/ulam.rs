//! Ulam discretization `P_ij = m(T⁻¹(I_j) ∩ I_i)/m(I_i)` on `k` equal cells.
//!
//! Rows are source cells and densities evolve as `vᵀ ↦ vᵀP`.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{GridDensity, Topology};
use crate::error::{Error, Result};
use crate::io;
use crate::lyverify::LyConstants;
use crate::maps::MapSpec;

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 100_000;

/// A maximal interval of points in source cell `source` that land in target
/// cell `target` through one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece {
    pub source: usize,
    pub target: usize,
    pub length: f64,
    pub midpoint: f64,
}

/// Splits `[0,1)` into pieces along which the map moves cell `source` into cell `target`.
pub fn transition_pieces(map: &MapSpec, k: usize) -> Result<Vec<Piece>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("partition size {k} < 2")));
    }
    let pw = map.to_piecewise()?;
    let kf = k as f64;
    let mut pieces = Vec::new();
    for b in 0..pw.branch_count() {
        let (ylo, yhi) = pw.image(b);
        // Split values: image ends plus every grid line strictly inside.
        let mut cuts = vec![ylo];
        let first = (ylo * kf).floor() as usize + 1;
        let last = (yhi * kf).ceil() as usize;
        for j in first..last {
            let v = j as f64 / kf;
            if v > ylo && v < yhi {
                cuts.push(v);
            }
        }
        cuts.push(yhi);
        let inverses = cuts
            .par_iter()
            .map(|&v| pw.branch_inverse(b, v))
            .collect::<Result<Vec<_>>>()?;
        for s in 0..cuts.len() - 1 {
            let target = ((0.5 * (cuts[s] + cuts[s + 1]) * kf).floor() as usize).min(k - 1);
            let (u0, u1) = {
                let (a, c) = (inverses[s], inverses[s + 1]);
                if a <= c {
                    (a, c)
                } else {
                    (c, a)
                }
            };
            if u1 <= u0 {
                continue;
            }
            let i0 = ((u0 * kf).floor() as usize).min(k - 1);
            let i1 = ((u1 * kf).ceil() as usize).clamp(i0 + 1, k);
            for i in i0..i1 {
                let lo = u0.max(i as f64 / kf);
                let hi = u1.min((i + 1) as f64 / kf);
                if hi > lo {
                    pieces.push(Piece {
                        source: i,
                        target,
                        length: hi - lo,
                        midpoint: 0.5 * (lo + hi),
                    });
                }
            }
        }
    }
    Ok(pieces)
}

#[derive(Debug, Clone)]
pub struct UlamOperator {
    k: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

impl UlamOperator {
    pub fn build(map: &MapSpec, k: usize) -> Result<Self> {
        let pieces = transition_pieces(map, k)?;
        Ok(Self::from_pieces(k, &pieces))
    }

    pub fn from_pieces(k: usize, pieces: &[Piece]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for p in pieces {
            rows[p.source].push((p.target, p.length * k as f64));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((i, v));
            }
        }
        Self { k, rows, cols }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mesh(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    /// `vᵀP`. Works for masses and for density levels alike (equal cells).
    pub fn step(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.k, "vector length must equal the partition size");
        self.cols
            .par_iter()
            .map(|col| col.iter().map(|&(i, p)| v[i] * p).sum())
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let triplets = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| vec![i as f64, j as f64, v]));
        io::write_columns(path, &["i", "j", "value"], triplets)
    }
}

/// Per-cell masses of a measure on the `k`-cell partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellVector {
    pub masses: Vec<f64>,
}

impl CellVector {
    pub fn uniform(k: usize) -> Self {
        Self {
            masses: vec![1.0 / k as f64; k],
        }
    }

    pub fn from_levels(levels: &[f64]) -> Self {
        let k = levels.len() as f64;
        Self {
            masses: levels.iter().map(|l| l / k).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.masses.len()
    }

    /// Density levels `mass·k`.
    pub fn levels(&self) -> Vec<f64> {
        let k = self.k() as f64;
        self.masses.iter().map(|m| m * k).collect()
    }

    pub fn to_density(&self) -> GridDensity {
        GridDensity::new(self.levels(), Topology::Interval).expect("partition has at least two cells")
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `∫ |h − g|` against a function `g` that is constant on each cell.
    pub fn l1_distance_cellwise(&self, g: impl Fn(usize) -> f64) -> f64 {
        let k = self.k() as f64;
        self.levels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l - g(i)).abs())
            .sum::<f64>()
            / k
    }

    /// Mass of the closed window `[a, b]`, counting partial cells proportionally.
    pub fn window_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let k = self.k() as f64;
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let lo = (i as f64 / k).max(a);
                let hi = ((i + 1) as f64 / k).min(b);
                if hi > lo {
                    m * (hi - lo) * k
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let k = self.k() as f64;
        io::write_columns(
            path,
            &["x", "mass", "level"],
            self.masses
                .iter()
                .enumerate()
                .map(|(i, &m)| vec![(i as f64 + 0.5) / k, m, m * k]),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantVector {
    pub vector: CellVector,
    pub iterations: usize,
    pub residual: f64,
    /// Geometric mean of recent residual ratios; a by-product estimate of the
    /// second eigenvalue modulus.
    pub rate_estimate: f64,
    /// Set when oscillation forced the switch to averaged iterates.
    pub cesaro: bool,
}

/// Left fixed vector by power iteration with L¹ normalization.
///
/// When the residual stops shrinking (period-2 pattern or a plateau) the
/// iteration switches to the averaged step `v ↦ (v + vP)/2`, which has the
/// same fixed vectors and no periodic part.
pub fn invariant_vector(op: &UlamOperator) -> Result<InvariantVector> {
    let k = op.k();
    let mut v = CellVector::uniform(k).masses;
    let mut prev: Option<Vec<f64>> = None;
    let mut residuals: Vec<f64> = Vec::new();
    let mut cesaro = false;
    for it in 1..=POWER_MAX_ITER {
        let mut w = op.step(&v);
        if cesaro {
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = 0.5 * (*wi + vi);
            }
        }
        let total: f64 = w.iter().map(|x| x.abs()).sum();
        w.iter_mut().for_each(|x| *x /= total);
        let res: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        residuals.push(res);
        if res < POWER_TOL {
            return Ok(InvariantVector {
                vector: CellVector { masses: w },
                iterations: it,
                residual: res,
                rate_estimate: rate_from(&residuals),
                cesaro,
            });
        }
        if !cesaro && it >= 20 {
            let two_step = prev
                .as_ref()
                .map(|p| w.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .unwrap_or(f64::INFINITY);
            let oscillating = two_step < 1e-3 * res;
            let plateau = it >= 2000 && res > 0.5 * residuals[it - 1001];
            if oscillating || plateau {
                cesaro = true;
            }
        }
        prev = Some(std::mem::replace(&mut v, w));
    }
    Err(Error::NoConvergence {
        what: "Ulam power iteration",
        iterations: POWER_MAX_ITER,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

fn rate_from(residuals: &[f64]) -> f64 {
    let usable: Vec<f64> = residuals.iter().copied().filter(|r| *r > 0.0).collect();
    let m = usable.len().min(11);
    if m < 2 {
        return 0.0;
    }
    let tail = &usable[usable.len() - m..];
    (tail[m - 1] / tail[0]).powf(1.0 / (m - 1) as f64)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UlamDefect {
    pub k: usize,
    pub defect: f64,
    pub bv_norm: f64,
    /// `defect / (δ·‖f‖_BV)`.
    pub ratio: f64,
}

/// `‖Lf − L_δ f‖₁` with `Lf` represented by the Ulam operator on the grid of
/// `f` itself (cell averages of `Lf` at the fine resolution).
pub fn ulam_defect_with(fine: &UlamOperator, coarse: &UlamOperator, f: &GridDensity) -> Result<UlamDefect> {
    let n = fine.k();
    let k = coarse.k();
    if f.len() != n || !n.is_multiple_of(k) {
        return Err(Error::InvalidArgument(format!(
            "grid {} must match the fine partition {n}, a multiple of {k}",
            f.len()
        )));
    }
    let lf = fine.step(&f.cell_averages(n)?);
    let ld = coarse.step(&f.cell_averages(k)?);
    let m = n / k;
    let defect = lf.iter().enumerate().map(|(i, v)| (v - ld[i / m]).abs()).sum::<f64>() / n as f64;
    let bv_norm = f.bv_norm();
    Ok(UlamDefect {
        k,
        defect,
        bv_norm,
        ratio: defect * k as f64 / bv_norm,
    })
}

pub fn ulam_defect(map: &MapSpec, f: &GridDensity, k: usize) -> Result<UlamDefect> {
    let fine = UlamOperator::build(map, f.len())?;
    let coarse = UlamOperator::build(map, k)?;
    ulam_defect_with(&fine, &coarse, f)
}

#[derive(Debug, Clone, Serialize)]
pub struct LyCheck {
    pub lambda: f64,
    pub b: f64,
    pub margins: Vec<f64>,
    pub worst_margin: f64,
}

fn variation(levels: &[f64]) -> f64 {
    levels.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn l1(levels: &[f64]) -> f64 {
    levels.iter().map(|v| v.abs()).sum::<f64>() / levels.len() as f64
}

/// Checks `‖L_δφ‖_BV ≤ λ‖φ‖_BV + B‖φ‖₁` on step densities given as cell levels,
/// with the one-step constants of `constants`.
pub fn ulam_ly_check(op: &UlamOperator, constants: &LyConstants, phis: &[Vec<f64>]) -> LyCheck {
    let lambda = constants.one_step_lambda;
    let b = constants.one_step_bv_b();
    let margins: Vec<f64> = phis
        .par_iter()
        .map(|phi| {
            let lp = op.step(phi);
            let lhs = variation(&lp) + l1(&lp);
            let rhs = lambda * (variation(phi) + l1(phi)) + b * l1(phi);
            rhs - lhs
        })
        .collect();
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    LyCheck {
        lambda,
        b,
        margins,
        worst_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{KellerParams, SmoothCircleMap};

    fn doubling() -> MapSpec {
        SmoothCircleMap::doubling().into()
    }

    #[test]
    fn doubling_k2() {
        let p = UlamOperator::build(&doubling(), 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.entry(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn doubling_k4() {
        let p = UlamOperator::build(&doubling(), 4).unwrap();
        let expected = [
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                assert!((p.entry(i, j) - e).abs() < 1e-15, "P[{i}][{j}]");
            }
        }
        let inv = invariant_vector(&p).unwrap();
        for m in inv.vector.masses {
            assert!((m - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn keller_matrix_is_stochastic_and_symmetric() {
        let m: MapSpec = KellerParams::new(1.0, 0.5, 0.25).unwrap().to_map().unwrap().into();
        let k = 8;
        let p = UlamOperator::build(&m, k).unwrap();
        for s in p.row_sums() {
            assert!((s - 1.0).abs() < 1e-10);
        }
        for i in 0..k {
            for j in 0..k {
                assert!((p.entry(i, j) - p.entry(k - 1 - i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oscillating_chain_uses_cesaro() {
        // Cell 0 feeds cells 1 and 2, which both feed cell 0: period 2.
        let pieces = [
            Piece {
                source: 0,
                target: 1,
                length: 1.0 / 6.0,
                midpoint: 0.0,
            },
            Piece {
                source: 0,
                target: 2,
                length: 1.0 / 6.0,
                midpoint: 0.0,
            },
            Piece {
                source: 1,
                target: 0,
                length: 1.0 / 3.0,
                midpoint: 0.0,
            },
            Piece {
                source: 2,
                target: 0,
                length: 1.0 / 3.0,
                midpoint: 0.0,
            },
        ];
        let op = UlamOperator::from_pieces(3, &pieces);
        let inv = invariant_vector(&op).unwrap();
        assert!(inv.cesaro);
        let expected = [0.5, 0.25, 0.25];
        for (m, e) in inv.vector.masses.iter().zip(expected) {
            assert!((m - e).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_density_has_no_defect() {
        let f = GridDensity::constant(256, Topology::Circle, 1.0);
        let d = ulam_defect(&doubling(), &f, 16).unwrap();
        assert!(d.defect < 1e-10);
    }

    #[test]
    fn cell_vector_window_mass() {
        let v = CellVector::uniform(8);
        assert!((v.window_mass(0.25, 0.75) - 0.5).abs() < 1e-15);
        assert!((v.window_mass(0.3, 0.4) - 0.1).abs() < 1e-15);
        assert_eq!(v.window_mass(0.5, 0.5), 0.0);
    }
}
