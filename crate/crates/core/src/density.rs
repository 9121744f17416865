//! Densities sampled on uniform grids and the norms used throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::maps::wrap01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Nodes at `i/n`, periodic.
    Circle,
    /// Nodes at cell midpoints `(i + 1/2)/n`.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    values: Vec<f64>,
    topology: Topology,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l1: f64,
    pub w11: f64,
    pub sup: f64,
    pub variation: f64,
    pub lip: f64,
}

impl GridDensity {
    pub fn new(values: Vec<f64>, topology: Topology) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid of size {} too small",
                values.len()
            )));
        }
        Ok(Self { values, topology })
    }

    pub fn from_fn(n: usize, topology: Topology, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(node(topology, n, i))).collect();
        Self { values, topology }
    }

    pub fn constant(n: usize, topology: Topology, c: f64) -> Self {
        Self {
            values: vec![c; n],
            topology,
        }
    }

    /// Step density with jumps at `cuts` (snapped to grid lines) and the
    /// given `levels` on the pieces. Returns the largest snap distance.
    pub fn step(n: usize, topology: Topology, cuts: &[f64], levels: &[f64]) -> Result<(Self, f64)> {
        if levels.len() != cuts.len() + 1 {
            return Err(Error::InvalidArgument("need one more level than cuts".into()));
        }
        if cuts.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("cuts must be sorted".into()));
        }
        let mut snap = 0.0f64;
        let snapped: Vec<f64> = cuts
            .iter()
            .map(|&c| {
                let s = (c * n as f64).round() / n as f64;
                snap = snap.max((s - c).abs());
                s
            })
            .collect();
        let d = Self::from_fn(n, topology, |x| levels[snapped.partition_point(|&c| c <= x)]);
        Ok((d, snap))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> f64 {
        node(self.topology, self.values.len(), i)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.topology != other.topology {
            return Err(Error::GridMismatch {
                expected: format!("{:?}/{}", self.topology, self.len()),
                got: format!("{:?}/{}", other.topology, other.len()),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            topology: self.topology,
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            topology: self.topology,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Quadrature with uniform weight `1/n`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// `∫ self · other`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / self.len() as f64)
    }

    /// Linear interpolation; periodic on the circle, flat beyond the end
    /// midpoints on the interval.
    pub fn eval_at(&self, y: f64) -> f64 {
        let n = self.len();
        match self.topology {
            Topology::Circle => {
                let t = wrap01(y) * n as f64;
                let i = (t.floor() as usize).min(n - 1);
                let frac = t - i as f64;
                (1.0 - frac) * self.values[i] + frac * self.values[(i + 1) % n]
            }
            Topology::Interval => {
                let t = y * n as f64 - 0.5;
                if t <= 0.0 {
                    return self.values[0];
                }
                if t >= (n - 1) as f64 {
                    return self.values[n - 1];
                }
                let i = t.floor() as usize;
                let frac = t - i as f64;
                (1.0 - frac) * self.values[i] + frac * self.values[i + 1]
            }
        }
    }

    /// Central differences (periodic on the circle, one-sided at interval ends).
    pub fn derivative(&self) -> Self {
        let n = self.len();
        let v = &self.values;
        let h = 1.0 / n as f64;
        let values = match self.topology {
            Topology::Circle => (0..n)
                .map(|i| (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * h))
                .collect(),
            Topology::Interval => (0..n)
                .map(|i| match i {
                    0 => (v[1] - v[0]) / h,
                    _ if i == n - 1 => (v[n - 1] - v[n - 2]) / h,
                    _ => (v[i + 1] - v[i - 1]) / (2.0 * h),
                })
                .collect(),
        };
        Self {
            values,
            topology: self.topology,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn w11_norm(&self) -> f64 {
        self.l1_norm() + self.derivative().l1_norm()
    }

    /// `‖f'‖_∞ + ‖f‖_∞`.
    pub fn lip_norm(&self) -> f64 {
        self.derivative().sup_norm() + self.sup_norm()
    }

    /// Total variation of the samples; the circle variant closes the loop.
    pub fn bv_variation(&self) -> f64 {
        let v = &self.values;
        let open: f64 = v.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        match self.topology {
            Topology::Interval => open,
            Topology::Circle => open + (v[0] - v[v.len() - 1]).abs(),
        }
    }

    pub fn bv_norm(&self) -> f64 {
        self.bv_variation() + self.l1_norm()
    }

    pub fn norms(&self) -> NormReport {
        let d = self.derivative();
        let l1 = self.l1_norm();
        let sup = self.sup_norm();
        NormReport {
            l1,
            w11: l1 + d.l1_norm(),
            sup,
            variation: self.bv_variation(),
            lip: d.sup_norm() + sup,
        }
    }

    pub fn zero_average_project(&self) -> Self {
        let m = self.integral();
        self.map(|v| v - m)
    }

    /// Averages over the `k` equal cells `[j/k, (j+1)/k)`; `n` must be a multiple of `k`.
    pub fn cell_averages(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "grid size {n} is not a multiple of {k}"
            )));
        }
        let m = n / k;
        let v = &self.values;
        Ok((0..k)
            .map(|j| {
                let cell = j * m..(j + 1) * m;
                match self.topology {
                    Topology::Interval => cell.map(|i| v[i]).sum::<f64>() / m as f64,
                    // Trapezoid rule on the piecewise-linear interpolant.
                    Topology::Circle => cell.map(|i| 0.5 * (v[i] + v[(i + 1) % n])).sum::<f64>() / m as f64,
                }
            })
            .collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_columns(
            path,
            &["x", "value"],
            self.nodes().zip(&self.values).map(|(x, &v)| vec![x, v]),
        )
    }

    pub fn read_csv(path: &Path, topology: Topology) -> Result<Self> {
        let rows = io::read_columns(path)?;
        let values = rows
            .into_iter()
            .map(|r| {
                r.get(1)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument("missing value column".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, topology)
    }
}

pub fn node(topology: Topology, n: usize, i: usize) -> f64 {
    match topology {
        Topology::Circle => i as f64 / n as f64,
        Topology::Interval => (i as f64 + 0.5) / n as f64,
    }
}
