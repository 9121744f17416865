//! Pointwise transfer operator `Lf(x) = Σ_{T(y)=x} f(y)/|T'(y)|` on a grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{node, GridDensity, Topology};
use crate::error::{Error, Result};
use crate::maps::{MapSpec, Preimage};

/// A map with the preimages of every grid node cached.
#[derive(Debug, Clone)]
pub struct TransferContext {
    map: MapSpec,
    topology: Topology,
    preimages: Vec<Vec<Preimage>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedDensity {
    pub density: GridDensity,
    pub iterations: usize,
    /// `‖Lh − h‖₁` at exit.
    pub increment: f64,
}

impl TransferContext {
    pub fn new(map: MapSpec, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid size {n} too small")));
        }
        let topology = map.topology();
        let preimages = (0..n)
            .into_par_iter()
            .map(|i| map.preimages(node(topology, n, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            map,
            topology,
            preimages,
        })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn n(&self) -> usize {
        self.preimages.len()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn preimages(&self, i: usize) -> &[Preimage] {
        &self.preimages[i]
    }

    pub fn node(&self, i: usize) -> f64 {
        node(self.topology, self.n(), i)
    }

    fn check(&self, f: &GridDensity) -> Result<()> {
        if f.len() != self.n() || f.topology() != self.topology {
            return Err(Error::GridMismatch {
                expected: format!("{:?}/{}", self.topology, self.n()),
                got: format!("{:?}/{}", f.topology(), f.len()),
            });
        }
        Ok(())
    }

    /// Sums `term(preimage)` over the preimages of every node.
    fn gather(&self, term: impl Fn(&Preimage) -> f64 + Sync) -> GridDensity {
        let values = self.preimages.par_iter().map(|ps| ps.iter().map(&term).sum()).collect();
        GridDensity::new(values, self.topology).expect("grid has at least two nodes")
    }

    /// `Lf` with `f` linearly interpolated at the preimages.
    pub fn apply(&self, f: &GridDensity) -> Result<GridDensity> {
        self.check(f)?;
        Ok(self.gather(|p| f.eval_at(p.y) / p.abs_deriv()))
    }

    /// `Lf` for `f` given as a function, sampled exactly at the preimages.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64 + Sync) -> GridDensity {
        self.gather(|p| f(p.y) / p.abs_deriv())
    }

    pub fn apply_n(&self, f: &GridDensity, steps: usize) -> Result<GridDensity> {
        let mut g = f.clone();
        for _ in 0..steps {
            g = self.apply(&g)?;
        }
        Ok(g)
    }

    /// `(Lf)' = L(f'/T') − L(f T''/T'²)`. Uses central differences when `df` is absent.
    pub fn apply_derivative(&self, f: &GridDensity, df: Option<&GridDensity>) -> Result<GridDensity> {
        if !matches!(self.map, MapSpec::Circle(_)) {
            return Err(Error::Unsupported("the derivative transfer formula"));
        }
        self.check(f)?;
        let owned;
        let df = match df {
            Some(d) => {
                self.check(d)?;
                d
            }
            None => {
                owned = f.derivative();
                &owned
            }
        };
        Ok(self.gather(|p| {
            let t1 = p.deriv;
            (df.eval_at(p.y) / t1 - f.eval_at(p.y) * p.second / (t1 * t1)) / t1.abs()
        }))
    }

    /// `|∫ g·Lf − ∫ (g∘T)·f|` by grid quadrature.
    pub fn duality_residual(&self, f: &GridDensity, g: &GridDensity) -> Result<f64> {
        self.check(g)?;
        let lf = self.apply(f)?;
        let lhs = g.dot(&lf)?;
        let rhs: f64 = (0..self.n())
            .into_par_iter()
            .map(|i| g.eval_at(self.map.step(self.node(i))) * f.values()[i])
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / self.n() as f64;
        Ok((lhs - rhs).abs())
    }

    /// Iterates `h ↦ Lh` from `h ≡ 1`, renormalizing the integral each step,
    /// until `‖Lh − h‖₁ < tol`.
    pub fn fixed_density(&self, tol: f64, max_iter: usize) -> Result<FixedDensity> {
        let mut h = GridDensity::constant(self.n(), self.topology, 1.0);
        let mut increment = f64::INFINITY;
        for it in 1..=max_iter {
            let lh = self.apply(&h)?;
            let lh = lh.scale(1.0 / lh.integral());
            increment = lh.sub(&h)?.l1_norm();
            h = lh;
            if increment < tol {
                return Ok(FixedDensity {
                    density: h,
                    iterations: it,
                    increment,
                });
            }
        }
        Err(Error::NoConvergence {
            what: "transfer fixed point",
            iterations: max_iter,
            residual: increment,
        })
    }
}
