//! Map families: smooth expanding circle maps, piecewise expanding interval
//! maps (including the `W_{a,b,r}` family), perturbation families and the
//! solenoid skew product.

mod circle;
mod family;
mod piecewise;
pub mod roots;
mod trig;

pub use circle::{CircleMapConfig, SmoothCircleMap};
pub use family::{FiberMap, PerturbationFamily, SolenoidMap};
pub use piecewise::{Branch, KellerParams, PiecewiseConfig, PiecewiseExpandingMap};
pub use trig::{Mode, TrigPoly};

use serde::{Deserialize, Serialize};

use crate::density::Topology;
use crate::error::Result;

/// Reduces `x` into `[0, 1)`. Every circle coordinate goes through here.
#[inline]
pub fn wrap01(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// A preimage `y` of some point together with `T'(y)` and `T''(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub y: f64,
    pub deriv: f64,
    pub second: f64,
    pub branch: usize,
}

impl Preimage {
    pub fn abs_deriv(&self) -> f64 {
        self.deriv.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Circle(SmoothCircleMap),
    Piecewise(PiecewiseExpandingMap),
}

impl From<SmoothCircleMap> for MapSpec {
    fn from(m: SmoothCircleMap) -> Self {
        Self::Circle(m)
    }
}

impl From<PiecewiseExpandingMap> for MapSpec {
    fn from(m: PiecewiseExpandingMap) -> Self {
        Self::Piecewise(m)
    }
}

impl MapSpec {
    pub fn topology(&self) -> Topology {
        match self {
            Self::Circle(_) => Topology::Circle,
            Self::Piecewise(_) => Topology::Interval,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            Self::Circle(m) => {
                if !(0.0..1.0).contains(&x) {
                    return Err(crate::Error::Domain { x });
                }
                Ok(m.eval(x))
            }
            Self::Piecewise(m) => m.eval(x),
        }
    }

    /// `[T, T', T'', T''']` at `x`; `order` truncates the returned slice.
    pub fn derivs(&self, x: f64, order: usize) -> Result<Vec<f64>> {
        let d = match self {
            Self::Circle(m) => {
                if !(0.0..1.0).contains(&x) {
                    return Err(crate::Error::Domain { x });
                }
                m.derivs(x)
            }
            Self::Piecewise(m) => m.derivs(x)?,
        };
        Ok(d[..=order.min(3)].to_vec())
    }

    pub fn preimages(&self, x: f64) -> Result<Vec<Preimage>> {
        match self {
            Self::Circle(m) => m.preimages(x),
            Self::Piecewise(m) => m.preimages(x),
        }
    }

    /// Interval-map view: circle maps are cut at the preimages of 0.
    pub fn to_piecewise(&self) -> Result<PiecewiseExpandingMap> {
        match self {
            Self::Circle(m) => m.to_piecewise(),
            Self::Piecewise(m) => Ok(m.clone()),
        }
    }

    pub fn as_circle(&self) -> Option<&SmoothCircleMap> {
        match self {
            Self::Circle(m) => Some(m),
            Self::Piecewise(_) => None,
        }
    }

    /// Forward image with the `T(x) = 1` edge case folded back into `[0,1)`.
    pub fn step(&self, x: f64) -> f64 {
        match self {
            Self::Circle(m) => m.eval(x),
            Self::Piecewise(m) => {
                let y = m.eval(x.clamp(0.0, ONE_MINUS)).unwrap_or(0.0);
                y.min(ONE_MINUS)
            }
        }
    }
}

const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;
