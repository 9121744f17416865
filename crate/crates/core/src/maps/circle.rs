use serde::{Deserialize, Serialize};

use super::piecewise::{Branch, PiecewiseExpandingMap};
use super::roots::{solve_monotone, ROOT_TOL};
use super::{wrap01, Preimage, TrigPoly};
use crate::error::{Error, Result};

const FLOOR_SAMPLES: usize = 10_000;

/// Serialized form: the floor is always recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleMapConfig {
    pub degree: u32,
    #[serde(default)]
    pub perturbation: TrigPoly,
}

/// `x ↦ d·x + p(x) mod 1` with `p` a trigonometric polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircleMapConfig", into = "CircleMapConfig")]
pub struct SmoothCircleMap {
    degree: u32,
    perturbation: TrigPoly,
    expansion_floor: f64,
}

impl TryFrom<CircleMapConfig> for SmoothCircleMap {
    type Error = Error;
    fn try_from(c: CircleMapConfig) -> Result<Self> {
        Self::new(c.degree, c.perturbation)
    }
}

impl From<SmoothCircleMap> for CircleMapConfig {
    fn from(m: SmoothCircleMap) -> Self {
        Self {
            degree: m.degree,
            perturbation: m.perturbation,
        }
    }
}

impl SmoothCircleMap {
    pub fn new(degree: u32, perturbation: TrigPoly) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree {degree} < 2")));
        }
        let d = degree as f64;
        let sampled = (0..FLOOR_SAMPLES)
            .map(|i| d + perturbation.derivs(i as f64 / FLOOR_SAMPLES as f64)[1])
            .fold(f64::INFINITY, f64::min);
        if !(sampled > 1.0) {
            return Err(Error::InvalidMap(format!(
                "min |T'| = {sampled} on samples, not expanding"
            )));
        }
        let margin = perturbation.derivative_bound(2) / (2.0 * FLOOR_SAMPLES as f64);
        let expansion_floor = sampled - margin;
        if !(expansion_floor > 1.0) {
            return Err(Error::InvalidMap(format!(
                "expansion floor {expansion_floor} after margin {margin} is not above 1"
            )));
        }
        Ok(Self {
            degree,
            perturbation,
            expansion_floor,
        })
    }

    pub fn linear(degree: u32) -> Self {
        Self::new(degree, TrigPoly::zero()).expect("linear maps of degree >= 2 are expanding")
    }

    pub fn doubling() -> Self {
        Self::linear(2)
    }

    /// `4x + 0.01 sin(8πx) mod 1`, a slightly nonlinear degree-4 map.
    pub fn quartic_sine() -> Self {
        Self::new(4, TrigPoly::mode(4, 0.0, 0.01)).expect("valid map")
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn perturbation(&self) -> &TrigPoly {
        &self.perturbation
    }

    pub fn expansion_floor(&self) -> f64 {
        self.expansion_floor
    }

    pub fn lift(&self, x: f64) -> f64 {
        self.degree as f64 * x + self.perturbation.value(x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        wrap01(self.lift(x))
    }

    /// `[T(x), T'(x), T''(x), T'''(x)]`.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let p = self.perturbation.derivs(x);
        [
            wrap01(self.degree as f64 * x + p[0]),
            self.degree as f64 + p[1],
            p[2],
            p[3],
        ]
    }

    fn lift_with_slope(&self, y: f64) -> (f64, f64) {
        let p = self.perturbation.derivs(y);
        (self.degree as f64 * y + p[0], self.degree as f64 + p[1])
    }

    pub fn preimages(&self, x: f64) -> Result<Vec<Preimage>> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain { x });
        }
        let d = self.degree as f64;
        let l0 = self.perturbation.value(0.0);
        let m0 = (l0 - x).ceil();
        let linear = self.perturbation.is_zero();
        let mut out = Vec::with_capacity(self.degree as usize);
        for j in 0..self.degree as usize {
            let t = x + m0 + j as f64;
            let y = if linear {
                t / d
            } else {
                solve_monotone(|y| self.lift_with_slope(y), t, 0.0, 1.0)
                    .ok_or(Error::BranchInverse { branch: j, target: x })?
            };
            let y = wrap01(y);
            let dv = self.derivs(y);
            let mut r = (dv[0] - x).abs();
            r = r.min(1.0 - r);
            if r > ROOT_TOL {
                return Err(Error::BranchInverse { branch: j, target: x });
            }
            out.push(Preimage {
                y,
                deriv: dv[1],
                second: dv[2],
                branch: j,
            });
        }
        out.sort_by(|a, b| a.y.total_cmp(&b.y));
        Ok(out)
    }

    /// Cuts the circle at `0` and at the preimages of `0`, giving an interval map.
    pub fn to_piecewise(&self) -> Result<PiecewiseExpandingMap> {
        let l0 = self.perturbation.value(0.0);
        let mut cuts = vec![0.0];
        let first = l0.floor() as i64 + 1;
        for m in first..first + self.degree as i64 {
            let t = m as f64;
            if t <= l0 || t >= l0 + self.degree as f64 {
                continue;
            }
            let y = solve_monotone(|y| self.lift_with_slope(y), t, 0.0, 1.0).ok_or(Error::BranchInverse {
                branch: cuts.len(),
                target: 0.0,
            })?;
            if y > 0.0 && y < 1.0 {
                cuts.push(y);
            }
        }
        cuts.push(1.0);
        let branches = cuts
            .windows(2)
            .map(|w| {
                let level = self.lift(0.5 * (w[0] + w[1])).floor();
                Branch {
                    slope: self.degree as f64,
                    intercept: -level,
                    perturbation: self.perturbation.clone(),
                }
            })
            .collect();
        PiecewiseExpandingMap::new(cuts, branches)
    }
}
