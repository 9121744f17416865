use serde::{Deserialize, Serialize};

use super::roots::{solve_monotone, ROOT_TOL};
use super::{Preimage, TrigPoly};
use crate::error::{Error, Result};

const CHECK_SAMPLES: usize = 257;
const IMAGE_SLACK: f64 = 1e-12;

/// One branch `x ↦ intercept + slope·x + p(x)` on its cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub slope: f64,
    pub intercept: f64,
    #[serde(default)]
    pub perturbation: TrigPoly,
}

impl Branch {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self {
            slope,
            intercept,
            perturbation: TrigPoly::zero(),
        }
    }

    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let p = self.perturbation.derivs(x);
        [self.intercept + self.slope * x + p[0], self.slope + p[1], p[2], p[3]]
    }

    fn value_slope(&self, x: f64) -> (f64, f64) {
        let d = self.derivs(x);
        (d[0], d[1])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseConfig {
    pub breakpoints: Vec<f64>,
    pub branches: Vec<Branch>,
}

/// Interval map on `[0,1)` with half-open cells `[d_i, d_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseConfig", into = "PiecewiseConfig")]
pub struct PiecewiseExpandingMap {
    breakpoints: Vec<f64>,
    branches: Vec<Branch>,
    increasing: Vec<bool>,
    /// Values at the left and right cell ends.
    end_values: Vec<(f64, f64)>,
}

impl TryFrom<PiecewiseConfig> for PiecewiseExpandingMap {
    type Error = Error;
    fn try_from(c: PiecewiseConfig) -> Result<Self> {
        Self::new(c.breakpoints, c.branches)
    }
}

impl From<PiecewiseExpandingMap> for PiecewiseConfig {
    fn from(m: PiecewiseExpandingMap) -> Self {
        Self {
            breakpoints: m.breakpoints,
            branches: m.branches,
        }
    }
}

impl PiecewiseExpandingMap {
    pub fn new(breakpoints: Vec<f64>, branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() || breakpoints.len() != branches.len() + 1 {
            return Err(Error::InvalidMap(format!(
                "{} breakpoints for {} branches",
                breakpoints.len(),
                branches.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::InvalidMap("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMap("breakpoints must be strictly increasing".into()));
        }
        let mut increasing = Vec::with_capacity(branches.len());
        let mut end_values = Vec::with_capacity(branches.len());
        for (i, br) in branches.iter().enumerate() {
            let (lo, hi) = (breakpoints[i], breakpoints[i + 1]);
            let mut sign = 0.0;
            for s in 0..CHECK_SAMPLES {
                let x = lo + (hi - lo) * s as f64 / (CHECK_SAMPLES - 1) as f64;
                let d = br.derivs(x);
                if !(d[1].abs() > 1.0) {
                    return Err(Error::InvalidMap(format!(
                        "branch {i}: |T'({x})| = {} <= 1",
                        d[1].abs()
                    )));
                }
                if sign == 0.0 {
                    sign = d[1].signum();
                } else if d[1].signum() != sign {
                    return Err(Error::InvalidMap(format!("branch {i} is not monotone")));
                }
                if d[0] < -IMAGE_SLACK || d[0] > 1.0 + IMAGE_SLACK {
                    return Err(Error::InvalidMap(format!("branch {i}: T({x}) = {} leaves [0,1]", d[0])));
                }
            }
            increasing.push(sign > 0.0);
            end_values.push((br.derivs(lo)[0], br.derivs(hi)[0]));
        }
        Ok(Self {
            breakpoints,
            branches,
            increasing,
            end_values,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn is_increasing(&self, branch: usize) -> bool {
        self.increasing[branch]
    }

    pub fn domain(&self, branch: usize) -> (f64, f64) {
        (self.breakpoints[branch], self.breakpoints[branch + 1])
    }

    /// Closed image interval `[min, max]` of a branch.
    pub fn image(&self, branch: usize) -> (f64, f64) {
        let (a, b) = self.end_values[branch];
        (a.min(b), a.max(b))
    }

    pub fn branch_of(&self, x: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain { x });
        }
        let n = self.branches.len();
        Ok(self.breakpoints[1..n].partition_point(|&b| b <= x))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.derivs(x)?[0])
    }

    pub fn derivs(&self, x: f64) -> Result<[f64; 4]> {
        let i = self.branch_of(x)?;
        let mut d = self.branches[i].derivs(x);
        d[0] = d[0].clamp(0.0, 1.0);
        Ok(d)
    }

    /// Derivatives of a branch formula at any point of its closed cell.
    pub fn branch_derivs(&self, branch: usize, x: f64) -> [f64; 4] {
        self.branches[branch].derivs(x)
    }

    /// Inverse of one branch at a value inside its closed image.
    pub fn branch_inverse(&self, branch: usize, v: f64) -> Result<f64> {
        let (lo, hi) = self.domain(branch);
        let br = &self.branches[branch];
        let y = if br.perturbation.is_zero() {
            ((v - br.intercept) / br.slope).clamp(lo, hi)
        } else {
            solve_monotone(|y| br.value_slope(y), v, lo, hi).ok_or(Error::BranchInverse { branch, target: v })?
        };
        Ok(y)
    }

    pub fn preimages(&self, x: f64) -> Result<Vec<Preimage>> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain { x });
        }
        let mut out = Vec::new();
        for i in 0..self.branches.len() {
            // The image of [lo, hi) is [T(lo), T(hi)) or (T(hi), T(lo)].
            let (a, b) = self.end_values[i];
            let hit = if self.increasing[i] {
                a <= x && x < b
            } else {
                b < x && x <= a
            };
            if !hit {
                continue;
            }
            let y = self.branch_inverse(i, x)?;
            let d = self.branches[i].derivs(y);
            if (d[0] - x).abs() > ROOT_TOL {
                return Err(Error::BranchInverse { branch: i, target: x });
            }
            out.push(Preimage {
                y,
                deriv: d[1],
                second: d[2],
                branch: i,
            });
        }
        out.sort_by(|a, b| a.y.total_cmp(&b.y));
        Ok(out)
    }

    pub fn with_perturbation(&self, extra: &TrigPoly) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| Branch {
                slope: b.slope,
                intercept: b.intercept,
                perturbation: b.perturbation.plus(extra),
            })
            .collect();
        Self::new(self.breakpoints.clone(), branches)
    }
}

/// Parameters of the four-branch symmetric family `W_{a,b,r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KellerParams {
    pub a: f64,
    pub b: f64,
    pub r: f64,
}

impl KellerParams {
    pub fn new(a: f64, b: f64, r: f64) -> Result<Self> {
        let p = Self { a, b, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { a, b, r } = *self;
        if !(r > 0.0 && r < 0.5) {
            return Err(Error::InvalidMap(format!("r = {r} outside (0, 1/2)")));
        }
        if !(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidMap(format!("a = {a}, b = {b} must lie in (0, 1]")));
        }
        let (outer, inner) = self.slopes();
        if !(outer > 1.0 && inner > 1.0) {
            return Err(Error::InvalidMap(format!("slopes {outer}, {inner} not both above 1")));
        }
        Ok(())
    }

    /// `(a/r, 2b/(1−2r))`.
    pub fn slopes(&self) -> (f64, f64) {
        (self.a / self.r, 2.0 * self.b / (1.0 - 2.0 * self.r))
    }

    pub fn to_map(&self) -> Result<PiecewiseExpandingMap> {
        self.validate()?;
        let Self { a, r, .. } = *self;
        let (outer, inner) = self.slopes();
        PiecewiseExpandingMap::new(
            vec![0.0, r, 0.5, 1.0 - r, 1.0],
            vec![
                Branch::affine(-outer, a),
                Branch::affine(inner, -inner * r),
                Branch::affine(-inner, inner * (1.0 - r)),
                Branch::affine(outer, a - outer),
            ],
        )
    }
}
