use serde::{Deserialize, Serialize};

use super::{MapSpec, SmoothCircleMap, TrigPoly};
use crate::error::{Error, Result};

/// `T_δ = T₀ + δ·ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub base: MapSpec,
    pub direction: TrigPoly,
}

impl PerturbationFamily {
    pub fn new(base: MapSpec, direction: TrigPoly) -> Self {
        Self { base, direction }
    }

    /// Family with the default direction `sin(2πx)/(2π)`.
    pub fn with_default_direction(base: MapSpec) -> Self {
        Self::new(base, TrigPoly::normalized_sine(1))
    }

    pub fn map_at(&self, delta: f64) -> Result<MapSpec> {
        if delta == 0.0 {
            return Ok(self.base.clone());
        }
        let extra = self.direction.scaled(delta);
        match &self.base {
            MapSpec::Circle(m) => {
                let p = m.perturbation().plus(&extra);
                Ok(SmoothCircleMap::new(m.degree(), p)?.into())
            }
            MapSpec::Piecewise(m) => Ok(m.with_perturbation(&extra)?.into()),
        }
    }

    /// `K` with `‖T_δ − T₀‖_{C²} ≤ K·δ`.
    pub fn c2_bound(&self) -> f64 {
        self.direction.c2_bound()
    }
}

/// Fiber map `G(x, y) = α·y + offset + x_slope·x + wave(x)` on `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberMap {
    pub alpha: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub x_slope: f64,
    #[serde(default)]
    pub wave: TrigPoly,
}

impl FiberMap {
    pub fn contraction(alpha: f64) -> Self {
        Self {
            alpha,
            offset: 0.0,
            x_slope: 0.0,
            wave: TrigPoly::zero(),
        }
    }

    pub fn shift(&self, x: f64) -> f64 {
        self.offset + self.x_slope * x + self.wave.value(x)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.alpha * y + self.shift(x)
    }

    pub fn dgdx_bound(&self) -> f64 {
        self.x_slope.abs() + self.wave.derivative_bound(1)
    }
}

/// Skew product `F(x, y) = (T(x), G(x, y))` on circle × `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolenoidMap {
    pub base: SmoothCircleMap,
    pub fiber: FiberMap,
}

impl SolenoidMap {
    pub fn new(base: SmoothCircleMap, fiber: FiberMap) -> Result<Self> {
        if !(fiber.alpha > 0.0 && fiber.alpha < 1.0) {
            return Err(Error::InvalidMap(format!(
                "fiber contraction {} not in (0,1)",
                fiber.alpha
            )));
        }
        for i in 0..=1024 {
            let x = i as f64 / 1024.0;
            for y in [0.0, 1.0] {
                let g = fiber.eval(x, y);
                if !(-1e-12..=1.0 + 1e-12).contains(&g) {
                    return Err(Error::InvalidMap(format!("G({x}, {y}) = {g} leaves [0,1]")));
                }
            }
        }
        Ok(Self { base, fiber })
    }

    pub fn alpha(&self) -> f64 {
        self.fiber.alpha
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        (self.base.eval(x), self.fiber.eval(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::KellerParams;

    #[test]
    fn zero_delta_is_base() {
        let f = PerturbationFamily::with_default_direction(SmoothCircleMap::quartic_sine().into());
        assert_eq!(f.map_at(0.0).unwrap(), f.base);
    }

    #[test]
    fn difference_quotient_recovers_direction() {
        let f = PerturbationFamily::with_default_direction(SmoothCircleMap::quartic_sine().into());
        let base = f.base.as_circle().unwrap().clone();
        for delta in [1e-2, 1e-3, 1e-4] {
            let m = f.map_at(delta).unwrap();
            let t = m.as_circle().unwrap();
            let worst = (0..500)
                .map(|i| {
                    let x = i as f64 / 500.0;
                    ((t.lift(x) - base.lift(x)) / delta - f.direction.value(x)).abs()
                })
                .fold(0.0, f64::max);
            assert!(worst < 1e-9);
        }
    }

    #[test]
    fn piecewise_family_validates() {
        let base = KellerParams::new(1.0, 0.5, 0.24).unwrap().to_map().unwrap();
        let f = PerturbationFamily::new(base.into(), TrigPoly::mode(1, 0.01, 0.0));
        assert!(f.map_at(0.1).is_err());
    }

    #[test]
    fn fiber_contraction_on_grid() {
        let g = FiberMap {
            alpha: 1.0 / 3.0,
            offset: 0.0,
            x_slope: 0.1,
            wave: TrigPoly::zero(),
        };
        let s = SolenoidMap::new(SmoothCircleMap::doubling(), g).unwrap();
        for i in 0..50 {
            let x = i as f64 / 50.0;
            for j in 0..20 {
                for l in 0..20 {
                    let (y1, y2) = (j as f64 / 19.0, l as f64 / 19.0);
                    let gap = (s.fiber.eval(x, y1) - s.fiber.eval(x, y2)).abs();
                    assert!(gap <= s.alpha() * (y1 - y2).abs() + 1e-15);
                }
            }
        }
        assert!(SolenoidMap::new(SmoothCircleMap::doubling(), FiberMap::contraction(1.2)).is_err());
    }
}
