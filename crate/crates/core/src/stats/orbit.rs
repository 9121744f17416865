use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::maps::{wrap01, MapSpec, SmoothCircleMap, TrigPoly};
use crate::rng;

use super::Observable;

const SCALE: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0; // 2^128

/// Forward orbit of a map.
///
/// Circle maps run on a 128-bit fixed-point state `s = x·2¹²⁸`, advanced by
/// `s ↦ d·s + ⌊p(x)·2¹²⁸⌋ (mod 2¹²⁸)`. Multiplying by an even degree shifts
/// zeros into the low bits; those bits are refilled from a seeded stream,
/// which is the same as drawing further binary digits of a random start.
/// Piecewise maps iterate in `f64`.
pub struct Orbit<'a> {
    kind: OrbitKind<'a>,
}

enum OrbitKind<'a> {
    Fixed {
        degree: u128,
        perturbation: &'a TrigPoly,
        state: u128,
        refill_bits: u32,
        rng: ChaCha8Rng,
    },
    Float {
        map: &'a MapSpec,
        x: f64,
    },
}

impl<'a> Orbit<'a> {
    pub fn new(map: &'a MapSpec, x0: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&x0) {
            return Err(Error::Domain { x: x0 });
        }
        Ok(Self::start(map, (x0 * SCALE) as u128, x0, rng))
    }

    /// Starts from a uniformly random point drawn with all 128 bits.
    pub fn random(map: &'a MapSpec, mut rng: ChaCha8Rng) -> Self {
        let state: u128 = rng.gen();
        let x0 = state as f64 / SCALE;
        Self::start(map, state, wrap01(x0).min(1.0 - f64::EPSILON), rng)
    }

    fn start(map: &'a MapSpec, state: u128, x0: f64, rng: ChaCha8Rng) -> Self {
        let kind = match map {
            MapSpec::Circle(m) => circle_kind(m, state, rng),
            MapSpec::Piecewise(_) => OrbitKind::Float { map, x: x0 },
        };
        Self { kind }
    }

    pub fn current(&self) -> f64 {
        match &self.kind {
            OrbitKind::Fixed { state, .. } => *state as f64 / SCALE,
            OrbitKind::Float { x, .. } => *x,
        }
        .min(1.0 - f64::EPSILON / 2.0)
    }

    pub fn advance(&mut self) {
        let x = self.current();
        match &mut self.kind {
            OrbitKind::Fixed {
                degree,
                perturbation,
                state,
                refill_bits,
                rng,
            } => {
                let p = wrap01(perturbation.value(x));
                let shift = (p * SCALE) as u128;
                let mut s = state.wrapping_mul(*degree).wrapping_add(shift);
                if *refill_bits > 0 {
                    let fresh: u128 = rng.gen::<u128>() >> (128 - *refill_bits);
                    s = (s & !((1u128 << *refill_bits) - 1)) | fresh;
                }
                *state = s;
            }
            OrbitKind::Float { map, x } => *x = map.step(*x),
        }
    }
}

fn circle_kind(m: &SmoothCircleMap, state: u128, rng: ChaCha8Rng) -> OrbitKind<'_> {
    let degree = m.degree() as u128;
    OrbitKind::Fixed {
        degree,
        perturbation: m.perturbation(),
        state,
        refill_bits: degree.trailing_zeros(),
        rng,
    }
}

impl Iterator for Orbit<'_> {
    type Item = f64;

    /// Yields `x_k` and then advances to `x_{k+1}`.
    fn next(&mut self) -> Option<f64> {
        let x = self.current();
        self.advance();
        Some(x)
    }
}

/// `(1/n) Σ_{k<n} f(T^k x₀)`. The refill stream for dyadic circle maps is
/// seeded from the bits of `x₀`.
pub fn birkhoff_average(map: &MapSpec, f: &Observable, x0: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let orbit = Orbit::new(map, x0, rng::stream(x0.to_bits(), 0))?;
    Ok(orbit.take(n).map(|x| f.value(x)).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::KellerParams;

    #[test]
    fn doubling_orbit_does_not_collapse() {
        let map: MapSpec = SmoothCircleMap::doubling().into();
        let xs: Vec<f64> = Orbit::new(&map, 0.3, rng::stream(1, 0)).unwrap().take(2000).collect();
        assert!(xs[1000..].iter().any(|&x| x > 0.1));
        // The first 40 iterates agree with exact doubling of 0.3.
        let mut x = 0.3f64;
        for &y in &xs[..40] {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
            x = (2.0 * x) % 1.0;
        }
    }

    #[test]
    fn doubling_identity_average() {
        let map: MapSpec = SmoothCircleMap::doubling().into();
        let avg = birkhoff_average(&map, &Observable::Identity, 0.1234567, 1_000_000).unwrap();
        assert!((avg - 0.5).abs() < 0.01, "{avg}");
    }

    #[test]
    fn constant_average() {
        let map: MapSpec = SmoothCircleMap::quartic_sine().into();
        let c = Observable::Trig {
            poly: TrigPoly {
                constant: 0.7,
                modes: vec![],
            },
        };
        assert!((birkhoff_average(&map, &c, 0.2, 1000).unwrap() - 0.7).abs() < 1e-13);
    }

    #[test]
    fn odd_degree_is_pure_integer_arithmetic() {
        let map: MapSpec = SmoothCircleMap::linear(3).into();
        let mut o = Orbit::new(&map, 0.25, rng::stream(0, 0)).unwrap();
        o.advance();
        assert!((o.current() - 0.75).abs() < 1e-15);
        o.advance();
        assert!((o.current() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn keller_left_half_mass() {
        let map: MapSpec = KellerParams::new(1.0, 0.5, 0.24).unwrap().to_map().unwrap().into();
        let f = Observable::Indicator { a: 0.0, b: 0.5 };
        let mut total = 0.0;
        for s in 0..100 {
            let mut r = rng::stream(17, s);
            let x0: f64 = r.gen();
            total += birkhoff_average(&map, &f, x0, 100_000).unwrap();
        }
        // Exact invariant density puts 1 − r of the mass on [0, 1/2).
        assert!((total / 100.0 - 0.76).abs() < 0.03, "{}", total / 100.0);
    }
}
