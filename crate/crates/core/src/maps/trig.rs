use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// One Fourier mode `cos·cos(2πkx) + sin·sin(2πkx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial on the circle with exact derivatives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn mode(k: u32, cos: f64, sin: f64) -> Self {
        Self {
            constant: 0.0,
            modes: vec![Mode { k, cos, sin }],
        }
    }

    /// `sin(2πkx)/(2πk)`, the default perturbation direction for `k = 1`.
    pub fn normalized_sine(k: u32) -> Self {
        Self::mode(k, 0.0, 1.0 / (TAU * k as f64))
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            constant: self.constant * s,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    k: m.k,
                    cos: m.cos * s,
                    sin: m.sin * s,
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        Self {
            constant: self.constant + other.constant,
            modes,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.modes.iter().fold(self.constant, |acc, m| {
            let (s, c) = (TAU * m.k as f64 * x).sin_cos();
            acc + m.cos * c + m.sin * s
        })
    }

    /// Value and first three derivatives.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let mut out = [self.constant, 0.0, 0.0, 0.0];
        for m in &self.modes {
            let w = TAU * m.k as f64;
            let (s, c) = (w * x).sin_cos();
            let f0 = m.cos * c + m.sin * s;
            let f1 = w * (m.sin * c - m.cos * s);
            out[0] += f0;
            out[1] += f1;
            out[2] -= w * w * f0;
            out[3] -= w * w * f1;
        }
        out
    }

    /// Upper bound on `sup |p^(order)|` from the coefficients.
    pub fn derivative_bound(&self, order: u32) -> f64 {
        let modes: f64 = self
            .modes
            .iter()
            .map(|m| (TAU * m.k as f64).powi(order as i32) * (m.cos.abs() + m.sin.abs()))
            .sum();
        if order == 0 {
            modes + self.constant.abs()
        } else {
            modes
        }
    }

    /// Bound on the C² norm `sup|p| + sup|p'| + sup|p''|`.
    pub fn c2_bound(&self) -> f64 {
        (0..=2).map(|o| self.derivative_bound(o)).sum()
    }
}
