//! Skew product `F(x, y) = (T(x), G(x, y))` over an expanding circle map with
//! a contracting fiber `[0,1]`, acting on measures stored leaf by leaf.
//!
//! A measure is kept on `k` base cells; the leaf of cell `i` is the restricted
//! measure `μ|_γ` (already weighted by the marginal), a signed combination of
//! atoms in the fiber.

mod w10;

pub use w10::{w10_grid_search, w10_norm_points, w10_optimizer};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::SolenoidMap;
use crate::stats::DecaySeries;
use crate::ulam::{transition_pieces, Piece};

pub const MERGE_TOL: f64 = 1e-9;
pub const DROP_TOL: f64 = 1e-14;
pub const MAX_ATOMS: usize = 10_000;
pub const BIN_WIDTH: f64 = 1.0 / 1_048_576.0;
const CONTRACTION_SLACK: f64 = 1e-9;
const ALL_PAIRS_LIMIT: usize = 64;

/// Signed atomic measure on the fiber.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LeafJson", into = "LeafJson")]
pub struct DiscreteLeafMeasure {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafJson {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<LeafJson> for DiscreteLeafMeasure {
    type Error = Error;
    fn try_from(j: LeafJson) -> Result<Self> {
        Self::new(j.support, j.weights)
    }
}

impl From<DiscreteLeafMeasure> for LeafJson {
    fn from(m: DiscreteLeafMeasure) -> Self {
        Self {
            support: m.support,
            weights: m.weights,
        }
    }
}

impl DiscreteLeafMeasure {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidArgument("support and weights differ in length".into()));
        }
        if support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "leaf support must be strictly increasing".into(),
            ));
        }
        if weights.iter().chain(&support).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite leaf atom".into()));
        }
        Ok(Self { support, weights })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(y: f64, w: f64) -> Self {
        Self {
            support: vec![y],
            weights: vec![w],
        }
    }

    /// Sorts and merges exactly coincident positions.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Self::zero();
        for (y, w) in atoms {
            match out.support.last() {
                Some(&last) if last == y => *out.weights.last_mut().unwrap() += w,
                _ => {
                    out.support.push(y);
                    out.weights.push(w);
                }
            }
        }
        out
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            support: self.support.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Exact sum, merging only identical positions.
    pub fn plus(&self, other: &Self) -> Self {
        Self::from_atoms(self.atoms().chain(other.atoms()).collect())
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    pub fn w10_norm(&self) -> f64 {
        w10_norm_points(&self.support, &self.weights)
    }

    /// Merges atoms within `1e-9` of a cluster's leftmost atom onto it, drops
    /// negligible weights, and bins to at most `MAX_ATOMS` atoms.
    pub fn pruned(&self) -> Self {
        let mut out = Self::zero();
        let mut start = f64::NEG_INFINITY;
        for (y, w) in self.atoms() {
            if y - start < MERGE_TOL {
                *out.weights.last_mut().unwrap() += w;
            } else {
                start = y;
                out.support.push(y);
                out.weights.push(w);
            }
        }
        out.drop_small();
        let mut width = BIN_WIDTH;
        while out.len() > MAX_ATOMS {
            out = out.binned(width);
            width *= 2.0;
        }
        out
    }

    fn drop_small(&mut self) {
        let keep: Vec<bool> = self.weights.iter().map(|w| w.abs() >= DROP_TOL).collect();
        let mut it = keep.iter();
        self.support.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.weights.retain(|_| *it.next().unwrap());
    }

    /// Collapses atoms onto bin centers; total mass is preserved.
    fn binned(&self, width: f64) -> Self {
        let atoms = self
            .atoms()
            .map(|(y, w)| (((y / width).floor() + 0.5) * width, w))
            .collect();
        let mut out = Self::from_atoms(atoms);
        out.drop_small();
        out
    }
}

/// `F*m` for the fiber map `y ↦ alpha·y + shift`, checking the contraction on
/// the support (all pairs up to 64 atoms, adjacent pairs beyond).
pub fn push_leaf(fiber: impl Fn(f64) -> f64, alpha: f64, m: &DiscreteLeafMeasure) -> Result<DiscreteLeafMeasure> {
    let images: Vec<f64> = m.support.iter().map(|&y| fiber(y)).collect();
    let check = |i: usize, j: usize| {
        let dy = (m.support[j] - m.support[i]).abs();
        let dg = (images[j] - images[i]).abs();
        if dg > (alpha + CONTRACTION_SLACK) * dy {
            Err(Error::Contraction { alpha, ratio: dg / dy })
        } else {
            Ok(())
        }
    };
    let n = m.len();
    if n <= ALL_PAIRS_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                check(i, j)?;
            }
        }
    } else {
        for i in 1..n {
            check(i - 1, i)?;
        }
    }
    let atoms = images.into_iter().zip(m.weights.iter().copied()).collect();
    let mut out = DiscreteLeafMeasure::from_atoms(atoms);
    out.drop_small();
    Ok(out)
}

/// Measure on `k` base cells with one leaf per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct SolenoidMeasure {
    leaves: Vec<DiscreteLeafMeasure>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    base_cells: usize,
    marginal: Vec<f64>,
    leaves: Vec<DiscreteLeafMeasure>,
}

impl TryFrom<MeasureJson> for SolenoidMeasure {
    type Error = Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        if j.leaves.len() != j.base_cells || j.marginal.len() != j.base_cells {
            return Err(Error::InvalidArgument(
                "leaf or marginal count differs from base_cells".into(),
            ));
        }
        let m = Self::new(j.leaves)?;
        for (a, b) in m.marginal().iter().zip(&j.marginal) {
            if (a - b).abs() > 1e-8 * (1.0 + a.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "marginal {b} differs from leaf mass {a}"
                )));
            }
        }
        Ok(m)
    }
}

impl From<SolenoidMeasure> for MeasureJson {
    fn from(m: SolenoidMeasure) -> Self {
        Self {
            base_cells: m.k(),
            marginal: m.marginal(),
            leaves: m.leaves,
        }
    }
}

impl SolenoidMeasure {
    pub fn new(leaves: Vec<DiscreteLeafMeasure>) -> Result<Self> {
        if leaves.len() < 2 {
            return Err(Error::InvalidArgument("need at least two base cells".into()));
        }
        Ok(Self { leaves })
    }

    pub fn zero(k: usize) -> Self {
        Self {
            leaves: vec![DiscreteLeafMeasure::zero(); k],
        }
    }

    /// Lebesgue marginal with a unit atom at `y` on every leaf.
    pub fn uniform_atoms(k: usize, y: f64) -> Self {
        Self {
            leaves: vec![DiscreteLeafMeasure::atom(y, 1.0); k],
        }
    }

    /// Lebesgue marginal with `m` equal atoms at `(j + ½)/m` on every leaf.
    pub fn uniform_grid(k: usize, m: usize) -> Self {
        let support = (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect();
        let leaf = DiscreteLeafMeasure {
            support,
            weights: vec![1.0 / m as f64; m],
        };
        Self { leaves: vec![leaf; k] }
    }

    pub fn k(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[DiscreteLeafMeasure] {
        &self.leaves
    }

    pub fn leaf(&self, i: usize) -> &DiscreteLeafMeasure {
        &self.leaves[i]
    }

    /// `φ_x` per cell: the total mass of each leaf.
    pub fn marginal(&self) -> Vec<f64> {
        self.leaves.iter().map(DiscreteLeafMeasure::total_mass).collect()
    }

    /// `(1/k) Σ` leaf masses.
    pub fn total_mass(&self) -> f64 {
        self.marginal().iter().sum::<f64>() / self.k() as f64
    }

    /// `‖φ_x‖₁`.
    pub fn marginal_l1(&self) -> f64 {
        self.marginal().iter().map(|v| v.abs()).sum::<f64>() / self.k() as f64
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        if self.k() != other.k() {
            return Err(Error::GridMismatch {
                expected: format!("{} cells", self.k()),
                got: format!("{} cells", other.k()),
            });
        }
        Ok(Self {
            leaves: self.leaves.iter().zip(&other.leaves).map(|(a, b)| a.minus(b)).collect(),
        })
    }

    /// `‖μ‖ = (1/k) Σ_cells W₁⁰(μ|_γ)`.
    pub fn one_norm(&self) -> f64 {
        let norms: Vec<f64> = self.leaves.par_iter().map(DiscreteLeafMeasure::w10_norm).collect();
        norms.iter().sum::<f64>() / self.k() as f64
    }

    pub fn max_atoms(&self) -> usize {
        self.leaves.iter().map(DiscreteLeafMeasure::len).max().unwrap_or(0)
    }
}

/// Leafwise transfer operator on `k` base cells.
///
/// Each Ulam piece of the base map carries the source leaf into the target
/// leaf, pushed through `G(x_piece, ·)` at the piece midpoint and weighted by
/// the piece's transition probability, so total mass is preserved exactly.
#[derive(Debug, Clone)]
pub struct SolenoidOperator {
    map: SolenoidMap,
    k: usize,
    /// Pieces grouped by target cell.
    incoming: Vec<Vec<Piece>>,
}

impl SolenoidOperator {
    pub fn new(map: SolenoidMap, k: usize) -> Result<Self> {
        let pieces = transition_pieces(&map.base.clone().into(), k)?;
        let mut incoming = vec![Vec::new(); k];
        for p in pieces {
            incoming[p.target].push(p);
        }
        Ok(Self { map, k, incoming })
    }

    pub fn map(&self) -> &SolenoidMap {
        &self.map
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn apply(&self, mu: &SolenoidMeasure) -> Result<SolenoidMeasure> {
        if mu.k() != self.k {
            return Err(Error::GridMismatch {
                expected: format!("{} cells", self.k),
                got: format!("{} cells", mu.k()),
            });
        }
        let alpha = self.map.alpha();
        let leaves = self
            .incoming
            .par_iter()
            .map(|pieces| {
                let mut atoms = Vec::new();
                for p in pieces {
                    let src = &mu.leaves[p.source];
                    if src.is_empty() {
                        continue;
                    }
                    let shift = self.map.fiber.shift(p.midpoint);
                    let pushed = push_leaf(|y| alpha * y + shift, alpha, src)?;
                    let prob = p.length * self.k as f64;
                    atoms.extend(pushed.atoms().map(|(y, w)| (y, w * prob)));
                }
                Ok(DiscreteLeafMeasure::from_atoms(atoms).pruned())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SolenoidMeasure { leaves })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub decay: DecaySeries,
    /// `α‖μₙ‖ + (α+1)‖φₙ‖₁ − ‖μₙ₊₁‖` per step for the difference `μₙ = Lⁿ(μ₀ − ν₀)`.
    pub step_slack: Vec<f64>,
    pub violations: usize,
    pub max_atoms: usize,
}

/// `‖Lⁿ(μ₀ − ν₀)‖` for `n = 0..=steps`, evolving the two measures separately
/// so that nearby atoms of opposite sign are never merged.
pub fn solenoid_equilibrium(
    op: &SolenoidOperator,
    mu0: &SolenoidMeasure,
    nu0: &SolenoidMeasure,
    steps: usize,
) -> Result<EquilibriumReport> {
    let alpha = op.map().alpha();
    let (mut mu, mut nu) = (mu0.clone(), nu0.clone());
    let mut diff = mu.minus(&nu)?;
    let mut values = vec![diff.one_norm()];
    let mut step_slack = Vec::with_capacity(steps);
    let mut max_atoms = mu.max_atoms().max(nu.max_atoms());
    for _ in 0..steps {
        let bound = alpha * values.last().unwrap() + (alpha + 1.0) * diff.marginal_l1();
        mu = op.apply(&mu)?;
        nu = op.apply(&nu)?;
        max_atoms = max_atoms.max(mu.max_atoms()).max(nu.max_atoms());
        diff = mu.minus(&nu)?;
        let v = diff.one_norm();
        step_slack.push(bound - v);
        values.push(v);
    }
    let violations = step_slack.iter().filter(|&&s| s < -1e-12).count();
    Ok(EquilibriumReport {
        decay: DecaySeries::fit(values),
        step_slack,
        violations,
        max_atoms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceReport {
    /// `‖μₙ₊₁ − μₙ‖` along the iteration.
    pub increments: Vec<f64>,
    /// `‖Lμ_N − μ_N‖` at the end.
    pub invariance_defect: f64,
    pub total_mass: f64,
    #[serde(skip)]
    pub fixed_point: SolenoidMeasure,
}

/// Iterates `L` from `start`, recording successive increments.
pub fn existence_pipeline(op: &SolenoidOperator, start: &SolenoidMeasure, steps: usize) -> Result<ExistenceReport> {
    let mut mu = start.clone();
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = op.apply(&mu)?;
        increments.push(next.minus(&mu)?.one_norm());
        mu = next;
    }
    let invariance_defect = op.apply(&mu)?.minus(&mu)?.one_norm();
    Ok(ExistenceReport {
        increments,
        invariance_defect,
        total_mass: mu.total_mass(),
        fixed_point: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{FiberMap, SmoothCircleMap};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(x_slope: f64, k: usize) -> SolenoidOperator {
        let fiber = FiberMap {
            x_slope,
            ..FiberMap::contraction(1.0 / 3.0)
        };
        let map = SolenoidMap::new(SmoothCircleMap::doubling(), fiber).unwrap();
        SolenoidOperator::new(map, k).unwrap()
    }

    fn random_measure(seed: u64, k: usize, signed: bool) -> SolenoidMeasure {
        let mut r = rng::stream(seed, 0);
        let leaves = (0..k)
            .map(|_| {
                let n = r.gen_range(1..6);
                let atoms = (0..n)
                    .map(|_| {
                        let w: f64 = if signed {
                            r.gen_range(-1.0..1.0)
                        } else {
                            r.gen_range(0.0..1.0)
                        };
                        (r.gen::<f64>(), w)
                    })
                    .collect();
                DiscreteLeafMeasure::from_atoms(atoms)
            })
            .collect();
        SolenoidMeasure::new(leaves).unwrap()
    }

    #[test]
    fn push_under_affine_contraction() {
        let m = DiscreteLeafMeasure::new(vec![0.2, 0.7], vec![1.0, -1.0]).unwrap();
        let p = push_leaf(|y| y / 3.0 + 0.1, 1.0 / 3.0, &m).unwrap();
        assert!((p.support()[0] - (0.2 / 3.0 + 0.1)).abs() < 1e-15);
        assert!((p.support()[1] - (0.7 / 3.0 + 0.1)).abs() < 1e-15);
        assert!((p.w10_norm() - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn push_merges_coincident_images() {
        let m = DiscreteLeafMeasure::new(vec![0.2, 0.7], vec![1.0, -1.0]).unwrap();
        let p = push_leaf(|_| 0.5, 0.5, &m).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.w10_norm(), 0.0);
    }

    #[test]
    fn push_rejects_expansion() {
        let m = DiscreteLeafMeasure::new(vec![0.2, 0.7], vec![1.0, -1.0]).unwrap();
        assert!(matches!(
            push_leaf(|y| 0.9 * y, 0.5, &m),
            Err(Error::Contraction { .. })
        ));
    }

    #[test]
    fn doubling_one_step_collects_both_preimages() {
        let op = model(0.0, 16);
        let mu = SolenoidMeasure::uniform_atoms(16, 0.0);
        let next = op.apply(&mu).unwrap();
        for leaf in next.leaves() {
            assert_eq!(leaf.support(), &[0.0]);
            assert!((leaf.weights()[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_measure_stays_zero() {
        let op = model(0.1, 8);
        let z = op.apply(&SolenoidMeasure::zero(8)).unwrap();
        assert_eq!(z.one_norm(), 0.0);
    }

    #[test]
    fn one_norm_examples() {
        assert!((SolenoidMeasure::uniform_atoms(8, 0.3).one_norm() - 1.0).abs() < 1e-15);
        let a = SolenoidMeasure::uniform_atoms(8, 0.3);
        let b = SolenoidMeasure::uniform_atoms(8, 0.55);
        assert!((a.minus(&b).unwrap().one_norm() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pure_contraction_decays_as_powers_of_three() {
        let op = model(0.0, 8);
        let r = solenoid_equilibrium(
            &op,
            &SolenoidMeasure::uniform_atoms(8, 0.0),
            &SolenoidMeasure::uniform_atoms(8, 1.0),
            20,
        )
        .unwrap();
        for (n, v) in r.decay.values.iter().enumerate() {
            let exact = 3f64.powi(-(n as i32));
            assert!((v / exact - 1.0).abs() < 1e-9, "n = {n}: {v} vs {exact}");
        }
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn existence_increments_shrink() {
        let op = model(0.0, 16);
        let rep = existence_pipeline(&op, &SolenoidMeasure::uniform_grid(16, 4), 30).unwrap();
        assert!(rep.invariance_defect < 1e-4);
        assert!((rep.total_mass - 1.0).abs() < 1e-12);
        for w in rep.increments.windows(2) {
            assert!(w[1] <= w[0] / 2.0 + 1e-15);
        }
    }

    #[test]
    fn pruning_caps_atoms_and_keeps_mass() {
        let n = 3 * MAX_ATOMS;
        let atoms = (0..n).map(|i| (i as f64 / n as f64, 1.0 / n as f64)).collect();
        let m = DiscreteLeafMeasure::from_atoms(atoms).pruned();
        assert!(m.len() <= MAX_ATOMS);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_checks_marginal() {
        let mu = random_measure(3, 4, true);
        let s = serde_json::to_string(&mu).unwrap();
        let back: SolenoidMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mu);
        let bad = s.replacen("\"marginal\":[", "\"marginal\":[9.0,", 1);
        assert!(serde_json::from_str::<SolenoidMeasure>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn transfer_preserves_mass(seed in 0u64..500) {
            let op = model(0.1, 8);
            let mu = random_measure(seed, 8, false);
            let next = op.apply(&mu).unwrap();
            prop_assert!((next.total_mass() - mu.total_mass()).abs() < 1e-12);
        }

        #[test]
        fn weak_norm_is_weakly_contracted(seed in 0u64..500) {
            let op = model(0.1, 8);
            let mu = random_measure(seed, 8, true);
            prop_assert!(op.apply(&mu).unwrap().one_norm() <= mu.one_norm() + 1e-9);
        }

        #[test]
        fn zero_mass_leaves_contract_by_alpha(seed in 0u64..500, shift in 0.0..0.6f64) {
            let mut r = rng::stream(seed, 5);
            let n = r.gen_range(2..8);
            let mut atoms: Vec<(f64, f64)> = (0..n).map(|_| (r.gen::<f64>(), r.gen_range(-1.0..1.0))).collect();
            let mass: f64 = atoms.iter().map(|a| a.1).sum();
            atoms.push((r.gen::<f64>(), -mass));
            let m = DiscreteLeafMeasure::from_atoms(atoms);
            let p = push_leaf(|y| 0.4 * y + shift, 0.4, &m).unwrap();
            prop_assert!(p.w10_norm() <= 0.4 * m.w10_norm() + 1e-12);
        }

        #[test]
        fn norm_is_subadditive(a in 0u64..300, b in 0u64..300) {
            let x = random_measure(a, 2, true).leaf(0).clone();
            let y = random_measure(b + 1000, 2, true).leaf(0).clone();
            prop_assert!(x.plus(&y).w10_norm() <= x.w10_norm() + y.w10_norm() + 1e-12);
        }
    }
}
