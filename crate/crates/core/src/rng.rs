//! Seeded random streams and random probe densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::maps::{Mode, TrigPoly};

/// Independent stream `index` derived from a master seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `1 + Σ_{m ≤ max_mode} (a_m cos + b_m sin)(2πmx)` with `Σ|a_m| + |b_m| ≤ 0.9`,
/// so the result is a positive density of integral one.
pub fn random_trig_density<R: Rng>(rng: &mut R, max_mode: u32) -> TrigPoly {
    let mut modes: Vec<Mode> = (1..=max_mode)
        .map(|k| Mode {
            k,
            cos: rng.gen_range(-1.0..1.0) / k as f64,
            sin: rng.gen_range(-1.0..1.0) / k as f64,
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.cos.abs() + m.sin.abs()).sum();
    let scale = if total > 0.0 { 0.9 / total } else { 0.0 };
    for m in &mut modes {
        m.cos *= scale;
        m.sin *= scale;
    }
    TrigPoly { constant: 1.0, modes }
}

/// Random step levels on `k` cells with at most `max_cuts` jumps.
pub fn random_step_levels<R: Rng>(rng: &mut R, k: usize, max_cuts: usize) -> Vec<f64> {
    let cuts = rng.gen_range(1..=max_cuts);
    let mut at: Vec<usize> = (0..cuts).map(|_| rng.gen_range(1..k)).collect();
    at.sort_unstable();
    let levels: Vec<f64> = (0..=cuts).map(|_| rng.gen_range(-1.0..2.0)).collect();
    (0..k).map(|i| levels[at.partition_point(|&c| c <= i)]).collect()
}
