use std::f64::consts::TAU;

use transop::density::{GridDensity, Topology};
use transop::lyverify::compute_bv_constants;
use transop::maps::{KellerParams, MapSpec, SmoothCircleMap};
use transop::rng;
use transop::transfer::TransferContext;
use transop::ulam::{invariant_vector, ulam_defect, ulam_defect_with, ulam_ly_check, UlamOperator};

fn quartic() -> MapSpec {
    SmoothCircleMap::quartic_sine().into()
}

fn keller() -> MapSpec {
    KellerParams::new(1.0, 0.5, 0.24).unwrap().to_map().unwrap().into()
}

#[test]
fn ulam_agrees_with_transfer_iteration() {
    let k = 1 << 14;
    let ulam = invariant_vector(&UlamOperator::build(&quartic(), k).unwrap())
        .unwrap()
        .vector;
    let ctx = TransferContext::new(quartic(), 4096).unwrap();
    let h = ctx.fixed_density(1e-13, 10_000).unwrap().density;
    let levels = ulam.levels();
    let worst = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l - h.eval_at((i as f64 + 0.5) / k as f64)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "{worst}");
    // Linearizing the invariance equation gives h ≈ 1 − 0.08π cos(8πx)/4 to
    // first order, so the deviation from 1 is close to 0.063.
    let dev = levels.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
    assert!((dev - 0.08 * std::f64::consts::PI / 4.0).abs() < 0.01, "{dev}");
}

#[test]
fn smooth_defect_halves_with_the_partition() {
    let map = quartic();
    let f = GridDensity::from_fn(4096, Topology::Circle, |x| 1.0 + 0.5 * (TAU * x).cos());
    let fine = UlamOperator::build(&map, 4096).unwrap();
    let d256 = ulam_defect_with(&fine, &UlamOperator::build(&map, 256).unwrap(), &f).unwrap();
    let d512 = ulam_defect_with(&fine, &UlamOperator::build(&map, 512).unwrap(), &f).unwrap();
    let ratio = d256.defect / d512.defect;
    assert!((ratio - 2.0).abs() <= 0.5, "{ratio}");
}

#[test]
fn step_defect_constant_is_stable() {
    let (f, _) = GridDensity::step(4096, Topology::Interval, &[0.3], &[2.0, 0.5]).unwrap();
    let cs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&k| ulam_defect(&keller(), &f, k).unwrap().ratio)
        .collect();
    let (lo, hi) = cs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(lo > 0.0 && hi / lo <= 2.0, "{cs:?}");
}

fn random_steps(seed: u64, k: usize) -> Vec<Vec<f64>> {
    (0..50)
        .map(|i| rng::random_step_levels(&mut rng::stream(seed, i), k, 8))
        .collect()
}

#[test]
fn discretized_ly_holds_on_keller() {
    let map = keller();
    let MapSpec::Piecewise(pw) = &map else { unreachable!() };
    let c = compute_bv_constants(pw).unwrap();
    let check = ulam_ly_check(&UlamOperator::build(&map, 512).unwrap(), &c, &random_steps(3, 512));
    assert!(check.worst_margin >= 0.0, "{}", check.worst_margin);
}

#[test]
fn discretized_ly_holds_on_quartic_as_piecewise() {
    let map = quartic();
    let c = compute_bv_constants(&map.to_piecewise().unwrap()).unwrap();
    let check = ulam_ly_check(&UlamOperator::build(&map, 512).unwrap(), &c, &random_steps(4, 512));
    assert!(check.worst_margin >= 0.0, "{}", check.worst_margin);
}

#[test]
fn constant_step_is_trivial() {
    // Doubling preserves Lebesgue, so L1 = 1 and the left side is exactly 1.
    let map: MapSpec = SmoothCircleMap::doubling().into();
    let c = compute_bv_constants(&map.to_piecewise().unwrap()).unwrap();
    let check = ulam_ly_check(&UlamOperator::build(&map, 64).unwrap(), &c, &[vec![1.0; 64]]);
    assert!((check.margins[0] - (check.lambda + check.b - 1.0)).abs() < 1e-12);
}
