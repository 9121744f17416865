use transop::density::{GridDensity, Topology};
use transop::maps::{MapSpec, SmoothCircleMap};
use transop::stats::{correlation_integrals, equilibrium_decay, mixing_defect, CorrelationMode, FitStatus, WeakNorm};
use transop::transfer::TransferContext;

fn quartic_ctx() -> (TransferContext, GridDensity) {
    let map: MapSpec = SmoothCircleMap::quartic_sine().into();
    let ctx = TransferContext::new(map, 4096).unwrap();
    let h = ctx.fixed_density(1e-13, 10_000).unwrap().density;
    (ctx, h)
}

fn indicator(n: usize, a: f64, b: f64) -> GridDensity {
    GridDensity::from_fn(n, Topology::Circle, |x| f64::from(u8::from(a <= x && x < b)))
}

#[test]
fn invariant_correlations_follow_the_decay_envelope() {
    let (ctx, h) = quartic_ctx();
    let g = indicator(ctx.n(), 0.0, 1.0 / 3.0);
    let series = correlation_integrals(&ctx, &g, &g, 20, CorrelationMode::Invariant, Some(&h)).unwrap();
    let decay = equilibrium_decay(&ctx, &g.mul(&h).unwrap(), 20, WeakNorm::L1, true, Some(&h)).unwrap();
    assert_eq!(decay.status, FitStatus::Fitted);
    let (c, rho) = (decay.fitted_prefactor.unwrap(), decay.fitted_rate.unwrap());
    for (n, s) in series.iter().enumerate().skip(1) {
        assert!(s.abs() <= c * rho.powi(n as i32) + 1e-13, "n = {n}: {s:e}");
    }
}

#[test]
fn sine_correlations_vanish_after_one_step() {
    // The perturbation has period 1/4, so the four preimages of x are
    // translates by 1/4 with equal slopes and L kills sin(2πx) exactly.
    // In invariant mode the probe is sin·h, which is not killed.
    let (ctx, h) = quartic_ctx();
    let g = GridDensity::from_fn(ctx.n(), Topology::Circle, |x| (std::f64::consts::TAU * x).sin());
    let series = correlation_integrals(&ctx, &g, &g, 20, CorrelationMode::Lebesgue, Some(&h)).unwrap();
    assert!((series[0] - 0.5).abs() < 1e-3, "{}", series[0]);
    assert!(series[1..].iter().all(|s| s.abs() < 1e-12), "{series:?}");
}

#[test]
fn indicator_pairs_mix() {
    let (ctx, h) = quartic_ctx();
    for (e, f) in [
        ((0.0, 0.3), (0.5, 0.9)),
        ((0.1, 0.2), (0.1, 0.2)),
        ((0.6, 1.0), (0.0, 0.45)),
    ] {
        let d = mixing_defect(&ctx, &h, e, f, 30).unwrap();
        assert!(d[30] < 0.02, "{e:?} {f:?}: {}", d[30]);
    }
}
