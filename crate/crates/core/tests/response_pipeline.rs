use transop::maps::{MapSpec, PerturbationFamily, SmoothCircleMap, TrigPoly};
use transop::response::{
    keller_experiment, keller_path, linear_response, lipschitz_stability, stability_curve, StabilityOptions,
};

fn quartic() -> MapSpec {
    SmoothCircleMap::quartic_sine().into()
}

#[test]
fn perturbation_size_ratios_stay_bounded() {
    let fam = PerturbationFamily::with_default_direction(quartic());
    let deltas: Vec<f64> = (3..=10).map(|i| 0.5f64.powi(i)).collect();
    let opts = StabilityOptions {
        k: 1 << 14,
        probes: 20,
        probe_grid: 2048,
        seed: 5,
    };
    let c = stability_curve(&fam, &deltas, &opts).unwrap();
    assert_eq!(c.uf2_ratios.len(), 20);
    let spread = c.uf2_spread.unwrap();
    assert!(spread <= 3.0, "{spread}");
    // Below about 1e-5 the gaps sit on the partition's noise floor (a few
    // 1e-6 at k = 2^14) and need not decrease further.
    let above: Vec<f64> = c.gaps.iter().copied().take_while(|&g| g > 1e-5).collect();
    assert!(above.len() >= 3, "{:?}", c.gaps);
    assert!(above.windows(2).all(|w| w[1] < w[0]), "{:?}", c.gaps);
    assert!(c.gaps[above.len()..].iter().all(|&g| g < 1e-5), "{:?}", c.gaps);
}

#[test]
fn constant_family_has_no_gaps() {
    let fam = PerturbationFamily::new(quartic(), TrigPoly::zero());
    let opts = StabilityOptions {
        k: 1024,
        probes: 0,
        probe_grid: 256,
        seed: 0,
    };
    let c = stability_curve(&fam, &[0.1, 0.01], &opts).unwrap();
    assert!(c.gaps.iter().all(|&g| g < 1e-12), "{:?}", c.gaps);
}

#[test]
fn lipschitz_ratios_on_doubling() {
    let fam = PerturbationFamily::with_default_direction(SmoothCircleMap::doubling().into());
    let pts = lipschitz_stability(&fam, &[0.1, 0.05, 0.02, 0.01], 2048, 1e-12).unwrap();
    for p in &pts {
        assert!(p.l1_ratio < 1.0, "{p:?}");
        assert!(p.w11_ratio >= p.l1_ratio, "{p:?}");
        assert!(p.formula_mismatch < 1e-3, "{p:?}");
    }
    // ĥ = 0 for this family, so the gap is second order in δ.
    assert!(pts[3].l1_ratio < pts[0].l1_ratio / 5.0);
}

#[test]
fn zero_direction_has_zero_lipschitz_ratios() {
    let fam = PerturbationFamily::new(quartic(), TrigPoly::zero());
    let pts = lipschitz_stability(&fam, &[0.1], 512, 1e-12).unwrap();
    assert_eq!(pts[0].l1_ratio, 0.0);
    assert_eq!(pts[0].w11_ratio, 0.0);
}

#[test]
fn quartic_finite_differences_converge() {
    let fam = PerturbationFamily::with_default_direction(quartic());
    let r = linear_response(&fam, 4096, 1e-12, &[1e-1, 1e-2, 1e-3]).unwrap();
    let (e1, e3) = (r.fd[0].fd_error, r.fd[2].fd_error);
    assert!(e3 < e1 / 5.0, "{e1} {e3}");
    assert!(r.monotone);
}

#[test]
fn keller_window_mass_is_resolution_stable() {
    let path = keller_path(3..=8).unwrap();
    let coarse = keller_experiment(&path, 1 << 13).unwrap();
    let fine = keller_experiment(&path, 1 << 14).unwrap();
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(
            (c.window_mass - f.window_mass).abs() < 0.05,
            "{:?} {} {}",
            c.params,
            c.window_mass,
            f.window_mass
        );
    }
    assert!(coarse[3..].iter().all(|r| r.window_mass >= 0.9));
}
