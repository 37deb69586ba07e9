use std::sync::OnceLock;

use fracflow::barrier::*;
use fracflow::fracops::{compute_c_ns, FracConstants, FracOrder};
use fracflow::geometry::*;
use fracflow::profiles::*;
use fracflow::{Error, ScalarField};
use proptest::prelude::*;

const OMEGA: f64 = 7.416298709205488;

struct Fixture {
    well: DoubleWell,
    layer: LayerSolution,
    corrector: CorrectorProfile,
    c0: f64,
    constants: FracConstants,
}

fn order() -> FracOrder {
    FracOrder::new(0.25, 2).unwrap()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let well = DoubleWell::standard();
        let layer = solve_layer(&well, order(), compute_c_ns(order()).unwrap(), LayerGrid::default()).unwrap();
        let c0 = compute_c0(&layer).unwrap();
        let corrector = solve_corrector(&layer, &well, c0).unwrap();
        Fixture { well, layer, corrector, c0, constants: FracConstants::new(order()).unwrap() }
    })
}

fn config(eps: f64, rho: f64) -> BarrierConfig {
    BarrierConfig::new(order(), eps, 0.015, &fixture().well, 0.25, rho).unwrap()
}

/// The affine distance `x − 1/2`, left unclamped.
fn flat(n: usize) -> SignedDistanceField {
    SignedDistanceField { field: ScalarField::from_fn2(n, 1.0, |x, _| x - 0.5), rho: 0.0375 }
}

#[test]
fn config_lists_every_violation() {
    let w = &fixture().well;
    match BarrierConfig::new(order(), 1.5, 0.0, w, -1.0, 0.01) {
        Err(Error::Config(v)) => assert_eq!(v.len(), 4, "{v:?}"),
        other => panic!("{other:?}"),
    }
    assert!(BarrierConfig::new(order(), 0.05, 1.0, w, 0.25, 0.1).is_err());
    assert!(BarrierConfig::new(order(), 0.05, 0.02, w, 0.25, 0.04).is_err());
    let cfg = BarrierConfig::new(order(), 0.05, 0.015, w, 0.25, 0.04).unwrap();
    assert_eq!(cfg.delta, 0.05f64.powf(0.4));
    assert_eq!(cfg.alpha, w.d2w(0.0));
    assert_eq!(cfg.sigma_tilde, 0.015 / cfg.alpha);
}

#[test]
fn grid_preconditions_are_enforced() {
    let f = fixture();
    let d = flat(64);
    assert!(matches!(compute_b_eps(&d, &f.layer.phi, &config(0.05, 0.0375)), Err(Error::Resolution(_))));
    let wide = BarrierConfig::new(order(), 0.125, 0.015, &f.well, 0.3, 0.0375).unwrap();
    assert!(matches!(compute_b_eps(&d, &f.layer.phi, &wide), Err(Error::Invalid(_))));
}

#[test]
fn b_eps_vanishes_where_the_distance_is_affine() {
    let f = fixture();
    let n = 128;
    let d = flat(n);
    let b = compute_b_eps(&d, &f.layer.phi, &config(0.0625, 0.0375)).unwrap();
    for i in 40..88 {
        for j in [0, 17, 64] {
            assert!(b.at2(i, j).abs() < 1e-9, "{i} {j}: {}", b.at2(i, j));
        }
    }
}

#[test]
fn c_eps_vanishes_on_the_interface_and_is_tiny_on_the_band() {
    let f = fixture();
    let n = 128;
    let d = flat(n);
    let s = 0.25;
    let mut prev = f64::INFINITY;
    for eps in [0.125, 0.0625, 0.03125] {
        let c = compute_c_eps(&d, &f.layer.phi, &f.well, &config(eps, 0.0375)).unwrap();
        assert_eq!(c.at2(64, 5), 0.0);
        let band = (40..88).map(|i| c.at2(i, 9).abs()).fold(0.0, f64::max);
        let scaled = band / eps.powf(2.0 * s * s / (1.0 - 2.0 * s));
        assert!(scaled < prev && scaled < 1e-3, "{eps}: {scaled}");
        prev = scaled;
        // oracle: unit gradient, so c̄ = ε^{-2s}[(1 + ε³)^{1/4} − 1] W'(φ(d/ε))
        let x = d.at([70, 3]);
        let expect = eps.powf(-0.5) * ((1.0 + eps.powi(3)).powf(0.25) - 1.0) * f.well.dw(f.layer.phi.eval(x / eps));
        assert!((c.at2(70, 3) - expect).abs() <= 1e-12 * expect.abs());
    }
}

#[test]
fn aux_fields_are_additive_and_mu_has_exact_plateaus() {
    let f = fixture();
    let n = 128;
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.3, 0.0, 0.05).unwrap();
    let cfg = BarrierConfig::new(order(), 0.0625, 0.015, &f.well, 0.25, 0.05).unwrap();
    let aux = compute_aux(&d, &f.layer.phi, &f.well, &cfg).unwrap();
    for k in 0..aux.a_eps.len() {
        assert_eq!(aux.a_eps.data[k], aux.b_eps.data[k] + aux.c_eps.data[k]);
    }
    let hi = cfg.sigma / cfg.delta.sqrt();
    let flat = flat(n);
    let mu = build_mu(&SignedDistanceField { field: flat.field.map(|v| 2.0 * v), rho: 1.0 }, &cfg);
    for (k, &x) in flat.field.data.iter().enumerate() {
        let m = mu.data[k];
        let r = 2.0 * x.abs();
        if r <= cfg.delta {
            assert_eq!(m, cfg.sigma);
        } else if r >= 2.0 * cfg.delta {
            assert_eq!(m, hi);
        } else {
            assert!(m >= cfg.sigma && m <= hi);
        }
    }
}

#[test]
fn b_eps_on_a_circle_stays_bounded_along_a_ladder() {
    let f = fixture();
    let d = signed_distance_circle(128, 1.0, [0.5, 0.5], 0.3, 0.0, 0.05).unwrap();
    let sups: Vec<f64> = [0.125, 0.0625, 0.03125]
        .iter()
        .map(|&eps| {
            let cfg = BarrierConfig::new(order(), eps, 0.015, &f.well, 0.25, 0.05).unwrap();
            compute_b_eps(&d, &f.layer.phi, &cfg).unwrap().max_abs()
        })
        .collect();
    assert!(sups.iter().all(|v| v.is_finite()));
    assert!(sups[2] <= 4.0 * sups[0] + 1.0, "{sups:?}");
}

#[test]
fn barrier_is_the_shifted_layer_plus_its_corrector() {
    let f = fixture();
    let n = 128;
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.3, 0.0, 0.05).unwrap();
    let cfg = BarrierConfig::new(order(), 0.0625, 0.015, &f.well, 0.25, 0.05).unwrap();
    let aux = compute_aux(&shifted(&d, &cfg), &f.layer.phi, &f.well, &cfg).unwrap();
    let v = assemble_barrier(&d, &f.layer.phi, &f.corrector.psi_tilde, &aux, &cfg).unwrap();
    let e2s = cfg.epsilon.sqrt();
    for k in (0..v.len()).step_by(97) {
        let xi = (d.field.data[k] - cfg.sigma_tilde) / cfg.epsilon;
        let gap = aux.mu.data[k] - aux.a_eps.data[k];
        let expect = f.layer.phi.eval(xi) + e2s * (f.corrector.psi_tilde.eval(xi) - 1.0 / cfg.alpha) * gap;
        assert!((v.data[k] - expect).abs() < 1e-12, "{k}");
    }
    let other = ScalarField::square(64, 1.0);
    let bad = AuxFields { b_eps: other.clone(), c_eps: other.clone(), a_eps: other.clone(), mu: other };
    assert!(matches!(assemble_barrier(&d, &f.layer.phi, &f.corrector.psi_tilde, &bad, &cfg), Err(Error::Shape(_))));
}

#[test]
fn circle_motion_dominates_the_forced_curvature_speed() {
    let f = fixture();
    let s = 0.25;
    let sigma = 0.015;
    let m = CircleMotion::forced([0.5, 0.5], 0.35, 0.0375, f.c0, OMEGA, sigma, s).unwrap();
    let end = m.radius(m.horizon());
    assert!((end - 0.175).abs() < 1e-12);
    for k in 0..=10 {
        let r = end + (0.35 - end) * k as f64 / 10.0;
        assert!(-m.speed + 4f64.powf(2.0 * s) * f.c0 * OMEGA / r.powf(2.0 * s) <= -f.c0 * sigma);
    }
    let d = m.distance(0.5 * m.horizon(), 128).unwrap();
    let r = m.radius(0.5 * m.horizon());
    let band = d.band_points();
    assert!(!band.is_empty());
    for p in band {
        let x = d.field.coord2(p[0], p[1]);
        let want = r - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        assert!((d.at(p) - want).abs() < 1e-12);
    }
    assert!(CircleMotion::forced([0.5, 0.5], 0.35, 0.09, f.c0, OMEGA, sigma, s).is_err());
}

#[test]
fn residual_sharpens_on_the_band_along_a_ladder() {
    let f = fixture();
    let n = 128;
    let prof = BarrierProfiles { phi: &f.layer.phi, phi_dot: &f.layer.phi_dot, psi_tilde: &f.corrector.psi_tilde, c0: f.c0 };
    let m = CircleMotion::forced([0.5, 0.5], 0.35, 0.0375, f.c0, OMEGA, 0.015, 0.25).unwrap();
    let reports: Vec<ResidualReport> = [0.125, 0.0625]
        .iter()
        .map(|&eps| subsolution_residual(&m, 0.5 * m.horizon(), n, &prof, &f.well, &config(eps, 0.0375), &f.constants).unwrap())
        .collect();
    for r in &reports {
        assert_eq!(r.points, n * n);
        assert!(r.band_points > 0 && r.j.data.iter().all(|v| v.is_finite()));
        assert!(r.percentiles[0] <= r.percentiles[1] && r.percentiles[1] <= r.percentiles[2]);
        assert!(r.fraction_negative_band > 0.9, "{}", r.fraction_negative_band);
        let json = serde_json::to_value(r).unwrap();
        assert!(json.get("fraction_negative").is_some() && json.get("config").is_some() && json.get("j").is_none());
    }
    assert!(reports[1].max_j_band < reports[0].max_j_band);
    assert!(reports[1].audit < reports[0].audit);
    assert!(subsolution_residual(&m, 2.0 * m.horizon(), n, &prof, &f.well, &config(0.125, 0.0375), &f.constants).is_err());
}

#[test]
fn reflected_barrier_is_a_supersolution_twin() {
    let f = fixture();
    let n = 64;
    let cfg = BarrierConfig::new(order(), 0.0625, 0.015, &f.well, 0.25, 0.035).unwrap();
    let m = CircleMotion::forced([0.5, 0.5], 0.3, 0.035, f.c0, OMEGA, 0.015, 0.25).unwrap();
    let t = 0.5 * m.horizon();
    let dt = 1e-3 * m.horizon();
    let build = |t: f64| {
        let d = m.distance(t, n).unwrap();
        let aux = compute_aux(&shifted(&d, &cfg), &f.layer.phi, &f.well, &cfg).unwrap();
        assemble_barrier(&d, &f.layer.phi, &f.corrector.psi_tilde, &aux, &cfg).unwrap()
    };
    let v = [build(t - dt), build(t), build(t + dt)];
    let w: Vec<ScalarField> = v.iter().map(|x| x.map(|u| 1.0 - u)).collect();
    let jv = allen_cahn_residual([&v[0], &v[1], &v[2]], dt, cfg.epsilon, &f.well, order(), &f.constants).unwrap();
    let jw = allen_cahn_residual([&w[0], &w[1], &w[2]], dt, cfg.epsilon, &f.well, order(), &f.constants).unwrap();
    let scale = jv.max_abs();
    for k in 0..jv.len() {
        assert!((jv.data[k] + jw.data[k]).abs() <= 1e-9 * scale, "{k}");
    }
}

#[test]
fn residual_rejects_non_finite_samples() {
    let f = fixture();
    let mut u = ScalarField::square(32, 1.0);
    u.data[7] = f64::NAN;
    let ok = ScalarField::square(32, 1.0);
    let err = allen_cahn_residual([&ok, &u, &ok], 1e-3, 0.2, &f.well, order(), &f.constants).unwrap_err();
    assert!(matches!(err, Error::NonFinite(7)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mu_is_monotone_in_distance(eps in 0.01f64..0.5, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let cfg = BarrierConfig::new(order(), eps, 0.015, &fixture().well, 0.25, 0.5).unwrap();
        let field = ScalarField::from_fn2(2, 1.0, |x, _| if x < 0.5 { a.min(b) } else { a.max(b) });
        let mu = build_mu(&SignedDistanceField { field, rho: 0.5 }, &cfg);
        prop_assert!(mu.at2(0, 0) <= mu.at2(1, 0));
        prop_assert!(mu.at2(0, 0) >= cfg.sigma && mu.at2(1, 0) <= cfg.sigma / cfg.delta.sqrt() * (1.0 + 1e-15));
    }
}
