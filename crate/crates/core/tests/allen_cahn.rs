use std::f64::consts::PI;
use std::sync::OnceLock;

use fracflow::allen_cahn::*;
use fracflow::fracops::{compute_c_ns, spectral_symbol_closed_form, FracOrder};
use fracflow::geometry::*;
use fracflow::profiles::*;
use fracflow::{Error, ScalarField};

struct Fixture {
    well: DoubleWell,
    layer: LayerSolution,
    c0: f64,
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
        Fixture { well, layer, c0 }
    })
}

fn solver(n: usize) -> &'static AcSolver {
    static S64: OnceLock<AcSolver> = OnceLock::new();
    static S128: OnceLock<AcSolver> = OnceLock::new();
    let cell = match n {
        64 => &S64,
        128 => &S128,
        _ => panic!("no cached solver for {n}"),
    };
    cell.get_or_init(|| AcSolver::new(order(), n, 1.0).unwrap())
}

fn bubble(n: usize, center: [f64; 2], r: f64, eps: f64) -> AcState {
    let f = fixture();
    let d0 = signed_distance_circle(n, 1.0, center, r, 0.0, 0.05).unwrap();
    well_prepared_init(&d0, &f.layer.phi, eps, &f.well, order()).unwrap()
}

fn constant(n: usize, c: f64) -> AcState {
    AcState::new(ScalarField::square(n, 1.0).map(|_| c), 0.1, fixture().well.clone(), order()).unwrap()
}

#[test]
fn equilibria_are_exact_fixed_points() {
    let s = solver(64);
    for c in [0.0, 0.5, 1.0] {
        let state = constant(64, c);
        for dt in [1e-6, 1e-2, 10.0] {
            let next = s.step(&state, dt).unwrap();
            assert!(next.u.data.iter().all(|&v| v == c), "c = {c}, dt = {dt}");
            assert_eq!(next.t, dt);
        }
    }
}

#[test]
fn operator_symbol_is_nonnegative_and_matches_the_power_law_at_low_frequency() {
    let s = solver(128);
    assert_eq!(s.symbol[0], 0.0);
    assert!(s.symbol.iter().skip(1).all(|&m| m > 0.0));
    let lam = spectral_symbol_closed_form(order());
    let u = ScalarField::from_fn2(128, 1.0, |x, y| (2.0 * PI * (x + 2.0 * y)).cos());
    let iu = s.operator(&u);
    let k = 2.0 * PI * 5f64.sqrt();
    let expect = -lam * k.powf(0.5);
    let err = u.data.iter().zip(&iu.data).map(|(a, b)| (b - expect * a).abs()).fold(0.0, f64::max);
    assert!(err < 2e-3 * expect.abs(), "{err} {expect}");
}

#[test]
fn maximum_principle_and_energy_decay_under_stiff_steps() {
    let s = solver(64);
    let f = fixture();
    let sharp = ScalarField::from_fn2(64, 1.0, |x, y| if (x - 0.4).abs() < 0.2 && (y - 0.55).abs() < 0.3 { 1.0 } else { 0.0 });
    let mut state = AcState::new(sharp, 0.0625, f.well.clone(), order()).unwrap();
    let mut e = s.energy(&state).unwrap();
    for k in 0..80 {
        let dt = [1e-4, 1e-2, 1.0][k % 3];
        state = s.step(&state, dt).unwrap();
        let (lo, hi) = state.u.min_max();
        assert!(lo >= -1e-10 && hi <= 1.0 + 1e-10, "{lo} {hi}");
        let next = s.energy(&state).unwrap();
        assert!(next.total <= e.total + 1e-9 * e.total.abs(), "step {k}: {} -> {}", e.total, next.total);
        assert!(next.gagliardo >= 0.0 && next.potential >= 0.0);
        assert_eq!(next.total, next.gagliardo + next.potential);
        e = next;
    }
}

#[test]
fn under_resolved_width_is_rejected() {
    let f = fixture();
    let d0 = signed_distance_circle(64, 1.0, [0.5, 0.5], 0.3, 0.0, 0.05).unwrap();
    let err = well_prepared_init(&d0, &f.layer.phi, 3.0 / 64.0, &f.well, order()).unwrap_err();
    assert!(matches!(err, Error::Resolution(_)));
    assert!(well_prepared_init(&d0, &f.layer.phi, 4.0 / 64.0, &f.well, order()).is_ok());
}

#[test]
fn well_prepared_data_sits_on_the_layer() {
    let f = fixture();
    let n = 128;
    let rho = 0.05;
    let raw = ScalarField::from_fn2(n, 1.0, |x, _| x - 0.5);
    let d0 = extend_distance(&raw, rho).unwrap();
    let eps = 0.04;
    let st = well_prepared_init(&d0, &f.layer.phi, eps, &f.well, order()).unwrap();
    assert_eq!(d0.at([64, 10]), 0.0);
    assert_eq!(st.u.at2(64, 10), 0.5);
    assert!(st.u.data.iter().all(|&v| v > 0.0 && v < 1.0));
    // deep interior follows the algebraic tail 1 − φ(ξ) ≤ C ξ^{-2s}
    let tail = f.layer.tail_fit(&f.well).predicted_coefficient;
    for eps in [0.16, 0.08, 0.04] {
        let st = well_prepared_init(&d0, &f.layer.phi, eps, &f.well, order()).unwrap();
        let (_, hi) = st.u.min_max();
        assert!(1.0 - hi <= tail * (eps / (2.0 * rho)).sqrt(), "{eps}: {hi}");
    }
}

#[test]
fn energy_of_constants_vanishes_and_sharper_layers_cost_more() {
    let s = solver(128);
    for c in [0.0, 1.0] {
        let e = s.energy(&constant(128, c)).unwrap();
        assert_eq!((e.gagliardo, e.potential, e.total), (0.0, 0.0, 0.0));
    }
    let wide = s.energy(&bubble(128, [0.5, 0.5], 0.3, 0.08)).unwrap();
    let sharp = s.energy(&bubble(128, [0.5, 0.5], 0.3, 0.04)).unwrap();
    assert!(sharp.total > wide.total);
}

#[test]
fn diffuse_front_starts_on_the_circle_shrinks_and_vanishes() {
    let n = 128;
    let h = 1.0 / n as f64;
    let s = solver(n);
    let c = [0.5, 0.5];
    let mut state = bubble(n, c, 0.3, 0.04);
    let circle = FrontCurve {
        polylines: vec![Polyline {
            points: (0..4000).map(|k| {
                let a = 2.0 * PI * k as f64 / 4000.0;
                [c[0] + 0.3 * a.cos(), c[1] + 0.3 * a.sin()]
            })
            .collect(),
            closed: true,
        }],
    };
    let start = diffuse_front(&state);
    assert!(hausdorff(&start, &circle).unwrap() <= 0.5 * h);
    let dt = default_dt(0.04, 0.25);
    let mut mass = state.u.data.iter().sum::<f64>();
    for _ in 0..2 {
        state = s.step(&state, dt).unwrap();
        let m = state.u.data.iter().sum::<f64>();
        assert!(m < mass);
        mass = m;
    }
    let later = diffuse_front(&state);
    assert!(!later.is_empty() && start.encloses(&later));
    assert!(later.mean_radius(c) < 0.3);
    let mut steps = 0;
    while !diffuse_front(&state).is_empty() {
        state = s.step(&state, dt).unwrap();
        steps += 1;
        assert!(steps < 1000);
    }
    assert!(state.u.data.iter().all(|&v| v < 0.5));
}

#[test]
fn dynamics_commute_with_grid_translations() {
    let n = 64;
    let s = solver(n);
    let h = 1.0 / n as f64;
    let mut a = bubble(n, [0.45, 0.5], 0.2, 4.5 * h);
    let mut b = bubble(n, [0.45 + 5.0 * h, 0.5 - 3.0 * h], 0.2, 4.5 * h);
    let dt = default_dt(4.5 * h, 0.25);
    for _ in 0..10 {
        a = s.step(&a, dt).unwrap();
        b = s.step(&b, dt).unwrap();
    }
    let shifted = a.u.shifted2(5, -3);
    let err = shifted.data.iter().zip(&b.u.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn state_and_solver_must_share_a_grid() {
    let s = solver(64);
    assert!(matches!(s.step(&constant(128, 0.0), 1e-3), Err(Error::Shape(_))));
    assert!(s.step(&constant(64, 0.0), 0.0).is_err());
    assert!(s.step(&constant(64, 0.0), f64::NAN).is_err());
    let bad = ScalarField::square(64, 1.0).map(|_| 1.5);
    assert!(matches!(AcState::new(bad, 0.1, fixture().well.clone(), order()), Err(Error::MaxPrinciple { .. })));
}

fn experiment_config(n: usize, t_end: f64) -> ConvergenceConfig {
    let f = fixture();
    ConvergenceConfig {
        order: order(),
        n,
        c0: f.c0,
        omega: 7.416298709205488,
        times: vec![0.5 * t_end, t_end],
        inner_radius: 0.1,
        outer_radius: 0.45,
        min_steps: 20,
    }
}

#[test]
fn convergence_experiment_reports_every_checkpoint() {
    let f = fixture();
    let n = 64;
    let seed = Seed::Circle { center: [0.5, 0.5], radius: 0.35 };
    let p = fracflow::fmcf::FmcParams::new(order(), f.c0, 7.416298709205488, None, 0.3).unwrap();
    let t_end = 0.3 * p.extinction_time(0.35);
    let cfg = experiment_config(n, t_end);
    let rows = convergence_experiment(&seed, &[0.125, 0.0625], &cfg, &f.layer.phi, &f.well).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let d = r.hausdorff.unwrap();
        assert!(d.is_finite() && d > 0.0 && d < 0.2);
        assert!(r.sup_inside > 0.0 && r.sup_inside < 0.5 && r.sup_outside < 0.5);
        assert!(!r.diffuse_empty && !r.sharp_empty && r.steps >= 10);
    }
    assert_eq!(rows[1].t, t_end);
    assert!(rows[3].sup_inside < rows[1].sup_inside);
}

#[test]
fn convergence_experiment_names_the_feasible_ladder() {
    let f = fixture();
    let cfg = experiment_config(64, 1e-6);
    let seed = Seed::Circle { center: [0.5, 0.5], radius: 0.35 };
    match convergence_experiment(&seed, &[0.08, 0.04, 0.02], &cfg, &f.layer.phi, &f.well) {
        Err(Error::Resolution(msg)) => assert!(msg.contains("[0.08]"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_seed_stays_below_the_interface_level() {
    let f = fixture();
    let cfg = experiment_config(64, 0.05);
    let rows = convergence_experiment(&Seed::Empty, &[0.0625], &cfg, &f.layer.phi, &f.well).unwrap();
    for r in &rows {
        assert!(r.diffuse_empty && r.sharp_empty && r.hausdorff.is_none());
        assert!(r.sup_outside < 0.5);
    }
    assert!(rows[1].sup_outside < rows[0].sup_outside);
}
