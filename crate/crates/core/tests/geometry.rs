use fracflow::fracops::{FracOrder, KernelWeights};
use fracflow::geometry::*;
use fracflow::quad::adaptive;
use fracflow::ScalarField;
use proptest::prelude::*;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

const S: f64 = 0.25;

fn order() -> FracOrder {
    FracOrder::new(S, 2).unwrap()
}

/// Disk curvature constant from the polar form of the indicator integral.
fn omega_exact(s: f64) -> f64 {
    2f64.powf(-2.0 * s) * PI.sqrt() * gamma(0.5 - s) / (2.0 * s * gamma(1.0 - s))
}

/// κ of the disk of radius r at a boundary point with the kernel restricted to |z| < R: along the
/// ray at angle θ from the tangent the disk occupies (0, 2r sin θ), the half-plane (0, ∞).
fn disk_kappa_truncated(r: f64, big_r: f64, s: f64) -> f64 {
    let f = |t: f64| ((2.0 * r * t.sin()).powf(-2.0 * s) - big_r.powf(-2.0 * s)).max(0.0);
    let crit = (big_r / (2.0 * r)).min(1.0).asin();
    let a = adaptive(f, 0.0, crit, 1e-13, 1e-12).unwrap().value;
    let b = adaptive(f, PI - crit, PI, 1e-13, 1e-12).unwrap().value;
    -(a + b) / (2.0 * s)
}

fn on_circle(d: &SignedDistanceField) -> Vec<[usize; 2]> {
    let h = d.spacing();
    d.band_points().into_iter().filter(|&p| d.at(p).abs() < 0.5 * h).collect()
}

fn radial(d: &SignedDistanceField, p: [usize; 2], c: [f64; 2]) -> f64 {
    let x = d.field.coord2(p[0], p[1]);
    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt()
}

#[test]
fn circle_distance_before_and_after_extension() {
    let n = 128;
    let raw = raw_circle_distance(n, 1.0, [0.5, 0.5], 0.3, 0.0);
    assert!((raw.at2(64, 64) - 0.3).abs() < 1e-15);
    let h = 1.0 / n as f64;
    let rho = 6.0 * h;
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.3, 0.0, rho).unwrap();
    assert_eq!(d.clamp_level(), 2.0 * rho);
    assert!((d.at([64, 64]) - 2.0 * rho).abs() < 1e-15);
    assert!((d.at([0, 0]) + 2.0 * rho).abs() < 1e-15);
    assert!(d.field.max_abs() <= 2.0 * rho + 1e-15);
    // grid point exactly on the circle: (0.5 + 0.3, 0.5) = node (102.4, 64) is not a node; use r = 0.25
    let d2 = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.25, 0.0, rho).unwrap();
    assert!(d2.at([96, 64]).abs() < 1e-15);
    assert!(d.eikonal_defect() < 1e-3);
    // offset shifts the radius
    let d3 = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.3, 0.05, rho).unwrap();
    assert!(d3.at([96, 64]).abs() < 1e-15);
}

#[test]
fn circle_margin_violation_is_rejected() {
    let h = 1.0 / 128.0;
    assert!(signed_distance_circle(128, 1.0, [0.5, 0.5], 0.48, 0.0, 6.0 * h).is_err());
    assert!(signed_distance_circle(128, 1.0, [0.2, 0.5], 0.15, 0.0, 6.0 * h).is_err());
}

#[test]
fn extension_properties() {
    let n = 128;
    let raw = raw_circle_distance(n, 1.0, [0.5, 0.5], 0.3, 0.0);
    let rho = 0.05;
    let d = extend_distance(&raw, rho).unwrap();
    for (&dt, &dv) in raw.data.iter().zip(&d.field.data) {
        if dt.abs() < rho {
            assert_eq!(dt, dv);
        }
        if dt.abs() >= rho && dt.abs() <= 2.0 * rho {
            assert!(dv.abs() >= rho - 1e-15 && dv.abs() <= 2.0 * rho + 1e-15);
            assert_eq!(dv.signum(), dt.signum());
        }
        if dt.abs() >= 2.0 * rho {
            assert_eq!(dv.abs(), 2.0 * rho);
        }
    }
    assert!(extend_distance(&raw, 2.0 / n as f64).is_err());
    assert!(extend_distance(&raw, 2.5 / n as f64).is_ok());
}

#[test]
fn extension_second_differences_stay_bounded_under_refinement() {
    let rho = 0.05;
    let sup = |n: usize| {
        let d = extend_distance(&raw_circle_distance(n, 1.0, [0.5, 0.5], 0.3, 0.0), rho).unwrap();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let hs = d.field.hessian2(i, j);
                hs.iter().map(|v| v.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let (a, b, c) = (sup(128), sup(256), sup(512));
    assert!(b <= 1.1 * a && c <= 1.1 * b, "{a} {b} {c}");
}

fn half_plane(n: usize, normal: [f64; 2], rho: f64) -> SignedDistanceField {
    let raw = ScalarField::from_fn2(n, 1.0, |x, y| normal[0] * (x - 0.5) + normal[1] * (y - 0.5) + 0.3 / n as f64);
    extend_distance(&raw, rho).unwrap()
}

#[test]
fn flat_interface_has_zero_curvature() {
    let n = 128;
    let h = 1.0 / n as f64;
    let kw = KernelWeights::new(order(), h, 0.25).unwrap();
    let two_cells = 2.0 * kw.weight(&[1, 0]).unwrap();
    for normal in [[1.0, 0.0], [0.6, 0.8], [-(0.5f64.sqrt()), 0.5f64.sqrt()]] {
        let d = half_plane(n, normal, 6.0 * h);
        for p in [[64, 64], [60, 66], [66, 61]] {
            if d.at(p).abs() >= d.rho {
                continue;
            }
            let k = kappa_at(&d, p, &kw).unwrap();
            assert!(k.kappa.abs() <= k.tail_error_bound + two_cells, "{normal:?} {p:?} {k:?}");
            assert!(k.kappa.abs() < 1e-9, "{normal:?} {p:?} {k:?}");
        }
    }
}

#[test]
fn kappa_at_rejects_points_off_band_and_flat_gradients() {
    let n = 128;
    let h = 1.0 / n as f64;
    let kw = KernelWeights::new(order(), h, 0.2).unwrap();
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.25, 0.0, 6.0 * h).unwrap();
    assert!(kappa_at(&d, [64, 64], &kw).is_err());
    let flat = SignedDistanceField { field: ScalarField::square(n, 1.0), rho: 6.0 * h };
    assert!(kappa_at(&flat, [10, 10], &kw).is_err());
}

#[test]
fn truncated_disk_curvature_matches_polar_oracle() {
    let n = 256;
    let h = 1.0 / n as f64;
    let big_r = 0.2;
    let kw = KernelWeights::new(order(), h, big_r).unwrap();
    let c = [0.5, 0.5];
    let r = 0.25;
    let d = signed_distance_circle(n, 1.0, c, r, 0.0, 6.0 * h).unwrap();
    let solver = CurvatureSolver::new(order(), n, 1.0, KernelMode::Truncated(big_r)).unwrap();
    let pts: Vec<_> = on_circle(&d).into_iter().step_by(17).collect();
    let batch = solver.kappa(&d, &pts).unwrap();
    for (p, kb) in pts.iter().zip(&batch) {
        let k = kappa_at(&d, *p, &kw).unwrap();
        assert!(k.kappa_plus >= 0.0 && k.kappa_minus >= 0.0);
        assert_eq!(k.kappa, k.kappa_plus - k.kappa_minus);
        let oracle = disk_kappa_truncated(radial(&d, *p, c), big_r, S);
        assert!((k.kappa / oracle - 1.0).abs() < 5e-3, "{p:?} {} {oracle}", k.kappa);
        assert!((kb / k.kappa - 1.0).abs() < 1e-4, "{kb} {}", k.kappa);
        assert!((k.kappa - oracle).abs() <= k.tail_error_bound);
    }
}

#[test]
fn disk_curvature_matches_closed_form_ball_law() {
    let n = 256;
    let h = 1.0 / n as f64;
    let c = [0.5, 0.5];
    let solver = CurvatureSolver::new(order(), n, 1.0, KernelMode::Free).unwrap();
    let w = omega_exact(S);
    for r in [0.15, 0.3] {
        let d = signed_distance_circle(n, 1.0, c, r, 0.0, 6.0 * h).unwrap();
        let pts = on_circle(&d);
        let k = solver.kappa(&d, &pts).unwrap();
        for (p, kv) in pts.iter().zip(&k) {
            let exact = -w / radial(&d, *p, c).powf(2.0 * S);
            assert!((kv / exact - 1.0).abs() < 3e-3, "{r} {p:?} {kv} {exact}");
        }
    }
}

#[test]
fn periodic_mode_agrees_with_free_mode_for_small_disks() {
    let n = 128;
    let h = 1.0 / n as f64;
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.1, 0.0, 6.0 * h).unwrap();
    let pts = on_circle(&d);
    let free = CurvatureSolver::new(order(), n, 1.0, KernelMode::Free).unwrap().kappa(&d, &pts).unwrap();
    let per = CurvatureSolver::new(order(), n, 1.0, KernelMode::Periodic).unwrap().kappa(&d, &pts).unwrap();
    // the periodic copies add a small positive pull: their area over the lattice, weighted by |z|^{-2-2s}
    for (a, b) in free.iter().zip(&per) {
        assert!(b > a && (b - a) < 0.05 * a.abs(), "{a} {b}");
    }
}

#[test]
fn log_log_slope_and_scaling_law() {
    let n = 256;
    let h = 1.0 / n as f64;
    let c = [0.5, 0.5];
    let solver = CurvatureSolver::new(order(), n, 1.0, KernelMode::Free).unwrap();
    let radii = [0.15, 0.2, 0.3, 0.4];
    let mut pts = Vec::new();
    for &r in &radii {
        let d = signed_distance_circle(n, 1.0, c, r, 0.0, 6.0 * h).unwrap();
        let p = on_circle(&d);
        let k = solver.kappa(&d, &p).unwrap();
        let mean = p.iter().zip(&k).map(|(q, kv)| kv.abs() * (radial(&d, *q, c) / r).powf(2.0 * S)).sum::<f64>()
            / p.len() as f64;
        pts.push((r.ln(), mean.ln()));
    }
    let (slope, _) = fracflow::profiles::linear_fit(&pts);
    assert!((slope + 2.0 * S).abs() < 0.02, "slope {slope}");
    let ratio = (pts[0].1 - pts[2].1).exp();
    assert!((ratio / 2f64.powf(2.0 * S) - 1.0).abs() < 0.03, "{ratio}");
}

#[test]
fn complement_swaps_kappa_plus_and_minus() {
    let n = 128;
    let h = 1.0 / n as f64;
    let kw = KernelWeights::new(order(), h, 0.2).unwrap();
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.25, 0.0, 6.0 * h).unwrap();
    let e = d.complement();
    for p in d.band_points().into_iter().step_by(97) {
        let a = kappa_at(&d, p, &kw).unwrap();
        let b = kappa_at(&e, p, &kw).unwrap();
        assert!((a.kappa_plus - b.kappa_minus).abs() < 1e-12 * a.kappa.abs().max(1.0));
        assert!((a.kappa_minus - b.kappa_plus).abs() < 1e-12 * a.kappa.abs().max(1.0));
        assert!((a.kappa + b.kappa).abs() < 1e-12 * a.kappa.abs().max(1.0));
    }
    let solver = CurvatureSolver::new(order(), n, 1.0, KernelMode::Free).unwrap();
    let pts = on_circle(&d);
    let ka = solver.kappa(&d, &pts).unwrap();
    let kb = solver.kappa(&e, &pts).unwrap();
    for (a, b) in ka.iter().zip(&kb) {
        assert!((a + b).abs() < 1e-5 * a.abs(), "{a} {b}");
    }
}

#[test]
fn extension_does_not_change_band_curvature() {
    let n = 128;
    let h = 1.0 / n as f64;
    let kw = KernelWeights::new(order(), h, 0.2).unwrap();
    let raw = raw_circle_distance(n, 1.0, [0.5, 0.5], 0.25, 0.0);
    let d = extend_distance(&raw, 6.0 * h).unwrap();
    let plain = SignedDistanceField { field: raw, rho: 6.0 * h };
    for p in d.inner_band_points().into_iter().step_by(53) {
        let a = kappa_at(&d, p, &kw).unwrap().kappa;
        let b = kappa_at(&plain, p, &kw).unwrap().kappa;
        assert!((a - b).abs() < 1e-10 * a.abs(), "{a} {b}");
    }
}

#[test]
fn omega_is_positive_and_radius_independent() {
    let est = omega_constant(order(), &[256, 512], &[0.2, 0.4]).unwrap();
    assert!(est.omega > 0.0);
    let (a, b) = (est.per_radius[0].1, est.per_radius[1].1);
    assert!((a / b - 1.0).abs() < 0.01);
    assert!((est.omega / omega_exact(S) - 1.0).abs() < 1e-3, "{}", est.omega);
    assert!(omega_constant(order(), &[128, 384], &[0.2]).is_err());
    assert!(omega_constant(FracOrder::new(S, 3).unwrap(), &[64, 128], &[0.2]).is_err());
}

#[test]
fn unit_radius_curvature_is_minus_omega() {
    let n = 384;
    let box_len = 3.0;
    let h = box_len / n as f64;
    let c = [1.5, 1.5];
    let d = signed_distance_circle(n, box_len, c, 1.0, 0.0, 6.0 * h).unwrap();
    let solver = CurvatureSolver::new(order(), n, box_len, KernelMode::Free).unwrap();
    let pts = on_circle(&d);
    let k = solver.kappa(&d, &pts).unwrap();
    let mean = pts.iter().zip(&k).map(|(p, kv)| kv * radial(&d, *p, c).powf(2.0 * S)).sum::<f64>() / pts.len() as f64;
    assert!((mean / -omega_exact(S) - 1.0).abs() < 1e-3, "{mean}");
}

#[test]
fn front_of_circle_is_within_half_cell() {
    let n = 128;
    let h = 1.0 / n as f64;
    let c = [0.5, 0.5];
    let d = signed_distance_circle(n, 1.0, c, 0.3, 0.0, 6.0 * h).unwrap();
    let front = extract_front(&d.field, 0.0);
    assert_eq!(front.polylines.len(), 1);
    let curve = &front.polylines[0];
    assert!(curve.closed);
    for v in &curve.points {
        let r = ((v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2)).sqrt();
        assert!((r - 0.3).abs() < 0.5 * h);
    }
    // positive region on the left: counterclockwise around the disk
    assert!(curve.signed_area() > 0.0);
    assert!((front.area() - PI * 0.09).abs() < 1e-3);
    let inv = extract_front(&d.complement().field, 0.0);
    assert!(inv.polylines[0].signed_area() < 0.0);
}

#[test]
fn constant_field_has_no_front() {
    let f = ScalarField::square(32, 1.0).map(|_| 1.0);
    assert!(extract_front(&f, 0.0).is_empty());
    assert!(extract_front(&f, 0.0).polylines.is_empty());
}

#[test]
fn two_bubbles_give_two_closed_curves() {
    let n = 128;
    let f = ScalarField::from_fn2(n, 1.0, |x, y| {
        let a = 0.15 - ((x - 0.3).powi(2) + (y - 0.3).powi(2)).sqrt();
        let b = 0.12 - ((x - 0.7).powi(2) + (y - 0.65).powi(2)).sqrt();
        a.max(b)
    });
    let front = extract_front(&f, 0.0);
    assert_eq!(front.polylines.len(), 2);
    assert!(front.polylines.iter().all(|p| p.closed && p.signed_area() > 0.0));
    let csv = front.to_csv();
    assert!(csv.starts_with("curve_id,x,y\n"));
    let ids: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec!["0", "1"]);
}

#[test]
fn open_fronts_end_at_the_window() {
    let f = ScalarField::from_fn2(64, 1.0, |x, _| x - 0.5);
    let front = extract_front(&f, 0.0);
    assert_eq!(front.polylines.len(), 1);
    assert!(!front.polylines[0].closed);
    assert_eq!(front.polylines[0].points.len(), 64);
}

fn polygon(c: [f64; 2], r: f64, m: usize) -> FrontCurve {
    let points = (0..m)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / m as f64;
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect();
    FrontCurve { polylines: vec![Polyline { points, closed: true }] }
}

#[test]
fn hausdorff_examples() {
    let a = polygon([0.5, 0.5], 0.3, 4000);
    assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    let delta = 0.01;
    let b = polygon([0.5, 0.5], 0.3 + delta, 4000);
    assert!((hausdorff(&a, &b).unwrap() - delta).abs() < 1e-6);
    let v = [0.03, -0.04];
    let c = polygon([0.5 + v[0], 0.5 + v[1]], 0.3, 4000);
    assert!((hausdorff(&a, &c).unwrap() - 0.05).abs() < 1e-6);
    assert!(hausdorff(&a, &FrontCurve::default()).is_err());
    assert!(hausdorff(&FrontCurve::default(), &a).is_err());
}

#[test]
fn nested_fronts_report_enclosure() {
    let outer = polygon([0.5, 0.5], 0.3, 200);
    let inner = polygon([0.52, 0.5], 0.1, 200);
    assert!(outer.encloses(&inner));
    assert!(!inner.encloses(&outer));
}

#[test]
fn distance_rebuild_matches_exact_circle_distance() {
    let n = 128;
    let h = 1.0 / n as f64;
    let d = signed_distance_circle(n, 1.0, [0.5, 0.5], 0.3, 0.0, 6.0 * h).unwrap();
    let front = extract_front(&d.field, 0.0);
    let rebuilt = distance_from_front(&front, &d.field, 0.0, 2.0 * d.rho);
    for (a, b) in rebuilt.data.iter().zip(&d.field.data) {
        if b.abs() < d.rho {
            // chord sagitta of the interpolated polyline
            assert!((a - b).abs() < h * h / 0.3, "{a} {b}");
        }
    }
}

proptest! {
    #[test]
    fn cell_fraction_is_a_monotone_complementary_cdf(theta in 0.0..(2.0 * PI), c in -1.0f64..1.0, dc in 0.0f64..0.3) {
        let nv = [theta.cos(), theta.sin()];
        let f = cell_fraction(nv, c);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(cell_fraction(nv, c + dc) >= f - 1e-15);
        prop_assert!((f + cell_fraction(nv, -c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_interface_curvature_vanishes_for_any_orientation(theta in 0.0..(2.0 * PI)) {
        let n = 64;
        let h = 1.0 / n as f64;
        let kw = KernelWeights::new(order(), h, 0.2).unwrap();
        let d = half_plane(n, [theta.cos(), theta.sin()], 6.0 * h);
        let k = kappa_at(&d, [32, 32], &kw).unwrap();
        prop_assert!(k.kappa.abs() < 1e-9, "{k:?}");
    }
}
