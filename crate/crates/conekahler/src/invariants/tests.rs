use super::*;
use crate::cone_geometry::{build_metric, ConePoint, Location, MetricKind};
use proptest::prelude::*;

fn football(beta: f64, n: usize) -> MetricField {
    let pts = vec![ConePoint { at: Location::zero(), beta }, ConePoint { at: Location::Infinity, beta }];
    build_metric(&ConeSurface::new(pts, n, 8).unwrap(), MetricKind::Football, None, 0.1).unwrap()
}

fn teardrop(beta: f64, delta: f64, n: usize) -> MetricField {
    let pts = vec![ConePoint { at: Location::zero(), beta }];
    build_metric(&ConeSurface::new(pts, n, 8).unwrap(), MetricKind::ModelOmegaD, None, delta).unwrap()
}

fn round(n: usize) -> MetricField {
    build_metric(&ConeSurface::new(vec![], n, 8).unwrap(), MetricKind::ModelOmegaD, None, 0.1).unwrap()
}

#[test]
fn average_scalar_examples() {
    let b = 0.3;
    assert!((average_scalar(&KahlerClassData::projective_line(1, b).unwrap()).unwrap() - (1.0 + b)).abs() < 1e-15);
    assert!((average_scalar(&KahlerClassData::projective_line(2, b).unwrap()).unwrap() - 2.0 * b).abs() < 1e-15);
    assert!((average_scalar(&KahlerClassData::projective_line(0, 1.0).unwrap()).unwrap() - 2.0).abs() < 1e-15);
    let bad = KahlerClassData { total_volume: 0.0, ..KahlerClassData::projective_line(1, b).unwrap() };
    assert!(average_scalar(&bad).is_err());
}

#[test]
fn class_of_a_surface_folds_unequal_angles() {
    let pts = vec![ConePoint { at: Location::zero(), beta: 0.2 }, ConePoint { at: Location::finite(1.0, 0.0), beta: 0.4 }];
    let surf = ConeSurface::new(pts, 8, 8).unwrap();
    let d = KahlerClassData::for_surface(&surf, 2.0).unwrap();
    assert!((d.total_volume - 4.0 * PI).abs() < 1e-14);
    // (4π − 2π(0.8 + 0.6)) / 4π
    assert!((average_scalar(&d).unwrap() - 0.3).abs() < 1e-14);
}

#[test]
fn average_matches_the_quadrature_mean_on_the_football() {
    let m = football(0.3, 24);
    let class = KahlerClassData::for_surface(&m.surface, 1.0).unwrap();
    let avg = average_scalar(&class).unwrap();
    assert!((m.mean(&m.scalar) - avg).abs() < 1e-3 * avg, "{} vs {avg}", m.mean(&m.scalar));
}

#[test]
fn round_potential_is_the_height_function() {
    let m = round(24);
    let u = holomorphy_potential(&m, &EulerField { scale: 1.5 }).unwrap();
    for (k, v) in u.values.iter().enumerate() {
        let z = m.surface.node_z(k);
        assert!((v - 1.5 * (1.0 / (1.0 + z.norm_sqr()) - 0.5)).abs() < 1e-10, "node {k}");
    }
    assert!((u.at_zero - 0.75).abs() < 1e-10 && (u.at_infinity + 0.75).abs() < 1e-10);
    assert!(u.residual < 1e-6);
}

#[test]
fn football_potential_is_the_pulled_back_height() {
    let beta = 0.3;
    let m = football(beta, 16);
    let u = holomorphy_potential(&m, &EulerField::z_dz()).unwrap();
    for (k, v) in u.values.iter().enumerate() {
        let a = m.surface.node_z(k).norm().powf(2.0 * beta);
        assert!((v - (1.0 / (1.0 + a) - 0.5)).abs() < 1e-10, "node {k}");
    }
    assert!(u.residual < 1e-6);
    // Monotone along a meridian.
    let row: Vec<f64> = (0..m.surface.n).map(|i| u.values[i * m.surface.m]).collect();
    assert!(row.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn potential_edge_cases() {
    let m = football(0.3, 8);
    let zero = holomorphy_potential(&m, &EulerField { scale: 0.0 }).unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
    assert!(holomorphy_potential(&m, &EulerField { scale: f64::NAN }).is_err());

    let pts = vec![ConePoint { at: Location::zero(), beta: 0.3 }, ConePoint { at: Location::finite(1.0, 0.0), beta: 0.3 }];
    let off = build_metric(&ConeSurface::new(pts, 8, 8).unwrap(), MetricKind::ModelOmegaD, None, 0.1).unwrap();
    assert!(matches!(holomorphy_potential(&off, &EulerField::z_dz()), Err(Error::InvalidField(_))));

    let surf = ConeSurface::new(vec![], 8, 8).unwrap();
    let phi: Vec<f64> = (0..surf.grid.len()).map(|k| 0.05 * surf.node_z(k).re / (1.0 + surf.node_z(k).norm_sqr())).collect();
    let bumpy = build_metric(&surf, MetricKind::ModelOmegaD, Some(phi), 0.1).unwrap();
    assert!(matches!(holomorphy_potential(&bumpy, &EulerField::z_dz()), Err(Error::Unsupported(_))));
}

#[test]
fn log_futaki_vanishes_on_the_football() {
    for beta in [0.2, 0.3, 0.45] {
        let m = football(beta, 24);
        let class = KahlerClassData::for_surface(&m.surface, 1.0).unwrap();
        let r = futaki_invariants(&m, &EulerField::z_dz(), &class).unwrap();
        assert!(r.log_futaki.abs() < 1e-5, "β={beta}: {r:?}");
    }
}

#[test]
fn log_futaki_of_the_teardrop_is_nonzero() {
    let beta = 0.3;
    let class = KahlerClassData::projective_line(1, beta).unwrap();
    let coarse = log_futaki(&teardrop(beta, 0.1, 32), &EulerField::z_dz(), &class).unwrap();
    let fine = log_futaki(&teardrop(beta, 0.1, 64), &EulerField::z_dz(), &class).unwrap();
    let err = (fine - coarse).abs();
    assert!(fine.abs() > 10.0 * err, "{fine} {coarse}");
    // The smooth Futaki term leaves −(1−β)u(0) and the divisor term removes
    // (1−β)u(0) again; u(0) = 1/2 because the moment map pushes ω forward to
    // a uniform measure.
    assert!((fine + (1.0 - beta)).abs() < 1e-8, "{fine}");
    let r = futaki_invariants(&teardrop(beta, 0.1, 64), &EulerField::z_dz(), &class).unwrap();
    assert!((r.futaki + 0.5 * (1.0 - beta)).abs() < 1e-8 && r.potential_residual < 1e-6);
}

#[test]
fn log_futaki_depends_only_on_the_class() {
    let beta = 0.3;
    let class = KahlerClassData::projective_line(1, beta).unwrap();
    let a = log_futaki(&teardrop(beta, 0.1, 64), &EulerField::z_dz(), &class).unwrap();
    let b = log_futaki(&teardrop(beta, 0.25, 64), &EulerField::z_dz(), &class).unwrap();
    assert!((a - b).abs() < 1e-5, "{a} {b}");

    let m = football(beta, 24);
    let surf = m.surface.clone();
    let phi: Vec<f64> = (0..surf.grid.len()).map(|k| 0.02 / (1.0 + surf.node_z(k).norm_sqr().powf(beta))).collect();
    let other = build_metric(&surf, MetricKind::Football, Some(phi), 0.1).unwrap();
    let class = KahlerClassData::for_surface(&surf, 1.0).unwrap();
    let a = log_futaki(&m, &EulerField::z_dz(), &class).unwrap();
    let b = log_futaki(&other, &EulerField::z_dz(), &class).unwrap();
    assert!((a - b).abs() < 1e-5, "{a} {b}");
}

#[test]
fn futaki_rejects_a_foreign_class() {
    let m = football(0.3, 8);
    let class = KahlerClassData { total_volume: 3.0, ..KahlerClassData::for_surface(&m.surface, 1.0).unwrap() };
    assert!(matches!(futaki_invariants(&m, &EulerField::z_dz(), &class), Err(Error::IncompatibleData(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn log_futaki_is_linear_in_the_field(c in -3.0f64..3.0, beta in 0.15f64..0.45) {
        let m = teardrop(beta, 0.1, 24);
        let class = KahlerClassData::projective_line(1, beta).unwrap();
        let one = log_futaki(&m, &EulerField::z_dz(), &class).unwrap();
        let scaled = log_futaki(&m, &EulerField { scale: c }, &class).unwrap();
        prop_assert!((scaled - c * one).abs() < 1e-10 * (1.0 + one.abs()));
    }

    #[test]
    fn average_scalar_is_affine_in_the_angle(beta in 0.01f64..1.0, points in 0usize..5) {
        let d = KahlerClassData::projective_line(points, beta).unwrap();
        let expect = 2.0 - (1.0 - beta) * points as f64;
        prop_assert!((average_scalar(&d).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn potential_is_mean_zero(beta in 0.1f64..0.9, c in 0.1f64..2.0) {
        let m = football(beta, 12);
        let u = holomorphy_potential(&m, &EulerField { scale: c }).unwrap();
        prop_assert!(m.integrate(&u.values).abs() < 1e-12);
        prop_assert!((u.at_zero + u.at_infinity).abs() < 1e-10);
    }
}

