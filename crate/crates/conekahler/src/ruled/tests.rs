use super::*;
use crate::cone_geometry::{build_metric, ConePoint, ConeSurface, Location, MetricKind};
use crate::elliptic::{fredholm_solve, FredholmOptions};
use crate::he_flow::{FlowGrid, HermitianField};
use crate::parabolic_bundles::{model_bundle_metric, q, qf, three_point_example, ParabolicBundle, ParabolicPoint, Position};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn football_metric(n: usize, m: usize) -> crate::cone_geometry::MetricField {
    let s = ConeSurface::new(
        vec![ConePoint { at: Location::zero(), beta: 0.3 }, ConePoint { at: Location::Infinity, beta: 0.3 }],
        n,
        m,
    )
    .unwrap();
    build_metric(&s, MetricKind::Football, None, 0.1).unwrap()
}

fn omega_d() -> BasePotential {
    let pts = three_point_example().points.iter().map(|p| ConePoint { at: p.at.location(), beta: 0.3 }).collect();
    BasePotential::OmegaD { points: pts, delta: 0.1 }
}

fn sample_points() -> Vec<RuledPoint> {
    [
        (c(0.3, 0.2), [c(1.0, 0.0), c(0.0, 0.0)]),
        (c(-1.2, 0.7), [c(0.6, 0.0), c(0.2, 0.5)]),
        (c(2.5, -3.0), [c(0.1, 0.3), c(1.0, 0.0)]),
    ]
    .iter()
    .map(|(z, v)| RuledPoint::new(*z, v).unwrap())
    .collect()
}

#[test]
fn lift_examples() {
    let id = DMatrix::<C64>::identity(2, 2);
    let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
    let v = fubini_study_lift(&id, &e1, &e1, &e1).unwrap();
    assert!((v - c(1.0, 0.0)).norm() < 1e-15);
    let xi = [c(1.0, 0.0), c(1.0, 0.0)];
    assert!((fubini_study_lift(&id, &e1, &e1, &xi).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
    let xi3 = [c(3.0, 0.0), c(3.0, 0.0)];
    assert!((fubini_study_lift(&id, &e1, &e1, &xi3).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
    assert!(fubini_study_lift(&id, &e1, &e1, &[c(0.0, 0.0); 2]).is_err());
}

#[test]
fn lift_is_hermitian_and_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rc = || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(2, 2, |_, _| rc());
    let h = a.adjoint() * &a + DMatrix::identity(2, 2);
    let (v, w, xi) = ([rc(), rc()], [rc(), rc()], [rc(), rc()]);
    let vw = fubini_study_lift(&h, &v, &w, &xi).unwrap();
    let wv = fubini_study_lift(&h, &w, &v, &xi).unwrap();
    assert!((vw - wv.conj()).norm() < 1e-13);
    // h ↦ U*hU with v ↦ U⁻¹v, ξ ↦ ξU keeps the value.
    let u = DMatrix::from_fn(2, 2, |_, _| rc()) + DMatrix::identity(2, 2) * c(2.0, 0.0);
    let ui = u.clone().try_inverse().unwrap();
    let tv = |x: &[C64; 2]| {
        let y = &ui * nalgebra::DVector::from_column_slice(x);
        [y[0], y[1]]
    };
    let txi = nalgebra::RowDVector::from_row_slice(&xi) * &u;
    let moved = fubini_study_lift(&(u.adjoint() * &h * &u), &tv(&v), &tv(&w), &[txi[0], txi[1]]).unwrap();
    assert!((moved - vw).norm() < 1e-12 * (1.0 + vw.norm()));
}

#[test]
fn base_potentials_have_the_expected_curvature() {
    for (b, s) in [
        (BasePotential::Flat, 0.0),
        (BasePotential::Round, 2.0),
        (BasePotential::Football { beta: 0.3 }, 0.6),
        (BasePotential::FlatCone { beta: 0.25 }, 0.0),
    ] {
        for z in [c(0.4, -0.3), c(3.0, 1.0)] {
            let (_, sz) = b.metric_and_scalar(z);
            assert!((sz - s).abs() < 1e-10, "{b:?} {z}: {sz}");
        }
    }
    let (g, _) = BasePotential::FlatCone { beta: 0.25 }.metric_and_scalar(c(2.0, 0.0));
    assert!((g - 0.0625 * 2f64.powf(-1.5)).abs() < 1e-14);
    // The ω_D potential matches the conformal factor of the surface model.
    let surf = ConeSurface::new(
        three_point_example().points.iter().map(|p| ConePoint { at: p.at.location(), beta: 0.3 }).collect(),
        8,
        8,
    )
    .unwrap();
    let m = build_metric(&surf, MetricKind::ModelOmegaD, None, 0.1).unwrap();
    for z in [c(0.3, 0.4), c(1.2, -0.1), c(-5.0, 2.0)] {
        let (g, _) = omega_d().metric_and_scalar(z);
        assert!((g - m.model_conformal(z) / z.norm_sqr()).abs() < 1e-12 * g, "{z}");
    }
}

#[test]
fn product_with_flat_base_has_fiber_curvature() {
    let m = AdiabaticMetric::new(5.0, BasePotential::Flat, FiberMetric::Identity(2)).unwrap();
    for p in sample_points() {
        assert!((scalar_curvature_at(&m, &p).unwrap() - 2.0).abs() < 1e-11);
    }
}

#[test]
fn trivial_bundle_expansion_is_exact() {
    for base in [BasePotential::Round, BasePotential::Football { beta: 0.3 }] {
        for k in [8.0, 16.0, 32.0] {
            let m = AdiabaticMetric::new(k, base.clone(), FiberMetric::Identity(2)).unwrap();
            for p in sample_points() {
                let (s0, s1) = expansion_terms(&base, &m.fiber, &p).unwrap();
                let s = scalar_curvature_at(&m, &p).unwrap();
                assert!((s - s0 - s1 / k).abs() < 1e-10, "{base:?} k={k}: {s}");
            }
        }
    }
}

#[test]
fn hyperplane_sum_is_a_product() {
    // ℙ(O(−1)²) is the product and ω̂ adds one copy of the round form to the base.
    let fiber = FiberMetric::Model(model_bundle_metric(&ParabolicBundle::new(vec![1, 1], vec![]).unwrap()).unwrap());
    for k in [1.0, 4.0, 20.0] {
        let m = AdiabaticMetric::new(k, BasePotential::Round, fiber.clone()).unwrap();
        for p in sample_points() {
            let s = scalar_curvature_at(&m, &p).unwrap();
            assert!((s - 2.0 - 2.0 / (k + 1.0)).abs() < 1e-10, "k={k}: {s}");
            let (_, s1) = expansion_terms(&BasePotential::Round, &fiber, &p).unwrap();
            assert!((s1 - 2.0).abs() < 1e-8);
        }
    }
}

/// Least-squares slope of `log|y|` against `log k`.
fn loglog_slope(ks: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ls.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn first_order_term_of_a_split_non_einstein_metric() {
    // O(1)⊕O over the round sphere: ΛF = diag(1, 0), so the fiber term is
    // (|u₁|²h₁ − |u₂|²)/(2(|u₁|²h₁ + |u₂|²)) with u = h⁻¹v.
    let fiber = FiberMetric::Model(model_bundle_metric(&ParabolicBundle::new(vec![1, 0], vec![]).unwrap()).unwrap());
    let mut seen = Vec::new();
    for p in sample_points() {
        let z = p.base_point;
        let h1 = 1.0 / (1.0 + z.norm_sqr());
        let (a, b) = (p.fiber_direction[0].norm_sqr() / h1, p.fiber_direction[1].norm_sqr());
        let direct = 2.0 + 4.0 * (a - b) / (2.0 * (a + b));
        let (_, s1) = expansion_terms(&BasePotential::Round, &fiber, &p).unwrap();
        assert!((s1 - direct).abs() < 1e-8, "{s1} vs {direct}");
        seen.push(s1);
        let ks = [8.0, 16.0, 32.0, 64.0];
        let res: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let m = AdiabaticMetric::new(k, BasePotential::Round, fiber.clone()).unwrap();
                scalar_curvature_at(&m, &p).unwrap() - 2.0 - s1 / k
            })
            .collect();
        assert!(loglog_slope(&ks, &res) < -1.9, "{res:?}");
    }
    assert!(seen.iter().any(|s| (s - seen[0]).abs() > 0.1));
}

#[test]
fn stable_example_residual_is_second_order() {
    // Base with cone points at the three parabolic points; samples in the
    // cores of the model metric around each of them.
    let fiber = FiberMetric::Model(model_bundle_metric(&three_point_example()).unwrap());
    let base = omega_d();
    let ks = [8.0, 16.0, 32.0];
    for (z, v) in [
        (c(0.08, 0.05), [c(1.0, 0.0), c(0.3, 0.1)]),
        (c(1.1, 0.1), [c(0.2, 0.0), c(1.0, 0.4)]),
        (c(0.0, -10.0), [c(0.5, 0.5), c(1.0, 0.0)]),
    ] {
        let p = RuledPoint::new(z, &v).unwrap();
        let (_, s1) = expansion_terms(&base, &fiber, &p).unwrap();
        let res: Vec<f64> = ks
            .iter()
            .map(|&k| scalar_curvature_at(&AdiabaticMetric::new(k, base.clone(), fiber.clone()).unwrap(), &p).unwrap() - 2.0 - s1 / k)
            .collect();
        assert!(loglog_slope(&ks, &res) <= -1.9, "{z}: {res:?}");
    }
}

#[test]
fn curvature_refuses_the_divisor_and_other_ranks() {
    let fiber = FiberMetric::Model(model_bundle_metric(&three_point_example()).unwrap());
    let m = AdiabaticMetric::new(8.0, BasePotential::Round, fiber).unwrap();
    let p = RuledPoint::new(c(1.0, 0.0), &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
    assert!(matches!(scalar_curvature_at(&m, &p), Err(Error::SingularData(_))));
    let cone = AdiabaticMetric::new(8.0, BasePotential::Football { beta: 0.3 }, FiberMetric::Identity(2)).unwrap();
    let p0 = RuledPoint::new(c(0.0, 0.0), &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
    assert!(matches!(scalar_curvature_at(&cone, &p0), Err(Error::SingularData(_))));
    let r3 = AdiabaticMetric::new(8.0, BasePotential::Round, FiberMetric::Identity(3)).unwrap();
    let p3 = RuledPoint::new(c(0.5, 0.0), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    assert!(matches!(scalar_curvature_at(&r3, &p3), Err(Error::Unsupported(_))));
    assert!(AdiabaticMetric::new(0.5, BasePotential::Round, FiberMetric::Identity(2)).is_err());
    assert!(RuledPoint::new(c(0.0, 0.0), &[c(0.0, 0.0), c(0.0, 0.0)]).is_err());
}

#[test]
fn fiber_spectrum_has_the_trace_free_cluster() {
    let fg = FiberGrid::new(16, 16).unwrap();
    let ev = fg.spectrum(4).unwrap();
    for l in &ev[..3] {
        assert!((l - 2.0).abs() < 0.02 * 2.0, "{ev:?}");
    }
    assert!(ev[3] > 5.0, "{ev:?}");
}

#[test]
fn dictionary_functions_are_first_eigenfunctions() {
    let fg = FiberGrid::new(16, 16).unwrap();
    let phi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
    let f = endo_eigen_dictionary(&phi, &fg).unwrap();
    let (dv, lv) = vertical_operator(&f, &fg).unwrap();
    let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for ((a, b), l) in dv.iter().zip(&f).zip(&lv) {
        assert!((a - 2.0 * b).abs() < 1e-2 * scale);
        assert!(l.abs() < 5e-2 * scale);
    }
    let (d0, l0) = vertical_operator(&vec![3.0; fg.len()], &fg).unwrap();
    assert!(d0.iter().all(|v| v.abs() < 1e-9));
    // The second application amplifies the rounding left by the first.
    assert!(l0.iter().all(|v| v.abs() < 1e-5));
}

#[test]
fn dictionary_examples() {
    let phi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
    assert!((dictionary_forward(&phi, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap() - 1.0).abs() < 1e-15);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!(dictionary_forward(&phi, &[c(s, 0.0), c(s, 0.0)]).unwrap().abs() < 1e-15);
    let zero = DMatrix::<C64>::zeros(2, 2);
    assert!(dictionary_forward(&zero, &[c(0.3, 0.1), c(0.2, 0.0)]).unwrap() == 0.0);
    assert!(dictionary_forward(&DMatrix::identity(2, 2), &[c(1.0, 0.0), c(0.0, 0.0)]).is_err());
    let skew = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
    assert!(dictionary_forward(&skew, &[c(1.0, 0.0), c(0.0, 0.0)]).is_err());
}

#[test]
fn dictionary_round_trip() {
    let fg = FiberGrid::new(12, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let (a, b, im) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let phi = DMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(b, im), c(b, -im), c(-a, 0.0)]);
        let back = dictionary_inverse(&endo_eigen_dictionary(&phi, &fg).unwrap(), &fg).unwrap();
        assert!((back - &phi).norm() < 1e-6, "{phi}");
    }
    // Constants and higher harmonics project to zero.
    let g: Vec<f64> = fg.directions.iter().map(|v| 2.0 + (v[0].norm_sqr() - 0.5).powi(2)).collect();
    let phi = dictionary_inverse(&g, &fg).unwrap();
    assert!(phi.norm() < 1e-10, "{phi}");
}

#[test]
fn vertical_operator_is_symmetric() {
    let fg = FiberGrid::new(12, 12).unwrap();
    let f: Vec<f64> = fg.directions.iter().map(|v| (v[0] * v[1]).re.powi(3) + v[1].norm_sqr()).collect();
    let g: Vec<f64> = fg.directions.iter().map(|v| (v[0] * v[1].conj()).im + v[0].norm_sqr().powi(2)).collect();
    let (_, lf) = vertical_operator(&f, &fg).unwrap();
    let (_, lg) = vertical_operator(&g, &fg).unwrap();
    let (a, b) = (fg.inner(&lf, &g), fg.inner(&f, &lg));
    assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} {b}");
    assert!(fg.inner(&lf, &lf) > 1e-3);
}

fn setup(h: Option<HermitianField>, n: usize) -> CorrectionSetup {
    let metric = football_metric(16, 16);
    let grid = FlowGrid::new(&metric, n, 2 * n - 2).unwrap();
    let b = three_point_example();
    let h = h.unwrap_or_else(|| HermitianField::from_model(&model_bundle_metric(&b).unwrap(), &b, &grid));
    let pts: Vec<Location> = b.points.iter().map(|p| p.at.location()).collect();
    CorrectionSetup::new(&metric, grid, h, &pts, 0.05, 1e-4).unwrap()
}

#[test]
fn da1_vanishes_on_trivial_arguments() {
    let s = setup(None, 21);
    let zero_phi = vec![DMatrix::zeros(2, 2); s.grid.len()];
    let v = da1_apply(&s, &vec![1.5; s.lic.disc.len()], &zero_phi).unwrap();
    let worst = v.trace_part.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(worst < 1e-6, "{worst}");
    assert!(v.tracefree_part.iter().all(|m| m.norm() == 0.0));

    let flat = setup(Some(HermitianField::identity(2, 21 * 40)), 21);
    let cst = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(-0.5, 0.0)]);
    let v = da1_apply(&flat, &vec![0.0; flat.lic.disc.len()], &vec![cst; flat.grid.len()]).unwrap();
    // Rounding in the small polar cells, divided by the difference step.
    let worst = v.tracefree_part.iter().fold(0.0f64, |a, m| a.max(m.norm()));
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn da1_kills_the_rotation_potential() {
    let s = setup(Some(HermitianField::identity(2, 21 * 40)), 21);
    let rhs = vec![0.0; s.lic.disc.len()];
    let rep = fredholm_solve(&s.metric, &rhs, &FredholmOptions::default()).unwrap();
    assert_eq!(rep.kernel_dimension, 1);
    let v = da1_apply(&s, &rep.kernel_basis[0], &vec![DMatrix::zeros(2, 2); s.grid.len()]).unwrap();
    let sup = v.trace_part.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(sup < 1e-4, "{sup}");
}

#[test]
fn first_step_contracts_the_trace_free_curvature() {
    let metric = football_metric(16, 16);
    let opts = ApproxOptions { nt: 21, ntheta: 40, ..Default::default() };
    let s_bar = metric.mean(&metric.scalar);
    let st = approx_cscK_step(&metric, &three_point_example(), None, s_bar, &opts).unwrap();
    assert!(st.eta0_sup < 1e-12);
    assert!(st.phi0_sup > 1e-2);
    assert!(st.gmres_relative_residual < 1e-6, "{}", st.gmres_relative_residual);
    assert!(st.linear_residual < 1e-5 * st.tracefree_before, "{}", st.linear_residual);
    assert!(st.fiber_contraction() < 0.5, "{} → {}", st.tracefree_before, st.tracefree_after);
}

#[test]
fn first_step_reports_unstable_bundles() {
    let p = ParabolicPoint::line_flag(Position::Finite(q(0)), vec![q(1), q(1)], [q(0), qf(1, 2)]).unwrap();
    let b = ParabolicBundle::new(vec![0, 0], vec![p]).unwrap();
    let metric = football_metric(16, 16);
    let opts = ApproxOptions { nt: 11, ntheta: 16, ..Default::default() };
    assert!(matches!(approx_cscK_step(&metric, &b, None, 0.6, &opts), Err(Error::Obstruction(_))));
}
