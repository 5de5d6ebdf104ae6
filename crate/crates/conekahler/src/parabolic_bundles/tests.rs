use super::*;
use crate::cone_geometry::C64;

fn fin(x: i128) -> Position {
    Position::Finite(q(x))
}

fn half() -> [Q; 2] {
    [q(0), qf(1, 2)]
}

#[test]
fn three_point_degree_and_slope() {
    let b = three_point_example();
    assert_eq!(parabolic_degree(&b), qf(3, 2));
    assert_eq!(parabolic_slope(&b), qf(3, 4));
}

#[test]
fn three_point_is_stable_with_margin_one_quarter() {
    let v = stability_check(&three_point_example()).unwrap();
    assert!(v.stable && v.polystable);
    assert_eq!(v.margin_q, Some(qf(1, 4)));
    assert!(v.witness.is_none());
    assert_eq!(v.endomorphism_dimension, Some(1));
    // The flag line at 0 and the degree -1 line through all three flag lines both attain the margin.
    assert!(v.candidates.iter().any(|c| c.family == "line" && c.degree == -1 && c.margin_q == qf(1, 4)));
}

#[test]
fn one_point_is_unstable_with_flag_line_witness() {
    let p = ParabolicPoint::line_flag(fin(0), vec![q(1), q(1)], half()).unwrap();
    let b = ParabolicBundle::new(vec![0, 0], vec![p]).unwrap();
    let v = stability_check(&b).unwrap();
    assert!(!v.stable && !v.semistable && !v.polystable);
    assert_eq!(v.margin_q, Some(qf(-1, 4)));
    let w = v.witness.unwrap();
    assert_eq!((w.rank, w.degree), (1, 0));
    assert_eq!(w.sub.fiber(&b, &fin(0)), vec![vec![q(1), q(1)]]);
}

#[test]
fn sum_of_equal_line_bundles_is_polystable() {
    let b = ParabolicBundle::new(vec![1, 1], vec![]).unwrap();
    let v = stability_check(&b).unwrap();
    assert!(!v.stable && v.semistable && v.polystable);
    assert_eq!(v.margin_q, Some(q(0)));
    assert_eq!(v.polystable_blocks.unwrap().len(), 2);
}

#[test]
fn non_split_flags_block_polystability() {
    // Semistable of margin 0, but the flag line (1,1) does not split along the summands.
    let w = [q(0), qf(1, 2)];
    let pts = vec![
        ParabolicPoint::line_flag(fin(0), vec![q(1), q(0)], w).unwrap(),
        ParabolicPoint::line_flag(Position::Infinity, vec![q(1), q(1)], w).unwrap(),
    ];
    let b = ParabolicBundle::new(vec![0, 0], pts).unwrap();
    let v = stability_check(&b).unwrap();
    assert_eq!(v.margin_q, Some(q(0)));
    assert!(v.semistable && !v.stable && !v.polystable);
}

#[test]
fn unequal_degrees_destabilize_by_top_summand() {
    let b = ParabolicBundle::new(vec![2, 0], vec![]).unwrap();
    let v = stability_check(&b).unwrap();
    assert_eq!(v.margin_q, Some(q(-1)));
    assert_eq!(v.witness.unwrap().sub, SubBundle::Summands(vec![0]));
}

#[test]
fn sub_and_quotient_degrees_add_up() {
    let b = three_point_example();
    let e = parabolic_degree(&b);
    for c in candidates(&b, 3) {
        let s = induced_structure(&b, &c.sub).unwrap();
        let qs = quotient_structure(&b, &c.sub).unwrap();
        assert_eq!(s.pardeg + qs.pardeg, e, "{}", c.description);
        assert_eq!(s.rank + qs.rank, b.rank);
    }
}

#[test]
fn shifting_weights_at_a_point_keeps_the_verdict() {
    let base = three_point_example();
    let mut shifted = base.clone();
    shifted.points[1].weights = vec![qf(1, 5), qf(7, 10)];
    let (a, b) = (stability_check(&base).unwrap(), stability_check(&shifted).unwrap());
    assert_eq!(a.stable, b.stable);
    assert_eq!(a.margin_q, b.margin_q);
}

#[test]
fn rank_three_candidates_include_kernels() {
    let w = [q(0), qf(1, 3), qf(2, 3)];
    let basis = |v: [[i128; 3]; 3]| v.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect::<Vec<Vec<Q>>>();
    let pts = vec![
        ParabolicPoint::new(fin(0), basis([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), vec![3, 2, 1], w.to_vec()).unwrap(),
        ParabolicPoint::new(fin(1), basis([[0, 0, 1], [0, 1, 0], [1, 0, 0]]), vec![3, 2, 1], w.to_vec()).unwrap(),
        ParabolicPoint::new(Position::Infinity, basis([[1, 1, 1], [1, 2, 3], [0, 0, 1]]), vec![3, 2, 1], w.to_vec())
            .unwrap(),
    ];
    let b = ParabolicBundle::new(vec![0, 0, 0], pts).unwrap();
    assert_eq!(parabolic_degree(&b), q(3));
    let v = stability_check(&b).unwrap();
    assert!(v.candidates.iter().any(|c| c.family == "kernel"));
    for c in &v.candidates {
        let s = induced_structure(&b, &c.sub).unwrap();
        let qs = quotient_structure(&b, &c.sub).unwrap();
        assert_eq!(s.pardeg + qs.pardeg, q(3));
    }
}

#[test]
fn rank_four_is_unsupported() {
    let b = ParabolicBundle::new(vec![0; 4], vec![]).unwrap();
    assert!(matches!(stability_check(&b), Err(Error::Unsupported(_))));
}

#[test]
fn invalid_flags_are_rejected() {
    assert!(ParabolicPoint::line_flag(fin(0), vec![q(0), q(0)], half()).is_err());
    assert!(ParabolicPoint::line_flag(fin(0), vec![q(1), q(0)], [qf(1, 2), qf(1, 4)]).is_err());
    assert!(ParabolicPoint::line_flag(fin(0), vec![q(1), q(0)], [q(0), q(1)]).is_err());
    let p = ParabolicPoint::line_flag(fin(0), vec![q(1), q(0)], half()).unwrap();
    assert!(ParabolicBundle::new(vec![0, 0], vec![p.clone(), p]).is_err());
    let bad = SubBundle::Line { degree: 0, section: vec![Poly(vec![q(0), q(1)]), Poly::zero()] };
    assert!(induced_structure(&three_point_example(), &bad).is_err());
}

#[test]
fn model_metric_of_hyperplane_bundle_has_unit_curvature() {
    let b = ParabolicBundle::new(vec![1], vec![]).unwrap();
    let m = model_bundle_metric(&b).unwrap();
    for z in [C64::new(0.3, 0.1), C64::new(-2.0, 1.5)] {
        let g = 1.0 / (1.0 + z.norm_sqr()).powi(2);
        let th = m.mean_curvature(z, g);
        assert!((th[(0, 0)].re - 1.0).abs() < 1e-7, "{}", th[(0, 0)]);
    }
}

#[test]
fn model_metric_curvature_integrates_to_parabolic_degree() {
    let b = three_point_example();
    let m = model_bundle_metric(&b).unwrap();
    // Plane coordinates z = tan(v/2) e^{iφ}; midpoint rule.
    let (nv, nphi) = (160, 96);
    let mut total = 0.0;
    for i in 0..nv {
        let v = std::f64::consts::PI * (i as f64 + 0.5) / nv as f64;
        let r = (v / 2.0).tan();
        let dr = 0.5 / (v / 2.0).cos().powi(2) * std::f64::consts::PI / nv as f64;
        for j in 0..nphi {
            let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nphi as f64;
            let z = C64::from_polar(r, phi);
            total += 2.0 * m.curvature_density(z) * r * dr * 2.0 * std::f64::consts::PI / nphi as f64;
        }
    }
    let expect = 2.0 * std::f64::consts::PI * 1.5;
    assert!((total - expect).abs() < 1e-2 * expect, "{total} vs {expect}");
}

#[test]
fn model_metric_jets_match_finite_differences() {
    use crate::jet::{Jet, JetSpace};
    let b = ParabolicBundle::new(
        vec![1, 0],
        vec![
            ParabolicPoint::line_flag(fin(0), vec![q(1), q(2)], half()).unwrap(),
            ParabolicPoint::line_flag(Position::Infinity, vec![q(1), q(-1)], [q(0), qf(1, 3)]).unwrap(),
        ],
    )
    .unwrap();
    let m = model_bundle_metric(&b).unwrap();
    let sp = JetSpace::new(2, 2);
    let h = 1e-4;
    // Points inside a cutoff core, in a transition annulus and in the background.
    for z in [C64::new(0.1, 0.05), C64::new(0.3, -0.2), C64::new(1.5, 2.0), C64::new(-4.0, 3.0)] {
        let jets = m.eval_jet(&Jet::var(&sp, 0, z.re), &Jet::var(&sp, 1, z.im));
        for i in 0..2 {
            for j in 0..2 {
                let f = |w: C64| m.eval(w)[(i, j)];
                let e = &jets[i][j];
                let val = |a: [usize; 2]| C64::new(e.re.derivative(&a), e.im.derivative(&a));
                let (c, i_) = (C64::new(h, 0.0), C64::new(0.0, h));
                let fx = (f(z + c) - f(z - c)) / (2.0 * h);
                let fyy = (f(z + i_) - f(z) * 2.0 + f(z - i_)) / (h * h);
                let fxy = (f(z + c + i_) - f(z + c - i_) - f(z - c + i_) + f(z - c - i_)) / (4.0 * h * h);
                assert!((val([0, 0]) - f(z)).norm() < 1e-13);
                // Central differences carry O(h²) truncation, largest in the cutoff annulus.
                assert!((val([1, 0]) - fx).norm() < 1e-6 * (1.0 + fx.norm()), "{z}");
                assert!((val([0, 2]) - fyy).norm() < 5e-4 * (1.0 + fyy.norm()), "{z}");
                assert!((val([1, 1]) - fxy).norm() < 5e-4 * (1.0 + fxy.norm()), "{z}");
            }
        }
    }
}
