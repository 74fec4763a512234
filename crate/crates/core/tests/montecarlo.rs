use annealed_green::lattice::LatticeField;
use annealed_green::montecarlo::*;
use annealed_green::perturbation::{Law, MomentModel};
use annealed_green::quadrature::free_green;
use annealed_green::{Boundary, LatticePoint, MultiIndex};

#[test]
fn rademacher_sites_have_clt_sized_mean_and_exact_second_moment() {
    // 10^6 draws: 38 samples of a 30^3 box.
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for index in 0..38 {
        let f = sample_field(&Law::Rademacher, 3, 30, 11, index).unwrap();
        sum += f.values.iter().sum::<f64>();
        sq += f.values.iter().map(|v| v * v).sum::<f64>();
        n += f.values.len() as f64;
    }
    assert!(n >= 1e6);
    assert!((sum / n).abs() < 4e-3);
    assert!((sq / n - 1.0).abs() < 0.01);
}

#[test]
fn sample_second_moments_match_the_models() {
    for (law, model) in [(Law::Uniform, MomentModel::uniform()), (Law::TwoPoint { p: 0.7 }, MomentModel::two_point(0.7).unwrap())] {
        let f = sample_field(&law, 3, 40, 5, 0).unwrap();
        let m2 = f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64;
        let want = model.moment(2).unwrap();
        assert!((m2 / want - 1.0).abs() < 0.01, "{} {m2} {want}", law.tag());
    }
}

#[test]
fn zero_contrast_box_is_close_to_the_free_green_function() {
    let field = sample_field(&Law::Rademacher, 3, 33, 0, 0).unwrap();
    let p = BoxProblem { field, delta: 0.0, boundary: Boundary::ZeroExtension, source: vec![0; 3] };
    let s = solve_box(&p, 1e-10).unwrap();
    let free = free_green(&LatticePoint::origin(3)).unwrap();
    let center = s.field.get(&[0, 0, 0]);
    assert!(center < free && (free - center) / free < 0.02, "{center} {free}");
}

#[test]
fn boundary_bias_shrinks_with_the_box() {
    let q = nalgebra::DMatrix::identity(3, 3);
    let x = vec![vec![2, 0, 0]];
    let b: Vec<f64> = [9, 17, 33].iter().map(|&l| box_bias(&q, l, &x).unwrap()[0].abs()).collect();
    assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
}

#[test]
fn solutions_are_linear_in_the_source() {
    let field = sample_field(&Law::Uniform, 3, 9, 2, 3).unwrap();
    let p = BoxProblem { field: field.clone(), delta: 0.5, boundary: Boundary::ZeroExtension, source: vec![0, 1, 0] };
    let u = solve_box(&p, 1e-12).unwrap().field;
    let lu = apply_operator(&field, 0.5, Boundary::ZeroExtension, &u).unwrap();
    // L(2u) = 2 L u exactly up to rounding.
    let doubled = LatticeField::from_values(u.lo().to_vec(), u.extent().to_vec(), u.boundary(), u.values().iter().map(|v| 2.0 * v).collect()).unwrap();
    let l2u = apply_operator(&field, 0.5, Boundary::ZeroExtension, &doubled).unwrap();
    for (a, b) in l2u.values().iter().zip(lu.values()) {
        assert!((a - 2.0 * b).abs() < 1e-10);
    }
}

#[test]
fn zero_contrast_estimates_have_no_spread() {
    let cfg = McConfig::new(Law::Rademacher, 3, 0.0, 13, Boundary::ZeroExtension, 6, 4);
    let est = estimate_annealed_green(&cfg, &[vec![0, 0, 0], vec![1, 1, 0]]).unwrap();
    assert!(est.iter().all(|e| e.stderr == 0.0 && e.n == 6 && e.failed == 0));
    let per = McConfig { boundary: Boundary::Periodic, ..cfg };
    for f in estimate_kdelta_form(&per, &[vec![1, 0, 0], vec![1, 2, 3]]).unwrap() {
        assert!(f.form.mean.abs() < 1e-10, "{:?}", f.form);
    }
}

#[test]
fn derivative_of_order_zero_is_the_value() {
    let cfg = McConfig::new(Law::Rademacher, 3, 0.2, 13, Boundary::ZeroExtension, 8, 4);
    let pts = vec![vec![1, 0, 0]];
    let a = estimate_annealed_green(&cfg, &pts).unwrap();
    let b = estimate_derivative(&cfg, &pts, &MultiIndex::zero(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn points_near_the_boundary_are_rejected() {
    let cfg = McConfig::new(Law::Rademacher, 3, 0.2, 17, Boundary::ZeroExtension, 2, 4);
    assert!(estimate_annealed_green(&cfg, &[vec![6, 0, 0]]).is_err());
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let cfg = McConfig::new(Law::TwoPoint { p: 0.7 }, 3, 0.3, 11, Boundary::ZeroExtension, 24, 9);
    let pts = vec![vec![0, 0, 0], vec![1, 1, 0]];
    let one = with_workers(1, || estimate_annealed_green(&cfg, &pts)).unwrap().unwrap();
    let four = with_workers(4, || estimate_annealed_green(&cfg, &pts)).unwrap().unwrap();
    for (a, b) in one.iter().zip(&four) {
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}

#[test]
fn standard_error_halves_when_samples_quadruple() {
    let base = McConfig::new(Law::Rademacher, 3, 0.3, 9, Boundary::ZeroExtension, 500, 21);
    let pts = vec![vec![0, 0, 0]];
    let small = estimate_annealed_green(&base, &pts).unwrap()[0].stderr;
    let large = estimate_annealed_green(&McConfig { samples: 2000, ..base }, &pts).unwrap()[0].stderr;
    let ratio = small / large;
    assert!((ratio / 2.0 - 1.0).abs() < 0.3, "{ratio}");
}

#[test]
fn contrast_barely_changes_the_iteration_count() {
    // A centred source is cubically symmetric, which lets CG at zero contrast finish early;
    // an off-centre source compares the conditioning itself.
    let iterations = |delta: f64| {
        let field = sample_field(&Law::Rademacher, 3, 17, 1, 0).unwrap();
        let p = BoxProblem { field, delta, boundary: Boundary::ZeroExtension, source: vec![1, -2, 3] };
        solve_box(&p, 1e-10).unwrap().iterations as f64
    };
    let (a, b) = (iterations(0.0), iterations(0.15));
    assert!(b < 1.5 * a, "{a} {b}");
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let field = sample_field(&Law::Rademacher, 3, 9, 1, 0).unwrap();
    let p = BoxProblem { field, delta: 0.5, boundary: Boundary::ZeroExtension, source: vec![0; 3] };
    assert!(matches!(solve_box(&p, 1e-30), Err(annealed_green::Error::NotConverged { .. })));
}

#[test]
fn zero_contrast_derivative_matches_free_differences_up_to_box_bias() {
    use annealed_green::quadrature::difference_stencil;
    let extent = 17;
    let cfg = McConfig::new(Law::Rademacher, 3, 0.0, extent, Boundary::ZeroExtension, 2, 3);
    let e1 = MultiIndex::unit(3, 0);
    let x = [1i64, 1, 0];
    let est = estimate_derivative(&cfg, &[x.to_vec()], &e1).unwrap()[0].mean;
    let stencil = difference_stencil(&e1).unwrap();
    let pts: Vec<Vec<i64>> = stencil.iter().map(|(s, _)| x.iter().zip(s).map(|(a, b)| a + b).collect()).collect();
    let bias = box_bias(&nalgebra::DMatrix::identity(3, 3), extent, &pts).unwrap();
    let mut exact = 0.0;
    let mut shift = 0.0;
    for ((p, (_, w)), b) in pts.iter().zip(&stencil).zip(&bias) {
        exact += w * free_green(&LatticePoint::new(p.clone()).unwrap()).unwrap();
        shift += w * b;
    }
    assert!((est - shift - exact).abs() < 1e-8, "{est} {shift} {exact}");
}
