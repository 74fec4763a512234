use annealed_green::kernel::KernelMeta;
use annealed_green::lattice::LatticeField;
use annealed_green::montecarlo::{apply_operator, sample_field};
use annealed_green::perturbation::{kdelta_kernel, Law, MomentModel};
use annealed_green::symbols::{helmholtz_symbol, TorusPoint};
use annealed_green::{Boundary, LatticePoint, MatrixKernel};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -std::f64::consts::PI..std::f64::consts::PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_an_orthogonal_rank_one_projector(a in angle(), b in angle(), c in angle()) {
        prop_assume!(a.abs() + b.abs() + c.abs() > 1e-6);
        let f = helmholtz_symbol(&TorusPoint::new(vec![a, b, c]).unwrap()).unwrap();
        prop_assert!((&f * &f - &f).norm() < 1e-12);
        prop_assert!((f.trace().re - 1.0).abs() < 1e-12);
        prop_assert!((&f - f.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn random_operator_is_self_adjoint(seed in 0u64..1000, delta in 0.0f64..0.9, periodic in any::<bool>()) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::ZeroExtension };
        let field = sample_field(&Law::Uniform, 3, 5, seed, 0).unwrap();
        let u = LatticeField::from_fn(vec![-2; 3], vec![5; 3], boundary, |x| (x[0] * 3 - x[1] + x[2] * x[2]) as f64).unwrap();
        let v = LatticeField::from_fn(vec![-2; 3], vec![5; 3], boundary, |x| ((x[0] + 2 * x[1]) as f64).sin() + x[2] as f64).unwrap();
        let lu = apply_operator(&field, delta, boundary, &u).unwrap();
        let lv = apply_operator(&field, delta, boundary, &v).unwrap();
        let (a, b) = (lu.inner(&v).unwrap(), u.inner(&lv).unwrap());
        prop_assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
        // Positive semidefinite as well.
        prop_assert!(lu.inner(&u).unwrap() >= -1e-12);
    }

    #[test]
    fn field_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 27), periodic in any::<bool>()) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::ZeroExtension };
        let f = LatticeField::from_values(vec![-1, 0, 4], vec![3; 3], boundary, values).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        prop_assert_eq!(LatticeField::read_csv(&buf[..]).unwrap(), f.clone());
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        prop_assert_eq!(LatticeField::read_binary(&bin[..]).unwrap(), f);
    }

    #[test]
    fn kernel_csv_round_trip(entries in prop::collection::vec((-2i64..=2, -2i64..=2, -2i64..=2, prop::collection::vec(-1.0f64..1.0, 9)), 1..10)) {
        let mut k = MatrixKernel::new(3, 2, 0.1).unwrap();
        for (a, b, c, m) in entries {
            k.insert(LatticePoint::new(vec![a, b, c]).unwrap(), m).unwrap();
        }
        let meta = KernelMeta { d: 3, delta: 0.1, radius: 2, model: "rademacher".into(), order: 3, resolution: 32 };
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        prop_assert_eq!(MatrixKernel::read_csv(&buf[..], &meta).unwrap(), k);
    }
}

#[test]
fn series_kernel_is_adjoint_symmetric_for_every_law() {
    for model in [MomentModel::rademacher(), MomentModel::uniform(), MomentModel::two_point(0.7).unwrap()] {
        let k = kdelta_kernel(&model, 3, 0.2, 3, 2, 32).unwrap();
        assert!(k.symmetry_defect() <= 1e-12, "{}", model.name());
    }
}
