use nalgebra::Matrix3;
use polyfund::epipolar::{fix_sign, project_rank2, standardize, PointMatch};
use polyfund::io::{parse_matches, write_matches};
use polyfund::multiview::{canonical_cameras, distance_up_to_sign, format_sig, fundamental_from_cameras};
use polyfund::poly::{dirac_moments, localizing_matrix, moment_matrix, num_monomials, riesz, MonomialBasis, Polynomial};
use polyfund::simulator::add_noise;
use proptest::prelude::*;

fn poly2(coefs: &[f64]) -> Polynomial {
    // dense polynomial of degree <= 2 in two variables, graded order
    let exps = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
    Polynomial::from_terms(2, exps.iter().zip(coefs).map(|(e, c)| (e.to_vec(), *c)))
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn point_match() -> impl Strategy<Value = PointMatch> {
    (finite(), finite(), finite(), finite()).prop_map(|(a, b, c, d)| PointMatch::new(a, b, c, d))
}

fn matrix3() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-1.0..1.0f64).prop_map(|a| Matrix3::from_row_slice(&a))
}

proptest! {
    #[test]
    fn basis_indexing_is_a_bijection(n in 1usize..5, t in 0usize..5) {
        let b = MonomialBasis::new(n, t);
        prop_assert_eq!(b.len(), num_monomials(n, t));
        for i in 0..b.len() {
            prop_assert_eq!(b.index_of(b.monomial_at(i)), Some(i));
        }
        let degrees: Vec<usize> = b.monomials().iter().map(|m| m.degree()).collect();
        prop_assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn riesz_of_point_mass_is_evaluation(x in prop::array::uniform2(-2.0..2.0f64), c in prop::array::uniform6(-3.0..3.0f64)) {
        let p = poly2(&c);
        let y = dirac_moments(&x, 2);
        let lhs = riesz(&y, &p).unwrap();
        let rhs = p.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn point_mass_moment_matrix_is_rank_one_psd(x in prop::array::uniform2(-1.5..1.5f64)) {
        let m = moment_matrix(&dirac_moments(&x, 4), 2).unwrap();
        prop_assert_eq!(&m, &m.transpose());
        let eig = m.clone().symmetric_eigen().eigenvalues;
        let top = eig.max();
        prop_assert!(eig.iter().all(|&e| e >= -1e-12 * top));
        prop_assert_eq!(eig.iter().filter(|&&e| e > 1e-9 * top).count(), 1);
    }

    #[test]
    fn localizing_matrix_is_linear_in_q(
        a in prop::array::uniform6(-2.0..2.0f64),
        b in prop::array::uniform6(-2.0..2.0f64),
        s in -3.0..3.0f64,
        x in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let y = dirac_moments(&x, 4);
        let (pa, pb) = (poly2(&a), poly2(&b));
        let lhs = localizing_matrix(&y, &(&pa + &pb.scale(s)), 1).unwrap();
        let rhs = localizing_matrix(&y, &pa, 1).unwrap() + localizing_matrix(&y, &pb, 1).unwrap() * s;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * 100.0);
    }

    #[test]
    fn match_files_round_trip(ms in prop::collection::vec(point_match(), 8..30)) {
        let back = parse_matches(&write_matches(&ms)).unwrap();
        prop_assert_eq!(back, ms);
    }

    #[test]
    fn rank2_projection_is_unit_rank2_and_sign_fixed(m in matrix3()) {
        prop_assume!(m.singular_values()[1] > 1e-6);
        let (p, dist) = project_rank2(&m).unwrap();
        prop_assert!((p.m.norm() - 1.0).abs() < 1e-12);
        prop_assert!(p.det().abs() < 1e-12);
        prop_assert!(dist >= 0.0);
        prop_assert_eq!(fix_sign(p.m), p.m);
        let big = p.m.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
        prop_assert!(big > 0.0);
    }

    #[test]
    fn canonical_cameras_reproduce_f(m in matrix3()) {
        let svd = m.svd(true, true);
        let mut s = svd.singular_values;
        prop_assume!(s[1] > 1e-3 * s[0]);
        s[2] = 0.0;
        let f = svd.u.unwrap() * Matrix3::from_diagonal(&s) * svd.v_t.unwrap();
        let cams = canonical_cameras(&f).unwrap();
        let g = fundamental_from_cameras(&cams.p, &cams.pp);
        prop_assert!(distance_up_to_sign(&f, &g) < 1e-8);
    }

    #[test]
    fn standardization_centres_and_scales(ms in prop::collection::vec(
        (-500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64)
            .prop_map(|(a, b, c, d)| PointMatch::new(a, b, c, d)), 8..40)) {
        let (std, _) = standardize(&ms).unwrap();
        let n = std.len() as f64;
        for pick in [|m: &PointMatch| m.q, |m: &PointMatch| m.qp] {
            let (cx, cy) = std.iter().map(pick).fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
            prop_assert!((cx / n).abs() < 1e-9 && (cy / n).abs() < 1e-9);
            let rms = (std.iter().map(pick).map(|p| p.x * p.x + p.y * p.y).sum::<f64>() / n).sqrt();
            prop_assert!((rms - 2f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_deterministic(ms in prop::collection::vec(point_match(), 1..20), seed: u64) {
        prop_assert_eq!(add_noise(&ms, 0.0, seed), ms.clone());
        prop_assert_eq!(add_noise(&ms, 1.5, seed), add_noise(&ms, 1.5, seed));
        prop_assert!(add_noise(&ms, 1.5, seed).iter().all(|m| m.q.z == 1.0 && m.qp.z == 1.0));
    }

    #[test]
    fn format_sig_keeps_six_digits(x in prop_oneof![-1e12..1e12f64, -1e-3..1e-3f64]) {
        prop_assume!(x != 0.0);
        let back: f64 = format_sig(x, 6).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs());
    }
}
