use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use setguard::reach::{rors_point, rors_set};
use setguard::setkernel::{inner_zonotope, project};
use setguard::{HPolytope, MatrixZonotope, Zonotope};

fn zonotope(n: usize, g: usize) -> impl Strategy<Value = Zonotope> {
    (
        prop::collection::vec(-5.0..5.0f64, n),
        prop::collection::vec(-1.0..1.0f64, n * g),
    )
        .prop_map(move |(c, g_)| {
            Zonotope::new(DVector::from_vec(c), DMatrix::from_vec(n, g, g_)).unwrap()
        })
}

fn unit_vec(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| DVector::from_vec(v).normalize())
}

fn beta(g: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..=1.0f64, g).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_points_are_members(z in zonotope(3, 5), b in beta(5)) {
        let x = z.center() + z.generators() * b;
        prop_assert!(z.contains_point(&x));
    }

    #[test]
    fn support_adds_under_minkowski_sum(a in zonotope(2, 3), b in zonotope(2, 4), d in unit_vec(2)) {
        let s = a.minkowski_sum(&b).unwrap();
        prop_assert!((s.support(&d) - a.support(&d) - b.support(&d)).abs() < 1e-9);
    }

    #[test]
    fn support_transforms_under_linear_maps(
        z in zonotope(2, 3),
        m in prop::collection::vec(-2.0..2.0f64, 4),
        d in unit_vec(2),
    ) {
        let m = DMatrix::from_vec(2, 2, m);
        let img = z.linear_map(&m).unwrap();
        prop_assert!((img.support(&d) - z.support(&(m.transpose() * &d))).abs() < 1e-9);
    }

    #[test]
    fn reduction_is_an_outer_bound(z in zonotope(2, 12), d in unit_vec(2)) {
        let r = z.reduce(4);
        prop_assert!(r.num_generators() <= 4);
        prop_assert!(r.support(&d) >= z.support(&d) - 1e-9);
    }

    #[test]
    fn halfspace_form_agrees_with_generators(z in zonotope(2, 4), b in beta(4), d in unit_vec(2)) {
        let h = z.to_hpolytope().unwrap();
        let x = z.center() + z.generators() * b;
        prop_assert!(h.contains_point(&x));
        prop_assert!((h.support(&d).unwrap() - z.support(&d)).abs() < 1e-6);
    }

    #[test]
    fn inner_zonotope_stays_inside(lo in prop::collection::vec(-3.0..0.0f64, 2), w in prop::collection::vec(0.5..3.0f64, 2)) {
        let lo = DVector::from_vec(lo);
        let hi = &lo + DVector::from_vec(w);
        // A box with one corner cut off.
        let mut p = HPolytope::from_box(&lo, &hi).unwrap();
        let mid = (&lo + &hi) * 0.5;
        let cut = HPolytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, mid.sum() + 0.25 * (hi[0] - lo[0]))).unwrap();
        p = p.intersect(&cut).unwrap();
        let z = inner_zonotope(&p).unwrap();
        prop_assert!(p.contains_zonotope(&z));
    }

    #[test]
    fn projection_contains_shadows(x in -1.0..1.0f64, y in -1.0..1.0f64, u in -0.5..0.5f64) {
        // {(x, y, u) : |x + u| ≤ 1, |y − u| ≤ 1, |u| ≤ 0.5}
        let h = DMatrix::from_row_slice(6, 3, &[
            1.0, 0.0, 1.0, -1.0, 0.0, -1.0,
            0.0, 1.0, -1.0, 0.0, -1.0, 1.0,
            0.0, 0.0, 1.0, 0.0, 0.0, -1.0,
        ]);
        let p = HPolytope::new(h, DVector::from_row_slice(&[1.0, 1.0, 1.0, 1.0, 0.5, 0.5])).unwrap();
        let pt = DVector::from_row_slice(&[x, y, u]);
        prop_assume!(p.contains_point(&pt));
        let shadow = project(&p, &[0, 1]).unwrap();
        prop_assert!(shadow.contains_point(&DVector::from_row_slice(&[x, y])));
    }

    #[test]
    fn reachable_sets_contain_every_model_successor(
        c in prop::collection::vec(-1.0..1.0f64, 6),
        g in prop::collection::vec(-0.05..0.05f64, 12),
        bm in beta(2),
        bx in beta(2),
        bw in beta(2),
        u in -1.0..1.0f64,
    ) {
        let m = MatrixZonotope::new(
            DMatrix::from_vec(2, 3, c),
            vec![DMatrix::from_vec(2, 3, g[..6].to_vec()), DMatrix::from_vec(2, 3, g[6..].to_vec())],
        ).unwrap();
        let xs = Zonotope::new(DVector::from_row_slice(&[0.5, -0.5]), DMatrix::identity(2, 2) * 0.2).unwrap();
        let w = Zonotope::new(DVector::zeros(2), DMatrix::identity(2, 2) * 0.01).unwrap();
        let model = m.center() + &m.generators()[0] * bm[0] + &m.generators()[1] * bm[1];
        let x = xs.center() + xs.generators() * bx;
        let u = DVector::from_element(1, u);
        let z = DVector::from_row_slice(&[x[0], x[1], u[0]]);
        let next = &model * z + w.generators() * bw;
        prop_assert!(rors_point(&m, &x, &u, &w).unwrap().contains_point(&next));
        prop_assert!(rors_set(&m, &xs, &u, &w).unwrap().contains_point(&next));
    }
}
