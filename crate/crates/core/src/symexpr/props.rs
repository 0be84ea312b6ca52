use proptest::prelude::*;

use super::*;

fn var() -> impl Strategy<Value = Var> {
    prop::sample::select(Var::JET.to_vec())
}

/// Smooth expressions over the jet variables, finite on [0.5, 1.5]^5. Every
/// built-in function appears, with arguments kept inside its smooth domain.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        var().prop_map(Expr::var),
        (-3i32..=3).prop_map(|k| Expr::constant(f64::from(k) * 0.5)),
    ];
    leaf.prop_recursive(6, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), 2i32..=3).prop_map(|(a, n)| a.powi(n)),
            inner.clone().prop_map(|a| -a),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.clone().prop_map(|a| a.sin().exp()),
            inner.clone().prop_map(|a| (a.powi(2) + 1.0).ln()),
            inner.clone().prop_map(|a| (a.powi(2) + 1.0).sqrt()),
            inner.clone().prop_map(|a| (a.cos() + 2.0).abs()),
            // divisor bounded below by 1
            (inner.clone(), inner).prop_map(|(a, b)| a / (b.powi(2) + 1.0)),
        ]
    })
}

fn jet_point() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(0.5f64..1.5)
}

fn at(v: &[f64; 5]) -> EvalPoint {
    EvalPoint::jet(v[0], v[1], v[2], v[3], v[4])
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn display_parse_round_trip(e in smooth_expr(), v in jet_point()) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());
        let (a, b) = (e.eval(&at(&v)).unwrap(), back.eval(&at(&v)).unwrap());
        prop_assert!(close(a, b, 1e-12), "{}: {} vs {}", text, a, b);
    }

    #[test]
    fn derivative_matches_central_difference(e in smooth_expr(), v in jet_point(), k in 0usize..5) {
        let var = Var::JET[k];
        let exact = e.diff(var).eval(&at(&v)).unwrap();
        let h = 1e-5;
        let (mut lo, mut hi) = (v, v);
        lo[k] -= h;
        hi[k] += h;
        let (flo, scale_lo) = e.eval_with_scale(&at(&lo)).unwrap();
        let (fhi, scale_hi) = e.eval_with_scale(&at(&hi)).unwrap();
        let fd = (fhi - flo) / (2.0 * h);
        // truncation O(h^2) plus roundoff relative to the evaluation scale
        let tol = 1e-6 * (1.0 + exact.abs()) + 1e-12 * scale_lo.max(scale_hi) / h;
        prop_assert!((exact - fd).abs() <= tol, "d/d{} {}: {} vs {}", var, e, exact, fd);
    }

    #[test]
    fn derivative_is_linear(
        a in smooth_expr(),
        b in smooth_expr(),
        ca in -2.0f64..2.0,
        cb in -2.0f64..2.0,
        v in jet_point(),
        k in 0usize..5,
    ) {
        let var = Var::JET[k];
        let lhs = (ca * &a + cb * &b).diff(var).eval(&at(&v)).unwrap();
        let rhs = ca * a.diff(var).eval(&at(&v)).unwrap() + cb * b.diff(var).eval(&at(&v)).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn product_rule(a in smooth_expr(), b in smooth_expr(), v in jet_point(), k in 0usize..5) {
        let var = Var::JET[k];
        let pt = at(&v);
        let lhs = (&a * &b).diff(var).eval(&pt).unwrap();
        let rhs = a.diff(var).eval(&pt).unwrap() * b.eval(&pt).unwrap()
            + a.eval(&pt).unwrap() * b.diff(var).eval(&pt).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10), "{} vs {}", lhs, rhs);
    }
}
