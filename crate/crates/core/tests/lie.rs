use horoshear_core::lie::{
    adjoint, basis_matrix, exp_algebra, renormalized_tangent, renormalizing_element,
    sheared_tangent,
};
use horoshear_core::{AlgebraVector, Mat2};
use proptest::prelude::*;

/// `exp` by scaling and squaring of a Taylor polynomial; independent of the closed form.
fn exp_oracle(w: &AlgebraVector, s: f64) -> Mat2 {
    let m = basis_matrix(w).scale(s);
    let norm = m.max_abs().max(1e-300);
    let squarings = (norm.log2().ceil().max(0.0) as i32) + 4;
    let a = m.scale(0.5f64.powi(squarings));
    let mut term = Mat2::IDENTITY;
    let mut sum = Mat2::IDENTITY;
    for k in 1..30 {
        term = (term * a).scale(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn coeff() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

fn vector() -> impl Strategy<Value = AlgebraVector> {
    (coeff(), coeff(), coeff()).prop_map(|(v, x, u)| AlgebraVector::new(v, x, u))
}

/// Directions with `max |coefficient| = 1`.
fn normalized() -> impl Strategy<Value = AlgebraVector> {
    vector()
        .prop_filter("nonzero", |w| w.max_abs() > 1e-3)
        .prop_map(|w| w.scale(1.0 / w.max_abs()))
}

#[test]
fn basis_examples() {
    assert_eq!(
        basis_matrix(&AlgebraVector::U),
        Mat2::new(0.0, 1.0, 0.0, 0.0)
    );
    assert_eq!(
        basis_matrix(&AlgebraVector::X),
        Mat2::new(0.5, 0.0, 0.0, -0.5)
    );
    assert_eq!(
        basis_matrix(&AlgebraVector::V),
        Mat2::new(0.0, 0.0, 1.0, 0.0)
    );
}

#[test]
fn exp_examples() {
    let t = 3.7;
    assert_eq!(
        exp_algebra(&AlgebraVector::U, t),
        Mat2::new(1.0, t, 0.0, 1.0)
    );
    let d = exp_algebra(&AlgebraVector::X, 1.3);
    assert!(d.max_diff(&Mat2::new(0.65f64.exp(), 0.0, 0.0, (-0.65f64).exp())) < 1e-15);
    for s in [-2.0, -0.3, 0.0, 0.7, 1.9, 3.0] {
        let r = exp_algebra(&AlgebraVector::new(1.0, 0.0, -1.0), s);
        assert!(r.max_diff(&Mat2::rotation(s)) < 1e-15);
        assert!(r.max_diff(&exp_oracle(&AlgebraVector::new(1.0, 0.0, -1.0), s)) < 1e-12);
    }
}

#[test]
fn exp_near_the_nilpotent_boundary_is_continuous() {
    // Δ crosses zero through tiny positive and negative values.
    for eps in [1e-16, 1e-13, 1e-10, 1e-7, 1e-4] {
        for sign in [-1.0, 1.0] {
            let w = AlgebraVector::new(sign * eps, 0.0, 1.0);
            let e = exp_algebra(&w, 1.5);
            assert!(e.max_diff(&exp_oracle(&w, 1.5)) < 1e-13, "eps {eps}: {e}");
        }
    }
}

#[test]
fn adjoint_examples() {
    let w = AlgebraVector::new(0.3, -0.7, 1.1);
    assert_eq!(adjoint(&Mat2::IDENTITY, &w).unwrap(), w);
    let t = 2.5;
    let a = adjoint(&exp_algebra(&AlgebraVector::U, t), &AlgebraVector::V).unwrap();
    assert!(a.rel_diff(&AlgebraVector::new(1.0, -2.0 * t, -t * t)) < 1e-14);
    let a = adjoint(
        &exp_algebra(&AlgebraVector::X, 2.0 * t.ln()),
        &AlgebraVector::U,
    )
    .unwrap();
    assert!(a.rel_diff(&AlgebraVector::new(0.0, 0.0, t.powi(-2))) < 1e-14);
    assert!(adjoint(&Mat2::new(2.0, 0.0, 0.0, 1.0), &w).is_err());
}

#[test]
fn sheared_tangent_examples() {
    assert_eq!(
        sheared_tangent(&AlgebraVector::X, 3.0),
        AlgebraVector::new(0.0, 1.0, 3.0)
    );
    assert_eq!(
        sheared_tangent(&AlgebraVector::V, 2.0),
        AlgebraVector::new(1.0, -4.0, -4.0)
    );
    let w = AlgebraVector::new(0.2, 0.4, -0.9);
    assert_eq!(sheared_tangent(&w, 0.0), w);
}

#[test]
fn renormalized_tangent_examples() {
    for t in [1.0, 7.0, 1e4] {
        assert_eq!(
            renormalized_tangent(&AlgebraVector::V, t),
            AlgebraVector::new(-0.0, -0.0, -1.0)
        );
    }
    assert_eq!(
        renormalized_tangent(&AlgebraVector::U, 1.0),
        AlgebraVector::new(-1.0, -2.0, 1.0)
    );
    let w = AlgebraVector::new(0.5, -0.25, 0.75);
    let far = renormalized_tangent(&w, 1e12);
    assert!(far.rel_diff(&AlgebraVector::new(-w.u, -w.x, -w.v)) < 1e-11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn determinant_is_preserved(w in vector(), s in coeff()) {
        prop_assert!((exp_algebra(&w, s).det() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn closed_form_matches_series_oracle(w in vector(), s in coeff()) {
        let e = exp_algebra(&w, s);
        let o = exp_oracle(&w, s);
        prop_assert!(e.max_diff(&o) <= 1e-11 * o.max_abs().max(1.0), "{} vs {}", e, o);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_is_exp_times_generator(w in vector(), s in coeff()) {
        let h = 1e-5;
        let fd = (exp_algebra(&w, s + h) - exp_algebra(&w, s - h)).scale(0.5 / h);
        let exact = exp_algebra(&w, s) * basis_matrix(&w);
        let scale = exact.max_abs().max(1.0);
        prop_assert!(fd.max_diff(&exact) <= 1e-6 * scale);
    }

    #[test]
    fn group_law(w in vector(), s in coeff(), r in coeff()) {
        let lhs = exp_algebra(&w, s + r);
        let rhs = exp_algebra(&w, s) * exp_algebra(&w, r);
        prop_assert!(lhs.max_diff(&rhs) <= 1e-10 * lhs.max_abs().max(1.0));
    }

    #[test]
    fn adjoint_is_a_right_action(w in vector(), a in vector(), b in vector()) {
        let g = exp_algebra(&a, 1.0);
        let h = exp_algebra(&b, 1.0);
        let lhs = adjoint(&(g * h), &w).unwrap();
        let rhs = adjoint(&h, &adjoint(&g, &w).unwrap()).unwrap();
        prop_assert!(lhs.rel_diff(&rhs) <= 1e-9);
    }

    #[test]
    fn geodesic_flow_contracts_u(s in -5.0..5.0f64) {
        let a = adjoint(&exp_algebra(&AlgebraVector::X, s), &AlgebraVector::U).unwrap();
        prop_assert!(a.rel_diff(&AlgebraVector::new(0.0, 0.0, (-s).exp())) <= 1e-10);
    }

    #[test]
    fn sheared_tangent_is_the_adjoint(w in vector(), t in 0.0..1e3f64) {
        let a = adjoint(&exp_algebra(&AlgebraVector::U, t), &w).unwrap();
        let e = sheared_tangent(&w, t);
        let scale = e.max_abs().max(1.0);
        prop_assert!((a - e).max_abs() <= 1e-10 * scale);
    }

    #[test]
    fn renormalized_tangent_is_the_composed_adjoint(w in normalized(), log_t in 0.0..6.0f64) {
        let t = 10f64.powf(log_t);
        let a = adjoint(&renormalizing_element(t), &w).unwrap();
        let e = renormalized_tangent(&w, t);
        prop_assert!(a.rel_diff(&e) <= 1e-10, "t {}: {} vs {}", t, a, e);
    }

    #[test]
    fn sequential_adjoints_agree_up_to_their_conditioning(w in normalized(), log_t in 0.0..6.0f64) {
        let t = 10f64.powf(log_t);
        // Ad_{g1 g2 g3} = Ad_{g3} ∘ Ad_{g2} ∘ Ad_{g1}; the middle stages carry coefficients of size t².
        let a1 = adjoint(&exp_algebra(&AlgebraVector::U, t), &w).unwrap();
        let a2 = adjoint(&exp_algebra(&AlgebraVector::X, 2.0 * t.ln()), &a1).unwrap();
        let a3 = adjoint(&exp_algebra(&AlgebraVector::V, -t), &a2).unwrap();
        let e = renormalized_tangent(&w, t);
        let scale = a1.max_abs().max(a2.max_abs()).max(1.0);
        prop_assert!((a3 - e).max_abs() <= 1e-10 * scale, "t {}: {} vs {}", t, a3, e);
    }

    #[test]
    fn renormalized_tangent_is_bounded(w in normalized(), k in 0..=6i32) {
        let t = 10f64.powi(k);
        let r = renormalized_tangent(&w, t);
        prop_assert!(r.max_abs() <= 3.0 + 1e-12, "{}", r);
    }

    #[test]
    fn transverse_speed_dominates_when_v_leads(w in normalized(), t in 2.0..1e4f64) {
        // The lower bound needs |v| to be the largest coefficient.
        prop_assume!(w.v.abs() >= w.x.abs() && w.v.abs() >= w.u.abs());
        let speed = sheared_tangent(&w, t).u.abs();
        prop_assert!(speed >= w.v.abs() * t * t / 4.0);
    }
}

#[test]
fn renormalizing_element_closed_form() {
    for t in [1.0, 3.0, 1e3, 1e6] {
        let g = renormalizing_element(t);
        assert!(
            g.max_diff(&Mat2::new(0.0, 1.0, -1.0, 1.0 / t)) < 1e-15,
            "{g}"
        );
    }
    let w = AlgebraVector::new(0.4, -1.0, 0.6);
    for t in [1.0, 3.0, 10.0, 100.0, 1e6] {
        let a = adjoint(&renormalizing_element(t), &w).unwrap();
        assert!(a.rel_diff(&renormalized_tangent(&w, t)) < 1e-10);
    }
}

#[test]
fn transverse_speed_bound_fails_without_a_leading_v() {
    // |u + xt − vt²| with x = 1, v = 1/2, u = 0 vanishes at t = 2.
    let w = AlgebraVector::new(0.5, 1.0, 0.0);
    assert_eq!(sheared_tangent(&w, 2.0).u, 0.0);
}
