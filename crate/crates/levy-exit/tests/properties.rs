//! Randomized invariants over the model space: root residuals, scale-function
//! shape, and range/monotonicity of the probability-valued identities.

use levy_exit::identities;
use levy_exit::model::LevyModel;
use levy_exit::scale::ScaleContext;
use proptest::prelude::*;

fn arb_model() -> impl Strategy<Value = LevyModel> {
    // Either a hyperexponential-claim model or a pure Brownian one; rates are
    // kept apart so psi_q stays comfortably simple-rooted.
    let jumpy = (
        0.5f64..3.0,
        prop_oneof![Just(0.0f64), 0.2f64..2.0],
        0.2f64..2.0,
        0.15f64..0.85,
        0.3f64..1.0,
        1.5f64..4.0,
    )
        .prop_map(|(c, sigma2, nu, w, eta1, eta2)| {
            LevyModel::new(c, sigma2, nu, vec![w, 1.0 - w], vec![eta1, eta2]).unwrap()
        });
    let brownian = (0.3f64..2.0, 0.2f64..3.0)
        .prop_map(|(c, sigma2)| LevyModel::brownian(c, sigma2).unwrap());
    prop_oneof![jumpy, brownian]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_a_root_and_rightmost(model in arb_model(), q in 0.0f64..2.0) {
        let rs = model.roots(q).unwrap();
        prop_assert!((model.psi(rs.phi) - q).abs() <= 1e-10 * q.max(1.0));
        for &z in &rs.roots {
            prop_assert!(z <= rs.phi);
        }
    }

    #[test]
    fn scale_function_is_positive_and_increasing(
        model in arb_model(),
        q in 0.0f64..2.0,
        x in 0.0f64..10.0,
        dx in 0.01f64..5.0,
    ) {
        let ctx = ScaleContext::new(model, q).unwrap();
        let w0 = ctx.w(x);
        let w1 = ctx.w(x + dx);
        prop_assert!(w0 > 0.0);
        prop_assert!(w1 >= w0 * (1.0 - 1e-12));
    }

    #[test]
    fn z_function_is_positive(
        model in arb_model(),
        q in 0.0f64..2.0,
        x in -5.0f64..10.0,
        theta in 0.0f64..4.0,
    ) {
        let ctx = ScaleContext::new(model, q).unwrap();
        prop_assert!(ctx.z(x, theta) > 0.0);
    }

    #[test]
    fn detected_passage_probability_is_monotone_in_x(
        model in arb_model(),
        q in 0.0f64..1.0,
        a in 1.0f64..5.0,
        t in 0.05f64..0.95,
        dt in 0.01f64..0.5,
        lambda in 0.2f64..3.0,
    ) {
        let ctx = ScaleContext::new(model, q).unwrap();
        let x0 = t * a;
        let x1 = (t + dt).min(1.0) * a;
        let p0 = identities::up_before_poisson_ruin(&ctx, x0, a, lambda).unwrap();
        let p1 = identities::up_before_poisson_ruin(&ctx, x1, a, lambda).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p0));
        prop_assert!(p1 >= p0 - 1e-12);
    }

    #[test]
    fn deficit_transform_is_a_laplace_transform(
        model in arb_model(),
        q in 0.0f64..1.0,
        x in 0.0f64..3.0,
        lambda in 0.2f64..3.0,
        theta in 0.0f64..3.0,
        dtheta in 0.05f64..2.0,
    ) {
        // As a Laplace transform of a sub-probability law it lies in [0, 1]
        // and decreases in theta.
        let ctx = ScaleContext::new(model, q).unwrap();
        let a = f64::INFINITY;
        let v0 = identities::poisson_deficit(&ctx, x, a, theta, lambda).unwrap();
        let v1 = identities::poisson_deficit(&ctx, x, a, theta + dtheta, lambda).unwrap();
        prop_assert!((0.0..=1.0 + 1e-10).contains(&v0));
        prop_assert!(v1 <= v0 + 1e-10);
    }
}
