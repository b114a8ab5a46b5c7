//! The exit identities, evaluated as pure functions of a `ScaleContext` and
//! query arguments. `Phi_lambda` always means `Phi_{q+lambda}` while `W`, `Z`
//! and `psi` carry the killing rate `q` of the context.
//!
//! Ratios that are singular at `theta = Phi_{q+lambda}` are interpreted in the
//! limiting sense: when the argument falls inside the confluence window the
//! expression is evaluated at `theta +- eps` around the singular point and the
//! two values are averaged, which cancels the linear term of the expansion.

use crate::error::{Error, Result};
use crate::scale::ScaleContext;
use crate::DELTA_LIMIT;

/// Identity identifiers accepted by [`evaluate`] and by the Monte Carlo
/// verifier; the pairing of formula and pathwise functional is keyed on these.
pub const IDENTITIES: [&str; 14] = [
    "up_prob_continuous",
    "deficit_continuous",
    "poisson_deficit",
    "poisson_overshoot",
    "poisson_up_before_ruin",
    "ruin_before_poisson_up",
    "up_before_poisson_ruin",
    "poisson_deficit_before_poisson_up",
    "poisson_up_before_poisson_ruin",
    "reflected_up",
    "reflected_ruin",
    "regulator_passage",
    "discounted_dividends",
    "total_dividends_rate",
];

/// Arguments of a named identity. `a` and `lambda` may be `f64::INFINITY`,
/// selecting the limiting formulas (no upper barrier / continuous
/// observation respectively).
#[derive(Debug, Clone, Copy)]
pub struct ExitQuery {
    pub x: f64,
    pub a: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub y: f64,
    pub lambda: f64,
}

impl Default for ExitQuery {
    fn default() -> Self {
        ExitQuery {
            x: 0.0,
            a: f64::INFINITY,
            theta: 0.0,
            vartheta: 0.0,
            y: 0.0,
            lambda: f64::INFINITY,
        }
    }
}

/// Evaluate `identity` for `query` under the killing rate of `ctx`.
pub fn evaluate(ctx: &ScaleContext, identity: &str, query: &ExitQuery) -> Result<f64> {
    let ExitQuery {
        x,
        a,
        theta,
        vartheta,
        y,
        lambda,
    } = *query;
    if a.is_finite() && x > a {
        return Err(Error::Domain(format!("need x <= a (x = {x}, a = {a})")));
    }
    match identity {
        "up_prob_continuous" => up_prob_continuous(ctx, x, a),
        "deficit_continuous" => deficit_continuous(ctx, x, a, theta),
        "poisson_deficit" => poisson_deficit(ctx, x, a, theta, lambda),
        "poisson_overshoot" => poisson_overshoot(ctx, x, a, theta, lambda),
        "poisson_up_before_ruin" => poisson_up_before_ruin(ctx, x, a, theta, lambda),
        "ruin_before_poisson_up" => ruin_before_poisson_up(ctx, x, a, theta, lambda),
        "up_before_poisson_ruin" => up_before_poisson_ruin(ctx, x, a, lambda),
        "poisson_deficit_before_poisson_up" => {
            poisson_deficit_before_poisson_up(ctx, x, a, theta, lambda)
        }
        "poisson_up_before_poisson_ruin" => {
            poisson_up_before_poisson_ruin(ctx, x, a, theta, lambda)
        }
        "reflected_up" => reflected_up(ctx, x, a, theta, vartheta, lambda),
        "reflected_ruin" => reflected_ruin(ctx, x, a, theta, vartheta, lambda),
        "regulator_passage" => regulator_passage(ctx, x, a, y, lambda),
        "discounted_dividends" => discounted_dividends(ctx, x, a, lambda),
        "total_dividends_rate" => total_dividends_rate(ctx, a, lambda),
        other => Err(Error::UnknownIdentity(other.into())),
    }
}

/// Evaluate `f` at `theta`, or as the two-sided average around the nearest
/// removable singularity in `singular`.
fn limit_eval<F: Fn(f64) -> f64>(theta: f64, singular: &[f64], f: F) -> f64 {
    for &s in singular {
        if (theta - s).abs() < DELTA_LIMIT * s.abs().max(1.0) {
            let eps = 1e-5 * theta.abs().max(1.0);
            return 0.5 * (f(s + eps) + f(s - eps));
        }
    }
    f(theta)
}

fn require_finite_lambda(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain(
            "lambda = inf is not supported for this identity".into(),
        ));
    }
    Ok(lambda)
}

fn check_reflected_args(x: f64, a: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "reflected identities need a finite barrier a > 0, got {a}"
        )));
    }
    if x < 0.0 || x > a {
        return Err(Error::Domain(format!(
            "reflected identities need 0 <= x <= a (x = {x}, a = {a})"
        )));
    }
    Ok(())
}

/// Two-sided up-crossing probability `P_x(tau_a^+ < tau_0^-) = W(x)/W(a)`.
pub fn up_prob_continuous(ctx: &ScaleContext, x: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("need a finite barrier a > 0, got {a}")));
    }
    Ok(ctx.w(x) / ctx.w(a))
}

/// One-sided up-crossing transform `E_x(e^{-q tau_a^+}; tau_a^+ < inf) = e^{-Phi_q (a-x)}`.
pub fn up_prob_one_sided(ctx: &ScaleContext, x: f64, a: f64) -> f64 {
    (-(ctx.phi()) * (a - x)).exp()
}

/// Classical deficit transform `E_x(e^{theta X(tau_0^-)}; tau_0^- < tau_a^+)`;
/// `a = inf` drops the upper barrier.
pub fn deficit_continuous(ctx: &ScaleContext, x: f64, a: f64, theta: f64) -> Result<f64> {
    if x < 0.0 {
        return Ok((theta * x).exp());
    }
    if a.is_finite() {
        Ok(ctx.z(x, theta) - ctx.w(x) * ctx.z(a, theta) / ctx.w(a))
    } else {
        Ok(ctx.z(x, theta) - ctx.w(x) * ctx.psi_q_ratio(theta))
    }
}

/// Poisson-detected deficit transform, against a continuously observed upper
/// barrier when `a` is finite and unconstrained otherwise.
pub fn poisson_deficit(ctx: &ScaleContext, x: f64, a: f64, theta: f64, lambda: f64) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    let phi = ctx.phi();
    let v = if a.is_finite() {
        limit_eval(theta, &[phi_l], |t| {
            lambda / (lambda - ctx.psi_q(t))
                * (ctx.z(x, t) - ctx.z(x, phi_l) * ctx.z(a, t) / ctx.z(a, phi_l))
        })
    } else {
        limit_eval(theta, &[phi_l], |t| {
            lambda / (lambda - ctx.psi_q(t))
                * (ctx.z(x, t) - ctx.z(x, phi_l) * ctx.psi_q_ratio(t) * (phi_l - phi) / lambda)
        })
    };
    Ok(v)
}

/// Overshoot transform at Poisson-detected up-crossing, no lower barrier.
pub fn poisson_overshoot(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    let phi = ctx.phi();
    Ok((phi_l - phi) / (phi_l + theta) * (-phi * (a - x)).exp())
}

/// Overshoot transform at Poisson-detected up-crossing before continuous ruin.
pub fn poisson_up_before_ruin(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    Ok(lambda / (phi_l + theta) * ctx.w(x) / ctx.z(a, phi_l))
}

/// Deficit transform at continuous ruin before Poisson-detected up-crossing.
pub fn ruin_before_poisson_up(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    if x < 0.0 {
        return Ok((theta * x).exp());
    }
    Ok(limit_eval(theta, &[phi_l], |t| {
        ctx.z(x, t)
            - ctx.w(x) / (t - phi_l) * (ctx.psi_q(t) - lambda * ctx.z(a, t) / ctx.z(a, phi_l))
    }))
}

/// `P_x(tau_a^+ < T_0^-) = Z(x, Phi_lambda)/Z(a, Phi_lambda)`; valid for x < 0 too.
pub fn up_before_poisson_ruin(ctx: &ScaleContext, x: f64, a: f64, lambda: f64) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    Ok(ctx.z_ratio(x, a, phi_l))
}

/// Deficit transform when both barriers are Poisson-observed.
pub fn poisson_deficit_before_poisson_up(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    let denom = ctx.tilde_z(a, phi_l, phi_l);
    Ok(limit_eval(theta, &[phi_l], |t| {
        lambda / (lambda - ctx.psi_q(t))
            * (ctx.z(x, t) - ctx.z(x, phi_l) * ctx.tilde_z(a, phi_l, t) / denom)
    }))
}

/// Overshoot transform when both barriers are Poisson-observed.
pub fn poisson_up_before_poisson_ruin(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    Ok(lambda / (phi_l + theta) * ctx.z(x, phi_l) / ctx.tilde_z(a, phi_l, phi_l))
}

/// Joint regulator/overshoot transform for the process reflected at 0 from
/// below; `lambda = inf` gives the classical continuous-observation form.
pub fn reflected_up(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    vartheta: f64,
    lambda: f64,
) -> Result<f64> {
    check_reflected_args(x, a)?;
    if lambda.is_infinite() {
        return Ok(ctx.z(x, vartheta) / ctx.z(a, vartheta));
    }
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    Ok(limit_eval(vartheta, &[phi_l], |vt| {
        lambda * (vt - phi_l) * ctx.z(x, vt)
            / ((phi_l + theta) * (ctx.psi_q(vt) * ctx.z(a, phi_l) - lambda * ctx.z(a, vt)))
    }))
}

/// Joint regulator/deficit transform for the process reflected at `a` from
/// above; `lambda = inf` gives the classical continuous-observation form.
pub fn reflected_ruin(
    ctx: &ScaleContext,
    x: f64,
    a: f64,
    theta: f64,
    vartheta: f64,
    lambda: f64,
) -> Result<f64> {
    check_reflected_args(x, a)?;
    if lambda.is_infinite() {
        let denom = ctx.w_prime_plus(a) + vartheta * ctx.w(a);
        return Ok(ctx.z(x, theta)
            + ctx.w(x) * (ctx.w(a) * ctx.psi_q(theta) - (theta + vartheta) * ctx.z(a, theta))
                / denom);
    }
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    Ok(limit_eval(theta, &[phi_l], |t| {
        let frac = (ctx.w(a) * ctx.psi_q(t) - (t + vartheta) * ctx.z(a, t))
            / ((phi_l + vartheta) * ctx.z(a, phi_l) - lambda * ctx.w(a));
        lambda / (lambda - ctx.psi_q(t)) * (ctx.z(x, t) + ctx.z(x, phi_l) * frac)
    }))
}

/// `P_x^a(rho_y < T_0^-)`: regulator of the barrier at `a` exceeds `y` before
/// Poisson-detected ruin.
pub fn regulator_passage(ctx: &ScaleContext, x: f64, a: f64, y: f64, lambda: f64) -> Result<f64> {
    check_reflected_args(x, a)?;
    if y < 0.0 {
        return Err(Error::Domain(format!("need y >= 0, got {y}")));
    }
    let lambda = require_finite_lambda(lambda)?;
    let phi_l = ctx.phi_lambda(lambda)?;
    let rate = ctx.z_dx(a, phi_l) / ctx.z(a, phi_l);
    Ok(ctx.z_ratio(x, a, phi_l) * (-rate * y).exp())
}

/// Expected discounted dividends until Poisson-detected ruin under a barrier
/// strategy at `a`; `lambda = inf` gives `W_q(x)/W_q'(a)`.
pub fn discounted_dividends(ctx: &ScaleContext, x: f64, a: f64, lambda: f64) -> Result<f64> {
    check_reflected_args(x, a)?;
    let (num, den) = if lambda.is_infinite() {
        (ctx.w(x), ctx.w_prime_plus(a))
    } else {
        let lambda = require_finite_lambda(lambda)?;
        let phi_l = ctx.phi_lambda(lambda)?;
        (ctx.z(x, phi_l), ctx.z_dx(a, phi_l))
    };
    if den <= 0.0 {
        return Err(Error::Numeric(format!(
            "non-positive dividend denominator {den}"
        )));
    }
    Ok(num / den)
}

/// Exponential rate of the total-dividend law for `x = a`, `q = 0`:
/// `Phi_lambda - lambda W(a)/Z(a, Phi_lambda)` (or `W'_+(a)/W(a)` for
/// continuous observation).
pub fn total_dividends_rate(ctx: &ScaleContext, a: f64, lambda: f64) -> Result<f64> {
    if ctx.q() != 0.0 {
        return Err(Error::Domain(
            "total_dividends_rate is the undiscounted (q = 0) law".into(),
        ));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("need a finite barrier a > 0, got {a}")));
    }
    let rate = if lambda.is_infinite() {
        ctx.w_prime_plus(a) / ctx.w(a)
    } else {
        let lambda = require_finite_lambda(lambda)?;
        let phi_l = ctx.phi_lambda(lambda)?;
        phi_l - lambda * ctx.w(a) / ctx.z(a, phi_l)
    };
    if rate <= 0.0 {
        return Err(Error::Numeric(format!(
            "total dividend rate should be positive, got {rate}"
        )));
    }
    Ok(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevyModel;
    use approx::assert_relative_eq;

    fn ctx_m1(q: f64) -> ScaleContext {
        ScaleContext::new(LevyModel::reference_m1(), q).unwrap()
    }

    fn ctx_m2(q: f64) -> ScaleContext {
        ScaleContext::new(LevyModel::reference_m2(), q).unwrap()
    }

    #[test]
    fn up_prob_endpoints() {
        let ctx = ctx_m2(0.0);
        assert_relative_eq!(up_prob_continuous(&ctx, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(up_prob_continuous(&ctx, -0.3, 1.0).unwrap(), 0.0);
        assert!(up_prob_continuous(&ctx, 0.0, 0.0).is_err());
        // M2, q = 0: Phi_0 = 0 so the one-sided probability is 1.
        for &x in &[-1.0, 0.0, 0.7] {
            assert_relative_eq!(up_prob_one_sided(&ctx, x, 1.0), 1.0);
        }
    }

    #[test]
    fn deficit_continuous_values() {
        let ctx = ctx_m2(0.0);
        assert_relative_eq!(
            deficit_continuous(&ctx, -0.5, 2.0, 1.2).unwrap(),
            (-0.6_f64).exp(),
            max_relative = 1e-14
        );
        // Ruin probability of drifting Brownian motion: e^{-x}.
        assert_relative_eq!(
            deficit_continuous(&ctx, 1.0, f64::INFINITY, 0.0).unwrap(),
            (-1.0_f64).exp(),
            max_relative = 1e-10
        );
        // x = a collapses the two-sided bracket to 0.
        let v = deficit_continuous(&ctx, 2.0, 2.0, 0.5).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn poisson_deficit_reduces_to_landriault_formula() {
        // q = 0, drift > 0, theta = 0, a = inf:
        // 1 - psi'(0) Phi_lambda / lambda * Z(x, Phi_lambda).
        let ctx = ctx_m2(0.0);
        let v = poisson_deficit(&ctx, 0.0, f64::INFINITY, 0.0, 2.0).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-9);
        let ctx1 = ctx_m1(0.0);
        let lambda = 0.7;
        let phi_l = ctx1.phi_lambda(lambda).unwrap();
        for &x in &[0.0, 1.0, 3.0] {
            let v = poisson_deficit(&ctx1, x, f64::INFINITY, 0.0, lambda).unwrap();
            let survive = 0.2 * phi_l / lambda * ctx1.z(x, phi_l);
            assert_relative_eq!(v, 1.0 - survive, max_relative = 1e-9);
        }
    }

    #[test]
    fn poisson_overshoot_endpoints() {
        let ctx = ctx_m2(0.0);
        // Phi_0 = 0: up-crossing is certain, theta = 0 gives mass 1.
        assert_relative_eq!(
            poisson_overshoot(&ctx, 0.0, 1.0, 0.0, 2.0).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // theta -> inf kills the strictly positive overshoot.
        let big = poisson_overshoot(&ctx, 0.0, 1.0, 1e9, 2.0).unwrap();
        assert!(big < 1e-8);
    }

    #[test]
    fn poisson_up_before_ruin_closed_form() {
        let ctx = ctx_m2(0.0);
        let v = poisson_up_before_ruin(&ctx, 0.5, 1.0, 0.0, 2.0).unwrap();
        let expected = 2.0 * (1.0 - (-0.5_f64).exp()) / (2.0 - (-1.0_f64).exp());
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert_eq!(poisson_up_before_ruin(&ctx, -0.2, 1.0, 0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn ruin_before_poisson_up_edges() {
        let ctx = ctx_m1(0.0);
        assert_relative_eq!(
            ruin_before_poisson_up(&ctx, -0.5, 2.0, 0.7, 1.0).unwrap(),
            (-0.35_f64).exp(),
            max_relative = 1e-14
        );
        // lambda -> 0 recovers the unconstrained deficit transform.
        let small = ruin_before_poisson_up(&ctx, 1.0, 3.0, 0.5, 1e-6).unwrap();
        let free = deficit_continuous(&ctx, 1.0, f64::INFINITY, 0.5).unwrap();
        assert_relative_eq!(small, free, max_relative = 1e-3);
    }

    #[test]
    fn up_before_poisson_ruin_closed_form() {
        let ctx = ctx_m2(0.0);
        let v = up_before_poisson_ruin(&ctx, 0.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 - (-1.0_f64).exp()), max_relative = 1e-12);
        assert_relative_eq!(up_before_poisson_ruin(&ctx, 1.0, 1.0, 2.0).unwrap(), 1.0);
        // x < 0 uses Z(x, theta) = e^{theta x}.
        let v = up_before_poisson_ruin(&ctx, -0.5, 1.0, 2.0).unwrap();
        let phi_l = ctx.phi_lambda(2.0).unwrap();
        assert_relative_eq!(
            v,
            (-0.5 * phi_l).exp() / ctx.z(1.0, phi_l),
            max_relative = 1e-12
        );
    }

    #[test]
    fn two_sided_poisson_identities_are_consistent() {
        // eq5 at theta = Phi_q against the complement relation used in the
        // proof of eq6:
        // E_x(e^{Phi X(T_0^-)}; T_0^- < T_a^+)
        //   = e^{Phi x} - Z(x,Phi_l) * lambda/(Phi_l - Phi) e^{Phi a} / Z~(a,Phi_l,Phi_l).
        for ctx in [ctx_m1(0.05), ctx_m2(0.0)] {
            let (x, a, lambda) = (0.6, 2.0, 0.9);
            let phi = ctx.phi();
            let phi_l = ctx.phi_lambda(lambda).unwrap();
            let lhs = poisson_deficit_before_poisson_up(&ctx, x, a, phi, lambda).unwrap();
            let rhs = (phi * x).exp()
                - ctx.z(x, phi_l) * lambda / (phi_l - phi) * (phi * a).exp()
                    / ctx.tilde_z(a, phi_l, phi_l);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
        }
    }

    #[test]
    fn poisson_two_sided_mass_bounded() {
        let ctx = ctx_m2(0.0);
        for &(x, a, lambda) in &[(0.2, 1.0, 2.0), (0.5, 1.0, 0.5), (1.5, 2.0, 3.0)] {
            let down = poisson_deficit_before_poisson_up(&ctx, x, a, 0.0, lambda).unwrap();
            let up = poisson_up_before_poisson_ruin(&ctx, x, a, 0.0, lambda).unwrap();
            assert!(down >= 0.0 && up >= 0.0);
            assert!(down + up <= 1.0 + 1e-12, "mass {}", down + up);
        }
    }

    #[test]
    fn poisson_up_monotone_in_x() {
        let ctx = ctx_m1(0.05);
        let mut prev = 0.0;
        for i in 0..=10 {
            let x = i as f64 * 0.2;
            let v = poisson_up_before_poisson_ruin(&ctx, x, 2.0, 0.3, 0.8).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn reflected_up_classical_endpoint() {
        let ctx = ctx_m1(0.05);
        let v = reflected_up(&ctx, 1.0, 1.0, 0.0, 0.4, f64::INFINITY).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        let v = reflected_up(&ctx, 0.5, 1.0, 0.0, 0.4, f64::INFINITY).unwrap();
        assert_relative_eq!(
            v,
            ctx.z(0.5, 0.4) / ctx.z(1.0, 0.4),
            max_relative = 1e-12
        );
    }

    #[test]
    fn reflected_up_recovers_overshoot_in_shift_limit() {
        // refl1 with a = x + delta and large x approaches eq3 (which depends
        // only on delta).
        let ctx = ctx_m1(0.05);
        let (delta, theta, vartheta, lambda) = (1.0, 0.4, 0.7, 0.8);
        let x = 50.0;
        let lhs = reflected_up(&ctx, x, x + delta, theta, vartheta, lambda).unwrap();
        let rhs = poisson_overshoot(&ctx, 0.0, delta, theta, lambda).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-5);
    }

    #[test]
    fn reflected_ruin_a_to_infinity_drops_vartheta() {
        let ctx = ctx_m1(0.05);
        let (x, theta, lambda) = (1.0, 0.3, 0.8);
        let phi_l = ctx.phi_lambda(lambda).unwrap();
        let a = 60.0 / phi_l;
        let free = poisson_deficit(&ctx, x, f64::INFINITY, theta, lambda).unwrap();
        for &vt in &[0.0, 1.7] {
            let v = reflected_ruin(&ctx, x, a, theta, vt, lambda).unwrap();
            assert_relative_eq!(v, free, max_relative = 1e-5);
        }
    }

    #[test]
    fn reflected_ruin_continuous_mode() {
        let ctx = ctx_m1(0.05);
        let v = reflected_ruin(&ctx, 1.0, 2.0, 0.0, 0.0, f64::INFINITY).unwrap();
        let expected = ctx.z(1.0, 0.0)
            + ctx.w(1.0) * (ctx.w(2.0) * ctx.psi_q(0.0) - 0.0) / ctx.w_prime_plus(2.0);
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn regulator_passage_endpoints() {
        let ctx = ctx_m1(0.0);
        assert_relative_eq!(
            regulator_passage(&ctx, 2.0, 2.0, 0.0, 1.0).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // y = 0 collapses to the up-before-ruin probability.
        let v = regulator_passage(&ctx, 1.0, 2.0, 0.0, 1.0).unwrap();
        let risk = up_before_poisson_ruin(&ctx, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(v, risk, max_relative = 1e-12);
    }

    #[test]
    fn dividends_monotone_and_mean_consistency() {
        let ctx = ctx_m1(0.0);
        let (a, lambda) = (2.0, 1.0);
        let mut prev = -1.0;
        for i in 0..=8 {
            let x = a * i as f64 / 8.0;
            let v = discounted_dividends(&ctx, x, a, lambda).unwrap();
            assert!(v > prev);
            prev = v;
        }
        let rate = total_dividends_rate(&ctx, a, lambda).unwrap();
        let mean = discounted_dividends(&ctx, a, a, lambda).unwrap();
        assert_relative_eq!(1.0 / rate, mean, max_relative = 1e-10);
    }

    #[test]
    fn dividends_rate_continuous_limit() {
        let ctx = ctx_m1(0.0);
        let a = 2.0;
        let inf_rate = total_dividends_rate(&ctx, a, f64::INFINITY).unwrap();
        assert_relative_eq!(
            inf_rate,
            ctx.w_prime_plus(a) / ctx.w(a),
            max_relative = 1e-12
        );
        let big = total_dividends_rate(&ctx, a, 1e6).unwrap();
        assert_relative_eq!(big, inf_rate, max_relative = 1e-2);
        let div_inf = discounted_dividends(&ctx, 1.0, a, f64::INFINITY).unwrap();
        let div_big = discounted_dividends(&ctx, 1.0, a, 1e6).unwrap();
        assert_relative_eq!(div_big, div_inf, max_relative = 1e-2);
    }

    #[test]
    fn range_invariants_on_grid() {
        for ctx in [ctx_m1(0.0), ctx_m1(0.05), ctx_m2(0.0)] {
            for &lambda in &[0.5, 2.0] {
                for &(x, a) in &[(0.0, 1.0), (0.5, 1.0), (1.0, 3.0)] {
                    for &theta in &[0.0, 0.5, 2.0] {
                        let checks = [
                            poisson_deficit(&ctx, x, a, theta, lambda).unwrap(),
                            poisson_overshoot(&ctx, x, a, theta, lambda).unwrap(),
                            poisson_up_before_ruin(&ctx, x, a, theta, lambda).unwrap(),
                            ruin_before_poisson_up(&ctx, x, a, theta, lambda).unwrap(),
                            up_before_poisson_ruin(&ctx, x, a, lambda).unwrap(),
                            poisson_deficit_before_poisson_up(&ctx, x, a, theta, lambda).unwrap(),
                            poisson_up_before_poisson_ruin(&ctx, x, a, theta, lambda).unwrap(),
                            reflected_up(&ctx, x, a, theta, 0.3, lambda).unwrap(),
                            reflected_ruin(&ctx, x, a, theta, 0.3, lambda).unwrap(),
                            regulator_passage(&ctx, x, a, 0.5, lambda).unwrap(),
                        ];
                        for (i, v) in checks.iter().enumerate() {
                            assert!(
                                (-1e-10..=1.0 + 1e-10).contains(v),
                                "identity {i} out of range at x={x} a={a} theta={theta} \
                                 lambda={lambda} q={}: {v}",
                                ctx.q()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn singular_arguments_match_nearby_values() {
        // The eps-average at theta = Phi_lambda agrees with evaluation just
        // outside the confluence window.
        let ctx = ctx_m1(0.05);
        let (x, a, lambda) = (0.5, 2.0, 0.8);
        let phi_l = ctx.phi_lambda(lambda).unwrap();
        for f in [
            poisson_deficit,
            ruin_before_poisson_up,
            poisson_deficit_before_poisson_up,
        ] {
            let at = f(&ctx, x, a, phi_l, lambda).unwrap();
            let near = f(&ctx, x, a, phi_l + 5e-5, lambda).unwrap();
            assert_relative_eq!(at, near, max_relative = 1e-3);
            let nearer = f(&ctx, x, a, phi_l + 2e-6, lambda).unwrap();
            assert_relative_eq!(at, nearer, max_relative = 1e-5);
        }
        let at = reflected_up(&ctx, x, a, 0.3, phi_l, lambda).unwrap();
        let near = reflected_up(&ctx, x, a, 0.3, phi_l + 2e-6, lambda).unwrap();
        assert_relative_eq!(at, near, max_relative = 1e-5);
    }

    #[test]
    fn dispatch_table_covers_all_identities() {
        let ctx = ctx_m1(0.05);
        let q = ExitQuery {
            x: 0.5,
            a: 2.0,
            theta: 0.3,
            vartheta: 0.2,
            y: 0.5,
            lambda: 1.0,
        };
        for id in IDENTITIES {
            if id == "total_dividends_rate" {
                continue; // needs q = 0
            }
            let v = evaluate(&ctx, id, &q).unwrap();
            assert!(v.is_finite(), "{id} produced {v}");
        }
        let ctx0 = ctx_m1(0.0);
        assert!(evaluate(&ctx0, "total_dividends_rate", &q).is_ok());
        assert!(matches!(
            evaluate(&ctx, "no_such_identity", &q),
            Err(Error::UnknownIdentity(_))
        ));
        let bad = ExitQuery { x: 3.0, a: 2.0, ..q };
        assert!(evaluate(&ctx, "poisson_deficit", &bad).is_err());
    }
}
