//! Quadrature-based checks of the convolution identities tying the scale
//! functions at killing rates `q` and `q + lambda` together, plus monotone
//! limit checks connecting Poisson observation to continuous observation.
//!
//! All checks compare closed-form scale values (never Monte Carlo), so a
//! failure isolates a formula bug from sampling noise.

use crate::error::Result;
use crate::identities;
use crate::quad;
use crate::scale::ScaleContext;

/// Relative tolerance of the convolution checks: 100x the quadrature target.
pub const CHECK_TOL: f64 = 1e-8;

/// Outcome of a single check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub check_id: String,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    /// Compare `lhs` against `rhs`; the absolute error stands in for the
    /// relative one when the reference is numerically zero. `extra_ok` lets a
    /// caller veto the pass (used for the quadrature-error budget).
    fn compare(
        check_id: &str,
        params: String,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        extra_ok: bool,
    ) -> Self {
        let abs_err = (lhs - rhs).abs();
        let rel_err = if rhs.abs() < 1e-12 {
            abs_err
        } else {
            abs_err / rhs.abs()
        };
        CheckReport {
            check_id: check_id.into(),
            params,
            lhs,
            rhs,
            abs_err,
            rel_err,
            tolerance,
            pass: rel_err < tolerance && extra_ok,
        }
    }

    pub const CSV_HEADER: &'static str = "check_id,params,lhs,rhs,rel_err,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{:.3e},{}",
            self.check_id, self.params, self.lhs, self.rhs, self.rel_err, self.pass
        )
    }
}

/// Budget for the quadrature's own error estimate: a check may not pass by
/// eating its tolerance with integration error.
fn quad_ok(err: f64, reference: f64) -> bool {
    err / reference.abs().max(1e-12) < CHECK_TOL / 10.0
}

/// `lambda int_0^a W_lambda(a-x) W(x) dx = W_lambda(a) - W(a)`.
pub fn check_scale_convolution(ctx: &ScaleContext, a: f64, lambda: f64) -> Result<CheckReport> {
    let aux = ctx.aux_roots(lambda)?;
    let r = quad::integrate_default(|x| aux.w(a - x) * ctx.w(x), 0.0, a);
    let lhs = lambda * r.value;
    let rhs = aux.w(a) - ctx.w(a);
    Ok(CheckReport::compare(
        "scale_convolution",
        format!("q={};a={a};lambda={lambda}", ctx.q()),
        lhs,
        rhs,
        CHECK_TOL,
        quad_ok(lambda * r.error, rhs),
    ))
}

/// `lambda int_0^a W_lambda(a-x) Z(x,theta) dx = Z_lambda(a,theta) - Z(a,theta)`.
pub fn check_z_convolution(
    ctx: &ScaleContext,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<CheckReport> {
    let aux = ctx.aux_roots(lambda)?;
    let shifted = ctx.shifted(lambda)?;
    let r = quad::integrate_default(|x| aux.w(a - x) * ctx.z(x, theta), 0.0, a);
    let lhs = lambda * r.value;
    let rhs = shifted.z(a, theta) - ctx.z(a, theta);
    Ok(CheckReport::compare(
        "z_convolution",
        format!("q={};a={a};theta={theta};lambda={lambda}", ctx.q()),
        lhs,
        rhs,
        CHECK_TOL,
        quad_ok(lambda * r.error, rhs),
    ))
}

/// `lambda int_0^a e^{-Phi_lambda x} Z(x,theta) dx
///    = (psi_q(theta) - lambda)/(theta - Phi_lambda) - e^{-Phi_lambda a} Z~(a,Phi_lambda,theta)`.
///
/// The first right-hand term is `psi_{q+lambda}(theta)/(theta - Phi_{q+lambda})`,
/// so its removable singularity at `theta = Phi_lambda` is taken analytically.
pub fn check_tilde_z_alt(
    ctx: &ScaleContext,
    a: f64,
    theta: f64,
    lambda: f64,
) -> Result<CheckReport> {
    let shifted = ctx.shifted(lambda)?;
    let phi_l = shifted.phi();
    let r = quad::integrate_default(|x| (-phi_l * x).exp() * ctx.z(x, theta), 0.0, a);
    let lhs = lambda * r.value;
    let rhs = shifted.psi_q_ratio(theta) - (-phi_l * a).exp() * ctx.tilde_z(a, phi_l, theta);
    Ok(CheckReport::compare(
        "tilde_z_alt",
        format!("q={};a={a};theta={theta};lambda={lambda}", ctx.q()),
        lhs,
        rhs,
        CHECK_TOL,
        quad_ok(lambda * r.error, rhs),
    ))
}

/// Turn a sequence of gaps over a labelled grid into reports that pass when
/// the gap shrinks monotonically (down to numerical zero).
pub fn gap_reports(check_id: &str, params: &str, labels: &[f64], gaps: &[f64]) -> Vec<CheckReport> {
    labels
        .iter()
        .zip(gaps)
        .enumerate()
        .map(|(i, (&label, &gap))| {
            let (tolerance, pass) = if i == 0 {
                (f64::INFINITY, true)
            } else {
                (gaps[i - 1], gap <= gaps[i - 1] || gap < 1e-12)
            };
            CheckReport {
                check_id: check_id.into(),
                params: format!("{params};grid={label}"),
                lhs: gap,
                rhs: 0.0,
                abs_err: gap,
                rel_err: gap,
                tolerance,
                pass,
            }
        })
        .collect()
}

/// Gap between a Poisson-observed identity and its continuous-observation
/// counterpart along a grid of observation rates. `up_before_poisson_ruin`
/// and `poisson_deficit` converge as `lambda -> inf`, `ruin_before_poisson_up`
/// as `lambda -> 0` (to the unconstrained deficit transform).
pub fn check_limits(
    ctx: &ScaleContext,
    identity: &str,
    query: &identities::ExitQuery,
    lambda_grid: &[f64],
) -> Result<Vec<CheckReport>> {
    let target = match identity {
        "up_before_poisson_ruin" => identities::up_prob_continuous(ctx, query.x, query.a)?,
        "poisson_deficit" => identities::deficit_continuous(ctx, query.x, query.a, query.theta)?,
        "ruin_before_poisson_up" => {
            identities::deficit_continuous(ctx, query.x, f64::INFINITY, query.theta)?
        }
        other => {
            return Err(crate::error::Error::UnknownIdentity(format!(
                "{other} has no limit counterpart"
            )))
        }
    };
    let mut gaps = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let q = identities::ExitQuery { lambda, ..*query };
        gaps.push((identities::evaluate(ctx, identity, &q)? - target).abs());
    }
    Ok(gap_reports(
        &format!("limit_{identity}"),
        &format!(
            "q={};x={};a={};theta={}",
            ctx.q(),
            query.x,
            query.a,
            query.theta
        ),
        lambda_grid,
        &gaps,
    ))
}

/// The full check grid for one model: every convolution identity over
/// `q x a x theta x lambda`, plus the lambda-limit checks.
pub fn run_suite(model: &crate::model::LevyModel) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for &q in &[0.0, 0.05] {
        let ctx = ScaleContext::new(model.clone(), q)?;
        let phi = ctx.phi();
        for &a in &[0.5, 1.0, 2.0, 5.0] {
            for &lambda in &[0.5, 2.0] {
                reports.push(check_scale_convolution(&ctx, a, lambda)?);
                for &theta in &[0.0, 0.5, phi, 2.0] {
                    reports.push(check_z_convolution(&ctx, a, theta, lambda)?);
                    reports.push(check_tilde_z_alt(&ctx, a, theta, lambda)?);
                }
            }
        }
        let two_sided = identities::ExitQuery {
            x: 1.0,
            a: 2.0,
            theta: 0.5,
            ..identities::ExitQuery::default()
        };
        reports.extend(check_limits(
            &ctx,
            "up_before_poisson_ruin",
            &two_sided,
            &[1e2, 1e4, 1e6],
        )?);
        reports.extend(check_limits(
            &ctx,
            "poisson_deficit",
            &two_sided,
            &[1e2, 1e4, 1e6],
        )?);
        reports.extend(check_limits(
            &ctx,
            "ruin_before_poisson_up",
            &two_sided,
            &[1e-2, 1e-4, 1e-6],
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevyModel;

    fn ctx(model: LevyModel, q: f64) -> ScaleContext {
        ScaleContext::new(model, q).unwrap()
    }

    #[test]
    fn scale_convolution_reference_cases() {
        let c = ctx(LevyModel::reference_m2(), 0.0);
        let r = check_scale_convolution(&c, 1.0, 2.0).unwrap();
        assert!(r.pass, "{r:?}");
        let c = ctx(LevyModel::reference_m1(), 0.05);
        for a in [0.5, 2.0, 5.0] {
            let r = check_scale_convolution(&c, a, 1.0).unwrap();
            assert!(r.pass, "a = {a}: {r:?}");
        }
    }

    #[test]
    fn scale_convolution_tiny_barrier() {
        // a -> 0: both sides approach W_lambda(0) - W(0) (0 for sigma2 > 0).
        let c = ctx(LevyModel::reference_m2(), 0.0);
        let r = check_scale_convolution(&c, 1e-6, 2.0).unwrap();
        assert!(r.lhs.abs() < 1e-10 && r.rhs.abs() < 1e-10);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn z_convolution_reference_cases() {
        let c = ctx(LevyModel::reference_m2(), 0.0);
        assert!(check_z_convolution(&c, 1.0, 1.0, 2.0).unwrap().pass);
        assert!(check_z_convolution(&c, 1.0, 0.0, 2.0).unwrap().pass);
        // theta = Phi_q turns Z(x, Phi_q) into a pure exponential.
        let c = ctx(LevyModel::reference_m1(), 0.05);
        let phi = c.phi();
        assert!(check_z_convolution(&c, 2.0, phi, 0.5).unwrap().pass);
    }

    #[test]
    fn tilde_z_alt_reference_cases() {
        let c = ctx(LevyModel::reference_m2(), 0.0);
        assert!(check_tilde_z_alt(&c, 1.0, 0.5, 2.0).unwrap().pass);
        let c = ctx(LevyModel::reference_m1(), 0.05);
        assert!(check_tilde_z_alt(&c, 2.0, 0.0, 0.5).unwrap().pass);
    }

    #[test]
    fn tilde_z_alt_near_singular_theta() {
        // theta within 1e-4 of Phi_lambda: both sides go through their limit
        // branches and still agree.
        let c = ctx(LevyModel::reference_m1(), 0.0);
        let phi_l = c.phi_lambda(2.0).unwrap();
        for off in [1e-4, -1e-4, 1e-7, 0.0] {
            let r = check_tilde_z_alt(&c, 1.0, phi_l + off, 2.0).unwrap();
            assert!(r.rel_err < 1e-6, "off = {off}: {r:?}");
        }
    }

    #[test]
    fn limit_gaps_shrink() {
        let c = ctx(LevyModel::reference_m1(), 0.05);
        let query = identities::ExitQuery {
            x: 1.0,
            a: 2.0,
            theta: 0.5,
            ..identities::ExitQuery::default()
        };
        for (id, grid) in [
            ("up_before_poisson_ruin", [1e2, 1e4, 1e6]),
            ("poisson_deficit", [1e2, 1e4, 1e6]),
            ("ruin_before_poisson_up", [1e-2, 1e-4, 1e-6]),
        ] {
            let reports = check_limits(&c, id, &query, &grid).unwrap();
            assert!(reports.iter().all(|r| r.pass), "{id}: {reports:?}");
            assert!(reports.last().unwrap().lhs < reports[0].lhs);
        }
    }

    #[test]
    fn full_suite_passes_on_reference_models() {
        for model in [LevyModel::reference_m1(), LevyModel::reference_m2()] {
            let reports = run_suite(&model).unwrap();
            assert!(reports.len() > 100);
            for r in &reports {
                assert!(r.pass, "{} {} failed: {r:?}", r.check_id, r.params);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = ctx(LevyModel::reference_m1(), 0.0);
        let r = check_scale_convolution(&c, 1.0, 1.0).unwrap();
        let row = r.csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), CheckReport::CSV_HEADER.split(',').count());
        assert_eq!(fields[0], "scale_convolution");
        let lhs: f64 = fields[2].parse().unwrap();
        assert_eq!(lhs, r.lhs);
        assert_eq!(fields[5], "true");
    }
}
