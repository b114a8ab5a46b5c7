//! Adaptive Gauss-Kronrod quadrature (G7K15 with interval halving).

/// Positive abscissae of the 15-point Kronrod rule on [-1, 1]; even indices
/// are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let fsum = f(center - x) + f(center + x);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    // The raw Gauss/Kronrod difference is a conservative error estimate; the
    // integrands here are smooth so the extra subdivisions are cheap.
    let err = (kronrod - gauss).abs();
    (kronrod, err)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol` and relative
/// tolerance `rel_tol`, splitting the worst interval until both are met.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        };
    }
    // Max-heap ordering by error, kept as a sorted-insert vec; interval counts
    // stay small for the smooth exponential integrands used here.
    let mut segments: Vec<(f64, f64, f64, f64)> = Vec::new(); // (err, lo, hi, val)
    let (v0, e0) = gk15(&f, a, b);
    segments.push((e0, a, b, v0));
    let mut evals = 15usize;
    const MAX_EVALS: usize = 200_000;

    loop {
        let total_val: f64 = segments.iter().map(|s| s.3).sum();
        let total_err: f64 = segments.iter().map(|s| s.0).sum();
        let target = abs_tol.max(rel_tol * total_val.abs());
        if total_err <= target || evals >= MAX_EVALS {
            return QuadResult {
                value: total_val,
                error: total_err,
                evaluations: evals,
            };
        }
        // Split the segment with the largest error estimate.
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .unwrap();
        let (_, lo, hi, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            // Interval exhausted at machine precision; keep its value.
            let (v, _) = gk15(&f, lo, hi);
            segments.push((0.0, lo, hi, v));
            continue;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        evals += 30;
        segments.push((e1, lo, mid, v1));
        segments.push((e2, mid, hi, v2));
    }
}

/// Convenience wrapper with the tolerances used by the verification suite.
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> QuadResult {
    integrate(f, a, b, 1e-10, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_default(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0);
        assert_relative_eq!(r.value, 4.0 - 4.0 + 2.0, epsilon = 1e-13);
    }

    #[test]
    fn exponential_matches_closed_form() {
        let r = integrate_default(|x| (-1.3 * x).exp(), 0.0, 10.0);
        let exact = (1.0 - (-13.0_f64).exp()) / 1.3;
        assert_relative_eq!(r.value, exact, max_relative = 1e-12);
        assert!(r.error < 1e-10);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = integrate_default(|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI);
        let exact = (1.0 - (10.0 * std::f64::consts::PI).cos()) / 10.0;
        assert_relative_eq!(r.value, exact, epsilon = 1e-10);
    }

    #[test]
    fn error_estimate_is_honest() {
        let r = integrate_default(|x| (x.abs()).sqrt(), -1.0, 1.0);
        assert!((r.value - 4.0 / 3.0).abs() <= r.error.max(1e-9));
    }
}
