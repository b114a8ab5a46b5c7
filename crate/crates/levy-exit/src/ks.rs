//! One-sample Kolmogorov-Smirnov test against a fully specified CDF.

/// KS statistic `D_n = sup_x |F_n(x) - F(x)|` for `samples` against `cdf`.
/// Sorts a copy of the sample.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic p-value of the KS statistic: `P(sqrt(n) D > t)` from the
/// Kolmogorov distribution tail `2 sum (-1)^{k-1} e^{-2 k^2 t^2}`.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let t = (n as f64).sqrt() * d;
    if t <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Convenience: KS test of `samples` against `cdf`; returns `(d, p)`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let d = ks_statistic(samples, cdf);
    (d, ks_p_value(samples.len(), d))
}

/// CDF of the exponential distribution with the given rate.
pub fn exponential_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-rate * x).exp()
        }
    }
}
