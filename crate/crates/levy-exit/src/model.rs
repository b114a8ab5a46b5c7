//! Process model: rational Laplace exponent and the root systems of `psi_q`.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ROOT_SEPARATION;

/// Spectrally-negative Levy process with rational Laplace exponent
///
/// `psi(theta) = c*theta + sigma2*theta^2/2 - nu * sum_i w_i * theta/(theta + eta_i)`,
///
/// i.e. linear drift `c`, Brownian variance rate `sigma2`, and compound-Poisson
/// downward jumps of rate `nu` with hyperexponential sizes (mixture weights
/// `w_i`, rates `eta_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    pub premium_rate: f64,
    pub gaussian_coeff: f64,
    pub claim_rate: f64,
    pub claim_weights: Vec<f64>,
    pub claim_rates: Vec<f64>,
}

/// JSON representation of a model file.
#[derive(Debug, Deserialize)]
struct ModelFile {
    #[serde(rename = "type")]
    kind: String,
    c: f64,
    #[serde(default)]
    sigma2: f64,
    #[serde(default)]
    nu: f64,
    #[serde(default)]
    claims: Option<ClaimsFile>,
}

#[derive(Debug, Deserialize)]
struct ClaimsFile {
    weights: Vec<f64>,
    rates: Vec<f64>,
}

impl LevyModel {
    pub fn new(
        premium_rate: f64,
        gaussian_coeff: f64,
        claim_rate: f64,
        claim_weights: Vec<f64>,
        claim_rates: Vec<f64>,
    ) -> Result<Self> {
        let model = LevyModel {
            premium_rate,
            gaussian_coeff,
            claim_rate,
            claim_weights,
            claim_rates,
        };
        model.validate()?;
        Ok(model)
    }

    /// Cramer-Lundberg model with a single exponential claim distribution.
    pub fn cramer_lundberg(c: f64, nu: f64, eta: f64) -> Result<Self> {
        Self::new(c, 0.0, nu, vec![1.0], vec![eta])
    }

    /// Brownian motion with drift (no jumps).
    pub fn brownian(c: f64, sigma2: f64) -> Result<Self> {
        Self::new(c, sigma2, 0.0, Vec::new(), Vec::new())
    }

    /// Reference model M1: CL(c = 1.2, nu = 1, eta = 1).
    pub fn reference_m1() -> Self {
        Self::cramer_lundberg(1.2, 1.0, 1.0).unwrap()
    }

    /// Reference model M2: BM(c = 1, sigma2 = 2).
    pub fn reference_m2() -> Self {
        Self::brownian(1.0, 2.0).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        if raw.kind != "spectrally_negative" {
            return Err(Error::InvalidModel(format!(
                "unsupported model type {:?}",
                raw.kind
            )));
        }
        let (weights, rates) = match raw.claims {
            Some(c) => (c.weights, c.rates),
            None => (Vec::new(), Vec::new()),
        };
        Self::new(raw.c, raw.sigma2, raw.nu, weights, rates)
    }

    fn validate(&self) -> Result<()> {
        let all_finite = self.premium_rate.is_finite()
            && self.gaussian_coeff.is_finite()
            && self.claim_rate.is_finite()
            && self.claim_weights.iter().all(|w| w.is_finite())
            && self.claim_rates.iter().all(|r| r.is_finite());
        if !all_finite {
            return Err(Error::InvalidModel("all parameters must be finite".into()));
        }
        if self.gaussian_coeff < 0.0 {
            return Err(Error::InvalidModel("sigma2 must be >= 0".into()));
        }
        if self.claim_rate < 0.0 {
            return Err(Error::InvalidModel("nu must be >= 0".into()));
        }
        // Not a.s. non-increasing.
        if self.gaussian_coeff == 0.0 && self.premium_rate <= 0.0 {
            return Err(Error::InvalidModel(
                "need sigma2 > 0 or c > 0 (process must not be non-increasing)".into(),
            ));
        }
        if self.claim_weights.len() != self.claim_rates.len() {
            return Err(Error::InvalidModel(
                "claim_weights and claim_rates must have equal length".into(),
            ));
        }
        if self.has_jumps() {
            if self.claim_weights.iter().any(|&w| w <= 0.0) {
                return Err(Error::InvalidModel("claim weights must be positive".into()));
            }
            if self.claim_rates.iter().any(|&r| r <= 0.0) {
                return Err(Error::InvalidModel("claim rates must be positive".into()));
            }
            let sum: f64 = self.claim_weights.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "claim weights must sum to 1 (got {sum})"
                )));
            }
        }
        Ok(())
    }

    pub fn has_jumps(&self) -> bool {
        self.claim_rate > 0.0 && !self.claim_rates.is_empty()
    }

    /// Laplace exponent `psi(theta)`. Defined for any `theta` away from the
    /// poles `-eta_i`; the probabilistic domain is `theta >= 0`.
    pub fn psi(&self, theta: f64) -> f64 {
        let mut v = self.premium_rate * theta + 0.5 * self.gaussian_coeff * theta * theta;
        if self.has_jumps() {
            for (w, eta) in self.claim_weights.iter().zip(&self.claim_rates) {
                v -= self.claim_rate * w * theta / (theta + eta);
            }
        }
        v
    }

    /// Analytic derivative `psi'(theta)`.
    pub fn psi_prime(&self, theta: f64) -> f64 {
        let mut v = self.premium_rate + self.gaussian_coeff * theta;
        if self.has_jumps() {
            for (w, eta) in self.claim_weights.iter().zip(&self.claim_rates) {
                let d = theta + eta;
                v -= self.claim_rate * w * eta / (d * d);
            }
        }
        v
    }

    /// Analytic second derivative `psi''(theta)`.
    pub fn psi_second(&self, theta: f64) -> f64 {
        let mut v = self.gaussian_coeff;
        if self.has_jumps() {
            for (w, eta) in self.claim_weights.iter().zip(&self.claim_rates) {
                let d = theta + eta;
                v += 2.0 * self.claim_rate * w * eta / (d * d * d);
            }
        }
        v
    }

    /// Analytic third derivative `psi'''(theta)`.
    pub fn psi_third(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        if self.has_jumps() {
            for (w, eta) in self.claim_weights.iter().zip(&self.claim_rates) {
                let d = theta + eta;
                v -= 6.0 * self.claim_rate * w * eta / (d * d * d * d);
            }
        }
        v
    }

    /// Mean drift `psi'(0) = c - nu * sum w_i/eta_i`.
    pub fn mean_drift(&self) -> f64 {
        self.psi_prime(0.0)
    }

    /// All real zeros of `psi_q = psi - q` together with their residues.
    pub fn roots(&self, q: f64) -> Result<RootSystem> {
        if q < 0.0 || !q.is_finite() {
            return Err(Error::Domain(format!("killing rate q must be >= 0, got {q}")));
        }
        let drift = self.mean_drift();
        if q == 0.0 && drift.abs() < 1e-14 * (1.0 + self.premium_rate.abs()) {
            return Err(Error::Domain(
                "q = 0 with psi'(0) = 0 is degenerate and not supported".into(),
            ));
        }

        let mut zeros = if self.has_jumps() {
            self.roots_with_jumps(q)?
        } else {
            self.roots_no_jumps(q)?
        };
        zeros.sort_by(|a, b| b.partial_cmp(a).unwrap());

        // Simplicity / separation guard.
        for pair in zeros.windows(2) {
            if (pair[0] - pair[1]).abs() < ROOT_SEPARATION {
                return Err(Error::Numeric(format!(
                    "near-multiple roots of psi_q at {} and {} (separation < {ROOT_SEPARATION})",
                    pair[0], pair[1]
                )));
            }
        }
        let tol = 1e-10 * q.max(1.0);
        for &z in &zeros {
            let r = self.psi(z) - q;
            if r.abs() > tol {
                return Err(Error::Numeric(format!(
                    "root verification failed: psi_q({z}) = {r}"
                )));
            }
        }
        if q > 0.0 {
            let nonneg = zeros.iter().filter(|&&z| z >= 0.0).count();
            if nonneg != 1 {
                return Err(Error::Numeric(format!(
                    "expected exactly one non-negative root for q > 0, found {nonneg}"
                )));
            }
        }

        let residues: Vec<f64> = zeros.iter().map(|&z| 1.0 / self.psi_prime(z)).collect();
        let phi = zeros[0];
        if phi < 0.0 {
            return Err(Error::Numeric(format!("right-most root is negative: {phi}")));
        }
        Ok(RootSystem {
            killing_rate: q,
            roots: zeros,
            residues,
            phi,
        })
    }

    /// Right-most non-negative root `Phi_q` of `psi(theta) = q`.
    pub fn phi(&self, q: f64) -> Result<f64> {
        Ok(self.roots(q)?.phi)
    }

    fn roots_no_jumps(&self, q: f64) -> Result<Vec<f64>> {
        let c = self.premium_rate;
        let s2 = self.gaussian_coeff;
        if s2 == 0.0 {
            // psi = c*theta, single root.
            return Ok(vec![q / c]);
        }
        // s2/2 * theta^2 + c*theta - q = 0; stable quadratic formula.
        let disc = (c * c + 2.0 * s2 * q).sqrt();
        let hi = (-c + disc) / s2;
        let lo = (-c - disc) / s2;
        Ok(vec![hi, lo])
    }

    fn roots_with_jumps(&self, q: f64) -> Result<Vec<f64>> {
        let n = self.claim_rates.len();
        let eta_min = self.claim_rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let eta_max = self.claim_rates.iter().cloned().fold(0.0_f64, f64::max);
        let psi_q = |t: f64| self.psi(t) - q;
        let mut zeros = Vec::with_capacity(n + 2);

        // --- Branch (-eta_min, inf): psi is convex here with psi -> +inf at
        // both ends, so psi_q has exactly two zeros (one of them 0 for q = 0).
        // Locate the minimizer of psi first.
        let theta_star = {
            // psi' -> -inf as theta -> -eta_min^+.
            let mut lo = -eta_min;
            let mut gap = 0.5 * eta_min.min(1.0);
            loop {
                if self.psi_prime(lo + gap) < 0.0 {
                    lo += gap;
                    break;
                }
                gap *= 0.5;
                if gap < 1e-300 {
                    return Err(Error::Numeric("failed to bracket psi' minimizer".into()));
                }
            }
            let mut hi = lo.max(0.0) + 1.0;
            while self.psi_prime(hi) <= 0.0 {
                hi = 2.0 * hi + 1.0;
            }
            refine_root(&|t| self.psi_prime(t), &|t| self.psi_second(t), lo, hi)?
        };

        if q > 0.0 {
            // Right zero in (theta_star, inf).
            let mut hi = theta_star.max(0.0) + 1.0;
            while psi_q(hi) <= 0.0 {
                hi = 2.0 * hi + 1.0;
            }
            zeros.push(refine_root(&psi_q, &|t| self.psi_prime(t), theta_star, hi)?);
            // Left zero in (-eta_min, theta_star): psi_q -> +inf at the pole.
            let mut lo = -eta_min;
            let mut gap = 0.5 * (theta_star + eta_min);
            loop {
                if psi_q(lo + gap) > 0.0 {
                    lo += gap;
                    break;
                }
                gap *= 0.5;
                if gap < 1e-300 {
                    return Err(Error::Numeric("failed to bracket left branch root".into()));
                }
            }
            zeros.push(refine_root(&psi_q, &|t| self.psi_prime(t), lo, theta_star)?);
        } else {
            // q = 0: zero at the origin plus one more on the branch,
            // on the side of theta_star opposite to the sign of psi'(0).
            zeros.push(0.0);
            if self.mean_drift() > 0.0 {
                // theta_star < 0, second zero in (-eta_min, theta_star).
                let mut lo = -eta_min;
                let mut gap = 0.5 * (theta_star + eta_min);
                loop {
                    if psi_q(lo + gap) > 0.0 {
                        lo += gap;
                        break;
                    }
                    gap *= 0.5;
                    if gap < 1e-300 {
                        return Err(Error::Numeric("failed to bracket adjustment root".into()));
                    }
                }
                zeros.push(refine_root(&psi_q, &|t| self.psi_prime(t), lo, theta_star)?);
            } else {
                // theta_star > 0, second zero (Phi_0) in (theta_star, inf).
                let mut hi = theta_star + 1.0;
                while psi_q(hi) <= 0.0 {
                    hi = 2.0 * hi + 1.0;
                }
                zeros.push(refine_root(&psi_q, &|t| self.psi_prime(t), theta_star, hi)?);
            }
        }

        // --- One zero strictly between each pair of consecutive poles, and
        // (for sigma2 > 0) one below the left-most pole. Bracket on the
        // denominator-cleared polynomial, which is continuous at the poles.
        let poly = self.cleared_polynomial(q);
        let mut etas = self.claim_rates.clone();
        etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 0..n.saturating_sub(1) {
            let lo = -etas[k + 1];
            let hi = -etas[k];
            let z = refine_root_poly(&poly, lo, hi)?;
            zeros.push(refine_root(
                &psi_q,
                &|t| self.psi_prime(t),
                (z - 1e-6).max(lo + 1e-12),
                (z + 1e-6).min(hi - 1e-12),
            )
            .unwrap_or(z));
        }
        if self.gaussian_coeff > 0.0 {
            let hi = -eta_max;
            let phi_hi = poly_eval(&poly, hi);
            let mut step = eta_max.max(1.0);
            let mut lo = hi - step;
            while poly_eval(&poly, lo) * phi_hi > 0.0 {
                step *= 2.0;
                lo = hi - step;
                if step > 1e12 {
                    return Err(Error::Numeric("failed to bracket left-most root".into()));
                }
            }
            let z = refine_root_poly(&poly, lo, hi)?;
            zeros.push(refine_root(&psi_q, &|t| self.psi_prime(t), z - 1e-6, (z + 1e-6).min(hi - 1e-12)).unwrap_or(z));
        }

        let expected = n + 1 + usize::from(self.gaussian_coeff > 0.0);
        if zeros.len() != expected {
            return Err(Error::Numeric(format!(
                "found {} roots of psi_q, expected {expected}",
                zeros.len()
            )));
        }
        Ok(zeros)
    }

    /// Coefficients (ascending) of `psi_q(theta) * prod_i (theta + eta_i)`.
    fn cleared_polynomial(&self, q: f64) -> Vec<f64> {
        // prod (theta + eta_i)
        let mut prod = vec![1.0];
        for &eta in &self.claim_rates {
            prod = poly_mul(&prod, &[eta, 1.0]);
        }
        // (c*theta + sigma2/2*theta^2 - q) * prod
        let base = [-q, self.premium_rate, 0.5 * self.gaussian_coeff];
        let mut p = poly_mul(&prod, &base);
        // minus nu * theta * sum_i w_i prod_{j != i} (theta + eta_j)
        for (i, w) in self.claim_weights.iter().enumerate() {
            let mut part = vec![1.0];
            for (j, &eta) in self.claim_rates.iter().enumerate() {
                if j != i {
                    part = poly_mul(&part, &[eta, 1.0]);
                }
            }
            // times -nu * w_i * theta
            let scale = -self.claim_rate * w;
            let mut shifted = vec![0.0; part.len() + 1];
            for (k, c) in part.iter().enumerate() {
                shifted[k + 1] = scale * c;
            }
            p = poly_add(&p, &shifted);
        }
        p
    }
}

/// Zeros of `psi_q` (descending), their residues `1/psi_q'(zeta_k)`, and the
/// right-most root `Phi_q`.
#[derive(Debug, Clone)]
pub struct RootSystem {
    pub killing_rate: f64,
    pub roots: Vec<f64>,
    pub residues: Vec<f64>,
    pub phi: f64,
}

impl RootSystem {
    /// `W_q(x)` evaluated from this root system: `sum_k residue_k e^{zeta_k x}`
    /// for `x >= 0`, zero for `x < 0`.
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.roots
            .iter()
            .zip(&self.residues)
            .map(|(&z, &r)| r * (z * x).exp())
            .sum()
    }

    /// Right derivative `W_q'(x)` for `x > 0`.
    pub fn w_prime(&self, x: f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.residues)
            .map(|(&z, &r)| r * z * (z * x).exp())
            .sum()
    }

    /// `W_q(0) = sum of residues` (0 for unbounded variation, 1/c otherwise).
    pub fn w_at_zero(&self) -> f64 {
        self.residues.iter().sum()
    }

    /// Magnitude of the largest negative root (the decay rate of ruin
    /// probabilities); `None` when psi_q has no negative zero.
    pub fn decay_rate(&self) -> Option<f64> {
        self.roots
            .iter()
            .filter(|&&z| z < 0.0)
            .cloned()
            .fold(None, |acc: Option<f64>, z| {
                Some(match acc {
                    None => -z,
                    Some(a) => a.min(-z),
                })
            })
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Bracketed bisection followed by Newton polishing, clamped to the bracket.
fn refine_root(
    f: &dyn Fn(f64) -> f64,
    fp: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(Error::Numeric(format!(
            "root bracket [{lo}, {hi}] does not straddle a sign change"
        )));
    }
    let mut sign_lo = flo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == sign_lo {
            lo = mid;
            sign_lo = fm.signum();
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let d = fp(x);
        if d == 0.0 {
            break;
        }
        let step = f(x) / d;
        let next = x - step;
        if next.is_finite() && next >= lo && next <= hi {
            x = next;
        } else {
            break;
        }
    }
    Ok(x)
}

fn refine_root_poly(p: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let deriv: Vec<f64> = p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| i as f64 * c)
        .collect();
    refine_root(&|x| poly_eval(p, x), &|x| poly_eval(&deriv, x), lo, hi)
}
