//! Scale functions `W_q`, `Z_q(.,theta)`, `Z~` and the potential densities,
//! all evaluated from closed-form exponential sums.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::model::{LevyModel, RootSystem};
use crate::DELTA_LIMIT;

/// Exponent threshold beyond which sums are evaluated in log space.
const LOG_SPACE_EXPONENT: f64 = 500.0;

/// Which potential (resolvent) density to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolventKind {
    /// Density of `X(e_lambda)` for the free process.
    Free,
    /// Density of `X(e_lambda)` on `{e_lambda < tau_a^+}` (killed above `a`).
    KilledAbove(f64),
    /// Density of `X(e_lambda)` started at `a` on `{e_lambda < tau_0^-}`.
    KilledBelowFrom(f64),
}

/// Precomputed evaluator for the scale functions at a fixed killing rate `q`.
///
/// Root systems for the additionally killed process (rate `q + lambda`) are
/// memoized; the cache is behind an `RwLock` so shared concurrent reads are
/// safe and concurrent first-fills simply race to insert identical values.
pub struct ScaleContext {
    model: LevyModel,
    q: f64,
    rs: RootSystem,
    aux: RwLock<HashMap<u64, Arc<RootSystem>>>,
}

impl ScaleContext {
    pub fn new(model: LevyModel, q: f64) -> Result<Self> {
        let rs = model.roots(q)?;
        Ok(ScaleContext {
            model,
            q,
            rs,
            aux: RwLock::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn root_system(&self) -> &RootSystem {
        &self.rs
    }

    /// `Phi_q`, the right-most non-negative root of `psi_q`.
    pub fn phi(&self) -> f64 {
        self.rs.phi
    }

    /// `psi_q(theta) = psi(theta) - q`, with a Taylor branch near the roots so
    /// that tiny values keep full relative accuracy.
    pub fn psi_q(&self, theta: f64) -> f64 {
        match self.nearest_root(theta) {
            Some((j, h)) => self.psi_q_taylor(self.rs.roots[j], h),
            None => self.model.psi(theta) - self.q,
        }
    }

    fn psi_q_taylor(&self, zeta: f64, h: f64) -> f64 {
        let d1 = self.model.psi_prime(zeta);
        let d2 = self.model.psi_second(zeta);
        let d3 = self.model.psi_third(zeta);
        h * (d1 + h * (0.5 * d2 + h * d3 / 6.0))
    }

    /// `psi_q(theta) / (theta - Phi_q)`, the `a -> inf` limit of `Z(a,theta)/W(a)`,
    /// with the removable singularity at `theta = Phi_q` taken analytically.
    pub fn psi_q_ratio(&self, theta: f64) -> f64 {
        let phi = self.rs.phi;
        let h = theta - phi;
        if h.abs() < DELTA_LIMIT {
            let d1 = self.model.psi_prime(phi);
            let d2 = self.model.psi_second(phi);
            let d3 = self.model.psi_third(phi);
            d1 + h * (0.5 * d2 + h * d3 / 6.0)
        } else {
            (self.model.psi(theta) - self.q) / h
        }
    }

    fn nearest_root(&self, theta: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &z) in self.rs.roots.iter().enumerate() {
            let h = theta - z;
            if h.abs() < DELTA_LIMIT && best.map_or(true, |(_, bh)| h.abs() < bh.abs()) {
                best = Some((k, h));
            }
        }
        best
    }

    /// Root system of the process additionally killed at rate `lambda`
    /// (i.e. of `psi_{q+lambda}`), memoized per `lambda`.
    pub fn aux_roots(&self, lambda: f64) -> Result<Arc<RootSystem>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "observation rate lambda must be positive and finite, got {lambda}"
            )));
        }
        let key = lambda.to_bits();
        if let Some(rs) = self.aux.read().unwrap().get(&key) {
            return Ok(rs.clone());
        }
        let rs = Arc::new(self.model.roots(self.q + lambda)?);
        self.aux.write().unwrap().entry(key).or_insert(rs.clone());
        Ok(rs)
    }

    /// `Phi_{q+lambda}`.
    pub fn phi_lambda(&self, lambda: f64) -> Result<f64> {
        Ok(self.aux_roots(lambda)?.phi)
    }

    /// Context for the process killed at rate `q + lambda` (shares the model).
    pub fn shifted(&self, lambda: f64) -> Result<ScaleContext> {
        ScaleContext::new(self.model.clone(), self.q + lambda)
    }

    /// First scale function `W_q(x)`.
    pub fn w(&self, x: f64) -> f64 {
        self.rs.w(x)
    }

    /// Right derivative `W_q'(x)` for `x > 0`.
    pub fn w_prime_plus(&self, x: f64) -> f64 {
        self.rs.w_prime(x)
    }

    /// Per-root coefficients `c_k` such that `Z(x,theta) = sum c_k e^{zeta_k x}`
    /// for `x >= 0`, taking the analytic limit when `theta` sits near a root.
    fn z_coeffs(&self, theta: f64) -> Vec<f64> {
        let roots = &self.rs.roots;
        let res = &self.rs.residues;
        match self.nearest_root(theta) {
            Some((j, h)) => {
                let zeta = roots[j];
                let d1 = self.model.psi_prime(zeta);
                let d2 = self.model.psi_second(zeta);
                let d3 = self.model.psi_third(zeta);
                let psi_q = h * (d1 + h * (0.5 * d2 + h * d3 / 6.0));
                roots
                    .iter()
                    .zip(res)
                    .enumerate()
                    .map(|(k, (&z, &r))| {
                        if k == j {
                            // lim psi_q(theta)/(theta - zeta_j) expanded to O(h^2)
                            r * (d1 + h * (0.5 * d2 + h * d3 / 6.0))
                        } else {
                            psi_q * r / (theta - z)
                        }
                    })
                    .collect()
            }
            None => {
                let psi_q = self.model.psi(theta) - self.q;
                roots
                    .iter()
                    .zip(res)
                    .map(|(&z, &r)| psi_q * r / (theta - z))
                    .collect()
            }
        }
    }

    /// Second scale function `Z_q(x, theta)`; equals `e^{theta x}` for `x < 0`.
    pub fn z(&self, x: f64, theta: f64) -> f64 {
        if x < 0.0 {
            return (theta * x).exp();
        }
        let coeffs = self.z_coeffs(theta);
        exp_sum(&self.rs.roots, &coeffs, x)
    }

    /// `log Z_q(x, theta)` for `x >= 0` (the sum is positive there).
    pub fn ln_z(&self, x: f64, theta: f64) -> f64 {
        if x < 0.0 {
            return theta * x;
        }
        let coeffs = self.z_coeffs(theta);
        ln_exp_sum(&self.rs.roots, &coeffs, x)
    }

    /// Overflow-safe ratio `Z(x, theta) / Z(a, theta)`.
    pub fn z_ratio(&self, x: f64, a: f64, theta: f64) -> f64 {
        let scale = self.rs.phi * a.max(x.abs());
        if scale > LOG_SPACE_EXPONENT {
            (self.ln_z(x, theta) - self.ln_z(a, theta)).exp()
        } else {
            self.z(x, theta) / self.z(a, theta)
        }
    }

    /// Derivative of `Z_q` in its first argument, `x >= 0`.
    pub fn z_dx(&self, x: f64, theta: f64) -> f64 {
        theta * self.z(x, theta) - self.psi_q(theta) * self.w(x)
    }

    /// Derivative of `Z_q` in its second argument, `x >= 0`.
    pub fn z_dtheta(&self, x: f64, theta: f64) -> f64 {
        let roots = &self.rs.roots;
        let res = &self.rs.residues;
        match self.nearest_root(theta) {
            Some((j, h)) => {
                let zeta = roots[j];
                let d2 = self.model.psi_second(zeta);
                let d3 = self.model.psi_third(zeta);
                let psi_q = self.psi_q_taylor(zeta, h);
                let dpsi = self.model.psi_prime(theta);
                let mut v = res[j] * (zeta * x).exp() * (0.5 * d2 + h * d3 / 3.0);
                for (k, (&z, &r)) in roots.iter().zip(res).enumerate() {
                    if k != j {
                        let d = theta - z;
                        v += r * (z * x).exp() * (dpsi * d - psi_q) / (d * d);
                    }
                }
                v
            }
            None => {
                let psi_q = self.model.psi(theta) - self.q;
                let dpsi = self.model.psi_prime(theta);
                roots
                    .iter()
                    .zip(res)
                    .map(|(&z, &r)| {
                        let d = theta - z;
                        r * (z * x).exp() * (dpsi * d - psi_q) / (d * d)
                    })
                    .sum()
            }
        }
    }

    /// Third scale function
    /// `Z~(x, alpha, beta) = (psi_q(alpha) Z(x,beta) - psi_q(beta) Z(x,alpha)) / (alpha - beta)`.
    ///
    /// For `x >= 0` the division cancels exactly in the partial-fraction form
    /// `psi_q(alpha) psi_q(beta) sum_k r_k e^{zeta_k x} / ((alpha - zeta_k)(beta - zeta_k))`,
    /// which therefore stays fully accurate through the confluence
    /// `alpha = beta` (each factor is a robust `z_coeffs` coefficient).
    pub fn tilde_z(&self, x: f64, alpha: f64, beta: f64) -> f64 {
        if x < 0.0 {
            // Z(x, theta) = e^{theta x} there; fall back on the definition,
            // with a midpoint-derivative branch at the confluence.
            return if (alpha - beta).abs() >= DELTA_LIMIT {
                (self.psi_q(alpha) * (beta * x).exp() - self.psi_q(beta) * (alpha * x).exp())
                    / (alpha - beta)
            } else {
                let m = 0.5 * (alpha + beta);
                (self.model.psi_prime(m) - self.psi_q(m) * x) * (m * x).exp()
            };
        }
        let ca = self.z_coeffs(alpha);
        let cb = self.z_coeffs(beta);
        let mut v = 0.0;
        for (k, (&z, &r)) in self.rs.roots.iter().zip(&self.rs.residues).enumerate() {
            v += ca[k] * cb[k] / r * (z * x).exp();
        }
        v
    }

    /// Potential (resolvent) density of `X(e_lambda)` at `x`, with the killing
    /// rate `q` of this context implicit.
    ///
    /// The textbook differences of scale terms cancel catastrophically (each
    /// term grows like `e^{Phi_lambda |x|}` while the density decays), so the
    /// sums are rearranged per root: the leading `Phi_lambda` terms cancel
    /// exactly and the remaining exponents are all non-positive.
    pub fn resolvent_density(&self, kind: ResolventKind, x: f64, lambda: f64) -> Result<f64> {
        let aux = self.aux_roots(lambda)?;
        let phi_l = aux.phi;
        let terms = aux.roots.iter().zip(&aux.residues);
        match kind {
            ResolventKind::Free => {
                if x > 0.0 {
                    let d = self.model.psi_prime(phi_l);
                    Ok(lambda * (-phi_l * x).exp() / d)
                } else {
                    // e^{-Phi x}/psi'(Phi) - W(-x): the Phi term cancels.
                    Ok(-lambda
                        * terms
                            .filter(|(&z, _)| z != phi_l)
                            .map(|(&z, &r)| r * (-z * x).exp())
                            .sum::<f64>())
                }
            }
            ResolventKind::KilledAbove(a) => {
                if x > a {
                    return Err(Error::Domain(format!(
                        "killed_above density needs x <= a (x = {x}, a = {a})"
                    )));
                }
                if x > 0.0 {
                    // e^{-Phi a} W(a - x), exponents combined per root.
                    Ok(lambda
                        * terms
                            .map(|(&z, &r)| r * (z * (a - x) - phi_l * a).exp())
                            .sum::<f64>())
                } else {
                    // sum r_k e^{-z_k x}(e^{(z_k - Phi) a} - 1); Phi term is 0.
                    Ok(lambda
                        * terms
                            .filter(|(&z, _)| z != phi_l)
                            .map(|(&z, &r)| r * (-z * x).exp() * ((z - phi_l) * a).exp_m1())
                            .sum::<f64>())
                }
            }
            ResolventKind::KilledBelowFrom(a) => {
                if x < 0.0 {
                    return Err(Error::Domain(format!(
                        "killed_below density is supported on x >= 0 (x = {x})"
                    )));
                }
                if x >= a {
                    // e^{-Phi x} W(a), exponents combined per root.
                    Ok(lambda
                        * terms
                            .map(|(&z, &r)| r * (z * a - phi_l * x).exp())
                            .sum::<f64>())
                } else {
                    // sum r_k e^{z_k (a - x)}(e^{(z_k - Phi) x} - 1); Phi term is 0.
                    Ok(lambda
                        * terms
                            .filter(|(&z, _)| z != phi_l)
                            .map(|(&z, &r)| r * (z * (a - x)).exp() * ((z - phi_l) * x).exp_m1())
                            .sum::<f64>())
                }
            }
        }
    }
}

fn exp_sum(roots: &[f64], coeffs: &[f64], x: f64) -> f64 {
    let m = roots
        .iter()
        .zip(coeffs)
        .filter(|(_, &c)| c != 0.0)
        .map(|(&z, _)| z * x)
        .fold(f64::NEG_INFINITY, f64::max);
    if m > LOG_SPACE_EXPONENT {
        let scaled: f64 = roots
            .iter()
            .zip(coeffs)
            .map(|(&z, &c)| c * (z * x - m).exp())
            .sum();
        return (m + scaled.ln()).exp();
    }
    roots
        .iter()
        .zip(coeffs)
        .map(|(&z, &c)| c * (z * x).exp())
        .sum()
}

fn ln_exp_sum(roots: &[f64], coeffs: &[f64], x: f64) -> f64 {
    let m = roots
        .iter()
        .zip(coeffs)
        .filter(|(_, &c)| c != 0.0)
        .map(|(&z, _)| z * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = roots
        .iter()
        .zip(coeffs)
        .map(|(&z, &c)| c * (z * x - m).exp())
        .sum();
    m + scaled.ln()
}
