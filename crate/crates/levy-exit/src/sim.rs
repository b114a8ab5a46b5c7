//! Event-driven Monte Carlo of the (possibly reflected) process with
//! Poissonian observation, the sampling oracle for every identity.
//!
//! For `sigma2 = 0` paths are piecewise linear, so barrier crossings,
//! reflection and the regulator are computed exactly. For `sigma2 > 0` the
//! Brownian part is Euler-substepped between events with a configurable step,
//! which carries an `O(sqrt(h))` barrier-crossing bias; jump-free drift models
//! are therefore the precision oracle and Brownian models a secondary check.
//!
//! Killing at rate `q` enters as the multiplicative weight `e^{-qT}`, never as
//! path truncation. Path `i` always consumes RNG stream `i` of a fixed-seed
//! ChaCha generator and results are reduced in path-index order, so estimates
//! are bit-identical regardless of how many workers run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::identities::ExitQuery;
use crate::model::LevyModel;
use crate::scale::ScaleContext;

/// How a barrier participates in the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BarrierMode {
    #[default]
    Absent,
    /// Crossing ends the path the instant it happens.
    Continuous,
    /// Crossing ends the path at the first Poisson epoch that sees it.
    Observed,
    /// The path is reflected at the barrier; the push is accumulated in the
    /// regulator.
    Reflecting,
}

/// Full description of one path experiment. The lower barrier sits at 0, the
/// upper one at `a`.
#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub start: f64,
    pub a: f64,
    pub lower: BarrierMode,
    pub upper: BarrierMode,
    /// Observation intensity; only sampled when some barrier is `Observed`.
    pub lambda: f64,
    pub q: f64,
    pub horizon: f64,
    /// Certified-escape level: with no upper barrier, a path reaching this
    /// height is counted as never returning (the residual probability is
    /// controlled by the adjustment coefficient when the level is chosen).
    pub upper_cutoff: Option<f64>,
    /// Stop when the regulator of the reflecting upper barrier reaches this.
    pub regulator_stop: Option<f64>,
    /// Track the time spent strictly above this level.
    pub occupation_level: Option<f64>,
    pub euler_step: f64,
    /// Self-test mode: replace the discount weight by an explicitly sampled
    /// exponential killing clock (1 if the exit beats the clock, else 0).
    pub explicit_kill: bool,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            start: 0.0,
            a: f64::INFINITY,
            lower: BarrierMode::Absent,
            upper: BarrierMode::Absent,
            lambda: f64::INFINITY,
            q: 0.0,
            horizon: 1e4,
            upper_cutoff: None,
            regulator_stop: None,
            occupation_level: None,
            euler_step: 1e-3,
            explicit_kill: false,
        }
    }
}

/// How a path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    DetectedRuin,
    DetectedUp,
    ContinuousRuin,
    ContinuousUp,
    RegulatorPassage,
    /// Reached the certified-escape level (counts as "event never happens").
    UpperEscape,
    /// Reached the time horizon without any exit; a possible truncation bias.
    Horizon,
}

#[derive(Debug, Clone, Copy)]
pub struct PathOutcome {
    pub kind: ExitKind,
    pub time: f64,
    /// Position at exit: the deficit is negative, a detected overshoot is
    /// above `a`.
    pub level: f64,
    pub regulator: f64,
    pub occupation_above: f64,
    /// Discounted regulator increments of the reflecting upper barrier
    /// (dividends), accumulated up to the exit.
    pub dividends: f64,
    pub discount: f64,
}

/// Aggregated Monte Carlo estimate.
#[derive(Debug, Clone, Copy)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub truncated_fraction: f64,
    /// Set when horizon truncation could bias an undiscounted estimate.
    pub bias_warning: bool,
}

/// Run parameters shared by all estimates.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: Option<f64>,
    pub euler_step: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 100_000,
            seed: 1,
            horizon: None,
            euler_step: 1e-3,
        }
    }
}

fn exp_time<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    // 1 - U lies in (0, 1], keeping the log finite.
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_claim<R: Rng>(model: &LevyModel, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut idx = model.claim_rates.len() - 1;
    for (i, &w) in model.claim_weights.iter().enumerate() {
        acc += w;
        if u < acc {
            idx = i;
            break;
        }
    }
    exp_time(rng, model.claim_rates[idx])
}

/// Time a linear segment `x0 + slope*t`, `t in [0, dt]`, spends above `level`.
fn time_above(level: Option<f64>, x0: f64, slope: f64, dt: f64) -> f64 {
    let Some(b) = level else { return 0.0 };
    if dt <= 0.0 {
        return 0.0;
    }
    let x1 = x0 + slope * dt;
    if slope > 0.0 {
        if x1 <= b {
            0.0
        } else if x0 >= b {
            dt
        } else {
            (x1 - b) / slope
        }
    } else if slope < 0.0 {
        if x0 <= b {
            0.0
        } else if x1 >= b {
            dt
        } else {
            (x0 - b) / (-slope)
        }
    } else if x0 > b {
        dt
    } else {
        0.0
    }
}

/// Discounted dividend stream `int_t1^t2 e^{-qs} c ds`.
fn dividend_increment(q: f64, rate: f64, t1: f64, t2: f64) -> f64 {
    if q > 0.0 {
        rate * ((-q * t1).exp() - (-q * t2).exp()) / q
    } else {
        rate * (t2 - t1)
    }
}

struct PathState {
    t: f64,
    x: f64,
    reg: f64,
    occ: f64,
    divs: f64,
}

impl PathState {
    fn finish(self, kind: ExitKind, q: f64) -> PathOutcome {
        PathOutcome {
            kind,
            time: self.t,
            level: self.x,
            regulator: self.reg,
            occupation_above: self.occ,
            dividends: self.divs,
            discount: (-q * self.t).exp(),
        }
    }
}

enum Ev {
    Claim,
    Obs,
    Horizon,
}

/// Simulate one path. Dispatches on `sigma2`: exact piecewise-linear dynamics
/// without a Brownian part, Euler substepping with one.
pub fn simulate_path<R: Rng>(model: &LevyModel, spec: &PathSpec, rng: &mut R) -> PathOutcome {
    let mut out = if model.gaussian_coeff > 0.0 {
        simulate_euler(model, spec, rng)
    } else {
        simulate_exact(model, spec, rng)
    };
    if spec.explicit_kill {
        let kill = if spec.q > 0.0 {
            exp_time(rng, spec.q)
        } else {
            f64::INFINITY
        };
        out.discount = if out.time <= kill { 1.0 } else { 0.0 };
    }
    out
}

/// Initial clamping and instantaneous exits shared by both integrators.
/// Returns `Err(outcome)` when the path is over before any time passes.
fn enter(
    spec: &PathSpec,
    mut s: PathState,
) -> std::result::Result<PathState, PathOutcome> {
    if spec.upper == BarrierMode::Reflecting && s.x > spec.a {
        let over = s.x - spec.a;
        s.reg += over;
        s.divs += over;
        s.x = spec.a;
    }
    if spec.lower == BarrierMode::Reflecting && s.x < 0.0 {
        s.reg += -s.x;
        s.x = 0.0;
    }
    if spec.lower == BarrierMode::Continuous && s.x < 0.0 {
        return Err(s.finish(ExitKind::ContinuousRuin, spec.q));
    }
    if spec.upper == BarrierMode::Continuous && s.x >= spec.a {
        return Err(s.finish(ExitKind::ContinuousUp, spec.q));
    }
    if let Some(cut) = spec.upper_cutoff {
        if s.x >= cut {
            return Err(s.finish(ExitKind::UpperEscape, spec.q));
        }
    }
    Ok(s)
}

/// Apply a claim of the given size, returning an outcome if it ends the path.
fn apply_claim(
    spec: &PathSpec,
    s: &mut PathState,
    size: f64,
) -> Option<ExitKind> {
    s.x -= size;
    if s.x < 0.0 {
        match spec.lower {
            BarrierMode::Continuous => return Some(ExitKind::ContinuousRuin),
            BarrierMode::Reflecting => {
                s.reg += -s.x;
                s.x = 0.0;
            }
            _ => {}
        }
    }
    None
}

/// Detection checks at an observation epoch.
fn observe(spec: &PathSpec, s: &PathState) -> Option<ExitKind> {
    if spec.lower == BarrierMode::Observed && s.x < 0.0 {
        return Some(ExitKind::DetectedRuin);
    }
    if spec.upper == BarrierMode::Observed && s.x > spec.a {
        return Some(ExitKind::DetectedUp);
    }
    None
}

fn simulate_exact<R: Rng>(model: &LevyModel, spec: &PathSpec, rng: &mut R) -> PathOutcome {
    let c = model.premium_rate;
    let q = spec.q;
    let needs_obs = spec.lower == BarrierMode::Observed || spec.upper == BarrierMode::Observed;
    let mut s = match enter(
        spec,
        PathState {
            t: 0.0,
            x: spec.start,
            reg: 0.0,
            occ: 0.0,
            divs: 0.0,
        },
    ) {
        Ok(s) => s,
        Err(out) => return out,
    };

    let mut next_claim = if model.has_jumps() {
        exp_time(rng, model.claim_rate)
    } else {
        f64::INFINITY
    };
    let mut next_obs = if needs_obs {
        exp_time(rng, spec.lambda)
    } else {
        f64::INFINITY
    };

    loop {
        let (t_event, ev) = if spec.horizon <= next_claim && spec.horizon <= next_obs {
            (spec.horizon, Ev::Horizon)
        } else if next_claim <= next_obs {
            (next_claim, Ev::Claim)
        } else {
            (next_obs, Ev::Obs)
        };

        let pinned = spec.upper == BarrierMode::Reflecting && s.x >= spec.a;
        if pinned {
            // The path sits at the barrier; the premium flows straight into
            // the regulator.
            if let Some(y) = spec.regulator_stop {
                let t_pass = s.t + ((y - s.reg) / c).max(0.0);
                if t_pass <= t_event {
                    s.occ += time_above(spec.occupation_level, s.x, 0.0, t_pass - s.t);
                    s.divs += dividend_increment(q, c, s.t, t_pass);
                    s.reg = y;
                    s.t = t_pass;
                    return s.finish(ExitKind::RegulatorPassage, q);
                }
            }
            s.occ += time_above(spec.occupation_level, s.x, 0.0, t_event - s.t);
            s.divs += dividend_increment(q, c, s.t, t_event);
            s.reg += c * (t_event - s.t);
            s.t = t_event;
        } else {
            // Linear drift; find the first deterministic crossing, if any.
            let mut t_seg = t_event;
            #[derive(PartialEq)]
            enum Hit {
                None,
                Up,
                Pin,
                Escape,
            }
            let mut hit = Hit::None;
            if c > 0.0 && s.x < spec.a {
                let tc = s.t + (spec.a - s.x) / c;
                if spec.upper == BarrierMode::Continuous && tc <= t_seg {
                    t_seg = tc;
                    hit = Hit::Up;
                } else if spec.upper == BarrierMode::Reflecting && tc < t_seg {
                    t_seg = tc;
                    hit = Hit::Pin;
                }
            }
            if let Some(cut) = spec.upper_cutoff {
                if c > 0.0 && s.x < cut {
                    let tc = s.t + (cut - s.x) / c;
                    if tc <= t_seg {
                        t_seg = tc;
                        hit = Hit::Escape;
                    }
                }
            }
            s.occ += time_above(spec.occupation_level, s.x, c, t_seg - s.t);
            s.x += c * (t_seg - s.t);
            s.t = t_seg;
            match hit {
                Hit::Up => {
                    s.x = spec.a;
                    return s.finish(ExitKind::ContinuousUp, q);
                }
                Hit::Escape => return s.finish(ExitKind::UpperEscape, q),
                Hit::Pin => {
                    s.x = spec.a;
                    continue;
                }
                Hit::None => {}
            }
        }

        match ev {
            Ev::Horizon => return s.finish(ExitKind::Horizon, q),
            Ev::Claim => {
                let size = sample_claim(model, rng);
                if let Some(kind) = apply_claim(spec, &mut s, size) {
                    return s.finish(kind, q);
                }
                next_claim = s.t + exp_time(rng, model.claim_rate);
            }
            Ev::Obs => {
                if let Some(kind) = observe(spec, &s) {
                    return s.finish(kind, q);
                }
                next_obs = s.t + exp_time(rng, spec.lambda);
            }
        }
    }
}

fn simulate_euler<R: Rng>(model: &LevyModel, spec: &PathSpec, rng: &mut R) -> PathOutcome {
    let c = model.premium_rate;
    let sig = model.gaussian_coeff.sqrt();
    let q = spec.q;
    let h = spec.euler_step;
    let needs_obs = spec.lower == BarrierMode::Observed || spec.upper == BarrierMode::Observed;
    let mut s = match enter(
        spec,
        PathState {
            t: 0.0,
            x: spec.start,
            reg: 0.0,
            occ: 0.0,
            divs: 0.0,
        },
    ) {
        Ok(s) => s,
        Err(out) => return out,
    };

    let mut next_claim = if model.has_jumps() {
        exp_time(rng, model.claim_rate)
    } else {
        f64::INFINITY
    };
    let mut next_obs = if needs_obs {
        exp_time(rng, spec.lambda)
    } else {
        f64::INFINITY
    };

    loop {
        let (t_event, ev) = if spec.horizon <= next_claim && spec.horizon <= next_obs {
            (spec.horizon, Ev::Horizon)
        } else if next_claim <= next_obs {
            (next_claim, Ev::Claim)
        } else {
            (next_obs, Ev::Obs)
        };

        while s.t < t_event {
            let dt = h.min(t_event - s.t);
            let mut x1 = s.x + c * dt + sig * dt.sqrt() * normal(rng);
            s.occ += time_above(spec.occupation_level, s.x, (x1 - s.x) / dt, dt);
            s.t += dt;
            match spec.upper {
                BarrierMode::Reflecting if x1 > spec.a => {
                    let over = x1 - spec.a;
                    s.reg += over;
                    s.divs += (-q * s.t).exp() * over;
                    x1 = spec.a;
                    if let Some(y) = spec.regulator_stop {
                        if s.reg >= y {
                            s.reg = y;
                            s.x = x1;
                            return s.finish(ExitKind::RegulatorPassage, q);
                        }
                    }
                }
                BarrierMode::Continuous if x1 >= spec.a => {
                    s.x = spec.a;
                    return s.finish(ExitKind::ContinuousUp, q);
                }
                _ => {}
            }
            if let Some(cut) = spec.upper_cutoff {
                if x1 >= cut {
                    s.x = x1;
                    return s.finish(ExitKind::UpperEscape, q);
                }
            }
            match spec.lower {
                BarrierMode::Reflecting if x1 < 0.0 => {
                    s.reg += -x1;
                    x1 = 0.0;
                }
                BarrierMode::Continuous if x1 < 0.0 => {
                    s.x = x1;
                    return s.finish(ExitKind::ContinuousRuin, q);
                }
                _ => {}
            }
            s.x = x1;
        }

        match ev {
            Ev::Horizon => return s.finish(ExitKind::Horizon, q),
            Ev::Claim => {
                let size = sample_claim(model, rng);
                if let Some(kind) = apply_claim(spec, &mut s, size) {
                    return s.finish(kind, q);
                }
                next_claim = s.t + exp_time(rng, model.claim_rate);
            }
            Ev::Obs => {
                if let Some(kind) = observe(spec, &s) {
                    return s.finish(kind, q);
                }
                next_obs = s.t + exp_time(rng, spec.lambda);
            }
        }
    }
}

/// Pathwise functional paired with each identity. Every variant is multiplied
/// by the discount weight of the path.
#[derive(Debug, Clone, Copy)]
enum Payoff {
    /// `1{kind}`.
    Indicator(ExitKind),
    /// `1{kind} e^{theta*level - vartheta*regulator}` (deficit transforms:
    /// `level` is negative at ruin).
    Deficit(ExitKind, f64, f64),
    /// `1{kind} e^{-theta*(level - a) - vartheta*regulator}`.
    Overshoot(ExitKind, f64, f64, f64),
    /// The accumulated (already discounted) dividend stream, whatever the
    /// exit kind.
    Dividends,
}

impl Payoff {
    fn apply(&self, o: &PathOutcome) -> f64 {
        match *self {
            Payoff::Indicator(kind) => {
                if o.kind == kind {
                    o.discount
                } else {
                    0.0
                }
            }
            Payoff::Deficit(kind, theta, vartheta) => {
                if o.kind == kind {
                    o.discount * (theta * o.level - vartheta * o.regulator).exp()
                } else {
                    0.0
                }
            }
            Payoff::Overshoot(kind, theta, vartheta, a) => {
                if o.kind == kind {
                    o.discount * (-theta * (o.level - a) - vartheta * o.regulator).exp()
                } else {
                    0.0
                }
            }
            Payoff::Dividends => o.dividends,
        }
    }
}

fn default_horizon(model: &LevyModel, q: f64, a_ref: f64) -> f64 {
    if q > 0.0 {
        // e^{-q*horizon} < 1e-12: anything after is invisible to the weight.
        (1e12f64).ln() / q
    } else {
        1000.0 * (1.0 + a_ref) / model.mean_drift().abs().max(0.01)
    }
}

/// Certified-escape level for unbounded-above experiments: past it, the
/// residual probability of the lower event is at most `e^{-40}`.
fn escape_level(model: &LevyModel, q: f64, x: f64) -> Result<f64> {
    let base = x.abs().max(1.0);
    Ok(match model.roots(q)?.decay_rate() {
        Some(r) => base + 40.0 / r,
        // No negative root: the lower barrier is unreachable from above.
        None => base + 1.0,
    })
}

fn finite_barrier(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "this identity needs a finite barrier a > 0, got {a}"
        )));
    }
    Ok(a)
}

fn finite_lambda(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "observation requires finite lambda > 0, got {lambda}"
        )));
    }
    Ok(lambda)
}

/// Poisson observation when `lambda` is finite, continuous when infinite.
fn observed_or_continuous(lambda: f64) -> Result<BarrierMode> {
    if lambda.is_infinite() {
        Ok(BarrierMode::Continuous)
    } else {
        finite_lambda(lambda)?;
        Ok(BarrierMode::Observed)
    }
}

/// Build the path experiment and payoff matching `identity`.
fn plan(
    model: &LevyModel,
    q: f64,
    identity: &str,
    query: &ExitQuery,
    cfg: &SimConfig,
) -> Result<(PathSpec, Payoff)> {
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
    let mut spec = PathSpec {
        start: x,
        a,
        q,
        euler_step: cfg.euler_step,
        ..PathSpec::default()
    };

    let payoff = match identity {
        "up_prob_continuous" => {
            finite_barrier(a)?;
            spec.lower = BarrierMode::Continuous;
            spec.upper = BarrierMode::Continuous;
            Payoff::Indicator(ExitKind::ContinuousUp)
        }
        "deficit_continuous" => {
            spec.lower = BarrierMode::Continuous;
            spec.upper = if a.is_finite() {
                BarrierMode::Continuous
            } else {
                BarrierMode::Absent
            };
            Payoff::Deficit(ExitKind::ContinuousRuin, theta, 0.0)
        }
        "poisson_deficit" => {
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Observed;
            spec.upper = if a.is_finite() {
                BarrierMode::Continuous
            } else {
                BarrierMode::Absent
            };
            Payoff::Deficit(ExitKind::DetectedRuin, theta, 0.0)
        }
        "poisson_overshoot" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.upper = BarrierMode::Observed;
            Payoff::Overshoot(ExitKind::DetectedUp, theta, 0.0, a)
        }
        "poisson_up_before_ruin" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Continuous;
            spec.upper = BarrierMode::Observed;
            Payoff::Overshoot(ExitKind::DetectedUp, theta, 0.0, a)
        }
        "ruin_before_poisson_up" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Continuous;
            spec.upper = BarrierMode::Observed;
            Payoff::Deficit(ExitKind::ContinuousRuin, theta, 0.0)
        }
        "up_before_poisson_ruin" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Observed;
            spec.upper = BarrierMode::Continuous;
            Payoff::Indicator(ExitKind::ContinuousUp)
        }
        "poisson_deficit_before_poisson_up" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Observed;
            spec.upper = BarrierMode::Observed;
            Payoff::Deficit(ExitKind::DetectedRuin, theta, 0.0)
        }
        "poisson_up_before_poisson_ruin" => {
            finite_barrier(a)?;
            spec.lambda = finite_lambda(lambda)?;
            spec.lower = BarrierMode::Observed;
            spec.upper = BarrierMode::Observed;
            Payoff::Overshoot(ExitKind::DetectedUp, theta, 0.0, a)
        }
        "reflected_up" => {
            finite_barrier(a)?;
            spec.lower = BarrierMode::Reflecting;
            spec.upper = observed_or_continuous(lambda)?;
            spec.lambda = lambda;
            let kind = if lambda.is_finite() {
                ExitKind::DetectedUp
            } else {
                ExitKind::ContinuousUp
            };
            Payoff::Overshoot(kind, theta, vartheta, a)
        }
        "reflected_ruin" => {
            finite_barrier(a)?;
            spec.upper = BarrierMode::Reflecting;
            spec.lower = observed_or_continuous(lambda)?;
            spec.lambda = lambda;
            let kind = if lambda.is_finite() {
                ExitKind::DetectedRuin
            } else {
                ExitKind::ContinuousRuin
            };
            Payoff::Deficit(kind, theta, vartheta)
        }
        "regulator_passage" => {
            finite_barrier(a)?;
            if y < 0.0 {
                return Err(Error::Domain(format!("need y >= 0, got {y}")));
            }
            spec.lambda = finite_lambda(lambda)?;
            spec.upper = BarrierMode::Reflecting;
            spec.lower = BarrierMode::Observed;
            spec.regulator_stop = Some(y);
            Payoff::Indicator(ExitKind::RegulatorPassage)
        }
        "discounted_dividends" => {
            finite_barrier(a)?;
            spec.upper = BarrierMode::Reflecting;
            spec.lower = observed_or_continuous(lambda)?;
            spec.lambda = lambda;
            Payoff::Dividends
        }
        "total_dividends_rate" => {
            finite_barrier(a)?;
            if q != 0.0 {
                return Err(Error::Domain(
                    "total_dividends_rate is the undiscounted (q = 0) law".into(),
                ));
            }
            spec.start = a;
            spec.upper = BarrierMode::Reflecting;
            spec.lower = observed_or_continuous(lambda)?;
            spec.lambda = lambda;
            Payoff::Dividends
        }
        other => return Err(Error::UnknownIdentity(other.into())),
    };

    if spec.upper == BarrierMode::Absent && spec.lower != BarrierMode::Absent {
        spec.upper_cutoff = Some(escape_level(model, q, x)?);
    }
    let a_ref = if a.is_finite() {
        a
    } else {
        spec.upper_cutoff.unwrap_or(1.0)
    };
    spec.horizon = cfg.horizon.unwrap_or_else(|| default_horizon(model, q, a_ref));
    Ok((spec, payoff))
}

/// Simulate `n` paths deterministically (stream `i` per path) and return the
/// outcomes in path order.
pub fn sample_outcomes(model: &LevyModel, spec: &PathSpec, n: usize, seed: u64) -> Vec<PathOutcome> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            simulate_path(model, spec, &mut rng)
        })
        .collect()
}

fn aggregate(values: &[f64], truncated: usize, q: f64) -> MCEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std_error = if n > 1 {
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    let truncated_fraction = truncated as f64 / n as f64;
    MCEstimate {
        mean,
        std_error,
        n_paths: n,
        truncated_fraction,
        bias_warning: q == 0.0 && truncated_fraction > 1e-4,
    }
}

/// Monte Carlo estimate of the identity's defining expectation.
///
/// Note `total_dividends_rate` estimates the mean of the total-dividend law,
/// i.e. the reciprocal of the formula; [`mc_target`] does that bookkeeping.
pub fn estimate(
    model: &LevyModel,
    q: f64,
    identity: &str,
    query: &ExitQuery,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    if cfg.n_paths < 1000 {
        return Err(Error::Domain(format!(
            "need at least 1000 paths, got {}",
            cfg.n_paths
        )));
    }
    let (spec, payoff) = plan(model, q, identity, query, cfg)?;
    let results: Vec<(f64, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let o = simulate_path(model, &spec, &mut rng);
            (payoff.apply(&o), o.kind == ExitKind::Horizon)
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let truncated = results.iter().filter(|r| r.1).count();
    Ok(aggregate(&values, truncated, q))
}

/// The formula value the MC mean of `identity` should reproduce.
pub fn mc_target(ctx: &ScaleContext, identity: &str, query: &ExitQuery) -> Result<f64> {
    let v = crate::identities::evaluate(ctx, identity, query)?;
    if identity == "total_dividends_rate" {
        Ok(1.0 / v)
    } else {
        Ok(v)
    }
}

/// Standardized deviation of an estimate from its target.
pub fn z_score(est: &MCEstimate, target: f64) -> f64 {
    let diff = est.mean - target;
    if est.std_error > 0.0 {
        diff / est.std_error
    } else if diff.abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY * diff.signum()
    }
}
