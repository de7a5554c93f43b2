//! Generalized-likelihood-ratio machinery: pooled means, the stopping
//! statistic and threshold, the optimal-allocation solver, and the
//! characteristic-time calculators.
//!
//! Everything is written against the [`Divergence`] trait so the same code
//! drives the heteroscedastic engine ([`Heteroscedastic`]) and the
//! equal-variance Gaussian baseline ([`Homoscedastic`]).
//!
//! The allocation solver works on the two-arm reduction. For a rival `i` and
//! weight ratio `x = w_i / w_best`,
//!
//! ```text
//! f_y(x) = inf_v  d(μ_best, v) + x·d(μ_i, v)
//! ```
//!
//! is concave and increasing from `f_y(0) = 0` towards `d(μ_best, μ_i)`.
//! By the envelope theorem its slope is `d(μ_i, v*(x))`, which gives the
//! derivative of the inverse `f_x` exactly. The optimal allocation equalises
//! `f_y(x_i) = y` across rivals, with `y*` the root of
//! `Σ_i [y·f_x'(y) − f_x(y)] = 1`.

use thiserror::Error;

use crate::bandit::{d_hg, BanditInstance, TrackingState};
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum GlrError {
    #[error("threshold constant alpha must be >= 1, got {0}")]
    BadAlpha(f64),
    #[error("risk delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("need at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("arm {0} has a non-positive or non-finite mean")]
    BadMean(usize),
    #[error("arms {0} and {1} tie for the maximum mean")]
    TiedBest(usize, usize),
    #[error("y = {y} outside the inverse domain [0, {y_max})")]
    Domain { y: f64, y_max: f64 },
    #[error("stationarity function is not monotone on the bracket near y = {y}")]
    NonMonotone { y: f64 },
    #[error("bracketing interval does not change sign")]
    NoSignChange,
}

/// Divergence between two arm laws indexed by their means.
pub trait Divergence<T: Scalar>: Sync {
    /// KL divergence from the law with mean `from` to the law with mean `to`.
    fn divergence(&self, from: T, to: T) -> T;

    /// `argmin_v  w_a·d(a, v) + w_b·d(b, v)`.
    fn pooled_mean(&self, a: T, b: T, w_a: T, w_b: T) -> T;

    /// Maps an empirical mean into the domain of [`Divergence::divergence`],
    /// given the empirical leader's mean.
    fn admissible(&self, mean: T, _leader: T) -> T {
        mean
    }
}

/// Relative floor applied to empirical means before evaluating the
/// heteroscedastic divergence, which is undefined for non-positive means.
pub const MEAN_FLOOR_RATIO: f64 = 1e-6;

/// KL geometry of N(μ, 2μσ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heteroscedastic<T> {
    pub sigma2: T,
}

impl<T: Scalar> Divergence<T> for Heteroscedastic<T> {
    #[inline]
    fn divergence(&self, from: T, to: T) -> T {
        d_hg(from, to, self.sigma2)
    }

    #[inline]
    fn pooled_mean(&self, a: T, b: T, w_a: T, w_b: T) -> T {
        pooled_mean(a, b, w_a, w_b, self.sigma2)
    }

    fn admissible(&self, mean: T, leader: T) -> T {
        let floor = if leader > T::zero() {
            leader * T::lit(MEAN_FLOOR_RATIO)
        } else {
            T::min_positive_value()
        };
        mean.max(floor)
    }
}

/// Equal-variance Gaussian KL `(a − b)² / (2V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homoscedastic<T> {
    pub variance: T,
}

impl<T: Scalar> Divergence<T> for Homoscedastic<T> {
    #[inline]
    fn divergence(&self, from: T, to: T) -> T {
        let d = from - to;
        d * d / (T::two() * self.variance)
    }

    #[inline]
    fn pooled_mean(&self, a: T, b: T, w_a: T, w_b: T) -> T {
        if a == b {
            return a;
        }
        (w_a * a + w_b * b) / (w_a + w_b)
    }
}

/// Common mean `v` minimising `t_best·d_hg(μ_best, v) + t_i·d_hg(μ_i, v)`.
///
/// Stationarity reduces to `v² + 2σ²v − C = 0` with
/// `C = Σ w (μ² + 2σ²μ) / Σ w`; the positive root is evaluated as
/// `C / (σ² + √(σ⁴ + C))` to stay accurate for large σ².
#[inline]
pub fn pooled_mean<T: Scalar>(mu_best: T, mu_i: T, t_best: T, t_i: T, sigma2: T) -> T {
    if mu_best == mu_i {
        return mu_best;
    }
    let two_s = T::two() * sigma2;
    let c = (t_best * mu_best * (mu_best + two_s) + t_i * mu_i * (mu_i + two_s)) / (t_best + t_i);
    c / (sigma2 + (sigma2 * sigma2 + c).sqrt())
}

/// Threshold constant and risk of one identification phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrConfig {
    pub alpha: f64,
    pub delta: f64,
}

impl GlrConfig {
    pub fn new(alpha: f64, delta: f64) -> Result<Self, GlrError> {
        let cfg = Self { alpha, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delta(delta: f64) -> Result<Self, GlrError> {
        Self::new(1.0, delta)
    }

    pub fn validate(&self) -> Result<(), GlrError> {
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(GlrError::BadAlpha(self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GlrError::BadDelta(self.delta));
        }
        Ok(())
    }
}

/// `β(t) = ln(α t / δ)`.
pub fn threshold(t: u64, cfg: &GlrConfig) -> f64 {
    (cfg.alpha * t as f64 / cfg.delta).ln()
}

/// Partial sum up to `horizon` of the series the threshold constant must
/// dominate for the risk guarantee to hold:
/// `Σ_t e^{I+1}/(t·I^I)·[ln²(αt/δ)·ln t]^I`. The terms decay like
/// `polylog(t)/t`, so the partial sums grow without bound; the value is a
/// diagnostic, not a runtime check.
pub fn alpha_series_partial_sum(alpha: f64, delta: f64, arms: usize, horizon: u64) -> f64 {
    let i = arms as f64;
    let lead = (i + 1.0).exp() / i.powf(i);
    (2..=horizon)
        .map(|t| {
            let t = t as f64;
            let b = (alpha * t / delta).ln();
            lead / t * (b * b * t.ln()).powf(i)
        })
        .sum()
}

/// Stopping statistic and the rival attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrStatistic<T> {
    pub z: T,
    pub leader: usize,
    pub rival: Option<usize>,
}

/// `Z = min_{i ≠ leader} [T_lead·d(μ̂_lead, q_i) + T_i·d(μ̂_i, q_i)]`, with
/// `q_i` the count-weighted pooled mean. The minimum runs over every rival.
///
/// Every count must be positive. The leader is the lowest-index empirical
/// best arm.
pub fn glr_statistic<T: Scalar, D: Divergence<T>>(
    means: &[T],
    counts: &[u64],
    div: &D,
) -> GlrStatistic<T> {
    debug_assert_eq!(means.len(), counts.len());
    let leader = argmax(means).unwrap_or(0);
    let lead_mean = div.admissible(means[leader], means[leader]);
    let lead_count = T::from_count(counts[leader]);
    let mut best: Option<(T, usize)> = None;
    for (i, (&m, &c)) in means.iter().zip(counts).enumerate() {
        if i == leader {
            continue;
        }
        let mi = div.admissible(m, means[leader]);
        let ci = T::from_count(c);
        let z = if mi >= lead_mean {
            T::zero()
        } else {
            let q = div.pooled_mean(lead_mean, mi, lead_count, ci);
            lead_count * div.divergence(lead_mean, q) + ci * div.divergence(mi, q)
        };
        if best.is_none_or(|(b, _)| z < b) {
            best = Some((z, i));
        }
    }
    match best {
        Some((z, rival)) => GlrStatistic {
            z,
            leader,
            rival: Some(rival),
        },
        None => GlrStatistic {
            z: T::zero(),
            leader,
            rival: None,
        },
    }
}

/// [`glr_statistic`] on a tracking state.
pub fn glr_for_state<T: Scalar, D: Divergence<T>>(
    state: &TrackingState<T>,
    div: &D,
) -> GlrStatistic<T> {
    glr_statistic(state.means(), state.counts(), div)
}

/// `f_y(x) = d(μ_best, q(x)) + x·d(μ_i, q(x))` with `q(x)` the pooled mean at
/// weights `(1, x)`.
#[inline]
pub fn f_y<T: Scalar, D: Divergence<T>>(x: T, mu_best: T, mu_i: T, div: &D) -> T {
    let q = div.pooled_mean(mu_best, mu_i, T::one(), x);
    div.divergence(mu_best, q) + x * div.divergence(mu_i, q)
}

/// Slope of [`f_y`] at `x`: `d(μ_i, q(x))`.
#[inline]
pub fn f_y_slope<T: Scalar, D: Divergence<T>>(x: T, mu_best: T, mu_i: T, div: &D) -> T {
    div.divergence(mu_i, div.pooled_mean(mu_best, mu_i, T::one(), x))
}

/// Inverse of [`f_y`] on `[0, d(μ_best, μ_i))`.
pub fn f_x<T: Scalar, D: Divergence<T>>(y: T, mu_best: T, mu_i: T, div: &D) -> Result<T, GlrError> {
    let y_max = div.divergence(mu_best, mu_i);
    if !(y >= T::zero() && y < y_max) {
        return Err(GlrError::Domain {
            y: y.to_f64().unwrap_or(f64::NAN),
            y_max: y_max.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(invert_from(y, mu_best, mu_i, div, T::zero()))
}

/// Newton iteration for `f_y(x) = y` started at `hint`. `f_y` is concave and
/// increasing, so every step taken from the left of the root stays on the left
/// and the iterates increase monotonically; a start on the right is pulled
/// left by the first step.
fn invert_from<T: Scalar, D: Divergence<T>>(y: T, mu_best: T, mu_i: T, div: &D, hint: T) -> T {
    if y <= T::zero() {
        return T::zero();
    }
    let eps = T::epsilon();
    let mut x = hint.max(T::zero());
    for _ in 0..500 {
        let q = div.pooled_mean(mu_best, mu_i, T::one(), x);
        let d_i = div.divergence(mu_i, q);
        let fx = div.divergence(mu_best, q) + x * d_i;
        let residual = y - fx;
        if d_i <= T::zero() {
            break;
        }
        let step = residual / d_i;
        if residual < T::zero() {
            x = (x + step).max(T::zero());
            continue;
        }
        if step <= eps * T::lit(4.0) * x || residual <= eps * y {
            x = x + step;
            break;
        }
        x = x + step;
    }
    x
}

/// Optimal allocation on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution<T> {
    pub weights: Vec<T>,
    /// Common value `f_y(x_i*)` shared by every rival.
    pub y_star: T,
    /// `sup_w inf_alt Σ w_k d(μ_k, λ_k)`, the inverse characteristic time.
    pub objective: T,
    pub best: usize,
}

impl<T: Scalar> WeightSolution<T> {
    /// Characteristic time `1 / objective`.
    pub fn characteristic_time(&self) -> T {
        T::one() / self.objective
    }
}

/// Bisection tolerance on `y`, relative to the bracket width.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Solves for the optimal allocation `w*` by bisection on the scalar
/// stationarity equation `Σ_{i≠best} [y·f_x'(y) − f_x(y)] = 1`, with
/// `f_x'(y) = 1 / d(μ_i, q_i)`.
///
/// Means must be positive (in the divergence's domain) with a unique maximum.
pub fn solve_weights<T: Scalar, D: Divergence<T>>(
    means: &[T],
    div: &D,
) -> Result<WeightSolution<T>, GlrError> {
    if means.len() < 2 {
        return Err(GlrError::TooFewArms(means.len()));
    }
    if let Some(i) = means.iter().position(|m| !m.is_finite()) {
        return Err(GlrError::BadMean(i));
    }
    let best = argmax(means).ok_or(GlrError::BadMean(0))?;
    let mu_best = means[best];
    if let Some(other) = (0..means.len()).find(|&i| i != best && means[i] == mu_best) {
        return Err(GlrError::TiedBest(best, other));
    }
    let rivals: Vec<usize> = (0..means.len()).filter(|&i| i != best).collect();

    let y_hi = rivals
        .iter()
        .map(|&i| div.divergence(mu_best, means[i]))
        .fold(T::infinity(), T::min);
    if !(y_hi > T::zero() && y_hi.is_finite()) {
        return Err(GlrError::NoSignChange);
    }

    // x_i at the current lower end of the bracket: valid left-side Newton starts
    let mut x_lo = vec![T::zero(); rivals.len()];
    let mut x_mid = vec![T::zero(); rivals.len()];
    let stationarity = |y: T, start: &[T], out: &mut [T]| -> T {
        let mut acc = -T::one();
        for ((&i, &s), o) in rivals.iter().zip(start).zip(out.iter_mut()) {
            let x = invert_from(y, mu_best, means[i], div, s);
            let slope = f_y_slope(x, mu_best, means[i], div);
            *o = x;
            acc = acc + y / slope - x;
        }
        acc
    };

    let (mut lo, mut hi) = (T::zero(), y_hi);
    let (mut g_lo, mut g_hi) = (-T::one(), T::infinity());
    let tol = T::lit(SOLVER_TOLERANCE) * y_hi;
    let slack = T::lit(1e-9);
    let mut iterations = 0;
    while hi - lo > tol && iterations < 400 {
        iterations += 1;
        let mid = lo + (hi - lo) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        let g = stationarity(mid, &x_lo, &mut x_mid);
        if !g.is_finite() {
            // past the representable range near the asymptote
            hi = mid;
            g_hi = T::infinity();
            continue;
        }
        if g < g_lo - slack * (T::one() + g_lo.abs()) || g > g_hi + slack * (T::one() + g.abs()) {
            return Err(GlrError::NonMonotone {
                y: mid.to_f64().unwrap_or(f64::NAN),
            });
        }
        if g < T::zero() {
            lo = mid;
            g_lo = g;
            x_lo.copy_from_slice(&x_mid);
        } else {
            hi = mid;
            g_hi = g;
        }
    }
    if g_lo >= T::zero() || g_hi < T::zero() {
        return Err(GlrError::NoSignChange);
    }

    let y_star = lo + (hi - lo) * T::half();
    let mut ratios = vec![T::zero(); rivals.len()];
    for ((&i, &s), r) in rivals.iter().zip(&x_lo).zip(ratios.iter_mut()) {
        *r = invert_from(y_star, mu_best, means[i], div, s);
    }
    let denom = T::one() + ratios.iter().copied().sum::<T>();
    let mut weights = vec![T::zero(); means.len()];
    weights[best] = T::one() / denom;
    for (&i, &r) in rivals.iter().zip(&ratios) {
        weights[i] = r / denom;
    }
    Ok(WeightSolution {
        weights,
        y_star,
        objective: y_star / denom,
        best,
    })
}

/// Heteroscedastic allocation for an instance.
pub fn solve_instance<T: Scalar>(inst: &BanditInstance<T>) -> Result<WeightSolution<T>, GlrError> {
    solve_weights(
        inst.means(),
        &Heteroscedastic {
            sigma2: inst.noise_var(),
        },
    )
}

/// Expected-stopping-time lower bound `c*(ν)·ln(1/(4δ))`.
pub fn lower_bound<T: Scalar>(inst: &BanditInstance<T>, delta: T) -> Result<T, GlrError> {
    let sol = solve_instance(inst)?;
    Ok((T::one() / (T::lit(4.0) * delta)).ln() / sol.objective)
}

/// Closed-form upper constant of one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperConstant<T> {
    Finite(T),
    /// The bracket is non-positive, so the bound carries no information.
    Vacuous {
        bracket: T,
    },
}

impl<T: Scalar> UpperConstant<T> {
    pub fn value(&self) -> Option<T> {
        match *self {
            UpperConstant::Finite(v) => Some(v),
            UpperConstant::Vacuous { .. } => None,
        }
    }
}

/// Inverse of
/// `μ*/(2Σμ)·ln(2μ*/(μ*+μ')) + μ'/(2Σμ)·ln(2μ'/(μ*+μ')) + (μ*−μ')²/(8σ²Σμ) − (μ*+μ')/(2Σμ)`,
/// where `μ'` is the largest non-best mean.
pub fn c_star_u<T: Scalar>(means: &[T], sigma2: T) -> Result<UpperConstant<T>, GlrError> {
    let (top, runner) = top_two(means)?;
    let total: T = means.iter().copied().sum();
    let two_total = T::two() * total;
    let pair = top + runner;
    let bracket = top / two_total * (T::two() * top / pair).ln()
        + runner / two_total * (T::two() * runner / pair).ln()
        + (top - runner) * (top - runner) / (T::lit(8.0) * sigma2 * total)
        - pair / two_total;
    if bracket > T::zero() {
        Ok(UpperConstant::Finite(T::one() / bracket))
    } else {
        Ok(UpperConstant::Vacuous { bracket })
    }
}

/// Baseline characteristic-time bound
/// `8μ*σ²/Δ²_min + Σ_{k≠best} 8μ*σ²/Δ²_k`.
pub fn t_star_u<T: Scalar>(means: &[T], sigma2: T) -> Result<T, GlrError> {
    let (top, runner) = top_two(means)?;
    let scale = T::lit(8.0) * top * sigma2;
    let gap_min = top - runner;
    let mut total = scale / (gap_min * gap_min);
    let mut skipped_best = false;
    for &m in means {
        if m == top && !skipped_best {
            skipped_best = true;
            continue;
        }
        let gap = top - m;
        total = total + scale / (gap * gap);
    }
    Ok(total)
}

fn top_two<T: Scalar>(means: &[T]) -> Result<(T, T), GlrError> {
    if means.len() < 2 {
        return Err(GlrError::TooFewArms(means.len()));
    }
    if let Some(i) = means
        .iter()
        .position(|&m| !(m.is_finite() && m > T::zero()))
    {
        return Err(GlrError::BadMean(i));
    }
    let best = argmax(means).unwrap();
    let mut runner: Option<usize> = None;
    for (i, &m) in means.iter().enumerate() {
        if i == best {
            continue;
        }
        if m == means[best] {
            return Err(GlrError::TiedBest(best, i));
        }
        if runner.is_none_or(|r| m > means[r]) {
            runner = Some(i);
        }
    }
    Ok((means[best], means[runner.unwrap()]))
}
