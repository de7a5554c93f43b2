//! Heteroscedastic Gaussian bandit instances, reward sampling and the running
//! statistics every identification algorithm keeps.

use rand::Rng;
use thiserror::Error;

use crate::channel::ArmSet;
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("instance needs at least one arm")]
    Empty,
    #[error("arm {arm} has non-positive or non-finite mean {mean}")]
    NonPositiveMean { arm: usize, mean: f64 },
    #[error("noise variance must be positive and finite, got {0}")]
    BadNoise(f64),
    #[error("arms {0} and {1} tie for the maximum mean")]
    TiedBest(usize, usize),
    #[error("{labels} labels for {means} means")]
    LabelMismatch { labels: usize, means: usize },
}

/// Arms with reward law N(μ_k, 2μ_kσ²) and a unique best arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance<T> {
    means: Vec<T>,
    noise_var: T,
    labels: Vec<ArmSet>,
    best: usize,
}

impl<T: Scalar> BanditInstance<T> {
    /// Labels default to singleton base arms `1..=I`.
    pub fn new(means: Vec<T>, noise_var: T) -> Result<Self, InstanceError> {
        let labels = (1..=means.len())
            .map(|k| ArmSet::single(k).unwrap())
            .collect();
        Self::with_labels(means, noise_var, labels)
    }

    pub fn with_labels(
        means: Vec<T>,
        noise_var: T,
        labels: Vec<ArmSet>,
    ) -> Result<Self, InstanceError> {
        if means.is_empty() {
            return Err(InstanceError::Empty);
        }
        if labels.len() != means.len() {
            return Err(InstanceError::LabelMismatch {
                labels: labels.len(),
                means: means.len(),
            });
        }
        if !(noise_var.is_finite() && noise_var > T::zero()) {
            return Err(InstanceError::BadNoise(
                noise_var.to_f64().unwrap_or(f64::NAN),
            ));
        }
        for (arm, &m) in means.iter().enumerate() {
            if !(m.is_finite() && m > T::zero()) {
                return Err(InstanceError::NonPositiveMean {
                    arm,
                    mean: m.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let best = argmax(&means).unwrap();
        if let Some(other) = (0..means.len()).find(|&i| i != best && means[i] == means[best]) {
            return Err(InstanceError::TiedBest(best, other));
        }
        Ok(Self {
            means,
            noise_var,
            labels,
            best,
        })
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn noise_var(&self) -> T {
        self.noise_var
    }

    pub fn labels(&self) -> &[ArmSet] {
        &self.labels
    }

    /// 0-based position of the optimal arm.
    pub fn best(&self) -> usize {
        self.best
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }
}

/// One draw from N(μ, 2μσ²).
pub fn sample_reward<T: Scalar, R: Rng + ?Sized>(mu: T, sigma2: T, rng: &mut R) -> T {
    let sd = (T::two() * mu * sigma2).sqrt();
    mu + sd * T::standard_normal(rng)
}

/// KL divergence from N(μ_i, 2μ_iσ²) to N(μ_j, 2μ_jσ²):
/// `½ln(μ_j/μ_i) + μ_i/(2μ_j) + (μ_j−μ_i)²/(4μ_jσ²) − ½`.
#[inline]
pub fn d_hg<T: Scalar>(mu_i: T, mu_j: T, sigma2: T) -> T {
    let half = T::half();
    let r = mu_i / mu_j;
    let diff = mu_j - mu_i;
    // ½(r − 1 − ln r) is computed as one term to avoid cancellation near r = 1
    half * (r - T::one() - r.ln()) + diff * diff / (T::lit(4.0) * mu_j * sigma2)
}

/// Per-arm outcome of the large-noise condition check.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmMargin<T> {
    /// The arm requires `σ² > threshold`.
    Threshold { arm: usize, threshold: T },
    /// Denominator is non-positive; the arm imposes no constraint.
    Vacuous { arm: usize, denominator: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport<T> {
    pub holds: bool,
    pub sigma2: T,
    /// Largest per-arm threshold, zero when every arm is vacuous.
    pub required: T,
    pub margins: Vec<ArmMargin<T>>,
}

/// Checks `σ² > max_k (μ₁−μ_k)² / (4μ_k − 2μ₁ − 2μ_k ln(μ_k/μ₁))` over the
/// non-optimal arms whose denominator is positive.
pub fn check_noise_condition<T: Scalar>(inst: &BanditInstance<T>) -> NoiseReport<T> {
    let top = inst.means[inst.best];
    let mut margins = Vec::with_capacity(inst.num_arms().saturating_sub(1));
    let mut required = T::zero();
    for (arm, &mu) in inst.means.iter().enumerate() {
        if arm == inst.best {
            continue;
        }
        let denominator = T::lit(4.0) * mu - T::two() * top - T::two() * mu * (mu / top).ln();
        if denominator > T::zero() {
            let threshold = (top - mu) * (top - mu) / denominator;
            required = required.max(threshold);
            margins.push(ArmMargin::Threshold { arm, threshold });
        } else {
            log::debug!("arm {arm}: denominator {denominator} <= 0, no noise constraint");
            margins.push(ArmMargin::Vacuous { arm, denominator });
        }
    }
    let has_constraint = margins
        .iter()
        .any(|m| matches!(m, ArmMargin::Threshold { .. }));
    NoiseReport {
        holds: !has_constraint || inst.noise_var > required,
        sigma2: inst.noise_var,
        required,
        margins,
    }
}

/// Pull counts and running reward sums of one identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState<T> {
    t: u64,
    counts: Vec<u64>,
    sums: Vec<T>,
    means: Vec<T>,
}

impl<T: Scalar> TrackingState<T> {
    pub fn new(num_arms: usize) -> Self {
        Self {
            t: 0,
            counts: vec![0; num_arms],
            sums: vec![T::zero(); num_arms],
            means: vec![T::zero(); num_arms],
        }
    }

    /// Folds one observation for 0-based `arm` into the state.
    pub fn record(&mut self, arm: usize, reward: T) {
        self.t += 1;
        self.counts[arm] += 1;
        self.sums[arm] = self.sums[arm] + reward;
        self.means[arm] = self.sums[arm] / T::from_count(self.counts[arm]);
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sums(&self) -> &[T] {
        &self.sums
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Lowest-index arm among the least pulled.
    pub fn least_pulled(&self) -> usize {
        let min = self.min_count();
        self.counts.iter().position(|&c| c == min).unwrap_or(0)
    }

    /// Empirical best arm, lowest index on ties.
    pub fn leader(&self) -> usize {
        argmax(&self.means).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instance_validation() {
        assert_eq!(
            BanditInstance::<f64>::new(vec![], 1.0).unwrap_err(),
            InstanceError::Empty
        );
        assert!(matches!(
            BanditInstance::new(vec![1.0, 0.0], 1.0),
            Err(InstanceError::NonPositiveMean { arm: 1, .. })
        ));
        assert_eq!(
            BanditInstance::new(vec![2.0, 1.0, 2.0], 1.0).unwrap_err(),
            InstanceError::TiedBest(0, 2)
        );
        assert!(BanditInstance::new(vec![2.0, 1.0], 0.0).is_err());
        let near = BanditInstance::new(vec![1.0, 1.0 + 1e-12], 1.0).unwrap();
        assert_eq!(near.best(), 1);
    }

    #[test]
    fn degenerate_noise_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_reward(3.5f64, 0.0, &mut rng), 3.5);
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_reward(1.0f64, 0.01, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");

        let draws: Vec<f64> = (0..n)
            .map(|_| sample_reward(2.0f64, 0.5, &mut rng))
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn sample_stream_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_reward(1.3f64, 0.2, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn d_hg_matches_expanded_formula() {
        let (a, b, s) = (1.0f64, 2.0, 0.5);
        let direct = 0.5 * (b / a).ln() + a / (2.0 * b) + (b - a).powi(2) / (4.0 * b * s) - 0.5;
        assert_relative_eq!(d_hg(a, b, s), direct, max_relative = 1e-14);
        assert_eq!(d_hg(3.0f64, 3.0, 0.1), 0.0);
        assert!((d_hg(1.0f64, 2.0, 0.5) - d_hg(2.0, 1.0, 0.5)).abs() > 1e-3);
    }

    #[test]
    fn d_hg_nonnegative_on_grid() {
        for i in 1..=32 {
            for j in 1..=32 {
                let (a, b) = (i as f64 * 0.17, j as f64 * 0.17);
                let d = d_hg(a, b, 0.3);
                if i == j {
                    assert_eq!(d, 0.0);
                } else {
                    assert!(d > 0.0, "d({a},{b}) = {d}");
                }
            }
        }
    }

    #[test]
    fn d_hg_decreasing_in_first_argument_below_target() {
        let (mu_j, s2) = (2.0f64, 0.4);
        let h = 1e-6;
        for k in 1..200 {
            let x = mu_j * k as f64 / 200.0;
            let slope = (d_hg(x + h, mu_j, s2) - d_hg(x - h, mu_j, s2)) / (2.0 * h);
            assert!(slope < 0.0, "slope {slope} at {x}");
        }
    }

    #[test]
    fn noise_condition_examples() {
        let loud = BanditInstance::new(vec![2.0f64, 1.0], 10.0).unwrap();
        let report = check_noise_condition(&loud);
        assert!(report.holds);
        assert_relative_eq!(
            report.required,
            1.0 / (2.0 * 2f64.ln()),
            max_relative = 1e-12
        );

        let quiet = BanditInstance::new(vec![2.0f64, 1.0], 0.5).unwrap();
        assert!(!check_noise_condition(&quiet).holds);

        let single = BanditInstance::new(vec![2.0f64], 1e-9).unwrap();
        let r = check_noise_condition(&single);
        assert!(r.holds && r.margins.is_empty());

        // a far-inferior arm has a negative denominator and imposes nothing
        let far = BanditInstance::new(vec![2.0f64, 0.01], 1e-9).unwrap();
        let r = check_noise_condition(&far);
        assert!(r.holds);
        assert!(matches!(r.margins[0], ArmMargin::Vacuous { arm: 1, .. }));
    }

    #[test]
    fn record_examples() {
        let mut s = TrackingState::<f64>::new(3);
        s.record(0, 5.0);
        assert_eq!((s.counts()[0], s.means()[0]), (1, 5.0));
        let mut s = TrackingState::<f64>::new(1);
        s.record(0, 4.0);
        s.record(0, 6.0);
        assert_eq!(s.means()[0], 5.0);

        let mut s = TrackingState::<f64>::new(4);
        for _ in 0..1000 {
            for arm in 0..4 {
                s.record(arm, 0.375);
            }
        }
        assert!(s.means().iter().all(|&m| m == 0.375));
        assert_eq!(s.t(), 4000);
        assert_eq!(s.counts().iter().sum::<u64>(), s.t());
    }

    proptest! {
        #[test]
        fn record_agrees_with_batch_recompute(
            obs in prop::collection::vec((0usize..5, -10.0f64..10.0), 1..200)
        ) {
            let mut s = TrackingState::<f64>::new(5);
            for &(arm, r) in &obs {
                s.record(arm, r);
            }
            prop_assert_eq!(s.counts().iter().sum::<u64>(), s.t());
            for arm in 0..5 {
                let rs: Vec<f64> = obs.iter().filter(|o| o.0 == arm).map(|o| o.1).collect();
                prop_assert_eq!(s.counts()[arm], rs.len() as u64);
                if !rs.is_empty() {
                    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
                    prop_assert!((s.means()[arm] - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
                }
            }
        }
    }
}
